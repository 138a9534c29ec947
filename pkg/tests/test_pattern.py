import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fringephase.pattern import PITCHES, PatternSpec, generate_pattern, make_schedule, projector_phase
from fringephase.phase import retrieve
from fringephase.raster import wrap


def test_default_pitches():
    assert PITCHES == (15.0, 114.0, 304.0, 912.0)
    assert PatternSpec(15, 15).frequency == pytest.approx(60.8)
    assert PatternSpec(912, 3).frequency == 1.0


@pytest.mark.parametrize("kw", [dict(pitch=0, steps=3), dict(pitch=15, steps=2),
                                dict(pitch=-1, steps=4), dict(pitch=15, steps=3, width=0)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        PatternSpec(**kw)


class TestProjectorPhase:
    def test_examples(self):
        assert projector_phase(PatternSpec(912, 3), 0) == 0.0
        assert projector_phase(PatternSpec(912, 3), 456) == pytest.approx(math.pi)
        assert projector_phase(PatternSpec(15, 3), 912) == pytest.approx(382.0176, abs=1e-4)
        assert 912 / 15 == pytest.approx(60.8)

    @pytest.mark.parametrize("u", [-0.1, 912.5, float("nan")])
    def test_out_of_range(self, u):
        with pytest.raises(ValueError):
            projector_phase(PatternSpec(15, 3), u)

    def test_monotone(self):
        u = np.linspace(0, 911, 50)
        assert np.all(np.diff(projector_phase(PatternSpec(114, 5), u)) > 0)


class TestGenerate:
    def test_examples(self):
        assert generate_pattern(PatternSpec(37.3, 4), 1).data[0, 0] == pytest.approx(255.0)
        assert generate_pattern(PatternSpec(304, 4), 1).data[0, 152] == pytest.approx(0.0, abs=1e-9)
        v = generate_pattern(PatternSpec(912, 15), 2).data[0, 0]
        assert v == pytest.approx(127.5 * (1 + math.cos(2 * math.pi / 15)))
        # cos(24 deg) = 0.9135455; the often-quoted 241.9446 does not satisfy the formula
        assert v == pytest.approx(243.97705, abs=1e-4)

    def test_shape_rows_range(self):
        r = generate_pattern(PatternSpec(15, 3, width=40, height=7), 3)
        assert r.data.shape == (7, 40) and r.kind == "intensity"
        assert np.all(r.data == r.data[0]) and r.data.min() >= 0 and r.data.max() <= 255

    @pytest.mark.parametrize("n", [0, 4])
    def test_step_range(self, n):
        with pytest.raises(ValueError):
            generate_pattern(PatternSpec(15, 3), n)

    @pytest.mark.parametrize("pitch", [15, 114, 304])
    def test_periodicity_and_mean(self, pitch):
        row = generate_pattern(PatternSpec(pitch, 5), 3).data[0]
        np.testing.assert_allclose(row[:912 - pitch], row[pitch:], atol=1e-9)
        assert row[:pitch].mean() == pytest.approx(127.5, abs=1e-9)

    @pytest.mark.parametrize("pitch, steps", [(15, 15), (114, 5), (304, 3), (912, 4), (60.8, 7)])
    def test_feed_to_retrieval(self, pitch, steps):
        spec = PatternSpec(pitch, steps)
        b = retrieve([generate_pattern(spec, n).data for n in range(1, steps + 1)])
        u = np.arange(912.0)
        d = wrap(b.phi[0] - 2 * np.pi * u / pitch)
        # +-pi are the same angle
        assert np.max(np.minimum(np.abs(d), 2 * np.pi - np.abs(d))) < 1e-9


class TestSchedule:
    def test_examples(self):
        np.testing.assert_allclose(make_schedule(3), [0, 2 * math.pi / 3, 4 * math.pi / 3])
        np.testing.assert_allclose(make_schedule(4), [0, math.pi / 2, math.pi, 3 * math.pi / 2])
        s = make_schedule(15)
        assert len(s) == 15 and s[0] == 0.0
        np.testing.assert_allclose(np.diff(s), 2 * math.pi / 15)

    def test_too_few(self):
        with pytest.raises(ValueError):
            make_schedule(2)

    @given(st.integers(3, 200))
    def test_roots_of_unity_sum(self, n):
        assert abs(np.exp(1j * make_schedule(n)).sum()) < 1e-12
