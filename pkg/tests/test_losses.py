from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fringephase.losses import (LossTarget, LossWeights, consistency_loss, geometric_loss,
                                gradcheck, make_prediction, phase_loss, relative_error,
                                total_loss)
from fringephase.raster import TWO_PI, wrap


def _target(Phi, mask=None):
    phi = wrap(Phi)
    m = np.ones(Phi.shape, bool) if mask is None else mask
    return LossTarget(-np.sin(phi), np.cos(phi), -np.sin(phi / 3), np.cos(phi / 3), Phi, m)


def _exact(tgt):
    K = np.round((tgt.Phi - wrap(tgt.Phi)) / TWO_PI)
    return make_prediction(tgt.M_h, tgt.D_h, tgt.M_l, tgt.D_l, K=K)


def _ramp(h=6, w=7):
    v, u = np.mgrid[0:h, 0:w].astype(float)
    return 0.3 * u + 0.1 * v + 5.0


class TestPhaseLoss:
    def test_zero_at_target(self):
        tgt = _target(_ramp())
        assert phase_loss(_exact(tgt), tgt)[0] == pytest.approx(0, abs=1e-25)

    def test_single_pixel_offset(self):
        tgt = _target(_ramp())
        pred = _exact(tgt)
        M = pred.M_h.copy()
        M[2, 3] += 1
        pred = replace(pred, M_h=M)
        m = tgt.mask.copy()
        m[0, 0] = False
        tgt = replace(tgt, mask=m)
        assert phase_loss(pred, tgt)[0] == pytest.approx(1 / m.sum())

    def test_empty_mask(self):
        tgt = _target(_ramp())
        with pytest.raises(ValueError):
            phase_loss(_exact(tgt), replace(tgt, mask=np.zeros_like(tgt.mask)))


class TestConsistency:
    def test_constant_offset_is_free(self):
        Phi = _ramp()
        val, g = consistency_loss(Phi + 1.234, Phi, np.ones(Phi.shape, bool))
        assert val == pytest.approx(0, abs=1e-25)
        assert np.allclose(g, 0)

    def test_ramp_example(self):
        Phi = _ramp()
        u = np.arange(Phi.shape[1])[None, :]
        val, _ = consistency_loss(Phi + 0.01 * u, Phi, np.ones(Phi.shape, bool))
        assert val == pytest.approx(1e-4, rel=1e-9)

    def test_wrap_jumps_excluded(self):
        # true wrapped phase compared against the unwrapped target: zero loss
        Phi = np.tile(np.linspace(0, 20, 30), (4, 1))
        val, _ = consistency_loss(wrap(Phi), Phi, np.ones(Phi.shape, bool))
        assert val == pytest.approx(0, abs=1e-20)

    def test_too_thin(self):
        with pytest.raises(ValueError):
            consistency_loss(np.zeros((1, 5)), np.zeros((1, 5)), np.ones((1, 5), bool))


class TestGeometric:
    def test_examples(self):
        m = np.ones((4, 5), bool)
        assert geometric_loss(np.full((4, 5), 3.0), m)[0] == 0
        u = np.tile(np.arange(5.0), (4, 1))
        assert geometric_loss(u, m)[0] == pytest.approx(1.0)
        with pytest.raises(ValueError):
            geometric_loss(np.zeros((5, 1)), np.ones((5, 1), bool))


class TestTotal:
    def test_phase_only_weights(self, rng):
        tgt = _target(_ramp())
        pred = _exact(tgt)
        pred = replace(pred, M_l=pred.M_l + rng.normal(0, 0.1, pred.M_l.shape))
        assert total_loss(pred, tgt, LossWeights(1, 0, 0)).value == phase_loss(pred, tgt)[0]

    def test_geometric_prior_at_truth(self, sphere_capture):
        cap = sphere_capture
        sl = (slice(200, 264), slice(280, 344))
        Phi = cap.truth[sl]
        tgt = _target(Phi, cap.mask[sl])
        res = total_loss(_exact(tgt), tgt)
        assert res.value == pytest.approx(1e-6 * geometric_loss(Phi, tgt.mask)[0], rel=1e-9)
        assert res.value > 0

    def test_default_weights(self):
        assert LossWeights() == LossWeights(1.0, 1e-2, 1e-6)
        with pytest.raises(ValueError):
            LossWeights(1, -1e-3, 0)

    @settings(max_examples=20)
    @given(st.floats(0.1, 10), st.integers(0, 1000))
    def test_weight_scaling_is_linear(self, s, seed):
        from fringephase.losses import _random_case
        outs, tgt, K = _random_case(np.random.default_rng(seed), 8)
        pred = make_prediction(**outs, K=K)
        a = total_loss(pred, tgt, LossWeights(1, 0, 0)).grads
        b = total_loss(pred, tgt, LossWeights(1, s, 0)).grads
        c = total_loss(pred, tgt, LossWeights(1, 2 * s, 0)).grads
        for k in a:
            np.testing.assert_allclose(c[k] - a[k], 2 * (b[k] - a[k]), rtol=1e-9, atol=1e-15)

    @settings(max_examples=30)
    @given(st.integers(0, 10**6))
    def test_losses_nonnegative(self, seed):
        from fringephase.losses import _random_case
        outs, tgt, K = _random_case(np.random.default_rng(seed), 8)
        res = total_loss(make_prediction(**outs, K=K), tgt)
        assert all(v >= 0 for v in res.terms.values())

    def test_unwrap_inside_prediction(self, sphere_capture):
        # with the true M/D outputs the two-phase unwrap recovers the target Phi
        cap = sphere_capture
        sl = (slice(200, 232), slice(280, 312))
        from fringephase.pipeline import _targets
        ref, _ = _targets(cap)
        phi = cap.bundles[15.0].phi[sl]
        pred = make_prediction(-np.sin(phi), np.cos(phi), ref.M_r[sl], ref.D_r[sl],
                               Phi_min=cap.Phi_min[sl], mask=cap.mask[sl])
        m = cap.mask[sl]
        assert np.max(np.abs(pred.Phi - cap.truth[sl])[m]) < 1e-9


@pytest.mark.parametrize("loss", ["phase", "consist", "geo", "total"])
def test_gradcheck(loss):
    assert gradcheck(loss, size=8, trials=10, seed=0, h=1e-5) < 1e-5


def test_gradcheck_unknown():
    with pytest.raises(ValueError):
        gradcheck("nope")


def test_relative_error_floor():
    assert relative_error(np.array([1.0, 1e-9]), np.array([1.0, 2e-9])) < 1e-5
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
