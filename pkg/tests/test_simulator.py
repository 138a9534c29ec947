import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fringephase.geometry import DegenerateRigError, PinholeModel, Rig, default_rig
from fringephase.pattern import PatternSpec
from fringephase.phase import modulation_mask, retrieve
from fringephase.raster import wrap
from fringephase.simulator import (NoiseSpec, render_fringe, render_groundtruth_phase,
                                   render_stack, trace_scene)
from fringephase.surfaces import Plane, Sphere


def _toy_rig():
    # tiny rig whose projector column 0 is imaged by camera column 0 on the z=1 plane
    cam = PinholeModel(10, 10, 0, 2, 8, 5)
    proj = PinholeModel(10, 10, 0, 2, 20, 5, translation=np.array([-0.1, 0.0, 0.0]))
    return Rig(cam, proj)


def test_u_p_zero_gives_peak_intensity():
    rig = _toy_rig()
    trace = trace_scene(rig, Plane(1.0))
    img, mask = render_fringe(rig, Plane(1.0), PatternSpec(15, 4, 20, 5), 1, trace=trace)
    hits = np.argwhere(np.isclose(trace.u_p, 0.0, atol=1e-9))
    assert len(hits) > 0
    for r, c in hits:
        assert img.data[r, c] == pytest.approx(200.0)
        assert mask.data[r, c] == 1


def test_miss_gives_zero(small_rig):
    img, mask = render_fringe(small_rig, Sphere((0, 0, 0.75), 0.01), PatternSpec(15, 4), 1)
    assert img.data[0, 0] == 0 and mask.data[0, 0] == 0
    assert mask.data.sum() > 0


def test_degenerate_rig():
    cam = PinholeModel(1, 1, 0, 0, 2, 2)
    with pytest.raises(DegenerateRigError):
        Rig(cam, cam)


def test_step_bounds(small_rig):
    with pytest.raises(ValueError):
        render_fringe(small_rig, Plane(0.7), PatternSpec(15, 4), 5)
    with pytest.raises(ValueError):
        NoiseSpec(sigma=-1)


def test_groundtruth_halves_with_pitch(small_rig):
    trace = trace_scene(small_rig, Plane(0.7))
    a, m = render_groundtruth_phase(small_rig, None, 15.0, trace)
    b, _ = render_groundtruth_phase(small_rig, None, 30.0, trace)
    assert np.array_equal(a.data / 2, b.data)
    # plane gives a smooth ramp increasing along u
    row = a.data[60][m.data[60] > 0]
    assert np.all(np.diff(row) > 0)


def test_pitch_product_relation(small_rig):
    trace = trace_scene(small_rig, Sphere((0, 0, 0.75), 0.1))
    phases = {p: render_groundtruth_phase(small_rig, None, p, trace)[0].data
              for p in (15.0, 114.0, 304.0, 912.0)}
    for p, Phi in phases.items():
        np.testing.assert_allclose(Phi * p, phases[15.0] * 15.0, rtol=0, atol=1e-9 * 912)


@pytest.mark.parametrize("pitch", [15.0, 114.0, 912.0])
def test_wrapped_groundtruth_matches_retrieval(sphere_capture, pitch):
    cap = sphere_capture
    truth, _ = render_groundtruth_phase(cap.rig, None, pitch, cap.trace)
    m = cap.mask
    d = wrap(cap.bundles[pitch].phi - truth.data)
    assert np.max(np.abs(d[m])) < 1e-9


@settings(max_examples=10)
@given(st.sampled_from([15.0, 114.0, 304.0]), st.integers(3, 6), st.floats(0.55, 0.9))
def test_intensity_range(pitch, steps, z):
    rig = default_rig(camera_scale=0.125)
    trace = trace_scene(rig, Plane(z))
    for img in render_stack(rig, PatternSpec(pitch, steps), trace):
        vals = img[trace.in_bounds]
        assert vals.min() >= -1e-9 and vals.max() <= 200 + 1e-9


def test_noise_bit_reproducible(small_rig):
    trace = trace_scene(small_rig, Plane(0.7))
    spec = PatternSpec(15, 4)
    noise = NoiseSpec(sigma=3.0, seed=11)
    a = render_fringe(small_rig, None, spec, 2, noise, trace=trace)[0].data
    b = render_fringe(small_rig, None, spec, 2, noise, trace=trace)[0].data
    c = render_fringe(small_rig, None, spec, 2, NoiseSpec(sigma=3.0, seed=12), trace=trace)[0].data
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    q = render_fringe(small_rig, None, spec, 2, NoiseSpec(sigma=3.0, seed=11, quantize=True),
                      trace=trace)[0].data
    assert np.array_equal(q, np.round(q)) and q.max() <= 255


@settings(max_examples=10)
@given(st.floats(0.03, 0.1), st.floats(0.5, 0.99))
def test_mask_monotone_in_surface(r, shrink):
    rig = default_rig(camera_scale=0.125)
    big = trace_scene(rig, Sphere((0, 0, 0.75), r)).mask
    small = trace_scene(rig, Sphere((0, 0, 0.75), r * shrink)).mask
    assert not np.any(small & ~big)


def test_sphere_fringes_bend(sphere_capture):
    # fringes on the sphere are not straight lines: the phase along a row is non-linear
    Phi = sphere_capture.truth
    m = sphere_capture.mask
    row = Phi[240][m[240]]
    second = np.diff(row, 2)
    assert np.max(np.abs(second)) > 1e-3


def test_shadowed_pixels_lose_modulation():
    rig = default_rig(camera_scale=0.125)
    from fringephase.surfaces import Union
    # small sphere between projector and plane casts a shadow on the plane
    scene = Union((Plane(0.8), Sphere((0.02, 0, 0.55), 0.02)))
    trace = trace_scene(rig, scene)
    shadow = trace.in_bounds & ~trace.lit
    assert shadow.any()
    stack = render_stack(rig, PatternSpec(15, 4), trace)
    np.testing.assert_allclose(np.array(stack)[:, shadow], 100.0)
    assert not modulation_mask(retrieve(stack))[shadow].any()
