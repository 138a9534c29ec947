import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fringephase.geometry import PinholeModel, Rig, project, default_rig
from fringephase.pipeline import capture_scene
from fringephase.reconstruct import (PointCloud, depth_map, evaluate, fit_sphere, metrics,
                                     phase_to_projector_column, read_ply, reconstruct,
                                     triangulate, write_ply)
from fringephase.surfaces import Plane
from fringephase.unwrap import ladder_unwrap


def test_phase_to_column_examples():
    assert phase_to_projector_column(0.0, 15) == 0
    assert phase_to_projector_column(2 * np.pi, 15) == pytest.approx(15.0)


def test_column_from_oracle(sphere_capture):
    cap = sphere_capture
    u_p = phase_to_projector_column(cap.truth, 15.0)
    m = cap.mask
    assert np.max(np.abs(u_p - cap.trace.u_p)[m]) < 1e-6


@settings(max_examples=50)
@given(st.floats(-0.15, 0.15), st.floats(-0.1, 0.1), st.floats(0.5, 1.2))
def test_triangulate_round_trip(x, y, z):
    rig = default_rig()
    P = np.array([x, y, z])
    u, v = project(rig.camera, P)
    u_p, v_p = project(rig.projector, P)
    # only points both devices see; off-image points can sit on the singular epipolar plane
    cam, proj = rig.camera, rig.projector
    assume(0 <= u < cam.width and 0 <= v < cam.height)
    assume(0 <= u_p <= proj.width and 0 <= v_p <= proj.height)
    X, ok = triangulate(rig, u, v, u_p)
    assert ok[0]
    assert np.max(np.abs(X[0] - P)) < 1e-9
    ru, rv = project(rig.camera, X[0])
    assert abs(ru - u) < 1e-6 and abs(rv - v) < 1e-6


def test_parallel_system_is_invalid():
    # projector shifted along x with the same orientation: the column plane through its
    # principal point is parallel to the camera's optical axis
    cam = PinholeModel(100, 100, 5, 5, 10, 10)
    proj = PinholeModel(100, 100, 5, 5, 10, 10, translation=np.array([-0.1, 0.0, 0.0]))
    X, ok = triangulate(Rig(cam, proj), [5.0, 5.0, 2.0], [5.0, 5.0, 5.0], [5.0, np.nan, 8.0])
    assert not ok[0] and np.isnan(X[0]).all()
    assert not ok[1]
    assert ok[2]


def test_plane_cloud_is_planar(rig):
    cap = capture_scene(rig, Plane(0.75))
    b = cap.bundles
    res = ladder_unwrap([(912.0, b[912.0]), (114.0, b[114.0]), (15.0, b[15.0])], mask=cap.mask)
    cloud = reconstruct(rig, res.phase, 15.0, res.mask)
    assert len(cloud) == res.mask.sum()
    z = cloud.points[:, 2] / 1000.0
    assert np.sqrt(np.mean((z - 0.75) ** 2)) < 1e-6


def test_noiseless_depth_identity(five_scenes):
    for cap in five_scenes.values():
        b = cap.bundles
        res = ladder_unwrap([(912.0, b[912.0]), (114.0, b[114.0]), (15.0, b[15.0])], mask=cap.mask)
        z, ok = depth_map(cap.rig, res.phase, 15.0, res.mask)
        zt = cap.trace.points[..., 2] * 1000.0
        assert np.max(np.abs(z - zt)[ok]) < 1e-3   # mm, i.e. 1e-6 m


class TestSphereFit:
    def _samples(self, rng, n=500, hemi=False, c=(1.0, -2.0, 3.0), r=5.0):
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        if hemi:
            d[:, 2] = -np.abs(d[:, 2])
        return np.asarray(c) + r * d

    def test_exact(self, rng):
        fit = fit_sphere(self._samples(rng))
        np.testing.assert_allclose(fit.center, [1, -2, 3], atol=1e-9)
        assert fit.radius == pytest.approx(5.0, abs=1e-9) and fit.rms < 1e-9

    def test_cap_only(self, rng):
        d = self._samples(rng, 400, c=(0, 0, 0), r=1.0)
        d = d[d[:, 2] < -0.6]
        assert fit_sphere(d * 100).radius == pytest.approx(100.0, abs=1e-6)
        assert fit_sphere(self._samples(rng, hemi=True)).radius == pytest.approx(5.0, abs=1e-6)

    def test_degenerate(self, rng):
        pts = np.column_stack([rng.normal(size=(50, 2)), np.zeros(50)])
        with pytest.raises(ValueError):
            fit_sphere(pts)
        with pytest.raises(ValueError):
            fit_sphere(np.zeros((3, 3)))

    def test_accepts_cloud(self, rng):
        pts = self._samples(rng)
        assert fit_sphere(PointCloud(pts, np.zeros((len(pts), 2)))).radius == pytest.approx(5.0)


class TestMetrics:
    def test_examples(self):
        a = np.arange(12.0).reshape(3, 4)
        m = np.ones_like(a, bool)
        assert metrics(a, a, m) == (0.0, 0.0)
        b = a.copy()
        b[1, 1] += 3.0
        mae, rmse = metrics(b, a, m)
        assert mae == pytest.approx(3 / 12) and rmse == pytest.approx(3 / np.sqrt(12))
        with pytest.raises(ValueError):
            metrics(a, a, np.zeros_like(m))
        with pytest.raises(ValueError):
            metrics(a, a[:2], m)

    @settings(max_examples=30)
    @given(st.integers(0, 10**6))
    def test_against_scalar_loop(self, seed):
        rng = np.random.default_rng(seed)
        p, t = rng.normal(size=(2, 5, 6))
        m = rng.uniform(size=(5, 6)) > 0.3
        if not m.any():
            m[0, 0] = True
        s, s2, n = 0.0, 0.0, 0
        for i in range(5):
            for j in range(6):
                if m[i, j]:
                    e = p[i, j] - t[i, j]
                    s += abs(e)
                    s2 += e * e
                    n += 1
        mae, rmse = metrics(p, t, m)
        assert mae == pytest.approx(s / n, rel=1e-12)
        assert rmse == pytest.approx(np.sqrt(s2 / n), rel=1e-12)
        assert rmse >= mae - 1e-15


def test_evaluate_zero_at_truth(sphere_capture):
    cap = sphere_capture
    out = evaluate(cap.rig, cap.truth, cap.truth, cap.mask, 15.0)
    assert out == {"mae_rad": 0.0, "rmse_rad": 0.0, "mae_mm": 0.0, "rmse_mm": 0.0}
    shifted = evaluate(cap.rig, cap.truth + 0.1, cap.truth, cap.mask, 15.0)
    assert shifted["mae_rad"] == pytest.approx(0.1) and shifted["mae_mm"] > 0


def test_ply_round_trip(tmp_path, rng):
    pts = rng.normal(size=(20, 3)) * 100
    write_ply(pts, tmp_path / "c.ply")
    text = (tmp_path / "c.ply").read_text()
    assert text.startswith("ply\nformat ascii 1.0\nelement vertex 20\n")
    assert "property float x" in text
    np.testing.assert_allclose(read_ply(tmp_path / "c.ply"), pts.astype(np.float32), rtol=1e-6)
    write_ply(np.zeros((0, 3)), tmp_path / "e.ply")
    assert read_ply(tmp_path / "e.ply").shape == (0, 3)
