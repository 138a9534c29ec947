"""Triangulation, sphere fitting, PLY export and error metrics."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Rig, pixel_grid
from .raster import TWO_PI

# |det| of the normalized 3x3 system below which camera ray and projector plane are parallel
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray   # (n, 3) millimetres
    pixels: np.ndarray   # (n, 2) camera (u, v)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class SphereFit:
    center: np.ndarray
    radius: float
    rms: float


def phase_to_projector_column(Phi, pitch: float, mask=None):
    u_p = np.asarray(Phi, dtype=np.float64) * pitch / TWO_PI
    return u_p if mask is None else np.where(mask, u_p, 0.0)


def _linear_system(rig: Rig, u, v, u_p):
    Pc = rig.camera.projection_matrix
    Pp = rig.projector.projection_matrix
    rows = np.stack([
        u[:, None] * Pc[2] - Pc[0],
        v[:, None] * Pc[2] - Pc[1],
        u_p[:, None] * Pp[2] - Pp[0],
    ], axis=1)  # (n, 3, 4)
    return rows[..., :3], -rows[..., 3]


def triangulate(rig: Rig, u, v, u_p):
    """World points from camera pixels and their projector columns.

    Solves the two camera projection rows and the projector column row as a
    3x3 linear system per pixel.  Returns ``(points (n, 3), valid (n,))``;
    near-singular systems are invalid and yield NaN.
    """
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    u_p = np.atleast_1d(np.asarray(u_p, dtype=np.float64))
    finite = np.isfinite(u) & np.isfinite(v) & np.isfinite(u_p)
    A, b = _linear_system(rig, np.where(finite, u, 0.0), np.where(finite, v, 0.0),
                          np.where(finite, u_p, 0.0))
    scale = np.linalg.norm(A, axis=2, keepdims=True)
    A = A / scale
    b = b / scale[..., 0]
    det = np.linalg.det(A)
    ok = finite & (np.abs(det) > SINGULAR_TOL)
    X = np.full((len(u), 3), np.nan)
    if ok.any():
        X[ok] = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    return X, ok


def reconstruct(rig: Rig, Phi, pitch: float, mask) -> PointCloud:
    """Point cloud (mm) from an absolute phase map over masked camera pixels."""
    mask = np.asarray(mask, bool)
    u, v = pixel_grid(rig.camera)
    u_p = phase_to_projector_column(Phi, pitch)
    X, ok = triangulate(rig, u[mask], v[mask], u_p[mask])
    pix = np.stack([u[mask], v[mask]], axis=1)
    return PointCloud(X[ok] * 1000.0, pix[ok])


def depth_map(rig: Rig, Phi, pitch: float, mask):
    """Per-pixel z (mm) and validity, for depth metrics."""
    mask = np.asarray(mask, bool)
    u, v = pixel_grid(rig.camera)
    X, ok = triangulate(rig, u[mask], v[mask], phase_to_projector_column(Phi, pitch)[mask])
    z = np.zeros(mask.shape)
    valid = np.zeros(mask.shape, bool)
    z[mask] = np.where(ok, X[:, 2] * 1000.0, 0.0)
    valid[mask] = ok
    return z, valid


def fit_sphere(points, iterations: int = 20) -> SphereFit:
    """Algebraic least-squares sphere, refined by Gauss-Newton on geometric distance."""
    P = np.asarray(points.points if isinstance(points, PointCloud) else points, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != 3 or len(P) < 4:
        raise ValueError("need at least 4 points of shape (n, 3)")
    # x^2+y^2+z^2 = 2 c.x + (r^2 - |c|^2)
    mean = P.mean(axis=0)
    Q = P - mean
    A = np.hstack([2.0 * Q, np.ones((len(Q), 1))])
    if np.linalg.matrix_rank(A, tol=1e-9 * np.abs(A).max()) < 4:
        raise ValueError("degenerate (coplanar) point set")
    sol, *_ = np.linalg.lstsq(A, np.sum(Q * Q, axis=1), rcond=None)
    c = sol[:3]
    r = np.sqrt(max(sol[3] + c @ c, 0.0))
    if not r > 0:
        raise ValueError("degenerate (coplanar) point set")
    for _ in range(iterations):
        diff = Q - c
        dist = np.linalg.norm(diff, axis=1)
        res = dist - r
        J = np.hstack([-diff / dist[:, None], -np.ones((len(Q), 1))])
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        c = c + step[:3]
        r = r + step[3]
    res = np.linalg.norm(Q - c, axis=1) - r
    return SphereFit(c + mean, float(r), float(np.sqrt(np.mean(res ** 2))))


def metrics(pred, truth, mask) -> tuple[float, float]:
    """Masked (MAE, RMSE)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    mask = np.asarray(mask, bool)
    if pred.shape != truth.shape or pred.shape != mask.shape:
        raise ValueError("shapes differ")
    if not mask.any():
        raise ValueError("empty mask")
    e = (pred - truth)[mask]
    return float(np.mean(np.abs(e))), float(np.sqrt(np.mean(e * e)))


def write_ply(cloud: PointCloud | np.ndarray, path) -> None:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    pts = np.asarray(pts, dtype=np.float32)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
             "property float x", "property float y", "property float z", "end_header"]
    body = "\n".join(f"{x:.7g} {y:.7g} {z:.7g}" for x, y, z in pts.tolist())
    Path(path).write_text("\n".join(lines) + "\n" + body + ("\n" if len(pts) else ""))


def read_ply(path) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    end = text.index("end_header")
    rows = [list(map(float, line.split())) for line in text[end + 1:] if line.strip()]
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def evaluate(rig: Rig, Phi_pred, Phi_truth, mask, pitch: float) -> dict:
    """Phase MAE/RMSE (rad) and depth MAE/RMSE (mm) over ``mask``."""
    mask = np.asarray(mask, bool)
    mae, rmse = metrics(Phi_pred, Phi_truth, mask)
    z_p, ok_p = depth_map(rig, Phi_pred, pitch, mask)
    z_t, ok_t = depth_map(rig, Phi_truth, pitch, mask)
    mae_mm, rmse_mm = metrics(z_p, z_t, ok_p & ok_t)
    return {"mae_rad": mae, "rmse_rad": rmse, "mae_mm": mae_mm, "rmse_mm": rmse_mm}
