"""Pinhole devices, the camera-projector rig and rig JSON files.

The world frame is the camera frame in computer-vision convention
(x right, y down, z forward); the camera therefore sits at the origin with
identity pose.  Poses quoted in a CG tool's convention (Euler XYZ degrees,
device looking down its local -z with +y up) are converted by
:func:`rig_from_cg_poses`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class BehindDeviceError(ValueError):
    """A point has non-positive depth in the device frame."""


class DegenerateRigError(ValueError):
    """Camera and projector optical centers coincide."""


def euler_xyz(angles_deg) -> np.ndarray:
    """Rotation matrix for extrinsic X-then-Y-then-Z Euler angles (degrees).

    Equivalent to ``Rz @ Ry @ Rx``; this is the default rotation mode of
    common CG packages.
    """
    ax, ay, az = np.radians(np.asarray(angles_deg, dtype=np.float64))
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class PinholeModel:
    """Distortion-free pinhole device; ``rotation``/``translation`` map world to device."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-10 or np.linalg.det(R) < 0:
            raise ValueError("rotation must be a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        """Optical center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def projection_matrix(self) -> np.ndarray:
        return self.K @ np.hstack([self.rotation, self.translation[:, None]])

    def to_device(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def scaled(self, factor: float) -> "PinholeModel":
        """Same device at a different sensor resolution (intrinsics scaled)."""
        return PinholeModel(
            self.fx * factor, self.fy * factor, self.cx * factor, self.cy * factor,
            int(round(self.width * factor)), int(round(self.height * factor)),
            self.rotation, self.translation)


def project(model: PinholeModel, points, check: bool = True):
    """World points ``(..., 3)`` to pixel coordinates ``(u, v)``.

    With ``check=False`` points behind the device yield non-finite or
    meaningless coordinates instead of raising.
    """
    pc = model.to_device(points)
    z = pc[..., 2]
    if check and np.any(z <= 0):
        raise BehindDeviceError("point behind device")
    with np.errstate(divide="ignore", invalid="ignore"):
        u = model.fx * pc[..., 0] / z + model.cx
        v = model.fy * pc[..., 1] / z + model.cy
    return u, v


def backproject_ray(model: PinholeModel, u, v):
    """Unit ray directions (world frame) through pixel coordinates ``(u, v)``.

    Returns ``(origin, direction)``; origin is the optical center (shape 3),
    direction has shape ``(..., 3)``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < 0) or np.any(u > model.width - 1) or np.any(v < 0) or np.any(v > model.height - 1):
        raise ValueError("pixel outside the device resolution")
    d_dev = np.stack([(u - model.cx) / model.fx, (v - model.cy) / model.fy, np.ones_like(u)], axis=-1)
    d = d_dev @ model.rotation  # R^T d for row vectors
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return model.center, d


def pixel_grid(model: PinholeModel):
    """Integer pixel coordinates ``(u, v)`` as ``(height, width)`` arrays."""
    v, u = np.mgrid[0:model.height, 0:model.width].astype(np.float64)
    return u, v


@dataclass(frozen=True)
class Rig:
    camera: PinholeModel
    projector: PinholeModel

    def __post_init__(self):
        if np.linalg.norm(self.camera.center - self.projector.center) <= 1e-12:
            raise DegenerateRigError("camera and projector centers coincide")

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.camera.center - self.projector.center))

    def scaled_camera(self, factor: float) -> "Rig":
        return Rig(self.camera.scaled(factor), self.projector)


# CV device frame from a CG device frame: flip y (up -> down) and z (back -> forward)
_CG_TO_CV = np.diag([1.0, -1.0, -1.0])


def rig_from_cg_poses(cam_pos, cam_rot_deg, proj_pos, proj_rot_deg,
                      cam_intrinsics, proj_intrinsics) -> Rig:
    """Build a rig from CG-tool poses, re-expressed in the camera's CV frame.

    ``*_intrinsics`` are ``(fx, fy, cx, cy, width, height)`` tuples.
    """
    Rc = euler_xyz(cam_rot_deg)
    Rp = euler_xyz(proj_rot_deg)
    tc = np.asarray(cam_pos, dtype=np.float64)
    tp = np.asarray(proj_pos, dtype=np.float64)
    # world (camera CV frame) -> CG world:  x_cg = Rc F x + tc
    R_proj = _CG_TO_CV @ Rp.T @ Rc @ _CG_TO_CV
    t_proj = _CG_TO_CV @ Rp.T @ (tc - tp)
    camera = PinholeModel(*cam_intrinsics)
    projector = PinholeModel(*proj_intrinsics, rotation=R_proj, translation=t_proj)
    return Rig(camera, projector)


CAMERA_FOCAL_MM = 12.0
SENSOR_WIDTH_MM = 4.8
PROJECTOR_FOCAL_PX = 1000.0


def default_rig(camera_scale: float = 1.0, sensor_width_mm: float = SENSOR_WIDTH_MM,
                projector_focal_px: float = PROJECTOR_FOCAL_PX) -> Rig:
    """The virtual rig: 640x480 camera (12 mm lens), 912x1140 projector.

    Camera at the origin with CG rotation (90, 0, 90) deg; projector at
    (-0.15, 0.045, 0) m with rotation (90, 0, 95) deg.  ``camera_scale``
    shrinks the camera sensor (e.g. 0.25 -> 160x120) for quick runs.
    """
    f_cam = CAMERA_FOCAL_MM / sensor_width_mm * 640.0
    cam = (f_cam, f_cam, 320.0, 240.0, 640, 480)
    proj = (projector_focal_px, projector_focal_px, 456.0, 570.0, 912, 1140)
    rig = rig_from_cg_poses((0, 0, 0), (90, 0, 90), (-0.15, 0.045, 0), (90, 0, 95), cam, proj)
    if camera_scale != 1.0:
        rig = rig.scaled_camera(camera_scale)
    return rig


# ---------------------------------------------------------------------------
# rig JSON

def _model_to_dict(m: PinholeModel) -> dict:
    return {
        "intrinsics": m.K.tolist(),
        "rotation": m.rotation.tolist(),
        "translation": m.translation.tolist(),
        "resolution": [m.width, m.height],
    }


def _model_from_dict(d: dict) -> PinholeModel:
    K = np.asarray(d["intrinsics"], dtype=np.float64)
    w, h = d["resolution"]
    return PinholeModel(K[0, 0], K[1, 1], K[0, 2], K[1, 2], int(w), int(h),
                        np.asarray(d["rotation"]), np.asarray(d["translation"]))


def rig_to_dict(rig: Rig) -> dict:
    return {"camera": _model_to_dict(rig.camera), "projector": _model_to_dict(rig.projector)}


def rig_from_dict(d: dict) -> Rig:
    return Rig(_model_from_dict(d["camera"]), _model_from_dict(d["projector"]))


def save_rig(rig: Rig, path) -> None:
    Path(path).write_text(json.dumps(rig_to_dict(rig), indent=2) + "\n")


def load_rig(path) -> Rig:
    return rig_from_dict(json.loads(Path(path).read_text()))
