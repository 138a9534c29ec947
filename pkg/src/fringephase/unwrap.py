"""Temporal phase unwrapping: multi-frequency ladders and the z-min method.

All functions work on ``(H, W)`` arrays.  Optional ``mask`` arguments are
boolean validity maps; outputs are zero outside them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Rig, backproject_ray, pixel_grid, project
from .raster import TWO_PI, ceil_int, round_half_away


@dataclass(frozen=True)
class UnwrapResult:
    phase: np.ndarray
    order: np.ndarray
    mask: np.ndarray


@dataclass(frozen=True)
class ZminConfig:
    z_min: float
    rig: Rig
    pitch: float


def _masked(values, mask):
    if mask is None:
        return values
    return np.where(mask, values, 0.0)


def _check_integral(K):
    K = np.asarray(K, dtype=np.float64)
    if not np.all(np.isfinite(K)) or np.any(K != np.round(K)):
        raise ValueError("fringe order must be integral")
    return K


def apply_order(phi, K, mask=None):
    """Absolute phase ``phi + 2 pi K``."""
    K = _check_integral(K)
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != K.shape:
        raise ValueError("phase and order shapes differ")
    return _masked(phi + TWO_PI * K, mask)


def two_freq_order(phi_h, Phi_l, pitch_h: float, pitch_l: float, mask=None):
    """Fringe order of ``phi_h`` from an unwrapped lower-frequency reference."""
    if not pitch_l > pitch_h:
        raise ValueError("reference pitch must exceed the target pitch")
    phi_h = np.asarray(phi_h, dtype=np.float64)
    Phi_l = np.asarray(Phi_l, dtype=np.float64)
    if phi_h.shape != Phi_l.shape:
        raise ValueError("phase shapes differ")
    K = round_half_away(((pitch_l / pitch_h) * Phi_l - phi_h) / TWO_PI)
    return _masked(np.asarray(K, dtype=np.float64), mask)


def unit_frequency_phase(phi):
    """Absolute phase of a single-period pattern: ``phi`` moved into ``[0, 2 pi)``.

    With phase ``2 pi u_p / W`` over the projector width the absolute phase
    lives in ``[0, 2 pi)``; the wrapped value only needs its negative half
    shifted up by one period.
    """
    phi = np.asarray(phi, dtype=np.float64)
    return np.where(phi < 0, phi + TWO_PI, phi)


def ladder_unwrap(ladder, base=None, mask=None) -> UnwrapResult:
    """Recursive multi-frequency unwrapping.

    ``ladder`` is a sequence of ``(pitch, bundle)`` pairs with strictly
    decreasing pitch.  The first entry is the unit-frequency phase unless
    ``base`` (an unwrapped phase for it) is given.  Returns the absolute
    phase of the last entry; ``mask`` further restricts the bundles' validity.
    """
    ladder = list(ladder)
    if len(ladder) < 2:
        raise ValueError("a ladder needs at least two frequencies")
    pitches = [p for p, _ in ladder]
    if any(a <= b for a, b in zip(pitches, pitches[1:])):
        raise ValueError("pitches must strictly decrease along the ladder")
    shape = ladder[0][1].phi.shape
    if any(b.phi.shape != shape for _, b in ladder):
        raise ValueError("all bundles must share one shape")
    masks = [np.asarray(b.mask, bool) for _, b in ladder]
    if mask is not None:
        masks.append(np.asarray(mask, bool))
    mask = np.logical_and.reduce(masks)
    Phi = unit_frequency_phase(ladder[0][1].phi) if base is None else np.asarray(base, np.float64)
    K = np.zeros(shape)
    for (p_prev, _), (p, b) in zip(ladder, ladder[1:]):
        K = two_freq_order(b.phi, Phi, p, p_prev, mask)
        Phi = apply_order(b.phi, K, mask)
    return UnwrapResult(Phi, K, mask)


def phi_min(cfg: ZminConfig):
    """Projector phase of each camera ray's hit on the plane ``z = z_min``.

    Returns ``(Phi_min, valid)``; pixels whose ray is parallel to or points
    away from the plane, or lands behind the projector, are invalid.
    """
    cam, proj = cfg.rig.camera, cfg.rig.projector
    u, v = pixel_grid(cam)
    o, d = backproject_ray(cam, u.ravel(), v.ravel())
    dz = d[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (cfg.z_min - o[2]) / dz
    ok = (np.abs(dz) > 1e-12) & (s > 0)
    pts = o + np.where(ok, s, 0.0)[:, None] * d
    ok &= proj.to_device(pts)[:, 2] > 0
    up, _ = project(proj, pts, check=False)
    Phi = np.where(ok, TWO_PI * np.where(ok, up, 0.0) / cfg.pitch, 0.0)
    shape = (cam.height, cam.width)
    return Phi.reshape(shape), ok.reshape(shape)


def zmin_order(phi_z, Phi_min, mask=None):
    """``Ceil((Phi_min - phi_z) / 2 pi)``."""
    phi_z = np.asarray(phi_z, dtype=np.float64)
    Phi_min = np.asarray(Phi_min, dtype=np.float64)
    if phi_z.shape != Phi_min.shape:
        raise ValueError("phase shapes differ")
    K = ceil_int((Phi_min - phi_z) / TWO_PI)
    return _masked(np.asarray(K, dtype=np.float64), mask)


def zmin_unwrap(phi_z, cfg: ZminConfig, mask=None, Phi_min=None) -> UnwrapResult:
    """Unwrap a non-unit-frequency phase with the geometric constraint."""
    if Phi_min is None:
        Phi_min, ok = phi_min(cfg)
    else:
        ok = np.ones(np.shape(Phi_min), bool)
    m = ok if mask is None else (ok & np.asarray(mask, bool))
    K = zmin_order(phi_z, Phi_min, m)
    return UnwrapResult(apply_order(phi_z, K, m), K, m)
