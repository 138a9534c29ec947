"""Refined reference phase: three-frequency reference quality packed into
one wrapped phase at the z-min pitch, so two wrapped phases suffice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import TWO_PI, wrap
from .unwrap import (UnwrapResult, ZminConfig, apply_order, phi_min, two_freq_order,
                     unit_frequency_phase, zmin_order)

UNIT_PITCH = 912.0
MID_PITCH = 114.0
REF_PITCH = 304.0
HIGH_PITCH = 15.0


@dataclass(frozen=True)
class RefinedReference:
    Phi_r: np.ndarray   # mid-pitch reference rescaled to the z-min pitch
    phi_r: np.ndarray   # Phi_r minus the z-min fringe orders
    M_r: np.ndarray
    D_r: np.ndarray
    K_z: np.ndarray
    mask: np.ndarray
    pitch: float = REF_PITCH


def three_freq_reference(phi_1, phi_mid, pitch_1: float = UNIT_PITCH,
                         pitch_mid: float = MID_PITCH, mask=None):
    """Absolute mid-pitch phase from the unit-frequency phase (first ladder step)."""
    phi_1 = np.asarray(phi_1, dtype=np.float64)
    phi_mid = np.asarray(phi_mid, dtype=np.float64)
    if phi_1.shape != phi_mid.shape:
        raise ValueError("phase shapes differ")
    Phi_1 = unit_frequency_phase(phi_1)
    K = two_freq_order(phi_mid, Phi_1, pitch_mid, pitch_1, mask)
    return apply_order(phi_mid, K, mask)


def build_refined(Phi_t, K_z, mask=None, pitch_mid: float = MID_PITCH,
                  pitch_ref: float = REF_PITCH) -> RefinedReference:
    """Rescale ``Phi_t`` to the reference pitch and strip the z-min orders."""
    K_z = np.asarray(K_z, dtype=np.float64)
    if not np.all(np.isfinite(K_z)) or np.any(K_z != np.round(K_z)):
        raise ValueError("fringe order must be integral")
    Phi_t = np.asarray(Phi_t, dtype=np.float64)
    if mask is None:
        mask = np.ones(Phi_t.shape, bool)
    mask = np.asarray(mask, bool)
    Phi_r = np.where(mask, (pitch_mid / pitch_ref) * Phi_t, 0.0)
    phi_r = np.where(mask, Phi_r - TWO_PI * K_z, 0.0)
    M_r = np.where(mask, -np.sin(phi_r), 0.0)
    D_r = np.where(mask, np.cos(phi_r), 0.0)
    return RefinedReference(Phi_r, phi_r, M_r, D_r, np.where(mask, K_z, 0.0), mask, pitch_ref)


def two_phase_unwrap_arrays(phi_h, phi_ref, Phi_min, mask, pitch_h: float = HIGH_PITCH,
                            pitch_ref: float = REF_PITCH) -> UnwrapResult:
    """Unwrap ``phi_h`` from one wrapped reference phase plus ``Phi_min``.

    The reference is unwrapped with the geometric constraint, then used as
    a two-frequency reference for ``phi_h``.  Returns the high-pitch result;
    the reference orders are not kept.
    """
    mask = np.asarray(mask, bool)
    ref = np.where(mask, wrap(np.where(mask, phi_ref, 0.0)), 0.0)
    K_ref = zmin_order(ref, Phi_min, mask)
    Phi_ref = apply_order(ref, K_ref, mask)
    K_h = two_freq_order(phi_h, Phi_ref, pitch_h, pitch_ref, mask)
    return UnwrapResult(apply_order(phi_h, K_h, mask), K_h, mask)


def two_phase_unwrap(phi_h, ref: RefinedReference, cfg: ZminConfig, mask=None,
                     pitch_h: float = HIGH_PITCH) -> UnwrapResult:
    """High-pitch absolute phase from ``phi_h`` and the refined reference only.

    The reference is read back through ``-atan2(M_r, D_r)``, i.e. exactly
    what a predictor of ``(M_r, D_r)`` would hand over.
    """
    Phi_min, ok = phi_min(cfg)
    m = ok & ref.mask
    if mask is not None:
        m &= np.asarray(mask, bool)
    phi_ref = -np.arctan2(ref.M_r, ref.D_r)
    return two_phase_unwrap_arrays(phi_h, phi_ref, Phi_min, m, pitch_h, cfg.pitch)


def refined_from_bundles(phi_1, phi_mid, phi_z, cfg: ZminConfig, mask) -> RefinedReference:
    """Convenience: full refined reference from the three wrapped phases."""
    mask = np.asarray(mask, bool)
    Phi_min, ok = phi_min(cfg)
    mask = mask & ok
    Phi_t = three_freq_reference(phi_1, phi_mid, mask=mask)
    K_z = zmin_order(phi_z, Phi_min, mask)
    return build_refined(Phi_t, K_z, mask, pitch_ref=cfg.pitch)

