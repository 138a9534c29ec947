"""N-step phase-shifting retrieval, modulation masking and input normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import TWO_PI, wrap

MASK_THRESHOLD = 8.0
ZERO_TOL = 1e-12


@dataclass(frozen=True)
class WrappedPhaseBundle:
    """Wrapped phase with its numerator/denominator, modulation and validity."""

    phi: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    modulation: np.ndarray
    mask: np.ndarray
    steps: int

    @property
    def shape(self):
        return self.phi.shape


def retrieve(images, steps: int | None = None) -> WrappedPhaseBundle:
    """Least-squares phase from ``N`` equally shifted fringe images.

    ``M = sum I_n sin(2 pi n/N)``, ``D = sum I_n cos(2 pi n/N)`` with
    ``n = 0..N-1`` and ``phi = -atan2(M, D)``.  Pixels with ``M = D = 0``
    are invalid and carry zeros; "zero" allows for the rounding left by
    summing sines and cosines of the shifts (relative ``ZERO_TOL``).
    """
    stack = np.asarray([np.asarray(im, dtype=np.float64) for im in images])
    if stack.ndim != 3:
        raise ValueError("images must be equally sized 2-D arrays")
    n_img = stack.shape[0]
    if steps is None:
        steps = n_img
    if steps < 3:
        raise ValueError(f"need at least 3 phase steps, got {steps}")
    if n_img != steps:
        raise ValueError(f"got {n_img} images for {steps} steps")
    delta = TWO_PI * np.arange(steps) / steps
    M = np.tensordot(np.sin(delta), stack, axes=1)
    D = np.tensordot(np.cos(delta), stack, axes=1)
    scale = np.abs(stack).sum(axis=0)
    valid = np.hypot(M, D) > ZERO_TOL * scale
    phi = np.where(valid, wrap(-np.arctan2(M, D)), 0.0)
    mod = (2.0 / steps) * np.hypot(M, D)
    return WrappedPhaseBundle(phi, np.where(valid, M, 0.0), np.where(valid, D, 0.0),
                              np.where(valid, mod, 0.0), valid, steps)


def modulation_mask(bundle: WrappedPhaseBundle, threshold: float = MASK_THRESHOLD,
                    geometric: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask ``I'' > threshold`` combined with the bundle's validity."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    m = bundle.mask & (bundle.modulation > threshold)
    if geometric is not None:
        m = m & np.asarray(geometric, bool)
    return m


def normalize01(image, lo: float, hi: float) -> np.ndarray:
    """Affine map ``[lo, hi] -> [0, 1]`` with clamping."""
    if not hi > lo:
        raise ValueError("normalization needs hi > lo")
    return np.clip((np.asarray(image, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


def dataset_range(images) -> tuple[float, float]:
    """Global (min, max) over an iterable of images, for :func:`normalize01`."""
    lo, hi = np.inf, -np.inf
    for im in images:
        a = np.asarray(im, dtype=np.float64)
        lo = min(lo, float(a.min()))
        hi = max(hi, float(a.max()))
    if not np.isfinite(lo):
        raise ValueError("no images given")
    return lo, hi


def synthesize(phi0, average, modulation, steps: int) -> np.ndarray:
    """Ideal phase-shifted intensities ``I' + I'' cos(phi + delta_n)``; shape ``(N, ...)``."""
    delta = TWO_PI * np.arange(steps) / steps
    phi0 = np.asarray(phi0, dtype=np.float64)
    return (np.asarray(average)[None] + np.asarray(modulation)[None]
            * np.cos(phi0[None] + delta.reshape((-1,) + (1,) * phi0.ndim)))
