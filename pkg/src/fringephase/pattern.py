"""Computer-side fringe patterns and phase-shift schedules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import TWO_PI, Raster

# projector pitches used throughout: ground-truth ladder plus the z-min reference
PITCHES = (15.0, 114.0, 304.0, 912.0)
PROJECTOR_SIZE = (912, 1140)


@dataclass(frozen=True)
class PatternSpec:
    """Vertical-stripe fringe pattern: phase varies along the projector column."""

    pitch: float
    steps: int
    width: int = PROJECTOR_SIZE[0]
    height: int = PROJECTOR_SIZE[1]

    def __post_init__(self):
        if not self.pitch > 0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.steps < 3:
            raise ValueError(f"need at least 3 phase steps, got {self.steps}")
        if self.width < 1 or self.height < 1:
            raise ValueError("projector resolution must be positive")

    @property
    def frequency(self) -> float:
        """Number of fringe periods across the projector width."""
        return self.width / self.pitch

    @property
    def deltas(self) -> np.ndarray:
        return make_schedule(self.steps)


def make_schedule(steps: int) -> np.ndarray:
    """Phase shifts ``2*pi*(n-1)/N`` for ``n = 1..N``."""
    if steps < 3:
        raise ValueError(f"need at least 3 phase steps, got {steps}")
    return TWO_PI * np.arange(steps) / steps


def projector_phase(spec: PatternSpec, u_p):
    """Continuous (unwrapped) projector phase ``2*pi*u_p/pitch``.

    ``u_p`` is a continuous column coordinate; the image spans ``[0, W]``.
    """
    u = np.asarray(u_p, dtype=np.float64)
    if not np.all(np.isfinite(u)) or np.any(u < 0) or np.any(u > spec.width):
        raise ValueError(f"projector column outside [0, {spec.width}]")
    phase = TWO_PI * u / spec.pitch
    return float(phase) if phase.ndim == 0 else phase


def generate_pattern(spec: PatternSpec, n: int) -> Raster:
    """The ``n``-th (1-based) pattern image, values on the 0..255 scale."""
    if not 1 <= n <= spec.steps:
        raise ValueError(f"step index {n} outside 1..{spec.steps}")
    delta = make_schedule(spec.steps)[n - 1]
    u = np.arange(spec.width, dtype=np.float64)
    row = 127.5 * (1.0 + np.cos(TWO_PI * u / spec.pitch + delta))
    return Raster(np.broadcast_to(row, (spec.height, spec.width)), "intensity")
