"""Virtual fringe-projection rig: ray-traced camera view of a lit surface.

Geometry is traced once per (rig, surface) into a :class:`SceneTrace`;
fringe images for any pitch/step are then cheap per-pixel evaluations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Rig, backproject_ray, pixel_grid, project
from .pattern import PatternSpec, make_schedule
from .raster import TWO_PI, Raster, round_half_away
from .surfaces import Surface

AVERAGE_INTENSITY = 100.0
MODULATION = 100.0
# relative slack when comparing projector-ray hit distance with the lit point
SHADOW_TOL = 1e-7


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    quantize: bool = False
    clamp: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass(frozen=True)
class SceneTrace:
    """Per camera pixel: world hit point, projector coordinates, lighting state."""

    points: np.ndarray      # (H, W, 3), NaN where the ray misses
    hit: np.ndarray         # camera ray meets the surface
    u_p: np.ndarray         # projector column (NaN on misses)
    v_p: np.ndarray
    lit: np.ndarray         # hit, inside the projector image, not self-shadowed
    in_bounds: np.ndarray   # hit and inside the projector image

    @property
    def mask(self) -> np.ndarray:
        return self.in_bounds

    @property
    def depth(self) -> np.ndarray:
        return np.where(self.hit, self.points[..., 2], 0.0)


def trace_scene(rig: Rig, surface: Surface) -> SceneTrace:
    cam, proj = rig.camera, rig.projector
    u, v = pixel_grid(cam)
    origin, d = backproject_ray(cam, u.ravel(), v.ravel())
    s = surface.intersect(origin, d)
    hit = np.isfinite(s)
    pts = np.full(d.shape, np.nan)
    pts[hit] = origin + s[hit, None] * d[hit]

    u_p = np.full(s.shape, np.nan)
    v_p = np.full(s.shape, np.nan)
    in_front = np.zeros(s.shape, bool)
    if hit.any():
        depth_p = proj.to_device(pts[hit])[:, 2]
        in_front[hit] = depth_p > 0
    idx = np.nonzero(in_front)[0]
    if idx.size:
        up, vp = project(proj, pts[idx])
        u_p[idx], v_p[idx] = up, vp
    in_bounds = in_front & (u_p >= 0) & (u_p < proj.width) & (v_p >= 0) & (v_p < proj.height)

    lit = in_bounds.copy()
    idx = np.nonzero(in_bounds)[0]
    if idx.size:
        c = proj.center
        to_pt = pts[idx] - c
        dist = np.linalg.norm(to_pt, axis=1)
        s_p = surface.intersect(c, to_pt / dist[:, None])
        lit[idx] = ~(s_p < dist * (1.0 - SHADOW_TOL))

    shape = (cam.height, cam.width)
    return SceneTrace(pts.reshape(shape + (3,)), hit.reshape(shape), u_p.reshape(shape),
                      v_p.reshape(shape), lit.reshape(shape), in_bounds.reshape(shape))


def _noise_rng(seed: int, pitch: float, step: int) -> np.random.Generator:
    # counter-based stream keyed by (seed, pitch, step): order-independent rendering
    key = np.random.SeedSequence([int(seed) & (2**64 - 1), int(round(pitch * 1000)), int(step)])
    return np.random.Generator(np.random.Philox(key))


def render_fringe(rig: Rig, surface: Surface | None, spec: PatternSpec, n: int,
                  noise: NoiseSpec = NoiseSpec(), trace: SceneTrace | None = None,
                  average: float = AVERAGE_INTENSITY, modulation: float = MODULATION):
    """Camera image of the ``n``-th (1-based) pattern; returns ``(image, mask)`` rasters.

    Pixels whose ray misses, or whose hit falls outside the projector image,
    are 0 with mask 0.  Self-shadowed pixels keep the ambient term only.
    """
    if not 1 <= n <= spec.steps:
        raise ValueError(f"step index {n} outside 1..{spec.steps}")
    if trace is None:
        trace = trace_scene(rig, surface)
    delta = make_schedule(spec.steps)[n - 1]
    m = trace.in_bounds
    phase = TWO_PI * np.where(m, trace.u_p, 0.0) / spec.pitch
    amp = np.where(trace.lit, modulation, 0.0)
    img = np.where(m, average + amp * np.cos(phase + delta), 0.0)
    if noise.sigma > 0:
        g = _noise_rng(noise.seed, spec.pitch, n).standard_normal(img.shape)
        img = np.where(m, img + noise.sigma * g, 0.0)
    if noise.clamp or noise.quantize:
        img = np.clip(img, 0.0, 255.0)
    if noise.quantize:
        img = round_half_away(img)
    return Raster(img, "intensity"), Raster(m.astype(np.float64), "mask")


def render_stack(rig: Rig, spec: PatternSpec, trace: SceneTrace,
                 noise: NoiseSpec = NoiseSpec()) -> list[np.ndarray]:
    """All ``spec.steps`` images as arrays."""
    return [render_fringe(rig, None, spec, n, noise, trace=trace)[0].data
            for n in range(1, spec.steps + 1)]


def render_groundtruth_phase(rig: Rig, surface: Surface | None, pitch: float,
                             trace: SceneTrace | None = None):
    """Continuous projector phase ``2*pi*u_p/pitch`` per camera pixel; ``(phase, mask)``."""
    if trace is None:
        trace = trace_scene(rig, surface)
    m = trace.in_bounds
    phase = np.where(m, TWO_PI * np.where(m, trace.u_p, 0.0) / pitch, 0.0)
    return Raster(phase, "unwrapped-phase"), Raster(m.astype(np.float64), "mask")
