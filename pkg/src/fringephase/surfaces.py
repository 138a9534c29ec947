"""Analytic scene surfaces and vectorized ray intersection.

``intersect`` takes a ray origin (3,) or (n, 3) and unit directions (n, 3)
and returns the distance ``s`` of the nearest hit with ``s > s_min``, or
``inf`` for a miss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import euler_xyz

S_MIN = 1e-9
# height-field marching: half the grid spacing, then bisection
BISECTION_ITERS = 40


class Surface:
    def intersect(self, origin, direction) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _broadcast(origin, direction):
    d = np.atleast_2d(np.asarray(direction, dtype=np.float64))
    o = np.broadcast_to(np.asarray(origin, dtype=np.float64), d.shape)
    return o, d


@dataclass(frozen=True)
class Plane(Surface):
    """The plane ``z = z0`` (world frame), two-sided."""

    z0: float

    def intersect(self, origin, direction):
        o, d = _broadcast(origin, direction)
        dz = d[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (self.z0 - o[:, 2]) / dz
        return np.where((np.abs(dz) > 1e-15) & (s > S_MIN), s, np.inf)

    def to_dict(self):
        return {"type": "plane", "z0": self.z0}


@dataclass(frozen=True)
class Sphere(Surface):
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def intersect(self, origin, direction):
        o, d = _broadcast(origin, direction)
        oc = o - np.asarray(self.center)
        b = np.einsum("ij,ij->i", oc, d)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - c
        # a grazing ray (|disc| below rounding) counts as a single hit
        disc = np.where(np.abs(disc) < 1e-15 * max(1.0, self.radius ** 2), 0.0, disc)
        root = np.sqrt(np.maximum(disc, 0.0))
        s1 = -b - root
        s2 = -b + root
        s = np.where(s1 > S_MIN, s1, np.where(s2 > S_MIN, s2, np.inf))
        return np.where(disc >= 0, s, np.inf)

    def to_dict(self):
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class HeightField(Surface):
    """Bilinear height field ``z = z0 + h(x, y)`` over a rectangle.

    ``heights`` has shape ``(ny, nx)`` sampled on a regular grid spanning
    ``x_range`` x ``y_range``; outside the rectangle rays miss.
    """

    heights: np.ndarray
    x_range: tuple
    y_range: tuple
    z0: float

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        if h.ndim != 2 or min(h.shape) < 2:
            raise ValueError("height grid must be 2-D with at least 2x2 samples")
        if not np.all(np.isfinite(h)):
            raise ValueError("height grid must be finite")
        h = h.copy()
        h.flags.writeable = False
        object.__setattr__(self, "heights", h)

    @property
    def spacing(self) -> float:
        ny, nx = self.heights.shape
        return min((self.x_range[1] - self.x_range[0]) / (nx - 1),
                   (self.y_range[1] - self.y_range[0]) / (ny - 1))

    def height_at(self, x, y):
        """Bilinear surface height; NaN outside the grid rectangle."""
        ny, nx = self.heights.shape
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        gx = (np.asarray(x) - x0) / (x1 - x0) * (nx - 1)
        gy = (np.asarray(y) - y0) / (y1 - y0) * (ny - 1)
        tol = 1e-6
        inside = (gx >= -tol) & (gx <= nx - 1 + tol) & (gy >= -tol) & (gy <= ny - 1 + tol)
        gx = np.clip(np.nan_to_num(gx), 0, nx - 1)
        gy = np.clip(np.nan_to_num(gy), 0, ny - 1)
        ix = np.minimum(np.floor(gx).astype(int), nx - 2)
        iy = np.minimum(np.floor(gy).astype(int), ny - 2)
        fx = gx - ix
        fy = gy - iy
        h = self.heights
        z = ((1 - fx) * (1 - fy) * h[iy, ix] + fx * (1 - fy) * h[iy, ix + 1]
             + (1 - fx) * fy * h[iy + 1, ix] + fx * fy * h[iy + 1, ix + 1])
        return np.where(inside, self.z0 + z, np.nan)

    def _box_span(self, o, d):
        lo = np.array([self.x_range[0], self.y_range[0], self.z0 + self.heights.min()])
        hi = np.array([self.x_range[1], self.y_range[1], self.z0 + self.heights.max()])
        pad = 1e-9
        lo, hi = lo - pad, hi + pad
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t0 = (lo - o) * inv
            t1 = (hi - o) * inv
        tmin = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
        tmax = np.where(np.isnan(t0), np.inf, np.maximum(t0, t1))
        # rays parallel to a slab and outside it never enter
        par = (d == 0) & ((o < lo) | (o > hi))
        tmax = np.where(par, -np.inf, tmax)
        return np.maximum(tmin.max(axis=1), S_MIN), tmax.min(axis=1)

    def _signed_gap(self, o, d, s):
        p = o + s[:, None] * d
        return p[:, 2] - self.height_at(p[:, 0], p[:, 1])

    def intersect(self, origin, direction):
        o, d = _broadcast(origin, direction)
        n = d.shape[0]
        s_enter, s_exit = self._box_span(o, d)
        result = np.full(n, np.inf)
        active = np.nonzero(s_enter < s_exit)[0]
        if active.size == 0:
            return result
        step = 0.5 * self.spacing
        o_a, d_a = o[active], d[active]
        s_prev = s_enter[active].copy()
        s_end = s_exit[active]
        g_prev = self._signed_gap(o_a, d_a, s_prev)
        found = np.zeros(active.size, bool)
        lo = np.zeros(active.size)
        hi = np.zeros(active.size)
        todo = np.arange(active.size)
        while todo.size:
            s_next = np.minimum(s_prev[todo] + step, s_end[todo])
            g_next = self._signed_gap(o_a[todo], d_a[todo], s_next)
            gp = g_prev[todo]
            hit = np.isfinite(gp) & np.isfinite(g_next) & ((gp == 0) | (np.sign(gp) != np.sign(g_next)))
            idx = todo[hit]
            found[idx] = True
            lo[idx] = s_prev[idx]
            hi[idx] = s_next[hit]
            s_prev[todo] = s_next
            g_prev[todo] = g_next
            todo = todo[~hit & (s_next < s_end[todo])]
        idx = np.nonzero(found)[0]
        if idx.size:
            a, b = lo[idx], hi[idx]
            oo, dd = o_a[idx], d_a[idx]
            ga = self._signed_gap(oo, dd, a)
            for _ in range(BISECTION_ITERS):
                m = 0.5 * (a + b)
                gm = self._signed_gap(oo, dd, m)
                left = (np.sign(gm) == np.sign(ga)) & (ga != 0)
                a = np.where(left, m, a)
                ga = np.where(left, gm, ga)
                b = np.where(left, b, m)
            result[active[idx]] = np.where(ga == 0, a, 0.5 * (a + b))
        return result

    def to_dict(self):
        return {"type": "heightfield", "heights": self.heights.tolist(),
                "x_range": list(self.x_range), "y_range": list(self.y_range), "z0": self.z0}


@dataclass(frozen=True)
class Posed(Surface):
    """A surface rotated about ``pivot`` by CG-style Euler angles (degrees)."""

    base: Surface
    angles_deg: tuple = (0.0, 0.0, 0.0)
    pivot: tuple = (0.0, 0.0, 0.0)
    _R: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_R", euler_xyz(self.angles_deg))

    def intersect(self, origin, direction):
        o, d = _broadcast(origin, direction)
        c = np.asarray(self.pivot, dtype=np.float64)
        # world -> local is R^T; rows are vectors so multiply by R
        o_l = (o - c) @ self._R + c
        d_l = d @ self._R
        return self.base.intersect(o_l, d_l)

    def to_dict(self):
        return {"type": "posed", "base": self.base.to_dict(),
                "angles_deg": list(self.angles_deg), "pivot": list(self.pivot)}


@dataclass(frozen=True)
class Union(Surface):
    parts: tuple

    def intersect(self, origin, direction):
        return np.min(np.stack([p.intersect(origin, direction) for p in self.parts]), axis=0)

    def to_dict(self):
        return {"type": "union", "parts": [p.to_dict() for p in self.parts]}


def surface_from_dict(d: dict) -> Surface:
    kind = d["type"]
    if kind == "plane":
        return Plane(float(d["z0"]))
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    if kind == "heightfield":
        return HeightField(np.asarray(d["heights"], dtype=np.float64),
                           tuple(d["x_range"]), tuple(d["y_range"]), float(d["z0"]))
    if kind == "posed":
        return Posed(surface_from_dict(d["base"]), tuple(d.get("angles_deg", (0, 0, 0))),
                     tuple(d.get("pivot", (0, 0, 0))))
    if kind == "union":
        return Union(tuple(surface_from_dict(p) for p in d["parts"]))
    raise ValueError(f"unknown surface type {kind!r}")


def random_heightfield(seed: int, z0: float = 0.7, half_width: float = 0.16,
                       amplitude: float = 0.04, n: int = 65, bumps: int = 6) -> HeightField:
    """Smooth procedural height field: a sum of seeded Gaussian bumps."""
    rng = np.random.default_rng(seed)
    x = np.linspace(-half_width, half_width, n)
    X, Y = np.meshgrid(x, x)
    H = np.zeros_like(X)
    for _ in range(bumps):
        cx, cy = rng.uniform(-0.7 * half_width, 0.7 * half_width, 2)
        w = rng.uniform(0.15, 0.4) * half_width
        a = rng.uniform(-1.0, 1.0) * amplitude
        H += a * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2 * w * w))
    return HeightField(H, (-half_width, half_width), (-half_width, half_width), z0)
