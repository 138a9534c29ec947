"""Training losses for the two-branch fringe-to-phase model, with analytic gradients.

Every loss returns ``(value, grads)``.  Reductions are means over valid
pixels (phase loss) or over valid neighbour pairs, taken separately along
u and v and then summed (consistency and geometric losses).

The predicted absolute phase is ``phi + 2 pi K`` where the fringe order
``K`` comes from rounding/ceiling and is treated as a constant
(stop-gradient), so its gradient flows only into the predicted wrapped
phase ``phi = -atan2(M_h, D_h)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .raster import TWO_PI, wrap
from .refine import HIGH_PITCH, REF_PITCH, two_phase_unwrap_arrays

OUTPUTS = ("M_h", "D_h", "M_l", "D_l")


@dataclass(frozen=True)
class LossWeights:
    phase: float = 1.0
    consist: float = 1e-2
    geo: float = 1e-6

    def __post_init__(self):
        if min(self.phase, self.consist, self.geo) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class PredictionSet:
    M_h: np.ndarray
    D_h: np.ndarray
    M_l: np.ndarray
    D_l: np.ndarray
    phi: np.ndarray      # -atan2(M_h, D_h)
    Phi: np.ndarray      # phi + 2 pi K
    K: np.ndarray        # fringe order, held constant for gradients


@dataclass(frozen=True)
class LossTarget:
    M_h: np.ndarray
    D_h: np.ndarray
    M_l: np.ndarray
    D_l: np.ndarray
    Phi: np.ndarray
    mask: np.ndarray


def make_prediction(M_h, D_h, M_l, D_l, Phi_min=None, mask=None, K=None,
                    pitch_h: float = HIGH_PITCH, pitch_ref: float = REF_PITCH) -> PredictionSet:
    """Assemble predictions; ``K`` is computed by two-phase unwrapping unless given."""
    M_h, D_h, M_l, D_l = (np.asarray(a, dtype=np.float64) for a in (M_h, D_h, M_l, D_l))
    phi = -np.arctan2(M_h, D_h)
    if K is None:
        if Phi_min is None:
            raise ValueError("need Phi_min (or explicit K) to unwrap predictions")
        m = np.ones(phi.shape, bool) if mask is None else np.asarray(mask, bool)
        K = two_phase_unwrap_arrays(phi, -np.arctan2(M_l, D_l), Phi_min, m,
                                    pitch_h, pitch_ref).order
    K = np.asarray(K, dtype=np.float64)
    return PredictionSet(M_h, D_h, M_l, D_l, phi, phi + TWO_PI * K, K)


def _count(mask) -> int:
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise ValueError("empty mask")
    return n


def phase_loss(pred: PredictionSet, target: LossTarget):
    """Mean over valid pixels of the squared errors of M/D (both branches) and Phi.

    Gradients are keyed ``M_h, D_h, M_l, D_l, Phi``.
    """
    m = np.asarray(target.mask, bool)
    n = _count(m)
    value = 0.0
    grads = {}
    for key in OUTPUTS + ("Phi",):
        r = np.where(m, getattr(pred, key) - getattr(target, key), 0.0)
        value += float(np.sum(r * r))
        grads[key] = 2.0 * r / n
    return value / n, grads


def _pairs(mask):
    m = np.asarray(mask, bool)
    return m[:, 1:] & m[:, :-1], m[1:, :] & m[:-1, :]


def _check_size(a):
    if a.ndim != 2 or min(a.shape) < 2:
        raise ValueError("losses on neighbour differences need rasters of at least 2x2")


def consistency_loss(phi_pred, Phi_target, mask):
    """Squared mismatch of forward differences of predicted wrapped and target phase.

    Neighbour pairs across which the target's own wrapped phase jumps by
    2 pi are left out.  Returns ``(value, d value / d phi_pred)``.
    """
    phi = np.asarray(phi_pred, dtype=np.float64)
    Phi = np.asarray(Phi_target, dtype=np.float64)
    _check_size(phi)
    m = np.asarray(mask, bool)
    order = np.round((Phi - wrap(Phi)) / TWO_PI)
    ph, pv = _pairs(m)
    ph &= order[:, 1:] == order[:, :-1]
    pv &= order[1:, :] == order[:-1, :]
    grad = np.zeros_like(phi)
    value = 0.0
    rh = np.where(ph, (phi[:, 1:] - phi[:, :-1]) - (Phi[:, 1:] - Phi[:, :-1]), 0.0)
    rv = np.where(pv, (phi[1:, :] - phi[:-1, :]) - (Phi[1:, :] - Phi[:-1, :]), 0.0)
    for r, count, axis in ((rh, ph.sum(), 1), (rv, pv.sum(), 0)):
        if count == 0:
            continue
        value += float(np.sum(r * r)) / count
        g = 2.0 * r / count
        if axis == 1:
            grad[:, 1:] += g
            grad[:, :-1] -= g
        else:
            grad[1:, :] += g
            grad[:-1, :] -= g
    return value, grad


def geometric_loss(Phi_pred, mask):
    """Mean squared neighbour difference of the predicted absolute phase (per direction)."""
    Phi = np.asarray(Phi_pred, dtype=np.float64)
    _check_size(Phi)
    ph, pv = _pairs(mask)
    grad = np.zeros_like(Phi)
    value = 0.0
    rh = np.where(ph, Phi[:, :-1] - Phi[:, 1:], 0.0)
    rv = np.where(pv, Phi[:-1, :] - Phi[1:, :], 0.0)
    for r, count, axis in ((rh, ph.sum(), 1), (rv, pv.sum(), 0)):
        if count == 0:
            continue
        value += float(np.sum(r * r)) / count
        g = 2.0 * r / count
        if axis == 1:
            grad[:, :-1] += g
            grad[:, 1:] -= g
        else:
            grad[:-1, :] += g
            grad[1:, :] -= g
    return value, grad


@dataclass(frozen=True)
class TotalLoss:
    value: float
    terms: dict
    grads: dict     # w.r.t. M_h, D_h, M_l, D_l


def total_loss(pred: PredictionSet, target: LossTarget,
               weights: LossWeights = LossWeights()) -> TotalLoss:
    """Weighted sum of the three losses, gradients chained to the four outputs."""
    lp, gp = phase_loss(pred, target)
    lc, gc = consistency_loss(pred.phi, target.Phi, target.mask)
    lg, gg = geometric_loss(pred.Phi, target.mask)
    value = weights.phase * lp + weights.consist * lc + weights.geo * lg
    # d/dphi: Phi = phi + 2 pi K with K constant
    g_phi = weights.phase * gp["Phi"] + weights.consist * gc + weights.geo * gg
    r2 = pred.M_h ** 2 + pred.D_h ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        dphi_dM = np.where(r2 > 0, -pred.D_h / r2, 0.0)
        dphi_dD = np.where(r2 > 0, pred.M_h / r2, 0.0)
    grads = {k: weights.phase * gp[k] for k in OUTPUTS}
    grads["M_h"] = grads["M_h"] + g_phi * dphi_dM
    grads["D_h"] = grads["D_h"] + g_phi * dphi_dD
    return TotalLoss(value, {"phase": lp, "consist": lc, "geo": lg}, grads)


# ---------------------------------------------------------------------------
# finite-difference checks

def central_difference(f, x: np.ndarray, h: float = 1e-5, indices=None) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (all or selected flat indices)."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    g = np.zeros(flat.size)
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g.reshape(x.shape)


def relative_error(analytic, numeric, scale_floor: float = 1e-3) -> float:
    """Max entrywise ``|a - n| / max(|a|, |n|, scale_floor * max|a|)``.

    The floor keeps entries far below the tensor's scale from being judged
    on finite-difference round-off alone.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    floor = max(scale_floor * float(np.max(np.abs(a), initial=0.0)), 1e-300)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def _random_case(rng, size):
    """Random predictions near unwrap-consistent targets on a ``size x size`` raster."""
    u = np.arange(size)[None, :] + np.zeros((size, 1))
    Phi = 0.35 * u + 0.2 * np.arange(size)[:, None] + rng.uniform(0, 0.3, (size, size)) + 3.0
    phi_t = wrap(Phi)
    phi_l = rng.uniform(-np.pi, np.pi, (size, size))
    tgt = LossTarget(-np.sin(phi_t), np.cos(phi_t), -np.sin(phi_l), np.cos(phi_l), Phi,
                     rng.uniform(size=(size, size)) > 0.15)
    phi_p = phi_t + rng.normal(0, 0.05, (size, size))
    amp = rng.uniform(0.8, 1.2, (size, size))
    outs = {"M_h": -amp * np.sin(phi_p), "D_h": amp * np.cos(phi_p),
            "M_l": tgt.M_l + rng.normal(0, 0.1, (size, size)),
            "D_l": tgt.D_l + rng.normal(0, 0.1, (size, size))}
    K = np.round((Phi - phi_t) / TWO_PI)
    return outs, tgt, K


def gradcheck(loss: str, size: int = 8, trials: int = 10, seed: int = 0, h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``phase`` perturbs the prediction fields independently (``Phi`` included);
    ``total`` perturbs the four network outputs with fringe orders frozen.
    """
    if loss not in ("phase", "consist", "geo", "total"):
        raise ValueError(f"unknown loss {loss!r}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        outs, tgt, K = _random_case(rng, size)
        pred = make_prediction(**outs, K=K)
        if loss == "phase":
            _, grads = phase_loss(pred, tgt)
            for key in OUTPUTS + ("Phi",):
                f = lambda x, key=key: phase_loss(replace(pred, **{key: x}), tgt)[0]
                num = central_difference(f, getattr(pred, key), h)
                worst = max(worst, relative_error(grads[key], num))
        elif loss == "total":
            grads = total_loss(pred, tgt).grads
            for key in OUTPUTS:
                f = lambda x, key=key: total_loss(
                    make_prediction(**dict(outs, **{key: x}), K=K), tgt).value
                worst = max(worst, relative_error(grads[key], central_difference(f, outs[key], h)))
        elif loss == "consist":
            _, g = consistency_loss(pred.phi, tgt.Phi, tgt.mask)
            num = central_difference(lambda y: consistency_loss(y, tgt.Phi, tgt.mask)[0], pred.phi, h)
            worst = max(worst, relative_error(g, num))
        else:
            x = tgt.Phi + rng.normal(0, 0.1, tgt.Phi.shape)
            _, g = geometric_loss(x, tgt.mask)
            num = central_difference(lambda y: geometric_loss(y, tgt.mask)[0], x, h)
            worst = max(worst, relative_error(g, num))
    return worst
