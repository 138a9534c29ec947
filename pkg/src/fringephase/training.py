"""Patch datasets, AdamW with plateau halving, and the training loop for MicroNet."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .losses import LossTarget, LossWeights, make_prediction, total_loss
from .micronet import MicroNet, MicroNetConfig
from .raster import wrap

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when the training loss turns non-finite; carries the trace so far."""

    def __init__(self, step, trace):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
        self.trace = trace


@dataclass(frozen=True)
class Patch:
    """One training tuple.  Fringes are normalized to [0, 1]."""
    fringe_h: np.ndarray
    fringe_l: np.ndarray
    M_h: np.ndarray
    D_h: np.ndarray
    M_r: np.ndarray
    D_r: np.ndarray
    Phi: np.ndarray       # absolute high-pitch phase
    Phi_min: np.ndarray   # geometric minimum phase at the reference pitch
    mask: np.ndarray

    def target(self) -> LossTarget:
        return LossTarget(self.M_h, self.D_h, self.M_r, self.D_r, self.Phi, self.mask)

    def crop(self, top: int, left: int, size: int) -> "Patch":
        s = (slice(top, top + size), slice(left, left + size))
        return Patch(*(np.asarray(getattr(self, f))[s] for f in self.__dataclass_fields__))


@dataclass
class AdamW:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p = params[k]
            if k.endswith(".w"):
                p -= self.lr * self.weight_decay * p
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class Plateau:
    """Halve the learning rate after ``patience`` evaluations without improvement."""
    patience: int = 20
    factor: float = 0.5
    min_lr: float = 1e-6
    best: float = np.inf
    stale: int = 0

    def update(self, loss: float, opt: AdamW) -> None:
        if loss < self.best:
            self.best = loss
            self.stale = 0
            return
        self.stale += 1
        if self.stale >= self.patience:
            opt.lr = max(opt.lr * self.factor, self.min_lr)
            self.stale = 0


@dataclass
class TrainResult:
    net: MicroNet
    trace: list           # total loss per step, evaluated before that step's update
    lr_trace: list


def batch_loss(net: MicroNet, patches, weights: LossWeights = LossWeights(),
               train: bool = False, rng=None):
    """Mean total loss over ``patches`` and its gradient w.r.t. the net outputs."""
    xh = np.stack([p.fringe_h for p in patches])[:, None]
    xl = np.stack([p.fringe_l for p in patches])[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        out = net.forward(xh, xl, train=train, rng=rng)
    dout = np.zeros_like(out)
    if not np.all(np.isfinite(out)):
        # overflowed network: no meaningful phase to unwrap
        return np.nan, dout, out
    value = 0.0
    for b, p in enumerate(patches):
        pred = make_prediction(*out[b], Phi_min=p.Phi_min, mask=p.mask)
        res = total_loss(pred, p.target(), weights)
        value += res.value
        for c, key in enumerate(("M_h", "D_h", "M_l", "D_l")):
            dout[b, c] = res.grads[key]
    n = len(patches)
    return value / n, dout / n, out


def train(cfg: MicroNetConfig, patches, weights: LossWeights = LossWeights(), steps: int = 1000,
          lr: float = 1e-3, seed: int = 0, batch_size: int = 8, patience: int = 20,
          eval_every: int = 25, weight_decay: float = 1e-5, net: MicroNet | None = None,
          callback=None) -> TrainResult:
    """Minibatch training; deterministic for a given seed.

    Batches are drawn without replacement per epoch from ``patches``.  Every
    ``eval_every`` steps the mean loss of that window feeds the plateau schedule.
    """
    patches = list(patches)
    if not patches:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    net = MicroNet(cfg, seed=seed) if net is None else net
    opt = AdamW(lr=lr, weight_decay=weight_decay)
    sched = Plateau(patience=patience)
    trace, lr_trace = [], []
    order = np.array([], dtype=int)
    for step in range(steps):
        if len(order) < min(batch_size, len(patches)):
            order = np.concatenate([order, rng.permutation(len(patches))])
        idx, order = order[:batch_size], order[batch_size:]
        value, dout, _ = batch_loss(net, [patches[i] for i in idx], weights,
                                    train=True, rng=rng)
        if not np.isfinite(value):
            raise DivergenceError(step, trace)
        trace.append(value)
        lr_trace.append(opt.lr)
        opt.step(net.params, net.backward(dout))
        if (step + 1) % eval_every == 0:
            sched.update(float(np.mean(trace[-eval_every:])), opt)
        if callback is not None and callback(step, value, net):
            break
    return TrainResult(net, trace, lr_trace)


def predict(net: MicroNet, fringe_h, fringe_l) -> np.ndarray:
    """``(4, H, W)`` outputs for one pair of normalized fringe images."""
    return net.forward(fringe_h, fringe_l)[0]


def wrapped_phase_mae(net: MicroNet, patch: Patch) -> float:
    """Masked mean |wrap(-atan2(M, D) - phi_h)| of the high branch, in radians."""
    out = predict(net, patch.fringe_h, patch.fringe_l)
    phi = -np.arctan2(out[0], out[1])
    phi_t = -np.arctan2(patch.M_h, patch.D_h)
    m = np.asarray(patch.mask, bool)
    return float(np.mean(np.abs(wrap(phi - phi_t))[m]))


def random_patch(rng, size: int = 16) -> Patch:
    """Synthetic tilted-ramp patch with self-consistent targets, for gradient checks."""
    v, u = np.mgrid[0:size, 0:size].astype(np.float64)
    Phi = rng.uniform(100, 200) + rng.uniform(0.3, 0.6) * u + rng.uniform(-0.1, 0.1) * v
    Phi_r = Phi * 15.0 / 304.0
    phi_r = wrap(Phi_r)
    Phi_min = Phi_r - rng.uniform(0.1, 1.0)
    phi_h = wrap(Phi)
    return Patch((100 + 100 * np.cos(phi_h)) / 255, (100 + 100 * np.cos(phi_r)) / 255,
                 -np.sin(phi_h), np.cos(phi_h), -np.sin(phi_r), np.cos(phi_r), Phi, Phi_min,
                 rng.uniform(size=(size, size)) > 0.1)


def _kink_signature(net: MicroNet) -> bytes:
    """Rectifier on/off states and pooling winners of the last forward pass."""
    parts = []
    for steps in list(net._cache["enc"].values()) + list(net._cache["dec"].values()):
        for st in steps:
            if st[0] == "conv":
                parts.append(np.packbits(st[4] > 0).tobytes())
            elif st[0] == "pool":
                parts.append(st[1].astype(np.int8).tobytes())
    return b"".join(parts)


def model_gradcheck(seed: int = 0, size: int = 16, samples: int = 10, h: float = 1e-4,
                    weights: LossWeights = LossWeights(), max_draws: int = 1000) -> float:
    """Worst relative error of ``samples`` random parameter gradients of forward + total loss.

    Fringe orders are frozen at their unperturbed values (stop-gradient).  A
    draw is used only where the loss is smooth over ``[-h, h]``: no rectifier
    or pooling switch and no predicted phase crossing the branch cut.
    """
    from .losses import relative_error

    rng = np.random.default_rng(seed)
    cfg = MicroNetConfig(size, size, levels=int(rng.integers(1, 3)),
                         base_channels=int(rng.integers(2, 5)))
    net = MicroNet(cfg, seed=seed)
    patch = random_patch(rng, size)
    out = net.forward(patch.fringe_h, patch.fringe_l)[0]
    K = make_prediction(*out, Phi_min=patch.Phi_min, mask=patch.mask).K

    def evaluate():
        o = net.forward(patch.fringe_h, patch.fringe_l)
        res = total_loss(make_prediction(*o[0], K=K), patch.target(), weights)
        g = np.stack([res.grads[k] for k in ("M_h", "D_h", "M_l", "D_l")])[None]
        return res.value, g, -np.arctan2(o[0, 0], o[0, 1]), _kink_signature(net)

    _, dout, phi0, sig0 = evaluate()
    grads = net.backward(dout)
    names = sorted(net.params)
    analytic, numeric = [], []
    for _ in range(max_draws):
        if len(analytic) == samples:
            break
        name = names[rng.integers(len(names))]
        flat = net.params[name].reshape(-1)
        i = int(rng.integers(flat.size))
        old = flat[i]
        flat[i] = old + h
        fp, _, phi_p, sig_p = evaluate()
        flat[i] = old - h
        fm, _, phi_m, sig_m = evaluate()
        flat[i] = old
        if sig_p != sig0 or sig_m != sig0 or np.max(np.abs(phi_p - phi_m)) > np.pi / 2:
            continue
        analytic.append(grads[name].reshape(-1)[i])
        numeric.append((fp - fm) / (2 * h))
    if len(analytic) < samples:
        raise RuntimeError("too few smooth parameter draws")
    return relative_error(np.array(analytic), np.array(numeric))
