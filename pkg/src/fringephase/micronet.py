"""Desk-scale two-branch fusion network in plain numpy, with manual backprop.

Each branch has a U-Net style encoder; the two bottlenecks are concatenated
(own channels first, then the other branch's) and fed to that branch's
decoder, which also receives its own encoder's skip features.  Outputs are
``(M, D)`` per branch: channel order ``M_h, D_h, M_l, D_l``.

Arrays are ``(batch, channels, height, width)`` float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

BRANCHES = ("h", "l")


@dataclass(frozen=True)
class MicroNetConfig:
    height: int = 32
    width: int = 32
    levels: int = 2
    base_channels: int = 8
    dropout: float = 0.0
    fusion: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("need at least one pooling level")
        if self.base_channels < 1 or self.height < 1 or self.width < 1:
            raise ValueError("sizes and channel counts must be positive")
        step = 2 ** self.levels
        if self.height % step or self.width % step:
            raise ValueError(f"input size must be divisible by {step}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level


# ---------------------------------------------------------------------------
# layer primitives (forward returns a cache consumed by backward)

def conv3x3(x, w, b):
    """Same-padded 3x3 convolution, stride 1.  ``w`` is ``(out, in, 3, 3)``."""
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((B, C, 9, H, W))
    for k in range(9):
        dy, dx = divmod(k, 3)
        cols[:, :, k] = xp[:, :, dy:dy + H, dx:dx + W]
    cols = cols.reshape(B, C * 9, H * W)
    out = np.matmul(w.reshape(w.shape[0], -1), cols) + b[None, :, None]
    return out.reshape(B, -1, H, W), cols


def conv3x3_backward(dout, cols, w, x_shape):
    B, C, H, W = x_shape
    O = w.shape[0]
    d = dout.reshape(B, O, H * W)
    dw = np.matmul(d, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = d.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(O, -1).T, d).reshape(B, C, 9, H, W)
    dxp = np.zeros((B, C, H + 2, W + 2))
    for k in range(9):
        dy, dx = divmod(k, 3)
        dxp[:, :, dy:dy + H, dx:dx + W] += dcols[:, :, k]
    return dxp[:, :, 1:-1, 1:-1], dw, db


def conv1x1(x, w, b):
    B, C, H, W = x.shape
    out = np.matmul(w, x.reshape(B, C, H * W)) + b[None, :, None]
    return out.reshape(B, -1, H, W)


def conv1x1_backward(dout, x, w):
    B, C, H, W = x.shape
    d = dout.reshape(B, w.shape[0], H * W)
    xf = x.reshape(B, C, H * W)
    dw = np.matmul(d, xf.transpose(0, 2, 1)).sum(axis=0)
    db = d.sum(axis=(0, 2))
    dx = np.matmul(w.T, d).reshape(x.shape)
    return dx, dw, db


def maxpool2(x):
    B, C, H, W = x.shape
    win = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(dout, arg, x_shape):
    B, C, H, W = x_shape
    win = np.zeros(dout.shape + (4,))
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    return win.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(x_shape)


def upconv2(x, w, b):
    """2x2 transposed convolution, stride 2.  ``w`` is ``(in, out, 2, 2)``."""
    B, C, H, W = x.shape
    O = w.shape[1]
    y = np.matmul(x.transpose(0, 2, 3, 1).reshape(B, H * W, C), w.reshape(C, O * 4))
    y = y.reshape(B, H, W, O, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(B, O, 2 * H, 2 * W)
    return y + b[None, :, None, None]


def upconv2_backward(dout, x, w):
    B, C, H, W = x.shape
    O = w.shape[1]
    d = dout.reshape(B, O, H, 2, W, 2).transpose(0, 2, 4, 1, 3, 5).reshape(B, H * W, O * 4)
    xf = x.transpose(0, 2, 3, 1).reshape(B, H * W, C)
    dw = np.matmul(xf.transpose(0, 2, 1), d).sum(axis=0).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dx = np.matmul(d, w.reshape(C, O * 4).T).reshape(B, H, W, C).transpose(0, 3, 1, 2)
    return dx, dw, db


# ---------------------------------------------------------------------------
# parameters

def _conv_shapes(cfg: MicroNetConfig):
    """Ordered ``(name, shape)`` list for every tensor of the network."""
    shapes = []
    c = cfg.channels
    L = cfg.levels
    for br in BRANCHES:
        c_in = 1
        for i in range(L + 1):
            for j, (a, o) in enumerate(((c_in, c(i)), (c(i), c(i)))):
                shapes += [(f"{br}.enc{i}.conv{j}.w", (o, a, 3, 3)), (f"{br}.enc{i}.conv{j}.b", (o,))]
            c_in = c(i)
        up_in = 2 * c(L)
        for i in range(L - 1, -1, -1):
            shapes += [(f"{br}.dec{i}.up.w", (up_in, c(i), 2, 2)), (f"{br}.dec{i}.up.b", (c(i),))]
            for j, (a, o) in enumerate(((2 * c(i), c(i)), (c(i), c(i)))):
                shapes += [(f"{br}.dec{i}.conv{j}.w", (o, a, 3, 3)), (f"{br}.dec{i}.conv{j}.b", (o,))]
            up_in = c(i)
        shapes += [(f"{br}.head.w", (2, c(0))), (f"{br}.head.b", (2,))]
    return shapes


def parameter_count(cfg: MicroNetConfig) -> int:
    """Closed form: per branch, 3x3 convs ``9ab + b``, up-convs ``4ab + b``, 1x1 head ``2c0 + 2``."""
    c = cfg.channels
    L = cfg.levels
    conv = lambda a, b: 9 * a * b + b  # noqa: E731
    up = lambda a, b: 4 * a * b + b  # noqa: E731
    enc = conv(1, c(0)) + conv(c(0), c(0))
    enc += sum(conv(c(i - 1), c(i)) + conv(c(i), c(i)) for i in range(1, L + 1))
    dec = sum(up(2 * c(L) if i == L - 1 else c(i + 1), c(i)) + conv(2 * c(i), c(i)) + conv(c(i), c(i))
              for i in range(L))
    head = 2 * c(0) + 2
    return 2 * (enc + dec + head)


def init_params(cfg: MicroNetConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Weights uniform in +-sqrt(6/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _conv_shapes(cfg):
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        if ".up." in name:
            fan_in = shape[0] * 4
        elif len(shape) == 4:
            fan_in = shape[1] * 9
        else:
            fan_in = shape[1]
        bound = np.sqrt(6.0 / fan_in)
        params[name] = rng.uniform(-bound, bound, shape)
    return params


def swap_branches(params: dict) -> dict:
    """Exchange the two branches' parameter sets."""
    out = {}
    for k, v in params.items():
        br, rest = k.split(".", 1)
        out[("l" if br == "h" else "h") + "." + rest] = v
    return out


# ---------------------------------------------------------------------------
# forward / backward

class MicroNet:
    def __init__(self, cfg: MicroNetConfig, params: dict | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = init_params(cfg, seed) if params is None else params
        expected = dict(_conv_shapes(cfg))
        if set(expected) != set(self.params):
            raise ValueError("parameter names do not match the configuration")
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise ValueError(f"parameter {k} has shape {self.params[k].shape}, expected {shape}")
        self._cache = None

    def forward(self, x_h, x_l, train: bool = False, rng: np.random.Generator | None = None):
        """Outputs ``(B, 4, H, W)`` for inputs ``(B, 1, H, W)`` or ``(H, W)``."""
        x_h, x_l = _as_batch(x_h), _as_batch(x_l)
        cfg, p, L = self.cfg, self.params, self.cfg.levels
        if x_h.shape != x_l.shape or x_h.shape[2:] != (cfg.height, cfg.width):
            raise ValueError(f"inputs must be {cfg.height}x{cfg.width}, got {x_h.shape} and {x_l.shape}")
        cache = {"enc": {}, "dec": {}}
        bottleneck, skips = {}, {}
        for br, x in zip(BRANCHES, (x_h, x_l)):
            steps = []
            skips[br] = []
            h = x
            for i in range(L + 1):
                if i > 0:
                    shape = h.shape
                    h, arg = maxpool2(h)
                    steps.append(("pool", arg, shape))
                for j in range(2):
                    pre, cols = conv3x3(h, p[f"{br}.enc{i}.conv{j}.w"], p[f"{br}.enc{i}.conv{j}.b"])
                    steps.append(("conv", f"{br}.enc{i}.conv{j}", cols, h.shape, pre))
                    h = np.maximum(pre, 0.0)
                if i < L:
                    skips[br].append(h)
            bottleneck[br] = h
            cache["enc"][br] = steps

        outs = []
        for br, other in (("h", "l"), ("l", "h")):
            keep = 1.0 if cfg.fusion else 0.0
            h = np.concatenate([bottleneck[br], keep * bottleneck[other]], axis=1)
            drop = None
            if train and cfg.dropout > 0:
                if rng is None:
                    raise ValueError("dropout in training needs an rng")
                drop = (rng.uniform(size=h.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
                h = h * drop
            steps = [("fuse", drop, keep)]
            for i in range(L - 1, -1, -1):
                steps.append(("up", f"{br}.dec{i}.up", h))
                h = upconv2(h, p[f"{br}.dec{i}.up.w"], p[f"{br}.dec{i}.up.b"])
                h = np.concatenate([h, skips[br][i]], axis=1)
                steps.append(("cat", i))
                for j in range(2):
                    pre, cols = conv3x3(h, p[f"{br}.dec{i}.conv{j}.w"], p[f"{br}.dec{i}.conv{j}.b"])
                    steps.append(("conv", f"{br}.dec{i}.conv{j}", cols, h.shape, pre))
                    h = np.maximum(pre, 0.0)
            steps.append(("head", h))
            outs.append(conv1x1(h, p[f"{br}.head.w"], p[f"{br}.head.b"]))
            cache["dec"][br] = steps
        self._cache = cache
        return np.concatenate(outs, axis=1)

    def backward(self, dout) -> dict[str, np.ndarray]:
        """Parameter gradients for upstream gradient ``dout`` of the last forward output."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        p, L = self.params, self.cfg.levels
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dout = np.asarray(dout, dtype=np.float64)
        d_bottleneck = {br: 0.0 for br in BRANCHES}
        d_skips = {br: [0.0] * L for br in BRANCHES}
        c_bot = self.cfg.channels(L)
        for k, (br, other) in enumerate((("h", "l"), ("l", "h"))):
            d = dout[:, 2 * k:2 * k + 2]
            for step in reversed(self._cache["dec"][br]):
                kind = step[0]
                if kind == "head":
                    d, dw, db = conv1x1_backward(d, step[1], p[f"{br}.head.w"])
                    grads[f"{br}.head.w"] += dw
                    grads[f"{br}.head.b"] += db
                elif kind == "conv":
                    _, name, cols, x_shape, pre = step
                    d = d * (pre > 0)
                    d, dw, db = conv3x3_backward(d, cols, p[name + ".w"], x_shape)
                    grads[name + ".w"] += dw
                    grads[name + ".b"] += db
                elif kind == "cat":
                    i = step[1]
                    n_up = self.cfg.channels(i)
                    d_skips[br][i] = d_skips[br][i] + d[:, n_up:]
                    d = d[:, :n_up]
                elif kind == "up":
                    _, name, x_in = step
                    d, dw, db = upconv2_backward(d, x_in, p[name + ".w"])
                    grads[name + ".w"] += dw
                    grads[name + ".b"] += db
                elif kind == "fuse":
                    _, drop, keep = step
                    if drop is not None:
                        d = d * drop
                    d_bottleneck[br] = d_bottleneck[br] + d[:, :c_bot]
                    d_bottleneck[other] = d_bottleneck[other] + keep * d[:, c_bot:]
        for br in BRANCHES:
            d = d_bottleneck[br]
            skip_level = L
            for step in reversed(self._cache["enc"][br]):
                kind = step[0]
                if kind == "conv":
                    _, name, cols, x_shape, pre = step
                    d = d * (pre > 0)
                    d, dw, db = conv3x3_backward(d, cols, p[name + ".w"], x_shape)
                    grads[name + ".w"] += dw
                    grads[name + ".b"] += db
                elif kind == "pool":
                    _, arg, shape = step
                    d = maxpool2_backward(d, arg, shape)
                    skip_level -= 1
                    d = d + d_skips[br][skip_level]
        return grads


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        x = x[:, None]
    return x


# ---------------------------------------------------------------------------
# parameter file: "FPW1 <count>\n", one "name d0 d1 ...\n" line per tensor, then the
# little-endian float64 payloads concatenated in header order

def save_params(params: dict, path) -> None:
    names = sorted(params)
    lines = [f"FPW1 {len(names)}"]
    lines += [" ".join([n] + [str(s) for s in params[n].shape]) for n in names]
    payload = b"".join(np.ascontiguousarray(params[n], dtype="<f8").tobytes() for n in names)
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii") + payload)


def load_params(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    pos = blob.index(b"\n")
    head = blob[:pos].decode("ascii").split()
    if len(head) != 2 or head[0] != "FPW1":
        raise ValueError("not a parameter file")
    count = int(head[1])
    specs = []
    for _ in range(count):
        end = blob.index(b"\n", pos + 1)
        parts = blob[pos + 1:end].decode("ascii").split()
        specs.append((parts[0], tuple(int(s) for s in parts[1:])))
        pos = end
    pos += 1
    params = {}
    for name, shape in specs:
        n = int(np.prod(shape)) * 8
        if pos + n > len(blob):
            raise ValueError("truncated parameter file")
        params[name] = np.frombuffer(blob[pos:pos + n], dtype="<f8").reshape(shape).astype(np.float64)
        pos += n
    if pos != len(blob):
        raise ValueError("trailing bytes in parameter file")
    return params
