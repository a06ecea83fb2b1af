"""Patch-correction MLP in numpy: forward, backprop, AdamW training, serialization.

Hidden layer i computes ``h_i = tanh(LN(W_i h_{i-1} + b_i))`` and adds
``h_{i-1}`` when i >= 2 (widths match). The output layer is affine.
Inputs are standardized per feature; targets by one scalar.
"""

import copy
import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CorrectionNet", "TrainConfig", "TrainLog", "init_net", "forward",
           "predict", "loss", "loss_and_grad", "train", "one_cycle_lr",
           "save_weights", "load_weights", "WeightsError", "LAYOUT_ID", "LN_EPS"]

LN_EPS = 1e-5
LAYOUT_ID = 1        # [velocity | residual | geometry], nodes lexicographic, components interleaved
_MAGIC = b"NNWT"
_VERSION = 1


class WeightsError(ValueError):
    """Malformed or incompatible weights file."""


@dataclass
class CorrectionNet:
    layers: int
    width: int
    N_in: int
    N_out: int
    params: list                     # [W, b, gamma, beta] per hidden layer, then [W, b]
    in_mean: np.ndarray
    in_std: np.ndarray
    out_std: float = 1.0
    N_M: int = -1
    S: int = -1
    layout_id: int = LAYOUT_ID

    def flat_params(self):
        return [p for group in self.params for p in group]

    def is_zero(self):
        W, b = self.params[-1]
        return not (np.any(W) or np.any(b))


@dataclass
class TrainConfig:
    lr_base: float = 1e-4
    batch_size: int = 64
    epochs: int = 40
    weight_decay: float = 1e-3
    warmup_frac: float = 0.1
    div_factor: float = 25.0
    final_div: float = 1e4
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    val_frac: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    initial_train_loss: float = float("nan")
    best_epoch: int = -1


def init_net(N_in, N_out, layers, width, rng=None, in_mean=None, in_std=None,
             out_std=1.0, N_M=-1, S=-1, zero_output=False):
    """Fan-in uniform initialization; ``layers`` counts hidden layers plus the output layer."""
    if layers < 2:
        raise ValueError("need at least one hidden layer (layers >= 2)")
    rng = np.random.default_rng(rng)
    params = []
    fan = N_in
    for _ in range(layers - 1):
        bound = 1.0 / math.sqrt(fan)
        params.append([rng.uniform(-bound, bound, (width, fan)),
                       rng.uniform(-bound, bound, width),
                       np.ones(width), np.zeros(width)])
        fan = width
    bound = 1.0 / math.sqrt(fan)
    Wo = rng.uniform(-bound, bound, (N_out, fan))
    bo = rng.uniform(-bound, bound, N_out)
    if zero_output:
        Wo[:] = 0.0
        bo[:] = 0.0
    params.append([Wo, bo])
    return CorrectionNet(layers, width, N_in, N_out, params,
                         np.zeros(N_in) if in_mean is None else np.asarray(in_mean, float),
                         np.ones(N_in) if in_std is None else np.asarray(in_std, float),
                         float(out_std), N_M, S)


def _forward(net, Xn, keep=False):
    h = Xn
    cache = []
    for i, (W, b, g, be) in enumerate(net.params[:-1]):
        z = h @ W.T + b
        mu = z.mean(axis=1, keepdims=True)
        zc = z - mu
        var = (zc * zc).mean(axis=1, keepdims=True)
        rstd = 1.0 / np.sqrt(var + LN_EPS)
        zh = zc * rstd
        a = np.tanh(g * zh + be)
        out = a + h if i >= 1 else a
        if keep:
            cache.append((h, zh, rstd, a))
        h = out
    W, b = net.params[-1]
    y = h @ W.T + b
    return y, h, cache


def forward(net: CorrectionNet, X):
    """Network output in standardized target units for raw (unstandardized) inputs."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.N_in:
        raise ValueError(f"input width {X.shape[-1]} does not match N_in={net.N_in}")
    return _forward(net, (X - net.in_mean) / net.in_std)[0]


def predict(net: CorrectionNet, X):
    """Corrections in physical units."""
    return forward(net, X) * net.out_std


def _param_sq(net):
    return sum(float(np.sum(p * p)) for p in net.flat_params())


def loss(net, Xn, Yn, alpha=0.0):
    """Mean over samples of the squared error norm, plus alpha * ||theta||^2.

    ``Xn`` and ``Yn`` are already standardized.
    """
    y = _forward(net, Xn)[0]
    return float(np.mean(np.sum((y - Yn) ** 2, axis=1))) + alpha * _param_sq(net)


def loss_and_grad(net, Xn, Yn, alpha=0.0):
    """Loss and gradients (same nesting as ``net.params``) by backpropagation."""
    y, h_last, cache = _forward(net, Xn, keep=True)
    n = Xn.shape[0]
    diff = y - Yn
    val = float(np.mean(np.sum(diff * diff, axis=1)))
    dy = 2.0 * diff / n
    W, b = net.params[-1]
    grads = [None] * len(net.params)
    grads[-1] = [dy.T @ h_last, dy.sum(axis=0)]
    dh = dy @ W
    for i in range(len(net.params) - 2, -1, -1):
        Wi, bi, g, be = net.params[i]
        h_in, zh, rstd, a = cache[i]
        dres = dh if i >= 1 else None
        du = dh * (1.0 - a * a)                       # through tanh
        dg = np.sum(du * zh, axis=0)
        dbe = du.sum(axis=0)
        dzh = du * g
        dz = rstd * (dzh - dzh.mean(axis=1, keepdims=True)
                     - zh * np.mean(dzh * zh, axis=1, keepdims=True))
        grads[i] = [dz.T @ h_in, dz.sum(axis=0), dg, dbe]
        dh = dz @ Wi
        if dres is not None:
            dh = dh + dres
    if alpha:
        val += alpha * _param_sq(net)
        grads = [[gp + 2.0 * alpha * p for gp, p in zip(gg, pp)]
                 for gg, pp in zip(grads, net.params)]
    return val, grads


def one_cycle_lr(step, total, cfg: TrainConfig):
    """Linear warm-up from lr/div_factor to lr, then cosine decay to lr/(div*final_div)."""
    lo = cfg.lr_base / cfg.div_factor
    end = lo / cfg.final_div
    warm = max(1, int(round(cfg.warmup_frac * total)))
    if step < warm:
        return lo + (cfg.lr_base - lo) * step / warm
    frac = (step - warm) / max(1, total - warm)
    return end + 0.5 * (cfg.lr_base - end) * (1.0 + math.cos(math.pi * min(frac, 1.0)))


def _split(n, cfg, rng):
    perm = rng.permutation(n)
    n_val = int(round(cfg.val_frac * n)) if n > 1 else 0
    return perm[n_val:], perm[:n_val]


def train(X, Y, cfg: TrainConfig = TrainConfig(), arch=(4, 256), N_M=-1, S=-1,
          split=None):
    """Fit a CorrectionNet; returns (net at best validation epoch, TrainLog).

    ``split`` optionally supplies (train_idx, val_idx); otherwise a seeded
    shuffle holds out ``cfg.val_frac`` of the rows.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    tr, va = split if split is not None else _split(X.shape[0], cfg, rng)
    mean = X[tr].mean(axis=0)
    std = X[tr].std(axis=0)
    std[~(std > 0)] = 1.0
    ystd = float(Y[tr].std())
    ystd = ystd if ystd > 0 else 1.0
    net = init_net(X.shape[1], Y.shape[1], arch[0], arch[1], rng, mean, std, ystd, N_M, S)
    Xn = (X - mean) / std
    Yn = Y / ystd
    Xt, Yt = Xn[tr], Yn[tr]
    Xv, Yv = (Xn[va], Yn[va]) if len(va) else (Xt, Yt)

    log = TrainLog()
    log.initial_train_loss = loss(net, Xt, Yt)
    nb = math.ceil(len(tr) / cfg.batch_size)
    total = cfg.epochs * nb
    b1, b2 = cfg.betas
    m = [[np.zeros_like(p) for p in grp] for grp in net.params]
    v = [[np.zeros_like(p) for p in grp] for grp in net.params]
    step = 0
    best, best_val = None, np.inf
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(tr))
        for bi in range(nb):
            idx = order[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]
            val, grads = loss_and_grad(net, Xt[idx], Yt[idx])
            if not np.isfinite(val):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {bi}")
            lr = one_cycle_lr(step, total, cfg)
            step += 1
            for grp, ggrp, mg, vg in zip(net.params, grads, m, v):
                for p, g, mi, vi in zip(grp, ggrp, mg, vg):
                    p *= 1.0 - lr * cfg.weight_decay
                    mi *= b1
                    mi += (1 - b1) * g
                    vi *= b2
                    vi += (1 - b2) * g * g
                    mhat = mi / (1 - b1 ** step)
                    vhat = vi / (1 - b2 ** step)
                    p -= lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        log.lr.append(lr)
        reg = cfg.weight_decay * _param_sq(net)
        log.train_loss.append(loss(net, Xt, Yt) + reg)
        vl = loss(net, Xv, Yv) + reg
        log.val_loss.append(vl)
        if vl < best_val:
            best_val, best = vl, copy.deepcopy(net)
            log.best_epoch = epoch
    return best, log


# --- serialization -----------------------------------------------------------

_HDR = struct.Struct("<4sIiiiiiii")


def save_weights(net: CorrectionNet, path):
    with open(path, "wb") as fh:
        fh.write(_HDR.pack(_MAGIC, _VERSION, net.N_M, net.S, net.layers, net.width,
                           net.N_in, net.N_out, net.layout_id))
        fh.write(struct.pack("<d", net.out_std))
        for arr in (net.in_mean, net.in_std, *net.flat_params()):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(path, N_M=None, S=None):
    """Read a weights file; refuse if it was trained for another (N_M, S)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HDR.size + 8:
        raise WeightsError(f"{path}: truncated header")
    magic, ver, nm, s, layers, width, n_in, n_out, layout = _HDR.unpack_from(raw)
    if magic != _MAGIC or ver != _VERSION:
        raise WeightsError(f"{path}: not a weights file (magic {magic!r}, version {ver})")
    if (N_M is not None and nm != N_M) or (S is not None and s != S):
        raise WeightsError(f"{path}: trained for N_M={nm}, S={s}; requested N_M={N_M}, S={S}")
    if layout != LAYOUT_ID:
        raise WeightsError(f"{path}: unsupported feature layout {layout}")
    (out_std,) = struct.unpack_from("<d", raw, _HDR.size)
    shapes = [(n_in,), (n_in,)]
    fan = n_in
    for _ in range(layers - 1):
        shapes += [(width, fan), (width,), (width,), (width,)]
        fan = width
    shapes += [(n_out, fan), (n_out,)]
    need = sum(int(np.prod(sh)) for sh in shapes) * 8
    off = _HDR.size + 8
    if len(raw) - off != need:
        raise WeightsError(f"{path}: expected {need} payload bytes, found {len(raw) - off}")
    arrs = []
    for sh in shapes:
        cnt = int(np.prod(sh))
        arrs.append(np.frombuffer(raw, dtype="<f8", count=cnt, offset=off).reshape(sh).copy())
        off += cnt * 8
    mean, std, rest = arrs[0], arrs[1], arrs[2:]
    params = [rest[4 * i:4 * i + 4] for i in range(layers - 1)] + [rest[-2:]]
    return CorrectionNet(layers, width, n_in, n_out, params, mean, std, out_std, nm, s, layout)
