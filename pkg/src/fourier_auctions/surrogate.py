"""Small fully connected ReLU networks as value-function surrogates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import indicator_matrix

log = logging.getLogger(__name__)

KINK_TOL = 1e-7


class TrainingError(RuntimeError):
    pass


@dataclass
class MlpNetwork:
    """ReLU network ``[m, d1, ..., dL, 1]``; the output unit is a ReLU too.

    ``weights[l]`` has shape ``(out, in)``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    train_mse: float = float("nan")

    def __post_init__(self):
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[0] != b.size:
                raise ValueError(f"layer {l}: weight/bias shapes disagree")
            if l and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: input width {W.shape[1]} != previous output")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have a single unit")

    @property
    def m(self) -> int:
        return self.weights[0].shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.m] + [W.shape[0] for W in self.weights]

    @classmethod
    def zeros(cls, sizes) -> "MlpNetwork":
        return cls([np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])], [np.zeros(o) for o in sizes[1:]])

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = np.asarray(X, dtype=float)
        for W, b in zip(self.weights, self.biases):
            h = np.maximum(h @ W.T + b, 0.0)
        return h[:, 0]

    def __call__(self, bundles):
        return predict(self, bundles)

    def dense(self) -> np.ndarray:
        return predict(self, np.arange(1 << self.m, dtype=np.int64))

    def params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def with_params(self, theta: np.ndarray) -> "MlpNetwork":
        Ws, bs, at = [], [], 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(theta[at : at + W.size].reshape(W.shape))
            at += W.size
            bs.append(theta[at : at + b.size].copy())
            at += b.size
        return MlpNetwork(Ws, bs)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(" ".join(str(s) for s in self.sizes) + "\n")
            for W, b in zip(self.weights, self.biases):
                for row in W:
                    fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
                fh.write(" ".join(f"{v:.17g}" for v in b) + "\n")

    @classmethod
    def load(cls, path) -> "MlpNetwork":
        with open(path) as fh:
            lines = [ln.split() for ln in fh if ln.strip()]
        sizes = [int(t) for t in lines[0]]
        Ws, bs, at = [], [], 1
        for i, o in zip(sizes[:-1], sizes[1:]):
            Ws.append(np.array([[float(t) for t in lines[at + r]] for r in range(o)]).reshape(o, i))
            at += o
            bs.append(np.array([float(t) for t in lines[at]]))
            at += 1
        return cls(Ws, bs)


@dataclass
class TrainConfig:
    epochs: int = 512
    batch_size: int = 256  # full batch when |R| <= batch_size
    lr: float = 1e-2
    l2: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0 or self.l2 < 0:
            raise ValueError(f"invalid training config {self}")


def predict(net: MlpNetwork, x):
    """Network output at bundle ``x`` (int) or an array of bundles."""
    scalar = np.ndim(x) == 0
    X = indicator_matrix(np.atleast_1d(np.asarray(x, dtype=np.int64)), net.m)
    out = net.forward(X)
    return float(out[0]) if scalar else out


def _forward_cache(net: MlpNetwork, X):
    zs, hs = [], [X]
    h = X
    for W, b in zip(net.weights, net.biases):
        z = h @ W.T + b
        h = np.maximum(z, 0.0)
        zs.append(z)
        hs.append(h)
    return zs, hs


def loss_and_grad(net: MlpNetwork, X, y, l2: float = 0.0):
    """Mean squared error plus ``l2 * sum(W^2)`` and its gradient.

    At exact kinks (``z == 0``) the ReLU derivative is taken as 0.
    """
    zs, hs = _forward_cache(net, X)
    n = X.shape[0]
    r = hs[-1][:, 0] - y
    loss = float(r @ r / n) + l2 * sum(float((W * W).sum()) for W in net.weights)
    gW, gb = [None] * len(net.weights), [None] * len(net.weights)
    delta = (2.0 / n) * r[:, None] * (zs[-1] > 0)
    for l in reversed(range(len(net.weights))):
        gW[l] = delta.T @ hs[l] + 2.0 * l2 * net.weights[l]
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ net.weights[l]) * (zs[l - 1] > 0)
    return loss, gW, gb


def _split_arch(arch, m: int) -> list[int]:
    arch = [int(a) for a in arch]
    # accept both hidden widths [32, 32] and full sizes [m, 32, 32, 1]
    if len(arch) >= 3 and arch[0] == m and arch[-1] == 1:
        arch = arch[1:-1]
    if any(a < 1 for a in arch):
        raise ValueError(f"bad architecture {arch}")
    return [m] + arch + [1]


def init_network(sizes, rng: np.random.Generator) -> MlpNetwork:
    """Uniform He-style initialization, ``U(-a, a)`` with ``a = sqrt(6 / fan_in)``.

    Output weights start nonnegative so the output ReLU is not born dead on
    part of the input space.
    """
    Ws, bs = [], []
    for i, o in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / max(i, 1))
        Ws.append(rng.uniform(-a, a, size=(o, i)))
        bs.append(np.zeros(o))
    Ws[-1] = np.abs(Ws[-1])
    return MlpNetwork(Ws, bs)


def fit_mlp(reports, arch, cfg: TrainConfig | None = None, m: int | None = None) -> MlpNetwork:
    """Train a ReLU network on ``reports`` (bundle -> value) with full-batch Adam.

    Targets are divided by the largest reported value for training, and the
    scale is folded back into the output layer afterwards.  ReLU networks are
    positively homogeneous in the last layer, so this is exact.
    """
    cfg = cfg or TrainConfig()
    if len(reports) == 0:
        raise ValueError("fit_mlp needs at least one report")
    xs = np.fromiter((int(b) for b in reports.keys()), dtype=np.int64, count=len(reports))
    ys = np.fromiter((float(v) for v in reports.values()), dtype=float, count=len(reports))
    if m is None:
        m = getattr(reports, "m", None) or max(int(xs.max()).bit_length(), 1)
    sizes = _split_arch(arch, m)
    X = indicator_matrix(xs, m).astype(float)
    scale = float(np.abs(ys).max()) or 1.0
    y = ys / scale
    rng = np.random.default_rng(cfg.seed)
    net = init_network(sizes, rng)
    net.biases[-1][:] = y.mean()
    params = [p for pair in zip(net.weights, net.biases) for p in pair]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    n = X.shape[0]
    bs = n if n <= cfg.batch_size else cfg.batch_size
    step = 0
    for epoch in range(cfg.epochs):
        order = np.arange(n) if bs == n else rng.permutation(n)
        for s in range(0, n, bs):
            idx = order[s : s + bs]
            loss, gW, gb = loss_and_grad(net, X[idx], y[idx], cfg.l2)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            grads = [g for pair in zip(gW, gb) for g in pair]
            step += 1
            for p, g, a, v in zip(params, grads, m1, m2):
                a *= b1
                a += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                p -= cfg.lr * (a / (1 - b1**step)) / (np.sqrt(v / (1 - b2**step)) + eps)
    net.weights[-1] *= scale
    net.biases[-1] *= scale
    r = net.forward(X) - ys
    net.train_mse = float(r @ r / n)
    if not np.isfinite(net.train_mse):
        raise TrainingError("non-finite training error")
    return net


@dataclass
class GradCheck:
    max_rel_dev: float
    n_checked: int
    kink_units: list = field(default_factory=list)  # (layer, unit) with |z| < KINK_TOL
    n_skipped: int = 0


def gradient_check(net: MlpNetwork, X, y, l2: float = 0.0, h: float = 1e-5) -> GradCheck:
    """Backprop gradient against central finite differences.

    Parameters whose perturbation by ``h`` changes any ReLU activation
    pattern are skipped (the loss is not differentiable across a kink) and
    counted in ``n_skipped``; units with a pre-activation within ``KINK_TOL``
    of zero are listed in ``kink_units``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _, gW, gb = loss_and_grad(net, X, y, l2)
    analytic = np.concatenate([g.ravel() for pair in zip(gW, gb) for g in pair])
    zs, _ = _forward_cache(net, X)
    kinks = sorted({(l, int(u)) for l, z in enumerate(zs) for u in np.flatnonzero((np.abs(z) < KINK_TOL).any(axis=0))})
    masks = [z > 0 for z in zs]
    theta = net.params()
    worst, checked, skipped = 0.0, 0, 0
    for t in range(theta.size):
        vals = []
        same = True
        for sgn in (1.0, -1.0):
            th = theta.copy()
            th[t] += sgn * h
            other = net.with_params(th)
            zs_p, _ = _forward_cache(other, X)
            same &= all(np.array_equal(z > 0, mk) for z, mk in zip(zs_p, masks))
            vals.append(loss_and_grad(other, X, y, l2)[0])
        if not same or any(k for k in kinks if _touches(net, t, k)):
            skipped += 1
            continue
        num = (vals[0] - vals[1]) / (2 * h)
        den = max(abs(num), abs(analytic[t]), 1e-6)
        worst = max(worst, abs(num - analytic[t]) / den)
        checked += 1
    return GradCheck(worst, checked, kinks, skipped)


def _touches(net: MlpNetwork, t: int, kink) -> bool:
    # parameter t feeds unit kink = (layer, unit) directly
    at = 0
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        if t < at + W.size:
            return l == kink[0] and (t - at) // W.shape[1] == kink[1]
        at += W.size
        if t < at + b.size:
            return l == kink[0] and t - at == kink[1]
        at += b.size
    return False
