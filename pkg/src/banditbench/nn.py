"""From-scratch fully connected ReLU network.

The network is f(x) = sqrt(m) * W_L ReLU(W_{L-1} ... ReLU(W_1 x)), with the
block-structured random initialization that makes the output exactly zero on
duplicated-half inputs.  Parameters are exposed both as per-layer matrices and
as one flat vector (layer-major, row-major) so gradient features line up with
the design matrix in the posterior module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite (step size too large)."""


@dataclass(frozen=True)
class NetShape:
    """Architecture of the network: input dim d, hidden width m, depth L."""

    input_dim: int
    width: int
    depth: int

    def __post_init__(self):
        d, m, L = self.input_dim, self.width, self.depth
        if d <= 0 or d % 2 != 0:
            raise ValueError(f"input_dim must be a positive even integer, got {d}")
        if m <= 0 or m % 2 != 0:
            raise ValueError(f"width must be a positive even integer, got {m}")
        if L < 2:
            raise ValueError(f"depth must be >= 2, got {L}")

    @property
    def n_params(self) -> int:
        d, m, L = self.input_dim, self.width, self.depth
        return d * m + m * m * (L - 2) + m

    def layer_shapes(self) -> list[tuple[int, int]]:
        d, m, L = self.input_dim, self.width, self.depth
        shapes = [(m, d)]
        shapes += [(m, m)] * (L - 2)
        shapes.append((1, m))
        return shapes


@dataclass
class ParamVector:
    """Network weights as per-layer matrices with a fixed flat layout."""

    shape: NetShape
    layers: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        expected = self.shape.layer_shapes()
        got = [W.shape for W in self.layers]
        if got != expected:
            raise ValueError(f"layer shapes {got} do not match {expected}")

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([W.ravel() for W in self.layers])

    @classmethod
    def from_flat(cls, shape: NetShape, flat: np.ndarray) -> "ParamVector":
        if flat.shape != (shape.n_params,):
            raise ValueError(
                f"flat vector length {flat.shape} does not match p={shape.n_params}"
            )
        layers = []
        offset = 0
        for rows, cols in shape.layer_shapes():
            n = rows * cols
            layers.append(flat[offset:offset + n].reshape(rows, cols).copy())
            offset += n
        return cls(shape, layers)

    def copy(self) -> "ParamVector":
        return ParamVector(self.shape, [W.copy() for W in self.layers])


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings for the regularized square loss."""

    step_size: float = 0.001
    iterations: int = 100
    reg: float = 1.0
    mode: str = "gd"  # "gd" (full batch) or "sgd"
    batch_size: int = 64

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.reg <= 0:
            raise ValueError("reg must be positive")
        if self.mode not in ("gd", "sgd"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")


def init_params(shape: NetShape, rng_seed: int) -> ParamVector:
    """Block-structured random initialization.

    Hidden layers are (W, 0; 0, W) with both diagonal blocks the SAME draw of
    i.i.d. N(0, 4/m) entries; the output layer is (w^T, -w^T) with w i.i.d.
    N(0, 2/m).  On inputs whose two halves are equal this makes the initial
    output exactly zero.
    """
    rng = np.random.default_rng(rng_seed)
    d, m, L = shape.input_dim, shape.width, shape.depth
    layers = []
    for rows, cols in shape.layer_shapes()[:-1]:
        block = rng.normal(0.0, np.sqrt(4.0 / m), size=(rows // 2, cols // 2))
        W = np.zeros((rows, cols))
        W[: rows // 2, : cols // 2] = block
        W[rows // 2:, cols // 2:] = block
        layers.append(W)
    w = rng.normal(0.0, np.sqrt(2.0 / m), size=m // 2)
    layers.append(np.concatenate([w, -w])[None, :])
    return ParamVector(shape, layers)


def _forward_cached(theta: ParamVector, X: np.ndarray):
    """Forward pass keeping pre-activations; X is (n, d)."""
    m = theta.shape.width
    pre = []
    A = X
    for W in theta.layers[:-1]:
        Z = A @ W.T
        pre.append(Z)
        A = np.maximum(Z, 0.0)
    out = np.sqrt(m) * (A @ theta.layers[-1].T)[:, 0]
    return out, pre


def forward_batch(theta: ParamVector, X: np.ndarray) -> np.ndarray:
    """Network outputs for a batch of inputs, shape (n,)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != theta.shape.input_dim:
        raise ValueError(
            f"input dim {X.shape[1]} does not match network d={theta.shape.input_dim}"
        )
    out, _ = _forward_cached(theta, X)
    return out


def forward(theta: ParamVector, x: np.ndarray) -> float:
    """Scalar network output sqrt(m) * W_L ReLU(... ReLU(W_1 x))."""
    return float(forward_batch(theta, np.asarray(x, dtype=np.float64)[None, :])[0])


def _backward_weighted(theta: ParamVector, X: np.ndarray, pre, seed: np.ndarray):
    """Summed gradient of sum_i seed_i * f(x_i) w.r.t. each layer.

    ReLU subgradient at exactly 0 is taken as 0.
    """
    m = theta.shape.width
    acts = [X] + [np.maximum(Z, 0.0) for Z in pre]
    grads = [None] * len(theta.layers)
    # delta: (n, fan_out) sensitivity of the weighted output sum
    delta = np.sqrt(m) * seed[:, None] * np.ones((X.shape[0], 1))
    grads[-1] = delta.T @ acts[-1]
    back = delta @ theta.layers[-1]
    for l in range(len(theta.layers) - 2, -1, -1):
        delta = back * (pre[l] > 0.0)
        grads[l] = delta.T @ acts[l]
        if l > 0:
            back = delta @ theta.layers[l]
    return grads


def grad_batch(theta: ParamVector, X: np.ndarray) -> np.ndarray:
    """Per-sample flat gradients of the network output, shape (n, p).

    The 1/sqrt(m) posterior scale is NOT folded in here.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != theta.shape.input_dim:
        raise ValueError(
            f"input dim {X.shape[1]} does not match network d={theta.shape.input_dim}"
        )
    m = theta.shape.width
    n = X.shape[0]
    _, pre = _forward_cached(theta, X)
    acts = [X] + [np.maximum(Z, 0.0) for Z in pre]
    pieces = [None] * len(theta.layers)
    delta = np.full((n, 1), np.sqrt(m))
    pieces[-1] = np.einsum("ni,nj->nij", delta, acts[-1]).reshape(n, -1)
    back = delta @ theta.layers[-1]
    for l in range(len(theta.layers) - 2, -1, -1):
        delta = back * (pre[l] > 0.0)
        pieces[l] = np.einsum("ni,nj->nij", delta, acts[l]).reshape(n, -1)
        if l > 0:
            back = delta @ theta.layers[l]
    return np.concatenate(pieces, axis=1)


def grad(theta: ParamVector, x: np.ndarray) -> np.ndarray:
    """Flat gradient of forward(theta, x) w.r.t. all weights, length p."""
    return grad_batch(theta, np.asarray(x, dtype=np.float64)[None, :])[0]


def loss(theta: ParamVector, theta0: ParamVector, X: np.ndarray, r: np.ndarray,
         reg: float) -> float:
    """Regularized square loss: sum (f - r)^2 / 2 + m*reg*||theta - theta0||^2 / 2."""
    m = theta.shape.width
    resid = forward_batch(theta, X) - r if len(r) else np.zeros(0)
    drift = theta.flat - theta0.flat
    return float(0.5 * np.sum(resid ** 2) + 0.5 * m * reg * np.dot(drift, drift))


def train(theta0: ParamVector, theta_init: ParamVector,
          dataset: list[tuple[np.ndarray, float]], cfg: TrainConfig,
          rng: np.random.Generator | None = None) -> ParamVector:
    """Gradient descent on the regularized square loss, anchored at theta0.

    theta0 is the original initialization (the regularization center, never
    updated); theta_init is the starting point (warm start in the bandit loop).
    Full-batch mode is deterministic; SGD needs the rng for minibatch sampling.
    """
    m = theta0.shape.width
    if cfg.step_size * m * cfg.reg >= 1.0:
        raise ValueError(
            f"step_size*m*reg = {cfg.step_size * m * cfg.reg:.4g} >= 1; "
            "the regularization contraction diverges"
        )
    if not dataset:
        return theta_init.copy()
    if cfg.mode == "sgd" and rng is None:
        rng = np.random.default_rng(0)

    X = np.asarray([x for x, _ in dataset], dtype=np.float64)
    r = np.asarray([rw for _, rw in dataset], dtype=np.float64)
    n = len(dataset)
    theta = theta_init.copy()

    for _ in range(cfg.iterations):
        if cfg.mode == "gd":
            Xb, rb = X, r
        else:
            idx = rng.integers(0, n, size=min(cfg.batch_size, n))
            Xb, rb = X[idx], r[idx]
        out, pre = _forward_cached(theta, Xb)
        resid = out - rb
        if not np.all(np.isfinite(resid)):
            raise TrainingDiverged(
                "non-finite residuals during training; reduce the step size"
            )
        if cfg.mode == "sgd":
            # rescale so the minibatch estimates the full-data loss gradient
            resid = resid * (n / len(rb))
        grads = _backward_weighted(theta, Xb, pre, resid)
        for l, (W, W0, G) in enumerate(zip(theta.layers, theta0.layers, grads)):
            theta.layers[l] = W - cfg.step_size * (G + m * cfg.reg * (W - W0))
    return theta
