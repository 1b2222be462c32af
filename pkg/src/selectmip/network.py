"""Dropout feedforward network with Monte-Carlo uncertainty estimation.

A deliberately small, dependency-free implementation: three affine layers
(input -> hidden -> hidden -> scalar), relu activations on the hidden layers,
a logistic output, and dropout applied to the input of every affine map with
inverted scaling so the deterministic pass needs no correction.

Training minimizes mean binary cross-entropy plus an l2 penalty on all
parameters (weights and biases) with plain mini-batch SGD.  Everything is
deterministic given the config seeds.  Parameters are frozen (read-only numpy
arrays) once built, so trained networks can be shared across threads; grid
cells and per-instance prediction calls are independent and parallelizable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "NetworkParams",
    "TrainConfig",
    "MCConfig",
    "TrainingDivergedError",
    "DEFAULT_HIDDEN_WIDTH",
    "DEFAULT_DROPOUT_GRID",
    "DEFAULT_L2_GRID",
    "init_network",
    "forward",
    "forward_batch",
    "loss_and_grad",
    "train",
    "grid_search",
    "grid_search_detail",
    "mc_predict",
    "mc_predict_batch",
    "params_to_json",
    "params_from_json",
]

DEFAULT_HIDDEN_WIDTH = 50
DEFAULT_DROPOUT_GRID = (0.05, 0.01, 0.02)
DEFAULT_L2_GRID = (0.1, 0.25)


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite (learning-rate blow-up)."""


@dataclass(frozen=True)
class NetworkParams:
    """Weights and biases of the three affine layers."""

    weights: tuple[np.ndarray, np.ndarray, np.ndarray]
    biases: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValueError("expected exactly three affine layers")
        d, h1 = self.weights[0].shape
        h1b, h2 = self.weights[1].shape
        h2b, out = self.weights[2].shape
        if h1 != h1b or h2 != h2b or out != 1:
            raise ValueError("layer shapes are inconsistent")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ValueError(f"bias {i} shape {b.shape} does not match weight {w.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i} contains non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)

    @property
    def layer_sizes(self) -> tuple[int, int, int, int]:
        return (
            self.weights[0].shape[0],
            self.weights[0].shape[1],
            self.weights[1].shape[1],
            1,
        )

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]


@dataclass(frozen=True)
class TrainConfig:
    dropout_rate: float = 0.05
    l2_coeff: float = 0.1
    epochs: int = 200
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2_coeff < 0.0:
            raise ValueError(f"l2_coeff must be nonnegative, got {self.l2_coeff}")
        if self.epochs < 0:
            raise ValueError(f"epochs must not be negative, got {self.epochs}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")


@dataclass(frozen=True)
class MCConfig:
    """How many stochastic passes to draw and from which seed."""

    T: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")


def init_network(input_dim: int, hidden_width: int = DEFAULT_HIDDEN_WIDTH, seed=0) -> NetworkParams:
    """Glorot-style zero-mean uniform weight init, zero biases; deterministic per seed."""
    if input_dim < 1:
        raise ValueError(f"input_dim must be positive, got {input_dim}")
    if hidden_width < 1:
        raise ValueError(f"hidden_width must be positive, got {hidden_width}")
    rng = np.random.default_rng(seed)
    sizes = (input_dim, hidden_width, hidden_width, 1)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(tuple(weights), tuple(biases))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _draw_masks(
    rng: np.random.Generator, shapes: Sequence[tuple[int, ...]], dropout_rate: float
) -> list[np.ndarray]:
    keep = 1.0 - dropout_rate
    return [(rng.random(shape) < keep) / keep for shape in shapes]


def forward_batch(
    params: NetworkParams,
    X: np.ndarray,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Probabilities for a batch; stochastic when ``rng`` is given, else deterministic."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ValueError(f"expected shape (m, {params.input_dim}), got {X.shape}")
    W1, W2, W3 = params.weights
    b1, b2, b3 = params.biases
    if rng is not None:
        m0, m1, m2 = _draw_masks(
            rng, [X.shape, (X.shape[0], W2.shape[0]), (X.shape[0], W3.shape[0])], dropout_rate
        )
        a0 = X * m0
        a1 = np.maximum(a0 @ W1 + b1, 0.0) * m1
        a2 = np.maximum(a1 @ W2 + b2, 0.0) * m2
    else:
        a1 = np.maximum(X @ W1 + b1, 0.0)
        a2 = np.maximum(a1 @ W2 + b2, 0.0)
    return _sigmoid((a2 @ W3 + b3)[:, 0])


def forward(
    params: NetworkParams,
    x: np.ndarray,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> float:
    """Single-instance probability in (0, 1).

    With ``rng`` absent the pass is deterministic (no dropout); with ``rng``
    present a fresh mask is drawn per layer, so ``dropout_rate=0`` reproduces
    the deterministic pass exactly.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != params.input_dim:
        raise ValueError(f"expected a vector of length {params.input_dim}, got shape {x.shape}")
    return float(forward_batch(params, x[None, :], dropout_rate, rng)[0])


def _flatten(params: NetworkParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in (*params.weights, *params.biases)])


def _unflatten(theta: np.ndarray, like: NetworkParams) -> NetworkParams:
    arrays = []
    offset = 0
    for ref in (*like.weights, *like.biases):
        arrays.append(theta[offset : offset + ref.size].reshape(ref.shape).copy())
        offset += ref.size
    return NetworkParams(tuple(arrays[:3]), tuple(arrays[3:]))


def loss_and_grad(
    params: NetworkParams,
    X: np.ndarray,
    y: np.ndarray,
    l2_coeff: float = 0.0,
    masks: Sequence[np.ndarray] | None = None,
) -> tuple[float, NetworkParams]:
    """Mean cross-entropy plus l2 penalty, with analytic gradients.

    ``masks`` are pre-scaled dropout masks for the three layer inputs; pass
    None for a deterministic evaluation.  The returned gradient has the same
    structure as ``params``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    B = X.shape[0]
    W1, W2, W3 = params.weights
    b1, b2, b3 = params.biases
    if masks is None:
        m0 = m1 = m2 = None
        a0 = X
    else:
        m0, m1, m2 = masks
        a0 = X * m0
    z1 = a0 @ W1 + b1
    a1 = np.maximum(z1, 0.0)
    a1d = a1 if m1 is None else a1 * m1
    z2 = a1d @ W2 + b2
    a2 = np.maximum(z2, 0.0)
    a2d = a2 if m2 is None else a2 * m2
    z3 = (a2d @ W3 + b3)[:, 0]

    # Stable cross-entropy straight from logits: softplus(z) - y*z.
    ce = np.mean(np.logaddexp(0.0, z3) - y * z3)
    sq = sum(float(np.sum(a * a)) for a in (W1, W2, W3, b1, b2, b3))
    loss = float(ce + l2_coeff * sq)

    d3 = (_sigmoid(z3) - y) / B
    gW3 = a2d.T @ d3[:, None] + 2.0 * l2_coeff * W3
    gb3 = np.array([d3.sum()]) + 2.0 * l2_coeff * b3
    da2 = d3[:, None] * W3[:, 0][None, :]
    if m2 is not None:
        da2 = da2 * m2
    dz2 = da2 * (z2 > 0.0)
    gW2 = a1d.T @ dz2 + 2.0 * l2_coeff * W2
    gb2 = dz2.sum(axis=0) + 2.0 * l2_coeff * b2
    da1 = dz2 @ W2.T
    if m1 is not None:
        da1 = da1 * m1
    dz1 = da1 * (z1 > 0.0)
    gW1 = a0.T @ dz1 + 2.0 * l2_coeff * W1
    gb1 = dz1.sum(axis=0) + 2.0 * l2_coeff * b1
    grad = NetworkParams((gW1, gW2, gW3), (gb1, gb2, gb3))
    return loss, grad


def train(
    train_set: tuple[np.ndarray, np.ndarray],
    cfg: TrainConfig,
    hidden_width: int = DEFAULT_HIDDEN_WIDTH,
) -> NetworkParams:
    """Mini-batch SGD with dropout active; deterministic given ``cfg.seed``.

    ``train_set`` is an (X, y) pair with binary labels; both classes must be
    present.  ``epochs=0`` returns the initialization untouched.  A non-finite
    loss at any step aborts with :class:`TrainingDivergedError`.
    """
    X, y = train_set
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of instances")
    classes = set(np.unique(y).tolist())
    if not classes <= {0, 1}:
        raise ValueError(f"labels must be in {{0, 1}}, got {sorted(classes)}")
    if classes != {0, 1}:
        raise ValueError("training needs at least one instance of each class")

    root = np.random.SeedSequence(cfg.seed)
    init_seq, sgd_seq = root.spawn(2)
    params = init_network(X.shape[1], hidden_width, seed=init_seq)
    if cfg.epochs == 0:
        return params

    rng = np.random.default_rng(sgd_seq)
    W = [w.copy() for w in params.weights]
    b = [v.copy() for v in params.biases]
    m = X.shape[0]
    yf = y.astype(float)
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            Xb, yb = X[idx], yf[idx]
            masks = (
                _draw_masks(
                    rng,
                    [Xb.shape, (len(idx), W[1].shape[0]), (len(idx), W[2].shape[0])],
                    cfg.dropout_rate,
                )
                if cfg.dropout_rate > 0.0
                else None
            )
            current = NetworkParams(tuple(W), tuple(b))
            loss, grad = loss_and_grad(current, Xb, yb, cfg.l2_coeff, masks)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}: {loss!r}; "
                    "try a smaller learning rate"
                )
            W = [w - cfg.learning_rate * g for w, g in zip(W, grad.weights)]
            b = [v - cfg.learning_rate * g for v, g in zip(b, grad.biases)]
    return NetworkParams(tuple(W), tuple(b))


def _accuracy(params: NetworkParams, X: np.ndarray, y: np.ndarray) -> float:
    probs = forward_batch(params, X)
    return float(np.mean((probs > 0.5).astype(int) == y))


@dataclass(frozen=True)
class GridCell:
    cfg: TrainConfig
    params: NetworkParams | None
    val_accuracy: float
    error: str | None = None


def grid_search_detail(
    train_split: tuple[np.ndarray, np.ndarray],
    val_split: tuple[np.ndarray, np.ndarray],
    dropout_grid: Sequence[float] = DEFAULT_DROPOUT_GRID,
    l2_grid: Sequence[float] = DEFAULT_L2_GRID,
    base_cfg: TrainConfig = TrainConfig(),
    hidden_width: int = DEFAULT_HIDDEN_WIDTH,
) -> list[GridCell]:
    """Train one network per grid cell and score deterministic-pass accuracy.

    A failing cell is disqualified (recorded with its error), not fatal.
    """
    if not dropout_grid or not l2_grid:
        raise ValueError("grids must be nonempty")
    Xv, yv = val_split
    cells = []
    for dr in dropout_grid:
        for l2 in l2_grid:
            cfg = replace(base_cfg, dropout_rate=dr, l2_coeff=l2)
            try:
                params = train(train_split, cfg, hidden_width)
            except (TrainingDivergedError, ValueError) as exc:
                cells.append(GridCell(cfg, None, -np.inf, error=str(exc)))
                continue
            cells.append(GridCell(cfg, params, _accuracy(params, Xv, yv)))
    if all(c.params is None for c in cells):
        raise TrainingDivergedError("every grid cell failed to train")
    return cells


def best_grid_cell(cells: Sequence[GridCell]) -> GridCell:
    """Highest validation accuracy; ties go to lower dropout, then lower l2."""
    viable = [c for c in cells if c.params is not None]
    return min(viable, key=lambda c: (-c.val_accuracy, c.cfg.dropout_rate, c.cfg.l2_coeff))


def grid_search(
    train_split: tuple[np.ndarray, np.ndarray],
    val_split: tuple[np.ndarray, np.ndarray],
    dropout_grid: Sequence[float] = DEFAULT_DROPOUT_GRID,
    l2_grid: Sequence[float] = DEFAULT_L2_GRID,
    base_cfg: TrainConfig = TrainConfig(),
    hidden_width: int = DEFAULT_HIDDEN_WIDTH,
) -> TrainConfig:
    cells = grid_search_detail(train_split, val_split, dropout_grid, l2_grid, base_cfg, hidden_width)
    return best_grid_cell(cells).cfg


def mc_predict_batch(
    params: NetworkParams,
    X: np.ndarray,
    dropout_rate: float,
    mc: MCConfig = MCConfig(),
    return_samples: bool = False,
):
    """T stochastic passes per instance; returns (mu, sigma[, samples]).

    ``mu`` is the empirical mean and ``sigma`` the population standard
    deviation (denominator T) of the T outputs.  Fresh masks are drawn per
    pass and per instance; the draw order is fixed, so results are
    deterministic given ``mc.seed``.
    """
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(mc.seed)
    samples = np.empty((mc.T, X.shape[0]))
    for t in range(mc.T):
        samples[t] = forward_batch(params, X, dropout_rate, rng)
    mu = samples.mean(axis=0)
    sigma = samples.std(axis=0)
    if return_samples:
        return mu, sigma, samples
    return mu, sigma


def mc_predict(params: NetworkParams, x: np.ndarray, dropout_rate: float, mc: MCConfig = MCConfig()):
    """Single-instance Monte-Carlo estimate (see :func:`mc_predict_batch`)."""
    from .regions import UncertaintyEstimate

    x = np.asarray(x, dtype=float)
    mu, sigma = mc_predict_batch(params, x[None, :], dropout_rate, mc)
    return UncertaintyEstimate(mu=float(mu[0]), sigma=float(sigma[0]))


def params_to_json(params: NetworkParams, dropout_rate: float) -> str:
    """Serialize to the interchange schema (row-major weight arrays)."""
    doc = {
        "layer_sizes": list(params.layer_sizes),
        "weights": [w.ravel(order="C").tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "dropout_rate": dropout_rate,
    }
    return json.dumps(doc, indent=2)


def params_from_json(text: str) -> tuple[NetworkParams, float]:
    doc = json.loads(text)
    sizes = doc["layer_sizes"]
    weights = []
    for flat, (fan_in, fan_out) in zip(doc["weights"], zip(sizes[:-1], sizes[1:])):
        weights.append(np.asarray(flat, dtype=float).reshape(fan_in, fan_out))
    biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    return NetworkParams(tuple(weights), tuple(biases)), float(doc["dropout_rate"])
