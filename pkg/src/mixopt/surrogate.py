"""MLP surrogate mapping (mixture proportions, step fraction) -> task scores.

The network is a two-hidden-layer ReLU regressor, (m+1) -> 100 -> 100 -> k
by default, trained full-batch with Adam on mean squared error. It is
implemented directly on a flat float64 parameter vector: gradients come
from hand-written backprop (checked against finite differences in the
test suite), the optimizer state is two flat arrays, and checkpoints
round-trip bit-exactly. Raw outputs are unbounded; clamping to the
score range happens only at reporting boundaries, never inside the loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import DomainError, SchemaError, TrainingError
from .records import SamplePoint, design_matrix, write_json_atomic
from .validation import check_matrix, check_proportions

SURROGATE_SCHEMA = 1

DEFAULT_HIDDEN = (100, 100)


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch Adam settings.

    The stock defaults (lr 1e-6, 1500 steps) are very conservative and
    converge slowly on unit-scaled targets; :meth:`unit_scale` is the
    practical preset for scores in [0, 1].
    """

    learning_rate: float = 1e-6
    steps: int = 1500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DomainError("learning rate must be > 0")
        if self.steps < 1:
            raise DomainError("steps must be >= 1")

    @classmethod
    def unit_scale(cls, seed: int = 0) -> "TrainConfig":
        return cls(learning_rate=1e-3, steps=5000, seed=seed)


@dataclass
class FlatNetwork:
    """Feed-forward parameters stored as one contiguous vector.

    ``dims`` lists layer widths input-first; weights and biases are
    views into ``flat`` in layer order (W then b per layer).
    """

    dims: tuple[int, ...]
    flat: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.dims) < 2:
            raise DomainError("network needs at least input and output layers")
        if self.flat.shape != (param_count(self.dims),):
            raise DomainError(
                f"flat vector has {self.flat.size} entries, dims {self.dims} need {param_count(self.dims)}"
            )

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out = []
        ofs = 0
        for d_in, d_out in zip(self.dims[:-1], self.dims[1:]):
            W = self.flat[ofs : ofs + d_in * d_out].reshape(d_in, d_out)
            ofs += d_in * d_out
            b = self.flat[ofs : ofs + d_out]
            ofs += d_out
            out.append((W, b))
        return out

    def copy(self) -> "FlatNetwork":
        return FlatNetwork(self.dims, self.flat.copy())

    @property
    def n_inputs(self) -> int:
        return self.dims[0]

    @property
    def n_outputs(self) -> int:
        return self.dims[-1]


def param_count(dims: tuple[int, ...]) -> int:
    return sum(d_in * d_out + d_out for d_in, d_out in zip(dims[:-1], dims[1:]))


def init_network(
    n_inputs: int, n_outputs: int, hidden: tuple[int, ...] = DEFAULT_HIDDEN, seed: int = 0
) -> FlatNetwork:
    """Fresh parameters: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    if n_inputs < 1 or n_outputs < 1:
        raise DomainError("n_inputs and n_outputs must be >= 1")
    dims = (n_inputs, *hidden, n_outputs)
    rng = np.random.default_rng(seed)
    net = FlatNetwork(dims, np.zeros(param_count(dims)))
    for W, b in net.layers():
        bound = 1.0 / np.sqrt(W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
        b[...] = 0.0
    return net


def forward(net: FlatNetwork, X) -> np.ndarray:
    """Raw network outputs for rows of X (no clamping)."""
    A = check_matrix(X, "X", net.n_inputs)
    layers = net.layers()
    for W, b in layers[:-1]:
        A = np.maximum(A @ W + b, 0.0)
    W, b = layers[-1]
    return A @ W + b


def forward_single(net: FlatNetwork, p, step_norm: float) -> np.ndarray:
    """Scores for one (mixture, step fraction) query."""
    p = check_proportions(p, net.n_inputs - 1)
    if not 0.0 < step_norm <= 1.0:
        raise DomainError(f"step_norm must be in (0, 1], got {step_norm}")
    return forward(net, np.concatenate([p, [step_norm]])[None, :])[0]


def mse_loss(net: FlatNetwork, X, Y) -> float:
    X = check_matrix(X, "X", net.n_inputs)
    Y = check_matrix(Y, "Y", net.n_outputs)
    diff = forward(net, X) - Y
    return float(np.mean(diff * diff))


def loss_and_grad(net: FlatNetwork, X: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    """MSE over all outputs and its gradient as a flat vector (backprop)."""
    X = check_matrix(X, "X", net.n_inputs)
    Y = check_matrix(Y, "Y", net.n_outputs)
    layers = net.layers()

    activations = [X]
    pre = []
    A = X
    for W, b in layers[:-1]:
        Z = A @ W + b
        pre.append(Z)
        A = np.maximum(Z, 0.0)
        activations.append(A)
    W, b = layers[-1]
    out = A @ W + b

    diff = out - Y
    loss = float(np.mean(diff * diff))

    grad_net = FlatNetwork(net.dims, np.zeros_like(net.flat))
    grad_layers = grad_net.layers()
    G = diff * (2.0 / diff.size)
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = grad_layers[i]
        gW[...] = activations[i].T @ G
        gb[...] = G.sum(axis=0)
        if i > 0:
            G = (G @ layers[i][0].T) * (pre[i - 1] > 0.0)
    return loss, grad_net.flat


def train_network(
    net: FlatNetwork, X, Y, cfg: TrainConfig
) -> tuple[FlatNetwork, np.ndarray]:
    """Run full-batch Adam; returns (trained copy, loss history).

    The history has ``cfg.steps + 1`` entries: the loss before any
    update, then after each step. Raises :class:`TrainingError` with the
    offending step if the loss or any parameter goes non-finite.
    """
    X = check_matrix(X, "X", net.n_inputs)
    Y = check_matrix(Y, "Y", net.n_outputs)
    if X.shape[0] != Y.shape[0]:
        raise DomainError(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")

    net = net.copy()
    theta = net.flat
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history = np.empty(cfg.steps + 1)
    for step in range(cfg.steps):
        loss, grad = loss_and_grad(net, X, Y)
        history[step] = loss
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}", step=step)
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * grad * grad
        m_hat = m / (1.0 - cfg.beta1 ** (step + 1))
        v_hat = v / (1.0 - cfg.beta2 ** (step + 1))
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        if not np.all(np.isfinite(theta)):
            raise TrainingError(f"non-finite parameters after step {step}", step=step)
    history[cfg.steps] = mse_loss(net, X, Y)
    return net, history


class MlpSurrogate(BaseEstimator, RegressorMixin):
    """sklearn-style estimator around the flat-parameter MLP.

    ``fit`` expects X rows of [p_1..p_m, step_norm] and Y rows of k task
    scores; ``predict`` returns raw (unclamped) scores.
    """

    def __init__(
        self,
        hidden: tuple[int, ...] = DEFAULT_HIDDEN,
        learning_rate: float = 1e-6,
        steps: int = 1500,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        seed: int = 0,
    ):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.steps = steps
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.seed = seed

    @classmethod
    def from_train_config(
        cls, cfg: TrainConfig, hidden: tuple[int, ...] = DEFAULT_HIDDEN
    ) -> "MlpSurrogate":
        return cls(
            hidden=hidden, learning_rate=cfg.learning_rate, steps=cfg.steps,
            beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, seed=cfg.seed,
        )

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, steps=self.steps,
            beta1=self.beta1, beta2=self.beta2, eps=self.eps, seed=self.seed,
        )

    def fit(self, X, y):
        X = check_matrix(X, "X")
        y = check_matrix(y, "y")
        if X.shape[0] < 2:
            raise DomainError("need at least 2 samples to fit")
        net = init_network(X.shape[1], y.shape[1], tuple(self.hidden), self.seed)
        self.network_, self.loss_history_ = train_network(net, X, y, self.train_config)
        self.n_inputs_ = X.shape[1]
        self.n_outputs_ = y.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "network_"):
            raise NotFittedError("fit the surrogate before calling predict")
        return forward(self.network_, X)

    def score(self, X, y, sample_weight=None) -> float:
        return r_squared(self.predict(X), check_matrix(y, "y"))


def fit_surrogate(
    samples: list[SamplePoint], cfg: TrainConfig, hidden: tuple[int, ...] = DEFAULT_HIDDEN
) -> MlpSurrogate:
    """Fit the surrogate on observed run records."""
    X, Y = design_matrix(samples)
    return MlpSurrogate.from_train_config(cfg, hidden).fit(X, Y)


def r_squared(predicted, actual) -> float:
    """Coefficient of determination over all entries of all score vectors.

    Residuals and total variance are pooled across every output, with a
    single grand mean; 1.0 is perfect, 0.0 matches predicting the mean,
    and the value is unbounded below.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise DomainError(f"shape mismatch: {predicted.shape} vs {actual.shape}")
    if actual.ndim < 1 or actual.shape[0] < 2:
        raise DomainError("need at least 2 observations")
    ss_res = float(np.sum((actual - predicted) ** 2))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        raise DomainError("total variance is zero; R^2 undefined")
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class CVResult:
    fold_r2: tuple[float, ...]
    mean_r2: float
    fold_sizes: tuple[int, ...]


def cross_validate(
    samples: list[SamplePoint],
    folds: int = 10,
    cfg: TrainConfig | None = None,
    seed: int = 0,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
) -> CVResult:
    """Out-of-fold R^2, with folds grouped by mixture identity.

    All checkpoints of one mixture land in the same fold (they are
    near-duplicates; splitting them would leak). Mixture-to-fold
    assignment is a seeded shuffle, deterministic per seed.
    """
    cfg = cfg or TrainConfig()
    groups: dict[tuple[int, ...], list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.mixture.counts, []).append(i)
    keys = list(groups)
    if len(keys) < folds:
        raise DomainError(f"{len(keys)} distinct mixtures < {folds} folds")
    order = np.random.default_rng(seed).permutation(len(keys))
    fold_of_key = {keys[int(j)]: fi for fi, part in
                   enumerate(np.array_split(order, folds)) for j in part}

    X, Y = design_matrix(samples)
    fold_idx = np.array([fold_of_key[s.mixture.counts] for s in samples])
    scores, sizes = [], []
    for fi in range(folds):
        test = fold_idx == fi
        model = MlpSurrogate.from_train_config(cfg, hidden).fit(X[~test], Y[~test])
        scores.append(r_squared(model.predict(X[test]), Y[test]))
        sizes.append(int(test.sum()))
    return CVResult(tuple(scores), float(np.mean(scores)), tuple(sizes))


# -- checkpoint files -----------------------------------------------------

def save_surrogate(model: MlpSurrogate, path: str | Path) -> None:
    if not hasattr(model, "network_"):
        raise NotFittedError("cannot save an unfitted surrogate")
    obj = {
        "schema": SURROGATE_SCHEMA,
        "kind": "surrogate",
        "dims": list(model.network_.dims),
        "train_config": asdict(model.train_config),
        "flat_params": model.network_.flat.tolist(),
    }
    write_json_atomic(obj, path)


def load_surrogate(path: str | Path) -> MlpSurrogate:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != SURROGATE_SCHEMA or obj.get("kind") != "surrogate":
        raise SchemaError(f"{path}: not a schema-{SURROGATE_SCHEMA} surrogate checkpoint")
    dims = tuple(int(d) for d in obj["dims"])
    cfg = TrainConfig(**obj["train_config"])
    model = MlpSurrogate.from_train_config(cfg, hidden=dims[1:-1])
    model.network_ = FlatNetwork(dims, np.asarray(obj["flat_params"], dtype=np.float64))
    model.n_inputs_ = dims[0]
    model.n_outputs_ = dims[-1]
    return model
