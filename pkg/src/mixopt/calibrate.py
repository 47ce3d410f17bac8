"""Cross-model correction of surrogate predictions.

A surrogate fitted on one base model transfers to other models up to a
systematic distortion; a small set of calibration runs on the target
model is enough to fit an affine correction

    g = f(.) W + bias

by closed-form ridge-damped least squares. Diagonal mode (per-task
scale and offset, 2k parameters) is the default: with ~20 calibration
samples a full k x k map is prone to overfitting, but it stays
available.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DomainError, SchemaError
from .records import write_json_atomic
from .validation import check_matrix

CALIBRATION_SCHEMA = 1

RIDGE = 1e-8

MODES = ("diagonal", "full")


def pearson(x, y) -> float:
    """Product-moment correlation of two equal-length sequences."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise DomainError(f"x and y must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise DomainError("need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise DomainError("correlation undefined for constant input")
    return float(dx @ dy) / np.sqrt(vx * vy)


@dataclass(frozen=True)
class CalibrationMap:
    """Affine correction: prediction @ W + bias."""

    mode: str
    W: np.ndarray  # (k, k); off-diagonal entries are zero in diagonal mode
    bias: np.ndarray  # (k,)
    residual_mse: float
    n_samples: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        k = self.bias.shape[0]
        if self.W.shape != (k, k):
            raise DomainError(f"W must be ({k}, {k}), got {self.W.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.bias))):
            raise DomainError("calibration parameters must be finite")
        self.W.flags.writeable = False
        self.bias.flags.writeable = False

    @property
    def k(self) -> int:
        return self.bias.shape[0]


def identity_map(k: int, mode: str = "diagonal") -> CalibrationMap:
    return CalibrationMap(mode, np.eye(k), np.zeros(k), residual_mse=0.0, n_samples=0)


@dataclass(frozen=True)
class CorrelationReport:
    """Predicted-vs-actual overall averages, before and after mapping."""

    pearson_r_before: float
    pearson_r_after: float
    n_samples: int
    pairs_before: tuple[tuple[float, float], ...]
    pairs_after: tuple[tuple[float, float], ...]


def fit_calibration(base_predictions, target_scores, mode: str = "diagonal") -> CalibrationMap:
    """Least-squares affine map from base-model predictions to target scores.

    Normal equations with ridge damping ``1e-8`` guard against
    rank-deficient calibration sets; the solution is closed-form and
    deterministic.
    """
    F = check_matrix(base_predictions, "base_predictions")
    S = check_matrix(target_scores, "target_scores", F.shape[1])
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    n, k = F.shape
    if S.shape[0] != n:
        raise DomainError(f"got {n} predictions but {S.shape[0]} target rows")
    min_needed = 2 if mode == "diagonal" else k + 1
    if n < min_needed:
        raise DomainError(f"{mode} mode needs at least {min_needed} samples, got {n}")

    if mode == "diagonal":
        W = np.zeros((k, k))
        bias = np.zeros(k)
        for j in range(k):
            A = np.column_stack([F[:, j], np.ones(n)])
            lhs = A.T @ A + RIDGE * np.eye(2)
            w, b = np.linalg.solve(lhs, A.T @ S[:, j])
            W[j, j] = w
            bias[j] = b
    else:
        A = np.column_stack([F, np.ones(n)])
        lhs = A.T @ A + RIDGE * np.eye(k + 1)
        X = np.linalg.solve(lhs, A.T @ S)
        W = X[:k]
        bias = X[k]

    resid = (F @ W + bias) - S
    return CalibrationMap(mode, W, bias, residual_mse=float(np.mean(resid * resid)), n_samples=n)


def apply_calibration(cmap: CalibrationMap, prediction) -> np.ndarray:
    """Map predictions through the affine correction (no clamping here)."""
    pred = np.asarray(prediction, dtype=np.float64)
    squeeze = pred.ndim == 1
    if squeeze:
        pred = pred[None, :]
    pred = check_matrix(pred, "prediction", cmap.k)
    out = pred @ cmap.W + cmap.bias
    return out[0] if squeeze else out


def correlation_report(
    predicted_scores, actual_scores, cmap: CalibrationMap | None = None
) -> CorrelationReport:
    """Pearson r between predicted and actual overall averages.

    Averages are clamped-score means per sample; ``cmap`` supplies the
    "after" column (identity when omitted).
    """
    F = check_matrix(predicted_scores, "predicted_scores")
    S = check_matrix(actual_scores, "actual_scores", F.shape[1])
    cmap = cmap or identity_map(F.shape[1])
    before = np.clip(F, 0.0, 1.0).mean(axis=1)
    after = np.clip(apply_calibration(cmap, F), 0.0, 1.0).mean(axis=1)
    actual = S.mean(axis=1)
    return CorrelationReport(
        pearson_r_before=pearson(before, actual),
        pearson_r_after=pearson(after, actual),
        n_samples=F.shape[0],
        pairs_before=tuple(zip(before.tolist(), actual.tolist())),
        pairs_after=tuple(zip(after.tolist(), actual.tolist())),
    )


class AffineCalibrator(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: fit on (base predictions, target scores), transform predictions."""

    def __init__(self, mode: str = "diagonal"):
        self.mode = mode

    def fit(self, X, y):
        self.map_ = fit_calibration(X, y, mode=self.mode)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "map_"):
            raise NotFittedError("fit the calibrator before calling transform")
        return apply_calibration(self.map_, X)


# -- calibration map files -------------------------------------------------

def save_calibration(
    cmap: CalibrationMap, path: str | Path, base_model: str = "", target_model: str = ""
) -> None:
    obj = {
        "schema": CALIBRATION_SCHEMA,
        "kind": "calibration",
        "mode": cmap.mode,
        "W": cmap.W.tolist(),
        "bias": cmap.bias.tolist(),
        "residual_mse": cmap.residual_mse,
        "n_samples": cmap.n_samples,
        "base_model": base_model,
        "target_model": target_model,
    }
    write_json_atomic(obj, path)


def load_calibration(path: str | Path) -> CalibrationMap:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != CALIBRATION_SCHEMA or obj.get("kind") != "calibration":
        raise SchemaError(f"{path}: not a schema-{CALIBRATION_SCHEMA} calibration file")
    return CalibrationMap(
        mode=obj["mode"],
        W=np.asarray(obj["W"], dtype=np.float64),
        bias=np.asarray(obj["bias"], dtype=np.float64),
        residual_mse=float(obj["residual_mse"]),
        n_samples=int(obj["n_samples"]),
    )
