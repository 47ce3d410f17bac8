"""Input validation helpers.

All checks raise :class:`~mixopt.errors.DomainError` so callers (and the
CLI) can distinguish bad inputs from runtime failures. Array-valued
checks return a float64 ``ndarray`` copy of the validated input, so
estimators can call them as converters, sklearn-style.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

PROPORTION_TOL = 1e-9


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise DomainError(f"{name} must be >= 1, got {value}")
    return int(value)


def check_counts(counts, b: int) -> tuple[int, ...]:
    """Validate an integer composition of ``b`` (samples per dataset in one batch)."""
    b = check_positive_int(b, "b")
    counts = tuple(int(c) for c in counts)
    if len(counts) < 1:
        raise DomainError("counts must have at least one entry")
    if any(c < 0 for c in counts):
        raise DomainError(f"counts must be non-negative, got {counts}")
    if sum(counts) != b:
        raise DomainError(f"counts must sum to b={b}, got sum {sum(counts)}")
    return counts


def check_proportions(p, m: int | None = None) -> np.ndarray:
    """Validate a mixture proportion vector: entries in [0, 1], summing to 1."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise DomainError(f"proportions must be a non-empty 1-d vector, got shape {p.shape}")
    if m is not None and p.size != m:
        raise DomainError(f"expected {m} proportions, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise DomainError("proportions must be finite")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError(f"proportions must lie in [0, 1], got {p}")
    if abs(float(p.sum()) - 1.0) > PROPORTION_TOL:
        raise DomainError(f"proportions must sum to 1 within {PROPORTION_TOL}, got {p.sum()!r}")
    return p


def check_scores(s, k: int | None = None) -> np.ndarray:
    """Validate a per-task score vector: entries in [0, 1]."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise DomainError(f"scores must be a non-empty 1-d vector, got shape {s.shape}")
    if k is not None and s.size != k:
        raise DomainError(f"expected {k} scores, got {s.size}")
    if not np.all(np.isfinite(s)):
        raise DomainError("scores must be finite")
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise DomainError(f"scores must lie in [0, 1], got {s}")
    return s


def check_matrix(X, name: str, n_cols: int | None = None) -> np.ndarray:
    """Validate a finite 2-d float matrix, optionally with a fixed column count."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DomainError(f"{name} must be 2-d, got shape {X.shape}")
    if n_cols is not None and X.shape[1] != n_cols:
        raise DomainError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise DomainError(f"{name} must be finite")
    return X


def check_step(step: int, T: int) -> int:
    step = check_positive_int(step, "step")
    T = check_positive_int(T, "T")
    if step > T:
        raise DomainError(f"step {step} exceeds horizon T={T}")
    return step


def clamp01(x: np.ndarray) -> np.ndarray:
    """Clamp to the score range [0, 1]. Used only at reporting boundaries."""
    return np.clip(x, 0.0, 1.0)
