"""Scalar evaluation utilities: overall averages and benchmark quality metrics."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DomainError


def overall_average(scores, weights=None) -> float:
    """Mean of the per-task scores; optional weights for uneven task groups."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise DomainError("scores must be a non-empty vector")
    if weights is None:
        return float(s.mean())
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != s.shape or np.any(w < 0) or w.sum() == 0:
        raise DomainError("weights must be non-negative, same length as scores, not all zero")
    return float((s * w).sum() / w.sum())


@dataclass(frozen=True)
class PlanGraph:
    """Size summary of a task-planning DAG: subtasks are nodes, dependencies edges."""

    n_nodes: int
    n_edges: int
    acyclic: bool = True

    def __post_init__(self):
        if self.n_nodes < 1:
            raise DomainError("a plan graph needs at least one node")
        if self.n_edges < 0:
            raise DomainError("edge count must be non-negative")
        if self.acyclic and self.n_edges > self.n_nodes * (self.n_nodes - 1) // 2:
            raise DomainError(
                f"{self.n_edges} edges exceed the DAG maximum for {self.n_nodes} nodes"
            )


def dag_complexity(graph: PlanGraph) -> float:
    """Edges per node."""
    return graph.n_edges / graph.n_nodes


def tokenize(text: str, casefold: bool = True) -> tuple[str, ...]:
    """Default query tokenization: whitespace split, case-folded."""
    return tuple((text.casefold() if casefold else text).split())


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence (classic DP, one rolling row)."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(a: Sequence, b: Sequence) -> float:
    """LCS F-measure between two token sequences.

    precision = LCS/|b|, recall = LCS/|a|, F = 2PR/(P+R); 0 when the
    sequences share no subsequence.
    """
    if len(a) == 0 or len(b) == 0:
        raise DomainError("token sequences must be non-empty")
    lcs = lcs_length(a, b)
    if lcs == 0:
        return 0.0
    precision = lcs / len(b)
    recall = lcs / len(a)
    return 2.0 * precision * recall / (precision + recall)


def diversity(queries: Sequence[Sequence]) -> float:
    """One minus the mean pairwise LCS similarity over all unordered pairs."""
    n = len(queries)
    if n < 2:
        raise DomainError("diversity needs at least 2 queries")
    total = sum(rouge_l(a, b) for a, b in combinations(queries, 2))
    return 1.0 - total / (n * (n - 1) / 2)
