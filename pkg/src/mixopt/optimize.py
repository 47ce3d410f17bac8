"""Exhaustive extrapolation of a trained surrogate over the mixing lattice.

Every lattice point is scored at every checkpoint step; a mixture's
objective is its best clamped mean score over the step grid. The sweep
is chunked at fixed absolute index boundaries so results are
bit-identical no matter how the lattice is sharded across workers:
each chunk is always evaluated as the identical batch, and the merge
order is a total order (average desc, counts lex asc, step asc).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .lattice import LatticePoint, composition_block, lattice_size
from .surrogate import FlatNetwork, MlpSurrogate, forward
from .validation import check_positive_int, check_proportions

CHUNK_SIZE = 16384

WORKERS_ENV = "MIXOPT_WORKERS"


@dataclass(frozen=True)
class RankedMixture:
    """One ranked lattice point with its best checkpoint and predicted scores."""

    mixture: LatticePoint
    best_step: int
    scores: tuple[float, ...]  # clamped to [0, 1]
    average: float
    rank: int


@dataclass(frozen=True)
class RankingResult:
    entries: tuple[RankedMixture, ...]
    lattice_points: int
    top_k_requested: int
    capped: bool  # top_k_requested exceeded the lattice; full ranking returned
    steps: tuple[int, ...]
    T: int


def _as_network(model) -> FlatNetwork:
    if isinstance(model, FlatNetwork):
        return model
    if isinstance(model, MlpSurrogate):
        if not hasattr(model, "network_"):
            raise DomainError("surrogate is not fitted")
        return model.network_
    raise DomainError(f"expected a surrogate model, got {type(model).__name__}")


def checkpoint_grid(T: int, tau: int | None = None) -> list[int]:
    """Checkpoint steps {tau, 2tau, ..., T}; default tau = T/4 (4 checkpoints)."""
    T = check_positive_int(T, "T")
    if tau is None:
        if T % 4 != 0:
            raise DomainError(f"T={T} is not divisible by 4; pass tau explicitly")
        tau = T // 4
    tau = check_positive_int(tau, "tau")
    if T % tau != 0:
        raise DomainError(f"tau={tau} does not divide T={T}")
    return list(range(tau, T + 1, tau))


def _validated_grid(steps, T: int) -> list[int]:
    steps = sorted(int(t) for t in steps)
    if not steps:
        raise DomainError("step grid must be non-empty")
    if steps[0] < 1 or steps[-1] > T:
        raise DomainError(f"step grid {steps} not within (0, {T}]")
    return steps


def predict_objective(model, p, steps, T: int) -> tuple[int, float, tuple[float, ...]]:
    """Best checkpoint for one mixture: (step, clamped mean, per-task scores).

    Ties in the mean break toward the earliest grid step.
    """
    net = _as_network(model)
    p = check_proportions(p, net.n_inputs - 1)
    steps = _validated_grid(steps, T)
    X = np.empty((len(steps), net.n_inputs))
    X[:, :-1] = p
    X[:, -1] = np.asarray(steps, dtype=np.float64) / T
    scores = np.clip(forward(net, X), 0.0, 1.0)
    avgs = scores.mean(axis=1)
    i = int(np.argmax(avgs))  # first max = earliest step
    return steps[i], float(avgs[i]), tuple(scores[i])


def _chunk_ranges(size: int, chunk: int) -> list[tuple[int, int]]:
    return [(s, min(chunk, size - s)) for s in range(0, size, chunk)]


def _sweep_shard(args) -> list[tuple[float, tuple[int, ...], int, tuple[float, ...]]]:
    dims, flat, m, b, steps, T, ranges, keep = args
    net = FlatNetwork(tuple(dims), flat)
    candidates: list[tuple[float, tuple[int, ...], int, tuple[float, ...]]] = []
    for start, count in ranges:
        block = composition_block(m, b, start, count)
        X = np.empty((count, m + 1))
        X[:, :m] = block / b
        preds = []
        avgs = np.empty((len(steps), count))
        for gi, t in enumerate(steps):
            X[:, m] = t / T
            out = np.clip(forward(net, X), 0.0, 1.0)
            preds.append(out)
            avgs[gi] = out.mean(axis=1)
        best_gi = np.argmax(avgs, axis=0)  # first max = earliest step
        best_avg = avgs[best_gi, np.arange(count)]
        order = np.argsort(-best_avg, kind="stable")[:keep]
        for i in order:
            gi = int(best_gi[i])
            candidates.append(
                (
                    float(best_avg[i]),
                    tuple(int(c) for c in block[i]),
                    steps[gi],
                    tuple(float(x) for x in preds[gi][i]),
                )
            )
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    return candidates[:keep]


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def rank_lattice(
    model,
    m: int,
    b: int,
    steps,
    T: int,
    top_k: int,
    shards: int = 1,
    workers: int | None = None,
    chunk_size: int = CHUNK_SIZE,
) -> RankingResult:
    """Rank every lattice point by its best predicted mean score.

    ``shards`` partitions the fixed chunk sequence into contiguous
    groups that may be processed by parallel workers; the output is
    identical for any shard/worker count.
    """
    net = _as_network(model)
    top_k = check_positive_int(top_k, "top_k")
    if net.n_inputs != m + 1:
        raise DomainError(f"model expects m={net.n_inputs - 1}, sweep given m={m}")
    steps = _validated_grid(steps, T)
    size = lattice_size(m, b)
    capped = top_k > size
    keep = min(top_k, size)

    ranges = _chunk_ranges(size, chunk_size)
    shards = max(1, min(shards, len(ranges)))
    bounds = np.linspace(0, len(ranges), shards + 1).astype(int)
    jobs = [
        (net.dims, net.flat, m, b, steps, T, ranges[lo:hi], keep)
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]

    if workers is None:
        workers = default_workers()
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        shard_results = [_sweep_shard(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            shard_results = list(pool.map(_sweep_shard, jobs))

    merged = sorted(
        (c for result in shard_results for c in result),
        key=lambda c: (-c[0], c[1], c[2]),
    )[:keep]
    entries = tuple(
        RankedMixture(
            mixture=LatticePoint(counts, b),
            best_step=step,
            scores=scores,
            average=avg,
            rank=i + 1,
        )
        for i, (avg, counts, step, scores) in enumerate(merged)
    )
    return RankingResult(
        entries=entries,
        lattice_points=size,
        top_k_requested=top_k,
        capped=capped,
        steps=tuple(steps),
        T=T,
    )


def optimal_mixture(model, m: int, b: int, T: int, tau: int | None = None) -> tuple[LatticePoint, int]:
    """Argmax over (lattice, checkpoint grid): the rank-1 entry."""
    grid = checkpoint_grid(T, tau)
    best = rank_lattice(model, m, b, grid, T, top_k=1).entries[0]
    return best.mixture, best.best_step
