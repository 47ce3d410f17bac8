"""Synthetic multitask fine-tuning dynamics.

A deterministic stand-in for the real (mixture, step) -> scores map:
cheap enough to evaluate exhaustively, so the whole pipeline can be
checked against exact ground truth. Each (dataset, task) pair gets one
of four interaction kernels:

* enhancement  -- 1 - exp(-x): saturating gain with exposure
* conflict     -- -(1 - exp(-x)): saturating loss
* neutral      -- 0
* overfitting  -- x * exp(1 - x): gain that peaks at x = 1, then decays

with exposure x = p_i * (t / T) / timescale. Pairwise cross terms add a
step-dependent ripple so the surface is non-convex, and an optional
hash-based noise term perturbs scores without introducing RNG state:
the surface is a pure function of (spec, p, t), so brute force and the
pipeline always see identical values.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BudgetError, DomainError, SchemaError
from .lattice import LatticePoint, composition_block, lattice_size
from .validation import check_positive_int, check_proportions, check_step

KINDS = ("enhancement", "conflict", "neutral", "overfitting")
_KIND_CODE = {name: code for code, name in enumerate(KINDS)}

ORACLE_SCHEMA = 1


@dataclass(frozen=True)
class OracleSpec:
    """Full parameterization of one synthetic dynamics surface.

    ``kinds``, ``strength`` and ``timescale`` are (m, k); ``base``,
    ``scale`` and ``offset`` are (k,). Timescales are fractions of the
    training horizon T. ``scale``/``offset`` apply a per-task affine
    map to the raw surface (identity by default), which is how a
    "different model" observing the same dynamics is simulated.
    """

    m: int
    k: int
    seed: int
    kinds: np.ndarray  # int8 codes into KINDS
    strength: np.ndarray
    timescale: np.ndarray
    base: np.ndarray
    pairs: np.ndarray  # (n_pairs, 2) dataset index pairs, possibly empty
    pair_coef: np.ndarray  # (n_pairs, k)
    pair_freq: np.ndarray
    pair_phase: np.ndarray
    noise: float
    scale: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        check_positive_int(self.m, "m")
        check_positive_int(self.k, "k")
        if self.noise < 0:
            raise DomainError("noise amplitude must be >= 0")
        for name in ("kinds", "strength", "timescale"):
            if getattr(self, name).shape != (self.m, self.k):
                raise DomainError(f"{name} must have shape ({self.m}, {self.k})")
        for name in ("base", "scale", "offset"):
            if getattr(self, name).shape != (self.k,):
                raise DomainError(f"{name} must have shape ({self.k},)")
        if np.any(self.timescale <= 0):
            raise DomainError("timescales must be positive")
        for name in ("kinds", "strength", "timescale", "base", "pairs",
                     "pair_coef", "pair_freq", "pair_phase", "scale", "offset"):
            getattr(self, name).flags.writeable = False

    @property
    def oracle_id(self) -> str:
        return hashlib.blake2b(
            _canonical_bytes(self), digest_size=8
        ).hexdigest()


def _canonical_bytes(spec: OracleSpec) -> bytes:
    parts = [struct.pack("<qqq", spec.m, spec.k, spec.seed), struct.pack("<d", spec.noise)]
    for name in ("kinds", "strength", "timescale", "base", "pairs",
                 "pair_coef", "pair_freq", "pair_phase", "scale", "offset"):
        arr = getattr(spec, name)
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


PRESETS = {
    # (kind weights for KINDS order, pair density, pair amp, noise)
    "smooth": ((0.50, 0.20, 0.15, 0.15), 0.0, 0.0, 0.0),
    "rugged": ((0.35, 0.25, 0.10, 0.30), 0.5, 0.08, 0.01),
}


def make_oracle(m: int, k: int, seed: int, preset: str = "smooth") -> OracleSpec:
    """Draw a random oracle parameterization, deterministic per seed."""
    m = check_positive_int(m, "m")
    k = check_positive_int(k, "k")
    if preset not in PRESETS:
        raise DomainError(f"unknown preset {preset!r}; pick one of {sorted(PRESETS)}")
    kind_weights, pair_density, pair_amp, noise = PRESETS[preset]
    rng = np.random.default_rng(seed)

    kinds = rng.choice(len(KINDS), size=(m, k), p=kind_weights).astype(np.int8)
    # Per-dataset strengths scale with 1/m so task totals stay mostly inside [0, 1].
    strength = rng.uniform(0.2, 1.0, size=(m, k)) / m
    timescale = rng.uniform(0.15, 1.2, size=(m, k))
    base = rng.uniform(0.15, 0.35, size=k)

    all_pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    chosen = [pair for pair in all_pairs if rng.random() < pair_density]
    n_pairs = len(chosen)
    pairs = np.asarray(chosen, dtype=np.int64).reshape(n_pairs, 2)
    pair_coef = rng.uniform(-pair_amp, pair_amp, size=(n_pairs, k))
    pair_freq = rng.uniform(0.5, 3.0, size=(n_pairs, k))
    pair_phase = rng.uniform(0.0, 1.0, size=(n_pairs, k))

    return OracleSpec(
        m=m, k=k, seed=seed, kinds=kinds, strength=strength, timescale=timescale,
        base=base, pairs=pairs, pair_coef=pair_coef, pair_freq=pair_freq,
        pair_phase=pair_phase, noise=noise,
        scale=np.ones(k), offset=np.zeros(k),
    )


def derive_affine_target(
    spec: OracleSpec,
    scale,
    offset,
    noise: float,
    seed: int | None = None,
) -> OracleSpec:
    """The same dynamics observed through a per-task affine map plus fresh noise.

    Simulates evaluating a different model whose score surface is an
    affine distortion of the base model's.
    """
    scale = np.asarray(scale, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    if scale.shape != (spec.k,) or offset.shape != (spec.k,):
        raise DomainError(f"scale and offset must have shape ({spec.k},)")
    return replace(
        spec,
        scale=scale.copy(),
        offset=offset.copy(),
        noise=float(noise),
        seed=spec.seed if seed is None else int(seed),
    )


def _hash_noise(seed: int, p_bytes: bytes, t: int, j: int) -> float:
    """Deterministic pseudo-noise in [-1, 1] keyed by (seed, p, t, j)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<qqi", seed, t, j))
    h.update(p_bytes)
    u = int.from_bytes(h.digest(), "little") / 2.0**64
    return 2.0 * u - 1.0


def _kernel_values(kinds: np.ndarray, x: np.ndarray) -> np.ndarray:
    # kinds is (m, k); x broadcasts over leading batch axes.
    enh = kinds == _KIND_CODE["enhancement"]
    con = kinds == _KIND_CODE["conflict"]
    ovf = kinds == _KIND_CODE["overfitting"]
    sat = 1.0 - np.exp(-x)
    out = np.where(enh, sat, np.zeros_like(x))
    out = np.where(con, -sat, out)
    out = np.where(ovf, x * np.exp(1.0 - x), out)
    return out


def oracle_eval(spec: OracleSpec, p, t: int, T: int) -> np.ndarray:
    """Score vector for training on mixture ``p`` for ``t`` of ``T`` steps."""
    p = check_proportions(p, spec.m)
    t = check_step(t, T)
    return _eval_batch(spec, p[None, :], t, T)[0]


def oracle_eval_batch(spec: OracleSpec, P: np.ndarray, t: int, T: int) -> np.ndarray:
    """Vectorized :func:`oracle_eval` over rows of ``P`` at one step."""
    P = np.asarray(P, dtype=np.float64)
    t = check_step(t, T)
    return _eval_batch(spec, P, t, T)


def _eval_batch(spec: OracleSpec, P: np.ndarray, t: int, T: int) -> np.ndarray:
    frac = t / T
    # exposure x[n, i, j] = p[n, i] * (t/T) / timescale[i, j]
    x = P[:, :, None] * (frac / spec.timescale)[None, :, :]
    contrib = (spec.strength[None, :, :] * _kernel_values(spec.kinds, x)).sum(axis=1)
    raw = spec.base[None, :] + contrib
    if spec.pairs.shape[0] > 0:
        prod = P[:, spec.pairs[:, 0]] * P[:, spec.pairs[:, 1]]  # (n, n_pairs)
        wave = np.sin(2.0 * math.pi * (spec.pair_freq * frac + spec.pair_phase))
        raw = raw + prod @ (spec.pair_coef * wave)
    s = spec.scale[None, :] * raw + spec.offset[None, :]
    if spec.noise > 0.0:
        eta = np.empty_like(s)
        for n in range(P.shape[0]):
            pb = np.ascontiguousarray(P[n]).astype("<f8").tobytes()
            for j in range(spec.k):
                eta[n, j] = _hash_noise(spec.seed, pb, t, j)
        s = s + spec.noise * eta
    return np.clip(s, 0.0, 1.0)


def oracle_objective(spec: OracleSpec, p, steps, T: int) -> tuple[int, float]:
    """Best step on a grid and the true overall average there (tie: earliest)."""
    if len(steps) == 0:
        raise DomainError("step grid must be non-empty")
    best_step, best_avg = 0, -math.inf
    for t in steps:
        avg = float(oracle_eval(spec, p, int(t), T).mean())
        if avg > best_avg:
            best_step, best_avg = int(t), avg
    return best_step, best_avg


def brute_force_best(
    spec: OracleSpec,
    m: int,
    b: int,
    steps,
    T: int,
    budget: int = 10_000_000,
) -> tuple[LatticePoint, int, float]:
    """Exact argmax of the true overall average over lattice x step grid.

    Ties break toward the lexicographically smallest mixture, then the
    smallest step, matching the ranking order used by the optimizer.
    """
    if m != spec.m:
        raise DomainError(f"oracle has m={spec.m}, lattice has m={m}")
    steps = [int(t) for t in steps]
    if not steps:
        raise DomainError("step grid must be non-empty")
    size = lattice_size(m, b)
    evals = size * len(steps)
    if evals > budget:
        raise BudgetError(
            f"{evals} oracle evaluations exceed budget {budget}; "
            f"shrink the lattice (size {size}) or the step grid ({len(steps)})"
        )
    steps = sorted(steps)
    chunk = 16384
    best: tuple[float, tuple[int, ...], int] | None = None
    for start in range(0, size, chunk):
        block = composition_block(m, b, start, min(chunk, size - start))
        P = block / b
        for t in steps:
            avg = _eval_batch(spec, P, t, T).mean(axis=1)
            i = int(np.argmax(avg))  # first max: lex-smallest within block
            cand = (float(avg[i]), tuple(int(c) for c in block[i]), t)
            if best is None or cand[0] > best[0] or (
                cand[0] == best[0] and (cand[1], cand[2]) < (best[1], best[2])
            ):
                best = cand
    assert best is not None
    return LatticePoint(best[1], b), best[2], best[0]


def save_oracle(spec: OracleSpec, path: str | Path) -> None:
    from .records import write_json_atomic

    obj = {
        "schema": ORACLE_SCHEMA,
        "kind": "oracle",
        "m": spec.m,
        "k": spec.k,
        "seed": spec.seed,
        "noise": spec.noise,
        "interactions": [[KINDS[c] for c in row] for row in spec.kinds],
        "strength": spec.strength.tolist(),
        "timescale": spec.timescale.tolist(),
        "base": spec.base.tolist(),
        "pairs": spec.pairs.tolist(),
        "pair_coef": spec.pair_coef.tolist(),
        "pair_freq": spec.pair_freq.tolist(),
        "pair_phase": spec.pair_phase.tolist(),
        "scale": spec.scale.tolist(),
        "offset": spec.offset.tolist(),
    }
    write_json_atomic(obj, path)


def load_oracle(path: str | Path) -> OracleSpec:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != ORACLE_SCHEMA or obj.get("kind") != "oracle":
        raise SchemaError(f"{path}: not a schema-{ORACLE_SCHEMA} oracle file")
    m, k = int(obj["m"]), int(obj["k"])
    n_pairs = len(obj["pairs"])
    kinds = np.asarray(
        [[_KIND_CODE[name] for name in row] for row in obj["interactions"]], dtype=np.int8
    )
    return OracleSpec(
        m=m, k=k, seed=int(obj["seed"]), kinds=kinds,
        strength=np.asarray(obj["strength"], dtype=np.float64),
        timescale=np.asarray(obj["timescale"], dtype=np.float64),
        base=np.asarray(obj["base"], dtype=np.float64),
        pairs=np.asarray(obj["pairs"], dtype=np.int64).reshape(n_pairs, 2),
        pair_coef=np.asarray(obj["pair_coef"], dtype=np.float64).reshape(n_pairs, k),
        pair_freq=np.asarray(obj["pair_freq"], dtype=np.float64).reshape(n_pairs, k),
        pair_phase=np.asarray(obj["pair_phase"], dtype=np.float64).reshape(n_pairs, k),
        noise=float(obj["noise"]),
        scale=np.asarray(obj["scale"], dtype=np.float64),
        offset=np.asarray(obj["offset"], dtype=np.float64),
    )
