"""Persisted pipeline records.

Everything the pipeline writes is line-delimited JSON: a header object
carrying a schema version and the run dimensions, then one object per
record. Integer batch counts are the canonical mixture encoding;
proportions and normalized steps are derived on read. Files are written
atomically (temp file + rename) and contain nothing non-deterministic,
so identical inputs reproduce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, SchemaError
from .lattice import LatticePoint
from .validation import check_scores, check_step

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SamplePoint:
    """One observed run record: mixture, checkpoint step, per-task scores."""

    mixture: LatticePoint
    step: int
    step_norm: float
    scores: tuple[float, ...]
    model_id: str = ""
    run_id: str = ""

    def __post_init__(self):
        check_scores(np.asarray(self.scores))
        if not 0.0 < self.step_norm <= 1.0:
            raise DomainError(f"step_norm must be in (0, 1], got {self.step_norm}")
        implied = self.step / round(self.step / self.step_norm)
        if abs(self.step_norm - implied) > 1e-12:
            raise DomainError(
                f"step_norm {self.step_norm} inconsistent with step {self.step}"
            )

    @property
    def proportions(self) -> np.ndarray:
        return np.asarray(self.mixture.counts, dtype=np.float64) / self.mixture.b

    @property
    def k(self) -> int:
        return len(self.scores)


def make_sample(
    mixture: LatticePoint, step: int, T: int, scores, model_id: str = "", run_id: str = ""
) -> SamplePoint:
    step = check_step(step, T)
    return SamplePoint(
        mixture=mixture,
        step=step,
        step_norm=step / T,
        scores=tuple(float(s) for s in scores),
        model_id=model_id,
        run_id=run_id,
    )


def design_matrix(samples: list[SamplePoint]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (X, Y): X rows are [proportions..., step_norm]."""
    if not samples:
        raise DomainError("no samples")
    m = samples[0].mixture.m
    k = samples[0].k
    X = np.empty((len(samples), m + 1))
    Y = np.empty((len(samples), k))
    for i, s in enumerate(samples):
        if s.mixture.m != m or s.k != k:
            raise DomainError(f"sample {i} has inconsistent dimensions")
        X[i, :m] = s.proportions
        X[i, m] = s.step_norm
        Y[i] = s.scores
    return X, Y


def dump_json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def write_json_atomic(obj, path: str | Path) -> None:
    """Write one JSON object as a whole file, atomically."""
    write_text_atomic(dump_json_line(obj), path)


def write_jsonl_atomic(header: dict, rows, path: str | Path) -> None:
    """Write a header + record lines, atomically."""
    text = dump_json_line(header) + "".join(dump_json_line(r) for r in rows)
    write_text_atomic(text, path)


def write_text_atomic(text: str, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_jsonl(path: str | Path, expect_kind: str) -> tuple[dict, list[dict]]:
    """Read header + records; reject unknown schema versions."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty record file")
    header = json.loads(lines[0])
    version = header.get("schema")
    if version != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema version {version!r} not supported "
            f"(expected {SCHEMA_VERSION}; regenerate the file with this version)"
        )
    if header.get("kind") != expect_kind:
        raise SchemaError(f"{path}: expected a {expect_kind!r} file, got {header.get('kind')!r}")
    return header, [json.loads(line) for line in lines[1:]]


def file_checksum(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- sample record files -------------------------------------------------

def write_samples(
    samples: list[SamplePoint], path: str | Path, m: int, k: int, b: int, T: int, model_id: str
) -> None:
    header = {
        "schema": SCHEMA_VERSION,
        "kind": "samples",
        "m": m,
        "k": k,
        "b": b,
        "T": T,
        "model_id": model_id,
    }
    rows = [
        {
            "counts": list(s.mixture.counts),
            "step": s.step,
            "scores": list(s.scores),
            "run_id": s.run_id,
        }
        for s in samples
    ]
    write_jsonl_atomic(header, rows, path)


def read_samples(path: str | Path) -> tuple[dict, list[SamplePoint]]:
    header, rows = read_jsonl(path, "samples")
    m, k, b, T = (int(header[f]) for f in ("m", "k", "b", "T"))
    model_id = header.get("model_id", "")
    samples = []
    for i, row in enumerate(rows):
        counts = tuple(int(c) for c in row["counts"])
        if len(counts) != m:
            raise SchemaError(f"{path}: record {i} field 'counts' has {len(counts)} entries, header says m={m}")
        scores = row["scores"]
        if len(scores) != k:
            raise SchemaError(f"{path}: record {i} field 'scores' has {len(scores)} entries, header says k={k}")
        samples.append(
            make_sample(
                LatticePoint(counts, b), int(row["step"]), T, scores,
                model_id=model_id, run_id=row.get("run_id", ""),
            )
        )
    return header, samples


# -- experiment plan files ------------------------------------------------

def write_plan(
    mixtures: list[LatticePoint], path: str | Path, m: int, b: int, T: int, grid: list[int], seed: int
) -> None:
    header = {
        "schema": SCHEMA_VERSION,
        "kind": "plan",
        "m": m,
        "b": b,
        "T": T,
        "grid": list(grid),
        "seed": seed,
        "n_mixtures": len(mixtures),
    }
    rows = [{"counts": list(pt.counts)} for pt in mixtures]
    write_jsonl_atomic(header, rows, path)


def read_plan(path: str | Path) -> tuple[dict, list[LatticePoint]]:
    header, rows = read_jsonl(path, "plan")
    b = int(header["b"])
    points = [LatticePoint(tuple(int(c) for c in row["counts"]), b) for row in rows]
    if len(points) != int(header["n_mixtures"]):
        raise SchemaError(f"{path}: header n_mixtures disagrees with record count")
    return header, points
