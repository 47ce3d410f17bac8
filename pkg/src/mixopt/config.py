"""Run configuration shared by the CLI subcommands."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import DomainError
from .surrogate import TrainConfig
from .validation import check_positive_int


@dataclass(frozen=True)
class RunConfig:
    """One experiment's dimensions, checkpoint grid, seeds, and knobs.

    ``tau`` is the checkpoint interval; the grid must consist of
    multiples of ``tau`` up to ``T`` and defaults to the four quarter
    checkpoints {T/4, T/2, 3T/4, T}.
    """

    m: int
    b: int
    k: int
    T: int
    tau: int | None = None
    grid: tuple[int, ...] | None = None
    n_mixtures: int = 250
    seed: int = 0
    top_k: int = 50
    folds: int = 10
    calibration_mode: str = "diagonal"
    train: TrainConfig = field(default_factory=TrainConfig)
    oracle_path: str | None = None

    def __post_init__(self):
        for name in ("m", "b", "k", "T"):
            check_positive_int(getattr(self, name), name)
        tau = self.tau
        if tau is None:
            if self.T % 4 != 0:
                raise DomainError(f"T={self.T} not divisible by 4; set tau explicitly")
            tau = self.T // 4
            object.__setattr__(self, "tau", tau)
        check_positive_int(tau, "tau")
        if self.T % tau != 0:
            raise DomainError(f"tau={tau} does not divide T={self.T}")
        grid = self.grid
        if grid is None:
            # every tau-th checkpoint; the four quarter steps under the default tau
            grid = tuple(range(tau, self.T + 1, tau))
        grid = tuple(sorted(int(t) for t in grid))
        if not grid:
            raise DomainError("step grid must be non-empty")
        for t in grid:
            if t < 1 or t > self.T or t % tau != 0:
                raise DomainError(f"grid step {t} is not a multiple of tau={tau} within (0, {self.T}]")
        object.__setattr__(self, "grid", grid)
        if self.calibration_mode not in ("diagonal", "full"):
            raise DomainError(f"calibration_mode must be diagonal or full, got {self.calibration_mode!r}")
        check_positive_int(self.top_k, "top_k")
        check_positive_int(self.folds, "folds")
        check_positive_int(self.n_mixtures, "n_mixtures")

    def effective(self) -> dict:
        """Everything needed to reproduce the run, path-free for stable reports."""
        out = asdict(self)
        out.pop("oracle_path")
        out["grid"] = list(self.grid)
        return out


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    known = {
        "m", "b", "k", "T", "tau", "grid", "n_mixtures", "seed", "top_k",
        "folds", "calibration_mode", "train", "oracle",
    }
    unknown = set(obj) - known
    if unknown:
        raise DomainError(f"{path}: unknown config fields {sorted(unknown)}")
    try:
        kwargs = {f: obj[f] for f in ("m", "b", "k", "T")}
    except KeyError as exc:
        raise DomainError(f"{path}: missing required config field {exc}") from exc
    for f in ("tau", "n_mixtures", "seed", "top_k", "folds", "calibration_mode"):
        if f in obj:
            kwargs[f] = obj[f]
    if "grid" in obj:
        kwargs["grid"] = tuple(obj["grid"])
    if "train" in obj:
        kwargs["train"] = TrainConfig(**obj["train"])
    if "oracle" in obj:
        oracle_path = (path.parent / obj["oracle"]).as_posix()
        if not Path(oracle_path).exists():
            raise DomainError(f"{path}: oracle file {obj['oracle']!r} not found")
        kwargs["oracle_path"] = oracle_path
    return RunConfig(**kwargs)
