"""Aggregation across seeds and the table formatting used in reports."""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass


def aggregate(values) -> tuple[float, float]:
    """Mean and sample (n - 1) standard deviation; a single value has deviation 0."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("aggregate needs at least one value")
    if len(vals) == 1:
        return vals[0], 0.0
    return statistics.fmean(vals), statistics.stdev(vals)


def _num(x: float, digits: int) -> str:
    r = round(x, digits)
    if r == 0:
        r = 0.0  # drop negative zero
    return format(r, f".{digits}f").rstrip("0").rstrip(".")


def format_aggregate(values, digits: int = 3, parenthesize: bool = False) -> str:
    mean, std = aggregate(values)
    text = f"{_num(mean, digits)} ± {_num(std, digits)}"
    return f"({text})" if parenthesize else text


def area_under_curve(returns, episodes: int | None = None) -> float:
    """Mean return over a fixed episode budget; episodes never run count as 0."""
    returns = list(returns)
    n = episodes if episodes else len(returns)
    if n <= 0:
        return 0.0
    return sum(returns[:n]) / n


def first_success(returns) -> int | None:
    for i, r in enumerate(returns):
        if r > 0:
            return i
    return None


@dataclass(frozen=True)
class SeedMetrics:
    seed: int
    plan_length: int
    reward: float
    subgoal_fraction: float
    first_success: int | None
    auc: float
    episodes: int
    steps: int
    error: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunSummary:
    env: str
    condition: str
    seeds: tuple

    @property
    def ok(self) -> list[SeedMetrics]:
        return [s for s in self.seeds if not s.error]

    def stats(self) -> dict:
        ok = self.ok
        out = {"env": self.env, "condition": self.condition, "failed_seeds": [s.seed for s in self.seeds if s.error]}
        if not ok:
            return out
        aucs = [s.auc for s in ok]
        out["auc_median"] = statistics.median(aucs)
        out["auc_mean"], out["auc_std"] = aggregate(aucs)
        out["plan_length_mean"], out["plan_length_std"] = aggregate([s.plan_length for s in ok])
        out["subgoal_fraction_mean"], out["subgoal_fraction_std"] = aggregate([s.subgoal_fraction for s in ok])
        hits = [s.first_success for s in ok if s.first_success is not None]
        out["first_success_mean"] = aggregate(hits)[0] if hits else None
        return out

    def to_dict(self) -> dict:
        return {**self.stats(), "per_seed": [s.to_dict() for s in self.seeds]}
