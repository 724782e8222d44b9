"""Planning, training and suite orchestration behind the command line."""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__, rl, shaping, worlds
from ..guidance import (
    Abstraction,
    GuidePlan,
    HttpBackend,
    OracleBackend,
    ScriptedBackend,
    Transcript,
    direct_plan,
    verified_plan,
)
from .config import ExperimentConfig
from .metrics import RunSummary, SeedMetrics, area_under_curve, first_success, format_aggregate

SUITES = {
    "babyai": ("doorkey-5x5", "empty-random-5x5", "lavagap-5x5"),
    "household": ("household",),
    "mario": ("mario",),
    "minecraft": ("minecraft",),
}
CONDITIONS = ("vanilla", "partial", "complete")

# Budgets used by `reproduce`: small enough for a desk run, large enough to
# separate the three conditions.
REPRODUCE_TRAIN = rl.TrainConfig(max_steps=500_000, max_episodes=200)


class ModeMismatch(ValueError):
    """A plan that cannot drive the requested shaping mode."""


def make_backend(config: ExperimentConfig, abstraction: Abstraction):
    spec = config.backend
    if spec.kind == "oracle":
        return OracleBackend(abstraction, spec.corruption, spec.seed)
    if spec.kind == "mock":
        if not spec.fixture:
            raise ValueError("the mock backend needs a fixture path")
        return ScriptedBackend.from_jsonl(spec.fixture)
    return HttpBackend(spec.url, spec.model, spec.temperature, spec.timeout, spec.retries)


def build_plan(config: ExperimentConfig, backend=None) -> tuple[GuidePlan, Transcript]:
    env = config.make_env()
    abstraction = Abstraction.for_env(env, config.mode)
    backend = backend or make_backend(config, abstraction)
    transcript = Transcript(clock=None)
    if config.loop == "direct":
        plan = direct_plan(backend, abstraction, transcript)
    else:
        plan, transcript = verified_plan(backend, abstraction, config.loop_budget, transcript)
    if config.partial:
        plan = plan.truncated(config.partial, abstraction.problem)
    return plan, transcript


def metrics_line(plan: GuidePlan) -> str:
    # hierarchical plans have no low-level rollout; their reward is the goal indicator
    reward = plan.reward if plan.mode == "deterministic" else float(plan.complete)
    return (
        f"plan_length={len(plan)} reward={reward!r} subgoal_fraction={plan.subgoal_fraction!r} "
        f"complete={str(plan.complete).lower()}"
    )


def make_shaper(env: worlds.GridWorld, plan: GuidePlan | None, mode: str, scale: float, gamma: float,
                gamma_weighted: bool = False):
    """Shaper plus the ordered sub-goals that drive the epsilon decay."""
    if mode == "none":
        return None, None
    if plan is None:
        raise ModeMismatch(f"shaping mode {mode!r} needs a plan")
    if mode == "state":
        if plan.mode != "hierarchical":
            raise ModeMismatch("state shaping needs a hierarchical plan")
        table = shaping.potential_from_subgoals(plan, plan.model, scale)
        potential = shaping.StatePotential(env, table)
        return shaping.StateShaping(potential, gamma if gamma_weighted else None), table.subgoals
    if plan.mode != "deterministic":
        raise ModeMismatch("look-back shaping needs a deterministic plan")
    table = shaping.potential_from_plan_sa(plan, scale)
    return shaping.LookbackShaping(table, gamma), None


def train_seed(env: worlds.GridWorld, plan: GuidePlan | None, mode: str, scale: float, gamma_weighted: bool,
               train: rl.TrainConfig, seed: int) -> tuple[SeedMetrics, str]:
    """One training run; returns its metrics and the curve CSV text."""
    cfg = dataclasses.replace(train, seed=seed)
    shaper, subgoals = make_shaper(env, plan, mode, scale, cfg.gamma, gamma_weighted)
    _, curve = rl.train(env, shaper, cfg, subgoals=subgoals)
    returns = curve.returns()
    episodes = cfg.max_episodes or len(returns)
    m = SeedMetrics(
        seed=seed,
        plan_length=len(plan) if plan is not None else 0,
        reward=plan.reward if plan is not None else 0.0,
        subgoal_fraction=plan.subgoal_fraction if plan is not None else 0.0,
        first_success=first_success(returns),
        auc=area_under_curve(returns, episodes),
        episodes=len(returns),
        steps=sum(r.steps for r in curve.records),
    )
    return m, curve.to_csv(seed)


def _train_job(args):
    env, plan, mode, scale, gw, train, seed = args
    try:
        return train_seed(env, plan, mode, scale, gw, train, seed)
    except Exception as exc:  # one failing seed must not sink the suite
        return SeedMetrics(seed, 0, 0.0, 0.0, None, 0.0, 0, 0, error=f"{type(exc).__name__}: {exc}"), None


def run_seeds(env, plan, mode, scale, gamma_weighted, train, seeds, workers: int = 1):
    jobs = [(env, plan, mode, scale, gamma_weighted, train, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_train_job, jobs))
    return [_train_job(j) for j in jobs]


def write_curves(outdir: Path, results) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for m, csv in results:
        if csv is not None:
            (outdir / f"curve_seed{m.seed}.csv").write_text(csv, encoding="utf-8")


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def run_training(config: ExperimentConfig, plan: GuidePlan | None, out: Path, workers: int = 1) -> dict:
    env = config.make_env()
    # reject mismatches before spending any time
    make_shaper(env, plan, config.shaping, config.scale, config.train.gamma, config.gamma_weighted)
    results = run_seeds(env, plan, config.shaping, config.scale, config.gamma_weighted, config.train,
                        config.seeds, workers)
    write_curves(out, results)
    summary = RunSummary(config.env, config.shaping, tuple(m for m, _ in results))
    doc = {"version": __version__, "seeds": list(config.seeds), "runs": [summary.to_dict()]}
    (out / "summary.json").write_text(_json(doc), encoding="utf-8")
    (out / "config.ini").write_text(config.to_ini(), encoding="utf-8")
    return doc


# ---------------------------------------------------------------------------
# Suites


def suite_plans(env: worlds.GridWorld) -> tuple[str, GuidePlan, GuidePlan]:
    """(shaping mode, complete plan, one-sub-goal plan) from the oracle backend."""
    if env.family == "turn":
        ab = Abstraction.deterministic(env)
        full, _ = verified_plan(OracleBackend(ab), ab, transcript=Transcript(clock=None))
        # the low-level counterpart of a one-sub-goal plan: the first half of the trajectory
        return "lookback", full, full.truncated(max(1, len(full) // 2))
    ab = Abstraction.hierarchical(worlds.hierarchical_model(env), env)
    full, _ = verified_plan(OracleBackend(ab), ab, transcript=Transcript(clock=None))
    return "state", full, full.truncated(1, ab.problem)


def reproduce(suite: str, out: Path, seeds=(0, 1, 2, 3, 4), train: rl.TrainConfig | None = None,
              slip: float | None = None, workers: int = 1, figures: bool = True) -> dict:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    train = train or REPRODUCE_TRAIN
    out.mkdir(parents=True, exist_ok=True)
    rows, runs, curves = [], [], {}
    for env_id in SUITES[suite]:
        env = worlds.make(env_id, slip_prob=slip)
        mode, full, part = suite_plans(env)
        env_dir = out / env_id
        env_dir.mkdir(parents=True, exist_ok=True)
        (env_dir / "plan.json").write_text(full.to_json(), encoding="utf-8")
        (env_dir / "plan_partial.json").write_text(part.to_json(), encoding="utf-8")
        for cond, plan, m in (("vanilla", None, "none"), ("partial", part, mode), ("complete", full, mode)):
            results = run_seeds(env, plan, m, 1.0, False, train, seeds, workers)
            write_curves(env_dir / cond, results)
            summary = RunSummary(env_id, cond, tuple(r for r, _ in results))
            runs.append(summary.to_dict())
            rows.append(summary)
            curves[(env_id, cond)] = [csv for _, csv in results if csv is not None]
    doc = {
        "version": __version__,
        "suite": suite,
        "seeds": list(seeds),
        "train": dataclasses.asdict(dataclasses.replace(train, seed=0)),
        "slip": slip,
        "runs": runs,
        "ordering": _ordering(runs),
    }
    (out / "summary.json").write_text(_json(doc), encoding="utf-8")
    (out / "report.txt").write_text(report_table(rows), encoding="utf-8")
    if figures:
        write_figures(out, suite, curves, train.max_episodes)
    doc["all_failed"] = all(len(r["failed_seeds"]) == len(seeds) for r in runs)
    return doc


def _ordering(runs) -> dict:
    by = {}
    for r in runs:
        by.setdefault(r["env"], {})[r["condition"]] = r.get("auc_median")
    out = {}
    for env_id, med in by.items():
        v, p, c = (med.get(k) for k in CONDITIONS)
        if None in (v, p, c):
            out[env_id] = None
            continue
        out[env_id] = {
            "complete_beats_vanilla": c > v,
            "complete_ratio_ok": c >= 1.2 * v,
            "partial_between": v < p < c,
        }
    return out


def report_table(rows) -> str:
    header = ["env", "condition", "auc median", "auc mean ± std", "plan length", "subgoal fraction", "first success"]
    body = []
    for s in rows:
        ok = s.ok
        if not ok:
            body.append([s.env, s.condition, "failed", "", "", "", ""])
            continue
        st = s.stats()
        fs = st["first_success_mean"]
        body.append([
            s.env,
            s.condition,
            f"{st['auc_median']:.3f}",
            format_aggregate([m.auc for m in ok]),
            format_aggregate([m.plan_length for m in ok]),
            format_aggregate([m.subgoal_fraction for m in ok]),
            "never" if fs is None else f"{fs:.1f}",
        ])
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _returns_from_csv(text: str) -> list[float]:
    return [float(line.split(",")[1]) for line in text.splitlines()[1:] if line]


def write_figures(out: Path, suite: str, curves: dict, episodes: int, window: int = 10) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for env_id in SUITES[suite]:
        fig, ax = plt.subplots(figsize=(6, 4))
        for cond in CONDITIONS:
            runs = [_returns_from_csv(c) for c in curves.get((env_id, cond), [])]
            if not runs:
                continue
            n = episodes or max(len(r) for r in runs)
            grid = np.zeros((len(runs), n))
            for i, r in enumerate(runs):
                grid[i, : min(n, len(r))] = r[:n]
            mean = grid.mean(axis=0)
            kernel = np.ones(window) / window
            smooth = np.convolve(mean, kernel, mode="valid")
            ax.plot(np.arange(len(smooth)) + window - 1, smooth, label=cond)
        ax.set_xlabel("episode")
        ax.set_ylabel(f"return ({window}-episode mean)")
        ax.set_title(env_id)
        ax.legend()
        fig.tight_layout()
        path = out / f"{env_id}.png"
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written


def default_workers() -> int:
    return max(1, min(5, os.cpu_count() or 1))
