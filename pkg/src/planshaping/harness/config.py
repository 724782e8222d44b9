"""Experiment configuration: an INI file with one section per concern.

Every key has a default; the resolved configuration (defaults included) is
written back into the run directory so the run can be repeated from it.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .. import strips, worlds
from ..guidance.loop import LoopBudget
from ..rl import TrainConfig

SHAPING_MODES = ("none", "state", "lookback")
BACKENDS = ("oracle", "mock", "http")


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "oracle"
    corruption: float = 0.0
    seed: int = 0
    fixture: str = ""
    url: str = "http://localhost:8000/v1/chat/completions"
    model: str = "gpt-4"
    temperature: float = 0.5
    timeout: float = 60.0
    retries: int = 3


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    mode: str = "hierarchical"  # abstraction the plan is built over
    loop: str = "verified"  # verified | direct
    backend: BackendSpec = field(default_factory=BackendSpec)
    budget: LoopBudget | None = None
    shaping: str = "state"
    scale: float = 1.0
    gamma_weighted: bool = False
    partial: int = 0  # keep only this many plan steps; 0 keeps all
    slip: float | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    out: str = "runs"

    def __post_init__(self):
        if self.env not in worlds.ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.env!r}")
        if self.mode not in ("hierarchical", "deterministic"):
            raise ValueError(f"unknown abstraction mode {self.mode!r}")
        if self.mode == "hierarchical":
            name = worlds.hierarchical_model(worlds.make(self.env))
            if name not in strips.BUNDLED:
                raise ValueError(f"no bundled PDDL model for {self.env}")
        if self.loop not in ("verified", "direct"):
            raise ValueError(f"unknown loop {self.loop!r}")
        if self.shaping not in SHAPING_MODES:
            raise ValueError(f"unknown shaping mode {self.shaping!r}")
        if self.backend.kind not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend.kind!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.partial < 0:
            raise ValueError("partial must be non-negative")
        self.train.validate()

    @property
    def loop_budget(self) -> LoopBudget:
        if self.budget is not None:
            return self.budget
        kind = worlds.make(self.env).kind
        return LoopBudget.default_for(kind)

    def make_env(self) -> worlds.GridWorld:
        return worlds.make(self.env, slip_prob=self.slip)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        budget = self.loop_budget
        cp["experiment"] = {
            "env": self.env,
            "mode": self.mode,
            "loop": self.loop,
            "seeds": " ".join(map(str, self.seeds)),
            "out": self.out,
            "slip": "" if self.slip is None else repr(self.slip),
        }
        cp["backend"] = {k: str(v) for k, v in dataclasses.asdict(self.backend).items()}
        cp["loop"] = {"max_steps": str(budget.max_steps), "max_backprompts": str(budget.max_backprompts_per_step)}
        cp["shaping"] = {
            "mode": self.shaping,
            "scale": repr(self.scale),
            "gamma_weighted": "yes" if self.gamma_weighted else "no",
            "partial": str(self.partial),
        }
        cp["train"] = {k: str(v) for k, v in dataclasses.asdict(self.train).items() if k != "seed"}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)


def typed_value(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "yes", "true", "on")
    if isinstance(like, int):
        return int(float(value))
    if isinstance(like, float):
        return float(value)
    return value


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
    cp.read_string(text)
    overrides = overrides or {}
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    if "env" not in exp and "env" not in overrides:
        raise ValueError("config needs [experiment] env")

    backend_defaults = BackendSpec()
    backend_kw = {}
    if cp.has_section("backend"):
        for k, v in cp["backend"].items():
            if not hasattr(backend_defaults, k):
                raise ValueError(f"unknown backend key {k!r}")
            backend_kw[k] = typed_value(v, getattr(backend_defaults, k))
    if "backend" in overrides:
        backend_kw["kind"] = overrides["backend"]

    train_defaults = TrainConfig()
    train_kw = {}
    if cp.has_section("train"):
        for k, v in cp["train"].items():
            if not hasattr(train_defaults, k) or k == "seed":
                raise ValueError(f"unknown train key {k!r}")
            train_kw[k] = typed_value(v, getattr(train_defaults, k))

    budget = None
    steps = overrides.get("budget_steps")
    bps = overrides.get("budget_backprompts")
    if cp.has_section("loop"):
        steps = steps or int(cp["loop"].get("max_steps", 0)) or None
        bps = bps or int(cp["loop"].get("max_backprompts", 0)) or None
    sh = cp["shaping"] if cp.has_section("shaping") else {}
    env = overrides.get("env") or exp["env"]
    if steps or bps:
        default = LoopBudget.default_for(worlds.make(env).kind)
        budget = LoopBudget(steps or default.max_steps, bps or default.max_backprompts_per_step)

    seeds = overrides.get("seeds")
    if seeds is None:
        seeds = tuple(int(s) for s in exp.get("seeds", "0 1 2 3 4").replace(",", " ").split())
    slip = overrides.get("slip")
    if slip is None and exp.get("slip", "").strip():
        slip = float(exp["slip"])
    return ExperimentConfig(
        env=env,
        mode=exp.get("mode", "hierarchical"),
        loop=exp.get("loop", "verified"),
        backend=BackendSpec(**backend_kw),
        budget=budget,
        shaping=overrides.get("shaping") or sh.get("mode", "state"),
        scale=float(sh.get("scale", 1.0)),
        gamma_weighted=typed_value(sh.get("gamma_weighted", "no"), False),
        partial=int(sh.get("partial", 0)),
        slip=slip,
        train=TrainConfig(**train_kw),
        seeds=tuple(seeds),
        out=overrides.get("out") or exp.get("out", "runs"),
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(p.read_text(encoding="utf-8"), overrides)
