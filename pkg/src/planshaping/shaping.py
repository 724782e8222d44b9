"""Potential functions built from guide plans, shaping terms and buffer relabeling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import worlds
from .strips import Atom, GroundAction

# Headline add-effect predicate for each action of the bundled models.
DESIGNATION = {
    "household": {
        "get_key": "key-picked",
        "open_door": "door-opened",
        "is_charged": "charged",
        "goal": "at-destination",
    },
    "mario": {
        "go_down_the_tube": "at-bottom",
        "pickup_key": "has-key",
        "pickup_hidden_key": "has-hidden-key",
        "go_up_the_ladder": "at-upper-platform-with-key",
        "unlock_door": "door-open",
    },
    "minecraft": {
        "get_wood": "wood-picked",
        "get_processed_wood": "wood-processed",
        "make_plank": "plank_made",
        "make_stick": "stick_made",
        "make_ladder": "ladder_made",
    },
    "doorkey": {"pickup_key": "has-key", "open_door": "door-open", "reach_goal": "at-goal"},
}


def state_key_json(key: tuple) -> str:
    pos, facing, flags = key
    return json.dumps([list(pos), facing, sorted(flags)], separators=(",", ":"))


def state_key_from_json(text: str) -> tuple:
    pos, facing, flags = json.loads(text)
    return (tuple(pos), facing, frozenset(flags))


@dataclass(frozen=True)
class PotentialTable:
    """Potentials over (state, action) pairs or over ordered sub-goal fluents.

    Unknown keys have potential 0.
    """

    mode: str  # "state-action" | "state"
    scale: float = 1.0
    entries: dict = field(default_factory=dict)  # (state key, action) -> value
    subgoals: tuple[Atom, ...] = ()

    def __post_init__(self):
        if self.mode not in ("state-action", "state"):
            raise ValueError(f"unknown potential mode {self.mode!r}")
        for v in self.entries.values():
            if not math.isfinite(v):
                raise ValueError("potentials must be finite")

    def sa(self, key: tuple, action: str) -> float:
        return self.entries.get((key, action), 0.0)

    def prefix_length(self, fluent_set) -> int:
        k = 0
        for f in self.subgoals:
            if f not in fluent_set:
                break
            k += 1
        return k

    def of_fluents(self, fluent_set) -> float:
        return self.scale * self.prefix_length(fluent_set)

    def to_json(self) -> str:
        doc = {"mode": self.mode, "scale": self.scale, "subgoals": [str(a) for a in self.subgoals]}
        doc["entries"] = [
            {"state": state_key_json(k), "action": a, "value": v} for (k, a), v in self.entries.items()
        ]
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PotentialTable":
        doc = json.loads(text)
        entries = {(state_key_from_json(e["state"]), e["action"]): e["value"] for e in doc["entries"]}
        return cls(doc["mode"], doc["scale"], entries, tuple(Atom.parse(s) for s in doc["subgoals"]))


ZERO = PotentialTable("state")


def _plan_steps(plan):
    return getattr(plan, "steps", plan)


def potential_from_plan_sa(plan, scale: float = 1.0) -> PotentialTable:
    """Progressive potentials ``scale * (i + 1) / n`` along an n-step (state, action) plan."""
    steps = list(_plan_steps(plan))
    n = len(steps)
    entries = {}
    for i, (state, action) in enumerate(steps):
        key = state.key() if hasattr(state, "key") else state
        entries[(key, action)] = scale * (i + 1) / n
    return PotentialTable("state-action", scale, entries)


def subgoal_fluent(action: GroundAction, designation: dict | None = None) -> Atom:
    wanted = (designation or {}).get(action.name)
    for atom in sorted(action.add):
        if wanted is None or atom.predicate == wanted:
            return atom
    raise ValueError(f"{action} has no add-effect matching {wanted!r}")


def potential_from_subgoals(plan, model: str | None = None, scale: float = 1.0, designation=None) -> PotentialTable:
    """State potential counting the satisfied prefix of the plan's sub-goal fluents."""
    actions = list(getattr(plan, "actions", plan))
    if designation is None:
        designation = DESIGNATION.get(model or getattr(plan, "model", ""), {})
    subgoals = []
    for a in actions:
        f = subgoal_fluent(a, designation)
        if f not in subgoals:
            subgoals.append(f)
    return PotentialTable("state", scale, {}, tuple(subgoals))


class StatePotential:
    """Binds a state-mode table to an environment's fluent map."""

    def __init__(self, env: worlds.GridWorld, table: PotentialTable):
        if table.mode != "state":
            raise ValueError("StatePotential needs a state-mode table")
        self.env = env
        self.table = table
        self._cache: dict = {}

    def level(self, state) -> int:
        key = state.key()
        k = self._cache.get(key)
        if k is None:
            k = self.table.prefix_length(worlds.fluents(self.env, state))
            self._cache[key] = k
        return k

    def __call__(self, state) -> float:
        return self.table.scale * self.level(state)


def shape_state(potential: Callable, s, s_next, gamma: float | None = None) -> float:
    """``Phi(s') - Phi(s)``, or ``gamma * Phi(s') - Phi(s)`` when ``gamma`` is given."""
    if gamma is None:
        return potential(s_next) - potential(s)
    return gamma * potential(s_next) - potential(s)


def shape_lookback(table: PotentialTable, s_t, a_t, s_prev, a_prev, gamma: float) -> float:
    """Look-back advice ``Phi(s_t, a_t) - Phi(s_prev, a_prev) / gamma``; no previous pair means 0."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"discount must lie in (0, 1], got {gamma}")
    prev = 0.0 if s_prev is None else table.sa(_key(s_prev), a_prev)
    return table.sa(_key(s_t), a_t) - prev / gamma


def _key(s):
    return s.key() if hasattr(s, "key") else s


# ---------------------------------------------------------------------------
# Shapers used while training.  Each one sees transitions of an episode in
# order through a per-episode context dict.


class NoShaping:
    name = "none"

    def term(self, s, a, s_next, ctx: dict) -> float:
        return 0.0


class StateShaping:
    name = "state"

    def __init__(self, potential: Callable, gamma: float | None = None, first_visit: bool = False):
        self.potential = potential
        self.gamma = gamma
        self.first_visit = first_visit

    def term(self, s, a, s_next, ctx: dict) -> float:
        f = shape_state(self.potential, s, s_next, self.gamma)
        if self.first_visit:
            best = ctx.get("best", self.potential(s))
            reached = self.potential(s_next)
            f = max(0.0, reached - best)
            ctx["best"] = max(best, reached)
        return f


class LookbackShaping:
    name = "lookback"

    def __init__(self, table: PotentialTable, gamma: float):
        if table.mode != "state-action":
            raise ValueError("look-back shaping needs a state-action table")
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {gamma}")
        self.table = table
        self.gamma = gamma

    def term(self, s, a, s_next, ctx: dict) -> float:
        f = shape_lookback(self.table, s, a, ctx.get("prev_s"), ctx.get("prev_a"), self.gamma)
        ctx["prev_s"], ctx["prev_a"] = s, a
        return f


@dataclass(frozen=True)
class ShapedTransition:
    s: object
    a: str
    s_next: object
    r: float
    r_shaped: float


def relabel_transitions(transitions: Sequence, shaper, episode_of=None) -> list[ShapedTransition]:
    """Relabel an ordered list of ``(s, a, s', r)`` tuples, resetting context between episodes."""
    out = []
    ctx: dict = {}
    last_episode = object()
    for i, (s, a, s_next, r) in enumerate(transitions):
        ep = episode_of(i) if episode_of else 0
        if ep != last_episode:
            ctx, last_episode = {}, ep
        out.append(ShapedTransition(s, a, s_next, r, r + shaper.term(s, a, s_next, ctx)))
    return out
