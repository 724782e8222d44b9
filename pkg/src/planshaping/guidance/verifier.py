"""Action feasibility checks and the reasons reported back to the proposer."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import strips, worlds
from .prompts import FEEDBACK_ORDER


@dataclass(frozen=True)
class Feasibility:
    """Partition of the action set at one state.

    Unpacks as ``(feasible, infeasible)``.  ``unsafe`` holds feasible actions
    that end the episode badly (stepping into lava).
    """

    feasible: tuple
    infeasible: tuple
    unsafe: frozenset = frozenset()
    reasons: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.feasible, self.infeasible))


def _blocked_reason(env: worlds.GridWorld, state: worlds.AgentState, action: str) -> str | None:
    """Why ``action`` cannot change the determinized state, or None when it can."""
    if action in ("turn-left", "turn-right"):
        return None
    ahead = worlds.front_cell(state)
    ch = env.cell(ahead)
    holding = "has-key" in state.flags
    door_open = worlds._door_open(state.flags, ahead)
    if action == "forward":
        if ch == "#":
            return "there is a wall in front of you"
        if ch == "D" and not door_open:
            return "the door in front of you is locked"
        if ch == "K" and not holding:
            return "the key is in front of you and blocks the way"
        return None
    if action == "pickup":
        if ch != "K" or holding:
            return "you are not facing the key"
        return None
    if action == "toggle":
        if ch != "D":
            return "you are not facing the door"
        if door_open:
            return "the door is already open"
        if not holding:
            return "you do not have the key"
        return None
    raise ValueError(f"unknown action {action!r}")


def feasible_lowlevel_actions(env: worlds.GridWorld, state: worlds.AgentState) -> Feasibility:
    if env.family != "turn":
        raise worlds.UnsupportedError("low-level feasibility is defined for the turn-based family")
    ordered = [a for a in FEEDBACK_ORDER if a in env.actions]
    ok, bad, unsafe, reasons = [], [], set(), {}
    for a in ordered:
        why = _blocked_reason(env, state, a)
        if why is None:
            ok.append(a)
            if a == "forward" and env.cell(worlds.front_cell(state)) == "L":
                unsafe.add(a)
        else:
            bad.append(a)
            reasons[a] = why
    return Feasibility(tuple(ok), tuple(bad), frozenset(unsafe), reasons)


# Reasons for a missing (True) or unwanted (False) precondition literal, keyed by predicate.
REASONS = {
    "mario": {
        ("at-bottom", True): "you are still at upstairs",
        ("at-upper-platform", True): "you are not at the upper platform",
        ("has-key", True): "you do not have key with you",
        ("has-hidden-key", True): "you do not have hidden key with you",
        ("at-upper-platform-with-key", True): "you are not at the upper platform with the key",
        ("at-upper-platform-with-hidden-key", True): "you are not at the upper platform with the hidden key",
    },
    "household": {
        ("holding-key", True): "you do not have key with you",
        ("key-picked", True): "you do not have key with you",
        ("holding-key", False): "you are already holding the key",
        ("door-opened", True): "the door is not open yet",
        ("door-opened", False): "the door is already open",
        ("charged", True): "you are not charged",
    },
    "minecraft": {
        ("plank_made", True): "you do not have plank",
        ("stick_made", True): "you do not have stick",
        ("wood-picked", True): "you do not have {0}",
        ("wood-picked", False): "you already picked {0}",
        ("wood-processed", True): "{0} is not processed",
        ("wood-processed", False): "{0} is already processed",
        ("processed-to-plank", False): "{0} was already made into a plank",
        ("processed-to-stick", False): "{0} was already made into a stick",
    },
    "doorkey": {
        ("has-key", True): "you do not have key with you",
        ("has-key", False): "you already have the key",
        ("door-open", True): "the door is not open",
        ("door-open", False): "the door is already open",
    },
}


def symbolic_reason(model: str, state: frozenset, action: strips.GroundAction) -> str:
    missing = strips.unsatisfied(state, action)
    if not missing:
        raise ValueError(f"{action} is applicable")
    atom, positive = missing[0]
    template = REASONS.get(model, {}).get((atom.predicate, positive))
    if template is not None:
        return template.format(*atom.args)
    return f"{atom} does not hold" if positive else f"{atom} already holds"


def symbolic_feasibility(state: frozenset, actions) -> Feasibility:
    ok, bad = strips.valid_actions(state, actions)
    return Feasibility(tuple(ok), tuple(bad))
