"""Sparse-reward gridworlds, their deterministic abstraction and fluent maps.

Layouts are ASCII files under ``assets/layouts``.  A header of ``key: value``
lines is followed by a ``---`` separator and the grid, one character per cell:

    #  wall                 .  floor              A  agent start
    G  goal                 K  key                D  locked door
    L  lava                 T  tube entrance      t  tube exit
    H  ladder (bottom)      h  ladder top         R  rock hiding a key
    C  charging dock        W  raw wood           P  wood processing unit
    1  plank workshop       2  stick workshop     3  ladder workshop

Agent state is a value object; environments never mutate.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from importlib import resources

from .strips import Atom

TURN_ACTIONS = ("turn-left", "turn-right", "forward", "pickup", "toggle")
CARDINAL_ACTIONS = ("up", "down", "left", "right")
DIRECTIONS = ((1, 0), (0, 1), (-1, 0), (0, -1))  # right, down, left, up
FACING_NAMES = ("right", "down", "left", "up")
CARDINAL_MOVES = {"up": (0, -1), "down": (0, 1), "left": (-1, 0), "right": (1, 0)}

ENVIRONMENTS = {
    "doorkey-5x5": "doorkey_5x5",
    "doorkey-6x6": "doorkey_6x6",
    "empty-random-5x5": "empty_random_5x5",
    "empty-5x5": "empty_5x5",
    "empty-6x6": "empty_6x6",
    "lavagap-5x5": "lavagap_5x5",
    "household": "household",
    "mario": "mario",
    "minecraft": "minecraft",
}

# Sub-goal counts reported for the long-horizon domains; doorkey is our own model.
SUBGOAL_COUNTS = {"household": 5, "mario": 4, "minecraft": 4, "doorkey": 3}

# Ordered milestones used to score how far a plan gets.  Each milestone is a
# group of predicates that must all hold (any grounding) at some point.
MILESTONES = {
    "household": (("key-picked",), ("door-opened",), ("charged",), ("at-destination",)),
    "mario": (
        ("at-bottom",),
        ("has-key",),
        ("has-hidden-key",),
        ("at-upper-platform-with-key", "at-upper-platform-with-hidden-key"),
    ),
    "minecraft": (("wood-picked",), ("wood-processed",), ("plank_made", "stick_made"), ("ladder_made",)),
    "doorkey": (("has-key",), ("door-open",), ("at-goal",)),
}


class UnsupportedError(ValueError):
    pass


class TerminalStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentState:
    pos: tuple[int, int]
    facing: int = -1  # -1 for the cardinal family
    flags: frozenset = frozenset()
    steps: int = 0

    def key(self) -> tuple:
        """Lookup key; excludes the elapsed-step count."""
        return (self.pos, self.facing, self.flags)

    def to_dict(self) -> dict:
        return {"pos": list(self.pos), "facing": self.facing, "flags": sorted(self.flags), "steps": self.steps}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentState":
        return cls(tuple(d["pos"]), d.get("facing", -1), frozenset(d.get("flags", ())), d.get("steps", 0))


@dataclass(frozen=True)
class StepOutcome:
    next_state: AgentState
    reward: float
    done: bool
    reason: str | None  # "goal" | "lava" | "horizon" | None
    executed: str


def babyai_reward(n_steps: int, horizon: int) -> float:
    return 1 - 0.9 * (n_steps / horizon)


@dataclass(frozen=True)
class GridWorld:
    name: str
    kind: str  # babyai | household | mario | minecraft
    family: str  # turn | cardinal
    rows: tuple[str, ...]
    actions: tuple[str, ...]
    start_pos: tuple[int, int]
    start_facing: int
    max_steps: int
    slip_prob: float = 0.1
    mission: str = ""
    random_start: bool = False
    split_row: int = 0
    version: int = 1
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.slip_prob <= 1.0:
            raise ValueError(f"slip_prob must lie in [0, 1], got {self.slip_prob}")
        if self._index is None:
            index: dict[str, list] = {}
            for y, row in enumerate(self.rows):
                for x, ch in enumerate(row):
                    index.setdefault(ch, []).append((x, y))
            object.__setattr__(self, "_index", index)

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def height(self) -> int:
        return len(self.rows)

    def cell(self, pos: tuple[int, int]) -> str:
        return self.rows[pos[1]][pos[0]]

    def cells_of(self, ch: str) -> list[tuple[int, int]]:
        return list(self._index.get(ch, ()))

    @property
    def woods(self) -> list[tuple[int, int]]:
        return self.cells_of("W")

    def is_terminal(self, state: AgentState) -> bool:
        return "goal" in state.flags or "lava" in state.flags or state.steps >= self.max_steps

    def free_cells(self) -> list[tuple[int, int]]:
        return [(x, y) for y, row in enumerate(self.rows) for x, ch in enumerate(row) if ch in ".A"]


# ---------------------------------------------------------------------------
# Layout loading


def parse_layout(text: str, name: str = "") -> GridWorld:
    header, _, grid = text.partition("\n---\n")
    meta = {}
    for line in header.splitlines():
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        k, _, v = line.partition(":")
        meta[k.strip()] = v.strip()
    rows = tuple(r for r in grid.splitlines() if r.strip())
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"layout {name}: ragged rows")
    family = meta.get("family", "cardinal")
    kind = meta.get("kind", "babyai")
    starts = [(x, y) for y, r in enumerate(rows) for x, ch in enumerate(r) if ch == "A"]
    if len(starts) != 1:
        raise ValueError(f"layout {name}: expected exactly one start cell 'A'")
    if family == "turn":
        actions = tuple(meta.get("actions", " ".join(TURN_ACTIONS)).split())
        facing = FACING_NAMES.index(meta.get("facing", "right"))
        horizon = int(meta.get("horizon", 100))
    else:
        actions = CARDINAL_ACTIONS
        facing = -1
        horizon = int(meta.get("horizon", 500))
    for a in actions:
        if a not in TURN_ACTIONS + CARDINAL_ACTIONS:
            raise ValueError(f"layout {name}: unknown action {a}")
    return GridWorld(
        name=meta.get("name", name),
        kind=kind,
        family=family,
        rows=rows,
        actions=actions,
        start_pos=starts[0],
        start_facing=facing,
        max_steps=horizon,
        slip_prob=float(meta.get("slip", 0.1)),
        mission=meta.get("mission", ""),
        random_start=meta.get("random_start", "no") == "yes",
        split_row=int(meta.get("split_row", 0)),
        version=int(meta.get("version", 1)),
    )


def load_layout_text(env_id: str) -> str:
    if env_id not in ENVIRONMENTS:
        raise KeyError(f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}")
    path = resources.files("planshaping") / "assets" / "layouts" / f"{ENVIRONMENTS[env_id]}.txt"
    return path.read_text(encoding="utf-8")


def make(env_id: str, slip_prob: float | None = None, max_steps: int | None = None) -> GridWorld:
    env = parse_layout(load_layout_text(env_id), env_id)
    changes = {}
    if slip_prob is not None:
        changes["slip_prob"] = slip_prob
    if max_steps is not None:
        changes["max_steps"] = max_steps
    return dataclasses.replace(env, **changes) if changes else env


def determinize(env: GridWorld) -> GridWorld:
    return dataclasses.replace(env, slip_prob=0.0)


# ---------------------------------------------------------------------------
# Dynamics


def reset(env: GridWorld, seed: int = 0) -> AgentState:
    if env.random_start:
        rng = random.Random(seed)
        cells = env.free_cells()
        return AgentState(cells[rng.randrange(len(cells))], rng.randrange(4))
    return AgentState(env.start_pos, env.start_facing)


def step(env: GridWorld, state: AgentState, action: str, rng: random.Random | None = None) -> StepOutcome:
    if env.is_terminal(state):
        raise TerminalStateError(f"cannot step terminal state {state}")
    if action not in env.actions:
        raise ValueError(f"action {action!r} not available in {env.name}")
    if env.slip_prob > 0.0:
        if rng is None:
            raise ValueError("a stochastic environment needs an rng")
        if rng.random() < env.slip_prob:
            others = [a for a in env.actions if a != action]
            action = others[rng.randrange(len(others))]
    if env.family == "turn":
        pos, facing, flags, reason = _turn_step(env, state, action)
    else:
        pos, flags, reason = _RULES[env.kind](env, state, CARDINAL_MOVES[action])
        facing = -1
    steps = state.steps + 1
    reward = 0.0
    if reason == "goal":
        reward = babyai_reward(steps, env.max_steps) if env.kind == "babyai" else 1.0
    elif reason is None and steps >= env.max_steps:
        reason = "horizon"
    return StepOutcome(AgentState(pos, facing, flags, steps), reward, reason is not None, reason, action)


def front_cell(state: AgentState) -> tuple[int, int]:
    dx, dy = DIRECTIONS[state.facing]
    return state.pos[0] + dx, state.pos[1] + dy


def _door_open(flags: frozenset, pos) -> bool:
    return f"open:{pos[0]},{pos[1]}" in flags


def _turn_step(env: GridWorld, state: AgentState, action: str):
    pos, facing, flags = state.pos, state.facing, state.flags
    if action == "turn-left":
        return pos, (facing - 1) % 4, flags, None
    if action == "turn-right":
        return pos, (facing + 1) % 4, flags, None
    ahead = front_cell(state)
    ch = env.cell(ahead)
    if action == "forward":
        if ch == "#" or (ch == "D" and not _door_open(flags, ahead)) or (ch == "K" and "has-key" not in flags):
            return pos, facing, flags, None
        if ch == "L":
            return ahead, facing, flags | {"lava"}, "lava"
        if ch == "G":
            return ahead, facing, flags | {"goal"}, "goal"
        return ahead, facing, flags, None
    if action == "pickup":
        if ch == "K" and "has-key" not in flags:
            return pos, facing, flags | {"has-key"}, None
        return pos, facing, flags, None
    if action == "toggle":
        if ch == "D" and "has-key" in flags and not _door_open(flags, ahead):
            return pos, facing, flags | {f"open:{ahead[0]},{ahead[1]}"}, None
        return pos, facing, flags, None
    raise ValueError(action)


def _household(env: GridWorld, state: AgentState, move):
    x, y = state.pos
    nxt = (x + move[0], y + move[1])
    ch = env.cell(nxt)
    flags = state.flags
    if ch == "#":
        return state.pos, flags, None
    if ch == "D" and "door" not in flags:
        if "key" not in flags:
            return state.pos, flags, None
        flags = flags | {"door"}
    elif ch == "K" and "key" not in flags:
        flags = flags | {"key"}
    elif ch == "C" and "charged" not in flags:
        flags = flags | {"charged"}
    elif ch == "G" and "charged" in flags:
        return nxt, flags | {"goal"}, "goal"
    return nxt, flags, None


def _mario(env: GridWorld, state: AgentState, move):
    x, y = state.pos
    nxt = (x + move[0], y + move[1])
    ch = env.cell(nxt)
    flags = state.flags
    if ch == "#":
        return state.pos, flags, None
    if ch == "T":
        return env.cells_of("t")[0], flags | {"bottom"}, None
    if ch == "H":
        if "ladder-broken" in flags:
            return state.pos, flags, None
        return env.cells_of("h")[0], flags | {"ladder-broken", "returned"}, None
    if ch == "D":
        if "key" in flags and "hidden-key" in flags:
            return nxt, flags | {"goal"}, "goal"
        return state.pos, flags, None
    if ch == "K" and "key" not in flags:
        flags = flags | {"key"}
    elif ch == "R" and "hidden-key" not in flags:
        flags = flags | {"hidden-key"}
    return nxt, flags, None


def _minecraft(env: GridWorld, state: AgentState, move):
    x, y = state.pos
    nxt = (x + move[0], y + move[1])
    ch = env.cell(nxt)
    flags = state.flags
    if ch == "#":
        return state.pos, flags, None
    n_wood = len(env.woods)
    if ch == "W":
        w = env.woods.index(nxt)
        flags = flags | {f"picked:wood{w}"}
    elif ch == "P":
        new = {f"processed:wood{w}" for w in range(n_wood) if f"picked:wood{w}" in flags}
        flags = flags | new
    elif ch in "12":
        product = "plank" if ch == "1" else "stick"
        if product not in flags:
            for w in range(n_wood):
                if (
                    f"processed:wood{w}" in flags
                    and f"plank:wood{w}" not in flags
                    and f"stick:wood{w}" not in flags
                ):
                    flags = flags | {product, f"{product}:wood{w}"}
                    break
    elif ch == "3" and "plank" in flags and "stick" in flags:
        return nxt, flags | {"ladder", "goal"}, "goal"
    return nxt, flags, None


_RULES = {"household": _household, "mario": _mario, "minecraft": _minecraft}


# ---------------------------------------------------------------------------
# Fluent map into the hierarchical models


def hierarchical_model(env: GridWorld) -> str:
    """Name of the bundled PDDL model for ``env``."""
    if env.kind in ("household", "mario", "minecraft"):
        return env.kind
    if env.kind == "babyai" and env.name.startswith("doorkey"):
        return "doorkey"
    raise UnsupportedError(f"{env.name} has no bundled hierarchical model")


def fluents(env: GridWorld, state: AgentState) -> frozenset:
    model = hierarchical_model(env)
    f = state.flags
    out = []
    if model == "household":
        if state.pos == env.start_pos:
            out.append(Atom("at-starting-location"))
        if "key" in f:
            # picking the key is permanent progress even after the door consumes it
            out.append(Atom("key-picked"))
            if "door" not in f:
                out.append(Atom("holding-key"))
        if "door" in f:
            out.append(Atom("door-opened"))
        if "charged" in f:
            out.append(Atom("charged"))
        if "goal" in f:
            out.append(Atom("at-destination"))
    elif model == "mario":
        if state.pos[1] < env.split_row:
            out.append(Atom("at-upper-platform"))
        if "bottom" in f:
            out.append(Atom("at-bottom"))
        if "key" in f:
            out.append(Atom("has-key"))
        if "hidden-key" in f:
            out.append(Atom("has-hidden-key"))
        if "returned" in f and "key" in f:
            out.append(Atom("at-upper-platform-with-key"))
        if "returned" in f and "hidden-key" in f:
            out.append(Atom("at-upper-platform-with-hidden-key"))
        if "goal" in f:
            out.append(Atom("door-open"))
    elif model == "minecraft":
        if state.pos == env.start_pos:
            out.append(Atom("at-starting-location"))
        for w in range(len(env.woods)):
            name = f"wood{w}"
            if f"picked:{name}" in f:
                out.append(Atom("wood-picked", (name,)))
            if f"processed:{name}" in f:
                out.append(Atom("wood-processed", (name,)))
            if f"plank:{name}" in f:
                out.append(Atom("processed-to-plank", (name,)))
            if f"stick:{name}" in f:
                out.append(Atom("processed-to-stick", (name,)))
        for flag, pred in (("plank", "plank_made"), ("stick", "stick_made"), ("ladder", "ladder_made")):
            if flag in f:
                out.append(Atom(pred))
    else:  # doorkey
        if state.pos == env.start_pos:
            out.append(Atom("at-start"))
        if "has-key" in f:
            out.append(Atom("has-key"))
        if any(x.startswith("open:") for x in f):
            out.append(Atom("door-open"))
        if "goal" in f:
            out.append(Atom("at-goal"))
    return frozenset(out)


def subgoal_count(env_or_model) -> int:
    model = env_or_model if isinstance(env_or_model, str) else hierarchical_model(env_or_model)
    if model not in SUBGOAL_COUNTS:
        raise UnsupportedError(f"no sub-goal count for {model}")
    return SUBGOAL_COUNTS[model]


def milestones_reached(model: str, fluent_history) -> int:
    """Length of the ordered milestone prefix met by the union of ``fluent_history``."""
    seen = set()
    for fs in fluent_history:
        seen |= {a.predicate for a in fs}
    k = 0
    for group in MILESTONES[model]:
        if not all(p in seen for p in group):
            break
        k += 1
    return k


# ---------------------------------------------------------------------------
# Text observation


def render_text(env: GridWorld, state: AgentState) -> str:
    if env.family != "turn":
        raise UnsupportedError("text rendering is defined for the turn-based family")
    ahead = set()
    cur = state.pos
    while True:
        dx, dy = DIRECTIONS[state.facing]
        cur = (cur[0] + dx, cur[1] + dy)
        if env.cell(cur) not in ".A":
            break
        ahead.add(cur)
    lines = []
    for y in range(1, env.height - 1):
        tokens = []
        for x in range(1, env.width - 1):
            ch = env.rows[y][x]
            if (x, y) == state.pos:
                tok = "agent"
            elif ch == "#":
                tok = "wall"
            elif ch == "K" and "has-key" not in state.flags:
                tok = "key"
            elif ch == "D":
                tok = "door"
            elif ch == "L":
                tok = "lava"
            elif ch == "G":
                tok = "goal"
            else:
                tok = "empty" if (x, y) in ahead else "unseen"
            tokens.append(tok)
        lines.append(" ".join(tokens))
    return "\n".join(lines) + f"\n\nYou (agent) are currently facing {FACING_NAMES[state.facing]}."


# ---------------------------------------------------------------------------
# State-space enumeration on the deterministic abstraction


def enumerate_states(env: GridWorld, starts=None, limit: int = 200_000) -> list[AgentState]:
    """Reachable non-terminal and terminal states (step counts zeroed), BFS order."""
    det = determinize(env)
    det = dataclasses.replace(det, max_steps=10**9)
    if starts is None:
        starts = [reset(env, 0)]
        if env.random_start:
            starts = [AgentState(c, f) for c in env.free_cells() for f in range(4)]
    seen = {}
    order = []
    queue = list(starts)
    for s in queue:
        seen[s.key()] = s
        order.append(s)
    i = 0
    while i < len(queue):
        s = queue[i]
        i += 1
        if det.is_terminal(s):
            continue
        for a in det.actions:
            n = step(det, s, a).next_state
            n = AgentState(n.pos, n.facing, n.flags, 0)
            if n.key() not in seen:
                seen[n.key()] = n
                order.append(n)
                queue.append(n)
                if len(order) > limit:
                    raise ValueError(f"state space of {env.name} exceeds {limit}")
    return order
