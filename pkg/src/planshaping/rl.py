"""Tabular Q-learning with replay, the sub-goal driven epsilon schedule, and value iteration."""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from . import worlds
from .shaping import NoShaping, StatePotential, state_key_json


# ---------------------------------------------------------------------------
# Tables


class StateIndex:
    """Interns state keys to dense integer ids."""

    def __init__(self):
        self.ids: dict = {}
        self.states: list = []

    def __len__(self) -> int:
        return len(self.states)

    def id(self, state) -> int:
        key = state.key()
        i = self.ids.get(key)
        if i is None:
            i = len(self.states)
            self.ids[key] = i
            self.states.append(state)
        return i


class QTable:
    """Action values indexed by state key; unseen entries read as 0."""

    def __init__(self, actions: Sequence[str], index: StateIndex | None = None, capacity: int = 256):
        self.actions = tuple(actions)
        self.action_ids = {a: i for i, a in enumerate(self.actions)}
        self.index = index or StateIndex()
        self.values = np.zeros((capacity, len(self.actions)))

    def row(self, state) -> np.ndarray:
        i = self.index.id(state)
        self._fit(i + 1)
        return self.values[i]

    def _fit(self, n: int) -> None:
        if n > self.values.shape[0]:
            grown = np.zeros((max(n, 2 * self.values.shape[0]), len(self.actions)))
            grown[: self.values.shape[0]] = self.values
            self.values = grown

    def value(self, state, action: str) -> float:
        i = self.index.ids.get(state.key())
        if i is None or i >= self.values.shape[0]:
            return 0.0
        return float(self.values[i, self.action_ids[action]])

    def to_dict(self) -> dict:
        n = len(self.index)
        return {
            "actions": list(self.actions),
            "q": [[state_key_json(s.key()), self.values[i].tolist()] for i, s in enumerate(self.index.states[:n])],
        }


@dataclass
class EpsSchedule:
    epsilon: float = 1.0
    floor: float = 0.05
    subgoal_decay: float = 0.995
    goal_decay: float = 0.95

    def on_subgoal(self) -> None:
        self.epsilon = max(self.floor, self.epsilon * self.subgoal_decay)

    def on_goal(self) -> None:
        self.epsilon = max(self.floor, self.epsilon * self.goal_decay)


# ---------------------------------------------------------------------------
# Replay buffer


@dataclass(frozen=True)
class Transition:
    s: object
    a: str
    s_next: object
    r: float
    done: bool
    episode: int = 0
    t: int = 0


class ReplayBuffer:
    """FIFO ring buffer of transitions stored as state ids.

    ``env_reward`` keeps the extrinsic reward; ``reward`` holds the value the
    learner trains on (relabeled when shaping is active).
    """

    _FIELDS = (("s", np.int64), ("a", np.int64), ("s2", np.int64), ("env_reward", np.float64),
               ("reward", np.float64), ("done", np.bool_), ("episode", np.int64), ("t", np.int64))

    def __init__(self, capacity: int, index: StateIndex, actions: Sequence[str]):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.index = index
        self.actions = tuple(actions)
        self._action_ids = {a: i for i, a in enumerate(self.actions)}
        self._alloc = min(self.capacity, 4096)
        for name, dtype in self._FIELDS:
            setattr(self, name, np.zeros(self._alloc, dtype=dtype))
        self.size = 0
        self.head = 0  # next write slot

    def __len__(self) -> int:
        return self.size

    def _grow(self) -> None:
        new = min(self.capacity, 2 * self._alloc)
        for name, dtype in self._FIELDS:
            arr = np.zeros(new, dtype=dtype)
            arr[: self._alloc] = getattr(self, name)
            setattr(self, name, arr)
        self._alloc = new

    def add(self, s: int, a: int, s2: int, env_reward: float, reward: float, done: bool, episode: int, t: int) -> int:
        if self.head >= self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self.head
        self.s[i], self.a[i], self.s2[i] = s, a, s2
        self.env_reward[i], self.reward[i], self.done[i] = env_reward, reward, done
        self.episode[i], self.t[i] = episode, t
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def order(self) -> list[int]:
        """Slot indices from oldest to newest."""
        if self.size < self.capacity:
            return list(range(self.size))
        return list(range(self.head, self.capacity)) + list(range(self.head))

    def transitions(self) -> list[Transition]:
        st = self.index.states
        return [
            Transition(st[self.s[i]], self.actions[self.a[i]], st[self.s2[i]], float(self.reward[i]),
                       bool(self.done[i]), int(self.episode[i]), int(self.t[i]))
            for i in self.order()
        ]

    def copy(self) -> "ReplayBuffer":
        # arrays are copied; the state index is shared with the trainer that owns it
        out = copy.copy(self)
        for name, _ in self._FIELDS:
            setattr(out, name, getattr(self, name).copy())
        return out


def relabel_buffer(buffer: ReplayBuffer, shaper) -> ReplayBuffer:
    """Copy of ``buffer`` whose rewards are the extrinsic reward plus the shaping term.

    Look-back context is carried only across consecutive steps of one episode.
    """
    out = buffer.copy()
    st = buffer.index.states
    ctx: dict = {}
    last = None
    for i in buffer.order():
        marker = (int(buffer.episode[i]), int(buffer.t[i]))
        if last is None or marker != (last[0], last[1] + 1):
            ctx = {}
        last = marker
        f = shaper.term(st[buffer.s[i]], buffer.actions[buffer.a[i]], st[buffer.s2[i]], ctx)
        out.reward[i] = buffer.env_reward[i] + f
    return out


# ---------------------------------------------------------------------------
# Learning rules


def select_action(q_row, epsilon: float, rng: random.Random, actions: Sequence[str]) -> str:
    """Epsilon-greedy; greedy ties are broken uniformly at random."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return actions[rng.randrange(len(actions))]
    best = max(q_row)
    ties = [i for i, v in enumerate(q_row) if v == best]
    return actions[ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]]


def q_update(q: QTable, batch: Sequence[Transition], alpha: float, gamma: float) -> QTable:
    """Sequential one-step Q-learning backups, in batch order."""
    for tr in batch:
        row = q.row(tr.s)
        nxt = q.row(tr.s_next)
        row = q.row(tr.s)  # re-fetch: interning the next state may have grown the table
        a = q.action_ids[tr.a]
        target = tr.r + (0.0 if tr.done else gamma * float(nxt.max()))
        row[a] += alpha * (target - row[a])
    return q


@njit(cache=True)
def _q_batch(values, s, a, r, s2, done, idx, alpha, gamma):
    n_actions = values.shape[1]
    for j in range(idx.shape[0]):
        i = idx[j]
        target = r[i]
        if not done[i]:
            best = values[s2[i], 0]
            for b in range(1, n_actions):
                if values[s2[i], b] > best:
                    best = values[s2[i], b]
            target += gamma * best
        values[s[i], a[i]] += alpha * (target - values[s[i], a[i]])


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    gamma: float = 0.99
    alpha: float = 0.1
    batch_size: int = 64
    max_steps: int = 5_000_000
    max_episodes: int = 0  # 0 means bounded by max_steps only
    buffer_capacity: int = 500_000
    eval_interval: int = 0
    seed: int = 0
    relabel: str = "insert"  # "insert" | "full"
    shaping_site: str = "buffer"  # "buffer" | "env"

    def validate(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.relabel not in ("insert", "full"):
            raise ValueError(f"unknown relabel mode {self.relabel!r}")
        if self.shaping_site not in ("buffer", "env"):
            raise ValueError(f"unknown shaping site {self.shaping_site!r}")


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    steps: int
    epsilon: float
    wall: float = field(default=0.0, compare=False)


@dataclass
class LearningCurve:
    records: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (episode, greedy return)

    def returns(self) -> list[float]:
        return [r.ret for r in self.records]

    def csv_rows(self, seed: int) -> list[str]:
        return [f"{r.episode},{r.ret!r},{r.steps},{r.epsilon!r},{seed}" for r in self.records]

    def to_csv(self, seed: int) -> str:
        return "\n".join(["episode,return,steps,epsilon,seed"] + self.csv_rows(seed)) + "\n"


def check_compatible(env: worlds.GridWorld, shaper) -> None:
    name = getattr(shaper, "name", "none")
    if name == "state" and env.family != "cardinal":
        raise ValueError("state-mode shaping is for the cardinal-family environments")
    if name == "lookback" and env.family != "turn":
        raise ValueError("look-back shaping is for the turn-based environments")


def train(env: worlds.GridWorld, shaper=None, config: TrainConfig | None = None, subgoals=None):
    """Explore, relabel new transitions, learn from sampled batches.

    ``subgoals`` is an ordered fluent list (from the guide plan) whose prefix
    advances trigger the sub-goal epsilon decay.  Returns ``(QTable, LearningCurve)``.
    """
    config = config or TrainConfig()
    config.validate()
    shaper = shaper or NoShaping()
    check_compatible(env, shaper)

    rng = random.Random(config.seed)
    np_rng = np.random.default_rng(config.seed)
    index = StateIndex()
    q = QTable(env.actions, index)
    buffer = ReplayBuffer(config.buffer_capacity, index, env.actions)
    eps = EpsSchedule()
    curve = LearningCurve()
    progress = StatePotential(env, _subgoal_table(subgoals)) if subgoals else None
    full_pass = config.relabel == "full"
    in_env = config.shaping_site == "env"
    a_ids = q.action_ids
    actions = env.actions
    start = time.perf_counter()

    total = 0
    episode = 0
    while total < config.max_steps and (config.max_episodes <= 0 or episode < config.max_episodes):
        state = worlds.reset(env, rng.randrange(2**32) if env.random_start else 0)
        s_id = index.id(state)
        ctx: dict = {}
        level = progress.level(state) if progress else 0
        ret = 0.0
        t = 0
        done = False
        while not done and total < config.max_steps:
            q._fit(len(index))
            a = select_action(q.values[s_id].tolist(), eps.epsilon, rng, actions)
            out = worlds.step(env, state, a, rng)
            nxt = out.next_state
            s2_id = index.id(nxt)
            f = shaper.term(state, a, nxt, ctx)
            terminal = out.reason in ("goal", "lava")
            if in_env:
                # environment emits the shaped reward directly; buffer stores it as extrinsic
                buffer.add(s_id, a_ids[a], s2_id, out.reward + f, out.reward + f, terminal, episode, t)
            elif full_pass:
                buffer.add(s_id, a_ids[a], s2_id, out.reward, out.reward, terminal, episode, t)
                buffer = relabel_buffer(buffer, shaper)
            else:
                buffer.add(s_id, a_ids[a], s2_id, out.reward, out.reward + f, terminal, episode, t)
            ret += out.reward
            t += 1
            total += 1
            if progress:
                new_level = progress.level(nxt)
                if new_level > level:
                    for _ in range(new_level - level):
                        eps.on_subgoal()
                    level = new_level
            if out.reason == "goal":
                eps.on_goal()
            done = out.done
            state, s_id = nxt, s2_id
            if len(buffer) >= config.batch_size:
                q._fit(len(index))
                idx = np_rng.integers(0, buffer.size, config.batch_size)
                _q_batch(q.values, buffer.s, buffer.a, buffer.reward, buffer.s2, buffer.done,
                         idx, config.alpha, config.gamma)
        curve.records.append(EpisodeRecord(episode, ret, t, eps.epsilon, time.perf_counter() - start))
        episode += 1
        if config.eval_interval and episode % config.eval_interval == 0:
            curve.evals.append((episode, greedy_return(env, q, config.seed + episode)))
    q._fit(len(index))
    return q, curve


def _subgoal_table(subgoals):
    from .shaping import PotentialTable

    return PotentialTable("state", 1.0, {}, tuple(subgoals))


def greedy_return(env: worlds.GridWorld, q: QTable, seed: int) -> float:
    rng = random.Random(seed)
    state = worlds.reset(env, seed)
    ret = 0.0
    done = False
    while not done:
        a = select_action(q.row(state).tolist(), 0.0, rng, env.actions)
        out = worlds.step(env, state, a, rng)
        ret += out.reward
        state, done = out.next_state, out.done
    return ret


def checkpoint(q: QTable, eps: float, episodes: int, config: TrainConfig) -> str:
    return json.dumps(
        {"config": asdict(config), "epsilon": eps, "episodes": episodes, **q.to_dict()}, sort_keys=True
    )


# ---------------------------------------------------------------------------
# Exact planning oracle


@dataclass
class TabularMDP:
    """Outcome lists per (state, action): next state, probability, reward."""

    next: np.ndarray  # (S, A, K) int
    prob: np.ndarray  # (S, A, K)
    reward: np.ndarray  # (S, A, K)
    terminal: np.ndarray  # (S,) bool
    states: list = field(default_factory=list)
    actions: tuple = ()


def tabular_mdp(env: worlds.GridWorld, potential=None, gamma: float = 0.99, limit: int = 100_000) -> TabularMDP:
    """Exact MDP of ``env`` under the slip model, with time-free goal reward 1.

    With ``potential`` the rewards include ``gamma * Phi(s') - Phi(s)``, with
    terminal states at potential 0.
    """
    states = worlds.enumerate_states(env, limit=limit)
    ids = {s.key(): i for i, s in enumerate(states)}
    det = worlds.determinize(env)
    det = dataclasses.replace(det, max_steps=10**9)
    n_s, n_a = len(states), len(env.actions)
    terminal = np.array([det.is_terminal(s) for s in states])
    det_next = np.zeros((n_s, n_a), dtype=np.int64)
    det_rew = np.zeros((n_s, n_a))
    for i, s in enumerate(states):
        if terminal[i]:
            det_next[i] = i
            continue
        for j, a in enumerate(env.actions):
            out = worlds.step(det, s, a)
            n = out.next_state
            det_next[i, j] = ids[(n.pos, n.facing, n.flags)]
            det_rew[i, j] = 1.0 if out.reason == "goal" else 0.0
    if potential is not None:
        phi = np.array([0.0 if terminal[i] else potential(s) for i, s in enumerate(states)])
        det_rew = det_rew + gamma * phi[det_next] - phi[:, None]
    p = env.slip_prob if n_a > 1 else 0.0
    nxt = np.zeros((n_s, n_a, n_a), dtype=np.int64)
    prob = np.zeros((n_s, n_a, n_a))
    rew = np.zeros((n_s, n_a, n_a))
    for j in range(n_a):
        for b in range(n_a):
            nxt[:, j, b] = det_next[:, b]
            rew[:, j, b] = det_rew[:, b]
            prob[:, j, b] = (1 - p) if b == j else p / (n_a - 1)
    return TabularMDP(nxt, prob, rew, terminal, states, env.actions)


def value_iteration(mdp: TabularMDP, gamma: float, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal Q by value iteration; stops when the sup-norm residual is below ``tol``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("value iteration needs gamma in (0, 1)")
    n_s = mdp.terminal.shape[0]
    v = np.zeros(n_s)
    live = ~mdp.terminal
    for _ in range(max_iter):
        q = np.sum(mdp.prob * (mdp.reward + gamma * v[mdp.next]), axis=2)
        q[mdp.terminal] = 0.0
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) <= tol * (1 - gamma) / (2 * gamma):
            v = v_new
            break
        v = v_new
    q = np.sum(mdp.prob * (mdp.reward + gamma * v[mdp.next]), axis=2)
    q[~live] = 0.0
    return q


def greedy_sets(q: np.ndarray, rel_tol: float = 1e-9) -> list[frozenset]:
    """Per-state argmax sets; values within ``rel_tol`` of the row max count as ties."""
    out = []
    for row in q:
        m = row.max()
        slack = rel_tol * max(1.0, abs(m))
        out.append(frozenset(int(i) for i in np.flatnonzero(row >= m - slack)))
    return out
