"""Direct prompting and the verifier-in-the-loop planner that yields the guide plan."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import strips, worlds
from .prompts import (
    Abstraction,
    Feedback,
    ParseError,
    build_back_prompt,
    build_direct_prompt,
    build_step_prompt,
    display,
    parse_response,
)
from .verifier import feasible_lowlevel_actions, symbolic_reason

# (max_steps, max_backprompts_per_step) per environment family
DEFAULT_BUDGETS = {"household": (20, 5), "minecraft": (20, 5), "mario": (30, 10), "babyai": (30, 10)}


@dataclass(frozen=True)
class LoopBudget:
    max_steps: int
    max_backprompts_per_step: int

    def __post_init__(self):
        if self.max_steps < 1 or self.max_backprompts_per_step < 1:
            raise ValueError("loop budgets must be positive")

    @classmethod
    def default_for(cls, name: str) -> "LoopBudget":
        key = "babyai" if name not in DEFAULT_BUDGETS else name
        return cls(*DEFAULT_BUDGETS[key])

    @property
    def max_calls(self) -> int:
        return self.max_steps * (1 + self.max_backprompts_per_step)


@dataclass
class Transcript:
    """Append-only record of every exchange with the backend."""

    records: list = field(default_factory=list)
    clock: object = time.time

    def append(self, step: int, attempt: int, prompt: str, response: str, verdict: str) -> None:
        if verdict not in ("valid", "invalid", "parse-error"):
            raise ValueError(f"unknown verdict {verdict!r}")
        rec = {"step": step, "attempt": attempt, "prompt": prompt, "response": response, "verdict": verdict}
        if self.clock is not None:
            rec["timestamp"] = self.clock()
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def backprompts(self) -> int:
        return sum(1 for r in self.records if r["attempt"] > 0)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "Transcript":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([json.loads(x) for x in lines if x.strip()], clock=None)


@dataclass(frozen=True)
class GuidePlan:
    """A proposer's plan after verification.

    Deterministic plans hold ``(AgentState, action)`` pairs in ``steps``;
    hierarchical plans hold ground actions in ``actions``.
    """

    mode: str
    model: str
    steps: tuple = ()
    actions: tuple = ()
    complete: bool = False
    subgoal_fraction: float = 0.0
    reward: float = 0.0
    proposed: int = 0  # actions the backend proposed, valid or not

    def __post_init__(self):
        if self.complete and self.subgoal_fraction != 1.0:
            raise ValueError("a complete plan has sub-goal fraction 1")
        if not 0.0 <= self.subgoal_fraction <= 1.0:
            raise ValueError("sub-goal fraction must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.steps) if self.mode == "deterministic" else len(self.actions)

    def truncated(self, n: int, problem: strips.StripsProblem | None = None) -> "GuidePlan":
        """The first ``n`` steps as a partial plan."""
        if self.mode == "deterministic":
            return dataclasses.replace(self, steps=self.steps[:n], complete=False, subgoal_fraction=0.0, reward=0.0)
        acts = self.actions[:n]
        if problem is None:
            problem = strips.load_bundled(self.model)
        frac, done = hierarchical_score(problem, self.model, acts)
        return dataclasses.replace(self, actions=acts, complete=done, subgoal_fraction=frac)

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode,
            "model": self.model,
            "complete": self.complete,
            "subgoal_fraction": self.subgoal_fraction,
            "reward": self.reward,
            "proposed": self.proposed,
        }
        if self.mode == "deterministic":
            doc["steps"] = [{"state": s.to_dict(), "action": a} for s, a in self.steps]
        else:
            doc["actions"] = [str(a) for a in self.actions]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "GuidePlan":
        if doc["mode"] == "deterministic":
            steps = tuple((worlds.AgentState.from_dict(x["state"]), x["action"]) for x in doc["steps"])
            actions = ()
        else:
            ground = strips.load_bundled(doc["model"]).ground_actions()
            actions = tuple(parse_response(t, "hierarchical", ground, expect_one=True) for t in doc["actions"])
            steps = ()
        return cls(
            doc["mode"], doc["model"], steps, actions, doc["complete"], doc["subgoal_fraction"],
            doc.get("reward", 0.0), doc.get("proposed", 0),
        )

    @classmethod
    def from_json(cls, text: str) -> "GuidePlan":
        return cls.from_dict(json.loads(text))


def hierarchical_score(problem: strips.StripsProblem, model: str, plan) -> tuple[float, bool]:
    """(sub-goal fraction, goal reached) for the valid prefix of ``plan``."""
    result = strips.validate_plan(problem, plan)
    if result.goal_reached:
        return 1.0, True
    history = [problem.init]
    state = problem.init
    for a in plan[: result.valid_prefix_len]:
        state = strips.apply(state, a)
        history.append(state)
    k = worlds.milestones_reached(model, history)
    return min(1.0, k / worlds.subgoal_count(model)), False


def _observe(backend, state, attempt: int, whole: bool = False) -> None:
    hook = getattr(backend, "observe", None)
    if hook is not None:
        hook(state, attempt, whole)


def _rollout(env: worlds.GridWorld, start: worlds.AgentState, actions) -> tuple[tuple, bool, float]:
    steps, state, reward, done = [], start, 0.0, False
    for a in actions:
        if env.is_terminal(state):
            break
        out = worlds.step(env, state, a)
        steps.append((state, a))
        state = out.next_state
        if out.reason == "goal":
            reward, done = out.reward, True
    return tuple(steps), done, reward


def direct_plan(backend, abstraction: Abstraction, transcript: Transcript | None = None) -> GuidePlan:
    """Ask for the whole plan at once and score what comes back."""
    transcript = transcript if transcript is not None else Transcript()
    start = abstraction.start if abstraction.mode == "deterministic" else abstraction.problem.init
    _observe(backend, start, 0, whole=True)
    prompt = build_direct_prompt(abstraction).render()
    response = backend.complete(prompt)
    mode = abstraction.mode
    vocab = abstraction.env.actions if mode == "deterministic" else abstraction.actions
    try:
        proposed = parse_response(response, mode, vocab)
    except ParseError:
        transcript.append(0, 0, prompt, response, "parse-error")
        return GuidePlan(mode, abstraction.model)
    if mode == "deterministic":
        steps, done, reward = _rollout(abstraction.env, abstraction.start, proposed)
        transcript.append(0, 0, prompt, response, "valid" if done else "invalid")
        return GuidePlan(mode, abstraction.model, steps=steps, complete=done,
                         subgoal_fraction=1.0 if done else 0.0, reward=reward, proposed=len(proposed))
    result = strips.validate_plan(abstraction.problem, proposed)
    frac, done = hierarchical_score(abstraction.problem, abstraction.model, proposed)
    transcript.append(0, 0, prompt, response, "valid" if result.failure is None else "invalid")
    return GuidePlan(mode, abstraction.model, actions=tuple(proposed[: result.valid_prefix_len]),
                     complete=done, subgoal_fraction=frac, proposed=len(proposed))


def verified_plan(
    backend,
    abstraction: Abstraction,
    budget: LoopBudget | None = None,
    transcript: Transcript | None = None,
) -> tuple[GuidePlan, Transcript]:
    """Build the guide plan one verified action at a time.

    Rejected actions are never executed.  The loop stops at the goal, when the
    step budget runs out, or when one step exhausts its back-prompts; the last
    two return a partial plan.
    """
    transcript = transcript if transcript is not None else Transcript()
    budget = budget or LoopBudget.default_for(abstraction.model)
    mode = abstraction.mode
    if mode == "deterministic":
        env = abstraction.env
        state = abstraction.start
        vocab = env.actions
    else:
        problem = abstraction.problem
        state = problem.init
        vocab = abstraction.actions
    accepted: list = []
    pairs: list = []
    reward = 0.0
    done = False
    calls = 0
    for step_no in range(budget.max_steps):
        if mode == "hierarchical" and problem.goal <= state:
            done = True
            break
        step_prompt = build_step_prompt(abstraction, state, accepted)
        bundle = step_prompt
        tried: list[str] = []
        chosen = None
        for attempt in range(budget.max_backprompts_per_step + 1):
            _observe(backend, state, attempt)
            prompt = bundle.render()
            response = backend.complete(prompt)
            calls += 1
            try:
                action = parse_response(response, mode, vocab, expect_one=True)
            except ParseError:
                shown = response.strip()
                reason = "it is not one of the available actions"
                verdict = "parse-error"
            else:
                shown = display(action, mode)
                if mode == "deterministic":
                    feas = feasible_lowlevel_actions(env, state)
                    reason = feas.reasons.get(action)
                else:
                    reason = None if strips.applicable(state, action) else symbolic_reason(abstraction.model, state, action)
                verdict = "valid" if reason is None else "invalid"
            transcript.append(step_no, attempt, prompt, response, verdict)
            if verdict == "valid":
                chosen = action
                break
            if shown not in tried:
                tried.append(shown)
            if mode == "deterministic":
                feasible = tuple(display(a, mode) for a in feasible_lowlevel_actions(env, state).feasible)
            else:
                feasible = tuple(f"{a}" for a in strips.valid_actions(state, vocab)[0])
            fb = Feedback(shown, reason, feasible, tuple(accepted))
            bundle = build_back_prompt(step_prompt, fb, tried, mode, response)
        if chosen is None:
            break
        if mode == "deterministic":
            out = worlds.step(env, state, chosen)
            pairs.append((state, chosen))
            accepted.append(chosen)
            state = out.next_state
            if out.reason == "goal":
                done, reward = True, out.reward
                break
            if out.done:
                break
        else:
            accepted.append(chosen)
            state = strips.apply(state, chosen)
    else:
        if mode == "hierarchical" and problem.goal <= state:
            done = True
    if mode == "deterministic":
        plan = GuidePlan(mode, abstraction.model, steps=tuple(pairs), complete=done,
                         subgoal_fraction=1.0 if done else 0.0, reward=reward, proposed=calls)
    else:
        frac, done = hierarchical_score(problem, abstraction.model, accepted)
        plan = GuidePlan(mode, abstraction.model, actions=tuple(accepted), complete=done,
                         subgoal_fraction=frac, proposed=calls)
    return plan, transcript
