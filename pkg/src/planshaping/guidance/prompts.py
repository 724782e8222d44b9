"""Prompt construction and response parsing for plan proposers."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .. import strips, worlds

# Phrases used in prompts for the turn-based action family, in the order the
# verifier lists feasible actions.
ACTION_PHRASES = {
    "turn-right": "turn right",
    "turn-left": "turn left",
    "forward": "move forward",
    "pickup": "pickup key",
    "toggle": "open door",
}
FEEDBACK_ORDER = ("turn-right", "turn-left", "forward", "pickup", "toggle")
PROMPT_ORDER = ("turn-left", "turn-right", "forward", "pickup", "toggle")

_ALIASES = {
    "turn left": "turn-left",
    "turn-left": "turn-left",
    "left": "turn-left",
    "turn right": "turn-right",
    "turn-right": "turn-right",
    "right": "turn-right",
    "move forward": "forward",
    "forward": "forward",
    "go forward": "forward",
    "pickup key": "pickup",
    "pick up key": "pickup",
    "pick up the key": "pickup",
    "pickup": "pickup",
    "pick up": "pickup",
    "open door": "toggle",
    "open the door": "toggle",
    "toggle": "toggle",
}

HIER_INTRO = "Here is a pddl domain, a planning problem."
HIER_DIRECT = (
    " Provide the sequence of actions you will take to reach the goal."
    " Provide only the pddl syntax for the plan where the action is represented as (ACTION-NAME OBJECTS)."
    " Do not provide anything else in your response."
)
HIER_STEP = (
    " Provide only the next action for the query problem."
    " Provide only the pddl syntax for the plan where the action is represented as (ACTION-NAME OBJECTS)."
    " Do not provide anything else in your response."
)
GRID_DIRECT_QUERY = (
    "What is the sequence of actions you will take to reach the goal? "
    "Output as a comma separated list. Do not include anything else in your response."
)
GRID_STEP_QUERY = (
    "What is the next action that the agent should take? Only choose from the list of available actions. "
    "Do not include anything else in your response. For example, if you choose `move forward', "
    "then only write `move forward' in your response."
)


class ParseError(ValueError):
    """A response that does not name actions from the vocabulary."""

    def __init__(self, message: str, fragment: str):
        super().__init__(f"{message}: {fragment!r}")
        self.fragment = fragment


@dataclass(frozen=True)
class PromptBundle:
    task_description: str
    observation_description: str
    query_description: str
    history: tuple = ()  # (prompt, response) pairs that preceded this prompt

    def render(self) -> str:
        parts = [self.task_description, self.observation_description, self.query_description]
        return "\n\n".join(p for p in parts if p)


@dataclass(frozen=True)
class Abstraction:
    """What the proposer is asked to plan over.

    ``deterministic`` plans in the low-level actions of a turn-based grid;
    ``hierarchical`` plans over the bundled PDDL model of the environment.
    """

    mode: str
    env: worlds.GridWorld | None = None
    problem: strips.StripsProblem | None = None
    model: str = ""
    start: worlds.AgentState | None = None
    domain_text: str = ""
    problem_text: str = ""
    actions: tuple = field(default=(), compare=False)

    @classmethod
    def deterministic(cls, env: worlds.GridWorld, start: worlds.AgentState | None = None) -> "Abstraction":
        if env.family != "turn":
            raise worlds.UnsupportedError("the deterministic abstraction needs a turn-based grid")
        env = worlds.determinize(env)
        return cls("deterministic", env=env, model=env.name, start=start or worlds.reset(env, 0))

    @classmethod
    def hierarchical(cls, name: str, env: worlds.GridWorld | None = None) -> "Abstraction":
        problem = strips.load_bundled(name)
        return cls(
            "hierarchical",
            env=env,
            problem=problem,
            model=name,
            domain_text=strips.bundled_text(name, "domain"),
            problem_text=strips.bundled_text(name, "problem"),
            actions=tuple(problem.ground_actions()),
        )

    @classmethod
    def for_env(cls, env: worlds.GridWorld, mode: str) -> "Abstraction":
        if mode == "hierarchical":
            return cls.hierarchical(worlds.hierarchical_model(env), env)
        if mode == "deterministic":
            return cls.deterministic(env)
        raise ValueError(f"unknown abstraction mode {mode!r}")


def quoted(phrase: str) -> str:
    return f"`{phrase}'"


def phrase(action: str) -> str:
    return ACTION_PHRASES.get(action, action)


def _objects_phrase(env: worlds.GridWorld) -> str:
    present = [name for ch, name in (("K", "a key"), ("D", "a door"), ("L", "lava")) if env.cells_of(ch)]
    if not present:
        return "walls"
    if len(present) == 1:
        return f"objects like {present[0]} along with walls"
    return f"objects like {', '.join(present[:-1])} and {present[-1]} along with walls"


def _grid_task(env: worlds.GridWorld, step_mode: bool) -> str:
    size = f"{env.width - 2}x{env.height - 2}"
    vocab = ", ".join(quoted(phrase(a)) for a in PROMPT_ORDER if a in env.actions)
    handles = ["to move in any direction"]
    if "pickup" in env.actions:
        handles.append("to pick up the key")
    if "toggle" in env.actions:
        handles.append("to open the door")
    if len(handles) == 1:
        facing = "To move in any direction, you need to face in the correct direction."
    else:
        joined = ", ".join(handles[:-1]) + ", and " + handles[-1]
        facing = f"{joined[0].upper()}{joined[1:]}, you need to face in the correct direction."
    text = (
        f"You are tasked with solving a {size} maze where you will encounter {_objects_phrase(env)}. "
        f"Your task is {quoted(env.mission)}. You can be facing in any of the four directions. {facing} "
    )
    if step_mode:
        text += (
            "You will be given a description of the maze at every step and you need to choose the next "
            f"action to take. The available actions are {vocab}."
        )
    else:
        text += f"The available actions at each step are {vocab}."
    return text


def _grid_observation(env: worlds.GridWorld, state: worlds.AgentState) -> str:
    return "The current maze looks like this:\n\n" + worlds.render_text(env, state)


def _pddl_observation(abstraction: Abstraction) -> str:
    return f"domain pddl\n{abstraction.domain_text.rstrip()}\n\nproblem pddl\n{abstraction.problem_text.rstrip()}"


def format_plan_so_far(plan) -> str:
    return "[" + ",".join(str(a) for a in plan) + "]"


def build_direct_prompt(abstraction: Abstraction, state: worlds.AgentState | None = None) -> PromptBundle:
    if abstraction.mode == "deterministic":
        env = abstraction.env
        state = state or abstraction.start
        return PromptBundle(_grid_task(env, False), _grid_observation(env, state), GRID_DIRECT_QUERY)
    return PromptBundle(HIER_INTRO + HIER_DIRECT, _pddl_observation(abstraction), "")


def build_step_prompt(abstraction: Abstraction, state=None, plan_so_far=()) -> PromptBundle:
    if abstraction.mode == "deterministic":
        env = abstraction.env
        state = state or abstraction.start
        return PromptBundle(_grid_task(env, True), _grid_observation(env, state), GRID_STEP_QUERY)
    query = f"Your plan so far - {format_plan_so_far(plan_so_far)}."
    return PromptBundle(HIER_INTRO + HIER_STEP, _pddl_observation(abstraction), query)


@dataclass(frozen=True)
class Feedback:
    """Verifier verdict on one rejected response."""

    response: str  # the rejected action as shown to the proposer
    reason: str
    feasible: tuple[str, ...]
    plan_so_far: tuple = ()


def build_back_prompt(step: PromptBundle, feedback: Feedback, tried, mode: str, last_response: str = "") -> PromptBundle:
    """Step prompt plus verifier feedback and every action already tried at this step."""
    if not tried:
        raise ValueError("a back-prompt needs at least one rejected guess")
    history = step.history + ((step.render(), last_response or feedback.response),)
    if mode == "deterministic":
        listing = ", ".join(quoted(a) for a in feedback.feasible)
        info = (
            f"Information: You cannot {quoted(feedback.response)} in this state as {feedback.reason}. "
            f"Please choose another action.The following actions are feasible in this state: [{listing}]."
        )
        query = (
            f"{step.query_description}\n"
            f"You have already tried the following actions: {', '.join(tried)}. Please choose another action."
        )
        return PromptBundle(info, step.observation_description, query, history)
    listing = ",".join(feedback.feasible)
    info = (
        f"Information: Your plan so far - {format_plan_so_far(feedback.plan_so_far)}. "
        f"Your response - {feedback.response}. The action provided is not feasible because {feedback.reason}. "
        f"Choose a valid action from the list [{listing}].\n"
        f"You have already tried the following actions: {', '.join(tried)}. Please choose another action."
    )
    return PromptBundle(step.task_description, step.observation_description, info, history)


# ---------------------------------------------------------------------------
# Parsing

_TERM = re.compile(r"\(([^()]*)\)")
_FILLER = re.compile(r"^[\s,;.\[\]`'\"$\d\\]*$")


def _grid_action(text: str, vocabulary) -> str:
    t = text.strip().strip("`'\".").strip().lower()
    action = _ALIASES.get(t)
    if action is None or action not in vocabulary:
        raise ParseError("not an available action", text.strip())
    return action


def _clean_name(text: str) -> str:
    return text.replace("\\_", "_").strip().lower()


def _resolve(term: str, actions) -> strips.GroundAction:
    tokens = _clean_name(term).split()
    if not tokens:
        raise ParseError("empty action term", f"({term})")
    name, args = tokens[0], tokens[1:]
    for a in actions:
        if a.name.lower() == name and [x.lower() for x in a.args] == args:
            return a
    raise ParseError("unknown ground action", f"({term})")


def parse_response(text: str, mode: str, vocabulary, expect_one: bool = False):
    """Turn a proposer response into actions.

    Deterministic mode yields low-level action names, hierarchical mode yields
    ground actions from ``vocabulary``.  ``expect_one`` demands a single action
    and returns it bare.
    """
    if text is None or not text.strip():
        raise ParseError("empty response", text or "")
    if mode == "deterministic":
        pieces = [p for p in re.split(r"[,\n]", text) if p.strip()]
        out = [_grid_action(p, vocabulary) for p in pieces]
    elif mode == "hierarchical":
        terms = _TERM.findall(text)
        if terms:
            rest = _TERM.sub(" ", text)
            if not _FILLER.match(rest):
                raise ParseError("unexpected text around actions", rest.strip())
            out = [_resolve(t, vocabulary) for t in terms]
        else:
            # bare names are accepted for parameterless actions
            pieces = [p.strip().strip("`'\"$.[]").strip() for p in re.split(r"[,\n]", text)]
            out = [_resolve(p, vocabulary) for p in pieces if p]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not out:
        raise ParseError("no actions found", text)
    if expect_one:
        if len(out) != 1:
            raise ParseError("expected exactly one action", text.strip())
        return out[0]
    return out


def display(action, mode: str) -> str:
    return phrase(action) if mode == "deterministic" else str(action)
