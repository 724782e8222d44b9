"""STRIPS models: PDDL-subset parsing, grounding, semantics, validation and a BFS planner.

Only the fragment used by the bundled domains is accepted: the ``:strips``,
``:typing`` and ``:negative-preconditions`` requirements, ``and``/``not``
connectives and typed object lists.  Everything else is rejected with a
:class:`PddlError` rather than ignored.
"""

from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

SUPPORTED_REQUIREMENTS = (":strips", ":typing", ":negative-preconditions")
UNSUPPORTED_CONNECTIVES = (
    "or", "imply", "forall", "exists", "when", "=", "increase", "decrease",
    "assign", "either", "preference",
)
BUNDLED = ("household", "mario", "minecraft", "doorkey")


class PddlError(ValueError):
    """Raised for any lexical, syntactic or semantic problem in PDDL input."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)


class InapplicableActionError(RuntimeError):
    pass


class NoPlanError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Model


@dataclass(frozen=True, order=True)
class Atom:
    """A predicate applied to arguments; ground when no argument starts with ``?``."""

    predicate: str
    args: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.predicate:
            raise ValueError("empty predicate name")

    @property
    def is_ground(self) -> bool:
        return not any(a.startswith("?") for a in self.args)

    def substitute(self, binding: dict[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate,) + self.args) + ")"

    @classmethod
    def parse(cls, text: str) -> "Atom":
        parts = text.strip().strip("()").split()
        if not parts:
            raise ValueError(f"cannot parse fluent {text!r}")
        return cls(parts[0], tuple(parts[1:]))


Fluent = Atom
FluentSet = frozenset  # frozenset[Atom]


@dataclass(frozen=True)
class Predicate:
    name: str
    params: tuple[tuple[str, str], ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    pre_pos: tuple[Atom, ...]
    pre_neg: tuple[Atom, ...]
    add: tuple[Atom, ...]
    delete: tuple[Atom, ...]


@dataclass(frozen=True)
class Domain:
    name: str
    requirements: tuple[str, ...]
    types: tuple[tuple[str, str], ...]  # (type, parent)
    predicates: tuple[Predicate, ...]
    actions: tuple[ActionSchema, ...]

    def predicate(self, name: str) -> Predicate | None:
        for p in self.predicates:
            if p.name == name:
                return p
        return None

    def schema(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def is_subtype(self, t: str, ancestor: str) -> bool:
        parents = dict(self.types)
        seen = set()
        while t not in seen:
            if t == ancestor:
                return True
            seen.add(t)
            if t not in parents:
                break
            t = parents[t]
        return ancestor == "object"

    def declared_types(self) -> set[str]:
        declared = {"object"}
        for t, parent in self.types:
            declared.add(t)
            declared.add(parent)
        return declared


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    pre_pos: frozenset
    pre_neg: frozenset
    add: frozenset
    delete: frozenset

    def __str__(self) -> str:
        return "(" + " ".join((self.name,) + self.args) + ")"


@dataclass(frozen=True)
class StripsProblem:
    name: str
    domain: Domain
    objects: tuple[tuple[str, str], ...]
    init: frozenset
    goal: frozenset

    @property
    def domain_name(self) -> str:
        return self.domain.name

    def ground_actions(self) -> list[GroundAction]:
        return ground(self.domain, self.objects)


@dataclass(frozen=True)
class Failure:
    step: int
    literal: str
    reason: str  # "precondition" | "goal"


@dataclass(frozen=True)
class ValidationResult:
    valid_prefix_len: int
    goal_reached: bool
    failure: Failure | None = None
    final_state: frozenset = field(default=frozenset(), compare=False)


# ---------------------------------------------------------------------------
# Lexing and s-expressions

_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[A-Za-z0-9_?:\-]+")


@dataclass
class _Sym:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Sym]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PddlError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        tok = m.group()
        if not tok[0].isspace() and tok[0] != ";":
            tokens.append(_Sym(tok.lower(), line, pos - line_start + 1))
        for i, ch in enumerate(tok):
            if ch == "\n":
                line += 1
                line_start = pos + i + 1
        pos = m.end()
    return tokens


def _sexpr(tokens: list[_Sym]):
    stack: list[list] = [[]]
    opens: list[_Sym] = []
    for tok in tokens:
        if tok.text == "(":
            stack.append([])
            opens.append(tok)
        elif tok.text == ")":
            if len(stack) == 1:
                raise PddlError("unbalanced ')'", tok.line, tok.col)
            done = stack.pop()
            opens.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if opens:
        raise PddlError("unclosed '('", opens[-1].line, opens[-1].col)
    if len(stack[0]) != 1 or not isinstance(stack[0][0], list):
        raise PddlError("expected exactly one top-level (define ...) form")
    return stack[0][0]


def _sym(node, what: str) -> str:
    if not isinstance(node, _Sym):
        raise PddlError(f"expected {what}, found a list")
    return node.text


def _head(node) -> str | None:
    if isinstance(node, list) and node and isinstance(node[0], _Sym):
        return node[0].text
    return None


def _loc(node):
    while isinstance(node, list):
        if not node:
            return None, None
        node = node[0]
    return node.line, node.col


def _typed_list(items: list, default: str = "object") -> list[tuple[str, str]]:
    """``a b - t c`` -> [(a, t), (b, t), (c, object)]."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        text = _sym(items[i], "name")
        if text == "-":
            if i + 1 >= len(items) or not pending:
                raise PddlError("dangling '-' in typed list", items[i].line, items[i].col)
            t = items[i + 1]
            if isinstance(t, list):
                raise PddlError(f"unsupported type expression `{_head(t)}`", *_loc(t))
            out.extend((name, t.text) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(text)
        i += 1
    out.extend((name, default) for name in pending)
    return out


def _check_define(tree, kind: str):
    if _head(tree) != "define" or len(tree) < 2 or _head(tree[1]) != kind or len(tree[1]) != 2:
        raise PddlError(f"expected (define ({kind} <name>) ...)", *_loc(tree))
    return _sym(tree[1][1], f"{kind} name")


# ---------------------------------------------------------------------------
# Formulas


def _literals(node, where: str) -> list[tuple[Atom, bool]]:
    """Flatten a conjunction of literals to (atom, positive) pairs."""
    if not isinstance(node, list):
        raise PddlError(f"expected a formula in {where}", node.line, node.col)
    if not node:
        return []
    head = _head(node)
    if head is None:
        raise PddlError(f"malformed formula in {where}", *_loc(node))
    if head == "and":
        out = []
        for child in node[1:]:
            out.extend(_literals(child, where))
        return out
    if head == "not":
        if len(node) != 2 or _head(node[1]) in (None, "and", "not") + UNSUPPORTED_CONNECTIVES:
            if len(node) == 2 and _head(node[1]) in UNSUPPORTED_CONNECTIVES:
                raise PddlError(f"unsupported connective `{_head(node[1])}`", *_loc(node[1]))
            raise PddlError(f"`not` must wrap a single atom in {where}", *_loc(node))
        return [(_atom(node[1]), False)]
    if head in UNSUPPORTED_CONNECTIVES:
        raise PddlError(f"unsupported connective `{head}`", *_loc(node))
    return [(_atom(node), True)]


def _atom(node) -> Atom:
    if not isinstance(node, list) or not node:
        raise PddlError("expected an atom", *_loc(node))
    parts = [_sym(x, "term") for x in node]
    if parts[0].startswith(":"):
        raise PddlError(f"unexpected keyword {parts[0]}", *_loc(node))
    return Atom(parts[0], tuple(parts[1:]))


def _keyword_args(items: list, allowed: Sequence[str]) -> dict:
    out = {}
    i = 0
    while i < len(items):
        key = _sym(items[i], "keyword")
        if key not in allowed:
            raise PddlError(f"unsupported action field {key}", items[i].line, items[i].col)
        if i + 1 >= len(items):
            raise PddlError(f"missing value for {key}", items[i].line, items[i].col)
        out[key] = items[i + 1]
        i += 2
    return out


# ---------------------------------------------------------------------------
# Domain and problem parsing


def parse_domain(text: str) -> Domain:
    """Parse a domain in the supported PDDL subset."""
    tree = _sexpr(_tokenize(text))
    name = _check_define(tree, "domain")
    requirements: list[str] = []
    types: list[tuple[str, str]] = []
    predicates: list[Predicate] = []
    raw_actions = []
    for section in tree[2:]:
        head = _head(section)
        if head == ":requirements":
            for req in section[1:]:
                r = _sym(req, "requirement")
                if r not in SUPPORTED_REQUIREMENTS:
                    raise PddlError(f"unknown requirement {r}", req.line, req.col)
                requirements.append(r)
        elif head == ":types":
            types.extend(_typed_list(section[1:]))
        elif head == ":predicates":
            for p in section[1:]:
                if not isinstance(p, list) or not p:
                    raise PddlError("malformed predicate declaration", *_loc(p))
                params = _typed_list(p[1:])
                for var, _ in params:
                    if not var.startswith("?"):
                        raise PddlError(f"predicate parameter {var} must start with '?'", *_loc(p))
                predicates.append(Predicate(_sym(p[0], "predicate name"), tuple(params)))
        elif head == ":action":
            raw_actions.append(section)
        else:
            raise PddlError(f"unsupported domain section {head}", *_loc(section))

    domain = Domain(name, tuple(requirements), tuple(types), tuple(predicates), ())
    actions = tuple(_parse_action(node, domain) for node in raw_actions)
    domain = Domain(name, tuple(requirements), tuple(types), tuple(predicates), actions)
    _check_domain(domain)
    return domain


def _parse_action(node, domain: Domain) -> ActionSchema:
    if len(node) < 2:
        raise PddlError("action without a name", *_loc(node))
    name = _sym(node[1], "action name")
    fields = _keyword_args(node[2:], (":parameters", ":precondition", ":effect"))
    params_node = fields.get(":parameters", [])
    if not isinstance(params_node, list):
        raise PddlError("parameters must be a list", params_node.line, params_node.col)
    params = _typed_list(params_node)
    pre = _literals(fields[":precondition"], f"precondition of {name}") if ":precondition" in fields else []
    eff = _literals(fields[":effect"], f"effect of {name}") if ":effect" in fields else []
    return ActionSchema(
        name=name,
        params=tuple(params),
        pre_pos=tuple(a for a, pos in pre if pos),
        pre_neg=tuple(a for a, pos in pre if not pos),
        add=tuple(a for a, pos in eff if pos),
        delete=tuple(a for a, pos in eff if not pos),
    )


def _check_domain(domain: Domain) -> None:
    declared = domain.declared_types()
    if domain.types and ":typing" not in domain.requirements:
        raise PddlError(f"domain {domain.name} declares types without :typing")
    for p in domain.predicates:
        for var, t in p.params:
            if t not in declared:
                raise PddlError(f"undeclared type {t} in predicate {p.name}")
    for a in domain.actions:
        variables = {}
        for var, t in a.params:
            if not var.startswith("?"):
                raise PddlError(f"parameter {var} of {a.name} must start with '?'")
            if t not in declared:
                raise PddlError(f"undeclared type {t} in action {a.name}")
            variables[var] = t
        if a.pre_neg and ":negative-preconditions" not in domain.requirements:
            raise PddlError(f"action {a.name} uses negative preconditions without :negative-preconditions")
        for atom in a.pre_pos + a.pre_neg + a.add + a.delete:
            decl = domain.predicate(atom.predicate)
            if decl is None:
                raise PddlError(f"undeclared predicate {atom.predicate} in action {a.name}")
            if decl.arity != len(atom.args):
                raise PddlError(
                    f"arity mismatch for {atom.predicate} in action {a.name}: "
                    f"expected {decl.arity}, got {len(atom.args)}"
                )
            for arg in atom.args:
                if not arg.startswith("?"):
                    raise PddlError(f"constant {arg} in action {a.name} is not supported")
                if arg not in variables:
                    raise PddlError(f"undeclared parameter {arg} in action {a.name}")


def parse_problem(text: str, domain: Domain) -> StripsProblem:
    """Parse a problem against an already parsed ``domain``."""
    tree = _sexpr(_tokenize(text))
    name = _check_define(tree, "problem")
    objects: list[tuple[str, str]] = []
    init: list[Atom] = []
    goal: list[Atom] | None = None
    for section in tree[2:]:
        head = _head(section)
        if head == ":domain":
            dname = _sym(section[1], "domain name")
            if dname != domain.name:
                raise PddlError(f"problem is for domain {dname}, not {domain.name}", *_loc(section))
        elif head == ":objects":
            objects.extend(_typed_list(section[1:]))
        elif head == ":init":
            for node in section[1:]:
                init.append(_atom(node))
        elif head == ":goal":
            if len(section) != 2:
                raise PddlError("goal must be a single formula", *_loc(section))
            lits = _literals(section[1], "goal")
            if any(not pos for _, pos in lits):
                raise PddlError("negative goal literals are not supported", *_loc(section))
            goal = [a for a, _ in lits]
        else:
            raise PddlError(f"unsupported problem section {head}", *_loc(section))
    if not goal:
        raise PddlError("empty goal")

    declared = domain.declared_types()
    names = {}
    for obj, t in objects:
        if t not in declared:
            raise PddlError(f"undeclared object type {t} for {obj}")
        names[obj] = t
    for where, atoms in (("init", init), ("goal", goal)):
        for atom in atoms:
            decl = domain.predicate(atom.predicate)
            if decl is None:
                raise PddlError(f"{where} references unknown predicate {atom.predicate}")
            if decl.arity != len(atom.args):
                raise PddlError(f"arity mismatch for {atom.predicate} in {where}")
            for arg, (_, t) in zip(atom.args, decl.params):
                if arg not in names:
                    raise PddlError(f"{where} references undeclared object {arg}")
                if not domain.is_subtype(names[arg], t):
                    raise PddlError(f"object {arg} of type {names[arg]} does not fit {t}")
    return StripsProblem(name, domain, tuple(objects), frozenset(init), frozenset(goal))


# ---------------------------------------------------------------------------
# Printing


def _fmt_typed(items: Iterable[tuple[str, str]]) -> str:
    return " ".join(f"{n} - {t}" for n, t in items)


def _fmt_conj(pos: Iterable[Atom], neg: Iterable[Atom] = ()) -> str:
    parts = [str(a) for a in pos] + [f"(not {a})" for a in neg]
    return "(and " + " ".join(parts) + ")"


def format_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append(f"  (:types {_fmt_typed(domain.types)})")
    if domain.predicates:
        preds = " ".join(
            "(" + " ".join([p.name] + [f"{v} - {t}" for v, t in p.params]) + ")" for p in domain.predicates
        )
        lines.append(f"  (:predicates {preds})")
    for a in domain.actions:
        lines.append(f"  (:action {a.name}")
        lines.append(f"    :parameters ({_fmt_typed(a.params)})")
        lines.append(f"    :precondition {_fmt_conj(a.pre_pos, a.pre_neg)}")
        lines.append(f"    :effect {_fmt_conj(a.add, a.delete)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def format_problem(problem: StripsProblem) -> str:
    return (
        f"(define (problem {problem.name})\n"
        f"  (:domain {problem.domain.name})\n"
        f"  (:objects {_fmt_typed(problem.objects)})\n"
        f"  (:init {' '.join(str(a) for a in sorted(problem.init))})\n"
        f"  (:goal {_fmt_conj(sorted(problem.goal))}))\n"
    )


# ---------------------------------------------------------------------------
# Grounding and semantics


def ground(domain: Domain, objects: Sequence[tuple[str, str]]) -> list[GroundAction]:
    """All type-compatible bindings, in schema order then lexicographic bindings."""
    out = []
    for schema in domain.actions:
        pools = []
        for _, t in schema.params:
            pools.append(sorted(o for o, ot in objects if domain.is_subtype(ot, t)))
        for combo in itertools.product(*pools):
            binding = {var: obj for (var, _), obj in zip(schema.params, combo)}
            add = frozenset(a.substitute(binding) for a in schema.add)
            out.append(
                GroundAction(
                    name=schema.name,
                    args=tuple(combo),
                    pre_pos=frozenset(a.substitute(binding) for a in schema.pre_pos),
                    pre_neg=frozenset(a.substitute(binding) for a in schema.pre_neg),
                    add=add,
                    # add wins on overlap, as in standard STRIPS semantics
                    delete=frozenset(a.substitute(binding) for a in schema.delete) - add,
                )
            )
    return out


def applicable(state: frozenset, action: GroundAction) -> bool:
    return action.pre_pos <= state and not (action.pre_neg & state)


def unsatisfied(state: frozenset, action: GroundAction) -> list[tuple[Atom, bool]]:
    """Precondition literals of ``action`` that fail in ``state``, positive first."""
    missing = [(a, True) for a in sorted(action.pre_pos) if a not in state]
    missing += [(a, False) for a in sorted(action.pre_neg) if a in state]
    return missing


def apply(state: frozenset, action: GroundAction) -> frozenset:
    if not applicable(state, action):
        raise InapplicableActionError(f"{action} is not applicable")
    return (state - action.delete) | action.add


def valid_actions(state: frozenset, actions: Sequence[GroundAction]) -> tuple[list, list]:
    """Split ``actions`` into (applicable, inapplicable), preserving order."""
    valid, invalid = [], []
    for a in actions:
        (valid if applicable(state, a) else invalid).append(a)
    return valid, invalid


def validate_plan(problem: StripsProblem, plan: Sequence[GroundAction]) -> ValidationResult:
    state = problem.init
    for i, action in enumerate(plan):
        missing = unsatisfied(state, action)
        if missing:
            atom, positive = missing[0]
            literal = str(atom) if positive else f"(not {atom})"
            return ValidationResult(i, False, Failure(i, literal, "precondition"), state)
        state = apply(state, action)
    unmet = sorted(problem.goal - state)
    if unmet:
        return ValidationResult(len(plan), False, Failure(len(plan), str(unmet[0]), "goal"), state)
    return ValidationResult(len(plan), True, None, state)


def bfs_plan(
    problem: StripsProblem,
    actions: Sequence[GroundAction] | None = None,
    max_states: int = 10**6,
    start: frozenset | None = None,
) -> list[GroundAction]:
    """Shortest plan by breadth-first search; ties go to earlier ground actions."""
    if actions is None:
        actions = problem.ground_actions()
    start = problem.init if start is None else start
    if problem.goal <= start:
        return []
    parent: dict[frozenset, tuple[frozenset, int] | None] = {start: None}
    frontier = deque([start])
    while frontier:
        state = frontier.popleft()
        for idx, action in enumerate(actions):
            if not applicable(state, action):
                continue
            nxt = (state - action.delete) | action.add
            if nxt in parent:
                continue
            parent[nxt] = (state, idx)
            if problem.goal <= nxt:
                plan = []
                cur = nxt
                while parent[cur] is not None:
                    prev, i = parent[cur]
                    plan.append(actions[i])
                    cur = prev
                return plan[::-1]
            if len(parent) > max_states:
                raise NoPlanError(f"explored-state cap of {max_states} exceeded")
            frontier.append(nxt)
    raise NoPlanError("goal is unreachable")


def reachable_states(problem: StripsProblem, actions: Sequence[GroundAction] | None = None) -> list[frozenset]:
    """Every state reachable from the initial state, in BFS order."""
    if actions is None:
        actions = problem.ground_actions()
    seen = {problem.init}
    order = [problem.init]
    frontier = deque(order)
    while frontier:
        state = frontier.popleft()
        for a in actions:
            if applicable(state, a):
                nxt = (state - a.delete) | a.add
                if nxt not in seen:
                    seen.add(nxt)
                    order.append(nxt)
                    frontier.append(nxt)
    return order


def find_action(actions: Sequence[GroundAction], name: str, args: Sequence[str] = ()) -> GroundAction:
    for a in actions:
        if a.name == name and a.args == tuple(args):
            return a
    raise KeyError(f"no ground action ({' '.join((name,) + tuple(args))})")


# ---------------------------------------------------------------------------
# Bundled assets


def bundled_text(name: str, part: str) -> str:
    """Raw text of a bundled PDDL file; ``part`` is ``domain`` or ``problem``."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled PDDL model for {name!r}")
    path = resources.files("planshaping") / "assets" / "pddl" / f"{name}_{part}.pddl"
    return path.read_text(encoding="utf-8")


def load_bundled(name: str) -> StripsProblem:
    domain = parse_domain(bundled_text(name, "domain"))
    return parse_problem(bundled_text(name, "problem"), domain)
