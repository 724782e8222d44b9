"""Plan-proposer backends: an HTTP chat client, a scripted replay and oracle mocks."""

from __future__ import annotations

import dataclasses
import json
import os
import random
import time
from collections import deque
from pathlib import Path
from typing import Protocol

from .. import strips, worlds
from .prompts import Abstraction, display
from .verifier import feasible_lowlevel_actions


class BackendError(RuntimeError):
    """Transport failure or an exhausted fixture."""


class ProposerBackend(Protocol):
    tag: str
    temperature: float

    def complete(self, prompt: str) -> str: ...


class HttpBackend:
    """OpenAI-compatible chat-completion client.

    The bearer token is read from ``LLM_API_KEY``.  Transport errors, 429 and
    5xx responses are retried with exponential backoff.
    """

    def __init__(
        self,
        url: str,
        model: str,
        temperature: float = 0.5,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        transport=None,
        sleep=time.sleep,
    ):
        import httpx

        self.url = url
        self.model = model
        self.temperature = temperature
        self.retries = retries
        self.backoff = backoff
        self.tag = f"http:{model}"
        self._sleep = sleep
        headers = {}
        token = os.environ.get("LLM_API_KEY")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._httpx = httpx

    def payload(self, prompt: str) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }

    def complete(self, prompt: str) -> str:
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.url, json=self.payload(prompt))
            except self._httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = BackendError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed completion body: {exc}") from exc
        raise BackendError(f"request failed after {self.retries + 1} attempts: {last}")

    def close(self) -> None:
        self._client.close()


class ScriptedBackend:
    """Replays the ``response`` fields of a transcript-format JSON-lines fixture in order."""

    temperature = 0.0

    def __init__(self, responses, tag: str = "scripted"):
        self._queue = deque(responses)
        self.tag = tag

    @classmethod
    def from_jsonl(cls, path) -> "ScriptedBackend":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([json.loads(line)["response"] for line in lines if line.strip()], f"scripted:{Path(path).name}")

    def complete(self, prompt: str) -> str:
        if not self._queue:
            raise BackendError("scripted fixture exhausted")
        return self._queue.popleft()


class ConstantBackend:
    """Always answers with the same text."""

    temperature = 0.0

    def __init__(self, text: str):
        self.text = text
        self.tag = f"constant:{text}"

    def complete(self, prompt: str) -> str:
        return self.text


# ---------------------------------------------------------------------------
# Oracles


def grid_shortest_path(env: worlds.GridWorld, state: worlds.AgentState) -> list[str]:
    """Fewest low-level actions to the goal on the determinized grid, never entering lava."""
    det = worlds.determinize(env)
    det = dataclasses.replace(det, max_steps=10**9)
    start = worlds.AgentState(state.pos, state.facing, state.flags)
    parent = {start.key(): None}
    frontier = deque([start])
    while frontier:
        s = frontier.popleft()
        for a in det.actions:
            out = worlds.step(det, s, a)
            if out.reason == "lava":
                continue
            nxt = worlds.AgentState(out.next_state.pos, out.next_state.facing, out.next_state.flags)
            if nxt.key() in parent:
                continue
            parent[nxt.key()] = (s.key(), a)
            if out.reason == "goal":
                plan, k = [], nxt.key()
                while parent[k] is not None:
                    k, act = parent[k]
                    plan.append(act)
                return plan[::-1]
            frontier.append(nxt)
    raise strips.NoPlanError(f"no path to the goal in {env.name}")


class OracleBackend:
    """Answers from a planner instead of a language model.

    The loop tells the backend where it is through :meth:`observe`.  With
    probability ``corruption`` an attempt returns an action the verifier
    rejects.  When ``respect_feedback`` is set, corruption only applies to the
    first attempt at each step, so a back-prompt always gets the planner's
    answer.
    """

    def __init__(self, abstraction: Abstraction, corruption: float = 0.0, seed: int = 0, respect_feedback: bool = True):
        if not 0.0 <= corruption <= 1.0:
            raise ValueError("corruption must lie in [0, 1]")
        self.abstraction = abstraction
        self.corruption = corruption
        self.respect_feedback = respect_feedback
        self.rng = random.Random(seed)
        self.temperature = 0.0
        self.tag = f"oracle:{corruption}"
        self._state = None
        self._attempt = 0
        self._whole = False

    def observe(self, state, attempt: int = 0, whole_plan: bool = False) -> None:
        self._state = state
        self._attempt = attempt
        self._whole = whole_plan

    def _plan(self, state):
        ab = self.abstraction
        if ab.mode == "deterministic":
            return grid_shortest_path(ab.env, state if state is not None else ab.start)
        start = ab.problem.init if state is None else state
        return strips.bfs_plan(ab.problem, list(ab.actions), start=start)

    def _wrong(self, state):
        ab = self.abstraction
        if ab.mode == "deterministic":
            bad = feasible_lowlevel_actions(ab.env, state if state is not None else ab.start).infeasible
        else:
            bad = strips.valid_actions(ab.problem.init if state is None else state, ab.actions)[1]
        return bad[self.rng.randrange(len(bad))] if bad else None

    def complete(self, prompt: str) -> str:
        mode = self.abstraction.mode
        plan = self._plan(self._state)
        if self._whole:
            # corrupt individual steps of the whole plan
            out = []
            for a in plan:
                if self.rng.random() < self.corruption:
                    choices = self.abstraction.env.actions if mode == "deterministic" else self.abstraction.actions
                    a = choices[self.rng.randrange(len(choices))]
                out.append(display(a, mode))
            return ", ".join(out) if mode == "deterministic" else "\n".join(out)
        may_corrupt = self._attempt == 0 or not self.respect_feedback
        if may_corrupt and self.rng.random() < self.corruption:
            wrong = self._wrong(self._state)
            if wrong is not None:
                return display(wrong, mode)
        if not plan:
            raise BackendError("oracle asked for an action at a goal state")
        return display(plan[0], mode)
