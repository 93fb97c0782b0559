"""Iterative Code-UT self-play driven by execution-matrix pass counts.

One round runs four steps in order, refreshing the matrix after each step
that changed a pool:

1. replace codes that pass no test,
2. regenerate the lowest-support non-trivial test,
3. repair codes failing the highest-support non-trivial test,
4. replace tests that every code passes or no code passes.

The loop stops early once every code passes every test.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

from .core import (
    CodeCandidate,
    ExecutionMatrix,
    PassStats,
    Provenance,
    Statement,
    UnitTest,
    compute_pass_stats,
    is_saturated,
    non_trivial_best_ut,
    non_trivial_worst_ut,
)
from .ideation import AttackIdea, Plan
from .llm import Gateway, ProviderError, extract_block
from .pools import ATTACK, RANDOM, Cycler, IdAllocator, generate_code, propose_ut_input, validate_ut_output
from .sandbox import Executor

log = logging.getLogger(__name__)

__all__ = [
    "SelfPlayConfig",
    "Event",
    "SelfPlayState",
    "SelfPlay",
    "replay_history",
]


@dataclass(frozen=True)
class SelfPlayConfig:
    n_codes: int = 16
    n_tests: int = 16
    t_max: int = 5
    k_samples: int = 4
    agree_threshold: int = 3
    retry_budget: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_codes < 1 or self.n_tests < 1:
            raise ValueError("pool sizes must be >= 1")
        if self.t_max < 0:
            raise ValueError("t_max must be >= 0")


@dataclass(frozen=True)
class Event:
    round: int
    step: str
    action: str
    slot: Optional[int] = None
    old: Optional[str] = None
    new: Optional[dict[str, Any]] = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        d = {"round": self.round, "step": self.step, "action": self.action}
        for k in ("slot", "old", "new"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        if self.detail:
            d["detail"] = self.detail
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Event":
        return cls(d["round"], d["step"], d["action"], d.get("slot"), d.get("old"), d.get("new"), d.get("detail", ""))


@dataclass(frozen=True)
class SelfPlayState:
    codes: tuple[CodeCandidate, ...]
    uts: tuple[UnitTest, ...]
    matrix: ExecutionMatrix
    stats: PassStats
    round: int = 0
    history: tuple[Event, ...] = ()
    snapshots: tuple[dict[str, Any], ...] = field(default=(), compare=False)

    def log(self, *events: Event) -> "SelfPlayState":
        return replace(self, history=self.history + events)

    def snapshot(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "code_ids": [c.id for c in self.codes],
            "ut_ids": [t.id for t in self.uts],
            "matrix": self.matrix.to_dict(),
            "stats": self.stats.to_dict(),
        }


CLEAN = "clean_codes"
BREAK = "break_coupling"
FIX = "fix_codes"
REPLACE = "replace_trivial_uts"


def replay_history(
    codes: Sequence[CodeCandidate], uts: Sequence[UnitTest], history: Sequence[Event]
) -> tuple[list[CodeCandidate], list[UnitTest]]:
    """Re-apply logged replacements to the round-0 pools."""
    codes, uts = list(codes), list(uts)
    for ev in history:
        if isinstance(ev, dict):
            ev = Event.from_dict(ev)
        if ev.action == "replace_code":
            assert codes[ev.slot].id == ev.old, f"history out of sync at {ev}"
            codes[ev.slot] = CodeCandidate.from_dict(ev.new)
        elif ev.action == "replace_ut":
            assert uts[ev.slot].id == ev.old, f"history out of sync at {ev}"
            uts[ev.slot] = UnitTest.from_dict(ev.new)
    return codes, uts


class SelfPlay:
    """Holds everything the four steps need besides the pools themselves."""

    def __init__(
        self,
        gateway: Gateway,
        executor: Executor,
        problem: Statement,
        plans: Sequence[Plan],
        ideas: Sequence[AttackIdea],
        config: SelfPlayConfig = SelfPlayConfig(),
        ids: Optional[IdAllocator] = None,
    ):
        self.gateway = gateway
        self.executor = executor
        self.problem = problem
        self.config = config
        self.ids = ids or IdAllocator()
        self.plans = Cycler(plans, config.seed + 1)
        self.ideas = Cycler(ideas, config.seed + 2) if ideas else None

    # -- matrix bookkeeping -------------------------------------------------

    def initial_state(self, codes: Sequence[CodeCandidate], uts: Sequence[UnitTest]) -> SelfPlayState:
        matrix = self.executor.build_matrix(codes, uts)
        state = SelfPlayState(tuple(codes), tuple(uts), matrix, compute_pass_stats(matrix))
        return replace(state, snapshots=(state.snapshot(),))

    def _refresh(self, state: SelfPlayState, codes, uts, events: list[Event]) -> SelfPlayState:
        matrix = self.executor.build_matrix(codes, uts)
        return replace(
            state,
            codes=tuple(codes),
            uts=tuple(uts),
            matrix=matrix,
            stats=compute_pass_stats(matrix),
            history=state.history + tuple(events),
        )

    def _skip(self, state: SelfPlayState, step: str, why: str) -> SelfPlayState:
        return state.log(Event(state.round, step, "skip", detail=why))

    def _next_idea(self) -> Optional[AttackIdea]:
        return next(self.ideas) if self.ideas is not None else None

    # -- step 1 ---------------------------------------------------------------

    def step_clean_codes(self, state: SelfPlayState) -> SelfPlayState:
        failing = [i for i, c in enumerate(state.stats.code_counts) if c == 0]
        if not failing:
            return self._skip(state, CLEAN, "no all-failing code")
        new_codes: dict[int, CodeCandidate] = {}
        for i in failing:
            plan = next(self.plans)
            try:
                source = generate_code(self.gateway, self.problem, plan)
            except ProviderError as exc:
                # abort the whole step, pools untouched
                return state.log(Event(state.round, CLEAN, "provider_failure", slot=i, detail=str(exc)))
            new_codes[i] = CodeCandidate(
                self.ids("c"), source,
                Provenance("regenerated", round=state.round, ref=plan.id, parent=state.codes[i].id),
            )
        codes = list(state.codes)
        events = []
        for i, code in new_codes.items():
            events.append(Event(state.round, CLEAN, "replace_code", slot=i, old=codes[i].id, new=code.to_dict()))
            codes[i] = code
        return self._refresh(state, codes, state.uts, events)

    # -- step 2 ---------------------------------------------------------------

    def step_break_coupling(self, state: SelfPlayState) -> SelfPlayState:
        j = non_trivial_worst_ut(state.stats)
        if j is None:
            return self._skip(state, BREAK, "no non-trivial test")
        old = state.uts[j]
        passing = [c for i, c in enumerate(state.codes) if state.matrix.entries[i, j]]
        passing_text = "\n\n".join(f"# {c.id}\n{c.source}" for c in passing)
        events = []
        for attempt in range(self.config.retry_budget):
            idea = self._next_idea()
            try:
                completion = self.gateway.complete(self.gateway.request("refine_ut", {
                    "statement": self.problem.statement,
                    "input": old.input,
                    "expected_output": old.expected_output,
                    "passing_codes": passing_text,
                    "idea": idea.text if idea else "any valid input",
                }))
                x = extract_block(completion.texts[0]) + "\n"
                prov = Provenance("refreshed", round=state.round, ref=idea.id if idea else None, parent=old.id)
                ut = validate_ut_output(self.gateway, self.problem, x, self.config.k_samples,
                                        self.config.agree_threshold, provenance=prov)
            except ProviderError as exc:
                return state.log(*events, Event(state.round, BREAK, "provider_failure", slot=j,
                                                old=old.id, detail=str(exc)))
            if ut is not None:
                ut = replace(ut, id=self.ids("t"))
                uts = list(state.uts)
                uts[j] = ut
                events.append(Event(state.round, BREAK, "replace_ut", slot=j, old=old.id, new=ut.to_dict()))
                return self._refresh(state, state.codes, uts, events)
            events.append(Event(state.round, BREAK, "rejected", slot=j, old=old.id,
                                detail=f"self-consistency failed (attempt {attempt + 1})"))
        events.append(Event(state.round, BREAK, "retained", slot=j, old=old.id))
        return state.log(*events)

    # -- step 3 ---------------------------------------------------------------

    def step_fix_codes(self, state: SelfPlayState) -> SelfPlayState:
        j = non_trivial_best_ut(state.stats)
        if j is None:
            return self._skip(state, FIX, "no non-trivial test")
        ut = state.uts[j]
        codes = list(state.codes)
        events = []
        for i, code in enumerate(state.codes):
            if state.matrix.entries[i, j]:
                continue
            actual = self.executor.run(code, ut.input)
            try:
                text = self.gateway.complete(self.gateway.request("fix_code", {
                    "statement": self.problem.statement,
                    "source": code.source,
                    "input": ut.input,
                    "expected_output": ut.expected_output,
                    "actual_output": actual.describe(),
                })).texts[0]
                source = extract_block(text)
                if not source.strip():
                    raise ProviderError("repair completion contained no program")
            except ProviderError as exc:
                events.append(Event(state.round, FIX, "provider_failure", slot=i, old=code.id, detail=str(exc)))
                continue
            fixed = CodeCandidate(
                self.ids("c"), source + "\n",
                Provenance("fixed", round=state.round, ref=ut.id, parent=code.id),
            )
            events.append(Event(state.round, FIX, "replace_code", slot=i, old=code.id, new=fixed.to_dict()))
            codes[i] = fixed
        if not any(e.action == "replace_code" for e in events):
            return state.log(*events)
        return self._refresh(state, codes, state.uts, events)

    # -- step 4 ---------------------------------------------------------------

    def _new_test(self, state: SelfPlayState, old: UnitTest) -> Optional[UnitTest]:
        idea = self._next_idea()
        source = ATTACK if idea else RANDOM
        x = propose_ut_input(self.gateway, self.problem, source, idea)
        prov = Provenance("replaced_trivial", round=state.round, ref=idea.id if idea else None, parent=old.id)
        ut = validate_ut_output(self.gateway, self.problem, x, self.config.k_samples,
                                self.config.agree_threshold, provenance=prov)
        return replace(ut, id=self.ids("t")) if ut is not None else None

    def step_replace_trivial_uts(self, state: SelfPlayState) -> SelfPlayState:
        if is_saturated(state.matrix):
            return self._skip(state, REPLACE, "matrix saturated")
        trivial = [j for j, r in enumerate(state.stats.ut_rates) if r == 0 or r == 1]
        if not trivial:
            return self._skip(state, REPLACE, "no zero-discrimination test")
        uts = list(state.uts)
        events = []
        for j in trivial:
            old = state.uts[j]
            ut = None
            try:
                for _ in range(self.config.retry_budget):
                    ut = self._new_test(state, old)
                    if ut is not None:
                        break
            except ProviderError as exc:
                events.append(Event(state.round, REPLACE, "provider_failure", slot=j, old=old.id, detail=str(exc)))
                continue
            if ut is None:
                events.append(Event(state.round, REPLACE, "retained", slot=j, old=old.id,
                                    detail="no replacement passed self-consistency"))
                continue
            uts[j] = ut
            events.append(Event(state.round, REPLACE, "replace_ut", slot=j, old=old.id, new=ut.to_dict()))
        if not any(e.action == "replace_ut" for e in events):
            return state.log(*events)
        return self._refresh(state, state.codes, uts, events)

    # -- loop -----------------------------------------------------------------

    def run(self, state: SelfPlayState) -> SelfPlayState:
        for t in range(1, self.config.t_max + 1):
            if is_saturated(state.matrix):
                state = state.log(Event(state.round, "loop", "terminate", detail="matrix saturated"))
                break
            state = replace(state, round=t)
            state = self.step_clean_codes(state)
            state = self.step_break_coupling(state)
            state = self.step_fix_codes(state)
            state = self.step_replace_trivial_uts(state)
            state = replace(state, snapshots=state.snapshots + (state.snapshot(),))
        else:
            if self.config.t_max:
                state = state.log(Event(state.round, "loop", "terminate", detail="iteration budget reached"))
        return state
