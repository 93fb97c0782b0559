"""Initial code and unit-test pools, including output self-consistency filtering."""
from __future__ import annotations

import logging
import random
from collections import Counter
from typing import Generic, Optional, Sequence, TypeVar

from .core import CodeCandidate, Provenance, Statement, UnitTest
from .ideation import AttackIdea, Plan
from .llm import Gateway, GatewayError, ProviderError, extract_block
from .sandbox import normalize_output

log = logging.getLogger(__name__)

__all__ = [
    "PoolError",
    "Cycler",
    "IdAllocator",
    "RANDOM",
    "ATTACK",
    "generate_code",
    "build_code_pool",
    "propose_ut_input",
    "validate_ut_output",
    "build_ut_pool",
]

RANDOM = "random"
ATTACK = "attack"

T = TypeVar("T")


class PoolError(GatewayError):
    def __init__(self, message: str, missing: Sequence[int] = ()):
        super().__init__(message)
        self.missing = list(missing)


class Cycler(Generic[T]):
    """Seeded shuffle that reshuffles and starts over once exhausted."""

    def __init__(self, items: Sequence[T], seed: int):
        if not items:
            raise ValueError("cannot cycle over an empty sequence")
        self._items = list(items)
        self._rng = random.Random(seed)
        self._order: list[T] = []

    def __next__(self) -> T:
        if not self._order:
            self._order = self._items[:]
            self._rng.shuffle(self._order)
            self._order.reverse()
        return self._order.pop()

    def __iter__(self):
        return self


class IdAllocator:
    def __init__(self, counters: Optional[dict[str, int]] = None):
        self.counters = dict(counters or {})

    def __call__(self, prefix: str) -> str:
        n = self.counters.get(prefix, 0)
        self.counters[prefix] = n + 1
        return f"{prefix}{n}"


def generate_code(gateway: Gateway, problem: Statement, plan: Plan) -> str:
    text = gateway.complete(
        gateway.request("code_from_plan", {"statement": problem.statement, "plan": plan.text})
    ).texts[0]
    source = extract_block(text)
    if not source.strip():
        raise ProviderError("code completion contained no program")
    return source + "\n"


def build_code_pool(
    gateway: Gateway,
    problem: Statement,
    plans: Sequence[Plan],
    n_codes: int,
    rng_seed: int = 0,
    ids: Optional[IdAllocator] = None,
) -> list[CodeCandidate]:
    if n_codes < 1:
        raise ValueError("n_codes must be >= 1")
    if not plans:
        raise PoolError("no plans to build codes from")
    ids = ids or IdAllocator()
    cycler = Cycler(plans, rng_seed)
    chosen = [next(cycler) for _ in range(n_codes)]
    codes: list[Optional[CodeCandidate]] = []
    for plan in chosen:
        try:
            source = generate_code(gateway, problem, plan)
        except ProviderError as exc:
            log.warning("code generation from plan %s failed: %s", plan.id, exc)
            codes.append(None)
            continue
        codes.append(CodeCandidate(ids("c"), source, Provenance("from_plan", ref=plan.id)))
    missing = [i for i, c in enumerate(codes) if c is None]
    if missing:
        raise PoolError(f"code pool incomplete, missing slots {missing}", missing)
    return codes  # type: ignore[return-value]


def propose_ut_input(
    gateway: Gateway, problem: Statement, source: str, idea: Optional[AttackIdea] = None
) -> str:
    if source == ATTACK:
        if idea is None:
            raise ValueError("attack-source proposals need an attack idea")
        request = gateway.request("ut_input", {"statement": problem.statement, "idea": idea.text})
    elif source == RANDOM:
        request = gateway.request("random_input", {"statement": problem.statement})
    else:
        raise ValueError(f"unknown input source {source!r}")
    return extract_block(gateway.complete(request).texts[0]) + "\n"


def validate_ut_output(
    gateway: Gateway,
    problem: Statement,
    input_text: str,
    k_samples: int = 4,
    agree_threshold: int = 3,
    ut_id: str = "pending",
    provenance: Provenance = Provenance("random_source"),
) -> Optional[UnitTest]:
    """Sample expected outputs and keep the test only if enough of them agree."""
    if not (k_samples >= agree_threshold >= 1):
        raise ValueError("need k_samples >= agree_threshold >= 1")
    completion = gateway.complete(
        gateway.request(
            "ut_output", {"statement": problem.statement, "input": input_text}, sample_count=k_samples
        )
    )
    answers = [normalize_output(extract_block(t)) for t in completion.texts]
    answer, votes = Counter(answers).most_common(1)[0]
    if votes < agree_threshold:
        return None
    return UnitTest(ut_id, input_text, answer, provenance, (votes, k_samples))


class _UtFactory:
    """Proposes and validates tests from one of the two input sources."""

    def __init__(self, gateway, problem, ideas, rng_seed, k_samples, agree_threshold, ids):
        self.gateway = gateway
        self.problem = problem
        self.ideas = Cycler(ideas, rng_seed) if ideas else None
        self.k_samples = k_samples
        self.agree_threshold = agree_threshold
        self.ids = ids

    def attempt(self, source: str) -> Optional[UnitTest]:
        idea = next(self.ideas) if source == ATTACK else None
        x = propose_ut_input(self.gateway, self.problem, source, idea)
        prov = Provenance("attack_source", ref=idea.id) if idea else Provenance("random_source")
        ut = validate_ut_output(self.gateway, self.problem, x, self.k_samples, self.agree_threshold,
                                provenance=prov)
        if ut is None:
            log.info("rejected %s-source input by self-consistency", source)
            return None
        return UnitTest(self.ids("t"), ut.input, ut.expected_output, ut.provenance, ut.votes)


def build_ut_pool(
    gateway: Gateway,
    problem: Statement,
    ideas: Sequence[AttackIdea],
    n_tests: int,
    rng_seed: int = 0,
    k_samples: int = 4,
    agree_threshold: int = 3,
    retry_budget: int = 3,
    ids: Optional[IdAllocator] = None,
) -> list[UnitTest]:
    """Half random-source and half attack-source tests, with cross-source backfill.

    Each slot gets ``retry_budget`` attempts from its own source, then the same
    number from the other source before the pool is declared incomplete.
    """
    if n_tests < 2 or n_tests % 2:
        raise ValueError(f"n_tests must be even and >= 2, got {n_tests}")
    factory = _UtFactory(gateway, problem, ideas, rng_seed, k_samples, agree_threshold, ids or IdAllocator())
    sources = [RANDOM] * (n_tests // 2) + [ATTACK] * (n_tests // 2)
    pool: list[Optional[UnitTest]] = []
    for source in sources:
        order = [source, ATTACK if source == RANDOM else RANDOM]
        ut = None
        for src in order:
            if src == ATTACK and factory.ideas is None:
                continue
            for _ in range(retry_budget):
                ut = factory.attempt(src)
                if ut is not None:
                    break
            if ut is not None:
                break
        pool.append(ut)
    missing = [i for i, u in enumerate(pool) if u is None]
    if missing:
        raise PoolError(f"test pool incomplete, missing slots {missing}", missing)
    return pool  # type: ignore[return-value]
