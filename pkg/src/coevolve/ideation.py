"""Solution-strategy exploration and failure-oriented test ideas."""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Any, Sequence

from .core import Statement
from .llm import Gateway, GatewayError, extract_block, parse_list

__all__ = [
    "IdeationError",
    "Plan",
    "AttackIdea",
    "normalize_text",
    "dedupe",
    "generate_hints",
    "enumerate_hint_subsets",
    "expand_plans",
    "derive_attack_ideas",
]


class IdeationError(GatewayError):
    pass


@dataclass(frozen=True)
class Plan:
    id: str
    text: str
    subset: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "subset": list(self.subset)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Plan":
        return cls(d["id"], d["text"], tuple(d["subset"]))


@dataclass(frozen=True)
class AttackIdea:
    id: str
    text: str
    plan_id: str

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "plan_id": self.plan_id}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AttackIdea":
        return cls(d["id"], d["text"], d["plan_id"])


def normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().casefold()


def dedupe(items: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for item in items:
        key = normalize_text(item)
        if key and key not in seen:
            seen.add(key)
            out.append(item.strip())
    return out


def generate_hints(gateway: Gateway, problem: Statement, n_hints: int = 5) -> list[str]:
    if n_hints < 1:
        raise ValueError("n_hints must be >= 1")
    variables = {"statement": problem.statement, "n_hints": n_hints}
    for _ in range(2):  # one retry on an unparseable completion
        text = gateway.complete(gateway.request("hints", variables)).texts[0]
        hints = dedupe(parse_list(text))[:n_hints]
        if hints:
            return hints
    raise IdeationError("could not parse any hints from the completion")


def enumerate_hint_subsets(hints: Sequence[str]) -> list[tuple[int, ...]]:
    """All index subsets of size one or two, in lexicographic order."""
    if not hints:
        raise ValueError("need at least one hint")
    idx = range(len(hints))
    return list(itertools.combinations(idx, 1)) + list(itertools.combinations(idx, 2))


def expand_plans(
    gateway: Gateway,
    problem: Statement,
    hints: Sequence[str],
    subsets: Sequence[tuple[int, ...]],
    plans_per_subset: int = 1,
) -> list[Plan]:
    if not subsets:
        raise IdeationError("no hint subsets to expand")
    requests = [
        gateway.request(
            "plan",
            {"statement": problem.statement, "hints": "\n".join(f"- {hints[i]}" for i in subset)},
            sample_count=plans_per_subset,
        )
        for subset in subsets
    ]
    plans = []
    for subset, completion in zip(subsets, gateway.complete_many(requests)):
        for text in completion.texts:
            text = text.strip()
            if text:
                plans.append(Plan(f"s{len(plans)}", text, tuple(subset)))
    if not plans:
        raise IdeationError("every plan completion was empty")
    return plans


def derive_attack_ideas(
    gateway: Gateway, problem: Statement, plans: Sequence[Plan], ideas_per_plan: int = 2
) -> list[AttackIdea]:
    if not plans:
        raise IdeationError("no plans to derive attack ideas from")
    requests = [
        gateway.request(
            "attack_ideas",
            {"statement": problem.statement, "plan": p.text, "ideas_per_plan": ideas_per_plan},
        )
        for p in plans
    ]
    ideas: list[AttackIdea] = []
    seen: set[str] = set()
    for plan, completion in zip(plans, gateway.complete_many(requests)):
        items = parse_list(extract_block(completion.texts[0]))[:ideas_per_plan]
        for item in items:
            key = normalize_text(item)
            if key in seen:
                continue
            seen.add(key)
            ideas.append(AttackIdea(f"a{len(ideas)}", item, plan.id))
    return ideas
