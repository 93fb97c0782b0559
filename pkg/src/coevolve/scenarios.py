"""A small scripted scenario that exercises the whole pipeline offline.

The problem asks for the maximum of a list of integers.  Half of the scripted
programs are correct; the other two are off by one or crash.  One scripted test
carries a wrong expected output that only the off-by-one program matches.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any

from .core import EvalTest, Problem
from .runner import RunConfig

STATEMENT = (
    "Read a single line containing space-separated integers and print the largest of them."
)

CORRECT_SCAN = "xs = list(map(int, input().split()))\nprint(max(xs))\n"
CORRECT_SORT = "xs = sorted(int(t) for t in input().split())\nprint(xs[-1])\n"
OFF_BY_ONE = "xs = list(map(int, input().split()))\nprint(max(xs) + 1)\n"
CRASHING = "xs = list(map(int, input().split()))\nprint(xs[len(xs)])\n"
REGENERATED = "import sys\nprint(max(int(t) for t in sys.stdin.read().split()))\n"
# passes every non-negative test but is wrong when all values are negative
ZERO_SEEDED = "best = 0\nfor t in input().split():\n    best = max(best, int(t))\nprint(best)\n"

REFERENCE = CORRECT_SCAN

SPURIOUS_INPUT = "4 8 6"
REFRESHED_INPUT = "5 9 2"
PROBES = ["-3 -8 -1", "5 2 9 1", "-10 -4", "0 3 3"]


def _code(src: str) -> str:
    return f"Here is the program.\n```python\n{src}```\n"


def _raw(text: str) -> str:
    return f"```\n{text}\n```"


def _answers(*values: str) -> list[str]:
    return [_raw(v) for v in values]


def script() -> list[dict[str, Any]]:
    entries: list[dict[str, Any]] = [
        {"template": "hints", "responses": [
            "1. Linear scan keeping the running maximum\n2. Sort the values and take the last one"]},
        {"template": "plan", "responses": ["Scan the integers once, tracking the largest value seen."]},
        {"template": "plan", "responses": ["Sort the integers ascending and print the final element."]},
        {"template": "plan", "responses": ["Parse all integers, then compare each against the best so far."]},
        {"template": "attack_ideas", "responses": ["1. All values equal\n2. Largest value first"]},
        {"template": "attack_ideas", "responses": ["1. Largest value in the middle\n2. All values equal"]},
        {"template": "attack_ideas", "responses": ["1. Negative values only\n2. A single value"]},
        # initial code pool
        {"template": "code_from_plan", "responses": [_code(CORRECT_SCAN)]},
        {"template": "code_from_plan", "responses": [_code(CORRECT_SORT)]},
        {"template": "code_from_plan", "responses": [_code(OFF_BY_ONE)]},
        {"template": "code_from_plan", "responses": [_code(CRASHING)]},
        # round-1 replacement for the all-failing code
        {"template": "code_from_plan", "responses": [_code(REGENERATED)]},
        # test pool: two random-source and two attack-source inputs
        {"template": "random_input", "responses": [_raw("3 1 2")]},
        {"template": "random_input", "responses": [_raw("7 7 7")]},
        {"template": "ut_input", "responses": [_raw("10 20 5")]},
        {"template": "ut_input", "responses": [_raw(SPURIOUS_INPUT)]},
        {"template": "ut_output", "when": {"input": "3 1 2"}, "responses": _answers("3", "3", "3", "2")},
        {"template": "ut_output", "when": {"input": "7 7 7"}, "responses": _answers("7", "7", "7", "7")},
        {"template": "ut_output", "when": {"input": "10 20 5"}, "responses": _answers("20", "20", "21", "20")},
        # the spurious expected output agrees with the off-by-one program
        {"template": "ut_output", "when": {"input": SPURIOUS_INPUT}, "responses": _answers("9", "9", "9", "8")},
        # coupling break: regenerated test for the low-support column
        {"template": "refine_ut", "responses": [_raw(REFRESHED_INPUT)]},
        {"template": "ut_output", "when": {"input": REFRESHED_INPUT}, "responses": _answers("9", "9", "9", "9")},
        # repair of the off-by-one program
        {"template": "fix_code", "responses": [_code(ZERO_SEEDED)]},
    ]
    entries += [{"template": "random_input", "responses": [_raw(p)]} for p in PROBES]
    return entries


@dataclass(frozen=True)
class Scenario:
    problem: Problem
    script: list[dict[str, Any]]
    config: RunConfig

    def write_script(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.script, fh, indent=2)


def max_of_list(**overrides: Any) -> Scenario:
    problem = Problem(
        "max-of-list",
        STATEMENT,
        eval_tests=(
            EvalTest("1000 -7 31337 42\n", "31337\n"),
            EvalTest("-50 -90 -20\n", "-20\n"),
        ),
        reference_solution=REFERENCE,
    )
    config = replace(
        RunConfig(n_codes=4, n_tests=4, t_max=5, n_hints=2, plans_per_subset=1, ideas_per_plan=2,
                  n_probes=len(PROBES), seed=0, workers=1),
        **overrides,
    )
    return Scenario(problem, script(), config)
