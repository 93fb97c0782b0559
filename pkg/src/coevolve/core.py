"""Domain types and pure arithmetic over the Code-UT execution matrix."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np

__all__ = [
    "EvalTest",
    "Problem",
    "Statement",
    "Provenance",
    "CodeCandidate",
    "UnitTest",
    "ExecutionMatrix",
    "PassStats",
    "compute_pass_stats",
    "non_trivial_worst_ut",
    "non_trivial_best_ut",
    "bon_tie_set",
    "is_saturated",
]


@dataclass(frozen=True)
class EvalTest:
    input: str
    output: str


@dataclass(frozen=True)
class Statement:
    """The part of a problem the generation pipeline is allowed to see."""

    id: str
    statement: str


@dataclass(frozen=True)
class Problem:
    """A coding task plus held-out material used only for scoring.

    ``eval_tests`` and ``reference_solution`` are never handed to generation
    stages; those only ever receive :meth:`public`.
    """

    id: str
    statement: str
    eval_tests: Optional[tuple[EvalTest, ...]] = None
    reference_solution: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("problem id must be non-empty")

    def public(self) -> Statement:
        return Statement(self.id, self.statement)


@dataclass(frozen=True)
class Provenance:
    """Where a pool member came from.

    ``kind`` is one of ``from_plan``, ``regenerated``, ``fixed`` for codes and
    ``random_source``, ``attack_source``, ``refreshed``, ``replaced_trivial``
    for unit tests.
    """

    kind: str
    round: Optional[int] = None
    ref: Optional[str] = None
    parent: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Provenance":
        return cls(d["kind"], d.get("round"), d.get("ref"), d.get("parent"))


@dataclass(frozen=True)
class CodeCandidate:
    id: str
    source: str
    provenance: Provenance

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise ValueError(f"code candidate {self.id!r} has empty source")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "source": self.source, "provenance": self.provenance.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CodeCandidate":
        return cls(d["id"], d["source"], Provenance.from_dict(d["provenance"]))


@dataclass(frozen=True)
class UnitTest:
    id: str
    input: str
    expected_output: str
    provenance: Provenance
    votes: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        agree, total = self.votes
        if agree > total:
            raise ValueError("consistency votes: agree > total")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "input": self.input,
            "expected_output": self.expected_output,
            "provenance": self.provenance.to_dict(),
            "votes": list(self.votes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UnitTest":
        return cls(
            d["id"], d["input"], d["expected_output"],
            Provenance.from_dict(d["provenance"]), tuple(d["votes"]),
        )


@dataclass(frozen=True)
class ExecutionMatrix:
    """Boolean pass/fail matrix, rows are codes and columns are unit tests."""

    entries: np.ndarray
    code_ids: tuple[str, ...]
    ut_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=bool)
        if entries.ndim != 2:
            raise ValueError("execution matrix must be two-dimensional")
        if entries.shape != (len(self.code_ids), len(self.ut_ids)):
            raise ValueError(
                f"matrix shape {entries.shape} does not match "
                f"{len(self.code_ids)} codes x {len(self.ut_ids)} tests"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], code_ids=None, ut_ids=None) -> "ExecutionMatrix":
        arr = np.asarray(rows, dtype=bool).reshape(len(rows), -1)
        code_ids = tuple(code_ids) if code_ids is not None else tuple(f"c{i}" for i in range(arr.shape[0]))
        ut_ids = tuple(ut_ids) if ut_ids is not None else tuple(f"t{j}" for j in range(arr.shape[1]))
        return cls(arr, code_ids, ut_ids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def to_dict(self) -> dict[str, Any]:
        # row-major bit string
        return {
            "code_ids": list(self.code_ids),
            "ut_ids": list(self.ut_ids),
            "shape": list(self.shape),
            "bits": "".join("1" if b else "0" for b in self.entries.ravel()),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExecutionMatrix":
        n, m = d["shape"]
        bits = np.array([c == "1" for c in d["bits"]], dtype=bool).reshape(n, m)
        return cls(bits, tuple(d["code_ids"]), tuple(d["ut_ids"]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExecutionMatrix):
            return NotImplemented
        return (
            self.code_ids == other.code_ids
            and self.ut_ids == other.ut_ids
            and np.array_equal(self.entries, other.entries)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class PassStats:
    """Row/column pass counts with exact rational rates."""

    ut_counts: tuple[int, ...]
    code_counts: tuple[int, ...]
    n_codes: int
    n_tests: int
    ut_rates: tuple[Fraction, ...] = field(init=False)
    code_rates: tuple[Fraction, ...] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ut_rates", tuple(Fraction(c, self.n_codes) for c in self.ut_counts))
        object.__setattr__(self, "code_rates", tuple(Fraction(c, self.n_tests) for c in self.code_counts))

    def to_dict(self) -> dict[str, Any]:
        return {"ut_counts": list(self.ut_counts), "code_counts": list(self.code_counts),
                "n_codes": self.n_codes, "n_tests": self.n_tests}


def compute_pass_stats(matrix: ExecutionMatrix) -> PassStats:
    n_codes, n_tests = matrix.shape
    if n_codes == 0 or n_tests == 0:
        raise ValueError(f"execution matrix must be non-empty, got shape {matrix.shape}")
    m = matrix.entries.astype(np.int64)
    return PassStats(
        ut_counts=tuple(int(x) for x in m.sum(axis=0)),
        code_counts=tuple(int(x) for x in m.sum(axis=1)),
        n_codes=n_codes,
        n_tests=n_tests,
    )


def _interior(rates: Sequence[Fraction]) -> list[int]:
    return [j for j, r in enumerate(rates) if 0 < r < 1]


def non_trivial_worst_ut(stats: PassStats) -> Optional[int]:
    """Column with the smallest pass rate strictly inside (0, 1); lowest index wins ties."""
    idx = _interior(stats.ut_rates)
    if not idx:
        return None
    # min() returns the first minimal element, which is the lowest index
    return min(idx, key=lambda j: stats.ut_rates[j])


def non_trivial_best_ut(stats: PassStats) -> Optional[int]:
    """Column with the largest pass rate strictly inside (0, 1); lowest index wins ties."""
    idx = _interior(stats.ut_rates)
    if not idx:
        return None
    return max(idx, key=lambda j: (stats.ut_rates[j], -j))


def bon_tie_set(stats: PassStats) -> list[int]:
    if not stats.code_counts:
        raise ValueError("no code candidates")
    top = max(stats.code_counts)
    return [i for i, c in enumerate(stats.code_counts) if c == top]


def is_saturated(matrix: ExecutionMatrix) -> bool:
    return bool(matrix.entries.all())
