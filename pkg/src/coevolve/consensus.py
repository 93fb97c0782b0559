"""Output-consensus clustering over the best-of-N tie set.

Tied candidates run on random probe inputs; each candidate's outputs form a
signature.  Execution errors are missing evidence, not conflicts, so two
signatures are compatible when they agree wherever both produced output.
Clusters are built greedily, scored by ordered valid pairwise agreements, and
the best member of the best cluster wins.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .core import CodeCandidate, Statement
from .llm import Gateway
from .pools import RANDOM, propose_ut_input
from .sandbox import Executor


class _Err:
    """Marker for a probe on which the program produced no valid output."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ERR"

    def __reduce__(self):
        return (_Err, ())


ERR = _Err()

Signature = tuple  # tuple of canonical output strings or ERR


@dataclass
class Cluster:
    members: list[int]
    quarantine: bool = False
    scores: dict[int, int] = field(default_factory=dict)

    @property
    def score(self) -> int:
        return sum(self.scores.values())


@dataclass
class Selection:
    chosen: int
    clusters: list[Cluster]
    chosen_cluster: int

    def to_dict(self, ids: Optional[Sequence[str]] = None) -> dict[str, Any]:
        name = (lambda i: ids[i]) if ids is not None else (lambda i: i)
        return {
            "chosen": name(self.chosen),
            "chosen_cluster": self.chosen_cluster,
            "clusters": [
                {
                    "members": [name(i) for i in c.members],
                    "quarantine": c.quarantine,
                    "s_cls": c.score,
                    "s_ind": [c.scores.get(i, 0) for i in c.members],
                }
                for c in self.clusters
            ],
        }


def generate_probe_inputs(gateway: Gateway, problem: Statement, n_probes: int = 8, retry_budget: int = 3) -> list[str]:
    """Random valid inputs without expected outputs; duplicates are re-proposed within a budget."""
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    probes: list[str] = []
    seen: set[str] = set()
    for _ in range(n_probes):
        for attempt in range(retry_budget + 1):
            x = propose_ut_input(gateway, problem, RANDOM)
            if x not in seen or attempt == retry_budget:
                break
        seen.add(x)
        probes.append(x)
    return probes


def signature(code: CodeCandidate, probes: Sequence[str], executor: Executor) -> Signature:
    outcomes = executor.run_pairs([(code.source, z) for z in probes])
    return tuple(o.output if o.ok else ERR for o in outcomes)


def _check(s1: Signature, s2: Signature) -> None:
    if len(s1) != len(s2):
        raise ValueError(f"signature lengths differ: {len(s1)} vs {len(s2)}")


def observed_compatible(s1: Signature, s2: Signature) -> bool:
    _check(s1, s2)
    return all(a == b for a, b in zip(s1, s2) if a is not ERR and b is not ERR)


def pair_agreement(s1: Signature, s2: Signature) -> int:
    _check(s1, s2)
    return sum(1 for a, b in zip(s1, s2) if a is not ERR and b is not ERR and a == b)


def _all_err(s: Signature) -> bool:
    return all(x is ERR for x in s)


def build_clusters(signatures: Sequence[Signature], order: Sequence[int]) -> list[Cluster]:
    """Greedy insertion in ``order``; all-ERR signatures go to a trailing quarantine cluster."""
    clusters: list[Cluster] = []
    quarantined: list[int] = []
    for i in order:
        s = signatures[i]
        if _all_err(s):
            quarantined.append(i)
            continue
        for cluster in clusters:
            if all(observed_compatible(s, signatures[j]) for j in cluster.members):
                cluster.members.append(i)
                break
        else:
            clusters.append(Cluster([i]))
    if quarantined:
        clusters.append(Cluster(quarantined, quarantine=True))
    return clusters


def score_clusters(clusters: Sequence[Cluster], signatures: Sequence[Signature]) -> list[Cluster]:
    for cluster in clusters:
        cluster.scores = {
            i: 0 if cluster.quarantine else sum(
                pair_agreement(signatures[i], signatures[j]) for j in cluster.members if j != i
            )
            for i in cluster.members
        }
    return list(clusters)


def select_from_signatures(signatures: Sequence[Signature], order: Optional[Sequence[int]] = None) -> Selection:
    """Pick the highest-scoring cluster, then its highest-scoring member.

    Ties go to the earliest-created cluster and then to the member processed first.
    """
    if not signatures:
        raise ValueError("no candidates to select from")
    order = list(range(len(signatures))) if order is None else list(order)
    clusters = score_clusters(build_clusters(signatures, order), signatures)
    best = max(range(len(clusters)), key=lambda m: (clusters[m].score, -m))
    g = clusters[best]
    chosen = max(range(len(g.members)), key=lambda k: (g.scores[g.members[k]], -k))
    return Selection(g.members[chosen], clusters, best)


def processing_order(indices: Sequence[int], code_counts: Sequence[int]) -> list[int]:
    """Descending pass count, ties by pool index."""
    return sorted(indices, key=lambda i: (-code_counts[i], i))


def select_final(
    codes: Sequence[CodeCandidate],
    probes: Sequence[str],
    executor: Executor,
    order: Optional[Sequence[int]] = None,
) -> tuple[Selection, list[Signature]]:
    """Cluster ``codes`` by their behaviour on ``probes`` and return the selection with signatures."""
    if not codes:
        raise ValueError("tie set is empty")
    if len(codes) == 1:
        return Selection(0, [Cluster([0], scores={0: 0})], 0), []
    sigs = [signature(c, probes, executor) for c in codes]
    return select_from_signatures(sigs, order), sigs
