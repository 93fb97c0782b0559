"""
Output-consensus selection
==========================

Several programs tie on test pass counts.  Running them on fresh inputs
without expected outputs and grouping identical behaviour picks a winner.
"""

from coevolve import scenarios
from coevolve.consensus import ERR, select_final, select_from_signatures
from coevolve.core import CodeCandidate, Provenance
from coevolve.sandbox import Executor

sources = {
    "scan": scenarios.CORRECT_SCAN,
    "sort": scenarios.CORRECT_SORT,
    "stdin": scenarios.REGENERATED,
    "zero-seeded": scenarios.ZERO_SEEDED,
}
codes = [CodeCandidate(name, src, Provenance("external")) for name, src in sources.items()]
probes = [p + "\n" for p in scenarios.PROBES]

selection, signatures = select_final(codes, probes, Executor(workers=2))
for code, sig in zip(codes, signatures):
    print(f"{code.id:12s}", sig)

# Cluster scores count valid pairwise agreements in both directions.
for cluster in selection.clusters:
    print([codes[i].id for i in cluster.members], "score", cluster.score)
print("chosen:", codes[selection.chosen].id)

# A crash is missing evidence, not a disagreement.
sigs = [("1", ERR), ("1", "2"), (ERR, "3")]
print(select_from_signatures(sigs).to_dict(["A", "B", "C"]))
