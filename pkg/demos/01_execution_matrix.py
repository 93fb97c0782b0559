"""
Execution matrix and pass statistics
====================================

Build a code-by-test pass matrix from real program runs, then read off
the tests with the weakest and strongest non-trivial support.
"""

from coevolve.core import CodeCandidate, Provenance, UnitTest, bon_tie_set, compute_pass_stats
from coevolve.core import non_trivial_best_ut, non_trivial_worst_ut
from coevolve.sandbox import Executor

# Programs that double their input, each breaking from some threshold on.
def doubler(limit):
    return f"n = int(input())\nprint(n * 2 if n < {limit} else 0)\n"

codes = [CodeCandidate(f"c{i}", doubler(t), Provenance("from_plan")) for i, t in enumerate([2, 4, 6, 8])]
tests = [UnitTest(f"t{j}", f"{x}\n", str(2 * x), Provenance("random_source")) for j, x in enumerate([7, 3, 1])]

executor = Executor(workers=2)
matrix = executor.build_matrix(codes, tests)
print(matrix.entries.astype(int))

# Pass rates are exact fractions.
stats = compute_pass_stats(matrix)
print("test pass rates:", [str(r) for r in stats.ut_rates])
print("code pass rates:", [str(r) for r in stats.code_rates])

# Rates of exactly 0 or 1 carry no signal and are excluded here.
print("weakest non-trivial test:", tests[non_trivial_worst_ut(stats)].id)
print("strongest non-trivial test:", tests[non_trivial_best_ut(stats)].id)
print("best-of-n ties:", [codes[i].id for i in bon_tie_set(stats)])

# Repeated pairs come from the cache instead of a new subprocess.
before = executor.executions
executor.build_matrix(codes, tests)
print("new executions on rebuild:", executor.executions - before)
