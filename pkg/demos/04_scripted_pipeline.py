"""
A full run without a model server
=================================

Replay a canned conversation through the whole pipeline and inspect the
self-play history, the final choice and the evaluation metrics.
"""

import tempfile

from coevolve import scenarios
from coevolve.llm import Gateway, ScriptedProvider
from coevolve.runner import compute_metrics, emit_run_log, run_pipeline
from coevolve.sandbox import Executor

sc = scenarios.max_of_list()
gateway = Gateway(ScriptedProvider(sc.script))
executor = Executor(sc.config.limits(), workers=1)
result = run_pipeline(sc.problem, sc.config, gateway, executor)

for event in result.history:
    print(event.round, event.step, event.action, event.old or "", event.detail)

print("chosen:", result.chosen)
print(result.chosen_code.source)

metrics = compute_metrics(result, sc.problem, executor)
result.metrics = metrics.to_dict()
print(metrics)

# Logs land in one file per problem plus a summary.
with tempfile.TemporaryDirectory() as out:
    for path in emit_run_log([result], sc.config, out):
        print(path.name)
