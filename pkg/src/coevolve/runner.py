"""End-to-end orchestration, evaluation metrics and run logs."""
from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from .consensus import ERR, generate_probe_inputs, processing_order, select_final
from .core import CodeCandidate, EvalTest, Problem, UnitTest, bon_tie_set
from .ideation import derive_attack_ideas, enumerate_hint_subsets, expand_plans, generate_hints
from .llm import Gateway, GatewayError, OpenAIChatProvider, ProviderError, ScriptedProvider
from .pools import IdAllocator, build_code_pool, build_ut_pool
from .sandbox import ExecLimits, Executor, SandboxError, normalize_output
from .selfplay import Event, SelfPlay, SelfPlayConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "ProblemFormatError",
    "RunConfig",
    "RunResult",
    "Metrics",
    "load_problems",
    "make_gateway",
    "make_executor",
    "run_pipeline",
    "compute_metrics",
    "emit_run_log",
    "load_run_log",
]


class ProblemFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    n_codes: int = 16
    n_tests: int = 16
    t_max: int = 5
    n_hints: int = 5
    plans_per_subset: int = 1
    ideas_per_plan: int = 2
    k_samples: int = 4
    agree_threshold: int = 3
    retry_budget: int = 3
    n_probes: int = 8
    seed: int = 0
    # sampling
    temperature: float = 0.8
    top_p: float = 0.95
    top_k: int = 40
    max_tokens: int = 2048
    # provider
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = "OPENAI_API_KEY"
    script: Optional[str] = None
    max_in_flight: int = 8
    # sandbox
    wall_timeout_ms: int = 2000
    max_output_bytes: int = 1 << 20
    interpreter_cmd: str = ExecLimits().interpreter_cmd
    float_tolerance: Optional[float] = None
    workers: Optional[int] = None
    out_dir: str = "runs"

    def validate(self) -> "RunConfig":
        if self.n_codes < 1:
            raise ValueError("n_codes must be >= 1")
        if self.n_tests < 2 or self.n_tests % 2:
            raise ValueError("n_tests must be even and >= 2")
        if self.t_max < 0:
            raise ValueError("t_max must be >= 0")
        if not (self.k_samples >= self.agree_threshold >= 1):
            raise ValueError("need k_samples >= agree_threshold >= 1")
        for name in ("n_hints", "plans_per_subset", "ideas_per_plan", "n_probes", "retry_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        self.limits()  # checks interpreter template and limits
        return self

    def limits(self) -> ExecLimits:
        return ExecLimits(self.wall_timeout_ms, self.max_output_bytes, self.interpreter_cmd,
                          float_tolerance=self.float_tolerance)

    def selfplay(self) -> SelfPlayConfig:
        return SelfPlayConfig(self.n_codes, self.n_tests, self.t_max, self.k_samples,
                              self.agree_threshold, self.retry_budget, self.seed)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def make_gateway(config: RunConfig, provider=None) -> Gateway:
    if provider is None:
        if config.script:
            provider = ScriptedProvider.from_file(config.script)
        elif config.endpoint and config.model:
            provider = OpenAIChatProvider(config.endpoint, config.model, config.api_key_env)
        else:
            raise ValueError("configure either a script or an endpoint and model")
    defaults = {"temperature": config.temperature, "top_p": config.top_p,
                "top_k": config.top_k, "max_tokens": config.max_tokens}
    return Gateway(provider, max_in_flight=config.max_in_flight, defaults=defaults)


def make_executor(config: RunConfig) -> Executor:
    return Executor(config.limits(), workers=config.workers)


def load_problems(path) -> list[Problem]:
    problems: list[Problem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pid, statement = str(rec["id"]), rec["statement"]
                tests = rec.get("eval_tests")
                eval_tests = (
                    tuple(EvalTest(str(t["input"]), str(t["output"])) for t in tests)
                    if tests is not None else None
                )
                problem = Problem(pid, statement, eval_tests, rec.get("reference_solution"))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ProblemFormatError(f"{path}:{lineno}: malformed problem record ({exc})") from exc
            if pid in seen:
                raise ProblemFormatError(f"{path}:{lineno}: duplicate problem id {pid!r}")
            seen.add(pid)
            problems.append(problem)
    return problems


@dataclass
class RunResult:
    problem_id: str
    status: str = "ok"
    error: Optional[str] = None
    hints: list[str] = field(default_factory=list)
    plans: list[dict] = field(default_factory=list)
    ideas: list[dict] = field(default_factory=list)
    initial_codes: list[CodeCandidate] = field(default_factory=list)
    initial_uts: list[UnitTest] = field(default_factory=list)
    codes: list[CodeCandidate] = field(default_factory=list)
    uts: list[UnitTest] = field(default_factory=list)
    matrix: Optional[dict] = None
    stats: Optional[dict] = None
    rounds: int = 0
    history: list[Event] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    tie_set: list[str] = field(default_factory=list)
    probes: list[str] = field(default_factory=list)
    signatures: dict[str, list] = field(default_factory=dict)
    selection: Optional[dict] = None
    chosen: Optional[str] = None
    usage: dict[str, int] = field(default_factory=dict)
    metrics: Optional[dict] = None

    @property
    def chosen_code(self) -> Optional[CodeCandidate]:
        return next((c for c in self.codes if c.id == self.chosen), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "problem_id": self.problem_id,
            "status": self.status,
            "error": self.error,
            "hints": self.hints,
            "plans": self.plans,
            "ideas": self.ideas,
            "initial_codes": [c.to_dict() for c in self.initial_codes],
            "initial_uts": [t.to_dict() for t in self.initial_uts],
            "codes": [c.to_dict() for c in self.codes],
            "uts": [t.to_dict() for t in self.uts],
            "matrix": self.matrix,
            "stats": self.stats,
            "rounds": self.rounds,
            "history": [e.to_dict() for e in self.history],
            "snapshots": self.snapshots,
            "tie_set": self.tie_set,
            "probes": self.probes,
            "signatures": {k: [None if x is ERR else x for x in v] for k, v in self.signatures.items()},
            "selection": self.selection,
            "chosen": self.chosen,
            "usage": self.usage,
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunResult":
        return cls(
            problem_id=d["problem_id"], status=d["status"], error=d.get("error"),
            hints=d["hints"], plans=d["plans"], ideas=d["ideas"],
            initial_codes=[CodeCandidate.from_dict(c) for c in d["initial_codes"]],
            initial_uts=[UnitTest.from_dict(t) for t in d["initial_uts"]],
            codes=[CodeCandidate.from_dict(c) for c in d["codes"]],
            uts=[UnitTest.from_dict(t) for t in d["uts"]],
            matrix=d["matrix"], stats=d["stats"], rounds=d["rounds"],
            history=[Event.from_dict(e) for e in d["history"]], snapshots=d["snapshots"],
            tie_set=d["tie_set"], probes=d["probes"],
            signatures={k: [ERR if x is None else x for x in v] for k, v in d["signatures"].items()},
            selection=d["selection"], chosen=d["chosen"], usage=d["usage"], metrics=d.get("metrics"),
        )


def run_pipeline(
    problem: Problem,
    config: RunConfig,
    gateway: Gateway,
    executor: Optional[Executor] = None,
) -> RunResult:
    """Ideation, pool building, self-play, then consensus selection among tied codes.

    Only the public statement reaches generation stages.  Provider faults
    inside self-play degrade step by step; faults before it, and sandbox
    environment faults anywhere, mark the result as failed.
    """
    config.validate()
    executor = executor or make_executor(config)
    statement = problem.public()
    result = RunResult(problem.id)
    usage_before = dataclasses.replace(gateway.usage)
    try:
        result.hints = generate_hints(gateway, statement, config.n_hints)
        subsets = enumerate_hint_subsets(result.hints)
        plans = expand_plans(gateway, statement, result.hints, subsets, config.plans_per_subset)
        result.plans = [p.to_dict() for p in plans]
        ideas = derive_attack_ideas(gateway, statement, plans, config.ideas_per_plan)
        result.ideas = [a.to_dict() for a in ideas]

        ids = IdAllocator()
        codes = build_code_pool(gateway, statement, plans, config.n_codes, config.seed, ids)
        uts = build_ut_pool(gateway, statement, ideas, config.n_tests, config.seed,
                            config.k_samples, config.agree_threshold, config.retry_budget, ids)
        result.initial_codes, result.initial_uts = list(codes), list(uts)

        engine = SelfPlay(gateway, executor, statement, plans, ideas, config.selfplay(), ids)
        state = engine.run(engine.initial_state(codes, uts))
        result.codes, result.uts = list(state.codes), list(state.uts)
        result.matrix, result.stats = state.matrix.to_dict(), state.stats.to_dict()
        result.rounds = state.round
        result.history = list(state.history)
        result.snapshots = list(state.snapshots)

        tie = bon_tie_set(state.stats)
        result.tie_set = [state.codes[i].id for i in tie]
        order = processing_order(tie, state.stats.code_counts)
        tied = [state.codes[i] for i in order]
        if len(tied) == 1:
            result.chosen = tied[0].id
            result.history.append(Event(state.round, "select", "skip", detail="single top candidate"))
        else:
            try:
                result.probes = generate_probe_inputs(gateway, statement, config.n_probes, config.retry_budget)
            except ProviderError as exc:
                result.chosen = tied[0].id
                result.history.append(Event(state.round, "select", "provider_failure", detail=str(exc)))
            else:
                selection, sigs = select_final(tied, result.probes, executor)
                names = [c.id for c in tied]
                result.signatures = {names[k]: list(s) for k, s in enumerate(sigs)}
                result.selection = selection.to_dict(names)
                result.chosen = names[selection.chosen]
    except (GatewayError, SandboxError) as exc:
        log.error("problem %s failed: %s", problem.id, exc)
        result.status = "failed"
        result.error = f"{type(exc).__name__}: {exc}"
    u = gateway.usage
    result.usage = {
        "prompt_tokens": u.prompt_tokens - usage_before.prompt_tokens,
        "completion_tokens": u.completion_tokens - usage_before.completion_tokens,
        "call_count": u.call_count - usage_before.call_count,
    }
    return result


@dataclass(frozen=True)
class Metrics:
    code_acc: float
    ut_acc: Optional[float]
    bon_acc: float
    signal_acc: Optional[float]
    ut_rank: int

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _same_input(a: str, b: str) -> bool:
    return normalize_output(a) == normalize_output(b)


def compute_metrics(
    result: RunResult,
    problem: Problem,
    executor: Executor,
    external_pool: Optional[Sequence[str]] = None,
) -> Optional[Metrics]:
    """Score a finished run against held-out tests; ``None`` when the problem has none."""
    if not problem.eval_tests or result.status != "ok":
        return None
    tests = problem.eval_tests

    def passes_all(source: str) -> bool:
        return all(executor.matches(executor.run(source, t.input), normalize_output(t.output)) for t in tests)

    code_acc = sum(passes_all(c.source) for c in result.codes) / len(result.codes)

    verdicts = []
    for ut in result.uts:
        if problem.reference_solution is not None:
            truth = executor.run(problem.reference_solution, ut.input)
            verdicts.append(executor.matches(truth, ut.expected_output))
            continue
        match = next((t for t in tests if _same_input(t.input, ut.input)), None)
        if match is not None:
            verdicts.append(normalize_output(match.output) == ut.expected_output)
    ut_acc = sum(verdicts) / len(verdicts) if verdicts else None

    chosen = result.chosen_code
    bon_acc = float(chosen is not None and passes_all(chosen.source))

    signal_acc = None
    if external_pool:
        counts = [
            sum(executor.matches(executor.run(src, ut.input), ut.expected_output) for ut in result.uts)
            for src in external_pool
        ]
        top = [src for src, n in zip(external_pool, counts) if n == max(counts)]
        # expected accuracy under a uniform tie-break
        signal_acc = sum(passes_all(src) for src in top) / len(top)

    ut_rank = len({normalize_output(ut.input) for ut in result.uts})
    return Metrics(code_acc, ut_acc, bon_acc, signal_acc, ut_rank)


def _safe_name(pid: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", pid)


def _dump(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def emit_run_log(
    results: Sequence[RunResult], config: RunConfig, out_dir=None, timestamp: bool = True
) -> list[Path]:
    """One JSON log per problem plus ``summary.json``; returns the written paths."""
    root = Path(out_dir or config.out_dir)
    (root / "problems").mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        p = root / "problems" / f"{_safe_name(r.problem_id)}.json"
        _dump(r.to_dict(), p)
        paths.append(p)

    keys = ("code_acc", "ut_acc", "bon_acc", "signal_acc", "ut_rank")
    aggregate = {}
    for k in keys:
        vals = [r.metrics[k] for r in results if r.metrics and r.metrics.get(k) is not None]
        aggregate[k] = sum(vals) / len(vals) if vals else None
    usage = {k: sum(r.usage.get(k, 0) for r in results) for k in ("prompt_tokens", "completion_tokens", "call_count")}
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "problems": [
            {"id": r.problem_id, "status": r.status, "chosen": r.chosen, "rounds": r.rounds, "metrics": r.metrics}
            for r in results
        ],
        "aggregate_metrics": aggregate,
        "usage": usage,
    }
    if timestamp:
        summary["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    p = root / "summary.json"
    _dump(summary, p)
    paths.append(p)
    return paths


def load_run_log(path) -> RunResult:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported log schema {d.get('schema_version')!r}")
    return RunResult.from_dict(d)
