"""Command-line entry point: ``run``, ``theory``, ``select`` and ``metrics``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import theory
from .consensus import select_final
from .core import CodeCandidate, Provenance
from .runner import (
    RunConfig,
    compute_metrics,
    emit_run_log,
    load_problems,
    load_run_log,
    make_executor,
    make_gateway,
    run_pipeline,
)
from .sandbox import ExecLimits, Executor

_OPTIONAL_TYPES = {"endpoint": str, "model": str, "script": str, "float_tolerance": float, "workers": int}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        typ = _OPTIONAL_TYPES.get(f.name) or type(f.default)
        p.add_argument(flag, dest=f.name, type=typ, default=f.default, help=f"(default: {f.default})")


def _config_from(args: argparse.Namespace) -> RunConfig:
    return RunConfig(**{f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)}).validate()


def _read_pool(path: Optional[str]) -> Optional[list[str]]:
    if not path:
        return None
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [d["source"] if isinstance(d, dict) else d for d in data]


def cmd_run(args: argparse.Namespace) -> int:
    config = _config_from(args)
    problems = load_problems(args.problems)
    gateway = make_gateway(config)
    executor = make_executor(config)
    external = _read_pool(args.external_pool)
    results = []
    for problem in problems:
        result = run_pipeline(problem, config, gateway, executor)
        metrics = compute_metrics(result, problem, executor, external)
        result.metrics = metrics.to_dict() if metrics else None
        results.append(result)
        print(f"{problem.id}: {result.status} chosen={result.chosen} rounds={result.rounds}")
    paths = emit_run_log(results, config, timestamp=not args.no_timestamp)
    print(f"wrote {len(paths)} log files to {config.out_dir}")
    return 0 if all(r.status == "ok" for r in results) else 1


def _write_csv(rows: Sequence[dict], out: Optional[str]) -> None:
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out:
            fh.close()


def cmd_theory(args: argparse.Namespace) -> int:
    if args.what == "posterior":
        channel = theory.BinomialChannel(args.m, args.q1, args.q0, args.prior)
        table = theory.simulate_posterior(channel, args.trials, args.seed)
        rows = [
            {"s": s, "closed_form": f"{table.closed_form[s]:.6f}",
             "empirical": "" if math.isnan(table.empirical[s]) else f"{table.empirical[s]:.6f}",
             "count": int(table.counts[s])}
            for s in range(args.m + 1)
        ]
    elif args.what == "separation":
        rows = []
        for r in args.probes:
            params = theory.SignatureModelParams(args.alpha, args.beta, r, args.n, args.alphabet)
            frac = theory.simulate_signature_separation(params, args.trials, args.seed)
            rows.append({"R": r, "fraction": f"{frac:.4f}"})
    else:
        th = theory.advantage_thresholds(args.eps1, args.eps2)
        rows = [{"eps1": args.eps1, "eps2": args.eps2,
                 "rho_c_star": str(th.rho_c_star), "rho_t_star": str(th.rho_t_star),
                 "rho_c_star_float": f"{float(th.rho_c_star):.6f}",
                 "rho_t_star_float": f"{float(th.rho_t_star):.6f}"}]
    _write_csv(rows, args.out)
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    with open(args.candidates, encoding="utf-8") as fh:
        raw = json.load(fh)
    codes = [CodeCandidate(str(d.get("id", k)), d["source"], Provenance("external")) for k, d in enumerate(raw)]
    with open(args.probes, encoding="utf-8") as fh:
        probes = [p if p.endswith("\n") else p + "\n" for p in json.load(fh)]
    executor = Executor(ExecLimits(args.wall_timeout_ms, interpreter_cmd=args.interpreter_cmd))
    selection, _ = select_final(codes, probes, executor)
    print(json.dumps(selection.to_dict([c.id for c in codes]), indent=2))
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    problems = {p.id: p for p in load_problems(args.problems)}
    executor = Executor(ExecLimits())
    external = _read_pool(args.external_pool)
    out = {}
    for path in sorted(Path(args.run_dir, "problems").glob("*.json")):
        result = load_run_log(path)
        problem = problems.get(result.problem_id)
        metrics = compute_metrics(result, problem, executor, external) if problem else None
        out[result.problem_id] = metrics.to_dict() if metrics else None
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coevolve", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline over a problem file")
    p.add_argument("problems", help="JSON-lines problem file")
    p.add_argument("--external-pool", help="JSON list of candidate sources for the signal metric")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from summary.json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("theory", help="closed-form vs Monte Carlo tables as CSV")
    p.add_argument("what", choices=["posterior", "separation", "thresholds"])
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--q1", type=float, default=0.8)
    p.add_argument("--q0", type=float, default=0.3)
    p.add_argument("--prior", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--alphabet", type=int, default=4)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--probes", type=int, nargs="+", default=[1, 2, 4, 8])
    p.add_argument("--eps1", type=float, default=0.2)
    p.add_argument("--eps2", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("select", help="consensus selection among externally supplied candidates")
    p.add_argument("candidates", help="JSON list of {id, source}")
    p.add_argument("probes", help="JSON list of probe inputs")
    p.add_argument("--wall-timeout-ms", type=int, default=2000)
    p.add_argument("--interpreter-cmd", default=ExecLimits().interpreter_cmd)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("metrics", help="recompute metrics from run logs")
    p.add_argument("problems")
    p.add_argument("run_dir")
    p.add_argument("--external-pool")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
