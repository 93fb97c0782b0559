"""Run candidate programs on inputs, canonicalize output, build execution matrices.

Isolation is a process boundary plus a fresh scratch directory per run.  This
is a trust boundary for misbehaving programs (hangs, crashes, output floods),
not a security boundary.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import shlex
import signal
import subprocess
import sys
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import CodeCandidate, ExecutionMatrix, UnitTest

log = logging.getLogger(__name__)

__all__ = [
    "SOURCE_PLACEHOLDER",
    "SandboxError",
    "ExecLimits",
    "ExecutionOutcome",
    "normalize_output",
    "outputs_match",
    "run_candidate",
    "Executor",
]

SOURCE_PLACEHOLDER = "{source}"

TIMEOUT = "timeout"
NONZERO_EXIT = "nonzero_exit"
LAUNCH_FAILURE = "launch_failure"
OUTPUT_OVERFLOW = "output_overflow"


class SandboxError(RuntimeError):
    """Environment fault: the interpreter itself cannot be started."""


@dataclass(frozen=True)
class ExecLimits:
    wall_timeout_ms: int = 2000
    max_output_bytes: int = 1 << 20
    interpreter_cmd: str = f"{shlex.quote(sys.executable)} {SOURCE_PLACEHOLDER}"
    source_name: str = "main.py"
    float_tolerance: Optional[float] = None

    def __post_init__(self) -> None:
        if self.wall_timeout_ms <= 0:
            raise ValueError("wall_timeout_ms must be positive")
        if self.max_output_bytes <= 0:
            raise ValueError("max_output_bytes must be positive")
        if self.interpreter_cmd.count(SOURCE_PLACEHOLDER) != 1:
            raise ValueError(f"interpreter_cmd must contain {SOURCE_PLACEHOLDER} exactly once")

    def argv(self, source_path: str) -> list[str]:
        return [a.replace(SOURCE_PLACEHOLDER, source_path) for a in shlex.split(self.interpreter_cmd)]


@dataclass(frozen=True)
class ExecutionOutcome:
    """Either a canonical output text or an error reason."""

    output: Optional[str] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def describe(self) -> str:
        return self.output if self.ok else f"<error: {self.error}>"

    def to_dict(self) -> dict:
        return {"output": self.output} if self.ok else {"error": self.error}


def normalize_output(raw: Union[bytes, str]) -> str:
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else raw
    lines = [line.rstrip() for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n")]
    while lines and not lines[-1]:
        lines.pop()
    return "\n".join(lines)


def _floats_close(a: str, b: str, tol: float) -> bool:
    ta, tb = a.split(), b.split()
    if len(ta) != len(tb):
        return False
    for x, y in zip(ta, tb):
        if x == y:
            continue
        try:
            fx, fy = float(x), float(y)
        except ValueError:
            return False
        if not math.isclose(fx, fy, rel_tol=tol, abs_tol=tol):
            return False
    return True


def outputs_match(a: str, b: str, float_tolerance: Optional[float] = None) -> bool:
    """Exact canonical equality, or token-wise float closeness when a tolerance is given."""
    if a == b:
        return True
    if float_tolerance is None:
        return False
    return _floats_close(a, b, float_tolerance)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def run_candidate(code: Union[CodeCandidate, str], input_text: str, limits: ExecLimits = ExecLimits()) -> ExecutionOutcome:
    source = code.source if isinstance(code, CodeCandidate) else code
    with tempfile.TemporaryDirectory(prefix="coevolve-") as workdir:
        src_path = os.path.join(workdir, limits.source_name)
        in_path = os.path.join(workdir, "stdin.txt")
        out_path = os.path.join(workdir, "stdout.txt")
        with open(src_path, "w", encoding="utf-8") as fh:
            fh.write(source)
        with open(in_path, "w", encoding="utf-8") as fh:
            fh.write(input_text)
        argv = limits.argv(src_path)
        with open(in_path, "rb") as fin, open(out_path, "wb") as fout:
            try:
                proc = subprocess.Popen(
                    argv, stdin=fin, stdout=fout, stderr=subprocess.DEVNULL,
                    cwd=workdir, start_new_session=True,
                )
            except FileNotFoundError as exc:
                raise SandboxError(f"interpreter not found: {argv[0]}") from exc
            except OSError as exc:
                log.debug("launch failure: %s", exc)
                return ExecutionOutcome(error=LAUNCH_FAILURE)
            try:
                rc = proc.wait(timeout=limits.wall_timeout_ms / 1000)
            except subprocess.TimeoutExpired:
                _kill_group(proc)
                proc.wait()
                return ExecutionOutcome(error=TIMEOUT)
            finally:
                # reap anything the program spawned
                if proc.returncode is not None:
                    try:
                        os.killpg(proc.pid, signal.SIGKILL)
                    except (ProcessLookupError, PermissionError):
                        pass
        if os.path.getsize(out_path) > limits.max_output_bytes:
            return ExecutionOutcome(error=OUTPUT_OVERFLOW)
        if rc != 0:
            return ExecutionOutcome(error=NONZERO_EXIT)
        with open(out_path, "rb") as fh:
            return ExecutionOutcome(output=normalize_output(fh.read()))


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Executor:
    """Memoizing, parallel front end to :func:`run_candidate`.

    Results are cached by (source hash, input hash), so a matrix refresh only
    executes pairs whose code or input changed.
    """

    def __init__(self, limits: ExecLimits = ExecLimits(), workers: Optional[int] = None, cache: bool = True):
        self.limits = limits
        self.workers = workers or os.cpu_count() or 1
        self.use_cache = cache
        self._cache: dict[tuple[str, str], ExecutionOutcome] = {}
        self._lock = threading.Lock()
        self.executions = 0

    def run(self, source: Union[CodeCandidate, str], input_text: str) -> ExecutionOutcome:
        src = source.source if isinstance(source, CodeCandidate) else source
        key = (_digest(src), _digest(input_text))
        if self.use_cache:
            with self._lock:
                hit = self._cache.get(key)
            if hit is not None:
                return hit
        outcome = run_candidate(src, input_text, self.limits)
        with self._lock:
            self.executions += 1
            if self.use_cache:
                outcome = self._cache.setdefault(key, outcome)
        return outcome

    def run_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[ExecutionOutcome]:
        if self.workers <= 1 or len(pairs) <= 1:
            return [self.run(s, x) for s, x in pairs]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(lambda p: self.run(*p), pairs))

    def matches(self, outcome: ExecutionOutcome, expected: str) -> bool:
        return outcome.ok and outputs_match(outcome.output, normalize_output(expected), self.limits.float_tolerance)

    def build_matrix(self, codes: Sequence[CodeCandidate], uts: Sequence[UnitTest]) -> ExecutionMatrix:
        if not codes or not uts:
            raise ValueError("build_matrix needs non-empty code and test pools")
        pairs = [(c.source, t.input) for c in codes for t in uts]
        outcomes = self.run_pairs(pairs)
        entries = np.array(
            [self.matches(o, uts[k % len(uts)].expected_output) for k, o in enumerate(outcomes)],
            dtype=bool,
        ).reshape(len(codes), len(uts))
        return ExecutionMatrix(entries, tuple(c.id for c in codes), tuple(t.id for t in uts))
