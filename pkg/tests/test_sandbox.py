import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coevolve.core import CodeCandidate, Provenance, UnitTest
from coevolve.sandbox import (
    LAUNCH_FAILURE,
    NONZERO_EXIT,
    OUTPUT_OVERFLOW,
    TIMEOUT,
    ExecLimits,
    Executor,
    SandboxError,
    normalize_output,
    outputs_match,
    run_candidate,
)

ECHO = "import sys\nsys.stdout.write(sys.stdin.read())\n"
ADD = "a, b = map(int, input().split())\nprint(a + b)\n"
ADD_OFF = "a, b = map(int, input().split())\nprint(a + b + 1)\n"


@pytest.mark.parametrize("raw, expected", [
    (b"3\r\n", "3"),
    (b"3  \n\n\n", "3"),
    (b"a \nb\t\n", "a\nb"),
    (b"", ""),
    ("x\r\ny\r\n", "x\ny"),
])
def test_normalize_output(raw, expected):
    assert normalize_output(raw) == expected


@given(st.text())
def test_normalize_is_idempotent(text):
    once = normalize_output(text)
    assert normalize_output(once) == once


def test_float_tolerance():
    assert not outputs_match("0.3333", "0.33333")
    assert outputs_match("0.3333 2", "0.33333 2", float_tolerance=1e-3)
    assert not outputs_match("0.3333 x", "0.33333 y", float_tolerance=1e-3)


def test_echo_roundtrip():
    out = run_candidate(ECHO, "hello\n")
    assert out.ok and out.output == "hello"


def test_timeout():
    start = time.monotonic()
    out = run_candidate("while True:\n    pass\n", "", ExecLimits(wall_timeout_ms=200))
    assert out.error == TIMEOUT
    assert time.monotonic() - start < 5


def test_nonzero_exit():
    assert run_candidate("raise SystemExit(3)\n", "").error == NONZERO_EXIT
    assert run_candidate("print(1/0)\n", "").error == NONZERO_EXIT


def test_output_overflow():
    out = run_candidate("print('x' * 5000)\n", "", ExecLimits(max_output_bytes=1000))
    assert out.error == OUTPUT_OVERFLOW


def test_missing_interpreter_is_environment_fault():
    with pytest.raises(SandboxError):
        run_candidate("print(1)\n", "", ExecLimits(interpreter_cmd="/nonexistent/interp {source}"))


def test_unexecutable_interpreter_is_launch_failure(tmp_path):
    bogus = tmp_path / "interp"
    bogus.write_text("not a binary")
    bogus.chmod(0o644)
    out = run_candidate("print(1)\n", "", ExecLimits(interpreter_cmd=f"{bogus} {{source}}"))
    assert out.error == LAUNCH_FAILURE


def test_limits_validation():
    with pytest.raises(ValueError):
        ExecLimits(wall_timeout_ms=0)
    with pytest.raises(ValueError):
        ExecLimits(interpreter_cmd="python3 main.py")


def test_memoization_matches_fresh_execution():
    cached = Executor(workers=1)
    fresh = Executor(workers=1, cache=False)
    pairs = [(ADD, "1 2\n"), (ADD_OFF, "1 2\n"), (ADD, "1 2\n"), ("print(1/0)\n", "")]
    assert cached.run_pairs(pairs) == fresh.run_pairs(pairs)
    assert cached.executions == 3
    assert fresh.executions == 4


def test_off_by_one_matrix(executor):
    prov = Provenance("from_plan")
    codes = [CodeCandidate("c0", ADD, prov), CodeCandidate("c1", ADD_OFF, prov)]
    uts = [UnitTest(f"t{j}", f"{j} {j}\n", f"{2 * j}\n", Provenance("random_source")) for j in range(3)]
    m = executor.build_matrix(codes, uts)
    assert m.entries.tolist() == [[True, True, True], [False, False, False]]
    assert m.code_ids == ("c0", "c1") and m.ut_ids == ("t0", "t1", "t2")


@settings(max_examples=10, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50), st.booleans()), min_size=1, max_size=4))
def test_matrix_cells_equal_single_runs(cases):
    executor = Executor(workers=2)
    prov = Provenance("from_plan")
    codes = [CodeCandidate("c0", ADD, prov), CodeCandidate("c1", ADD_OFF, prov)]
    uts = [UnitTest(f"t{j}", f"{a} {b}\n", f"{a + b + int(off)}\n", Provenance("random_source"))
           for j, (a, b, off) in enumerate(cases)]
    m = executor.build_matrix(codes, uts)
    expected = np.array([[not off for *_, off in cases], [off for *_, off in cases]])
    assert (m.entries == expected).all()
