"""Acceptance gate: one test per criterion, each at its stated tolerance."""
import json
import math
import time
from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from coevolve import scenarios
from coevolve.consensus import ERR, build_clusters, observed_compatible, score_clusters, select_from_signatures
from coevolve.core import (
    ExecutionMatrix,
    compute_pass_stats,
    non_trivial_best_ut,
    non_trivial_worst_ut,
)
from coevolve.llm import Gateway, ScriptedProvider
from coevolve.runner import emit_run_log, run_pipeline
from coevolve.sandbox import Executor
from coevolve.selfplay import replay_history
from coevolve.theory import (
    BinomialChannel,
    SignatureModelParams,
    advantage_thresholds,
    all_failing_detection_prob,
    fixed_ratio_rate,
    posterior_odds,
    simulate_posterior,
    simulate_signature_separation,
)


# -- theory -----------------------------------------------------------------

def test_01_posterior_monte_carlo_matches_closed_form():
    channel = BinomialChannel(16, 0.8, 0.3, 0.5)
    start = time.perf_counter()
    table = simulate_posterior(channel, 200_000, rng_seed=0)
    elapsed = time.perf_counter() - start
    populated = table.counts >= 100
    gap = np.abs(table.empirical[populated] - table.closed_form[populated])
    print(f"posterior: max |empirical - closed form| = {gap.max():.4f} over {populated.sum()} values of s, "
          f"{elapsed:.2f}s")
    assert gap.max() <= 0.02
    assert np.all(np.diff(table.closed_form) > 0)
    assert elapsed < 10


def test_02_threshold_algebra_is_exact():
    th = advantage_thresholds(0.2, 0.1)
    assert th.rho_t_star == Fraction(1, 9)
    assert th.rho_c_star == Fraction(-1, 9)
    signs = [th.delta_c(Fraction(k, 100)) > 0 for k in range(101)]
    flips = [k for k in range(1, 101) if signs[k] != signs[k - 1]]
    assert flips == [12]  # 0.11 < 1/9 < 0.12
    assert not signs[11] and signs[12]


def test_03_fixed_ratio_convergence():
    q1, q0 = 0.8, 0.3
    _, eta_star = fixed_ratio_rate(0.5, q1, q0)
    ms = (8, 16, 32, 64)
    above = [posterior_odds(math.ceil(0.8 * m), BinomialChannel(m, q1, q0)).posterior for m in ms]
    assert all(b > a for a, b in zip(above, above[1:]))
    assert above[-1] > 0.999
    for m in ms:
        ch = BinomialChannel(m, q1, q0)
        prior_log_odds = math.log(ch.prior / (1 - ch.prior))
        drift = posterior_odds(math.ceil(eta_star * m), ch).log_odds - prior_log_odds
        assert abs(drift) <= abs(ch.log_r) + 1


def test_04_signature_separation_grows_with_probes():
    start = time.perf_counter()
    fractions = [
        simulate_signature_separation(SignatureModelParams(0.3, 0.5, r, 200, 4), 1000, rng_seed=r)
        for r in (1, 2, 4, 8)
    ]
    elapsed = time.perf_counter() - start
    print(f"separation fractions for R=1,2,4,8: {fractions} in {elapsed:.2f}s")
    drops = [a - b for a, b in zip(fractions, fractions[1:]) if b < a]
    assert len(drops) <= 1 and all(d <= 0.01 for d in drops)
    assert fractions[-1] >= 0.99
    assert elapsed < 30


# -- consensus --------------------------------------------------------------

def error_free_sets():
    # a small alphabet keeps exact collisions, and so multi-member clusters, common
    return st.tuples(st.integers(1, 8), st.integers(1, 3)).flatmap(
        lambda rk: st.lists(
            st.lists(st.sampled_from("abc"[: rk[1]]), min_size=rk[0], max_size=rk[0]).map(tuple),
            min_size=1, max_size=12,
        )
    )


@settings(max_examples=1000, deadline=None)
@given(error_free_sets(), st.randoms(use_true_random=False))
def test_05_error_free_cluster_score_identity(sigs, rnd):
    r = len(sigs[0])
    order = list(range(len(sigs)))
    rnd.shuffle(order)
    clusters = score_clusters(build_clusters(sigs, order), sigs)
    # oracle: equivalence classes of exact signature equality
    classes = {}
    for i in order:
        classes.setdefault(sigs[i], []).append(i)
    assert sorted(map(sorted, (c.members for c in clusters))) == sorted(map(sorted, classes.values()))
    for c in clusters:
        g = len(c.members)
        assert c.score == g * (g - 1) * r
    sizes = [len(c.members) for c in clusters]
    largest = max(sizes)
    if sizes.count(largest) == 1:
        sel = select_from_signatures(sigs, order)
        assert len(sel.clusters[sel.chosen_cluster].members) == largest
        assert sel.chosen in clusters[sizes.index(largest)].members


masked_sets = st.tuples(st.integers(1, 6), st.integers(1, 12)).flatmap(
    lambda rn: st.lists(
        st.lists(st.sampled_from(["0", "1", ERR]), min_size=rn[0], max_size=rn[0]).map(tuple),
        min_size=rn[1], max_size=rn[1],
    )
)


@settings(max_examples=1000, deadline=None)
@given(masked_sets, st.randoms(use_true_random=False))
def test_06_clusters_pairwise_compatible_and_reproducible(sigs, rnd):
    order = list(range(len(sigs)))
    rnd.shuffle(order)
    first = score_clusters(build_clusters(sigs, order), sigs)
    for c in first:
        if c.quarantine:
            assert all(all(x is ERR for x in sigs[i]) for i in c.members)
            continue
        for a in c.members:
            for b in c.members:
                assert all(x == y for x, y in zip(sigs[a], sigs[b]) if x is not ERR and y is not ERR)
                assert observed_compatible(sigs[a], sigs[b])
    assert sorted(i for c in first for i in c.members) == sorted(order)
    second = score_clusters(build_clusters(sigs, order), sigs)
    assert [(c.members, c.quarantine, c.scores) for c in first] == [(c.members, c.quarantine, c.scores) for c in second]
    assert select_from_signatures(sigs, order) == select_from_signatures(sigs, order)


# -- matrix arithmetic ------------------------------------------------------

shapes = st.tuples(st.integers(1, 32), st.integers(1, 32))


def scan_extremum(rates, better):
    """Linear scan over interior rates keeping the first index on ties."""
    best = None
    for j, rate in enumerate(rates):
        if 0 < rate < 1 and (best is None or better(rate, rates[best])):
            best = j
    return best


@settings(max_examples=500, deadline=None)
@given(shapes.flatmap(lambda s: arrays(bool, s)))
def test_07_matrix_statistics_match_brute_force(entries):
    n, m = entries.shape
    rows = entries.tolist()
    stats = compute_pass_stats(ExecutionMatrix.from_rows(rows))
    ut_counts = [0] * m
    code_counts = [0] * n
    for i in range(n):
        for j in range(m):
            if rows[i][j]:
                ut_counts[j] += 1
                code_counts[i] += 1
    assert list(stats.ut_counts) == ut_counts
    assert list(stats.code_counts) == code_counts
    assert sum(stats.ut_counts) == sum(stats.code_counts)
    rates = [Fraction(c, n) for c in ut_counts]
    assert list(stats.ut_rates) == rates
    assert non_trivial_worst_ut(stats) == scan_extremum(rates, lambda a, b: a < b)
    assert non_trivial_best_ut(stats) == scan_extremum(rates, lambda a, b: a > b)


def test_08_all_failing_detection_constant():
    direct = 1 - Fraction(7, 10) ** 16
    assert abs(float(direct) - 0.99668) <= 1e-5
    assert abs(all_failing_detection_prob(0.3, 16) - 0.99668) <= 1e-5
    assert math.isclose(all_failing_detection_prob(0.3, 16), float(direct), rel_tol=1e-14)


# -- scripted pipeline ------------------------------------------------------

def run_scenario(hooks=()):
    sc = scenarios.max_of_list()
    gateway = Gateway(ScriptedProvider(sc.script), base_delay=0)
    gateway.prompt_hooks.extend(hooks)
    executor = Executor(sc.config.limits(), workers=sc.config.workers)
    return sc, run_pipeline(sc.problem, sc.config, gateway, executor), executor


def test_09_scripted_scenario_end_to_end():
    start = time.perf_counter()
    sc, result, executor = run_scenario()
    elapsed = time.perf_counter() - start
    assert result.status == "ok"
    by_id = {c.id: c for c in result.initial_codes}
    history = result.history

    # (a) the crashing program is evicted by the clean step
    cleaned = [e for e in history if e.step == "clean_codes" and e.action == "replace_code"]
    assert any(by_id.get(e.old) and by_id[e.old].source == scenarios.CRASHING for e in cleaned)

    # (b) the spurious test is refreshed and the off-by-one program stops tying
    k = next(n for n, e in enumerate(history) if e.step == "break_coupling" and e.action == "replace_ut")
    refreshed = history[k]
    old_ut = next(t for t in result.initial_uts if t.id == refreshed.old)
    assert old_ut.input.strip() == scenarios.SPURIOUS_INPUT
    codes, uts = replay_history(result.initial_codes, result.initial_uts, history[: k + 1])
    stats = compute_pass_stats(executor.build_matrix(codes, uts))
    off = next(i for i, c in enumerate(codes) if c.source == scenarios.OFF_BY_ONE)
    assert stats.code_counts[off] < max(stats.code_counts)

    # (c) terminates within the budget
    assert 1 <= result.rounds <= sc.config.t_max
    assert history[-1].action == "terminate" or history[-1].step == "select"

    # (d) the chosen program is correct on the held-out tests
    chosen = result.chosen_code
    assert all(executor.matches(executor.run(chosen, t.input), t.output) for t in sc.problem.eval_tests)

    _, again, _ = run_scenario()
    assert again.to_dict() == result.to_dict()
    print(f"scripted scenario: {result.rounds} round(s), chose {result.chosen}, {elapsed:.2f}s")
    assert elapsed < 30


def _strip_timestamp(text):
    d = json.loads(text)
    d.pop("generated_at", None)
    return json.dumps(d, sort_keys=True)


def test_10_logs_are_byte_identical_and_replayable(tmp_path):
    outputs = []
    for name in ("first", "second"):
        sc, result, _ = run_scenario()
        paths = emit_run_log([result], sc.config, tmp_path / name, timestamp=True)
        outputs.append({p.relative_to(tmp_path / name): p.read_bytes() for p in paths})
    first, second = outputs
    assert first.keys() == second.keys()
    for rel in first:
        if rel.name == "summary.json":
            assert _strip_timestamp(first[rel]) == _strip_timestamp(second[rel])
        else:
            assert first[rel] == second[rel]
    codes, uts = replay_history(result.initial_codes, result.initial_uts, result.history)
    assert codes == result.codes and uts == result.uts


def test_11_held_out_tests_never_reach_prompts():
    prompts = []
    sc, result, _ = run_scenario(hooks=[lambda template_id, prompt: prompts.append(prompt)])
    assert result.status == "ok" and prompts
    secrets = set()
    for t in sc.problem.eval_tests:
        secrets.update({t.input, t.output, t.input.strip(), t.output.strip()})
    leaks = [s for s in secrets for p in prompts if s and s in p]
    print(f"firewall: {len(prompts)} prompts checked against {len(secrets)} held-out byte strings")
    assert not leaks
