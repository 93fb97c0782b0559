"""Closed forms and Monte Carlo checks for pass-count and signature-cluster signals.

The model: codes and tests are independently correct with priors ``rho_c`` and
``rho_t``.  A correct code passes exactly the correct tests; a wrong code
passes a correct test with probability ``eps1`` and a wrong test with
probability ``eps2``.  Support counts are then binomial under each hypothesis,
and their posterior odds are log-linear in the count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import expit
from scipy.stats import norm

Number = Union[float, Fraction]

__all__ = [
    "GenerativeParams",
    "BinomialChannel",
    "SignatureModelParams",
    "marginal_pass_probs",
    "Thresholds",
    "advantage_thresholds",
    "PosteriorOdds",
    "posterior_odds",
    "fixed_ratio_rate",
    "all_failing_detection_prob",
    "PosteriorTable",
    "simulate_posterior",
    "wilson_interval",
    "wrong_symbol_probs",
    "sample_signatures",
    "simulate_signature_separation",
    "Round0Histograms",
    "simulate_round0_matrix",
]


def _exact(x: Number) -> Fraction:
    # decimal literals such as 0.1 become the rational the caller meant
    if isinstance(x, Rational):
        return Fraction(x)
    return Fraction(repr(float(x)))


def _unit(name: str, x: float) -> None:
    if not 0 <= x <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


@dataclass(frozen=True)
class GenerativeParams:
    rho_c: float
    rho_t: float
    eps1: float
    eps2: float

    def __post_init__(self) -> None:
        for name in ("rho_c", "rho_t", "eps1", "eps2"):
            _unit(name, float(getattr(self, name)))


@dataclass(frozen=True)
class BinomialChannel:
    m: int
    q1: float
    q0: float
    prior: float = 0.5

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be >= 1")
        for name in ("q1", "q0", "prior"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")

    @property
    def log_r(self) -> float:
        return math.log(self.q1) + math.log1p(-self.q0) - math.log(self.q0) - math.log1p(-self.q1)


@dataclass(frozen=True)
class SignatureModelParams:
    alpha: float
    beta: float
    n_probes: int
    n_candidates: int
    alphabet_size: Optional[int] = 4

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if self.n_probes < 1 or self.n_candidates < 1:
            raise ValueError("n_probes and n_candidates must be >= 1")
        if self.beta > 0:
            k = self.alphabet_size
            if k is None or k < 2:
                raise ValueError("alphabet_size must be >= 2 when beta > 0")
            if (1 - self.beta) / (k - 1) > self.beta + 1e-15:
                raise ValueError(f"beta={self.beta} is below 1/alphabet_size; the max mass cannot be beta")


def marginal_pass_probs(params: GenerativeParams) -> tuple[Number, Number, Number, Number]:
    """(theta1, theta0, phi1, phi0): pass probability of a correct/wrong test and of a correct/wrong code."""
    rc, rt, e1, e2 = params.rho_c, params.rho_t, params.eps1, params.eps2
    theta1 = rc + (1 - rc) * e1
    theta0 = (1 - rc) * e2
    phi1 = rt
    phi0 = e1 * rt + e2 * (1 - rt)
    return theta1, theta0, phi1, phi0


@dataclass(frozen=True)
class Thresholds:
    rho_c_star: Fraction
    rho_t_star: Fraction
    delta_u: Callable[[Number], Fraction]
    delta_c: Callable[[Number], Fraction]


def advantage_thresholds(eps1: Number, eps2: Number) -> Thresholds:
    """Priors above which correct tests (resp. codes) out-pass wrong ones, in exact arithmetic."""
    e1, e2 = _exact(eps1), _exact(eps2)
    _unit("eps1", float(e1))
    _unit("eps2", float(e2))
    # eps1=1, eps2=0 makes delta_u identically 1, so any prior clears the bar
    rho_c_star = (e2 - e1) / (1 + e2 - e1) if 1 + e2 - e1 else Fraction(-1)
    denom = 1 - e1 + e2
    rho_t_star = e2 / denom if denom else Fraction(1)

    def delta_u(rho_c: Number) -> Fraction:
        rc = _exact(rho_c)
        return rc + (1 - rc) * (e1 - e2)

    def delta_c(rho_t: Number) -> Fraction:
        rt = _exact(rho_t)
        return rt * (1 - e1) - e2 * (1 - rt)

    return Thresholds(rho_c_star, rho_t_star, delta_u, delta_c)


@dataclass(frozen=True)
class PosteriorOdds:
    log_odds: float
    odds: float
    posterior: float


def posterior_odds(s: int, channel: BinomialChannel) -> PosteriorOdds:
    if not 0 <= s <= channel.m:
        raise ValueError(f"support count {s} outside [0, {channel.m}]")
    q1, q0, rho = channel.q1, channel.q0, channel.prior
    log_odds = (
        math.log(rho) - math.log1p(-rho)
        + channel.m * (math.log1p(-q1) - math.log1p(-q0))
        + s * channel.log_r
    )
    odds = math.exp(log_odds) if log_odds < 709 else math.inf
    return PosteriorOdds(log_odds, odds, float(expit(log_odds)))


def fixed_ratio_rate(eta: float, q1: float, q0: float) -> tuple[float, Optional[float]]:
    """Per-evaluator log-odds drift ``D(eta)`` and its zero ``eta*`` (``None`` when q1 == q0)."""
    d = eta * (math.log(q1) - math.log(q0)) + (1 - eta) * (math.log1p(-q1) - math.log1p(-q0))
    if q1 == q0:
        return 0.0, None
    log_r = math.log(q1) + math.log1p(-q0) - math.log(q0) - math.log1p(-q1)
    eta_star = (math.log1p(-q0) - math.log1p(-q1)) / log_r
    return d, eta_star


def all_failing_detection_prob(rho_t: float, n_tests: int) -> float:
    """Chance that a pool of ``n_tests`` tests contains at least one correct test."""
    return 1.0 - (1.0 - rho_t) ** n_tests


def wilson_interval(k: int, n: int, confidence: float = 0.999) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + confidence / 2))
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


def _map_substreams(fn, trials: int, rng_seed: int, workers: int, block: int):
    """Split trials into fixed-size blocks, each with its own seeded substream.

    Block boundaries do not depend on ``workers``, so results are identical
    for any degree of parallelism.
    """
    sizes = [block] * (trials // block) + ([trials % block] if trials % block else [])
    seeds = np.random.SeedSequence(rng_seed).spawn(len(sizes))
    jobs = [(size, np.random.default_rng(seed)) for size, seed in zip(sizes, seeds)]
    if workers <= 1:
        return [fn(size, rng) for size, rng in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


@dataclass(frozen=True)
class PosteriorTable:
    counts: np.ndarray
    positives: np.ndarray
    closed_form: np.ndarray

    @property
    def empirical(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.positives / np.maximum(self.counts, 1), np.nan)


def simulate_posterior(channel: BinomialChannel, trials: int, rng_seed: int = 0, workers: int = 1) -> PosteriorTable:
    """Sample correctness from the prior and support counts from the matching binomial."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = channel.m

    def run(size, rng):
        h = rng.random(size) < channel.prior
        s = rng.binomial(m, np.where(h, channel.q1, channel.q0))
        return np.bincount(s, minlength=m + 1), np.bincount(s[h], minlength=m + 1)

    parts = _map_substreams(run, trials, rng_seed, workers, block=50_000)
    counts = sum(p[0] for p in parts)
    positives = sum(p[1] for p in parts)
    closed = np.array([posterior_odds(s, channel).posterior for s in range(m + 1)])
    return PosteriorTable(counts, positives, closed)


def wrong_symbol_probs(beta: float, alphabet_size: int) -> np.ndarray:
    """Per-coordinate output law of a wrong code.

    Symbol 0 is the correct output and symbol 1 the wrong output with the
    largest mass ``beta``; the rest of the mass is split evenly over the other
    ``alphabet_size - 1`` symbols, the correct one included.
    """
    p = np.full(alphabet_size, (1 - beta) / (alphabet_size - 1))
    p[1] = beta
    return p


def sample_signatures(params: SignatureModelParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One draw of ``n_candidates`` signatures; the correct signature is all zeros.

    With ``beta == 0`` every wrong candidate gets a signature of its own
    (symbols below zero), modelling an unbounded output space.
    """
    n, r = params.n_candidates, params.n_probes
    correct = rng.random(n) < params.alpha
    if params.beta == 0:
        sigs = np.zeros((n, r), dtype=np.int64)
        sigs[~correct] = -(1 + np.arange(int((~correct).sum())))[:, None]
        return sigs, correct
    p = wrong_symbol_probs(params.beta, params.alphabet_size)
    sigs = rng.choice(params.alphabet_size, size=(n, r), p=p)
    sigs[correct] = 0
    return sigs, correct


def _largest_is_correct(sigs: np.ndarray) -> bool:
    rows, counts = np.unique(sigs, axis=0, return_counts=True)
    is_plus = ~rows.any(axis=1)
    plus = int(counts[is_plus].sum())
    other = int(counts[~is_plus].max()) if (~is_plus).any() else 0
    return plus > other


def simulate_signature_separation(params: SignatureModelParams, trials: int, rng_seed: int = 0, workers: int = 1) -> float:
    """Fraction of trials in which the strictly largest exact-signature cluster is the correct one."""
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def run(size, rng):
        return sum(_largest_is_correct(sample_signatures(params, rng)[0]) for _ in range(size))

    return sum(_map_substreams(run, trials, rng_seed, workers, block=100)) / trials


@dataclass(frozen=True)
class Round0Histograms:
    """Histograms of test and code pass counts split by ground-truth correctness."""

    ut_correct: np.ndarray
    ut_wrong: np.ndarray
    code_correct: np.ndarray
    code_wrong: np.ndarray

    @staticmethod
    def _mean(h: np.ndarray) -> float:
        return float((h * np.arange(len(h))).sum() / h.sum()) if h.sum() else math.nan

    @property
    def ut_mean_gap(self) -> float:
        return self._mean(self.ut_correct) - self._mean(self.ut_wrong)

    @property
    def code_mean_gap(self) -> float:
        return self._mean(self.code_correct) - self._mean(self.code_wrong)


def simulate_round0_matrix(
    params: GenerativeParams, n_codes: int, n_tests: int, trials: int, rng_seed: int = 0, workers: int = 1
) -> Round0Histograms:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rc, rt, e1, e2 = (float(x) for x in (params.rho_c, params.rho_t, params.eps1, params.eps2))

    def run(size, rng):
        c = rng.random((size, n_codes, 1)) < rc
        u = rng.random((size, 1, n_tests)) < rt
        p = np.where(c, np.where(u, 1.0, 0.0), np.where(u, e1, e2))
        m = rng.random((size, n_codes, n_tests)) < p
        p_ut = m.sum(axis=1)
        p_code = m.sum(axis=2)
        u2, c2 = u[:, 0, :], c[:, :, 0]
        return (
            np.bincount(p_ut[u2], minlength=n_codes + 1),
            np.bincount(p_ut[~u2], minlength=n_codes + 1),
            np.bincount(p_code[c2], minlength=n_tests + 1),
            np.bincount(p_code[~c2], minlength=n_tests + 1),
        )

    results = _map_substreams(run, trials, rng_seed, workers, block=2000)
    return Round0Histograms(*(sum(r[k] for r in results) for k in range(4)))
