"""
Pass counts as evidence
=======================

Closed-form posteriors of correctness given a pass count, checked
against simulation, and the gain from adding probe inputs.
"""

import numpy as np

from coevolve.theory import (
    BinomialChannel,
    SignatureModelParams,
    advantage_thresholds,
    fixed_ratio_rate,
    posterior_odds,
    simulate_posterior,
    simulate_signature_separation,
)

# Each of 16 evaluators supports a correct object with probability 0.8
# and a wrong one with probability 0.3.
channel = BinomialChannel(m=16, q1=0.8, q0=0.3, prior=0.5)
table = simulate_posterior(channel, trials=200_000, rng_seed=0)
for s in range(channel.m + 1):
    print(f"s={s:2d}  closed={table.closed_form[s]:.4f}  simulated={table.empirical[s]:.4f}  n={table.counts[s]}")

# Holding the support ratio fixed, the log-odds drift per evaluator flips sign at eta*.
_, eta_star = fixed_ratio_rate(0.5, channel.q1, channel.q0)
print("eta* =", round(eta_star, 4))
for m in (8, 16, 32, 64):
    ch = BinomialChannel(m, 0.8, 0.3)
    print(m, posterior_odds(int(np.ceil(0.8 * m)), ch).posterior)

# Minimum correct-test prior for correct codes to out-pass wrong ones.
print(advantage_thresholds(0.2, 0.1).rho_t_star)

# More probes make the correct signature stand out.
for r in (1, 2, 4, 8):
    params = SignatureModelParams(alpha=0.3, beta=0.5, n_probes=r, n_candidates=200, alphabet_size=4)
    print(r, simulate_signature_separation(params, trials=500, rng_seed=r))
