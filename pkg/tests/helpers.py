"""Small shared helpers for the test suite."""
from itertools import product

from spectral_pomdp.domains import make_domain, sense_float_reset


def get_domain(name):
    """Benchmark domains under the short names used throughout the tests."""
    if name == "sfr3":
        return sense_float_reset(3)
    if name == "sfr4":
        return sense_float_reset(4)
    if name == "tmaze":
        return make_domain("tmaze", corridor_len=0)
    return make_domain(name)


def exact_recovered(name, lengths, sigma_min, tau_obs=0.1, seed=0, project=True):
    """Full exact pipeline: Hankel, SVD, PSR, recovery, optional projection."""
    from spectral_pomdp.hankel import exact_hankel
    from spectral_pomdp.psr import extract_psr, truncated_svd
    from spectral_pomdp.recovery import (
        RecoveryConfig,
        project_probabilities,
        recover,
    )

    model = get_domain(name)
    est = exact_hankel(model, *lengths)
    fact = truncated_svd(est, 1e-6, 20, seed=seed)
    psr = extract_psr(est, fact)
    rec = recover(psr, RecoveryConfig(sigma_min=sigma_min, tau_obs=tau_obs, seed=seed))
    if project:
        rec = project_probabilities(rec)
    return model, psr, rec


def string_probability(model, init, pairs):
    """Brute-force P(o_1..o_n | a_1..a_n) by summing over latent state paths."""
    states = range(model.num_states)
    total = 0.0
    for path in product(states, repeat=len(pairs) + 1):
        w = init[path[0]]
        for k, (a, o) in enumerate(pairs):
            w *= model.obs[a, o, path[k]] * model.trans[a, path[k], path[k + 1]]
        total += w
    return total


def all_strings(num_actions, num_obs, max_total_len):
    """Every (a, o) string with 1 <= length <= max_total_len."""
    pairs = [(a, o) for a in range(num_actions) for o in range(num_obs)]
    out = []
    for length in range(1, max_total_len + 1):
        out.extend(product(pairs, repeat=length))
    return out
