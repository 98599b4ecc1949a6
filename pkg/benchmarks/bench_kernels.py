"""Time the compiled kernels against the pure-python fallback.

Run from the repository root after building the extension:

    python3 benchmarks/bench_kernels.py

Each kernel is timed best-of-5 on a tiger-sized workload. The point of the
table is a sanity check that the extension actually pays for itself; the
fallback keeps the package usable when no compiler is around.
"""

import time

import numpy as np

from spectral_pomdp import _native
from spectral_pomdp._kernels import _fallback
from spectral_pomdp.domains import tiger
from spectral_pomdp.planner import _reward_arrays, ground_truth_backend


def best_of(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    model = tiger()
    policy = np.full(model.num_actions, 1.0 / model.num_actions)
    tc = np.ascontiguousarray(np.cumsum(model.trans, axis=2))
    oc = np.ascontiguousarray(np.cumsum(np.swapaxes(model.obs, 1, 2), axis=2))
    pc = np.cumsum(policy)
    ic = np.cumsum(model.init)
    n_sim = 500_000

    acts, obs, _ = _native.simulate_steps(tc, oc, pc, ic, n_sim, 0)
    rng = np.random.default_rng(0)
    A, O, S = model.obs.shape
    trans = np.ascontiguousarray(rng.dirichlet(np.ones(S), size=(A, S)))
    obs_em = np.ascontiguousarray(rng.dirichlet(np.ones(O), size=(A, S)))
    init = rng.dirichlet(np.ones(S))

    backend = ground_truth_backend(model)
    kind, sa, orew, part_of, prew = _reward_arrays(backend, None)
    plan_args = (backend.init_state, backend.likelihoods, backend.updates,
                 backend.norm_vec, kind, sa, orew, part_of, prew,
                 0.95, 10.0, 3, 5000, 0.5, False, 0)

    cases = [
        ("simulate_steps (%d steps)" % n_sim,
         lambda m: m.simulate_steps(tc, oc, pc, ic, n_sim, 0)),
        ("em_accumulate (%d steps)" % n_sim,
         lambda m: m.em_accumulate(acts, obs, trans, obs_em, init)),
        ("pouct_plan (5000 sims)",
         lambda m: m.pouct_plan(*plan_args)),
    ]

    print("%-28s %12s %12s %9s" % ("kernel", "native (s)", "fallback (s)",
                                   "speedup"))
    for name, call in cases:
        t_nat = best_of(lambda: call(_native))
        t_fal = best_of(lambda: call(_fallback))
        print("%-28s %12.4f %12.4f %8.1fx" % (name, t_nat, t_fal,
                                              t_fal / t_nat))


if __name__ == "__main__":
    main()
