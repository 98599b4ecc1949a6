"""Action-conditioned Baum-Welch baseline.

Learns explicit transition and emission tables from a single trajectory
by expectation maximization with random restarts. The initial state
distribution is held fixed at uniform: a single trajectory carries
essentially no information about it and freeing it lets restarts wander.
"""

import dataclasses

import numpy as np

from spectral_pomdp import _kernels
from spectral_pomdp.model import DiscretePomdp


@dataclasses.dataclass
class EmConfig:
    num_states: int
    max_iters: int = 200
    tol: float = 1e-6
    restarts: int = 5
    seed: int = 0


@dataclasses.dataclass
class EmResult:
    """Best fit over restarts.

    log_likelihood_path holds the per-iteration log likelihood of the
    winning restart; log_likelihood is its last entry and belongs to the
    returned model exactly (no trailing M step is applied after it).
    """

    model: DiscretePomdp
    log_likelihood: float
    log_likelihood_path: list
    restart_log_likelihoods: list
    iterations: int


def _renormalize(numerators, previous):
    """Row-normalize expected counts, keeping rows that saw no mass."""
    out = previous.copy()
    sums = numerators.sum(axis=-1)
    seen = sums > 0.0
    out[seen] = numerators[seen] / sums[seen][:, None]
    return out


def em_fit(traj, config):
    actions = np.asarray(traj.actions, np.int64)
    observations = np.asarray(traj.observations, np.int64)
    if traj.action_labels is not None:
        action_labels = tuple(traj.action_labels)
    else:
        action_labels = tuple(range(int(actions.max()) + 1))
    if traj.observation_labels is not None:
        observation_labels = tuple(traj.observation_labels)
    else:
        observation_labels = tuple(range(int(observations.max()) + 1))
    num_a, num_o = len(action_labels), len(observation_labels)
    num_s = config.num_states
    init = np.full(num_s, 1.0 / num_s)
    best = None
    restart_lls = []
    for k in range(config.restarts):
        rng = np.random.default_rng([config.seed, k])
        trans = rng.dirichlet(np.ones(num_s), size=(num_a, num_s))
        emis = rng.dirichlet(np.ones(num_o), size=(num_a, num_s))
        path = []
        for it in range(config.max_iters):
            trans_num, obs_num, ll = _kernels.em_accumulate(
                actions, observations, trans, emis, init
            )
            path.append(float(ll))
            if it == config.max_iters - 1:
                break
            if it > 0 and path[-1] - path[-2] < config.tol:
                break
            trans = _renormalize(trans_num, trans)
            emis = _renormalize(obs_num, emis)
        restart_lls.append(path[-1])
        if best is None or path[-1] > best[0]:
            best = (path[-1], trans, emis, path)
    ll, trans, emis, path = best
    model = DiscretePomdp(
        actions=action_labels,
        observations=observation_labels,
        trans=trans,
        obs=np.swapaxes(emis, 1, 2),
        init=init,
    )
    return EmResult(
        model=model,
        log_likelihood=ll,
        log_likelihood_path=path,
        restart_log_likelihoods=restart_lls,
        iterations=len(path),
    )
