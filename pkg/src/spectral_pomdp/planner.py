"""PO-UCT planning over ground-truth, PSR, and recovered backends.

All three backends reduce to the same linear interface: a state row
vector, per-(action, observation) update matrices, and a normalization
vector (all ones for belief backends, the PSR terminal vector otherwise).
One step multiplies the state by an update and renormalizes; the
likelihood vector of (a, o) is update @ norm. The tree search itself
lives in the compiled kernel with a pure-python fallback.
"""

import dataclasses
import warnings

import numpy as np

from spectral_pomdp import _kernels
from spectral_pomdp.domains import reward_observation_values
from spectral_pomdp.recovery import _simplex_row


@dataclasses.dataclass
class PlannerConfig:
    ucb_constant: float = 2.0
    max_depth: int = 3
    simulations_per_step: int = 1000
    exploration_exponent: float = 0.5
    log_bonus: bool = False
    discount: float = 0.95

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.simulations_per_step < 1:
            raise ValueError("simulations_per_step must be at least 1")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if not np.isfinite(self.ucb_constant) or self.ucb_constant < 0:
            raise ValueError("ucb_constant must be a nonnegative number")
        if not np.isfinite(self.exploration_exponent):
            raise ValueError("exploration_exponent must be finite")


@dataclasses.dataclass
class RewardSpec:
    """Post-hoc reward assignment, either on observations or on states."""

    mode: str
    observation_rewards: np.ndarray = None
    state_rewards: np.ndarray = None

    def __post_init__(self):
        if self.mode not in ("observation-based", "state-based"):
            raise ValueError("unknown reward mode %r" % (self.mode,))
        if self.observation_rewards is not None:
            self.observation_rewards = np.asarray(self.observation_rewards, float)
        if self.state_rewards is not None:
            self.state_rewards = np.asarray(self.state_rewards, float)
        if self.mode == "observation-based":
            active = self.observation_rewards
            if active is None:
                raise ValueError("observation-based mode needs observation_rewards")
        else:
            active = self.state_rewards
            if active is None:
                raise ValueError("state-based mode needs state_rewards")
        if not np.isfinite(active).all():
            raise ValueError("reward values must be finite")
        if not np.any(active != 0.0):
            raise ValueError("at least one reward entry must be nonzero")


@dataclasses.dataclass
class PlanningBackend:
    """Unified linear generative interface used by the search kernel."""

    name: str
    updates: np.ndarray
    likelihoods: np.ndarray
    norm_vec: np.ndarray
    init_state: np.ndarray
    partition: tuple = None
    native_rewards: np.ndarray = None
    exact_states: bool = False


def ground_truth_backend(model):
    updates = np.ascontiguousarray(
        np.einsum("aos,ast->aost", model.obs, model.trans)
    )
    norm = np.ones(model.num_states)
    native = None if model.reward is None else np.ascontiguousarray(model.reward.T)
    return PlanningBackend(
        name="ground-truth",
        updates=updates,
        likelihoods=np.ascontiguousarray(updates @ norm),
        norm_vec=norm,
        init_state=np.asarray(model.init, float).copy(),
        partition=tuple((i,) for i in range(model.num_states)),
        native_rewards=native,
        exact_states=True,
    )


def psr_backend(psr):
    updates = np.ascontiguousarray(psr.updates, float)
    norm = np.ascontiguousarray(psr.m_inf, float)
    return PlanningBackend(
        name="psr",
        updates=updates,
        likelihoods=np.ascontiguousarray(updates @ norm),
        norm_vec=norm,
        init_state=np.asarray(psr.m0, float).copy(),
        partition=None,
        native_rewards=None,
        exact_states=False,
    )


def recovered_backend(rec):
    updates = np.ascontiguousarray(rec.products, float)
    norm = np.ones(updates.shape[2])
    return PlanningBackend(
        name="recovered",
        updates=updates,
        likelihoods=np.ascontiguousarray(updates @ norm),
        norm_vec=norm,
        init_state=np.asarray(rec.belief, float).copy(),
        partition=rec.partition,
        native_rewards=None,
        exact_states=False,
    )


def _reward_arrays(backend, reward):
    num_a, num_o, r = backend.likelihoods.shape
    zeros_sa = np.zeros((num_a, r))
    zeros_obs = np.zeros((num_a, num_o))
    no_part = np.zeros(r, np.int64)
    no_prew = np.zeros(1)
    if reward is None:
        if backend.native_rewards is None:
            raise ValueError(
                "backend %r has no native rewards; pass a RewardSpec" % backend.name
            )
        return 0, backend.native_rewards, zeros_obs, no_part, no_prew
    if reward.mode == "observation-based":
        orew = reward.observation_rewards
        if orew.shape != (num_a, num_o):
            raise ValueError(
                "observation reward table must have shape (%d, %d), got %s"
                % (num_a, num_o, orew.shape)
            )
        return 1, zeros_sa, np.ascontiguousarray(orew), no_part, no_prew
    if backend.partition is None:
        raise ValueError(
            "state-based rewards are undefined for the PSR backend; "
            "attach rewards to observations instead"
        )
    sr = reward.state_rewards
    if sr.shape != (r,):
        raise ValueError(
            "state reward length %d does not match state count %d" % (len(sr), r)
        )
    if backend.exact_states:
        return 0, np.ascontiguousarray(np.tile(sr, (num_a, 1))), zeros_obs, \
            no_part, no_prew
    part_of = np.zeros(r, np.int64)
    prew = np.zeros(len(backend.partition))
    for p, block in enumerate(backend.partition):
        for i in block:
            part_of[i] = p
        prew[p] = sr[list(block)].mean()
    return 2, zeros_sa, zeros_obs, part_of, prew


def plan(backend, state, config, reward=None, seed=0):
    """Root action of a PO-UCT search from the given backend state."""
    x = np.ascontiguousarray(state, float)
    if x.shape != backend.norm_vec.shape:
        raise ValueError("state length does not match the backend")
    root_mass = float(x @ backend.norm_vec)
    if not np.isfinite(root_mass) or root_mass <= 0.0:
        raise ValueError("zero-probability root belief")
    kind, sa, orew, part_of, prew = _reward_arrays(backend, reward)
    action, _, _ = _kernels.pouct_plan(
        x,
        backend.likelihoods,
        backend.updates,
        backend.norm_vec,
        kind,
        sa,
        orew,
        part_of,
        prew,
        config.discount,
        config.ucb_constant,
        config.max_depth,
        config.simulations_per_step,
        config.exploration_exponent,
        config.log_bonus,
        seed,
    )
    return int(action)


def observation_distribution(backend, state, a):
    """Simplex-projected next-observation distribution under action a."""
    w = backend.likelihoods[a] @ np.asarray(state, float)
    dist = _simplex_row(w)
    total = dist.sum()
    if total <= 0.0:
        return np.full(len(dist), 1.0 / len(dist))
    return dist / total


def _sample_index(dist, rng):
    return int(rng.choice(len(dist), p=dist))


def sample_step_belief(backend, state, a, rng, reward=None):
    """One generative step propagating the full state vector (strategy 1)."""
    x = np.asarray(state, float)
    rew = 0.0
    if reward is not None and reward.mode == "state-based":
        if not backend.exact_states:
            raise ValueError(
                "state rewards on a learned backend need partition sampling"
            )
        rew += float(x @ reward.state_rewards)
    dist = observation_distribution(backend, x, a)
    o = _sample_index(dist, rng)
    if reward is not None and reward.mode == "observation-based":
        rew += float(reward.observation_rewards[a, o])
    nx = x @ backend.updates[a, o]
    z = float(nx @ backend.norm_vec)
    if abs(z) > 1e-300:
        nx = nx / z
    return nx, o, rew


def sample_step_partition(backend, state, a, rng, reward=None):
    """One generative step that first samples a partition block (strategy 2).

    The state is conditioned on the sampled block before the observation
    draw; state-based rewards are read from the sampled block.
    """
    if backend.partition is None:
        raise ValueError("backend has no partition to sample from")
    x = np.asarray(state, float)
    masses = np.array([x[list(b)].sum() for b in backend.partition])
    if masses.sum() <= 0.0:
        raise ValueError("zero partition mass at the current state")
    dist = _simplex_row(masses)
    p = _sample_index(dist / dist.sum(), rng)
    rew = 0.0
    if reward is not None and reward.mode == "state-based":
        rew += float(reward.state_rewards[list(backend.partition[p])].mean())
    conditioned = np.zeros_like(x)
    idx = list(backend.partition[p])
    conditioned[idx] = x[idx]
    total = conditioned.sum()
    if abs(total) > 1e-300:
        conditioned = conditioned / total
    obs_dist = observation_distribution(backend, conditioned, a)
    o = _sample_index(obs_dist, rng)
    if reward is not None and reward.mode == "observation-based":
        rew += float(reward.observation_rewards[a, o])
    nx = conditioned @ backend.updates[a, o]
    z = float(nx @ backend.norm_vec)
    if abs(z) > 1e-300:
        nx = nx / z
    return nx, p, o, rew


def derive_state_rewards(model, rule, left_action=0, right_action=1,
                         end_left_obs=0, end_right_obs=1):
    """Build a +1 single-state RewardSpec from recovered observation structure.

    rule="max-entropy" rewards the state with the largest summed entropy
    of its per-action observation distributions. rule="ml-ends" rewards
    the state whose most likely observation is the left end marker under
    the left action and the right end marker under the right action.
    Ties go to the lowest state index and are reported with a warning.
    Works on RecoveredModel and DiscretePomdp alike.
    """
    diags = getattr(model, "obs_diagonals", None)
    if diags is None:
        diags = model.obs
    emis = np.transpose(np.asarray(diags, float), (0, 2, 1))
    num_states = emis.shape[1]
    if rule == "max-entropy":
        p = np.clip(emis, 1e-12, None)
        p = p / p.sum(axis=2, keepdims=True)
        scores = -(p * np.log(p)).sum(axis=2).sum(axis=0)
        best = int(np.argmax(scores))
        ties = np.flatnonzero(np.isclose(scores, scores[best], atol=1e-9))
    elif rule == "ml-ends":
        ml_left = np.argmax(emis[left_action], axis=1)
        ml_right = np.argmax(emis[right_action], axis=1)
        ties = np.flatnonzero(
            (ml_left == end_left_obs) & (ml_right == end_right_obs)
        )
        if len(ties) == 0:
            raise ValueError(
                "no state's maximum likelihood observations point to both "
                "hallway ends"
            )
        best = int(ties[0])
    else:
        raise ValueError("unknown rule %r" % (rule,))
    if len(ties) > 1:
        warnings.warn(
            "tie between states %s under rule %s; picking the lowest index"
            % (ties.tolist(), rule)
        )
    rewards = np.zeros(num_states)
    rewards[best] = 1.0
    return RewardSpec("state-based", state_rewards=rewards)


def reward_observation_spec(model):
    """Observation rewards for a model wrapped by with_reward_observations.

    Each wrapped symbol is (original observation, reward value); the value
    cycles fastest, so symbol j pays the (j mod V)-th sorted value.
    """
    if model.reward is None:
        raise ValueError("model carries no reward table")
    values = reward_observation_values(model)
    num_o = len(model.observations)
    if num_o % len(values) != 0:
        raise ValueError("observation alphabet is not a reward product")
    row = np.array([values[j % len(values)] for j in range(num_o)])
    orew = np.tile(row, (model.num_actions, 1))
    return RewardSpec("observation-based", observation_rewards=orew)


def filter_step(backend, state, a, o):
    """Filter one observed step; reset to the learned start on impossibility.

    Returns (next state, was_reset). A nonpositive or non-finite
    normalizer means the learned model assigns the observed step zero
    probability, in which case the filter restarts from init_state.
    """
    w = np.asarray(state, float) @ backend.updates[a, o]
    z = float(w @ backend.norm_vec)
    if not np.isfinite(z) or z <= 0.0:
        return backend.init_state.copy(), True
    return w / z, False


@dataclasses.dataclass
class EpisodeResult:
    discounted_return: float
    total_reward: float
    filter_resets: int
    n_steps: int


def run_episode(true_model, backend, config, reward=None, eval_reward=None,
                n_steps=500, seed=0):
    """Continuing episode: plan with the backend, act on the true model.

    backend=None plays uniformly random actions (the baseline policy).
    reward is what the planner optimizes (None = the true model's native
    table, only available on the ground-truth backend). eval_reward is
    what the episode is scored with and defaults to the planning reward;
    a state-based eval_reward is indexed by TRUE model states, while a
    state-based planning reward uses the backend's own state indexing.
    Returns the return discounted at the true model's discount factor.
    """
    if eval_reward is None:
        eval_reward = reward
    if eval_reward is None and true_model.reward is None:
        raise ValueError("no reward to score the episode with")
    env_rng = np.random.default_rng([seed, 0])
    act_rng = np.random.default_rng([seed, 1])
    plan_seeds = act_rng.integers(0, 2**62, size=n_steps)
    s = int(env_rng.choice(true_model.num_states, p=true_model.init))
    x = None if backend is None else backend.init_state.copy()
    gamma = true_model.discount
    discounted = 0.0
    total = 0.0
    g = 1.0
    resets = 0
    for t in range(n_steps):
        if backend is None:
            a = int(act_rng.integers(true_model.num_actions))
        else:
            a = plan(backend, x, config, reward=reward, seed=int(plan_seeds[t]))
        o = int(env_rng.choice(true_model.num_obs, p=true_model.obs[a, :, s]))
        if eval_reward is None:
            r = float(true_model.reward[s, a])
        elif eval_reward.mode == "observation-based":
            r = float(eval_reward.observation_rewards[a, o])
        else:
            r = float(eval_reward.state_rewards[s])
        discounted += g * r
        total += r
        g *= gamma
        s = int(env_rng.choice(true_model.num_states, p=true_model.trans[a, s]))
        if backend is not None:
            x, was_reset = filter_step(backend, x, a, o)
            resets += was_reset
    return EpisodeResult(discounted, total, resets, n_steps)
