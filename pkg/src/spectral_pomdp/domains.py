"""Benchmark domain constructors.

All constructors return DiscretePomdp instances using the leaving-state
emission convention. Observation matrices are stored as diagonal vectors,
obs[a, o, s] = P(emit o | leaving s under a).
"""

import numpy as np

from spectral_pomdp.model import DiscretePomdp, conjugate_to_pomdp, stationary_distribution


def _to_obs_diagonals(emissions):
    """Stack per-action (S, O) emission tables into (A, O, S) diagonals."""
    return np.swapaxes(np.asarray(emissions, float), 1, 2)


def tiger():
    """Two doors, a noisy listen action (accuracy 0.85), opening resets."""
    listen_t = np.eye(2)
    open_t = np.full((2, 2), 0.5)
    trans = np.stack([listen_t, open_t, open_t])
    listen_e = np.array([[0.85, 0.15], [0.15, 0.85]])
    open_e = np.full((2, 2), 0.5)
    obs = _to_obs_diagonals([listen_e, open_e, open_e])
    reward = np.array([[-1.0, -100.0, 10.0], [-1.0, 10.0, -100.0]])
    return DiscretePomdp(
        actions=("listen", "open-left", "open-right"),
        observations=("hear-left", "hear-right"),
        trans=trans,
        obs=obs,
        init=np.array([0.5, 0.5]),
        reward=reward,
    )


def sense_float_reset(n_states=3):
    """Random-walk chain with a deterministic reset and an identity sense.

    float diffuses to neighbours w.p. 0.5 (self-loop at the two ends), reset
    jumps to s0, sense keeps the state. reset and sense emit 1 exactly when
    leaving s0; float emits 0 everywhere. Reward +1 on leaving s1.
    """
    n = int(n_states)
    if n < 3:
        raise ValueError("sense_float_reset needs at least 3 states")
    fl = np.zeros((n, n))
    fl[0, 0] = fl[0, 1] = 0.5
    fl[n - 1, n - 1] = fl[n - 1, n - 2] = 0.5
    for i in range(1, n - 1):
        fl[i, i - 1] = fl[i, i + 1] = 0.5
    rs = np.zeros((n, n))
    rs[:, 0] = 1.0
    trans = np.stack([fl, rs, np.eye(n)])
    e_float = np.zeros((n, 2))
    e_float[:, 0] = 1.0
    e_mark = e_float.copy()
    e_mark[0] = [0.0, 1.0]
    obs = _to_obs_diagonals([e_float, e_mark, e_mark])
    reward = np.zeros((n, 3))
    reward[1, :] = 1.0
    init = np.zeros(n)
    init[0] = 1.0
    return DiscretePomdp(
        actions=("float", "reset", "sense"),
        observations=("0", "1"),
        trans=trans,
        obs=obs,
        init=init,
        reward=reward,
    )


def tmaze(corridor_len=1, move_prob=0.8, signal=0.95):
    """T-shaped maze with an aliased corridor.

    States: map-up, map-down (start states carrying the goal signal),
    corridor_len shared corridor cells, choice-up, choice-down. Forward
    walks the corridor; the turn actions move from the decision cell (the
    map states themselves when corridor_len=0, else the last corridor cell)
    into the corresponding choice state, which restarts to a uniform map
    state under forward. Map states emit their signal w.p. `signal`;
    corridor and choice cells emit the corridor symbol under forward, and
    choice cells reveal their side under the turn actions.

    With a shared corridor the correct-turn reward is not expressible as a
    state-action table, so rewards are attached only for corridor_len=0
    (turning toward the side the map state indicates).
    """
    k = int(corridor_len)
    if k < 0:
        raise ValueError("corridor_len must be nonnegative")
    s_count = k + 4
    iu, idn = k + 2, k + 3
    fwd = np.zeros((s_count, s_count))
    if k == 0:
        fwd[0, 0] = fwd[1, 1] = 1.0
    else:
        fwd[0, 2] = fwd[1, 2] = move_prob
        fwd[0, 0] = fwd[1, 1] = 1.0 - move_prob
        for i in range(k - 1):
            fwd[2 + i, 3 + i] = move_prob
            fwd[2 + i, 2 + i] = 1.0 - move_prob
        fwd[k + 1, k + 1] = 1.0
    fwd[iu, 0] = fwd[iu, 1] = 0.5
    fwd[idn, 0] = fwd[idn, 1] = 0.5

    def turn(dest):
        m = np.eye(s_count)
        for s in ([0, 1] if k == 0 else [k + 1]):
            m[s, s] = 1.0 - move_prob
            m[s, dest] = move_prob
        return m

    trans = np.stack([fwd, turn(iu), turn(idn)])
    e_fwd = np.zeros((s_count, 3))
    e_fwd[0] = [signal, 1.0 - signal, 0.0]
    e_fwd[1] = [1.0 - signal, signal, 0.0]
    e_fwd[2:] = [0.0, 0.0, 1.0]
    e_turn = e_fwd.copy()
    e_turn[iu] = [1.0, 0.0, 0.0]
    e_turn[idn] = [0.0, 1.0, 0.0]
    obs = _to_obs_diagonals([e_fwd, e_turn, e_turn])
    reward = None
    if k == 0:
        reward = np.zeros((s_count, 3))
        reward[0, 1] = 1.0   # map says up, turn up
        reward[0, 2] = -1.0
        reward[1, 2] = 1.0
        reward[1, 1] = -1.0
    init = np.zeros(s_count)
    init[0] = init[1] = 0.5
    return DiscretePomdp(
        actions=("forward", "turn-up", "turn-down"),
        observations=("up-signal", "down-signal", "corridor"),
        trans=trans,
        obs=obs,
        init=init,
        reward=reward,
    )


def _hallway(directional):
    t_left = np.array([[1.0, 0.0, 0.0], [0.8, 0.2, 0.0], [0.0, 0.8, 0.2]])
    t_right = t_left[::-1, ::-1].copy()
    t_reset = np.tile([0.5, 0.0, 0.5], (3, 1))
    trans = np.stack([t_left, t_right, np.eye(3), t_reset])
    end_l = [0.8, 0.2]
    end_r = [0.2, 0.8]
    unif = [0.5, 0.5]
    mid_under_left = end_l if directional else unif
    mid_under_right = end_r if directional else unif
    e_left = np.array([end_l, mid_under_left, end_r])
    e_right = np.array([end_l, mid_under_right, end_r])
    e_flat = np.tile(unif, (3, 1))
    obs = _to_obs_diagonals([e_left, e_right, e_flat, e_flat])
    return DiscretePomdp(
        actions=("left", "right", "stay", "reset"),
        observations=("end-left", "end-right"),
        trans=trans,
        obs=obs,
        init=np.array([0.5, 0.0, 0.5]),
    )


def directional_hallway():
    """Three-cell hallway whose middle cell shows the direction of travel."""
    return _hallway(True)


def noisy_hallway():
    """Three-cell hallway whose middle cell emits coin flips."""
    return _hallway(False)


def perturbed_sfr():
    """The non-identifiability pair: two distinct POMDPs, one Hankel.

    The first model replaces the 3-state sense_float_reset float kernel with
    a perturbed matrix; the second is its exact similarity transform, which
    happens to be another valid POMDP. Both carry their own stationary
    distribution as the initial state. Exact Hankels of the two coincide
    entrywise while the float transitions differ by L1 > 2.8.
    """
    base = sense_float_reset(3)
    float_p = np.array([[0.4, 0.5, 0.1], [0.5, 0.1, 0.4], [0.0, 0.5, 0.5]])
    trans = base.trans.copy()
    trans[0] = float_p
    first = DiscretePomdp(
        actions=base.actions,
        observations=base.observations,
        trans=trans,
        obs=base.obs,
        init=base.init,
        reward=base.reward,
    )
    first = _with_stationary_init(first)
    p = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.95, 0.05]])
    second = _with_stationary_init(conjugate_to_pomdp(first, p))
    return first, second


def _with_stationary_init(model):
    import dataclasses

    return dataclasses.replace(model, init=stationary_distribution(model))


def with_reward_observations(model):
    """Expose the reward through a product observation alphabet.

    Each emitted symbol becomes (observation, reward value of the state
    being left under the action taken). Distinct reward values are sorted
    ascending. The underlying dynamics are unchanged.
    """
    if model.reward is None:
        raise ValueError("model has no reward table to expose")
    values = sorted(set(model.reward.flatten().tolist()))
    A, O, S = model.obs.shape
    V = len(values)
    obs = np.zeros((A, O * V, S))
    for a in range(A):
        for s in range(S):
            vi = values.index(model.reward[s, a])
            for o in range(O):
                obs[a, o * V + vi, s] = model.obs[a, o, s]
    labels = tuple(
        f"{ol}|r={v:g}" for ol in model.observations for v in values
    )
    return DiscretePomdp(
        actions=model.actions,
        observations=labels,
        trans=model.trans.copy(),
        obs=obs,
        init=model.init.copy(),
        reward=model.reward.copy(),
        discount=model.discount,
    )


def reward_observation_values(model):
    """The sorted distinct reward values used by with_reward_observations."""
    return sorted(set(model.reward.flatten().tolist()))


_REGISTRY = {
    "tiger": tiger,
    "sense_float_reset": sense_float_reset,
    "tmaze": tmaze,
    "directional_hallway": directional_hallway,
    "noisy_hallway": noisy_hallway,
    "perturbed_sfr": perturbed_sfr,
}


def make_domain(name, reward_observations=False, **params):
    """Constructor registry. reward_observations=True wraps the result."""
    if name not in _REGISTRY:
        raise ValueError(
            "unknown domain %r (have: %s)" % (name, ", ".join(sorted(_REGISTRY)))
        )
    model = _REGISTRY[name](**params)
    if reward_observations:
        model = with_reward_observations(model)
    return model
