"""Pure-python reference implementations of the hot loops.

The compiled module (spectral_pomdp._native) mirrors these exactly, including
the RNG stream. Simulation and tree search here use plain scalar arithmetic so
both backends consume identical uniforms and make identical discrete choices.
"""

import math

import numpy as np

BACKEND = "fallback"

_MASK = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


def _sm64_next(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z = z ^ (z >> 31)
    return state, z


def _sm64_uniform(state):
    state, z = _sm64_next(state)
    return state, (z >> 11) * _INV53


def _pick(cum, u):
    # first index k with u < cum[k]; cum[-1] is 1 up to rounding
    k = 0
    last = len(cum) - 1
    while k < last and u >= cum[k]:
        k += 1
    return k


def simulate_steps(trans_cum, obs_cum, policy_cum, init_cum, n_steps, seed):
    """Sample a trajectory. Returns (actions, observations, states)."""
    A, S, _ = trans_cum.shape
    acts = np.empty(n_steps, dtype=np.int64)
    obs = np.empty(n_steps, dtype=np.int64)
    states = np.empty(n_steps, dtype=np.int64)
    st = seed & _MASK
    st, u = _sm64_uniform(st)
    s = _pick(init_cum, u)
    tc = trans_cum.tolist()
    oc = obs_cum.tolist()
    pc = policy_cum.tolist()
    for t in range(n_steps):
        st, u = _sm64_uniform(st)
        a = _pick(pc, u)
        st, u = _sm64_uniform(st)
        o = _pick(oc[a][s], u)
        st, u = _sm64_uniform(st)
        s2 = _pick(tc[a][s], u)
        acts[t] = a
        obs[t] = o
        states[t] = s
        s = s2
    return acts, obs, states


def em_accumulate(actions, observations, trans, obs_em, init):
    """One scaled forward-backward pass over a single action-conditioned
    sequence with emissions attached to the state being left.

    Returns (trans_num[A,S,S], obs_num[A,S,O], loglik).
    """
    A, S, _ = trans.shape
    O = obs_em.shape[2]
    n = len(actions)
    alpha = np.empty((n + 1, S))
    scale = np.empty(n)
    alpha[0] = init
    loglik = 0.0
    for t in range(n):
        a = actions[t]
        o = observations[t]
        w = alpha[t] * obs_em[a, :, o]
        nxt = w @ trans[a]
        c = nxt.sum()
        if c <= 0.0:
            c = 1e-300
        alpha[t + 1] = nxt / c
        scale[t] = c
        loglik += math.log(c)
    trans_num = np.zeros((A, S, S))
    obs_num = np.zeros((A, S, O))
    beta = np.ones(S)
    for t in range(n - 1, -1, -1):
        a = actions[t]
        o = observations[t]
        # xi_t(i,j) = alpha_t(i) O(i,o) T(i,j) beta_{t+1}(j) / c_t
        g = (alpha[t] * obs_em[a, :, o])[:, None] * trans[a] * beta[None, :]
        g /= scale[t]
        trans_num[a] += g
        obs_num[a, :, o] += g.sum(axis=1)
        beta = (obs_em[a, :, o] * (trans[a] @ beta)) / scale[t]
    return trans_num, obs_num, loglik


def _project_simplex(w):
    """Euclidean projection of a vector onto the probability simplex."""
    n = len(w)
    u = sorted(w, reverse=True)
    css = 0.0
    rho = -1
    theta = 0.0
    for k in range(n):
        css += u[k]
        t = (css - 1.0) / (k + 1)
        if u[k] - t > 0.0:
            rho = k
            theta = t
    return [max(x - theta, 0.0) for x in w]


def _sample_dist(w, u):
    """Simplex-project w, then sample an index with uniform u."""
    p = _project_simplex(w)
    tot = sum(p)
    if tot <= 0.0:
        # degenerate: fall back to a uniform choice
        return min(int(u * len(w)), len(w) - 1)
    acc = 0.0
    for k in range(len(p)):
        acc += p[k] / tot
        if u < acc:
            return k
    return len(p) - 1


def pouct_plan(x0, like, upd, norm_vec, reward_kind, sa_reward, obs_reward,
               part_of, part_reward, gamma, ucb_c, depth, n_sims,
               explore_exp, log_bonus, seed):
    """PO-UCT search from belief-like state x0. Returns (action, visits, values).

    reward_kind: 0 = x-weighted state-action rewards, 1 = observation rewards,
    2 = observation rewards plus a sampled-partition reward with the state
    conditioned on the sampled partition before the observation draw.
    """
    A, O, r = like.shape
    x0 = list(map(float, x0))
    like_l = like.tolist()
    upd_l = upd.tolist()
    nv = list(map(float, norm_vec))
    sa = sa_reward.tolist()
    orew = obs_reward.tolist()
    pof = list(map(int, part_of))
    prew = list(map(float, part_reward))
    n_parts = len(prew)

    children = [[[-1] * O for _ in range(A)]]
    counts = [[0] * A]
    values = [[0.0] * A]
    node_n = [0]

    st = seed & _MASK

    def step(x, a, u_part, u_obs):
        """One generative step from state x under action a.

        Returns (new x, immediate reward).
        """
        rew = 0.0
        if reward_kind == 0:
            rew = sum(x[i] * sa[a][i] for i in range(r))
        elif reward_kind == 2:
            pm = [0.0] * n_parts
            for i in range(r):
                pm[pof[i]] += x[i]
            p = _sample_dist(pm, u_part)
            rew += prew[p]
            xs = [x[i] if pof[i] == p else 0.0 for i in range(r)]
            tot = sum(xs)
            if abs(tot) > 1e-300:
                x = [v / tot for v in xs]
        w = [sum(x[i] * like_l[a][o][i] for i in range(r)) for o in range(O)]
        o = _sample_dist(w, u_obs)
        if reward_kind != 0:
            rew += orew[a][o]
        nx = [sum(x[i] * upd_l[a][o][i][j] for i in range(r)) for j in range(r)]
        z = sum(nx[j] * nv[j] for j in range(r))
        if abs(z) > 1e-300:
            nx = [v / z for v in nx]
        return nx, o, rew

    def rollout(x, d):
        nonlocal st
        total = 0.0
        g = 1.0
        while d < depth:
            st, u = _sm64_uniform(st)
            a = min(int(u * A), A - 1)
            st, u1 = _sm64_uniform(st)
            st, u2 = _sm64_uniform(st)
            x, _, rew = step(x, a, u1, u2)
            total += g * rew
            g *= gamma
            d += 1
        return total

    def simulate(node, x, d):
        nonlocal st
        if d >= depth:
            return 0.0
        unvisited = [a for a in range(A) if counts[node][a] == 0]
        if unvisited:
            a = unvisited[0]
        else:
            total = node_n[node]
            if log_bonus:
                bonus_scale = math.sqrt(math.log(total))
            else:
                bonus_scale = total ** explore_exp
            best = -1e300
            a = 0
            for cand in range(A):
                q = values[node][cand]
                nb = counts[node][cand]
                score = q + ucb_c * bonus_scale / math.sqrt(nb)
                if score > best:
                    best = score
                    a = cand
        st, u1 = _sm64_uniform(st)
        st, u2 = _sm64_uniform(st)
        nx, o, rew = step(x, a, u1, u2)
        child = children[node][a][o]
        if child < 0:
            children[node][a][o] = len(children)
            children.append([[-1] * O for _ in range(A)])
            counts.append([0] * A)
            values.append([0.0] * A)
            node_n.append(0)
            future = rollout(nx, d + 1)
        else:
            future = simulate(child, nx, d + 1)
        ret = rew + gamma * future
        counts[node][a] += 1
        node_n[node] += 1
        values[node][a] += (ret - values[node][a]) / counts[node][a]
        return ret

    for _ in range(n_sims):
        simulate(0, x0, 0)

    best = 0
    for a in range(1, A):
        if values[0][a] > values[0][best]:
            best = a
    return best, np.array(counts[0], dtype=np.int64), np.array(values[0])
