# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in spectral_pomdp._kernels._fallback.

The RNG stream and the per-step arithmetic mirror the fallback so that both
backends produce the same trajectories and tree-search decisions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, pow, sqrt

cnp.import_array()

BACKEND = "native"

cdef extern from *:
    ctypedef unsigned long long uint64_t

cdef double _INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _sm64_next(uint64_t* state) nogil:
    cdef uint64_t z
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    return z


cdef inline double _sm64_uniform(uint64_t* state) nogil:
    return <double>(_sm64_next(state) >> 11) * _INV53


cdef inline Py_ssize_t _pick(double* cum, Py_ssize_t n, double u) nogil:
    cdef Py_ssize_t k = 0
    while k < n - 1 and u >= cum[k]:
        k += 1
    return k


def simulate_steps(double[:, :, ::1] trans_cum, double[:, :, ::1] obs_cum,
                   double[::1] policy_cum, double[::1] init_cum,
                   Py_ssize_t n_steps, unsigned long long seed):
    cdef Py_ssize_t A = trans_cum.shape[0]
    cdef Py_ssize_t S = trans_cum.shape[1]
    cdef Py_ssize_t O = obs_cum.shape[2]
    acts_arr = np.empty(n_steps, dtype=np.int64)
    obs_arr = np.empty(n_steps, dtype=np.int64)
    states_arr = np.empty(n_steps, dtype=np.int64)
    cdef long long[::1] acts = acts_arr
    cdef long long[::1] obs = obs_arr
    cdef long long[::1] states = states_arr
    cdef uint64_t st = seed
    cdef double u
    cdef Py_ssize_t s, s2, a, o, t
    with nogil:
        u = _sm64_uniform(&st)
        s = _pick(&init_cum[0], S, u)
        for t in range(n_steps):
            u = _sm64_uniform(&st)
            a = _pick(&policy_cum[0], A, u)
            u = _sm64_uniform(&st)
            o = _pick(&obs_cum[a, s, 0], O, u)
            u = _sm64_uniform(&st)
            s2 = _pick(&trans_cum[a, s, 0], S, u)
            acts[t] = a
            obs[t] = o
            states[t] = s
            s = s2
    return acts_arr, obs_arr, states_arr


def em_accumulate(long long[::1] actions, long long[::1] observations,
                  double[:, :, ::1] trans, double[:, :, ::1] obs_em,
                  double[::1] init):
    cdef Py_ssize_t A = trans.shape[0]
    cdef Py_ssize_t S = trans.shape[1]
    cdef Py_ssize_t O = obs_em.shape[2]
    cdef Py_ssize_t n = actions.shape[0]
    alpha_arr = np.empty((n + 1, S))
    scale_arr = np.empty(n)
    tn_arr = np.zeros((A, S, S))
    on_arr = np.zeros((A, S, O))
    beta_arr = np.ones(S)
    tmp_arr = np.empty(S)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[::1] scale = scale_arr
    cdef double[:, :, ::1] tn = tn_arr
    cdef double[:, :, ::1] on = on_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] tmp = tmp_arr
    cdef double loglik = 0.0
    cdef double c, w, g, rowsum
    cdef Py_ssize_t t, i, j, a, o
    with nogil:
        for i in range(S):
            alpha[0, i] = init[i]
        for t in range(n):
            a = actions[t]
            o = observations[t]
            c = 0.0
            for j in range(S):
                w = 0.0
                for i in range(S):
                    w += alpha[t, i] * obs_em[a, i, o] * trans[a, i, j]
                tmp[j] = w
                c += w
            if c <= 0.0:
                c = 1e-300
            for j in range(S):
                alpha[t + 1, j] = tmp[j] / c
            scale[t] = c
            loglik += log(c)
        for t in range(n - 1, -1, -1):
            a = actions[t]
            o = observations[t]
            c = scale[t]
            for i in range(S):
                rowsum = 0.0
                for j in range(S):
                    g = alpha[t, i] * obs_em[a, i, o] * trans[a, i, j] \
                        * beta[j] / c
                    tn[a, i, j] += g
                    rowsum += g
                on[a, i, o] += rowsum
            for i in range(S):
                w = 0.0
                for j in range(S):
                    w += trans[a, i, j] * beta[j]
                tmp[i] = obs_em[a, i, o] * w / c
            for i in range(S):
                beta[i] = tmp[i]
    return tn_arr, on_arr, loglik


cdef Py_ssize_t _sample_dist(double* w, Py_ssize_t n, double u,
                             double* scratch) nogil:
    # Euclidean simplex projection (sorted cumulative rule), then sample.
    cdef Py_ssize_t i, j, k, rho
    cdef double css, t, theta, tot, acc, v
    for i in range(n):
        scratch[i] = w[i]
    # insertion sort, descending; n is small
    for i in range(1, n):
        v = scratch[i]
        j = i - 1
        while j >= 0 and scratch[j] < v:
            scratch[j + 1] = scratch[j]
            j -= 1
        scratch[j + 1] = v
    css = 0.0
    rho = -1
    theta = 0.0
    for k in range(n):
        css += scratch[k]
        t = (css - 1.0) / (k + 1)
        if scratch[k] - t > 0.0:
            rho = k
            theta = t
    tot = 0.0
    for i in range(n):
        v = w[i] - theta
        if v < 0.0:
            v = 0.0
        scratch[i] = v
        tot += v
    if tot <= 0.0:
        k = <Py_ssize_t>(u * n)
        if k > n - 1:
            k = n - 1
        return k
    acc = 0.0
    for k in range(n):
        acc += scratch[k] / tot
        if u < acc:
            return k
    return n - 1


def pouct_plan(double[::1] x0, double[:, :, ::1] like,
               double[:, :, :, ::1] upd, double[::1] norm_vec,
               int reward_kind, double[:, ::1] sa_reward,
               double[:, ::1] obs_reward, long long[::1] part_of,
               double[::1] part_reward, double gamma, double ucb_c,
               Py_ssize_t depth, Py_ssize_t n_sims, double explore_exp,
               bint log_bonus, unsigned long long seed):
    cdef Py_ssize_t A = like.shape[0]
    cdef Py_ssize_t O = like.shape[1]
    cdef Py_ssize_t r = like.shape[2]
    cdef Py_ssize_t n_parts = part_reward.shape[0]
    cdef Py_ssize_t max_nodes = n_sims + 2

    children_arr = np.full((max_nodes, A, O), -1, dtype=np.int64)
    counts_arr = np.zeros((max_nodes, A), dtype=np.int64)
    values_arr = np.zeros((max_nodes, A))
    node_n_arr = np.zeros(max_nodes, dtype=np.int64)
    cdef long long[:, :, ::1] children = children_arr
    cdef long long[:, ::1] counts = counts_arr
    cdef double[:, ::1] values = values_arr
    cdef long long[::1] node_n = node_n_arr

    # per-depth state buffers, plus path bookkeeping for the backup pass
    xs_arr = np.zeros((depth + 2, r))
    rews_arr = np.zeros(depth + 1)
    path_node_arr = np.zeros(depth + 1, dtype=np.int64)
    path_act_arr = np.zeros(depth + 1, dtype=np.int64)
    wbuf_arr = np.zeros(max(O, n_parts, r) + 1)
    sbuf_arr = np.zeros(max(O, n_parts, r) + 1)
    xtmp_arr = np.zeros(r)
    cdef double[:, ::1] xs = xs_arr
    cdef double[::1] rews = rews_arr
    cdef long long[::1] path_node = path_node_arr
    cdef long long[::1] path_act = path_act_arr
    cdef double[::1] wbuf = wbuf_arr
    cdef double[::1] sbuf = sbuf_arr
    cdef double[::1] xtmp = xtmp_arr

    cdef uint64_t st = seed
    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t sim, node, d, plen, a, o, i, j, k, cand, p, child, lvl
    cdef double u, u1, u2, rew, z, w, best, score, bonus_scale, ret, future
    cdef bint expanded

    with nogil:
        for sim in range(n_sims):
            for i in range(r):
                xs[0, i] = x0[i]
            node = 0
            d = 0
            plen = 0
            future = 0.0
            expanded = False
            while d < depth:
                # action selection: first unvisited, else UCB
                a = -1
                for cand in range(A):
                    if counts[node, cand] == 0:
                        a = cand
                        break
                if a < 0:
                    if log_bonus:
                        bonus_scale = sqrt(log(<double>node_n[node]))
                    else:
                        bonus_scale = pow(<double>node_n[node], explore_exp)
                    best = -1e300
                    a = 0
                    for cand in range(A):
                        score = values[node, cand] + ucb_c * bonus_scale \
                            / sqrt(<double>counts[node, cand])
                        if score > best:
                            best = score
                            a = cand
                u1 = _sm64_uniform(&st)
                u2 = _sm64_uniform(&st)
                rew = _gen_step(&xs[d, 0], a, u1, u2, like, upd, norm_vec,
                                reward_kind, sa_reward, obs_reward, part_of,
                                part_reward, &o, &wbuf[0], &sbuf[0],
                                &xtmp[0], &xs[d + 1, 0])
                path_node[plen] = node
                path_act[plen] = a
                rews[plen] = rew
                plen += 1
                child = children[node, a, o]
                if child < 0:
                    children[node, a, o] = n_nodes
                    child = n_nodes
                    n_nodes += 1
                    expanded = True
                node = child
                d += 1
                if expanded:
                    break
            if expanded and d < depth:
                # rollout with uniform random actions to the horizon
                future = 0.0
                z = 1.0
                for i in range(r):
                    xtmp[i] = xs[d, i]
                while d < depth:
                    u = _sm64_uniform(&st)
                    a = <Py_ssize_t>(u * A)
                    if a > A - 1:
                        a = A - 1
                    u1 = _sm64_uniform(&st)
                    u2 = _sm64_uniform(&st)
                    rew = _gen_step(&xtmp[0], a, u1, u2, like, upd, norm_vec,
                                    reward_kind, sa_reward, obs_reward,
                                    part_of, part_reward, &o, &wbuf[0],
                                    &sbuf[0], &xs[depth + 1, 0], &xtmp[0])
                    future += z * rew
                    z *= gamma
                    d += 1
            # backup
            ret = future
            for lvl in range(plen - 1, -1, -1):
                ret = rews[lvl] + gamma * ret
                node = path_node[lvl]
                a = path_act[lvl]
                counts[node, a] += 1
                node_n[node] += 1
                values[node, a] += (ret - values[node, a]) \
                    / <double>counts[node, a]

    best = values_arr[0, 0]
    cdef Py_ssize_t besta = 0
    for k in range(1, A):
        if values_arr[0, k] > best:
            best = values_arr[0, k]
            besta = k
    return besta, counts_arr[0].copy(), values_arr[0].copy()


cdef double _gen_step(double* x, Py_ssize_t a, double u1, double u2,
                      double[:, :, ::1] like, double[:, :, :, ::1] upd,
                      double[::1] norm_vec, int reward_kind,
                      double[:, ::1] sa_reward, double[:, ::1] obs_reward,
                      long long[::1] part_of, double[::1] part_reward,
                      Py_ssize_t* o_out, double* wbuf, double* sbuf,
                      double* xtmp, double* x_out) nogil:
    cdef Py_ssize_t O = like.shape[1]
    cdef Py_ssize_t r = like.shape[2]
    cdef Py_ssize_t n_parts = part_reward.shape[0]
    cdef Py_ssize_t i, j, o, p
    cdef double rew = 0.0
    cdef double w, z, tot
    if reward_kind == 0:
        for i in range(r):
            rew += x[i] * sa_reward[a, i]
    elif reward_kind == 2:
        for p in range(n_parts):
            wbuf[p] = 0.0
        for i in range(r):
            wbuf[part_of[i]] += x[i]
        p = _sample_dist(wbuf, n_parts, u1, sbuf)
        rew += part_reward[p]
        tot = 0.0
        for i in range(r):
            if part_of[i] == p:
                xtmp[i] = x[i]
                tot += x[i]
            else:
                xtmp[i] = 0.0
        if tot > 1e-300 or tot < -1e-300:
            for i in range(r):
                xtmp[i] = xtmp[i] / tot
            x = xtmp
        else:
            for i in range(r):
                xtmp[i] = x[i]
            x = xtmp
    for o in range(O):
        w = 0.0
        for i in range(r):
            w += x[i] * like[a, o, i]
        wbuf[o] = w
    o = _sample_dist(wbuf, O, u2, sbuf)
    o_out[0] = o
    if reward_kind != 0:
        rew += obs_reward[a, o]
    for j in range(r):
        w = 0.0
        for i in range(r):
            w += x[i] * upd[a, o, i, j]
        sbuf[j] = w
    z = 0.0
    for j in range(r):
        z += sbuf[j] * norm_vec[j]
    if z > 1e-300 or z < -1e-300:
        for j in range(r):
            x_out[j] = sbuf[j] / z
    else:
        for j in range(r):
            x_out[j] = sbuf[j]
    return rew
