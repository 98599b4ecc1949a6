"""Turn a linear PSR into an explicit model by joint diagonalization.

The update matrices of a PSR extracted from an exact Hankel matrix are
similar to the true observation-weighted transitions. Actions whose
marginal update is full rank admit a shared eigenbasis, and states that
emit identically under every such action can only be pinned down as a
block. This module finds that basis, groups the aliased states into a
partition, fixes the residual scaling so the belief is a probability
vector, and splits each recovered product into an observation diagonal
and a transition row.
"""

import dataclasses

import numpy as np
import scipy.optimize

from spectral_pomdp.psr import haar_orthogonal

_ZERO_ROW = 1e-12
_EIG_IMAG = 1e-6
_EIG_COND = 1e8
_ENTRY_FLOOR = 1e-10
_RETRIES = 20


class RecoveryError(RuntimeError):
    """Raised when no identifiable explicit model can be produced."""


@dataclasses.dataclass
class RecoveryConfig:
    sigma_min: float
    tau_obs: float
    dense_variant: bool = True
    seed: int = 0


@dataclasses.dataclass
class RecoveredModel:
    """Explicit model identified up to the observability partition.

    products[a, o] is the recovered diag(O^{ao}) T^a, transitions and
    obs_diagonals are its split, transform is the similarity applied to
    the PSR updates, and belief is the recovered initial distribution.
    """

    partition: tuple
    belief: np.ndarray
    products: np.ndarray
    transitions: np.ndarray
    obs_diagonals: np.ndarray
    full_rank_actions: tuple
    projected: bool
    transform: np.ndarray
    diagnostics: dict


def marginalize_actions(psr):
    """Sum updates over observations, giving one marginal matrix per action."""
    return psr.updates.sum(axis=1)


def detect_full_rank(marginals, sigma_min):
    """Indices of actions whose marginal update clears the rank threshold."""
    marginals = np.asarray(marginals, float)
    full = []
    for a in range(marginals.shape[0]):
        s = np.linalg.svd(marginals[a], compute_uv=False)
        if s[-1] >= sigma_min:
            full.append(a)
    if not full:
        raise RecoveryError(
            "no action marginal is full rank at sigma_min=%g, "
            "cannot recover an explicit model" % sigma_min
        )
    return full


def check_convex_combination_rank(t01, p):
    """Whether p*T + (1-p)*I is nonsingular for a deterministic 0/1 matrix."""
    t01 = np.asarray(t01, float)
    if t01.ndim != 2 or t01.shape[0] != t01.shape[1]:
        raise ValueError("transition matrix must be square")
    if not (np.all((t01 == 0.0) | (t01 == 1.0)) and np.all(t01.sum(axis=1) == 1.0)):
        raise ValueError("each row must contain exactly one unit entry")
    n = t01.shape[0]
    det = np.linalg.det(p * t01 + (1.0 - p) * np.eye(n))
    return abs(det) > 1e-9


def joint_diagonalize(psr, marginals, full_rank_actions, seed=0):
    """Shared eigenbasis of the normalized updates of the full rank actions.

    Draws weights uniformly from the unit sphere, eigendecomposes the
    weighted combination of C^{ao} = M^{ao} (M^a)^-1 and keeps the basis
    when the spectrum is real and well conditioned, resampling otherwise.
    Returns (eigenvector matrix, eigenvalues of the accepted draw, the
    C^{ao} matrices keyed by (a, o), worst off-diagonal residual).
    """
    rng = np.random.default_rng(seed)
    sims = {}
    for a in full_rank_actions:
        inv_marginal = np.linalg.inv(marginals[a])
        for o in range(psr.num_observations):
            sims[(a, o)] = psr.updates[a, o] @ inv_marginal
    keys = sorted(sims)
    reason = "no attempt made"
    for _ in range(1 + _RETRIES):
        w = rng.standard_normal(len(keys))
        w /= np.linalg.norm(w)
        combo = sum(wi * sims[k] for wi, k in zip(w, keys))
        lam, vecs = np.linalg.eig(combo)
        scale = max(np.abs(lam).max(), np.finfo(float).tiny)
        if np.abs(lam.imag).max() > _EIG_IMAG * scale:
            reason = "complex eigenvalues"
            continue
        cond = np.linalg.cond(vecs.real)
        if not np.isfinite(cond) or cond > _EIG_COND:
            reason = "near-defective eigenvectors (condition %.3g)" % cond
            continue
        vecs = vecs.real
        inv = np.linalg.inv(vecs)
        offdiag = 0.0
        for k in keys:
            d = inv @ sims[k] @ vecs
            offdiag = max(offdiag, np.abs(d - np.diag(np.diag(d))).max())
        return vecs, lam.real, sims, offdiag
    raise RecoveryError(
        "joint diagonalization failed after %d weight draws: %s"
        % (1 + _RETRIES, reason)
    )


def detect_partitions(diagonals, tau_obs):
    """Group states whose stacked diagonal signatures agree within tau_obs.

    diagonals has one row per (action, observation) pair and one column
    per state. Merging is transitive, so near-chains collapse into one
    block even when their endpoints differ by more than the tolerance.
    """
    diagonals = np.asarray(diagonals, float)
    r = diagonals.shape[1]
    parent = list(range(r))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(r):
        for j in range(i + 1, r):
            if np.abs(diagonals[:, i] - diagonals[:, j]).sum() <= tau_obs:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    blocks = {}
    for i in range(r):
        blocks.setdefault(find(i), []).append(i)
    return tuple(tuple(sorted(b)) for b in sorted(blocks.values(), key=min))


def final_transform(pvecs, m_inf, partition, seed=0, dense_variant=True):
    """Scale (and in the block variant, rotate) the eigenbasis.

    Produces P with P^-1 m_inf = 1 entrywise. The dense variant keeps the
    eigenbasis as is because a dense rotation was already applied to the
    factorization; the block variant spins each partition block by a Haar
    special-orthogonal matrix. Resamples when some entry of the scaling
    vector falls below 1e-10, since those entries are divided by.
    """
    pvecs = np.asarray(pvecs, float)
    m_inf = np.asarray(m_inf, float)
    rng = np.random.default_rng(seed)
    base = np.linalg.solve(pvecs, m_inf)
    for _ in range(1 + _RETRIES):
        if dense_variant:
            rot = np.eye(pvecs.shape[0])
        else:
            rot = np.zeros_like(pvecs)
            for block in partition:
                idx = np.asarray(block)
                q = haar_orthogonal(len(block), rng)
                if np.linalg.det(q) < 0:
                    q[:, 0] = -q[:, 0]
                rot[np.ix_(idx, idx)] = q
        v = rot.T @ base
        if np.abs(v).min() >= _ENTRY_FLOOR:
            return (pvecs @ rot) * v
        if dense_variant:
            break
    raise RecoveryError(
        "terminal vector has an entry below %g after %d rotation draws; "
        "partition %s" % (_ENTRY_FLOOR, 1 + _RETRIES, (partition,))
    )


def recover(psr, config):
    """Run the full pipeline from a linear PSR to a RecoveredModel."""
    marginals = marginalize_actions(psr)
    full = detect_full_rank(marginals, config.sigma_min)
    rng = np.random.default_rng(config.seed)
    pvecs, lam, sims, offdiag = joint_diagonalize(psr, marginals, full, seed=rng)
    inv = np.linalg.inv(pvecs)
    signatures = np.vstack(
        [np.diag(inv @ sims[k] @ pvecs) for k in sorted(sims)]
    )
    partition = detect_partitions(signatures, config.tau_obs)
    transform = final_transform(
        pvecs, psr.m_inf, partition, seed=rng, dense_variant=config.dense_variant
    )
    inv_t = np.linalg.inv(transform)
    belief = psr.m0 @ transform
    products = np.einsum("ij,aojk,kl->aoil", inv_t, psr.updates, transform)
    obs_diagonals = products.sum(axis=3)
    obs_diagonals[np.abs(obs_diagonals) <= _ZERO_ROW] = 0.0
    transitions = products.sum(axis=1)
    for a in range(transitions.shape[0]):
        row_sums = transitions[a].sum(axis=1)
        keep = np.abs(row_sums) > _ZERO_ROW
        transitions[a][keep] /= row_sums[keep, None]
    return RecoveredModel(
        partition=partition,
        belief=belief,
        products=products,
        transitions=transitions,
        obs_diagonals=obs_diagonals,
        full_rank_actions=tuple(full),
        projected=False,
        transform=transform,
        diagnostics={
            "offdiag": float(offdiag),
            "eigenvalues": np.asarray(lam).tolist(),
            "num_signature_rows": int(signatures.shape[0]),
        },
    )


def recovered_predict(model, string):
    """Probability the recovered model assigns to an action-observation string."""
    v = model.belief
    for a, o in string:
        v = v @ model.products[a, o]
    return float(v.sum())


def _simplex_row(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(v) + 1)
    feasible = u - (css - 1.0) / k > 0
    rho = k[feasible][-1]
    theta = (css[feasible][-1] - 1.0) / rho
    return np.maximum(v - theta, 0.0)


def project_probabilities(model):
    """Euclidean-project the split parameters onto probability simplices.

    Transition rows and per-state emission rows are projected directly.
    The belief is handled per partition block so that the identified
    block masses are preserved: negatives are clipped and each block is
    rescaled to its original (normalized) mass, falling back to uniform
    within a block that lost all its mass. Products are rebuilt from the
    projected parts. Returns a new model and leaves the input untouched.
    """
    trans = np.asarray(model.transitions, float).copy()
    for a in range(trans.shape[0]):
        for i in range(trans.shape[1]):
            trans[a, i] = _simplex_row(trans[a, i])
    diags = np.asarray(model.obs_diagonals, float).copy()
    for a in range(diags.shape[0]):
        emis = diags[a].T.copy()
        for i in range(emis.shape[0]):
            emis[i] = _simplex_row(emis[i])
        diags[a] = emis.T
    belief = np.asarray(model.belief, float).copy()
    targets = np.array([max(belief[list(b)].sum(), 0.0) for b in model.partition])
    if targets.sum() <= 0.0:
        targets = np.array([len(b) for b in model.partition], float)
    targets /= targets.sum()
    for target, block in zip(targets, model.partition):
        idx = list(block)
        w = np.clip(belief[idx], 0.0, None)
        if w.sum() <= 0.0:
            w = np.ones(len(idx))
        belief[idx] = w / w.sum() * target
    products = np.einsum("aos,ast->aost", diags, trans)
    return dataclasses.replace(
        model,
        belief=belief,
        products=products,
        transitions=trans,
        obs_diagonals=diags,
        projected=True,
    )


def _block_weights(masses):
    w = np.clip(np.asarray(masses, float), 0.0, None)
    if w.sum() <= 0.0:
        return np.full(len(w), 1.0 / len(w))
    return w / w.sum()


def _aggregate_row(trans_row_mix, blocks):
    return np.array([trans_row_mix[list(b)].sum() for b in blocks])


def align_to_ground_truth(model, truth, tau_obs):
    """Match recovered states to true states and score the errors.

    Returns (permutation, obs_L1_error, partition_transition_L1_error).
    permutation[i] is the true state matched to recovered state i. The
    observation error is the worst per-state emission row L1 distance.
    The transition error compares rows aggregated to the observability
    partition of the truth, mixing source states by each side's own
    within-block mass, since only those aggregates are identified. When
    the recovered rank differs from the true state count the matching is
    attempted at the partition level instead and permutation is None.
    """
    from spectral_pomdp.model import stationary_distribution

    rec_d = np.asarray(model.obs_diagonals, float)
    num_a, num_o, r = rec_d.shape
    s = truth.num_states
    true_sig = truth.obs.reshape(num_a * num_o, s)
    true_part = detect_partitions(true_sig, tau_obs)
    b_true = stationary_distribution(truth)
    if r != s:
        rec_part = model.partition
        if len(rec_part) != len(true_part):
            return None, float("nan"), float("nan")
        rec_sig = rec_d.reshape(num_a * num_o, r)
        rec_block_sig = np.stack(
            [rec_sig[:, list(b)].mean(axis=1) for b in rec_part], axis=1
        )
        true_block_sig = np.stack(
            [true_sig[:, list(b)].mean(axis=1) for b in true_part], axis=1
        )
        cost = np.abs(
            rec_block_sig[:, :, None] - true_block_sig[:, None, :]
        ).sum(axis=0)
        rows, cols = scipy.optimize.linear_sum_assignment(cost)
        order = cols[np.argsort(rows)]
        obs_err = 0.0
        trans_err = 0.0
        matched_true = [true_part[order[k]] for k in range(len(rec_part))]
        for a in range(num_a):
            for k, block in enumerate(rec_part):
                sig_rec = rec_block_sig[:, k].reshape(num_a, num_o)[a]
                sig_true = true_block_sig[:, order[k]].reshape(num_a, num_o)[a]
                obs_err = max(obs_err, np.abs(sig_rec - sig_true).sum())
                w_rec = _block_weights(model.belief[list(block)])
                w_true = _block_weights(b_true[list(matched_true[k])])
                mix_rec = w_rec @ np.asarray(model.transitions[a])[list(block)]
                mix_true = w_true @ truth.trans[a][list(matched_true[k])]
                agg_rec = _aggregate_row(mix_rec, rec_part)[np.argsort(order)]
                agg_true = _aggregate_row(mix_true, true_part)
                trans_err = max(trans_err, np.abs(agg_rec - agg_true).sum())
        return None, float(obs_err), float(trans_err)
    rec_sig = rec_d.reshape(num_a * num_o, r)
    cost = np.abs(rec_sig[:, :, None] - true_sig[:, None, :]).sum(axis=0)
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    perm = cols[np.argsort(rows)]
    inv_order = np.argsort(perm)
    rec_emis = np.transpose(rec_d, (0, 2, 1))[:, inv_order, :]
    true_emis = np.transpose(truth.obs, (0, 2, 1))
    obs_err = float(np.abs(rec_emis - true_emis).sum(axis=2).max())
    trans_aligned = np.asarray(model.transitions, float)[:, inv_order][:, :, inv_order]
    belief_aligned = np.asarray(model.belief, float)[inv_order]
    trans_err = 0.0
    for a in range(num_a):
        for block in true_part:
            idx = list(block)
            w_rec = _block_weights(belief_aligned[idx])
            w_true = _block_weights(b_true[idx])
            mix_rec = w_rec @ trans_aligned[a][idx]
            mix_true = w_true @ truth.trans[a][idx]
            agg_rec = _aggregate_row(mix_rec, true_part)
            agg_true = _aggregate_row(mix_true, true_part)
            trans_err = max(trans_err, np.abs(agg_rec - agg_true).sum())
    return perm, obs_err, float(trans_err)


def recovered_to_json(model):
    return {
        "partition": [list(b) for b in model.partition],
        "belief": np.asarray(model.belief).tolist(),
        "products": np.asarray(model.products).tolist(),
        "transitions": np.asarray(model.transitions).tolist(),
        "obs_diagonals": np.asarray(model.obs_diagonals).tolist(),
        "full_rank_actions": list(model.full_rank_actions),
        "projected": bool(model.projected),
        "transform": np.asarray(model.transform).tolist(),
        "diagnostics": model.diagnostics,
    }


def recovered_from_json(data):
    return RecoveredModel(
        partition=tuple(tuple(b) for b in data["partition"]),
        belief=np.asarray(data["belief"], float),
        products=np.asarray(data["products"], float),
        transitions=np.asarray(data["transitions"], float),
        obs_diagonals=np.asarray(data["obs_diagonals"], float),
        full_rank_actions=tuple(data["full_rank_actions"]),
        projected=bool(data["projected"]),
        transform=np.asarray(data["transform"], float),
        diagnostics=dict(data["diagnostics"]),
    )
