"""Linear predictive-state representations extracted from Hankel factorizations.

A linear PSR is a start vector m0, one square update matrix per
(action, observation) pair, and a final vector m_inf; the likelihood of an
observation string given its action string is m0 . prod(updates) . m_inf.
The extraction follows the pseudoinverse construction on a rank-truncated
Hankel factorization.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from spectral_pomdp.hankel import history_slices

_PINV_CUTOFF = 1e-10


@dataclass
class RankFactorization:
    """Truncated SVD of a Hankel estimate, left factor carrying the scale."""

    left: np.ndarray
    right: np.ndarray
    singular_values: np.ndarray
    rank: int
    rcond: float


@dataclass
class LinearPsr:
    m0: np.ndarray
    updates: np.ndarray
    m_inf: np.ndarray
    num_actions: int
    num_observations: int
    factorization: RankFactorization = None


def haar_orthogonal(dim, rng):
    """Haar-distributed orthogonal matrix via sign-fixed QR."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def truncated_svd(est, rcond_threshold, max_components, dense_rotation=True, seed=0):
    """Rank-truncate a Hankel estimate at an absolute singular-value threshold.

    Keeps the components whose singular value is at least rcond_threshold,
    capped at max_components, and returns left = U.Sigma and right = V'.
    With dense_rotation the factors are spun by a random orthogonal matrix,
    which later lets the recovery stage skip its own block rotation.
    """
    if not 0.0 < rcond_threshold < 1.0:
        raise ValueError("rcond_threshold must lie in (0, 1)")
    if max_components < 1:
        raise ValueError("max_components must be positive")
    u, s, vt = np.linalg.svd(est.matrix, full_matrices=False)
    if s[0] <= 0.0:
        raise ValueError("cannot factor an all-zero matrix")
    rank = int(np.sum(s[:max_components] >= rcond_threshold))
    if rank == 0:
        raise ValueError(
            "rank 0: largest singular value %.3g sits below the threshold %.3g"
            % (s[0], rcond_threshold)
        )
    left = u[:, :rank] * s[:rank]
    right = vt[:rank]
    if dense_rotation:
        rot = haar_orthogonal(rank, np.random.default_rng(seed))
        left = left @ rot
        right = rot.T @ right
    return RankFactorization(
        left=left,
        right=right,
        singular_values=s,
        rank=rank,
        rcond=float(s[rank - 1] / s[0]),
    )


def _test_slices(est, a, o):
    """Column analog of history_slices: tests starting with (a, o)."""
    idx = est.col_index
    prefix_cols = []
    full_cols = []
    for seq in idx.sequences:
        if len(seq) <= idx.max_len - 1:
            prefix_cols.append(idx.position(seq))
            full_cols.append(idx.position(((a, o),) + seq))
    return np.asarray(full_cols), np.asarray(prefix_cols)


def extract_psr(est, fact):
    """Pull m0, per-pair update matrices and m_inf out of a factorization.

    Updates come from the pseudoinverse of the factor restricted to history
    prefixes; if those rows cannot span the factor the extraction falls back
    to test-side slices against the full left factor and says so.
    """
    num_actions = est.row_index.num_actions
    num_obs = est.row_index.num_observations
    rank = fact.rank
    pinv_left = np.linalg.pinv(fact.left, rcond=_PINV_CUTOFF)
    pinv_right = np.linalg.pinv(fact.right, rcond=_PINV_CUTOFF)

    _, prefix_rows = history_slices(est, 0, 0)
    short = fact.left[prefix_rows]
    s_short = np.linalg.svd(short, compute_uv=False)
    deficient = len(s_short) < rank or s_short[-1] <= _PINV_CUTOFF * s_short[0]

    updates = np.zeros((num_actions, num_obs, rank, rank))
    if deficient:
        warnings.warn(
            "prefix rows span only %d of %d factor directions; "
            "extracting updates from test-side slices" % (int(np.sum(s_short > _PINV_CUTOFF * s_short[0])), rank),
            stacklevel=2,
        )
        for a in range(num_actions):
            for o in range(num_obs):
                cols_ao, prefix_cols = _test_slices(est, a, o)
                pinv_short_right = np.linalg.pinv(fact.right[:, prefix_cols], rcond=_PINV_CUTOFF)
                updates[a, o] = pinv_left @ est.matrix[:, cols_ao] @ pinv_short_right
    else:
        pinv_short = np.linalg.pinv(short, rcond=_PINV_CUTOFF)
        for a in range(num_actions):
            for o in range(num_obs):
                rows_ao, _ = history_slices(est, a, o)
                updates[a, o] = pinv_short @ est.matrix[rows_ao] @ pinv_right

    m0 = est.matrix[0, :] @ pinv_right
    m_inf = pinv_left @ est.matrix[:, 0]
    return LinearPsr(
        m0=m0,
        updates=updates,
        m_inf=m_inf,
        num_actions=num_actions,
        num_observations=num_obs,
        factorization=fact,
    )


def psr_predict(psr, string):
    """Likelihood of an observation string given its action string.

    Returns (value, raw): the raw inner product and the same number clamped
    to [0, 1]; empirical PSRs can step slightly outside.
    """
    state = psr.m0
    for a, o in string:
        state = state @ psr.updates[a, o]
    raw = float(state @ psr.m_inf)
    return float(min(max(raw, 0.0), 1.0)), raw


def psr_filter(psr, state, a, o):
    """One conditional update. Returns (new state, step likelihood).

    A nonpositive normalizer means the pair was impossible under the model
    and is signalled as (None, 0.0), matching the belief filter.
    """
    weighted = state @ psr.updates[a, o]
    lik = float(weighted @ psr.m_inf)
    if lik <= 0.0:
        return None, 0.0
    return weighted / lik, lik


def psr_to_json(psr):
    return {
        "m0": psr.m0.tolist(),
        "updates": psr.updates.tolist(),
        "m_inf": psr.m_inf.tolist(),
        "num_actions": psr.num_actions,
        "num_observations": psr.num_observations,
    }


def psr_from_json(data):
    return LinearPsr(
        m0=np.asarray(data["m0"], float),
        updates=np.asarray(data["updates"], float),
        m_inf=np.asarray(data["m_inf"], float),
        num_actions=int(data["num_actions"]),
        num_observations=int(data["num_observations"]),
    )
