"""Hankel matrices of action-observation string probabilities.

Rows index histories and columns index tests, both ordered
length-lexicographically. The entry for (h, t) is the probability of the
joint observation string of h followed by t, conditioned on its action
string. Exact matrices come from the model's matrix products; empirical
ones come from sliding-window frequency counts over a single trajectory
collected under a memoryless policy.
"""

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from spectral_pomdp.model import stationary_distribution

COVERAGE_WARN_LEVEL = 0.999

# densify count tables only while the code space stays small
_DENSE_TABLE_LIMIT = 4_194_304
_MAX_SEQUENCES = 2_000_000


class SequenceIndex:
    """Deterministic length-lexicographic indexing of (action, obs) strings.

    The empty string sits at position 0; within a length, strings are ordered
    lexicographically by (action, observation) pairs.
    """

    def __init__(self, num_actions, num_observations, max_len, sequences):
        self.num_actions = num_actions
        self.num_observations = num_observations
        self.max_len = max_len
        self.sequences = sequences
        self._pos = {seq: i for i, seq in enumerate(sequences)}

    def __len__(self):
        return len(self.sequences)

    def position(self, seq):
        """Row/column of a sequence, given as a tuple of (a, o) pairs."""
        return self._pos[tuple(seq)]


def enumerate_sequences(num_actions, num_observations, max_len, max_size=_MAX_SEQUENCES):
    """All strings of (action, observation) pairs up to max_len, length-lex order."""
    if max_len < 0:
        raise ValueError("max_len must be nonnegative")
    ao = num_actions * num_observations
    total = sum(ao**length for length in range(max_len + 1))
    if total > max_size:
        raise ValueError(
            "too many sequences: %d of alphabet %d up to length %d exceed the cap %d"
            % (total, ao, max_len, max_size)
        )
    pairs = [(a, o) for a in range(num_actions) for o in range(num_observations)]
    seqs = [()]
    for length in range(1, max_len + 1):
        seqs.extend(product(pairs, repeat=length))
    return SequenceIndex(num_actions, num_observations, max_len, tuple(seqs))


@dataclass
class HankelEstimate:
    """History-by-test matrix of conditional observation-string probabilities.

    For empirical estimates, numerator holds the per-entry window counts and
    denominator maps each action string to its window count; entries whose
    action string never occurred are 0 and tallied in
    zero_denominator_entries.
    """

    matrix: np.ndarray
    row_index: SequenceIndex
    col_index: SequenceIndex
    source: str
    coverage: float = 1.0
    zero_denominator_entries: int = 0
    numerator: np.ndarray = None
    denominator: dict = None


class _CountTable:
    """Window counts for one window length, dense or sparse by code space."""

    def __init__(self, codes, space):
        if space <= _DENSE_TABLE_LIMIT:
            self._dense = np.bincount(codes, minlength=space)
            self._keys = None
        else:
            self._dense = None
            self._keys, self._counts = np.unique(codes, return_counts=True)

    def get(self, queries):
        queries = np.asarray(queries, dtype=np.int64)
        if self._dense is not None:
            return self._dense[queries]
        slots = np.searchsorted(self._keys, queries)
        slots = np.minimum(slots, len(self._keys) - 1)
        hit = self._keys[slots] == queries if len(self._keys) else np.zeros(queries.shape, bool)
        out = np.where(hit, self._counts[slots], 0)
        return out


def _window_codes(symbols, base, length):
    m = len(symbols) - length + 1
    codes = np.zeros(m, dtype=np.int64)
    for k in range(length):
        codes = codes * base + symbols[k : k + m]
    return codes


def _sequence_codes(index):
    """Pair codes, action codes and lengths for every sequence of an index."""
    obs_base = index.num_observations
    pair_base = index.num_actions * obs_base
    pcodes = np.zeros(len(index), dtype=np.int64)
    acodes = np.zeros(len(index), dtype=np.int64)
    lens = np.zeros(len(index), dtype=np.int64)
    for i, seq in enumerate(index.sequences):
        pc = ac = 0
        for a, o in seq:
            pc = pc * pair_base + a * obs_base + o
            ac = ac * index.num_actions + a
        pcodes[i], acodes[i], lens[i] = pc, ac, len(seq)
    return pcodes, acodes, lens


def estimate_hankel(traj, hist_len, test_len, num_actions=None, num_observations=None):
    """Count-based Hankel estimate from one trajectory.

    Every overlapping window of the trajectory contributes one count; the
    entry for (h, t) is the number of windows spelling h+t divided by the
    number of windows whose action string matches. The trajectory must come
    from a memoryless policy for the ratios to estimate the conditional
    string probabilities.
    """
    acts = np.asarray(traj.actions, dtype=np.int64)
    obs = np.asarray(traj.observations, dtype=np.int64)
    n = len(acts)
    if n == 0:
        raise ValueError("empty trajectory")
    total_len = hist_len + test_len
    if n <= total_len:
        raise ValueError("trajectory too short for windows of length %d" % total_len)
    if num_actions is None:
        num_actions = (
            len(traj.action_labels) if traj.action_labels is not None else int(acts.max()) + 1
        )
    if num_observations is None:
        num_observations = (
            len(traj.observation_labels)
            if traj.observation_labels is not None
            else int(obs.max()) + 1
        )

    row_index = enumerate_sequences(num_actions, num_observations, hist_len)
    col_index = enumerate_sequences(num_actions, num_observations, test_len)
    pair_base = num_actions * num_observations
    pair_symbols = acts * num_observations + obs

    num_tables = [None] * (total_len + 1)
    den_tables = [None] * (total_len + 1)
    for length in range(1, total_len + 1):
        num_tables[length] = _CountTable(
            _window_codes(pair_symbols, pair_base, length), pair_base**length
        )
        den_tables[length] = _CountTable(
            _window_codes(acts, num_actions, length), num_actions**length
        )

    rp, ra, rlen = _sequence_codes(row_index)
    cp, ca, clen = _sequence_codes(col_index)
    shape = (len(row_index), len(col_index))
    num = np.zeros(shape, dtype=np.int64)
    den = np.zeros(shape, dtype=np.int64)
    for lh in range(hist_len + 1):
        for lt in range(test_len + 1):
            ri = np.where(rlen == lh)[0]
            ci = np.where(clen == lt)[0]
            length = lh + lt
            if length == 0:
                num[0, 0] = den[0, 0] = n + 1
                continue
            qp = rp[ri][:, None] * pair_base**lt + cp[ci][None, :]
            qa = ra[ri][:, None] * num_actions**lt + ca[ci][None, :]
            block = np.ix_(ri, ci)
            num[block] = num_tables[length].get(qp.ravel()).reshape(qp.shape)
            den[block] = den_tables[length].get(qa.ravel()).reshape(qa.shape)

    covered = den > 0
    matrix = np.zeros(shape)
    matrix[covered] = num[covered] / den[covered]
    zero_entries = int((~covered).sum())
    coverage = float(covered.mean())
    if coverage < COVERAGE_WARN_LEVEL:
        warnings.warn(
            "hankel coverage %.3f: %d entries had an unobserved action string"
            % (coverage, zero_entries),
            stacklevel=2,
        )

    den_dict = {(): n + 1}
    for length in range(1, total_len + 1):
        strings = list(product(range(num_actions), repeat=length))
        codes = np.array([_encode(s, num_actions) for s in strings], dtype=np.int64)
        counts = den_tables[length].get(codes)
        den_dict.update(zip(strings, counts.tolist()))

    return HankelEstimate(
        matrix=matrix,
        row_index=row_index,
        col_index=col_index,
        source="empirical",
        coverage=coverage,
        zero_denominator_entries=zero_entries,
        numerator=num,
        denominator=den_dict,
    )


def _encode(symbols, base):
    code = 0
    for s in symbols:
        code = code * base + s
    return code


def exact_hankel(model, hist_len, test_len, initial=None):
    """Closed-form Hankel from the model's matrix products.

    Row for a history h is initial . prod_k diag(obs) . trans, the column for
    a test is the matching product applied to the all-ones vector, and the
    entry is their inner product. The default initial distribution is the
    stationary distribution of the uniform-policy chain, which is what the
    sliding-window estimator converges to.
    """
    if initial is None:
        initial = stationary_distribution(model)
    initial = np.asarray(initial, float)
    ops = {
        (a, o): model.obs[a, o][:, None] * model.trans[a]
        for a in range(model.num_actions)
        for o in range(model.num_obs)
    }
    row_index = enumerate_sequences(model.num_actions, model.num_obs, hist_len)
    col_index = enumerate_sequences(model.num_actions, model.num_obs, test_len)

    forward = np.zeros((len(row_index), model.num_states))
    fcache = {(): initial}
    for i, h in enumerate(row_index.sequences):
        if h not in fcache:
            fcache[h] = fcache[h[:-1]] @ ops[h[-1]]
        forward[i] = fcache[h]
    backward = np.zeros((model.num_states, len(col_index)))
    bcache = {(): np.ones(model.num_states)}
    for j, t in enumerate(col_index.sequences):
        if t not in bcache:
            bcache[t] = ops[t[0]] @ bcache[t[1:]]
        backward[:, j] = bcache[t]

    return HankelEstimate(
        matrix=forward @ backward,
        row_index=row_index,
        col_index=col_index,
        source="exact",
    )


def history_slices(est, a, o):
    """Row indices of histories ending in (a, o) and of their prefixes.

    Returns (rows_ao, rows_prefix) with matching order: appending (a, o) to
    the k-th prefix gives the k-th history of rows_ao. Prefixes stop one
    short of the maximum history length so the extended string stays inside
    the row index.
    """
    idx = est.row_index
    prefix_rows = []
    full_rows = []
    for seq in idx.sequences:
        if len(seq) <= idx.max_len - 1:
            prefix_rows.append(idx.position(seq))
            full_rows.append(idx.position(seq + ((a, o),)))
    return np.asarray(full_rows), np.asarray(prefix_rows)


def save_hankel(est, path):
    """Persist matrix and index metadata; counts are not kept."""
    np.savez_compressed(
        path,
        matrix=est.matrix,
        source=est.source,
        coverage=est.coverage,
        zero_denominator_entries=est.zero_denominator_entries,
        alphabet=np.array(
            [
                est.row_index.num_actions,
                est.row_index.num_observations,
                est.row_index.max_len,
                est.col_index.max_len,
            ],
            dtype=np.int64,
        ),
    )


def load_hankel(path):
    data = np.load(path)
    num_actions, num_observations, hist_len, test_len = (int(x) for x in data["alphabet"])
    return HankelEstimate(
        matrix=data["matrix"],
        row_index=enumerate_sequences(num_actions, num_observations, hist_len),
        col_index=enumerate_sequences(num_actions, num_observations, test_len),
        source=str(data["source"]),
        coverage=float(data["coverage"]),
        zero_denominator_entries=int(data["zero_denominator_entries"]),
    )
