import numpy as np
import pytest

from spectral_pomdp.domains import tiger
from spectral_pomdp.hankel import estimate_hankel, exact_hankel
from spectral_pomdp.model import DiscretePomdp, belief_update, simulate, stationary_distribution
from spectral_pomdp.psr import (
    extract_psr,
    psr_filter,
    psr_from_json,
    psr_predict,
    psr_to_json,
    truncated_svd,
)

from helpers import all_strings, get_domain, string_probability


def biased_coin():
    return DiscretePomdp(
        actions=("flip",),
        observations=("heads", "tails"),
        trans=np.ones((1, 1, 1)),
        obs=np.array([[[0.7], [0.3]]]),
        init=np.ones(1),
    )


def exact_psr(model, lh, lt, dense_rotation=True, seed=0):
    est = exact_hankel(model, lh, lt)
    fact = truncated_svd(est, 1e-6, 20, dense_rotation=dense_rotation, seed=seed)
    return est, fact, extract_psr(est, fact)


class TestTruncatedSvd:
    def test_rank_one_outer_product(self):
        est = exact_hankel(biased_coin(), 1, 1)
        fact = truncated_svd(est, 0.1, 20)
        assert fact.rank == 1

    def test_absolute_threshold_on_exact_tiger(self):
        # singular values are near 3.468 and 0.424, so the 0.34 cut keeps both
        # while a relative read of the same number would keep only one
        est = exact_hankel(tiger(), 2, 1)
        assert truncated_svd(est, 0.34, 20).rank == 2
        assert truncated_svd(est, 0.5, 20).rank == 1

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_empirical_tiger_rank(self, seed):
        traj = simulate(tiger(), np.full(3, 1 / 3), 1_000_000, seed)
        est = estimate_hankel(traj, 2, 1)
        fact = truncated_svd(est, 0.34, 20)
        assert fact.rank == 2

    def test_exact_sfr3_rank(self):
        est = exact_hankel(get_domain("sfr3"), 3, 2)
        fact = truncated_svd(est, 0.1, 20)
        assert fact.rank == 3
        assert truncated_svd(est, 0.1, 2).rank == 2

    def test_factor_reconstructs_truncation(self):
        est = exact_hankel(get_domain("sfr3"), 3, 2)
        for dense in (False, True):
            fact = truncated_svd(est, 0.1, 20, dense_rotation=dense, seed=5)
            u, s, vt = np.linalg.svd(est.matrix, full_matrices=False)
            approx = (u[:, :3] * s[:3]) @ vt[:3]
            assert np.abs(fact.left @ fact.right - approx).max() < 1e-10

    def test_dense_rotation_changes_factors_only(self):
        est = exact_hankel(tiger(), 2, 1)
        plain = truncated_svd(est, 0.34, 20, dense_rotation=False)
        spun = truncated_svd(est, 0.34, 20, dense_rotation=True, seed=3)
        u, s, _ = np.linalg.svd(est.matrix, full_matrices=False)
        np.testing.assert_allclose(plain.left, u[:, :2] * s[:2], atol=1e-12)
        assert np.abs(spun.left - plain.left).max() > 1e-3
        r = np.linalg.solve(plain.left.T @ plain.left, plain.left.T @ spun.left)
        np.testing.assert_allclose(r @ r.T, np.eye(2), atol=1e-10)

    def test_rcond_and_svals_recorded(self):
        est = exact_hankel(tiger(), 2, 1)
        fact = truncated_svd(est, 0.34, 20)
        assert fact.rcond == pytest.approx(0.42435 / 3.46772, abs=1e-4)
        assert len(fact.singular_values) == min(est.matrix.shape)

    def test_zero_matrix_rejected(self):
        est = exact_hankel(biased_coin(), 1, 1)
        est.matrix[:] = 0.0
        with pytest.raises(ValueError, match="zero"):
            truncated_svd(est, 0.1, 20)

    def test_nothing_above_threshold_rejected(self):
        est = exact_hankel(biased_coin(), 1, 1)
        est.matrix = est.matrix * 1e-6
        with pytest.raises(ValueError, match="rank"):
            truncated_svd(est, 0.5, 20)

    def test_threshold_outside_unit_interval_rejected(self):
        est = exact_hankel(biased_coin(), 1, 1)
        with pytest.raises(ValueError, match="threshold"):
            truncated_svd(est, 1.5, 20)


class TestExtractPsr:
    def test_one_state_scalars(self):
        model = biased_coin()
        _, fact, psr = exact_psr(model, 1, 1)
        assert fact.rank == 1
        assert psr.updates.shape == (1, 2, 1, 1)
        assert psr.updates[0, 0, 0, 0] * psr.m0[0] * psr.m_inf[0] == pytest.approx(0.7, abs=1e-12)
        assert psr.updates[0, 1, 0, 0] * psr.m0[0] * psr.m_inf[0] == pytest.approx(0.3, abs=1e-12)
        assert psr.m0 @ psr.m_inf == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("name,lengths", [("tiger", (2, 1)), ("sfr3", (3, 2))])
    @pytest.mark.parametrize("dense", [False, True])
    def test_exact_string_likelihoods(self, name, lengths, dense):
        model = get_domain(name)
        b = stationary_distribution(model)
        _, _, psr = exact_psr(model, *lengths, dense_rotation=dense, seed=11)
        for string in all_strings(model.num_actions, model.num_obs, 4):
            value, _ = psr_predict(psr, string)
            want = string_probability(model, b, string)
            assert abs(value - want) < 1e-10

    def test_empty_string_prediction(self):
        _, _, psr = exact_psr(tiger(), 2, 1)
        value, raw = psr_predict(psr, ())
        assert value == pytest.approx(1.0, abs=1e-12)
        assert raw == pytest.approx(1.0, abs=1e-12)

    def test_tiger_listen_prediction(self):
        _, _, psr = exact_psr(tiger(), 2, 1)
        value, _ = psr_predict(psr, ((0, 0),))
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_one_step_mass_per_action(self):
        model = get_domain("sfr3")
        _, _, psr = exact_psr(model, 3, 2)
        for a in range(model.num_actions):
            mass = sum(psr.m0 @ psr.updates[a, o] @ psr.m_inf for o in range(model.num_obs))
            assert mass == pytest.approx(1.0, abs=1e-10)

    def test_prediction_clamped_but_raw_kept(self):
        _, _, psr = exact_psr(tiger(), 2, 1)
        string = [(1, 0)] * 12
        value, raw = psr_predict(psr, string)
        assert 0.0 <= value <= 1.0
        assert abs(raw - 0.5**12) < 1e-9

    def test_deficient_prefix_rows_fall_back(self):
        # with histories of length 1 the only prefix row is the empty string,
        # which cannot span a rank-2 factor; the extraction must say so
        est = exact_hankel(tiger(), 1, 1)
        fact = truncated_svd(est, 1e-6, 20)
        assert fact.rank == 2
        with pytest.warns(UserWarning, match="prefix"):
            psr = extract_psr(est, fact)
        assert np.all(np.isfinite(psr.updates))


class TestPsrFilter:
    def test_telescoping_product(self):
        model = get_domain("sfr3")
        _, _, psr = exact_psr(model, 3, 2)
        string = [(0, 0), (2, 1), (1, 1), (0, 0)]
        state = psr.m0
        prod = 1.0
        for a, o in string:
            state, lik = psr_filter(psr, state, a, o)
            prod *= lik
            assert state @ psr.m_inf == pytest.approx(1.0, abs=1e-10)
        value, _ = psr_predict(psr, string)
        assert prod == pytest.approx(value, abs=1e-12)

    def test_matches_belief_normalizers(self):
        model = tiger()
        _, _, psr = exact_psr(model, 2, 1)
        b = stationary_distribution(model)
        state = psr.m0
        for a, o in [(0, 0), (0, 0), (1, 1), (0, 1)]:
            b, lik_true = belief_update(model, b, a, o)
            state, lik = psr_filter(psr, state, a, o)
            assert lik == pytest.approx(lik_true, abs=1e-10)

    def test_impossible_observation_returns_none(self):
        # the drift action never emits the start-state marker symbol
        model = get_domain("sfr3")
        _, _, psr = exact_psr(model, 3, 2)
        state, lik = psr_filter(psr, psr.m0, 0, 1)
        assert state is None
        assert lik == 0.0

    def test_empirical_one_step_mass(self):
        model = tiger()
        traj = simulate(model, np.full(3, 1 / 3), 1_000_000, seed=0)
        est = estimate_hankel(traj, 2, 1)
        fact = truncated_svd(est, 0.34, 20)
        psr = extract_psr(est, fact)
        state = psr.m0
        for a, o in [(0, 0), (0, 0), (2, 0)]:
            for act in range(3):
                mass = sum(state @ psr.updates[act, oo] @ psr.m_inf for oo in range(2))
                assert abs(mass - 1.0) < 0.02
            state, _ = psr_filter(psr, state, a, o)


def test_json_roundtrip():
    _, _, psr = exact_psr(tiger(), 2, 1)
    back = psr_from_json(psr_to_json(psr))
    np.testing.assert_allclose(back.m0, psr.m0, atol=0)
    np.testing.assert_allclose(back.m_inf, psr.m_inf, atol=0)
    np.testing.assert_allclose(back.updates, psr.updates, atol=0)
