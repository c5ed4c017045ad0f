import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from punfold.kernels import RngStream, bvn_cdf
from punfold.model import (
    MISSING,
    NO,
    YES,
    ControlParams,
    Hyperparams,
    ItemParams,
    SyntheticTruth,
    VoteMatrix,
    log_ar1_transition,
    log_beta_prior_static,
    log_item_prior,
    sample_item_prior,
    simulate_latents,
    simulate_votes,
    theta_prob,
    theta_prob_matrix,
)

from oracles import bvn_cdf_quadrature

PHI_MINUS_INV_SQRT2 = 0.2397500610934767311586  # Phi(-1/sqrt(2))


def item(a1, a2, d1, d2, z=None):
    if z is None:
        z = 1 if a1 > 0 else -1
    return ItemParams((a1, a2), (d1, d2), z)


class TestThetaProb:
    def test_zero_limits_is_one_third(self):
        assert theta_prob(0.0, item(1.0, -1.0, 0.0, 0.0)) == pytest.approx(1 / 3, abs=1e-12)

    def test_probit_limit(self):
        got = theta_prob(1.0, item(2.0, -1.0, -50.0, 0.0))
        assert got == pytest.approx(PHI_MINUS_INV_SQRT2, abs=1e-6)
        want = bvn_cdf_quadrature(2 * 51 / math.sqrt(2), -1 / math.sqrt(2), 0.5)
        assert got == pytest.approx(want, abs=1e-10)

    def test_marginal_boundary(self):
        got = theta_prob(1.0, item(10.0, -1.0, -50.0, 1.0))
        assert got == pytest.approx(0.5, abs=1e-6)

    def test_reflection_invariance_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            b = rng.normal()
            a1, a2 = rng.uniform(0.2, 3), -rng.uniform(0.2, 3)
            d1, d2 = rng.normal(size=2) * 3
            p = theta_prob(b, item(a1, a2, d1, d2))
            q = theta_prob(-b, item(-a1, -a2, -d1, -d2, z=-1))
            assert p == q

    @given(
        st.floats(-3, 3), st.floats(0.2, 4), st.floats(0.2, 4),
        st.floats(-4, 4), st.floats(-4, 4), st.floats(0, 5),
    )
    @settings(max_examples=100)
    def test_monotone_in_first_limit(self, b, a1, a2m, d1, d2, shift):
        # lowering delta1 raises alpha1*(beta - delta1) while the second
        # limit stays fixed; the probability must not decrease
        p_lo = theta_prob(b, item(a1, -a2m, d1, d2))
        p_hi = theta_prob(b, item(a1, -a2m, d1 - shift, d2))
        assert p_lo <= p_hi + 1e-12

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(1)
        beta = rng.normal(size=4)
        alpha = np.stack([rng.uniform(0.2, 2, 3), -rng.uniform(0.2, 2, 3)], axis=1)
        delta = rng.normal(size=(3, 2))
        mat = theta_prob_matrix(beta, alpha, delta)
        for i in range(4):
            for j in range(3):
                it = item(alpha[j, 0], alpha[j, 1], delta[j, 0], delta[j, 1])
                assert mat[i, j] == pytest.approx(theta_prob(beta[i], it), abs=1e-14)


class TestItemParams:
    def test_quadrant_enforced(self):
        with pytest.raises(ValueError):
            ItemParams((1.0, -1.0), (0.0, 0.0), -1)
        with pytest.raises(ValueError):
            ItemParams((-1.0, 1.0), (0.0, 0.0), 1)
        with pytest.raises(ValueError):
            ItemParams((0.0, -1.0), (0.0, 0.0), 1)
        ItemParams((1.0, -1.0), (0.0, 0.0), 1)
        ItemParams((-1.0, 1.0), (0.0, 0.0), -1)


class TestLogItemPrior:
    def test_wrong_quadrant_minus_inf(self):
        hyper = Hyperparams()
        bad = ItemParams.__new__(ItemParams)
        object.__setattr__(bad, "alpha", (1.0, -1.0))
        object.__setattr__(bad, "delta", (0.0, 0.0))
        object.__setattr__(bad, "z", -1)
        assert log_item_prior(bad, hyper) == -np.inf

    def test_plugin_closed_form(self):
        w, k = 5.0, math.sqrt(10.0)
        mu = (-2.0, 10.0)
        hyper = Hyperparams(alpha_scale=w, delta_scale=k, delta_mean=mu)
        it = ItemParams((w, -w), mu, 1)
        # two half-line truncated normals at one scale unit, two normals at mode
        expect = 2 * (-0.5 - math.log(w) - 0.5 * math.log(2 * math.pi) + math.log(2.0))
        expect += 2 * (-math.log(k) - 0.5 * math.log(2 * math.pi))
        assert log_item_prior(it, hyper) == pytest.approx(expect, abs=1e-12)

    def test_mixture_symmetry_exact(self):
        hyper = Hyperparams()
        rng = np.random.default_rng(0)
        for _ in range(50):
            a1, a2 = rng.uniform(0.1, 8), -rng.uniform(0.1, 8)
            d1, d2 = rng.normal(size=2) * 5
            plus = log_item_prior(item(a1, a2, d1, d2, z=1), hyper)
            minus = log_item_prior(item(-a1, -a2, -d1, -d2, z=-1), hyper)
            assert plus == minus


class TestBetaPriors:
    def test_static_at_zero(self):
        hyper = Hyperparams()
        assert log_beta_prior_static(0.0, hyper) == pytest.approx(
            -0.5 * math.log(2 * math.pi), abs=1e-14
        )

    def test_transition_rho_zero_is_standard_normal(self):
        for prev in [-3.0, 0.0, 5.0]:
            got = log_ar1_transition(0.7, prev, 0.0)
            want = -0.5 * 0.7**2 - 0.5 * math.log(2 * math.pi)
            assert got == pytest.approx(want, abs=1e-14)

    def test_transition_peak(self):
        got = log_ar1_transition(0.9, 1.0, 0.9)
        want = -0.5 * math.log(2 * math.pi * (1 - 0.81))
        assert got == pytest.approx(want, abs=1e-14)

    def test_transition_gap(self):
        got = log_ar1_transition(0.5, 1.0, 0.8, gap=3)
        decay = 0.8**3
        var = 1 - decay**2
        want = -0.5 * (0.5 - decay) ** 2 / var - 0.5 * math.log(2 * math.pi * var)
        assert got == pytest.approx(want, abs=1e-13)


class TestSimulateVotes:
    def test_psi_mapping(self):
        truth = SyntheticTruth(np.zeros(1), np.array([[-1.0, 0.0, 2.0]]))
        alpha, delta, z = truth.item_arrays()
        assert np.allclose(alpha[0], [2.0, -4.0])
        assert np.allclose(delta[0], [-0.5, 1.0])
        assert z[0] == 1

    def test_dominance(self):
        truth = SyntheticTruth(np.zeros(200), np.array([[-10.0, 0.0, 10.0]]))
        vm = simulate_votes(truth, RngStream(1))
        assert vm.yes.mean() == 1.0

    def test_zero_limit_frequency_one_third(self):
        # both standardized limits zero: all three options tie in expectation
        n = 1_000_000
        _, outcomes = simulate_latents(
            np.zeros((n, 1)), np.array([[1.0, -1.0]]), np.zeros((1, 2)), RngStream(2)
        )
        freq = (outcomes == YES).mean()
        se = math.sqrt((1 / 3) * (2 / 3) / n)
        assert abs(freq - 1 / 3) <= 3 * se

    def test_frequency_matches_theta_prob(self):
        rng = RngStream(5)
        n = 1_000_000
        psi = np.array([[-1.5, -0.2, 1.0]])
        beta = 0.4
        truth = SyntheticTruth(np.full(n, beta), psi)
        vm = simulate_votes(truth, rng)
        alpha, delta, _ = truth.item_arrays()
        p = theta_prob(beta, item(alpha[0, 0], alpha[0, 1], delta[0, 0], delta[0, 1]))
        se = math.sqrt(p * (1 - p) / n)
        assert abs(vm.yes.mean() - p) <= 4 * se

    def test_latent_generator_agrees_with_theta(self):
        rng = RngStream(6)
        n = 500_000
        alpha = np.array([[1.3, -0.7]])
        delta = np.array([[-0.4, 0.9]])
        beta_cell = np.full((n, 1), -0.3)
        ystar, outcomes = simulate_latents(beta_cell, alpha, delta, rng)
        p = theta_prob(-0.3, item(1.3, -0.7, -0.4, 0.9))
        freq = (outcomes == YES).mean()
        se = math.sqrt(p * (1 - p) / n)
        assert abs(freq - p) <= 4 * se
        yes = outcomes[:, 0] == YES
        mx = np.maximum(ystar[:, 0, 0], ystar[:, 0, 2])
        assert np.all(ystar[yes, 0, 1] > mx[yes])
        assert np.all(ystar[~yes, 0, 1] < mx[~yes])

    def test_dynamic_truth_requires_time_index(self):
        truth = SyntheticTruth(np.zeros((3, 2)), np.array([[-1.0, 0.0, 1.0]]))
        with pytest.raises(ValueError):
            simulate_votes(truth, RngStream(0))
        vm = simulate_votes(truth, RngStream(0), time_index=[1])
        assert vm.time_index == [1]


class TestSampleItemPrior:
    def test_quadrants_respected(self):
        hyper = Hyperparams()
        z = np.array([1, 1, -1, -1, 1])
        alpha, delta = sample_item_prior(hyper, z, RngStream(3))
        assert np.all(alpha[z == 1, 0] > 0) and np.all(alpha[z == 1, 1] < 0)
        assert np.all(alpha[z == -1, 0] < 0) and np.all(alpha[z == -1, 1] > 0)
        assert delta.shape == (5, 2)

    def test_delta_mirroring(self):
        hyper = Hyperparams(delta_mean=(-2.0, 10.0), delta_scale=0.01)
        alpha, delta = sample_item_prior(hyper, np.array([-1] * 100), RngStream(4))
        assert np.allclose(delta.mean(axis=0), [2.0, -10.0], atol=0.01)


class TestTypes:
    def test_vote_matrix_validation(self):
        good = VoteMatrix(np.array([[1, 0], [-1, 1]]), ["a", "b"], ["v1", "v2"])
        assert good.I == 2 and good.J == 2
        with pytest.raises(ValueError):
            VoteMatrix(np.array([[1, 0]]), ["a"], ["v", "v"])
        with pytest.raises(ValueError):
            VoteMatrix(np.array([[1, 5]]), ["a"], ["v1", "v2"])
        with pytest.raises(ValueError):
            VoteMatrix(np.array([[1, 0]]), ["a"], ["v1", "v2"], time_index=[1])

    def test_subset_carries_meta(self):
        vm = VoteMatrix(
            np.array([[1, 0, -1], [0, 0, 1]]),
            ["a", "b"],
            ["v1", "v2", "v3"],
            time_index=[1, 1, 2],
            meta={"party": ["R", "D"]},
        )
        sub = vm.subset(rows=[1], cols=[0, 2])
        assert sub.row_labels == ["b"]
        assert sub.time_index == [1, 2]
        assert sub.meta["party"] == ["D"]

    def test_control_validation(self):
        with pytest.raises(ValueError):
            ControlParams(num_iter=10, burn_in=10)
        with pytest.raises(ValueError):
            ControlParams(num_iter=10, burn_in=2, flip_rate=1.5)
        c = ControlParams(num_iter=400, burn_in=100, keep_iter=10)
        assert c.n_stored == 30

    def test_hyper_validation(self):
        with pytest.raises(ValueError):
            Hyperparams(alpha_scale=0.0)
        with pytest.raises(ValueError):
            Hyperparams(rho_mean=1.5)

    def test_vote_codes(self):
        assert YES == 1 and NO == 0 and MISSING == -1
