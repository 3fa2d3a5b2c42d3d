import math

import numpy as np
import pytest

from robustgen.errors import (
    EmptyInputError,
    NotDoeblinError,
    ParameterError,
)
from robustgen.learners import LossSpec, MajorityVoteModel
from robustgen.metric_cover import (
    SUP,
    BinaryLabels,
    Box,
    Interval,
    SampleSpace,
    grid_cover,
)
from robustgen.sampling import (
    DistributionSpec,
    DoeblinChain,
    LabelModel,
    Marginal,
    doeblin_params,
    sample_chain,
    sample_iid,
    simulate_states,
    stationary_distribution,
    true_risk,
)

P_REFERENCE = np.array([[0.9, 0.1], [0.2, 0.8]])


def two_state_chain():
    space = SampleSpace(Box((0.0,), (1.0,)), SUP, BinaryLabels())
    # state 0 emits in the left half with label +1, state 1 in the right with -1
    return DoeblinChain(
        transition=P_REFERENCE,
        emission_lo=np.array([[0.0, 1.0], [0.5, -1.0]]),
        emission_hi=np.array([[0.5, 1.0], [1.0, -1.0]]),
        space=space,
    )


def uniform_line_dist(labels=None, label_model=None):
    space = SampleSpace(Box((0.0,), (1.0,)), SUP, labels)
    return DistributionSpec(space, (Marginal(),), label_model)


class TestSampleIid:
    def test_reproducible(self):
        dist = uniform_line_dist()
        a = sample_iid(dist, 100, seed=7, trial=3)
        b = sample_iid(dist, 100, seed=7, trial=3)
        assert np.array_equal(a, b)

    def test_trials_differ(self):
        dist = uniform_line_dist()
        a = sample_iid(dist, 100, seed=7, trial=0)
        b = sample_iid(dist, 100, seed=7, trial=1)
        assert not np.array_equal(a, b)

    def test_uniform_mean(self):
        dist = uniform_line_dist()
        draws = sample_iid(dist, 100_000, seed=1)
        assert abs(float(draws.mean()) - 0.5) < 0.01

    def test_zero_samples_error(self):
        with pytest.raises(EmptyInputError):
            sample_iid(uniform_line_dist(), 0, seed=0)

    def test_truncated_gaussian_stays_in_box(self):
        space = SampleSpace(Box((0.0,), (1.0,)), SUP, None)
        dist = DistributionSpec(space, (Marginal("truncated-gaussian", 0.4, 0.3),))
        draws = sample_iid(dist, 20_000, seed=2)
        assert draws.min() >= 0.0 and draws.max() <= 1.0
        assert abs(float(draws.mean()) - 0.4) < 0.05

    def test_labels_respect_space(self):
        dist = uniform_line_dist(BinaryLabels(),
                                 LabelModel("threshold", (1.0,), -0.5, noise=0.1))
        draws = sample_iid(dist, 5000, seed=3)
        assert np.isin(draws[:, -1], (-1.0, 1.0)).all()

    def test_linear_labels_clip_to_interval(self):
        dist = uniform_line_dist(Interval(0.0, 0.5),
                                 LabelModel("linear", (2.0,), 0.0, noise=0.0))
        draws = sample_iid(dist, 1000, seed=4)
        assert draws[:, -1].max() <= 0.5


class TestDoeblinParams:
    def test_reference_chain(self):
        alpha, T = doeblin_params(P_REFERENCE)
        assert (alpha, T) == (pytest.approx(0.2, abs=1e-15), 1)
        # minorization oracle: every one-step probability dominates alpha/m
        assert P_REFERENCE.min() >= alpha / 2 - 1e-15

    def test_identity_is_not_doeblin(self):
        with pytest.raises(NotDoeblinError):
            doeblin_params(np.eye(2), t_max=32)

    def test_deterministic_cycle_is_not_doeblin(self):
        cycle = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(NotDoeblinError):
            doeblin_params(cycle, t_max=32)

    def test_equal_rows_mix_in_one_step(self):
        q = np.array([0.3, 0.6, 0.1])
        P = np.tile(q, (3, 1))
        alpha, T = doeblin_params(P)
        assert T == 1
        assert alpha == pytest.approx(3 * 0.1, abs=1e-15)

    def test_two_step_minorization(self):
        P = np.array([[0.0, 1.0], [0.5, 0.5]])
        alpha, T = doeblin_params(P)
        assert T == 2
        power = P @ P
        assert alpha == pytest.approx(2 * power.min(), abs=1e-15)

    def test_rejects_non_stochastic(self):
        with pytest.raises(ParameterError):
            doeblin_params(np.array([[0.5, 0.6], [0.2, 0.8]]))


class TestSampleChain:
    def test_reproducible(self):
        chain = two_state_chain()
        a = sample_chain(chain, 200, 0, seed=5, trial=1)
        b = sample_chain(chain, 200, 0, seed=5, trial=1)
        assert np.array_equal(a, b)

    def test_state_frequencies_approach_stationary(self):
        chain = two_state_chain()
        states = simulate_states(chain, 60_000, 0, seed=6)
        pi = stationary_distribution(P_REFERENCE)
        freq0 = float((states == 0).mean())
        assert abs(freq0 - pi[0]) < 0.02

    def test_emissions_live_in_space(self):
        chain = two_state_chain()
        draws = sample_chain(chain, 2000, 1, seed=7)
        assert chain.space.contains(draws).all()

    def test_bad_initial_state(self):
        with pytest.raises(ParameterError):
            simulate_states(two_state_chain(), 10, 5, seed=0)


class TestStationaryDistribution:
    def test_reference_chain_against_linear_solve(self):
        pi = stationary_distribution(P_REFERENCE, tol=1e-13)
        # oracle: solve pi P = pi with the normalization row appended
        A = np.vstack([(P_REFERENCE.T - np.eye(2)), np.ones(2)])
        b = np.array([0.0, 0.0, 1.0])
        exact, *_ = np.linalg.lstsq(A, b, rcond=None)
        assert np.abs(pi - exact).max() < 1e-9
        assert pi[0] == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_doubly_stochastic_gives_uniform(self):
        P = np.array([[0.5, 0.5], [0.5, 0.5]])
        assert np.allclose(stationary_distribution(P), [0.5, 0.5], atol=1e-12)

    def test_equal_rows_give_that_row(self):
        q = np.array([0.25, 0.25, 0.5])
        pi = stationary_distribution(np.tile(q, (3, 1)))
        assert np.abs(pi - q).max() < 1e-12


class TestTrueRisk:
    def test_constant_loss_is_exact(self):
        # labels always -1 while the table predicts +1: loss identically 1
        part = grid_cover(Box((0.0,), (1.0,)), 1.0, SUP)
        model = MajorityVoteModel(partition=part, cell_labels=np.array([1.0]))
        dist = uniform_line_dist(BinaryLabels(),
                                 LabelModel("threshold", (0.0,), -1.0))
        risk = true_risk(model, dist, LossSpec("zero-one", 1.0), 10_000, seed=8)
        assert risk.value == 1.0
        assert risk.stderr == 0.0

    def test_aligned_majority_vote_has_zero_risk(self):
        part = grid_cover(Box((0.0,), (1.0,)), 0.5, SUP)
        dist = uniform_line_dist(BinaryLabels(),
                                 LabelModel("threshold", (1.0,), -0.5))
        samples = sample_iid(dist, 500, seed=9)
        from robustgen.learners import train_majority_vote

        model = train_majority_vote(samples, part)
        risk = true_risk(model, dist, LossSpec("zero-one", 1.0), 10_000, seed=10)
        assert risk.value == 0.0

    def test_chain_matches_stationary_weighted_loss(self):
        chain = two_state_chain()
        part = grid_cover(Box((0.0,), (1.0,)), 0.5, SUP)
        # predicts +1 everywhere: state 0 agrees, state 1 disagrees
        model = MajorityVoteModel(partition=part, cell_labels=np.array([1.0, 1.0]))
        risk = true_risk(model, chain, LossSpec("zero-one", 1.0), 50_000, seed=11)
        pi = stationary_distribution(P_REFERENCE)
        exact = float(pi[1])
        assert abs(risk.value - exact) <= 3.0 * risk.stderr + 1e-12

    def test_stderr_shrinks_like_root_n(self):
        part = grid_cover(Box((0.0,), (1.0,)), 0.5, SUP)
        model = MajorityVoteModel(partition=part, cell_labels=np.array([1.0, -1.0]))
        dist = uniform_line_dist(BinaryLabels(),
                                 LabelModel("threshold", (1.0,), -0.5, noise=0.3))
        spec = LossSpec("zero-one", 1.0)
        small = true_risk(model, dist, spec, 10_000, seed=12)
        large = true_risk(model, dist, spec, 40_000, seed=12)
        assert small.stderr / large.stderr == pytest.approx(2.0, rel=0.2)

    def test_rejects_small_n_mc(self):
        part = grid_cover(Box((0.0,), (1.0,)), 1.0, SUP)
        model = MajorityVoteModel(partition=part, cell_labels=np.array([1.0]))
        with pytest.raises(ParameterError):
            true_risk(model, uniform_line_dist(), LossSpec("zero-one", 1.0),
                      100, seed=0)


class TestChainConcentration:
    def test_deviation_frequency_respects_exponential_bound(self):
        # frequency of {mean f - E_pi f >= eps} over many trajectories stays
        # below exp(-alpha^2 (n eps - 2T/alpha)^2 / (2 n T^2)) + 3 se
        chain = two_state_chain()
        alpha, T = doeblin_params(P_REFERENCE)
        pi = stationary_distribution(P_REFERENCE)
        eps = 0.2
        n = 600
        assert n > 2.0 * T / (eps * alpha)
        trajectories = 2000
        mean_f = np.empty(trajectories)
        for r in range(trajectories):
            states = simulate_states(chain, n, 0, seed=13, trial=r)
            mean_f[r] = float((states == 0).mean())
        observed = float((mean_f - pi[0] >= eps).mean())
        bound = math.exp(-alpha ** 2 * (n * eps - 2 * T / alpha) ** 2
                         / (2 * n * T ** 2))
        se = math.sqrt(max(observed * (1 - observed), 1e-12) / trajectories)
        assert observed <= bound + 3 * se
