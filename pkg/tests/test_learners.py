import math

import numpy as np
import pytest

from robustgen.errors import ParameterError
from robustgen.learners import (
    KernelSpec,
    LossSpec,
    MajorityVoteModel,
    PcaModel,
    lasso_objective,
    loss,
    loss_many,
    mean_absolute_objective,
    nn_forward,
    soft_threshold,
    train_lasso,
    train_majority_vote,
    train_network,
    train_norm_constrained_regression,
    train_pca,
    train_svm,
)
from robustgen.metric_cover import SUP, Box, grid_cover

RNG = lambda tag: np.random.Generator(np.random.Philox(tag))


def make_supervised(X, y):
    return np.hstack([X, np.asarray(y, float)[:, None]])


class TestMajorityVote:
    def setup_method(self):
        self.partition = grid_cover(Box((0.0,), (1.0,)), 0.5, SUP)

    def test_strict_majority(self):
        s = make_supervised(np.array([[0.1], [0.2], [0.3]]), [1, 1, -1])
        model = train_majority_vote(s, self.partition)
        assert model.predict_many([[0.25]])[0] == 1.0

    def test_tie_goes_positive(self):
        s = make_supervised(np.array([[0.1], [0.2]]), [1, -1])
        model = train_majority_vote(s, self.partition)
        assert model.predict_many([[0.25]])[0] == 1.0

    def test_empty_cell_positive(self):
        s = make_supervised(np.array([[0.1]]), [-1])
        model = train_majority_vote(s, self.partition)
        assert model.predict_many([[0.9]])[0] == 1.0

    def test_rejects_non_binary(self):
        s = make_supervised(np.array([[0.1]]), [0.5])
        with pytest.raises(ParameterError):
            train_majority_vote(s, self.partition)


class TestNormConstrainedRegression:
    def test_tiny_ball_gives_near_zero_weights(self):
        gen = RNG(21)
        X = gen.random((50, 2))
        y = gen.random(50)
        model = train_norm_constrained_regression(make_supervised(X, y), c=1e-9)
        assert float(np.abs(model.w).max()) <= 1e-9
        obj = mean_absolute_objective(model.w, X, y)
        assert obj == pytest.approx(float(np.abs(y).mean()), abs=1e-6)

    def test_recovers_exact_linear_fit(self):
        # oracle: dense grid search over w in [-1, 1]
        gen = RNG(22)
        x = gen.random(60)
        s = make_supervised(x[:, None], 0.5 * x)
        model = train_norm_constrained_regression(s, c=1.0, max_iter=20_000)
        grid = np.linspace(-1.0, 1.0, 4001)
        oracle = min(float(np.abs(0.5 * x - w * x).mean()) for w in grid)
        trained = mean_absolute_objective(model.w, x[:, None], 0.5 * x)
        assert trained <= oracle + 1e-2
        assert trained <= 2e-2

    def test_ball_feasibility(self):
        gen = RNG(23)
        for _ in range(5):
            X = gen.random((40, 3))
            y = gen.random(40) * 2.0
            c = float(gen.uniform(0.05, 2.0))
            model = train_norm_constrained_regression(make_supervised(X, y), c)
            assert float(np.sqrt(model.w @ model.w)) <= c + 1e-9


class TestLasso:
    def test_huge_penalty_zeroes_out(self):
        gen = RNG(31)
        X = gen.random((30, 4))
        y = gen.random(30)
        model = train_lasso(make_supervised(X, y), c=100.0)
        assert np.array_equal(model.w, np.zeros(4))

    def test_one_dimensional_closed_form(self):
        # oracle: single-coordinate soft-threshold solution
        gen = RNG(32)
        x = gen.random(80)
        y = 0.7 * x + 0.05 * (gen.random(80) - 0.5)
        c = 0.1
        model = train_lasso(make_supervised(x[:, None], y), c)
        a = 2.0 * float(x @ x) / 80
        rho = 2.0 * float(x @ y) / 80
        expected = soft_threshold(rho, c) / a
        assert model.w[0] == pytest.approx(expected, abs=1e-8)

    def test_objective_never_exceeds_zero_solution(self):
        gen = RNG(33)
        for _ in range(10):
            X = gen.random((25, 3))
            y = gen.random(25)
            c = float(gen.uniform(0.01, 1.0))
            model = train_lasso(make_supervised(X, y), c)
            assert lasso_objective(model.w, X, y, c) <= float((y * y).mean()) + 1e-12

    def test_l1_feasibility_constant(self):
        gen = RNG(34)
        X = gen.random((40, 3))
        y = gen.random(40)
        c = 0.2
        model = train_lasso(make_supervised(X, y), c)
        assert float(np.abs(model.w).sum()) <= float((y * y).mean()) / c + 1e-9

    def test_deterministic(self):
        gen = RNG(35)
        s = make_supervised(gen.random((30, 3)), gen.random(30))
        assert np.array_equal(train_lasso(s, 0.1).w, train_lasso(s, 0.1).w)


class TestSvm:
    def test_separable_two_points_drives_hinge_to_zero(self):
        s = np.array([[0.2, -1.0], [0.8, 1.0]])
        c = 0.005
        model = train_svm(s, c, KernelSpec("linear"), max_iter=4000)
        # oracle: grid search over the 2-d primal (w, d)
        x, y = s[:, 0], s[:, 1]
        best = math.inf
        for w in np.linspace(-8.0, 8.0, 641):
            margins = y * (w * x)
            cands = y - w * x
            for d in cands:
                hinge = np.maximum(0.0, 1.0 - y * (w * x + d)).mean()
                best = min(best, c * w * w + hinge)
        hinge_mean = float(np.maximum(0.0, 1.0 - y * (model.decision_many(s[:, :1]))).mean())
        assert model.objective <= best + 1e-2
        assert hinge_mean <= 1e-2

    def test_objective_never_exceeds_zero_solution(self):
        gen = RNG(41)
        X = gen.random((40, 2))
        y = np.where(X[:, 0] + X[:, 1] > 1.0, 1.0, -1.0)
        for c in (0.01, 0.1, 1.0):
            model = train_svm(make_supervised(X, y), c, KernelSpec("linear"))
            assert model.objective <= 1.0 + 1e-12
            assert model.weight_norm <= math.sqrt(1.0 / c) + 1e-9

    def test_gaussian_kernel_deterministic_predictions(self):
        gen = RNG(42)
        X = gen.random((30, 2))
        y = np.where(X[:, 0] > 0.5, 1.0, -1.0)
        s = make_supervised(X, y)
        kernel = KernelSpec("gaussian", width=0.4)
        a = train_svm(s, 0.5, kernel).predict_many(X)
        b = train_svm(s, 0.5, kernel).predict_many(X)
        assert np.array_equal(a, b)

    def test_rejects_unknown_kernel(self):
        with pytest.raises(ParameterError):
            KernelSpec("polynomial")

    def test_linear_training_is_deterministic(self):
        gen = RNG(43)
        X = gen.random((50, 2))
        y = np.where(X[:, 0] > 0.5, 1.0, -1.0)
        s = make_supervised(X, y)
        a = train_svm(s, 0.2, KernelSpec("linear"))
        b = train_svm(s, 0.2, KernelSpec("linear"))
        assert np.array_equal(a.dual_coef, b.dual_coef)
        assert a.bias == b.bias and a.objective == b.objective


class TestNetworkForward:
    def test_zero_weights_give_zero_output(self):
        model_weights = (np.zeros((3, 2)), np.zeros((1, 3)))
        from robustgen.learners import NetworkModel

        net = NetworkModel(model_weights, "tanh", alpha=1.0, beta=1.0)
        assert nn_forward(net, [0.4, 0.9]) == 0.0
        assert nn_forward(net, [123.0, -7.0]) == 0.0

    def test_single_weight_identity_activation(self):
        from robustgen.learners import NetworkModel

        net = NetworkModel((np.array([[0.5]]),), "clipped-identity", alpha=1.0, beta=1.0)
        assert nn_forward(net, [0.8]) == pytest.approx(0.4, abs=1e-15)

    def test_forward_lipschitz_chain(self):
        # the layered composition contracts by at most (alpha * beta) per layer
        gen = RNG(51)
        X = gen.random((40, 2))
        y = gen.random(40)
        alpha, beta = 1.3, 1.0
        net = train_network(make_supervised(X, y), (4, 3), alpha, beta, "tanh",
                            seed=3, epochs=50)
        depth = net.depth
        a = gen.random((10_000, 2))
        b = a + (gen.random((10_000, 2)) - 0.5) * 0.3
        gap = np.abs(net.forward_many(a) - net.forward_many(b))
        allowed = (alpha * beta) ** depth * np.abs(a - b).max(axis=1)
        assert (gap <= allowed + 1e-9).all()

    def test_dimension_mismatch(self):
        from robustgen.learners import NetworkModel

        net = NetworkModel((np.ones((1, 3)),), "tanh", alpha=3.0, beta=1.0)
        with pytest.raises(ParameterError):
            nn_forward(net, [1.0, 2.0])


class TestTrainNetwork:
    def test_tiny_alpha_forces_near_constant(self):
        gen = RNG(52)
        X = gen.random((30, 2))
        y = gen.random(30)
        net = train_network(make_supervised(X, y), (3,), 1e-6, 1.0, "tanh", seed=1)
        outs = net.forward_many(gen.random((50, 2)))
        assert float(np.abs(outs - outs[0]).max()) <= 1e-5

    def test_row_constraint_holds(self):
        gen = RNG(53)
        X = gen.random((40, 3))
        y = gen.random(40)
        alpha = 0.8
        net = train_network(make_supervised(X, y), (5, 4), alpha, 1.0, "logistic", seed=2)
        for norms in net.row_norms():
            assert (norms <= alpha + 1e-9).all()

    def test_recovers_slope_sign(self):
        # oracle: direct least-squares fit has a positive slope
        gen = RNG(54)
        x = gen.random(60)
        y = np.clip(0.8 * x + 0.05 * (gen.random(60) - 0.5), 0.0, 1.0)
        slope = float(np.polyfit(x, y, 1)[0])
        net = train_network(make_supervised(x[:, None], y), (), 1.5, 1.0,
                            "clipped-identity", seed=4, epochs=2000)
        assert slope > 0
        assert net.weights[0][0, 0] > 0

    def test_deterministic_given_seed(self):
        gen = RNG(55)
        s = make_supervised(gen.random((20, 2)), gen.random(20))
        a = train_network(s, (3,), 1.0, 1.0, "tanh", seed=9, epochs=30)
        b = train_network(s, (3,), 1.0, 1.0, "tanh", seed=9, epochs=30)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_rejects_unknown_activation(self):
        with pytest.raises(ParameterError):
            train_network(np.zeros((3, 2)), (), 1.0, 1.0, "relu")


class TestPca:
    def test_single_axis_data(self):
        Z = np.array([[1.0, 0.0], [2.0, 0.0], [-1.5, 0.0]])
        model = train_pca(Z, 1)
        assert abs(model.components[0, 0]) == pytest.approx(1.0, abs=1e-9)
        assert model.components[0, 1] == pytest.approx(0.0, abs=1e-9)

    def test_diagonal_second_moment_matches_eigh(self):
        Z = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        model = train_pca(Z, 1)
        eigvals, eigvecs = np.linalg.eigh(Z.T @ Z)
        top = eigvecs[:, np.argmax(eigvals)]
        assert abs(float(model.components[0] @ top)) == pytest.approx(1.0, abs=1e-9)
        assert model.captured_energy(Z) == pytest.approx(float(eigvals.max()), abs=1e-9)

    def test_complete_basis_captures_everything(self):
        gen = RNG(61)
        Z = gen.random((30, 3))
        model = train_pca(Z, 3)
        assert model.captured_energy(Z) == pytest.approx(float((Z * Z).sum()), rel=1e-9)

    def test_orthonormality(self):
        gen = RNG(62)
        Z = gen.random((50, 4)) @ np.diag([3.0, 2.0, 1.0, 0.5])
        model = train_pca(Z, 3)
        gram = model.components @ model.components.T
        assert np.abs(gram - np.eye(3)).max() <= 1e-9

    def test_rejects_too_many_components(self):
        with pytest.raises(ParameterError):
            train_pca(np.zeros((5, 2)), 3)


class TestLosses:
    def test_hinge_zero_on_confident_side(self):
        s = np.array([[0.0, -1.0], [1.0, 1.0]])
        model = train_svm(s, 0.001, KernelSpec("linear"), max_iter=4000)
        spec = LossSpec("hinge", 5.0)
        margins = s[:, 1] * model.decision_many(s[:, :1])
        confident = margins >= 1.0
        values = loss_many(model, s, spec)
        assert (values[confident] == 0.0).all()

    def test_absolute_zero_on_perfect_prediction(self):
        from robustgen.learners import LinearModel

        model = LinearModel(w=np.array([0.5]), family="lasso", c=1.0)
        z = [2.0, 1.0]
        assert loss(model, z, LossSpec("absolute", 1.0)) == 0.0

    def test_pca_loss_cauchy_schwarz_cap(self):
        gen = RNG(71)
        basis, _ = np.linalg.qr(gen.random((4, 4)))
        model = PcaModel(components=basis[:, :2].T)
        B = 2.0
        direction = gen.random((200, 4)) - 0.5
        z = direction / np.sqrt((direction ** 2).sum(1, keepdims=True)) * B * gen.random((200, 1))
        values = loss_many(model, z, LossSpec("pca-quadratic", 1e9))
        assert (values <= 2 * B * B + 1e-9).all()

    def test_clipping_bounds_everything(self):
        s = np.array([[0.0, -1.0], [1.0, 1.0]])
        model = train_svm(s, 1.0, KernelSpec("linear"))
        values = loss_many(model, s, LossSpec("hinge", 0.25))
        assert (values <= 0.25).all() and (values >= 0.0).all()

    def test_kind_mismatch_raises(self):
        model = PcaModel(components=np.eye(2)[:1])
        with pytest.raises(ParameterError):
            loss(model, [0.5, 0.5], LossSpec("hinge", 1.0))

    def test_zero_one_mv(self):
        part = grid_cover(Box((0.0,), (1.0,)), 0.5, SUP)
        model = MajorityVoteModel(partition=part, cell_labels=np.array([1.0, -1.0]))
        spec = LossSpec("zero-one", 1.0)
        assert loss(model, [0.1, 1.0], spec) == 0.0
        assert loss(model, [0.1, -1.0], spec) == 1.0


class TestLossDeviationConstants:
    def test_lasso_loss_moves_at_most_constant_times_sup_distance(self):
        gen = RNG(81)
        X = gen.random((60, 3))
        y = np.clip(0.5 * X[:, 0] + 0.2 * X[:, 1] + 0.1, 0.0, 1.0)
        s = make_supervised(X, y)
        c = 0.3
        model = train_lasso(s, c)
        constant = float((y * y).mean()) / c + 1.0
        spec = LossSpec("absolute", 1.0)
        za = np.hstack([gen.random((10_000, 3)), gen.random((10_000, 1))])
        zb = np.hstack([gen.random((10_000, 3)), gen.random((10_000, 1))])
        gap = np.abs(loss_many(model, za, spec) - loss_many(model, zb, spec))
        dist = np.abs(za - zb).max(axis=1)
        assert (gap <= constant * dist + 1e-9).all()

    def test_pca_loss_moves_at_most_2dB_times_distance(self):
        gen = RNG(82)
        Z = (gen.random((60, 2)) - 0.5) * 2.0
        model = train_pca(Z, 2)
        B = np.sqrt(2.0)
        spec = LossSpec("pca-quadratic", 10.0)
        za = (gen.random((10_000, 2)) - 0.5) * 2.0
        zb = (gen.random((10_000, 2)) - 0.5) * 2.0
        gap = np.abs(loss_many(model, za, spec) - loss_many(model, zb, spec))
        dist = np.sqrt(((za - zb) ** 2).sum(axis=1))
        assert (gap <= 2 * 2 * B * dist + 1e-9).all()
