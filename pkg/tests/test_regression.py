import numpy as np
import pytest

from drflab import activations
from drflab.moments import constants_chain
from drflab.pipeline import FeatureSet, covariance_recursion, sample_weights, surrogate_forward
from drflab.regression import (
    LabelModel,
    RegressionProblem,
    Regularizer,
    default_label_model,
    fit_elastic_net,
    fit_ridge,
    generalization_error_analytic,
    generalization_error_empirical,
    synthesize_labels,
    training_error,
)

TANH = activations.tanh()


def feature_set(F):
    return FeatureSet(np.asarray(F, dtype=float), layer=1, provenance="surrogate")


def make_problem(F, y, reg, theta_star=None, sigma_nu=0.5, seed=0):
    p = F.shape[0]
    if theta_star is None:
        theta_star = np.zeros(p)
    model = LabelModel(theta_star=theta_star, sigma_nu=sigma_nu, seed=seed)
    return RegressionProblem(features=feature_set(F), labels=y, model=model,
                             reg=reg)


class TestSynthesizeLabels:
    def test_zero_model(self):
        F = np.random.default_rng(0).standard_normal((30, 20))
        model = LabelModel(theta_star=np.zeros(30), sigma_nu=0.0, seed=1)
        y = synthesize_labels(feature_set(F), model)
        np.testing.assert_array_equal(y, np.zeros(20))

    def test_noiseless_readout(self):
        rng = np.random.default_rng(2)
        F = rng.standard_normal((25, 15))
        model = default_label_model(25, sigma_nu=0.0, seed=3)
        y = synthesize_labels(feature_set(F), model)
        np.testing.assert_allclose(y, F.T @ model.theta_star / 5.0, atol=1e-14)

    def test_noise_level(self):
        rng = np.random.default_rng(4)
        F = rng.standard_normal((10, 100000))
        model = default_label_model(10, sigma_nu=0.5, seed=5)
        y = synthesize_labels(feature_set(F), model)
        resid = y - F.T @ model.theta_star / np.sqrt(10)
        assert abs(resid.std() - 0.5) <= 0.005

    def test_substreams_independent(self):
        rng = np.random.default_rng(6)
        F = rng.standard_normal((10, 50))
        model = default_label_model(10, sigma_nu=1.0, seed=7)
        y0 = synthesize_labels(feature_set(F), model, substream=0)
        y1 = synthesize_labels(feature_set(F), model, substream=1)
        assert not np.allclose(y0, y1)
        np.testing.assert_array_equal(
            y0, synthesize_labels(feature_set(F), model, substream=0)
        )


class TestFitRidge:
    def test_zero_labels(self):
        rng = np.random.default_rng(8)
        F = rng.standard_normal((20, 30))
        prob = make_problem(F, np.zeros(30), Regularizer.ridge(0.1))
        fit = fit_ridge(prob)
        np.testing.assert_allclose(fit.theta_hat, 0, atol=1e-14)
        assert fit.train_error == 0.0

    def test_heavy_shrinkage(self):
        rng = np.random.default_rng(9)
        F = rng.standard_normal((20, 30))
        y = rng.standard_normal(30)
        lam = 1e6
        fit = fit_ridge(make_problem(F, y, Regularizer.ridge(lam)))
        bound = np.linalg.norm(F @ y) / (lam * np.sqrt(20) * 30)
        assert np.linalg.norm(fit.theta_hat) <= bound * (1 + 1e-8)

    def test_matches_frozen_dense_solve(self, slow_solvers):
        ref = slow_solvers["ridge_kkt"]
        rng = np.random.default_rng(7151)
        rng.standard_normal((40, 40))
        rng.standard_normal(40)
        rng.standard_normal(40)
        rng.standard_normal(20)
        rng.standard_normal(20)
        n = p = ref["n"]
        F = rng.standard_normal((p, n)) * 1.1
        theta_star = rng.standard_normal(p)
        theta_star /= np.linalg.norm(theta_star)
        y = F.T @ theta_star / np.sqrt(p) + 0.3 * rng.standard_normal(n)
        prob = make_problem(F, y, Regularizer.ridge(ref["lam"]),
                            theta_star=theta_star)
        fit = fit_ridge(prob)
        np.testing.assert_allclose(fit.theta_hat, ref["theta_hat"], atol=1e-8)
        assert fit.train_error == pytest.approx(ref["objective"], abs=1e-10)
        assert fit.residual <= 1e-8

    def test_dual_path_matches_primal(self):
        rng = np.random.default_rng(10)
        p, n = 120, 40  # p > n triggers the Woodbury route
        F = rng.standard_normal((p, n))
        y = rng.standard_normal(n)
        lam = 0.05
        fit = fit_ridge(make_problem(F, y, Regularizer.ridge(lam)))
        A = F @ F.T / (n * p) + lam * np.eye(p)
        direct = np.linalg.solve(A, F @ y / (np.sqrt(p) * n))
        np.testing.assert_allclose(fit.theta_hat, direct, atol=1e-10)

    def test_requires_ridge(self):
        rng = np.random.default_rng(11)
        F = rng.standard_normal((5, 5))
        prob = make_problem(F, np.zeros(5), Regularizer.elastic_net(0.1, 0.1))
        with pytest.raises(ValueError):
            fit_ridge(prob)


class TestFitElasticNet:
    def test_lam1_zero_matches_ridge(self):
        rng = np.random.default_rng(12)
        F = rng.standard_normal((60, 40))
        y = rng.standard_normal(40)
        ridge_fit = fit_ridge(make_problem(F, y, Regularizer.ridge(0.2)))
        en_fit = fit_elastic_net(
            make_problem(F, y, Regularizer.elastic_net(0.0, 0.2)), tol=1e-10
        )
        assert en_fit.converged
        np.testing.assert_allclose(en_fit.theta_hat, ridge_fit.theta_hat,
                                   atol=1e-6)

    def test_matches_frozen_subgradient_objective(self, slow_solvers):
        ref = slow_solvers["elastic_subgradient"]
        rng = np.random.default_rng(7151)
        n = p = ref["n"]
        F = rng.standard_normal((p, n))
        theta_star = rng.standard_normal(p) / np.sqrt(p)
        theta_star /= np.linalg.norm(theta_star)
        y = F.T @ theta_star / np.sqrt(p) + 0.5 * rng.standard_normal(n)
        prob = make_problem(F, y, Regularizer.elastic_net(ref["lam1"], ref["lam2"]),
                            theta_star=theta_star)
        fit = fit_elastic_net(prob, tol=1e-10)
        assert fit.converged
        # the subgradient oracle sits slightly above the optimum
        assert fit.train_error <= ref["objective"] + 1e-12
        assert abs(fit.train_error - ref["objective"]) <= 1e-5

    def test_huge_lam1_dead_zone(self):
        rng = np.random.default_rng(13)
        F = rng.standard_normal((30, 20))
        y = rng.standard_normal(20)
        fit = fit_elastic_net(
            make_problem(F, y, Regularizer.elastic_net(1e6, 0.1)), tol=1e-10
        )
        grad0 = -F @ y / (20 * np.sqrt(30))
        assert np.all(np.abs(grad0) < 1e6)
        np.testing.assert_array_equal(fit.theta_hat, np.zeros(30))
        assert fit.converged

    def test_optimality_residual(self):
        rng = np.random.default_rng(14)
        F = rng.standard_normal((50, 80))
        y = rng.standard_normal(80)
        fit = fit_elastic_net(
            make_problem(F, y, Regularizer.elastic_net(0.01, 0.05)), tol=1e-9
        )
        assert fit.converged
        assert fit.residual <= 1e-9 * (1 + np.linalg.norm(fit.theta_hat))

    def test_objective_not_above_baselines(self):
        rng = np.random.default_rng(15)
        for trial in range(5):
            p, n = rng.integers(10, 60), rng.integers(10, 60)
            F = rng.standard_normal((p, n))
            theta_star = rng.standard_normal(p) / np.sqrt(p)
            y = F.T @ theta_star / np.sqrt(p) + 0.3 * rng.standard_normal(n)
            reg = Regularizer.elastic_net(0.02, 0.03)
            prob = make_problem(F, y, reg, theta_star=theta_star)
            fit = fit_elastic_net(prob, tol=1e-8)
            assert fit.train_error <= training_error(prob, np.zeros(p)) + 1e-12
            assert fit.train_error <= training_error(prob, theta_star) + 1e-12

    def test_nonconverged_flag(self):
        rng = np.random.default_rng(16)
        F = rng.standard_normal((40, 30))
        y = rng.standard_normal(30)
        fit = fit_elastic_net(
            make_problem(F, y, Regularizer.elastic_net(1e-4, 1e-6)),
            tol=1e-14, max_iter=3,
        )
        assert not fit.converged


class TestErrors:
    def test_training_error_matches_fit(self):
        rng = np.random.default_rng(17)
        F = rng.standard_normal((25, 35))
        y = rng.standard_normal(35)
        prob = make_problem(F, y, Regularizer.ridge(0.3))
        fit = fit_ridge(prob)
        assert training_error(prob, fit.theta_hat) == pytest.approx(
            fit.train_error, abs=1e-10
        )

    def test_gen_empirical_perfect_recovery(self):
        rng = np.random.default_rng(18)
        F = rng.standard_normal((15, 200))
        model = default_label_model(15, sigma_nu=0.0, seed=19)
        err, se = generalization_error_empirical(model.theta_star,
                                                 feature_set(F), model)
        assert err == pytest.approx(0.0, abs=1e-25)

    def test_gen_empirical_noise_floor(self):
        rng = np.random.default_rng(20)
        F = rng.standard_normal((15, 100000))
        model = default_label_model(15, sigma_nu=0.5, seed=21)
        err, se = generalization_error_empirical(model.theta_star,
                                                 feature_set(F), model)
        assert abs(err - 0.25) <= 3 * se

    def test_gen_analytic_trivial_cases(self):
        assert generalization_error_analytic(np.zeros(10), np.eye(10), 0.5) == (
            pytest.approx(0.25)
        )
        e = np.arange(4.0)
        assert generalization_error_analytic(e, np.eye(4), 0.0) == pytest.approx(
            float(e @ e) / 4
        )

    def test_gen_analytic_matches_empirical_surrogate(self):
        # theta_hat = 0: gen should be sigma^2 + theta*' R theta* / p.
        # Pool several independent (theta*, nu, test-set) draws so a single
        # unlucky noise stream cannot dominate the comparison.
        d, p, m = 100, 150, 100000
        chain = constants_chain(TANH, 1)
        ws = sample_weights([d, p], 23)
        R = covariance_recursion(ws, chain)
        diffs, ses = [], []
        for k in range(4):
            model = default_label_model(p, sigma_nu=0.3, seed=24 + k)
            rng = np.random.default_rng(25 + 100 * k)
            X_test = FeatureSet(rng.standard_normal((d, m)), 0, "input")
            G_test = surrogate_forward(X_test, ws, chain, noise_seed=26 + k)
            emp, se = generalization_error_empirical(np.zeros(p), G_test, model)
            ana = generalization_error_analytic(-model.theta_star, R, 0.3)
            diffs.append(emp - ana)
            ses.append(se)
        pooled = float(np.mean(diffs))
        pooled_se = float(np.sqrt(np.sum(np.square(ses)))) / len(ses)
        assert abs(pooled) <= 3 * pooled_se, (
            f"pooled diff {pooled:.2e} vs 3 s.e. {3 * pooled_se:.2e}"
        )


class TestRegularizer:
    def test_validation(self):
        with pytest.raises(ValueError):
            Regularizer.ridge(0.0)
        with pytest.raises(ValueError):
            Regularizer.elastic_net(0.1, 0.0)
        with pytest.raises(ValueError):
            Regularizer.elastic_net(-0.1, 0.1)

    def test_prox_soft_threshold(self):
        reg = Regularizer.elastic_net(1.0, 0.5)
        u = np.array([-2.0, -0.5, 0.0, 0.5, 3.0])
        out = reg.prox(u, 1.0)
        np.testing.assert_allclose(out, [-1.0 / 1.5, 0, 0, 0, 2.0 / 1.5])

    def test_label_mismatch(self):
        F = np.zeros((5, 6))
        with pytest.raises(ValueError):
            make_problem(F, np.zeros(4), Regularizer.ridge(1.0))
