"""Tests for the scalar saddle-point error predictor.

The solver is checked three ways: the Moreau-envelope primitive against
slow high-accuracy minimizations frozen in ``oracles/frozen/``, the full
train/generalization predictions against frozen Monte-Carlo averages over
the Gaussian-surrogate regression ensemble, and structural invariants
(stationarity of the returned point, phase-limit closed forms, invariance
to how the network shape is passed in).
"""

import json
import math
import pathlib

import numpy as np
import pytest

from drflab import activations, cgmt
from drflab.moments import constants_chain
from drflab.regression import Regularizer

FROZEN = pathlib.Path(__file__).parent / "oracles" / "frozen"


@pytest.fixture(scope="module")
def mc_rows():
    with open(FROZEN / "surrogate_mc.json") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def slow_rows():
    with open(FROZEN / "slow_solvers.json") as fh:
        return json.load(fh)


def _theta_unit(p_out):
    rng = np.random.default_rng(4242)
    th = rng.standard_normal(p_out)
    return th / np.linalg.norm(th)


def _row_setup(row):
    L, n, p = row["L"], row["n"], row["p"]
    dims = row.get("dims") or [row["d"]] + [p] * L
    act = activations.tanh() if row["act"] == "tanh" else activations.linear()
    chain = constants_chain(act, L)
    spec = row["reg"]
    if spec[0] == "ridge":
        reg = Regularizer.ridge(spec[1])
    else:
        reg = Regularizer.elastic_net(spec[1], spec[2])
    return L, n, dims, chain, reg, row["sigma_nu"]


# --------------------------------------------------------------------------
# Moreau envelope primitive
# --------------------------------------------------------------------------


class TestMoreauEnvelope:
    def test_matches_frozen_powell_minimization(self, slow_rows):
        # reproduce the oracle's draw order on the shared seed stream
        rng = np.random.default_rng(7151)
        rng.standard_normal((40, 40))
        rng.standard_normal(40)
        rng.standard_normal(40)
        theta_star = rng.standard_normal(20)
        v = rng.standard_normal(20) * 1.3
        s = slow_rows["moreau_ridge"]["s"]

        val_r, _ = cgmt.moreau_envelope(
            Regularizer.ridge(slow_rows["moreau_ridge"]["lam"]),
            theta_star, s, v)
        assert val_r == pytest.approx(
            slow_rows["moreau_ridge"]["value"], rel=1e-8)

        row = slow_rows["moreau_elastic"]
        val_e, _ = cgmt.moreau_envelope(
            Regularizer.elastic_net(row["lam1"], row["lam2"]),
            theta_star, s, v)
        assert val_e == pytest.approx(row["value"], rel=1e-8)

    def test_is_a_minimum_over_random_probes(self):
        rng = np.random.default_rng(99)
        theta_star = rng.standard_normal(12)
        point = rng.standard_normal(12)
        for reg in (Regularizer.ridge(0.7),
                    Regularizer.elastic_net(0.4, 0.2)):
            for weight in (0.05, 1.0, 30.0):
                value, e_min = cgmt.moreau_envelope(
                    reg, theta_star, weight, point)

                def objective(e):
                    d = e - point
                    return (float(d @ d) / (2 * weight)
                            + reg.penalty(e + theta_star))

                assert value == pytest.approx(objective(e_min), rel=1e-12)
                for _ in range(40):
                    probe = e_min + rng.standard_normal(12) * rng.choice(
                        [1e-4, 1e-2, 1.0])
                    assert objective(probe) >= value - 1e-12

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError):
            cgmt.moreau_envelope(
                Regularizer.ridge(1.0), np.zeros(3), 0.0, np.ones(3))


# --------------------------------------------------------------------------
# Predictions against frozen Monte-Carlo surrogate regression
# --------------------------------------------------------------------------

MC_KEYS = [
    "L1_linear_ridge_g1.5",
    "L1_linear_ridge_np2000",
    "L1_tanh_ridge1_g0.5",
    "L1_tanh_ridge01_g1.5",
    "L2_tanh_ridge01_g0.5",
    "L2_tanh_ridge01_g3",
    "L1_tanh_ridge_heavy_g1.5",
    "L1_tanh_ridge_lo_g0.5",
    "L1_tanh_ridge_lo_g1.5",
    "L1_tanh_ridge_lo_g3",
    "L2_tanh_ridge_lo_g0.5",
    "L2_tanh_ridge_lo_g1.5",
    "L2_tanh_ridge_lo_g3",
    "L2_tanh_ridge_lo_uneq_g1.5",
    "L2_tanh_en01_g1.5",
    "L2_tanh_en_lo_g1.5",
    "L1_tanh_en_sparse_g1.5",
]


class TestPredictionsMatchMonteCarlo:
    @pytest.mark.parametrize("key", MC_KEYS)
    def test_within_tolerance(self, mc_rows, key):
        row = mc_rows[key]
        L, n, dims, chain, reg, sigma_nu = _row_setup(row)
        theta_star = _theta_unit(dims[-1])
        sol = cgmt.solve_general(L, n, dims, chain, reg, sigma_nu,
                                 theta_star, seed=0)
        train, gen = cgmt.predicted_errors(sol, sigma_nu)
        tol = 0.03 if row["act"] == "linear" else 0.05
        assert train == pytest.approx(row["train_mean"], rel=tol)
        assert gen == pytest.approx(row["gen_mean"], rel=tol)

        worst = max(sol.diagnostics["stationarity_residuals"].values())
        assert worst <= 1e-6
        assert sol.state.q >= sigma_nu - 1e-12
        assert gen == pytest.approx(sol.state.q ** 2, rel=1e-12)

    def test_same_size_equals_general_shape(self):
        chain = constants_chain(activations.tanh(), 2)
        reg = Regularizer.ridge(1e-5)
        n, d, p = 667, 445, 1000
        theta_star = _theta_unit(p)
        a = cgmt.solve_same_size(2, n, d, p, chain, reg, 0.5, theta_star,
                                 g_seed=3)
        b = cgmt.solve_general(2, n, [d, p, p], chain, reg, 0.5, theta_star,
                               seed=3)
        assert a.value == pytest.approx(b.value, rel=1e-10)
        assert a.gen_pred == pytest.approx(b.gen_pred, rel=1e-10)

    def test_averaging_over_probe_draws_is_stable(self):
        n, d, p = 667, 445, 1000
        out = cgmt.predict_with_averaging(
            [d, p], n, constants_chain(activations.tanh(), 1),
            Regularizer.ridge(1e-5), 0.5, _theta_unit(p), n_draws=3)
        assert out["train_spread"] <= 1e-6
        assert out["gen_spread"] <= 1e-6
        assert len(out["solutions"]) == 3
        assert out["train_mean"] == pytest.approx(
            np.mean([s.value for s in out["solutions"]]), rel=1e-12)


# --------------------------------------------------------------------------
# Structural invariants and limits
# --------------------------------------------------------------------------


class TestLimitsAndInvariants:
    def test_heavy_regularization_closed_form(self):
        # as the ridge strength diverges the estimator collapses to zero,
        # so train -> (sigma^2 + a_L^2 |theta*|^2 / p_L)/2 and
        # gen -> sigma^2 + a_L^2 |theta*|^2 / p_L
        chain = constants_chain(activations.tanh(), 1)
        n, d, p = 667, 445, 1000
        theta_star = _theta_unit(p)
        sol = cgmt.solve_same_size(1, n, d, p, chain, Regularizer.ridge(1e6),
                                   0.5, theta_star)
        alpha_sq = chain[-1].alpha ** 2
        signal = 0.25 + alpha_sq * float(theta_star @ theta_star) / p
        train, gen = cgmt.predicted_errors(sol, 0.5)
        assert train == pytest.approx(signal / 2, rel=0.03)
        assert gen == pytest.approx(signal, rel=0.03)

    def test_generalization_decreases_with_ridge_strength_pure_noise(self):
        # with a zero target the labels are pure noise, so any amount of
        # extra shrinkage can only reduce the generalization error
        chain = constants_chain(activations.tanh(), 1)
        n, d, p = 300, 200, 450
        theta_star = np.zeros(p)
        gens = []
        for lam in (1e-3, 1e-1, 10.0):
            sol = cgmt.solve_same_size(1, n, d, p, chain,
                                       Regularizer.ridge(lam), 0.5,
                                       theta_star)
            gens.append(sol.gen_pred)
        assert gens[0] > gens[1] > gens[2]
        assert gens[2] >= 0.25 - 1e-9

    def test_noiseless_zero_target_is_exact(self):
        chain = constants_chain(activations.tanh(), 1)
        sol = cgmt.solve_same_size(1, 100, 80, 120, chain,
                                   Regularizer.ridge(1.0), 0.0,
                                   np.zeros(120))
        assert sol.value == 0.0
        assert sol.gen_pred == 0.0

    def test_rejects_degenerate_mean_multiplier(self):
        class FakeLayer:
            rho1 = 0.0
            rho2 = 0.5
        with pytest.raises(ValueError):
            cgmt.solve_same_size(1, 100, 80, 120, [FakeLayer()],
                                 Regularizer.ridge(1.0), 0.5,
                                 np.zeros(120))

    def test_rejects_unknown_base_convention(self):
        chain = constants_chain(activations.tanh(), 1)
        with pytest.raises(ValueError):
            cgmt.solve_same_size(1, 100, 80, 120, chain,
                                 Regularizer.ridge(1.0), 0.5, np.zeros(120),
                                 t0_convention="other")

    def test_rejects_wrong_target_shape(self):
        chain = constants_chain(activations.tanh(), 1)
        with pytest.raises(ValueError):
            cgmt.solve_same_size(1, 100, 80, 120, chain,
                                 Regularizer.ridge(1.0), 0.5, np.zeros(80))

    def test_reported_state_is_stationary(self, mc_rows):
        row = mc_rows["L2_tanh_ridge_lo_g1.5"]
        L, n, dims, chain, reg, sigma_nu = _row_setup(row)
        sol = cgmt.solve_general(L, n, dims, chain, reg, sigma_nu,
                                 _theta_unit(dims[-1]), seed=0)
        res = sol.diagnostics["stationarity_residuals"]
        assert set(res) >= {"beta", "q"}
        assert all(v <= 1e-6 for v in res.values())
        st = sol.state
        assert st.beta > 0 and st.q > 0
        assert len(st.chi) == L and len(st.k) == L
        assert all(c > 0 for c in st.chi) and all(k > 0 for k in st.k)
        assert len(st.xi) == L and len(st.t) == L
        assert st.nu_e > 0
