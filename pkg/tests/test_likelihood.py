"""Log-likelihood evaluation, incremental pair updates, and the nested
logistic reparameterization with its analytic gradient."""

import numpy as np
import pytest
from scipy import optimize

import demask as dm
from demask import _kernels
from demask.errors import ValidationError


def identity_model(obs):
    scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.point_mass(0))
    mix = dm.build_mixing_matrix((0, len(obs) - 1), scheme)
    return dm.LikelihoodModel(mix, np.asarray(obs), tuple((v,) for v in range(len(obs))))


def household_truncated_model(obs=None):
    """X {1..22}, uniform{1..10} noise, plain rows z = 2..22 plus a tail."""
    scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(1, 10), truncation_at=23)
    mix = dm.build_mixing_matrix((1, 22), scheme)
    if obs is None:
        rng = np.random.default_rng(5)
        obs = rng.integers(1, 1000, size=mix.n_rows)
    return dm.LikelihoodModel(mix, obs, tuple((v,) for v in range(1, 23)))


class TestLoglik:
    def test_closed_form_two_classes(self):
        model = identity_model([30, 70])
        expected = 30 * np.log(0.3) + 70 * np.log(0.7)
        assert dm.loglik(model, np.array([0.3, 0.7])) == pytest.approx(expected)

    def test_zero_probability_on_observed_class_is_neg_inf(self):
        model = identity_model([5, 5])
        assert dm.loglik(model, np.array([1.0, 0.0])) == -np.inf

    def test_zero_count_zero_probability_contributes_nothing(self):
        model = identity_model([10, 0])
        assert dm.loglik(model, np.array([1.0, 0.0])) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        model = identity_model([5, 5])
        with pytest.raises(ValidationError):
            dm.loglik(model, np.array([0.5, 0.25, 0.25]))

    def test_truncated_tail_matches_count_scale_formula(self):
        # Independent oracle: the count-scale tail expression
        # 10 - 10*(x1+...+x12) - 9*x13 - 8*x14 - ... - 2*x20 - x21
        # (1-based labels) equals 10 * r_tail, so the model's tail term
        # obs_tail * log(r_tail) must equal obs_tail * (log-expression)
        # plus the constant obs_tail * log(1/10).
        model = household_truncated_model()
        obs_tail = model.obs[-1]
        coeff = np.zeros(22)
        coeff[:12] = 10.0
        coeff[12:21] = np.arange(9, 0, -1)
        rng = np.random.default_rng(123)
        for _ in range(5):
            p = rng.dirichlet(np.ones(22))
            r_tail = model.mixing.matrix[-1] @ p
            model_term = obs_tail * np.log(r_tail)
            paper_scale = obs_tail * np.log(10.0 - coeff @ p)
            assert model_term == pytest.approx(
                paper_scale + obs_tail * np.log(1.0 / 10.0), rel=1e-10
            )

    def test_row_scaling_shifts_but_preserves_argmax(self):
        model = household_truncated_model()
        scale = 10.0
        scaled_mix = dm.MixingMatrix(
            model.mixing.matrix * scale,
            model.mixing.x_values,
            model.mixing.z_values,
            model.mixing.truncation_at,
        )
        scaled = dm.LikelihoodModel(scaled_mix, model.obs, model.groups)
        rng = np.random.default_rng(4)
        candidates = [rng.dirichlet(np.ones(22)) for _ in range(40)]
        base = [dm.loglik(model, p) for p in candidates]
        shifted = [dm.loglik(scaled, p) for p in candidates]
        assert int(np.argmax(base)) == int(np.argmax(shifted))
        total = model.obs.sum()
        for b, s in zip(base, shifted):
            assert s - b == pytest.approx(total * np.log(scale), rel=1e-12)

    def test_identity_noise_maximized_at_empirical(self):
        # grid oracle at resolution 0.01 over the 3-class simplex
        obs = np.array([12, 5, 8])
        model = identity_model(obs)
        emp = obs / obs.sum()
        best = -np.inf
        for i in range(101):
            for j in range(101 - i):
                p = np.array([i / 100, j / 100, 1.0 - i / 100 - j / 100])
                best = max(best, dm.loglik(model, np.abs(p) / np.abs(p).sum()))
        assert dm.loglik(model, emp) >= best - 1e-12


class TestLoglikDelta:
    def test_no_change_equals_loglik(self):
        model = household_truncated_model()
        rng = np.random.default_rng(1)
        p = rng.dirichlet(np.ones(22))
        full = dm.loglik(model, p)
        assert dm.loglik_delta(model, p, 4, p[4], p[5]) == pytest.approx(full, abs=1e-12)

    def test_matches_full_recomputation(self):
        model = household_truncated_model()
        rng = np.random.default_rng(2)
        for _ in range(100):
            p = rng.dirichlet(np.ones(22))
            i = int(rng.integers(0, 21))
            s = p[i] + p[i + 1]
            frac = rng.random()
            new_pi, new_pi1 = s * frac, s * (1 - frac)
            p2 = p.copy()
            p2[i], p2[i + 1] = new_pi, new_pi1
            delta_val = dm.loglik_delta(model, p, i, new_pi, new_pi1)
            full_val = dm.loglik(model, p2 / p2.sum())
            assert delta_val == pytest.approx(full_val, abs=1e-10)

    def test_mass_conservation_enforced(self):
        model = identity_model([5, 5, 5])
        with pytest.raises(ValidationError):
            dm.loglik_delta(model, np.array([0.4, 0.3, 0.3]), 0, 0.5, 0.5)

    def test_identity_noise_pair_touches_two_rows(self):
        # with identity noise, column i is nonzero only at row i, so pair
        # (i, i+1) can affect exactly rows {i, i+1}
        obs = np.array([3, 4, 5, 6])
        model = identity_model(obs)
        ptr, rows, _, _ = _kernels.pair_structure(
            model.mixing.matrix, model.obs.astype(float)
        )
        for i in range(3):
            assert rows[ptr[i]:ptr[i + 1]].tolist() == [i, i + 1]


class TestNestedLogistic:
    def test_single_zero(self):
        np.testing.assert_allclose(dm.nested_logistic(np.array([0.0])), [0.5])

    def test_two_zeros(self):
        np.testing.assert_allclose(
            dm.nested_logistic(np.array([0.0, 0.0])), [1 / 3, 1 / 2]
        )

    def test_strictly_increasing_and_bounded(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            u = rng.normal(0, 3, size=10)
            r = dm.nested_logistic(u)
            assert np.all(np.diff(r) > 0)
            assert np.all(r > 0) and np.all(r < 1)

    def test_extreme_inputs_do_not_overflow(self):
        r = dm.nested_logistic(np.array([-800.0, 0.0, 800.0]))
        assert np.all(np.isfinite(r))
        assert np.all(r >= 0) and np.all(r <= 1)
        r2 = dm.nested_logistic(np.full(5, 750.0))
        assert np.all(np.isfinite(r2))


def _valid_cumulative_point(rng, n):
    """Draw u where the residual class 1 - sum(r) stays positive."""
    while True:
        u = rng.normal(-3.0, 0.5, size=n)
        if 1.0 - dm.nested_logistic(u).sum() > 1e-3:
            return u


class TestNestedLogisticGrad:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(77)
        n = 9  # 10 observed classes
        counts = rng.integers(1, 50, size=n + 1).astype(float)
        h = 1e-6
        for _ in range(20):
            u = _valid_cumulative_point(rng, n)
            grad = dm.nested_logistic_loglik_grad(counts, u)
            for k in range(n):
                up, down = u.copy(), u.copy()
                up[k] += h
                down[k] -= h
                fd = (
                    dm.cumulative_loglik(counts, up)
                    - dm.cumulative_loglik(counts, down)
                ) / (2 * h)
                assert grad[k] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_gradient_vanishes_at_optimum(self):
        rng = np.random.default_rng(88)
        n = 6
        counts = rng.integers(5, 60, size=n + 1).astype(float)

        def neg(u):
            val = dm.cumulative_loglik(counts, u)
            return np.inf if not np.isfinite(val) else -val

        def neg_grad(u):
            return -dm.nested_logistic_loglik_grad(counts, u)

        res = optimize.minimize(
            neg,
            _valid_cumulative_point(rng, n),
            jac=neg_grad,
            method="BFGS",
            options={"gtol": 1e-10, "maxiter": 500},
        )
        # polish: Newton-CG converges quadratically from the BFGS point
        res = optimize.minimize(
            neg, res.x, jac=neg_grad, method="Newton-CG", options={"xtol": 1e-12}
        )
        grad_norm = np.linalg.norm(dm.nested_logistic_loglik_grad(counts, res.x))
        assert grad_norm < 1e-6

    def test_support_structure_single_observed_class(self):
        # only counts[j] > 0 for one j >= 1: coordinates below j never enter
        n = 8
        j = 5
        counts = np.zeros(n + 1)
        counts[j] = 10.0
        rng = np.random.default_rng(9)
        u = _valid_cumulative_point(rng, n)
        grad = dm.nested_logistic_loglik_grad(counts, u)
        np.testing.assert_allclose(grad[: j - 1], 0.0, atol=1e-15)
        assert np.all(grad[j - 1 :] != 0.0)
