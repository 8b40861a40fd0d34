"""The four PMF-recovery approaches."""

import numpy as np
import pytest

import demask as dm
from demask.errors import InfeasibleStartError, RankDeficientError, ValidationError


def identity_model(obs):
    scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.point_mass(0))
    mix = dm.build_mixing_matrix((0, len(obs) - 1), scheme)
    return dm.LikelihoodModel(mix, np.asarray(obs), tuple((v,) for v in range(len(obs))))


def generated_model(n=200_000, gen_seed=4, mask_seed=20260810):
    raw = dm.gen_poisson_mixture(dm.GeneratorConfig(n=n, seed=gen_seed))
    scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(0, 10))
    masked = dm.mask(raw, scheme, seed=mask_seed)
    return dm.model_from_published(dm.publish(masked, scheme)), raw


def random_full_rank_model(rng):
    x_len = int(rng.integers(3, 9))
    noise_len = int(rng.integers(2, 5))
    q = rng.dirichlet(np.ones(noise_len)) + 0.05
    noise = dm.NoiseSpec(dm.Pmf(0, q / q.sum()))
    scheme = dm.ObfuscationScheme(noise=noise)
    mix = dm.build_mixing_matrix((0, x_len - 1), scheme)
    p = rng.dirichlet(np.ones(x_len))
    obs = rng.multinomial(5000, mix.apply(p))
    return dm.LikelihoodModel(mix, obs, tuple((v,) for v in range(x_len)))


class TestLsConstrained:
    def test_identity_noise_returns_empirical(self):
        obs = np.array([12, 30, 58])
        model = identity_model(obs)
        rep = dm.ls_constrained(model)
        np.testing.assert_allclose(rep.p_hat, obs / obs.sum(), atol=1e-12)
        assert rep.negative_components == ()

    def test_sum_to_one_constraint_always_holds(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            model = random_full_rank_model(rng)
            rep = dm.ls_constrained(model)
            assert rep.p_hat.sum() == pytest.approx(1.0, abs=1e-9)

    def test_generated_dataset_has_negative_components(self):
        model, _ = generated_model()
        rep = dm.ls_constrained(model)
        assert len(rep.negative_components) >= 1
        rep_qr = dm.ls_constrained(model, use_qr=True)
        assert len(rep_qr.negative_components) >= 1

    def test_solver_paths_agree(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            model = random_full_rank_model(rng)
            plain = dm.ls_constrained(model).p_hat
            via_qr = dm.ls_constrained(model, use_qr=True).p_hat
            np.testing.assert_allclose(plain, via_qr, atol=1e-8)

    def test_rank_deficiency_names_columns(self):
        # duplicated column makes the design singular
        scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(0, 1))
        base = dm.build_mixing_matrix((0, 3), scheme)
        M = base.matrix.copy()
        M[:, 2] = M[:, 1]
        mix = dm.MixingMatrix(M, base.x_values, base.z_values, None)
        model = dm.LikelihoodModel(mix, np.ones(mix.n_rows, dtype=int), tuple((v,) for v in range(4)))
        with pytest.raises(RankDeficientError) as err:
            dm.ls_constrained(model)
        assert len(err.value.columns) >= 1


class TestMleForward:
    def test_identity_noise_two_classes(self):
        rep = dm.mle_forward(np.array([30, 70]), m=1, x_len=2)
        np.testing.assert_allclose(rep.p_hat, [0.3, 0.7])
        assert rep.warnings == ()

    def test_scale_factor_on_first_component(self):
        # r_0 = 0.02 with m = 11 noise values gives p_0 = 0.22
        obs = np.zeros(23)
        obs[0] = 20
        obs[1:] = 980 / 22
        rep = dm.mle_forward(obs, m=11, x_len=13)
        assert rep.p_hat[0] == pytest.approx(0.22)

    def test_exact_r_recovers_growing_window(self):
        # oracle: forward substitution is exact while the window grows
        rng = np.random.default_rng(16)
        p = rng.dirichlet(np.ones(13))
        scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(0, 10))
        mix = dm.build_mixing_matrix((0, 12), scheme)
        obs = 1e6 * mix.apply(p)
        rep = dm.mle_forward(obs, m=11, x_len=13)
        np.testing.assert_allclose(rep.p_hat[:11], p[:11], atol=1e-9)
        # the j = 11 component carries the window-overlap bias p[11] - p[0]
        assert rep.p_hat[11] == pytest.approx(p[11] - p[0], abs=1e-9)
        assert any("window" in w for w in rep.warnings)

    def test_window_warning_only_when_overlapping(self):
        assert dm.mle_forward(np.array([10, 20, 10]), m=2, x_len=2).warnings == ()
        assert dm.mle_forward(np.array([10, 20, 10, 5]), m=2, x_len=3).warnings != ()

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            dm.mle_forward(np.array([10, 20]), m=2, x_len=2)


class TestMleBackward:
    def test_identity_noise_two_classes(self):
        rep = dm.mle_backward(np.array([30, 70]), m=1, x_len=2)
        np.testing.assert_allclose(rep.p_hat, [0.3, 0.7])

    def test_reversal_symmetry(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            x_len = int(rng.integers(2, 10))
            m = int(rng.integers(1, 6))
            obs = rng.integers(1, 100, size=x_len + m - 1).astype(float)
            bwd = dm.mle_backward(obs, m, x_len).p_hat
            fwd_rev = dm.mle_forward(obs[::-1], m, x_len).p_hat[::-1]
            np.testing.assert_allclose(bwd, fwd_rev, atol=1e-12)

    def test_exact_r_recovers_top_components(self):
        rng = np.random.default_rng(18)
        p = rng.dirichlet(np.ones(13))
        scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(0, 10))
        mix = dm.build_mixing_matrix((0, 12), scheme)
        obs = 1e6 * mix.apply(p)
        rep = dm.mle_backward(obs, m=11, x_len=13)
        np.testing.assert_allclose(rep.p_hat[2:], p[2:], atol=1e-9)


class TestMleCombined:
    def test_monotone_increasing_uses_forward(self):
        # point mass at the top of the support: masked histogram is flat,
        # plateaus count as rising, so the rule degenerates to forward
        p = np.zeros(4)
        p[3] = 1.0
        scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(0, 2))
        mix = dm.build_mixing_matrix((0, 3), scheme)
        obs = 3000 * mix.apply(p)
        combined = dm.mle_combined(obs, m=3, x_len=4).p_hat
        fwd = dm.mle_forward(obs, m=3, x_len=4).p_hat
        np.testing.assert_allclose(combined, fwd / fwd.sum(), atol=1e-12)

    def test_unimodal_masked_histogram_no_negatives(self):
        model, raw = generated_model()
        obs = model.obs
        rep = dm.mle_combined(obs, m=11, x_len=13)
        assert rep.negative_components == ()
        # and it lands near the true proportions
        assert np.max(np.abs(rep.p_hat - raw.counts / raw.total)) < 0.05

    def test_oscillating_histogram_flagged(self):
        obs = np.array([10.0, 50, 12, 48, 14, 46, 16])
        rep = dm.mle_combined(obs, m=3, x_len=5)
        assert any("rises and falls" in w for w in rep.warnings)

    def test_sums_to_one(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            x_len = int(rng.integers(3, 8))
            m = int(rng.integers(2, 5))
            obs = rng.integers(1, 100, size=x_len + m - 1).astype(float)
            rep = dm.mle_combined(obs, m, x_len)
            assert rep.p_hat.sum() == pytest.approx(1.0, abs=1e-9)


def exhaustive_grid_best(obs, resolution=1000):
    """Oracle: exhaustive search over the 0.001-resolution 3-class simplex."""
    obs = np.asarray(obs, dtype=float)
    best = -np.inf
    for i in range(resolution + 1):
        for j in range(resolution + 1 - i):
            p = np.array([i, j, resolution - i - j], dtype=float) / resolution
            terms = obs > 0
            if np.any(p[terms] <= 0):
                continue
            best = max(best, float(obs[terms] @ np.log(p[terms])))
    return best


class TestCoordinateMle:
    def test_two_class_exact_grid_point(self):
        # closed-form multinomial MLE (0.3, 0.7) lies exactly on the grid
        model = identity_model([30, 70])
        rep = dm.coordinate_mle(model, grid=1000)
        assert rep.p_hat[0] == 0.3
        assert rep.p_hat[1] == 0.7
        assert rep.negative_components == ()

    def test_output_on_simplex(self):
        model, _ = generated_model(n=50_000)
        rep = dm.coordinate_mle(model)
        assert np.all(rep.p_hat >= 0)
        assert abs(rep.p_hat.sum() - 1.0) < 1e-12

    def test_monotone_loglik_trace(self):
        model, _ = generated_model(n=50_000)
        rep = dm.coordinate_mle(model, record_trace=True)
        trace = rep.trace
        assert trace is not None and len(trace) > 0
        # non-decreasing across every pair update, modulo the per-epoch
        # refresh of the cached masked probabilities (even that slack is
        # orders of magnitude below any likelihood movement)
        diffs = np.diff(trace[np.isfinite(trace)])
        assert np.all(diffs >= -1e-9 * (1 + np.abs(trace[np.isfinite(trace)][1:])))

    def test_small_identity_instances_match_grid_oracle(self):
        rng = np.random.default_rng(20)
        for _ in range(8):
            obs = rng.integers(0, 31, size=3)
            if obs.sum() == 0:
                obs[0] = 1
            model = identity_model(obs)
            rep = dm.coordinate_mle(model, grid=1000)
            oracle = exhaustive_grid_best(obs, resolution=1000)
            assert rep.final_loglik >= oracle - 1e-6

    def test_infeasible_start_raises(self):
        model = identity_model([1, 1, 1])
        with pytest.raises(InfeasibleStartError):
            dm.coordinate_mle(model, init=np.array([1.0, 0.0, 0.0]))

    def test_strictly_positive_init_recovers(self):
        model = identity_model([1, 1, 1])
        rep = dm.coordinate_mle(model)
        np.testing.assert_allclose(rep.p_hat, [1 / 3, 1 / 3, 1 / 3], atol=1e-3)

    def test_paper_scale_accuracy(self):
        model, raw = generated_model(n=200_000)
        rep = dm.coordinate_mle(model, grid=1000, tol=1e-8)
        true_p = raw.counts / raw.total
        assert np.max(np.abs(rep.p_hat - true_p)) <= 0.02

    def test_kernel_backends_agree(self):
        from demask._kernels import (
            pair_structure,
            sweep_epoch_numba,
            sweep_epoch_numpy,
        )

        model, _ = generated_model(n=50_000)
        if sweep_epoch_numba is None:
            pytest.skip("numba backend unavailable")
        M = model.mixing.matrix
        obs = model.obs.astype(float)
        ptr, rows, diff, w = pair_structure(M, obs)
        pos_rows = np.flatnonzero(obs > 0).astype(np.int64)
        pos_w = obs[pos_rows]

        results = []
        for sweep in (sweep_epoch_numba, sweep_epoch_numpy):
            p = np.full(model.x_len, 1.0 / model.x_len)
            p[-1] = 1.0 - p[:-1].sum()
            r = M @ p
            ll = float(pos_w @ np.log(r[pos_rows]))
            for _ in range(5):
                _, ll, trace, _, _ = sweep(p, r, ptr, rows, diff, w, pos_rows, pos_w, 1000, ll)
            results.append((p.copy(), ll))
        np.testing.assert_allclose(results[0][0], results[1][0], atol=1e-9)
        assert results[0][1] == pytest.approx(results[1][1], abs=1e-8)


class TestMergeClasses:
    def test_identity_merge_pools_empirical_probabilities(self):
        obs = np.array([10, 20, 30, 40])
        model = identity_model(obs)
        merged = dm.merge_classes(model, 1)
        rep = dm.coordinate_mle(merged, grid=1000)
        pooled = (obs[1] + obs[2]) / obs.sum()
        assert rep.p_hat[1] == pytest.approx(pooled, abs=2e-3)
        assert merged.groups == ((0,), (1, 2), (3,))

    def test_column_sums_stay_one(self):
        scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(0, 3))
        mix = dm.build_mixing_matrix((0, 6), scheme)
        model = dm.LikelihoodModel(mix, np.ones(mix.n_rows, dtype=int), tuple((v,) for v in range(7)))
        merged = dm.merge_classes(model, 2)
        np.testing.assert_allclose(merged.mixing.matrix.sum(axis=0), 1.0, atol=1e-12)
        again = dm.merge_classes(merged, 2)
        np.testing.assert_allclose(again.mixing.matrix.sum(axis=0), 1.0, atol=1e-12)
        assert again.groups[2] == (2, 3, 4)

    def test_single_class_rejected(self):
        scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.point_mass(0))
        mix = dm.build_mixing_matrix((0, 0), scheme)
        model = dm.LikelihoodModel(mix, np.array([5]), ((0,),))
        with pytest.raises(ValidationError):
            dm.merge_classes(model, 0)

    def test_empty_masked_class_merge_improves_affected_window(self):
        # Sampled dataset with an interior masked class that drew zero
        # observations (value 21; its convolution window is x in {11, 12}).
        # Merging the affected top pair restores the estimate there.
        decay = 0.55
        p_true = decay ** np.arange(13) * (1 - decay)
        p_true /= p_true.sum()
        scheme = dm.ObfuscationScheme(noise=dm.NoiseSpec.uniform(0, 10))
        mix = dm.build_mixing_matrix((0, 12), scheme)
        obs = np.random.default_rng(19).multinomial(30_000, mix.apply(p_true))
        assert obs[21] == 0 and obs[22] > 0  # the frozen empty-class instance

        groups = tuple((v,) for v in range(13))
        model = dm.LikelihoodModel(mix, obs, groups)

        def unfolded_window_error(report):
            per_value = {}
            for g, mass in zip(report.groups, report.p_hat):
                for v in g:
                    per_value[v] = mass / len(g)
            return max(abs(per_value[v] - p_true[v]) for v in (11, 12))

        err_pre = unfolded_window_error(dm.coordinate_mle(model))
        merged = dm.merge_classes(model, 11)
        err_post = unfolded_window_error(dm.coordinate_mle(merged))
        assert err_post < err_pre
