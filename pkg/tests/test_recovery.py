import numpy as np
import pytest

import blockveil as bv
from conftest import contiguous_structure


def one_sparse_oracle(A, y):
    """Exhaustive single-column least squares: the best 1-sparse fit."""
    best = (np.inf, 0, 0.0)
    for j in range(A.shape[1]):
        a = A[:, j]
        c = float(a @ y / (a @ a))
        resid = np.linalg.norm(y - c * a)
        if resid < best[0]:
            best = (resid, j, c)
    x = np.zeros(A.shape[1])
    x[best[1]] = best[2]
    return x


def block_oracle(A, y, support):
    """Least squares restricted to the true block support."""
    x = np.zeros(A.shape[1])
    x[support] = np.linalg.lstsq(A[:, support], y, rcond=None)[0]
    return x


class TestBasisPursuit:
    def test_zero_observation_zero_solution(self):
        ch = bv.gen_gaussian_channel(6, 12, 0)
        sol = bv.basis_pursuit(ch, np.zeros(6), bv.SolverOptions(epsilon=0.0))
        assert np.allclose(sol.x_hat, 0.0, atol=1e-9)
        assert sol.converged

    def test_one_sparse_recovery_matches_oracle(self, rng):
        for trial in range(10):
            ch = bv.gen_gaussian_channel(20, 40, rng)
            x = np.zeros(40)
            x[rng.integers(40)] = rng.standard_normal() + np.sign(rng.standard_normal())
            y = ch.A @ x
            sol = bv.basis_pursuit(ch, y, x_true=x)
            oracle = one_sparse_oracle(ch.A, y)
            assert sol.rel_error < 1e-3
            assert np.linalg.norm(sol.x_hat - oracle) < 1e-3 * np.linalg.norm(oracle)

    def test_objective_never_exceeds_feasible_truth(self, rng):
        # the truth is feasible in the noiseless run, so the minimum found
        # cannot have larger l1 norm
        for trial in range(8):
            ch = bv.gen_gaussian_channel(30, 60, rng)
            x = np.zeros(60)
            idx = rng.choice(60, 5, replace=False)
            x[idx] = rng.standard_normal(5)
            sol = bv.basis_pursuit(ch, ch.A @ x)
            assert sol.converged
            opt_tol = 1e-5 * np.abs(x).sum() + 1e-8
            assert np.abs(sol.x_hat).sum() <= np.abs(x).sum() + opt_tol

    def test_feasibility_on_convergence(self, rng):
        for sigma2 in (0.0, 0.05):
            ch = bv.gen_gaussian_channel(30, 60, rng)
            x = np.zeros(60)
            x[rng.choice(60, 4, replace=False)] = rng.standard_normal(4)
            y = ch.A @ x + (rng.normal(0, np.sqrt(sigma2), 30) if sigma2 else 0.0)
            opts = bv.SolverOptions().with_noise(sigma2, 30)
            sol = bv.basis_pursuit(ch, y, opts)
            if sol.converged:
                assert sol.residual <= opts.epsilon + opts.feas_tol


class TestBlockBasisPursuit:
    def test_zero_observation(self):
        ch = bv.gen_gaussian_channel(6, 12, 0)
        bs = contiguous_structure(12, 4)
        sol = bv.block_basis_pursuit(ch, np.zeros(6), bs)
        assert np.allclose(sol.x_hat, 0.0, atol=1e-9)

    def test_single_block_recovery_vs_support_oracle(self, rng):
        for trial in range(10):
            d = 6
            ch = bv.gen_gaussian_channel(20, 48, rng)  # m >= 2d with margin
            bs = bv.random_block_structure(48, 8, rng)
            q = int(rng.integers(8))
            x = np.zeros(48)
            x[bs.block_indices(q)] = rng.standard_normal(d)
            y = ch.A @ x
            sol = bv.block_basis_pursuit(ch, y, bs, x_true=x)
            oracle = block_oracle(ch.A, y, bs.block_indices(q))
            assert sol.rel_error < 1e-3
            assert np.linalg.norm(sol.x_hat - oracle) < 1e-3 * np.linalg.norm(oracle)

    def test_group_objective_never_exceeds_feasible_truth(self, rng):
        for trial in range(8):
            ch = bv.gen_gaussian_channel(30, 60, rng)
            bs = bv.random_block_structure(60, 10, rng)
            x = np.zeros(60)
            for q in rng.choice(10, 2, replace=False):
                x[bs.block_indices(q)] = rng.standard_normal(6)
            sol = bv.block_basis_pursuit(ch, ch.A @ x, bs)
            assert sol.converged
            gnorm = lambda z: sum(np.linalg.norm(z[g]) for g in bs.blocks())
            assert gnorm(sol.x_hat) <= gnorm(x) + 1e-5 * gnorm(x) + 1e-8

    def test_accepts_label_arrays_and_groups(self, rng):
        ch = bv.gen_gaussian_channel(10, 20, rng)
        bs = bv.random_block_structure(20, 4, rng)
        x = np.zeros(20)
        x[bs.block_indices(1)] = rng.standard_normal(5)
        y = ch.A @ x
        ref = bv.block_basis_pursuit(ch, y, bs).x_hat
        via_labels = bv.block_basis_pursuit(ch, y, bs.assign).x_hat
        via_groups = bv.block_basis_pursuit(ch, y, bs.blocks()).x_hat
        assert np.allclose(ref, via_labels, atol=1e-10)
        assert np.allclose(ref, via_groups, atol=1e-10)

    def test_incomplete_grouping_rejected(self):
        ch = bv.gen_gaussian_channel(4, 8, 0)
        with pytest.raises(ValueError):
            bv.block_basis_pursuit(ch, np.zeros(4), [np.arange(4)])


class TestBlockGreedy:
    def test_single_block_one_iteration(self, rng):
        ch = bv.gen_gaussian_channel(12, 24, rng)
        bs = contiguous_structure(24, 6)
        x = np.zeros(24)
        x[bs.block_indices(2)] = rng.standard_normal(4)
        sol = bv.block_greedy(ch, ch.A @ x, bs, k_max=3, x_true=x)
        assert sol.iterations == 1
        assert sol.rel_error < 1e-9

    def test_zero_signal_zero_iterations(self):
        ch = bv.gen_gaussian_channel(6, 12, 0)
        sol = bv.block_greedy(ch, np.zeros(6), contiguous_structure(12, 3), k_max=2)
        assert sol.iterations == 0
        assert np.array_equal(sol.x_hat, np.zeros(12))

    def test_budget_validation(self):
        ch = bv.gen_gaussian_channel(6, 12, 0)
        with pytest.raises(ValueError):
            bv.block_greedy(ch, np.zeros(6), contiguous_structure(12, 3), k_max=4)

    def test_rank_deficient_selection_flagged(self, rng):
        # second selected block makes the refit underdetermined (m < 2d)
        d = 6
        ch = bv.gen_gaussian_channel(8, 24, rng)
        bs = contiguous_structure(24, 4)
        x = np.zeros(24)
        x[bs.block_indices(0)] = rng.standard_normal(d)
        x[bs.block_indices(1)] = rng.standard_normal(d)
        sol = bv.block_greedy(ch, ch.A @ x, bs, k_max=2)
        assert sol.rank_warning

    @pytest.mark.slow
    def test_success_rate_tracks_convex_decoder(self):
        # two active blocks of six, well inside both methods' range
        rng = np.random.default_rng(99)
        wins_greedy = wins_convex = 0
        trials = 200
        for _ in range(trials):
            ch = bv.gen_gaussian_channel(60, 120, rng)
            bs = bv.random_block_structure(120, 20, rng)
            x = np.zeros(120)
            for q in rng.choice(20, 2, replace=False):
                x[bs.block_indices(q)] = rng.standard_normal(6)
            y = ch.A @ x
            sg = bv.block_greedy(ch, y, bs, k_max=2, x_true=x)
            sc = bv.block_basis_pursuit(ch, y, bs, x_true=x)
            wins_greedy += sg.rel_error < 1e-3
            wins_convex += sc.rel_error < 1e-3
        assert abs(wins_greedy - wins_convex) <= 0.10 * trials


class TestMetrics:
    def test_success_exact_and_zero_cases(self):
        sol = bv.RecoverySolution(x_hat=np.array([1.0, 0.0]), residual=0.0,
                                  iterations=1, converged=True)
        assert bv.recovery_success(sol, np.array([1.0, 0.0]), 1e-3)
        assert not bv.recovery_success(
            bv.RecoverySolution(x_hat=np.zeros(2), residual=0.0, iterations=1,
                                converged=True), np.array([1.0, 0.0]), 1e-3)
        zero_sol = bv.RecoverySolution(x_hat=np.zeros(2), residual=0.0,
                                       iterations=0, converged=True)
        assert bv.recovery_success(zero_sol, np.zeros(2), 1e-3)

    def test_success_threshold_arithmetic(self):
        x = np.zeros(4)
        x[0] = 1.0
        x_hat = x.copy()
        x_hat[1] = 1e-5
        sol = bv.RecoverySolution(x_hat=x_hat, residual=0.0, iterations=1,
                                  converged=True)
        assert bv.recovery_success(sol, x, 1e-3)

    def test_ber_exact_and_flipped(self):
        x = np.array([1.0, -1.0, 0.0, 1.0])
        assert bv.ber_bpsk(x, x) == 0.0
        assert bv.ber_bpsk(-x, x) == 1.0
        assert bv.ber_bpsk(np.zeros(4), x) == 1.0

    def test_ber_all_zero_message(self):
        assert bv.ber_bpsk(np.ones(3), np.zeros(3)) == 0.0

    def test_ber_midpoint_rule(self):
        x = np.array([1.0, -1.0, 1.0, 0.0])
        x_hat = np.array([0.49, -0.51, 0.51, 2.0])  # inactive entries ignored
        assert bv.ber_bpsk(x_hat, x) == pytest.approx(1 / 3)

    def test_ber_length_mismatch(self):
        with pytest.raises(ValueError):
            bv.ber_bpsk(np.zeros(3), np.zeros(4))


class TestSolverOptions:
    def test_validation(self):
        with pytest.raises(ValueError):
            bv.SolverOptions(epsilon=-1.0)
        with pytest.raises(ValueError):
            bv.SolverOptions(over_relaxation=2.5)
        with pytest.raises(ValueError):
            bv.SolverOptions(max_iterations=0)

    def test_noise_radius_policy(self):
        m, sigma2 = 200, 0.2
        opts = bv.SolverOptions().with_noise(sigma2, m)
        expected = np.sqrt(sigma2) * np.sqrt(m + 2 * np.sqrt(m * np.log(m)))
        assert opts.epsilon == pytest.approx(expected)
        assert bv.SolverOptions().with_noise(0.0, m).epsilon == pytest.approx(1e-6)

    def test_noise_radius_covers_typical_noise(self):
        # the radius should exceed ||w|| with high probability
        rng = np.random.default_rng(4)
        m, sigma2 = 100, 0.3
        eps = bv.SolverOptions().with_noise(sigma2, m).epsilon
        norms = np.linalg.norm(rng.normal(0, np.sqrt(sigma2), (2000, m)), axis=1)
        assert (norms <= eps).mean() > 0.97


def test_same_structure_same_decoder_identical_bits(rng):
    # an eavesdropper who has found the exact partition matches the
    # legitimate receiver symbol for symbol
    ch = bv.gen_gaussian_channel(16, 32, rng)
    bs = bv.random_block_structure(32, 8, rng)
    x = np.zeros(32)
    x[bs.block_indices(3)] = rng.choice([-1.0, 1.0], 4)
    y = ch.A @ x + rng.normal(0, 0.05, 16)
    opts = bv.SolverOptions().with_noise(0.0025, 16)
    sol_a = bv.block_basis_pursuit(ch, y, bs, opts)
    sol_b = bv.block_basis_pursuit(ch, y, bs, opts)
    assert bv.ber_bpsk(sol_a.x_hat, x) == bv.ber_bpsk(sol_b.x_hat, x)
    assert np.array_equal(sol_a.x_hat, sol_b.x_hat)
