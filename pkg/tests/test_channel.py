import numpy as np
import pytest

import blockveil as bv
from conftest import contiguous_structure


class TestGenerators:
    def test_gaussian_entry_variance(self):
        ch = bv.gen_gaussian_channel(200, 400, 3)
        assert ch.A.shape == (200, 400)
        assert abs(ch.A.var() * 200 - 1.0) < 0.05

    def test_gaussian_rank_one_case(self):
        ch = bv.gen_gaussian_channel(1, 2, 0)
        assert np.linalg.matrix_rank(ch.M) == 1
        assert np.allclose(ch.P, ch.M * ch.M)

    def test_deterministic_given_seed(self):
        a = bv.gen_gaussian_channel(6, 12, 42).A
        b = bv.gen_gaussian_channel(6, 12, 42).A
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("m,n", [(4, 4), (5, 4), (0, 4), (4, 0)])
    def test_bad_dimensions_rejected(self, m, n):
        with pytest.raises(ValueError):
            bv.gen_gaussian_channel(m, n, 0)
        with pytest.raises(ValueError):
            bv.gen_isotropic_channel(m, n, 0)

    def test_isotropic_unit_columns(self):
        ch = bv.gen_isotropic_channel(2, 3, 9)
        assert np.allclose(np.linalg.norm(ch.A, axis=0), 1.0, atol=1e-12)
        big = bv.gen_isotropic_channel(16, 64, 9)
        assert np.allclose(np.diag(big.M), 1.0, atol=1e-12)

    def test_isotropic_mean_gram_square(self):
        # E[P] = I + (J - I)/m for unit isotropic columns
        m, n, draws = 4, 8, 2000
        seeds = np.random.SeedSequence(21).spawn(draws)
        acc = np.zeros((n, n))
        for s in seeds:
            acc += bv.gen_isotropic_channel(m, n, s).P
        expected = np.eye(n) + (np.ones((n, n)) - np.eye(n)) / m
        assert np.abs(acc / draws - expected).max() < 0.02
        # off-diagonal mean within 2% of 1/m
        mean_off = (acc / draws)[~np.eye(n, dtype=bool)].mean()
        assert abs(mean_off - 1 / m) < 0.02 / m

    def test_gram_caches_consistent(self):
        for gen in (bv.gen_gaussian_channel, bv.gen_isotropic_channel):
            ch = gen(6, 15, 5)
            assert np.allclose(ch.M, ch.A.T @ ch.A, rtol=1e-12, atol=1e-12)
            assert np.allclose(ch.P, ch.M * ch.M, rtol=1e-12, atol=1e-12)
            assert np.array_equal(ch.M, ch.M.T)
            assert np.all(ch.P >= 0)


class TestFourthOrder:
    def test_gamma_worked_example(self):
        assert bv.gamma_constant(4, 2, 2) == pytest.approx(1.5)

    def test_singleton_blocks_zero_matrix(self):
        ch = bv.gen_gaussian_channel(3, 6, 1)
        bs = contiguous_structure(6, 6)  # d = 1
        fom = bv.fourth_order_matrices(ch, bs)
        assert np.allclose(fom.E_B, 0.0, atol=1e-14)
        assert fom.gamma == 0.0
        naive = bv.fourth_order_naive(ch, bs)
        assert np.allclose(naive.E_B, 0.0, atol=1e-14)

    def test_single_block_reduces_to_unrestricted_sum(self):
        ch = bv.gen_gaussian_channel(3, 6, 2)
        fom = bv.fourth_order_matrices(ch, contiguous_structure(6, 1))
        assert np.allclose(fom.E_B, fom.F, atol=1e-12)

    def test_two_column_single_block_entry(self):
        ch = bv.gen_gaussian_channel(1, 2, 7)
        fom = bv.fourth_order_naive(ch, contiguous_structure(2, 1))
        m = ch.M
        assert fom.E_B[0, 0] == pytest.approx(2 * m[0, 0] ** 2 * m[0, 1] ** 2)

    def test_unrestricted_sum_ignores_partition(self):
        ch = bv.gen_gaussian_channel(4, 8, 3)
        f1 = bv.fourth_order_matrices(ch, bv.random_block_structure(8, 2, 1)).F
        f2 = bv.fourth_order_matrices(ch, bv.random_block_structure(8, 4, 2)).F
        assert np.allclose(f1, f2, atol=1e-12)

    def test_row_product_identity(self):
        ch = bv.gen_gaussian_channel(4, 10, 4)
        fom = bv.fourth_order_matrices(ch, contiguous_structure(10, 5))
        AA = ch.A * ch.A
        assert np.abs(fom.G + AA.T @ AA - ch.P).max() < 1e-10

    def test_closed_forms_match_naive_sums(self):
        # the production identities against the literal transcription
        rng = np.random.default_rng(50)
        for trial in range(50):
            n = int(rng.integers(4, 13))
            divisors = [r for r in range(1, n + 1) if n % r == 0]
            r = int(rng.choice(divisors))
            m = int(rng.integers(2, n))
            ch = bv.gen_gaussian_channel(m, n, rng)
            bs = bv.random_block_structure(n, r, rng)
            fast = bv.fourth_order_matrices(ch, bs)
            naive = bv.fourth_order_naive(ch, bs)
            assert np.abs(fast.E_B - naive.E_B).max() < 1e-10
            assert np.abs(fast.F - naive.F).max() < 1e-10
            assert np.abs(fast.G - naive.G).max() < 1e-10

    def test_naive_size_guard(self):
        ch = bv.gen_gaussian_channel(4, 80, 0)
        with pytest.raises(ValueError):
            bv.fourth_order_naive(ch, contiguous_structure(80, 8))

    def test_dimension_mismatch_rejected(self):
        ch = bv.gen_gaussian_channel(4, 8, 0)
        with pytest.raises(ValueError):
            bv.fourth_order_matrices(ch, contiguous_structure(6, 2))

    def test_symmetry(self):
        ch = bv.gen_gaussian_channel(5, 12, 8)
        fom = bv.fourth_order_matrices(ch, bv.random_block_structure(12, 3, 9))
        for mat in (fom.E_B, fom.F, fom.G):
            assert np.array_equal(mat, mat.T)

    @pytest.mark.slow
    def test_centered_diagonal_concentration_isotropic(self):
        # spectral deviation of E_B from gamma*I stays below the analytic
        # envelope scaled by the observed inner-product spread
        for n in (32, 64):
            m, d = n // 2, 4
            bound_base = (6 * np.sqrt(2) * np.sqrt(n) * np.log(n) * d
                          * max(1 / m**2, n / m**4))
            seeds = np.random.SeedSequence(n).spawn(100)
            for s in seeds:
                ch = bv.gen_isotropic_channel(m, n, s)
                bs = bv.random_block_structure(n, n // d, s.spawn(1)[0])
                fom = bv.fourth_order_matrices(ch, bs)
                off = ch.P[~np.eye(n, dtype=bool)]
                eps = max(0.0, float(m * off.max() - 1.0),
                          float(np.abs(np.diag(ch.P) - 1.0).max()))
                dev = np.linalg.norm(fom.E_B - fom.gamma * np.eye(n), 2)
                assert dev <= bound_base * (1 + eps) ** 2


class TestCoherence:
    def test_orthonormal_square_matrix_first_bound(self):
        # diagnostic use: a square orthonormal matrix has operator norm 1
        ch = bv.ChannelMatrix.from_matrix(np.eye(8))
        report = bv.coherence_check(ch, contiguous_structure(8, 4), mu=1.0, nu=10.0)
        assert report.satisfied["a"]
        assert report.mu_required["a"] <= 1.0

    def test_isotropic_nu_requirement(self):
        ch = bv.gen_isotropic_channel(32, 64, 10)
        bs = bv.random_block_structure(64, 16, 11)
        report = bv.coherence_check(ch, bs, mu=1.0, nu=5.0)
        assert np.isfinite(report.nu_required) and report.nu_required > 0
        assert report.nu_required == pytest.approx(1.0 / report.lambda_min_p)
        assert not report.p_singular

    def test_zero_mu_fails_norm_bounds(self):
        ch = bv.gen_gaussian_channel(4, 8, 1)
        report = bv.coherence_check(ch, contiguous_structure(8, 2), mu=0.0, nu=10.0)
        for bound in "abcdef":
            assert not report.satisfied[bound]

    def test_singular_gram_square_flagged(self):
        A = np.ones((2, 4)) / np.sqrt(2)  # duplicated columns, P singular
        ch = bv.ChannelMatrix.from_matrix(A)
        report = bv.coherence_check(ch, contiguous_structure(4, 2), mu=1.0, nu=1e9)
        assert report.p_singular
        assert report.nu_required == np.inf
        assert not report.satisfied["g"]

    def test_gamma_variants_recorded(self):
        ch = bv.gen_isotropic_channel(4, 8, 2)
        report = bv.coherence_check(ch, contiguous_structure(8, 4), mu=1.0, nu=10.0)
        assert report.gamma == pytest.approx(bv.gamma_constant(8, 4, 2))
        assert report.gamma_quartic_variant == pytest.approx(
            2 * 1 / 16 + 6 * 1 / 256)

    def test_required_mu_is_minimal(self):
        ch = bv.gen_isotropic_channel(8, 16, 3)
        bs = bv.random_block_structure(16, 4, 4)
        report = bv.coherence_check(ch, bs, mu=1.0, nu=1e6)
        for bound, mu_req in report.mu_required.items():
            if bound == "g":
                assert np.isnan(mu_req)
                continue
            above = bv.coherence_check(ch, bs, mu=mu_req * 1.001, nu=1e6)
            below = bv.coherence_check(ch, bs, mu=mu_req * 0.999, nu=1e6)
            assert above.satisfied[bound]
            assert not below.satisfied[bound]


def test_channel_serialization_round_trip(tmp_path):
    ch = bv.gen_gaussian_channel(5, 9, 77)
    path = tmp_path / "channel.bin"
    bv.save_channel(path, ch)
    loaded = bv.load_channel(path)
    assert loaded.m == 5 and loaded.n == 9
    assert np.array_equal(loaded.A, ch.A)
    assert np.allclose(loaded.M, ch.M)
    assert loaded.seed == 77
    assert loaded.generator == "gaussian"


def test_channel_payload_length_checked(tmp_path):
    ch = bv.gen_gaussian_channel(3, 5, 0)
    path = tmp_path / "channel.bin"
    bv.save_channel(path, ch)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError):
        bv.load_channel(path)
