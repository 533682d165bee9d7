import itertools

import numpy as np
import pytest

from conftest import crandn
from ddlab.numerics import (BPSK, QAM16, QPSK, ComplexityError, Constellation, RngStream,
                            SingularMatrixError, awgn, circulant, constellation, determinant, dft,
                            dft_matrix, random_unitary, solve_least_squares)


def direct_dft(x):
    n = len(x)
    return np.array([sum(x[m] * np.exp(-2j * np.pi * k * m / n) for m in range(n)) for k in range(n)])


def cofactor_det(a):
    n = a.shape[0]
    if n == 1:
        return a[0, 0]
    return sum((-1) ** c * a[0, c] * cofactor_det(np.delete(a[1:], c, axis=1)) for c in range(n))


class TestDft:
    def test_impulse(self):
        np.testing.assert_allclose(dft([1, 0, 0, 0]), [1, 1, 1, 1])

    def test_dc(self):
        np.testing.assert_allclose(dft([1, 1, 1, 1]), [4, 0, 0, 0], atol=1e-15)

    def test_against_direct_sum(self, rng):
        x = crandn(rng, 16)
        assert np.max(np.abs(dft(x) - direct_dft(x))) <= 1e-12
        assert np.max(np.abs(dft(dft(x), inverse=True) - x)) <= 1e-12

    def test_inverse_scaling(self, rng):
        x = crandn(rng, 8)
        n = np.arange(8)
        ref = np.array([np.sum(x * np.exp(2j * np.pi * k * n / 8)) / 8 for k in range(8)])
        np.testing.assert_allclose(dft(x, inverse=True), ref, atol=1e-13)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dft([])

    def test_dft_matrix_unitary(self):
        f = dft_matrix(16)
        np.testing.assert_allclose(f.conj().T @ f, np.eye(16), atol=1e-12)
        x = np.arange(16.0)
        np.testing.assert_allclose(dft_matrix(16, unitary=False) @ x, dft(x), atol=1e-10)


class TestCirculant:
    def test_scalar(self):
        assert circulant([3 + 1j]).tolist() == [[3 + 1j]]

    def test_unrolled(self):
        h0, h1 = 2.0, 5.0
        np.testing.assert_array_equal(circulant([h0, h1, 0]),
                                      [[h0, 0, h1], [h1, h0, 0], [0, h1, h0]])

    def test_eigenvalues_are_dft(self):
        ev = list(np.linalg.eigvals(circulant([1, 2, 3, 4])))
        for lam in dft([1, 2, 3, 4]):
            k = int(np.argmin(np.abs(np.array(ev) - lam)))
            assert abs(ev.pop(k) - lam) <= 1e-10

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            circulant([])


class TestDeterminant:
    def test_identity(self):
        assert determinant(np.eye(3)) == 1

    def test_two_by_two(self):
        assert determinant([[1, 2], [3, 4]]) == pytest.approx(-2, abs=1e-14)

    def test_against_cofactor(self, rng):
        a = crandn(rng, 5, 5)
        ref = cofactor_det(a)
        assert abs(determinant(a) - ref) <= 1e-10 * abs(ref)

    def test_triangular_exact(self):
        a = np.triu(np.arange(1.0, 17.0).reshape(4, 4))
        assert determinant(a) == 1.0 * 6.0 * 11.0 * 16.0

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            determinant(np.ones((2, 3)))

    def test_size_cap(self):
        with pytest.raises(ValueError):
            determinant(np.eye(65))

    def test_multiplicative(self, rng):
        for _ in range(10):
            a, b = crandn(rng, 4, 4), crandn(rng, 4, 4)
            ab = determinant(a @ b)
            assert abs(ab - determinant(a) * determinant(b)) <= 1e-8 * abs(ab)


class TestLeastSquares:
    def test_identity(self, rng):
        b = crandn(rng, 5)
        np.testing.assert_allclose(solve_least_squares(np.eye(5), b), b)

    def test_diagonal(self):
        np.testing.assert_allclose(solve_least_squares([[2, 0], [0, 4]], [2, 4]), [1, 1])

    def test_residual_orthogonal(self, rng):
        a, b = crandn(rng, 6, 4), crandn(rng, 6)
        x = solve_least_squares(a, b)
        assert np.max(np.abs(a.conj().T @ (a @ x - b))) <= 1e-10

    def test_ridge_matches_normal_equations(self, rng):
        a, b = crandn(rng, 6, 4), crandn(rng, 6)
        x = solve_least_squares(a, b, ridge=0.3)
        ref = np.linalg.inv(a.conj().T @ a + 0.3 * np.eye(4)) @ a.conj().T @ b
        np.testing.assert_allclose(x, ref, atol=1e-12)

    def test_rank_deficient(self):
        with pytest.raises(SingularMatrixError):
            solve_least_squares([[1, 1], [1, 1]], [1, 2])
        solve_least_squares([[1, 1], [1, 1]], [1, 2], ridge=1e-3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_least_squares(np.eye(3), [1, 2])


class TestRngStream:
    def test_deterministic(self):
        a = RngStream(7, 3).raw(20)
        b = RngStream(7, 3).raw(20)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(7, 3).raw(8), RngStream(7, 4).raw(8))
        assert not np.array_equal(RngStream(7, 3).raw(8), RngStream(8, 3).raw(8))

    def test_batching_does_not_change_words(self):
        whole = RngStream(1, 2).raw(37)
        s = RngStream(1, 2)
        parts = np.concatenate([s.raw(5), s.raw(1), s.raw(13), s.raw(18)])
        assert np.array_equal(whole, parts)
        assert np.array_equal(RngStream(1, 2).words_at(11, 9), whole[11:20])
        assert np.array_equal(RngStream(1, 2, counter=11).raw(9), whole[11:20])

    def test_uniform_range(self):
        u = RngStream(0, 0).uniform(10000)
        assert u.min() >= 0 and u.max() < 1
        assert abs(u.mean() - 0.5) < 0.01

    def test_bits_balanced(self):
        b = RngStream(0, 1).bits(100000)
        assert set(np.unique(b)) == {0, 1}
        assert abs(b.mean() - 0.5) < 0.01

    def test_integers(self):
        k = RngStream(0, 2).integers(5, 10000)
        assert k.min() == 0 and k.max() == 4

    def test_range_checked(self):
        with pytest.raises(ValueError):
            RngStream(-1, 0)
        with pytest.raises(ValueError):
            RngStream(0, 2**64)


class TestRandomUnitary:
    def test_scalar(self):
        u = random_unitary(RngStream(1, 1), 1)
        assert u.shape == (1, 1) and abs(abs(u[0, 0]) - 1) <= 1e-12

    @pytest.mark.parametrize("n", [2, 5, 16])
    def test_unitary(self, n):
        u = random_unitary(RngStream(3, n), n)
        assert np.max(np.abs(u.conj().T @ u - np.eye(n))) <= 1e-12
        assert abs(abs(np.linalg.det(u)) - 1) <= 1e-10

    def test_reproducible(self):
        assert np.array_equal(random_unitary(RngStream(5, 9), 6), random_unitary(RngStream(5, 9), 6))

    def test_haar_first_moment(self):
        # E|U_00|^2 = 1/n for Haar unitaries
        vals = [abs(random_unitary(RngStream(11, i), 4)[0, 0]) ** 2 for i in range(2000)]
        assert abs(np.mean(vals) - 0.25) < 0.02


class TestAwgn:
    def test_zero_variance(self):
        assert np.array_equal(awgn(RngStream(0, 0), 16, 0.0), np.zeros(16))

    def test_statistics(self):
        w = awgn(RngStream(1234, 0), 10**6, 2.0)
        assert abs(w.mean()) <= 0.01
        assert 1.98 <= np.mean(np.abs(w) ** 2) <= 2.02
        assert abs(np.var(w.real) - 1.0) <= 0.02
        assert abs(np.var(w.imag) - 1.0) <= 0.02

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            awgn(RngStream(0, 0), 4, -1.0)


class TestConstellations:
    @pytest.mark.parametrize("c", [BPSK, QPSK, QAM16])
    def test_unit_energy_and_roundtrip(self, c):
        assert abs(np.mean(np.abs(c.points) ** 2) - 1) <= 1e-12
        bits = RngStream(0, 0).bits(c.bits_per_symbol * 50)
        idx = c.bits_to_indices(bits)
        assert np.array_equal(c.indices_to_bits(idx), bits)
        assert np.array_equal(c.nearest(c.modulate(bits)), idx)

    def test_bpsk_labels(self):
        np.testing.assert_array_equal(BPSK.modulate([0, 1]), [1, -1])

    def test_qpsk_labels(self):
        r = 1 / np.sqrt(2)
        np.testing.assert_allclose(QPSK.modulate([0, 0, 0, 1, 1, 0, 1, 1]),
                                   [r + 1j * r, r - 1j * r, -r + 1j * r, -r - 1j * r])

    def test_16qam_gray(self):
        # neighbouring levels on each axis differ in exactly one label bit
        pts = QAM16.points * np.sqrt(10)
        for a, b in itertools.combinations(range(16), 2):
            if abs(pts[a] - pts[b]) == pytest.approx(2.0):
                assert np.sum(QAM16.labels[a] != QAM16.labels[b]) == 1
        np.testing.assert_allclose(QAM16.modulate([0, 0, 1, 0]) * np.sqrt(10), [-3 + 3j])

    def test_lookup(self):
        assert constellation("QPSK") is QPSK and constellation("4qam") is QPSK
        with pytest.raises(ValueError):
            constellation("8psk")

    def test_separable(self):
        assert QPSK.is_separable and QAM16.is_separable and BPSK.is_separable
        psk8 = Constellation("8psk", np.exp(2j * np.pi * np.arange(8) / 8), 3)
        assert not psk8.is_separable

    def test_invalid(self):
        with pytest.raises(ValueError):
            Constellation("bad", [1, 1j, -1], 2)
        with pytest.raises(ValueError):
            Constellation("bad", [2, -2], 1)

    def test_nearest_tie_lowest_index(self):
        assert BPSK.nearest(0.0) == 0


def test_complexity_error_is_value_error():
    assert issubclass(ComplexityError, ValueError)
