import numpy as np
import pytest

from relu_rb.approx import (
    MatrixNetSpec,
    inversion_net,
    matr,
    matrix_mult_net,
    matrix_pow2_net,
    matrix_pow_net,
    matrix_pow_net_scaled,
    matrix_square_net,
    neumann_steps,
    sawtooth_net,
    scalar_mult_net,
    scalar_mult_terms,
    square_error_bound,
    square_net,
    vec,
)
from relu_rb.errors import ParameterError, ShapeError
from relu_rb.linalg import random_matrix_with_norm, spectral_norm
from relu_rb.network import realize, realize_batch, size_metrics


def hat(x):
    return np.minimum(2 * x, 2 - 2 * x)


class TestVecMatr:
    def test_column_major_order(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(vec(a), np.array([1.0, 3.0, 2.0, 4.0]))

    def test_round_trip(self, rng):
        a = rng.standard_normal((3, 5))
        assert np.array_equal(matr(vec(a), 3, 5), a)

    def test_scalar_case(self):
        assert vec(np.array([[7.0]]))[0] == 7.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            matr(np.zeros(5), 2, 3)


class TestSawtooth:
    def test_peak_of_hat(self):
        assert realize(sawtooth_net(1), np.array([0.5]))[0] == 1.0

    def test_second_order_value(self):
        # g(g(1/8)): g(1/8) = 1/4, g(1/4) = 1/2
        assert realize(sawtooth_net(2), np.array([0.125]))[0] == 0.5

    @pytest.mark.parametrize("s", [1, 2, 3, 4, 5, 6])
    def test_endpoints_vanish(self, s):
        net = sawtooth_net(s)
        assert realize(net, np.array([0.0]))[0] == 0.0
        assert realize(net, np.array([1.0]))[0] == 0.0

    @pytest.mark.parametrize("s", [1, 2, 3, 4])
    def test_matches_composed_hat(self, s):
        x = np.linspace(0.0, 1.0, 257)
        expected = x.copy()
        for _ in range(s):
            expected = hat(expected)
        got = realize_batch(sawtooth_net(s), x[None, :])[0]
        assert np.max(np.abs(got - expected)) < 1e-12

    def test_depth(self):
        assert sawtooth_net(4).depth == 5

    def test_bad_order(self):
        with pytest.raises(ParameterError):
            sawtooth_net(0)


class TestSquare:
    def test_endpoints_exact(self):
        for n in (1, 2, 5):
            net = square_net(n)
            assert realize(net, np.array([0.0]))[0] == 0.0
            assert realize(net, np.array([1.0]))[0] == 1.0

    def test_one_term_value(self):
        # x - g_1(x)/4 at x = 1/2 equals 1/4
        assert realize(square_net(1), np.array([0.5]))[0] == 0.25

    def test_five_term_grid_error(self):
        net = square_net(5)
        x = np.linspace(0.0, 1.0, 10_001)
        err = np.max(np.abs(realize_batch(net, x[None, :])[0] - x * x))
        assert err <= 2.0 ** -12

    @pytest.mark.parametrize("n", [1, 2, 3, 6, 9])
    def test_error_bound_on_grid(self, n):
        net = square_net(n)
        assert net.depth == n + 1
        x = np.linspace(0.0, 1.0, 4001)
        err = np.max(np.abs(realize_batch(net, x[None, :])[0] - x * x))
        assert err <= square_error_bound(n) + 1e-15


class TestScalarMult:
    def test_zero_factor(self, rng):
        net = scalar_mult_net(1.0, 1e-2)
        b = rng.uniform(-1, 1, 20)
        x = np.vstack([np.zeros(20), b])
        assert np.max(np.abs(realize_batch(net, x)[0])) <= 1e-2

    @pytest.mark.parametrize("z", [1.0, 2.0])
    def test_corner_value(self, z):
        net = scalar_mult_net(z, 1e-3)
        got = realize(net, np.array([z, z]))[0]
        assert abs(got - z * z) <= 1e-3

    def test_weight_bound_for_unit_case(self):
        # 90 (log2(1/eps) + 2 log2(z) + 6) at z=1, eps=1e-3
        report = size_metrics(scalar_mult_net(1.0, 1e-3))
        assert report.total_weights <= 90 * (np.log2(1e3) + 6)

    @pytest.mark.parametrize("z,eps", [(1.0, 1e-1), (1.0, 1e-3),
                                       (2.0, 1e-2), (0.5, 1e-2)])
    def test_certified_on_grid(self, z, eps):
        net = scalar_mult_net(z, eps)
        axis = np.linspace(-z, z, 101)
        a, b = np.meshgrid(axis, axis)
        x = np.vstack([a.reshape(-1), b.reshape(-1)])
        got = realize_batch(net, x)[0]
        assert np.max(np.abs(got - a.reshape(-1) * b.reshape(-1))) <= eps

    def test_term_count_minimal(self):
        n = scalar_mult_terms(1.0, 1e-3)
        assert 2.0 * square_error_bound(n) <= 1e-3
        assert 2.0 * square_error_bound(n - 1) > 1e-3

    def test_parameter_errors(self):
        with pytest.raises(ParameterError):
            scalar_mult_net(0.0, 1e-2)
        with pytest.raises(ParameterError):
            scalar_mult_net(1.0, 1.5)


class TestMatrixMult:
    def test_identity_factor(self, rng):
        net = matrix_mult_net(MatrixNetSpec(2, 2, 2, 1.0, 1e-2))
        for _ in range(10):
            a = random_matrix_with_norm(rng, (2, 2), 1.0)
            out = realize(net, np.concatenate([vec(a), vec(np.eye(2))]))
            assert spectral_norm(a - matr(out, 2, 2)) <= 1e-2

    @pytest.mark.parametrize("eps", [1e-1, 1e-2])
    def test_random_pairs_certified(self, rng, eps):
        net = matrix_mult_net(MatrixNetSpec(2, 2, 2, 1.0, eps))
        for _ in range(25):
            a = random_matrix_with_norm(rng, (2, 2), 1.0)
            b = random_matrix_with_norm(rng, (2, 2), 1.0)
            out = realize(net, np.concatenate([vec(a), vec(b)]))
            assert spectral_norm(a @ b - matr(out, 2, 2)) <= eps

    def test_output_norm_bound(self, rng):
        eps, z = 1e-1, 1.0
        net = matrix_mult_net(MatrixNetSpec(3, 3, 3, z, eps))
        for _ in range(10):
            a = random_matrix_with_norm(rng, (3, 3), z)
            b = random_matrix_with_norm(rng, (3, 3), z)
            out = realize(net, np.concatenate([vec(a), vec(b)]))
            assert spectral_norm(matr(out, 3, 3)) <= eps + z * z

    def test_rectangular_shapes(self, rng):
        net = matrix_mult_net(MatrixNetSpec(2, 3, 4, 1.0, 1e-1))
        a = random_matrix_with_norm(rng, (2, 3), 1.0)
        b = random_matrix_with_norm(rng, (3, 4), 1.0)
        out = realize(net, np.concatenate([vec(a), vec(b)]))
        assert spectral_norm(a @ b - matr(out, 2, 4)) <= 1e-1

    def test_matches_generic_construction(self, rng):
        """The direct layer assembly must equal the compositional one."""
        from relu_rb.calculus import (concat_dense, lift_affine,
                                      parallelize, selector_matrix)
        from relu_rb.approx import scalar_mult_net as node_net
        d = n = l = 2
        z, eps = 1.0, 1e-1
        spec = MatrixNetSpec(d, n, l, z, eps)
        direct = matrix_mult_net(spec)
        node = node_net(z, eps / (n * np.sqrt(d * l)))
        blocks = []
        for j in range(l):
            for i in range(d):
                summands = []
                for k in range(n):
                    rows = np.array([k * d + i, n * d + j * n + k])
                    summands.append(concat_dense(
                        node, lift_affine(selector_matrix(rows,
                                                          n * (d + l)))))
                blocks.append(concat_dense(lift_affine(np.ones((1, n))),
                                           parallelize(summands)))
        generic = parallelize(blocks)
        assert generic == direct


class TestMatrixSquareAndPowers:
    def test_square_of_zero(self):
        net = matrix_square_net(1.0, 2, 1e-2)
        out = realize(net, np.zeros(4))
        assert spectral_norm(matr(out, 2, 2)) <= 1e-2

    def test_square_of_diagonal(self):
        net = matrix_square_net(1.0, 2, 1e-2)
        a = np.diag([0.5, 1.0 / 3.0])
        out = matr(realize(net, vec(a)), 2, 2)
        assert spectral_norm(out - np.diag([0.25, 1.0 / 9.0])) <= 1e-2

    def test_pow2_diag(self):
        net = matrix_pow2_net(1, 2, 1e-2)
        out = realize(net, np.array([0.5]))[0]
        assert abs(out - 0.5 ** 4) <= 1e-2

    def test_pow2_output_norm(self, rng):
        net = matrix_pow2_net(2, 2, 1e-2)
        for _ in range(10):
            a = random_matrix_with_norm(rng, (2, 2), 0.5)
            out = matr(realize(net, vec(a)), 2, 2)
            assert spectral_norm(out) <= 0.5

    def test_pow_zero_is_constant_identity(self, rng):
        net = matrix_pow_net(2, 0, 1e-2)
        for _ in range(5):
            a = random_matrix_with_norm(rng, (2, 2), 0.5)
            assert np.array_equal(realize(net, vec(a)), vec(np.eye(2)))

    def test_pow_one_exact(self, rng):
        net = matrix_pow_net(2, 1, 1e-2)
        a = random_matrix_with_norm(rng, (2, 2), 0.5)
        assert np.array_equal(realize(net, vec(a)), vec(a))

    def test_pow_five_diag(self):
        net = matrix_pow_net(2, 5, 1e-2)
        a = np.diag([0.4, -0.3])
        out = matr(realize(net, vec(a)), 2, 2)
        expected = np.diag([0.4 ** 5, (-0.3) ** 5])
        assert spectral_norm(out - expected) <= 1e-2

    @pytest.mark.parametrize("k", [2, 3, 6, 8])
    def test_pow_random_certified(self, rng, k):
        net = matrix_pow_net(2, k, 1e-2)
        for _ in range(15):
            a = random_matrix_with_norm(rng, (2, 2), 0.5)
            out = matr(realize(net, vec(a)), 2, 2)
            assert spectral_norm(out
                                 - np.linalg.matrix_power(a, k)) <= 1e-2

    def test_scaled_pow_identity_case(self, rng):
        net = matrix_pow_net_scaled(1.0, 2, 1, 1e-2)
        a = random_matrix_with_norm(rng, (2, 2), 1.0)
        assert spectral_norm(matr(realize(net, vec(a)), 2, 2) - a) <= 1e-2

    def test_scaled_pow_large_bound(self):
        net = matrix_pow_net_scaled(2.0, 1, 3, 1e-2)
        got = realize(net, np.array([1.5]))[0]
        assert abs(got - 1.5 ** 3) <= 1e-2

    def test_scaled_pow_random(self, rng):
        net = matrix_pow_net_scaled(2.0, 2, 3, 1e-2)
        for _ in range(10):
            a = random_matrix_with_norm(rng, (2, 2), 2.0)
            out = matr(realize(net, vec(a)), 2, 2)
            assert spectral_norm(out
                                 - np.linalg.matrix_power(a, 3)) <= 1e-2

    def test_eps_range_guard(self):
        with pytest.raises(ParameterError):
            matrix_pow2_net(2, 1, 0.3)
        with pytest.raises(ParameterError):
            matrix_pow_net(2, 2, 0.5)


class TestNeumann:
    def test_closed_form_value(self):
        assert neumann_steps(0.1, 0.5) == 5

    def test_residual_bound_at_returned_m(self):
        for eps in (0.24, 0.1, 0.05):
            for delta in (0.25, 0.5, 0.9):
                m = neumann_steps(eps, delta)
                assert (1 - delta) ** (m + 1) / delta <= eps / 2.0

    def test_monotone_on_grid(self):
        eps_grid = [0.2, 0.1, 0.05, 0.02]
        delta_grid = [0.2, 0.4, 0.6, 0.8]
        for delta in delta_grid:
            values = [neumann_steps(e, delta) for e in eps_grid]
            assert values == sorted(values)
        for eps in eps_grid:
            values = [neumann_steps(eps, d) for d in delta_grid]
            assert values == sorted(values, reverse=True)

    def test_out_of_range(self):
        with pytest.raises(ParameterError):
            neumann_steps(0.0, 0.5)
        with pytest.raises(ParameterError):
            neumann_steps(0.1, 1.0)


class TestInversion:
    def test_zero_matrix(self):
        net = inversion_net(2, 0.5, 0.1)
        out = matr(realize(net, np.zeros(4)), 2, 2)
        assert spectral_norm(out - np.eye(2)) <= 0.1

    def test_half_identity(self):
        net = inversion_net(2, 0.5, 0.1)
        out = matr(realize(net, vec(0.5 * np.eye(2))), 2, 2)
        assert spectral_norm(out - 2.0 * np.eye(2)) <= 0.1

    def test_random_symmetric(self, rng):
        net = inversion_net(3, 0.3, 0.05)
        for _ in range(10):
            a = rng.standard_normal((3, 3))
            a = 0.5 * (a + a.T)
            a *= 0.7 / spectral_norm(a)
            out = matr(realize(net, vec(a)), 3, 3)
            target = np.linalg.inv(np.eye(3) - a)
            assert spectral_norm(out - target) <= 0.05

    def test_output_norm_bound(self, rng):
        delta, eps = 0.5, 0.1
        net = inversion_net(2, delta, eps)
        for _ in range(20):
            a = random_matrix_with_norm(rng, (2, 2), 1.0 - delta)
            out = matr(realize(net, vec(a)), 2, 2)
            assert spectral_norm(out) <= eps + 1.0 / delta

    def test_partial_sum_proximity(self, rng):
        """The net realization tracks the exact truncated series."""
        delta, eps = 0.5, 0.1
        net = inversion_net(2, delta, eps)
        m = neumann_steps(eps, delta)
        for _ in range(10):
            a = random_matrix_with_norm(rng, (2, 2), 1.0 - delta)
            partial = sum(np.linalg.matrix_power(a, k)
                          for k in range(m + 1))
            out = matr(realize(net, vec(a)), 2, 2)
            assert spectral_norm(out - partial) <= eps / 2.0 + 1e-12

    def test_parameter_guards(self):
        with pytest.raises(ParameterError):
            inversion_net(2, 0.5, 0.3)
        with pytest.raises(ParameterError):
            inversion_net(2, 1.2, 0.1)

    def test_spec_carries_steps(self):
        from relu_rb.approx import InversionSpec
        spec = InversionSpec(2, 0.5, 0.1)
        assert spec.steps == neumann_steps(0.1, 0.5) == 5
        assert inversion_net(spec) == inversion_net(2, 0.5, 0.1)
        with pytest.raises(ParameterError):
            InversionSpec(2, 0.5, 0.9)
