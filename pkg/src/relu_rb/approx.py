"""Approximation networks with certified accuracy.

Everything here reduces to one chain: sawtooth functions g_s built from
the hat g(x) = 2 relu(x) - 4 relu(x - 1/2) + 2 relu(x - 2) (exact on
[0, 1]) give the square approximant f_n(x) = x - sum_s g_s(x)/4^s with
sup error 4^-(n+1); the parallelogram identity ab = ((a+b)^2 - (a-b)^2)/4
turns squaring into scalar multiplication; entrywise scalar multipliers
assemble matrix products; repeated squaring gives matrix powers; and the
truncated Neumann series sum_k A^k gives (Id - A)^{-1} on the spectral
ball of radius 1 - delta.

Every constructor takes an accuracy eps and produces a network whose
realization is within eps of the target map on the stated domain.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .calculus import concat_sparse, identity_net, lift_affine, parallelize
from .errors import ParameterError, ReluRbError, ShapeError
from .network import AffineLayer, NeuralNetwork, realize_batch

logger = logging.getLogger(__name__)

__all__ = [
    "vec",
    "matr",
    "sawtooth_net",
    "square_net",
    "square_error_bound",
    "scalar_mult_terms",
    "scalar_mult_net",
    "MatrixNetSpec",
    "InversionSpec",
    "matrix_mult_net",
    "matrix_square_net",
    "matrix_pow2_net",
    "matrix_pow_net",
    "matrix_pow_net_scaled",
    "neumann_steps",
    "inversion_net",
]


# -- vectorization ----------------------------------------------------------

def vec(a):
    """Column-major flattening: (A_11, ..., A_d1, A_12, ...)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"vec expects a matrix, got shape {a.shape}")
    return a.reshape(-1, order="F")


def matr(v, d, l):
    """Inverse of :func:`vec` for a d x l matrix."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != d * l:
        raise ShapeError(f"matr expects a vector of length {d * l}, "
                         f"got shape {v.shape}")
    return v.reshape((d, l), order="F")


# -- sawtooth and square ----------------------------------------------------

# hat rail offsets: relu(x), relu(x - 1/2), relu(x - 2)
_HAT_BIAS = np.array([0.0, -0.5, -2.0])
_HAT_ROW = np.array([2.0, -4.0, 2.0])


def sawtooth_net(s):
    """Depth s+1 net realizing the s-fold composed hat g_s on [0, 1]."""
    if s < 1:
        raise ParameterError(f"sawtooth order must be >= 1, got {s}")
    layers = [AffineLayer(np.ones((3, 1)), _HAT_BIAS)]
    mid = np.tile(_HAT_ROW, (3, 1))
    for _ in range(s - 1):
        layers.append(AffineLayer(mid, _HAT_BIAS))
    layers.append(AffineLayer(_HAT_ROW.reshape(1, 3), np.zeros(1)))
    return NeuralNetwork(layers, 1)


def square_error_bound(n_terms):
    """Sup error of the n-term square approximant on [0, 1]."""
    return 4.0 ** -(n_terms + 1)


def _square_mid_layer(level):
    """4x4 layer advancing (g-rails, accumulator) one sawtooth level."""
    w = np.zeros((4, 4))
    w[0, :3] = _HAT_ROW
    w[1, :3] = _HAT_ROW
    w[2, :3] = _HAT_ROW
    w[3, :3] = -_HAT_ROW / 4.0 ** (level - 1)
    w[3, 3] = 1.0
    bias = np.concatenate([_HAT_BIAS, [0.0]])
    return AffineLayer(w, bias)


def _square_final_row(n_terms):
    row = np.empty(4)
    row[:3] = -_HAT_ROW / 4.0 ** n_terms
    row[3] = 1.0
    return row


def square_net(n_terms):
    """Depth n+1 net realizing x - sum_{s<=n} g_s(x)/4^s on [0, 1].

    This is the piecewise-linear interpolant of x^2 on the dyadic grid
    of step 2^-n, so its sup error on [0, 1] is 4^-(n+1).
    """
    if n_terms < 1:
        raise ParameterError(f"n_terms must be >= 1, got {n_terms}")
    first = AffineLayer(np.ones((4, 1)),
                        np.concatenate([_HAT_BIAS, [0.0]]))
    layers = [first]
    for level in range(2, n_terms + 1):
        layers.append(_square_mid_layer(level))
    layers.append(AffineLayer(_square_final_row(n_terms).reshape(1, 4),
                              np.zeros(1)))
    return NeuralNetwork(layers, 1)


_verified_square_terms = {}


# The analytic bound holds in exact arithmetic; evaluating the net in
# float64 adds a few ulps (the weights are dyadic, so the multiplications
# are exact and roundoff does not compound).  Measured excess stays below
# 1e-15, so 16 machine epsilons of slack cover it.
_FLOAT_EVAL_SLACK = 16 * np.finfo(np.float64).eps


def _verify_square(n_terms, grid_points=10_001):
    """Dense-grid check of the analytic square-net error bound (cached)."""
    if n_terms in _verified_square_terms:
        return
    net = square_net(n_terms)
    x = np.linspace(0.0, 1.0, grid_points)
    err = np.max(np.abs(realize_batch(net, x[None, :])[0] - x * x))
    if err > square_error_bound(n_terms) + _FLOAT_EVAL_SLACK:
        raise ReluRbError(
            f"square net with {n_terms} terms missed its error bound: "
            f"measured {err:.3e} > {square_error_bound(n_terms):.3e} "
            f"plus float slack")
    _verified_square_terms[n_terms] = True


def scalar_mult_terms(z, eps):
    """Smallest sawtooth term count certifying |ab - net(a,b)| <= eps.

    The parallelogram split ab = z^2 ((|a+b|/2z)^2 - (|a-b|/2z)^2) incurs
    twice the rescaled square error, i.e. (2z)^2 * 4^-(n+1) / 2.
    """
    n = 1
    while 2.0 * z * z * square_error_bound(n) > eps:
        n += 1
    return n


def scalar_mult_net(z, eps):
    """2-input net with sup_{|a|,|b|<=z} |ab - net(a, b)| <= eps.

    Both parallelogram branches (a+b)/2z and (a-b)/2z enter through six
    rails relu(+-w - c), c in {0, 1/2, 2}; since relu(|w| - c) =
    relu(w - c) + relu(-w - c) for c >= 0, those rails feed the square
    approximant of |w| directly and the whole net has depth n_terms + 1.
    """
    if z <= 0:
        raise ParameterError(f"bound z must be positive, got {z}")
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"accuracy must be in (0, 1), got {eps}")
    n_terms = scalar_mult_terms(z, eps)
    _verify_square(n_terms)
    s = 1.0 / (2.0 * z)
    out_scale = z * z

    # first layer: rails for u = (a+b)/2z (rows 0-5) and v = (a-b)/2z
    # (rows 6-11); per branch the rows are relu(+-w), relu(+-w - 1/2),
    # relu(+-w - 2)
    first_w = np.zeros((12, 2))
    sign_pairs = [(s, s), (-s, -s)]
    for c_index in range(3):
        for parity, (wa, wb) in enumerate(sign_pairs):
            first_w[2 * c_index + parity] = (wa, wb)
            first_w[6 + 2 * c_index + parity] = (wa, -wb)
    first_b = np.repeat(_HAT_BIAS, 2)
    first = AffineLayer(first_w, np.concatenate([first_b, first_b]))

    # reduction from the 6 rails of one branch to (g-rails, accumulator);
    # the accumulator starts from |w| = relu(w) + relu(-w), i.e. the first
    # rail pair, minus g_1(|w|)/4
    acc_from_rails = -np.repeat(_HAT_ROW, 2) / 4.0
    acc_from_rails[:2] += 1.0
    to_state = np.zeros((4, 6))
    to_state[0] = to_state[1] = to_state[2] = np.repeat(_HAT_ROW, 2)
    to_state[3] = acc_from_rails
    state_bias = np.concatenate([_HAT_BIAS, [0.0]])

    layers = [first]
    if n_terms == 1:
        final_branch = acc_from_rails
    else:
        second_w = sparse.block_diag([to_state, to_state], format="csr")
        layers.append(AffineLayer(second_w,
                                  np.concatenate([state_bias, state_bias])))
        for level in range(3, n_terms + 1):
            mid = _square_mid_layer(level)
            w = sparse.block_diag([mid.weights, mid.weights], format="csr")
            layers.append(AffineLayer(w, np.concatenate([mid.bias,
                                                         mid.bias])))
        final_branch = _square_final_row(n_terms)
    final = np.concatenate([out_scale * final_branch,
                            -out_scale * final_branch])
    layers.append(AffineLayer(final.reshape(1, -1), np.zeros(1)))
    return NeuralNetwork(layers, 2)


# -- matrix multiplication --------------------------------------------------

@dataclass(frozen=True)
class MatrixNetSpec:
    """Shape (d x n times n x l), entry bound z, and target accuracy."""

    d: int
    n: int
    l: int
    z: float
    eps: float

    def __post_init__(self):
        if min(self.d, self.n, self.l) < 1:
            raise ParameterError(f"dims must be >= 1, got "
                                 f"({self.d}, {self.n}, {self.l})")
        if self.z <= 0:
            raise ParameterError(f"bound z must be positive, got {self.z}")
        if not 0.0 < self.eps < 1.0:
            raise ParameterError(f"accuracy must be in (0, 1), "
                                 f"got {self.eps}")


def matrix_mult_net(spec):
    """Net mapping (vec(A), vec(B)) to vec(AB) within eps in spectral norm.

    One scalar multiplier per (i, k, j) triple at accuracy
    eps / (n sqrt(dl)), k-sums merged into the last layer.  The layers are
    assembled directly: the first layer relocates the shared multiplier's
    input columns to the selected matrix entries (exactly what composing
    with a one-nonzero-per-row selector produces) and the inner layers are
    block-diagonal repetitions of the multiplier's.
    """
    if isinstance(spec, tuple):
        spec = MatrixNetSpec(*spec)
    d, n, l = spec.d, spec.n, spec.l
    node_eps = spec.eps / (n * math.sqrt(d * l))
    node = scalar_mult_net(spec.z, node_eps)
    n_nodes = d * l * n

    # node order: j outermost, then i, then k, so outputs grouped by (j, i)
    # land in column-major vec order and the k-sum blocks are contiguous
    j_idx, i_idx, k_idx = np.meshgrid(np.arange(l), np.arange(d),
                                      np.arange(n), indexing="ij")
    j_idx, i_idx, k_idx = (a.reshape(-1) for a in (j_idx, i_idx, k_idx))
    col_a = k_idx * d + i_idx
    col_b = n * d + j_idx * n + k_idx

    node_first = node.layers[0]
    w0 = node_first.weights_dense()  # 12 x 2
    rows_per = w0.shape[0]
    rows = (np.arange(n_nodes)[:, None] * rows_per
            + np.arange(rows_per)[None, :])
    rows = np.repeat(rows.reshape(-1), 2)
    cols = np.stack([np.repeat(col_a, rows_per),
                     np.repeat(col_b, rows_per)], axis=1).reshape(-1)
    vals = np.tile(w0.reshape(-1), n_nodes)
    first_w = sparse.csr_matrix(
        (vals, (rows, cols)),
        shape=(n_nodes * rows_per, n * (d + l)))
    first_w.sort_indices()
    layers = [AffineLayer(first_w, np.tile(node_first.bias, n_nodes))]

    eye_nodes = sparse.identity(n_nodes, format="csr")
    for layer in node.layers[1:-1]:
        w = sparse.kron(eye_nodes, layer.weights, format="csr")
        w.sort_indices()
        layers.append(AffineLayer(w, np.tile(layer.bias, n_nodes)))

    # last layer: per output (j, i), sum the n adjacent node outputs
    last = node.layers[-1]
    summed_row = sparse.hstack([last.weights] * n, format="csr")
    final_w = sparse.kron(sparse.identity(d * l, format="csr"), summed_row,
                          format="csr")
    final_w.sort_indices()
    layers.append(AffineLayer(final_w, np.zeros(d * l)))
    return NeuralNetwork(layers, n * (d + l))


def matrix_square_net(z, d, eps):
    """Net mapping vec(A) to vec(A^2) within eps for ||A||_2 <= z."""
    mult = matrix_mult_net(MatrixNetSpec(d, d, d, z, eps))
    eye = sparse.identity(d * d, format="csr")
    duplicate = lift_affine(sparse.vstack([eye, eye], format="csr"))
    net = concat_sparse(mult, duplicate)
    first = net.layers[0].nonzero_count()
    logger.debug("square net d=%d z=%g eps=%g: M_1/d^3 = %.2f",
                 d, z, eps, first / d ** 3)
    return net


def matrix_pow2_net(d, j, eps):
    """Net mapping vec(A) to vec(A^(2^j)) within eps for ||A||_2 <= 1/2.

    Iterated squaring: the innermost square works on the radius-1/2 ball,
    every further squaring on the radius-1 ball at accuracy eps/4 (the
    intermediate results stay in the radius-1/2 ball).
    """
    if j < 1:
        raise ParameterError(f"exponent 2^j needs j >= 1, got {j}")
    if not 0.0 < eps < 0.25:
        raise ParameterError(f"accuracy must be in (0, 1/4), got {eps}")
    net = matrix_square_net(0.5, d, eps)
    if j > 1:
        outer = matrix_square_net(1.0, d, eps / 4.0)
        for _ in range(j - 1):
            net = concat_sparse(outer, net)
    return net


def _constant_identity_net(d):
    """Single layer emitting vec(Id_d) for every input."""
    zero = sparse.csr_matrix((d * d, d * d), dtype=np.float64)
    return NeuralNetwork([AffineLayer(zero, vec(np.eye(d)))], d * d)


def matrix_pow_net(d, k, eps, _cache=None):
    """Net mapping vec(A) to vec(A^k) within eps for ||A||_2 <= 1/2.

    Binary decomposition k = 2^j + t with the two factor nets run in
    parallel and multiplied at accuracy eps/4; k = 0 and k = 1 are exact.
    """
    if k < 0:
        raise ParameterError(f"exponent must be >= 0, got {k}")
    if not 0.0 < eps < 0.25:
        raise ParameterError(f"accuracy must be in (0, 1/4), got {eps}")
    if _cache is None:
        _cache = {}
    if k in _cache:
        return _cache[k]
    if k == 0:
        net = _constant_identity_net(d)
    elif k == 1:
        net = identity_net(d * d, 1)
    else:
        j = int(math.floor(math.log2(k)))
        if 2 ** j == k:
            net = matrix_pow2_net(d, j, eps)
        else:
            t = k - 2 ** j
            mult = matrix_mult_net(MatrixNetSpec(d, d, d, 1.0, eps / 4.0))
            pair = parallelize([matrix_pow2_net(d, j, eps),
                                matrix_pow_net(d, t, eps, _cache)])
            net = concat_sparse(mult, pair)
    _cache[k] = net
    return net


def _scale_boundary_layers(net, in_scale, out_scale):
    """Return the net with first-layer weights and last-layer weights and
    bias rescaled (input/output change of variables)."""
    layers = list(net.layers)
    first = layers[0]
    layers[0] = AffineLayer(first.weights.multiply(in_scale).tocsr(),
                            first.bias)
    last = layers[-1]
    layers[-1] = AffineLayer(last.weights.multiply(out_scale).tocsr(),
                             out_scale * last.bias)
    return NeuralNetwork(layers, net.input_dim)


def matrix_pow_net_scaled(z, d, k, eps):
    """Net mapping vec(A) to vec(A^k) within eps for ||A||_2 <= z.

    Wraps the radius-1/2 power net: inputs are scaled by 1/(2z), outputs
    by (2z)^k, and the inner accuracy is eps/(2z)^k so the output scaling
    cannot amplify the error beyond eps.
    """
    if z <= 0:
        raise ParameterError(f"bound z must be positive, got {z}")
    if not 0.0 < eps < 0.25:
        raise ParameterError(f"accuracy must be in (0, 1/4), got {eps}")
    if k < 0:
        raise ParameterError(f"exponent must be >= 0, got {k}")
    out_scale = (2.0 * z) ** k
    inner_eps = min(eps, eps / out_scale)
    inner = matrix_pow_net(d, k, inner_eps)
    return _scale_boundary_layers(inner, 1.0 / (2.0 * z), out_scale)


# -- Neumann inversion ------------------------------------------------------

def neumann_steps(eps, delta):
    """Truncation order of the Neumann series certifying accuracy eps.

    Smallest m (at least 1) with (1 - delta)^(m+1) / delta <= eps / 2,
    written through base-2 logarithms.
    """
    if not 0.0 < eps < 1.0 or not 0.0 < delta < 1.0:
        raise ParameterError(f"eps and delta must lie in (0, 1), got "
                             f"eps={eps}, delta={delta}")
    m = math.ceil(math.log2(0.5 * eps * delta)
                  / math.log2(1.0 - delta)) - 1
    return max(int(m), 1)


@dataclass(frozen=True)
class InversionSpec:
    """Dimension, contraction margin, accuracy, and truncation order."""

    d: int
    delta: float
    eps: float
    steps: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"dimension must be >= 1, got {self.d}")
        if not 0.0 < self.eps < 0.25:
            raise ParameterError(f"accuracy must be in (0, 1/4), "
                                 f"got {self.eps}")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"margin delta must be in (0, 1), "
                                 f"got {self.delta}")
        object.__setattr__(self, "steps",
                           neumann_steps(self.eps, self.delta))
        assert self.steps >= 1


def inversion_net(d, delta=None, eps=None):
    """Net mapping vec(A) to vec((Id - A)^{-1}) within eps in spectral norm.

    Valid on ||A||_2 <= 1 - delta.  Runs the power nets A^1, ..., A^m in
    parallel at accuracy eps/(2(m-1)) each, sums their outputs, and adds
    vec(Id) for the k = 0 term; the remaining Neumann tail is below eps/2
    by the choice of m.  Accepts an :class:`InversionSpec` in place of
    the three scalars.
    """
    if isinstance(d, InversionSpec):
        d, delta, eps = d.d, d.delta, d.eps
    spec = InversionSpec(d, delta, eps)
    m = spec.steps
    eps_pow = eps / 2.0 if m == 1 else eps / (2.0 * (m - 1.0))
    powers = [matrix_pow_net_scaled(1.0, d, k, eps_pow)
              for k in range(1, m + 1)]
    stacked = parallelize(powers)
    eye = sparse.identity(d * d, format="csr")
    head = lift_affine(sparse.hstack([eye] * m, format="csr"),
                       vec(np.eye(d)))
    net = concat_sparse(head, stacked)
    if logger.isEnabledFor(logging.DEBUG):
        weights = sum(layer.nonzero_count() for layer in net.layers)
        shape = (m * math.log2(max(m, 2)) ** 2 * d ** 3
                 * (math.log2(1 / eps) + math.log2(max(m, 2))
                    + math.log2(max(d, 2))))
        logger.debug("inversion net d=%d delta=%g eps=%g: m=%d, "
                     "M/shape = %.2f", d, delta, eps, m, weights / shape)
    return net
