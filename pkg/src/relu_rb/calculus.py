"""Structural operations on ReLU networks.

The operations here never change a realization by more than exact
floating point identities: compositions multiply first/last layers
together, parallelization stacks block-diagonally over a shared input,
and depth padding routes values through (relu(u), relu(-u)) rails whose
recombination u = relu(u) - relu(-u) is exact in IEEE arithmetic.
"""

import numpy as np
from scipy import sparse

from .errors import CompositionError, ParameterError
from .network import AffineLayer, NeuralNetwork

__all__ = [
    "identity_net",
    "concat_dense",
    "concat_sparse",
    "pad_depth",
    "parallelize",
    "lift_affine",
    "compose_with_selector",
]


def _eye(n):
    return sparse.identity(n, dtype=np.float64, format="csr")


def identity_net(n, depth):
    """Network of the given depth realizing the identity on R^n.

    Uses at most 2*n*depth nonzero weights, all of them +-1.  A depth-1
    net is the plain affine identity; deeper nets split every coordinate
    into adjacent rails (relu(x_i), relu(-x_i)) and recombine at the end.
    The interleaved rail order makes compositions through this net
    reproduce the uncomposed arithmetic bit for bit: in the merged
    left-to-right folds, the two rails of a coordinate contribute
    consecutively, one of them as an exact sign-flipped product and the
    other as a zero.
    """
    if n < 1 or depth < 1:
        raise ParameterError(f"identity_net needs n >= 1 and depth >= 1, "
                             f"got n={n}, depth={depth}")
    if depth == 1:
        return NeuralNetwork([AffineLayer(_eye(n), np.zeros(n))], n)
    split = sparse.kron(_eye(n), np.array([[1.0], [-1.0]]), format="csr")
    merge = sparse.kron(_eye(n), np.array([[1.0, -1.0]]), format="csr")
    layers = [AffineLayer(split, np.zeros(2 * n))]
    for _ in range(depth - 2):
        layers.append(AffineLayer(_eye(2 * n), np.zeros(2 * n)))
    layers.append(AffineLayer(merge, np.zeros(n)))
    return NeuralNetwork(layers, n)


def concat_dense(first, second):
    """Composition first o second by merging the touching layers.

    The result has depth(first) + depth(second) - 1 layers and realizes
    x -> first(second(x)).
    """
    if first.input_dim != second.output_dim:
        raise CompositionError(
            f"cannot compose: first expects {first.input_dim} inputs, "
            f"second outputs {second.output_dim}")
    head = first.layers[0]
    tail = second.layers[-1]
    merged_w = (head.weights @ tail.weights).tocsr()
    merged_w.sort_indices()
    merged_b = head.weights @ tail.bias + head.bias
    layers = (list(second.layers[:-1])
              + [AffineLayer(merged_w, merged_b)]
              + list(first.layers[1:]))
    return NeuralNetwork(layers, second.input_dim)


def concat_sparse(first, second):
    """Composition through a two-layer identity, controlling weight counts.

    Built as concat_dense(first, concat_dense(id_rails, second)) with
    id_rails the depth-2 interleaved rail identity; the merges only copy
    and negate existing entries, so the weight count of the result is at
    most M(first) + M(second) + M_1(first) + M_last(second), and the
    realization reproduces the sequential evaluation
    first(second(x)) bit for bit.
    """
    if first.input_dim != second.output_dim:
        raise CompositionError(
            f"cannot compose: first expects {first.input_dim} inputs, "
            f"second outputs {second.output_dim}")
    rails = identity_net(first.input_dim, 2)
    return concat_dense(first, concat_dense(rails, second))


def pad_depth(net, depth):
    """Pad ``net`` to the requested depth without changing its realization."""
    if depth < net.depth:
        raise ParameterError(f"cannot pad depth {net.depth} net down "
                             f"to {depth}")
    if depth == net.depth:
        return net
    return concat_sparse(identity_net(net.output_dim, depth - net.depth), net)


def parallelize(nets):
    """Stack networks sharing one input; realization is the output tuple.

    Shorter networks are padded with identity nets first.  The first
    layers are stacked vertically (shared input), all later layers
    block-diagonally, so for equal depths the weight count is exactly
    the sum of the components'.
    """
    nets = list(nets)
    if not nets:
        raise ParameterError("parallelize needs at least one network")
    n_in = nets[0].input_dim
    for net in nets[1:]:
        if net.input_dim != n_in:
            raise ParameterError("parallelize requires equal input dims, "
                                 f"got {[m.input_dim for m in nets]}")
    if len(nets) == 1:
        return nets[0]
    depth = max(net.depth for net in nets)
    nets = [pad_depth(net, depth) for net in nets]
    layers = []
    for level in range(depth):
        blocks = [net.layers[level] for net in nets]
        bias = np.concatenate([blk.bias for blk in blocks])
        if level == 0:
            weights = sparse.vstack([blk.weights for blk in blocks],
                                    format="csr")
        else:
            weights = sparse.block_diag([blk.weights for blk in blocks],
                                        format="csr")
        weights.sort_indices()
        layers.append(AffineLayer(weights, bias))
    return NeuralNetwork(layers, n_in)


def lift_affine(weights, bias=None):
    """Wrap a single affine map x -> Wx + b as a one-layer network."""
    if not sparse.issparse(weights):
        weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if bias is None:
        bias = np.zeros(weights.shape[0])
    layer = AffineLayer(weights, bias)
    return NeuralNetwork([layer], layer.n_in)


def selector_matrix(rows, n_in, values=None):
    """Selector with one nonzero per row: row k picks coordinate rows[k]."""
    rows = np.asarray(rows, dtype=np.int64)
    values = np.ones(rows.size) if values is None else np.asarray(values,
                                                                  float)
    return sparse.csr_matrix(
        (values, (np.arange(rows.size), rows)), shape=(rows.size, n_in))


def compose_with_selector(net, selector):
    """Pre-compose ``net`` with ((D, 0)) for a one-nonzero-per-row D.

    Such a D only relocates (and scales) columns of the first layer, so
    no per-layer weight count grows.  A D with two or more nonzeros in
    some row is rejected; use concat_dense for general matrices.
    """
    if not sparse.issparse(selector):
        selector = sparse.csr_matrix(
            np.atleast_2d(np.asarray(selector, dtype=np.float64)))
    selector = selector.tocsr()
    dense_rows = np.asarray((selector != 0).sum(axis=1)).reshape(-1)
    if np.any(dense_rows > 1):
        raise ParameterError("selector must have at most one nonzero "
                             "entry per row")
    return concat_dense(net, lift_affine(selector))
