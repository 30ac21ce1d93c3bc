import numpy as np
import pytest

from relu_rb.network import AffineLayer, NeuralNetwork


def python_oracle_realize(net, x):
    """Layer-by-layer reference evaluation in plain Python floats.

    Row-major dot products folded left to right over all entries
    (including stored zeros), bias added after the fold, ReLU applied
    to every layer but the last.  This is the semantics the kernels
    must reproduce bit for bit.
    """
    values = [float(v) for v in x]
    for level, layer in enumerate(net.layers):
        dense = layer.weights_dense()
        fresh = []
        for i in range(dense.shape[0]):
            acc = 0.0
            for j in range(dense.shape[1]):
                acc = acc + dense[i, j] * values[j]
            acc = acc + float(layer.bias[i])
            if level < len(net.layers) - 1 and acc < 0.0:
                acc = 0.0
            fresh.append(acc)
        values = fresh
    return np.array(values)


def random_dense_net(rng, input_dim, depth, max_width=5, density=0.7):
    dims = [input_dim] + [int(rng.integers(1, max_width + 1))
                          for _ in range(depth)]
    layers = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        mask = rng.random((n_out, n_in)) < density
        weights = np.where(mask, rng.standard_normal((n_out, n_in)), 0.0)
        bias = np.where(rng.random(n_out) < 0.5,
                        rng.standard_normal(n_out), 0.0)
        layers.append(AffineLayer(weights, bias))
    return NeuralNetwork(layers, input_dim)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
