"""Feed-forward ReLU networks as explicit matrix-vector tuples.

A network is an ordered list of affine layers (W_l, b_l).  Its realization
applies ReLU coordinatewise after every layer except the last:

    x_0 = x,   x_l = relu(W_l x_{l-1} + b_l)  (l < L),   x_L = W_L x_{L-1} + b_L.

Weight matrices are kept in CSR form.  Entries that are exactly zero carry
no information here: they neither count towards the weight number nor
change the realization, so dropping them when converting from dense input
is harmless.  All size accounting uses an exact ``!= 0`` test, never a
tolerance.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import backend
from .errors import ParseError, ShapeError

__all__ = [
    "AffineLayer",
    "NeuralNetwork",
    "SizeReport",
    "realize",
    "realize_batch",
    "size_metrics",
    "validate",
    "serialize",
    "deserialize",
]


class AffineLayer:
    """One (weights, bias) pair; weights is n_out x n_in, bias is n_out."""

    __slots__ = ("weights", "bias", "_csc")

    def __init__(self, weights, bias):
        if sparse.issparse(weights):
            w = weights.tocsr().astype(np.float64, copy=False)
        else:
            arr = np.atleast_2d(np.asarray(weights, dtype=np.float64))
            w = sparse.csr_matrix(arr)
        w.sort_indices()
        b = np.asarray(bias, dtype=np.float64).reshape(-1)
        if w.shape[0] != b.shape[0]:
            raise ShapeError(f"weights have {w.shape[0]} rows but bias has "
                             f"length {b.shape[0]}")
        self.weights = w
        self.bias = b
        self._csc = None

    @property
    def n_out(self):
        return self.weights.shape[0]

    @property
    def n_in(self):
        return self.weights.shape[1]

    def weights_dense(self):
        return self.weights.toarray()

    def weights_csc(self):
        # cached CSC copy for the python backend's column sweep
        if self._csc is None:
            csc = self.weights.tocsc()
            csc.sort_indices()
            self._csc = csc
        return self._csc

    def nonzero_count(self):
        """Stored-entry count with an exact zero test (weights plus bias)."""
        return int(np.count_nonzero(self.weights.data)) + \
            int(np.count_nonzero(self.bias))

    def __eq__(self, other):
        if not isinstance(other, AffineLayer):
            return NotImplemented
        return (self.weights.shape == other.weights.shape
                and np.array_equal(self.weights_dense(), other.weights_dense())
                and np.array_equal(self.bias, other.bias))

    def __repr__(self):
        return f"AffineLayer({self.n_out}x{self.n_in})"


class NeuralNetwork:
    """Immutable ordered list of affine layers with a fixed input width."""

    __slots__ = ("layers", "input_dim")

    def __init__(self, layers, input_dim, check=True):
        layers = tuple(
            layer if isinstance(layer, AffineLayer) else AffineLayer(*layer)
            for layer in layers
        )
        input_dim = int(input_dim)
        if check:
            problems = validate(layers, input_dim)
            if problems:
                raise ShapeError("; ".join(problems))
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", input_dim)

    def __setattr__(self, name, value):
        raise AttributeError("NeuralNetwork is immutable")

    @property
    def depth(self):
        return len(self.layers)

    @property
    def output_dim(self):
        return self.layers[-1].n_out

    @property
    def widths(self):
        """Neuron counts N_0, ..., N_L including the input layer."""
        return (self.input_dim,) + tuple(layer.n_out for layer in self.layers)

    def __call__(self, x):
        return realize(self, x)

    def __eq__(self, other):
        if not isinstance(other, NeuralNetwork):
            return NotImplemented
        return (self.input_dim == other.input_dim
                and len(self.layers) == len(other.layers)
                and all(a == b for a, b in zip(self.layers, other.layers)))

    def __repr__(self):
        return (f"NeuralNetwork(depth={self.depth}, "
                f"dims={self.input_dim}->{self.output_dim})")


@dataclass(frozen=True)
class SizeReport:
    """Complexity measures of a network.

    depth L, per-layer nonzero weight counts M_l, their sum M, neuron
    count N = N_0 + sum_l N_l, and the input/output widths.
    """

    depth: int
    total_weights: int
    per_layer_weights: tuple
    neurons: int
    input_dim: int
    output_dim: int


def validate(net_or_layers, input_dim=None):
    """Report every dimension-chain violation; an empty list means ok."""
    if isinstance(net_or_layers, NeuralNetwork):
        layers = net_or_layers.layers
        input_dim = net_or_layers.input_dim
    else:
        layers = tuple(net_or_layers)
        if input_dim is None:
            raise ValueError("input_dim is required when passing raw layers")
    problems = []
    if input_dim < 1:
        problems.append(f"input_dim must be positive, got {input_dim}")
    if not layers:
        problems.append("no layers")
        return problems
    expected = input_dim
    for index, layer in enumerate(layers, start=1):
        if layer.n_in != expected:
            problems.append(f"layer {index} expects {layer.n_in} inputs "
                            f"but receives {expected}")
        expected = layer.n_out
    return problems


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != net.input_dim:
        raise ShapeError(f"input has shape {x.shape}, expected "
                         f"({net.input_dim},) or ({net.input_dim}, batch)")
    return np.ascontiguousarray(x)


def realize_batch(net, x):
    """ReLU realization of ``net`` on a (input_dim, batch) column block."""
    state = _as_batch(net, x)
    last = len(net.layers) - 1
    for index, layer in enumerate(net.layers):
        state = backend.affine_batch(layer, state, relu=index < last)
    return state


def realize(net, x):
    """ReLU realization of ``net`` at a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a vector, got shape {x.shape}")
    return realize_batch(net, x)[:, 0]


def size_metrics(net):
    per_layer = tuple(layer.nonzero_count() for layer in net.layers)
    return SizeReport(
        depth=net.depth,
        total_weights=sum(per_layer),
        per_layer_weights=per_layer,
        neurons=sum(net.widths),
        input_dim=net.input_dim,
        output_dim=net.output_dim,
    )


def serialize(net):
    """Encode a network as JSON bytes (dense row-major weight lists)."""
    payload = {
        "input_dim": net.input_dim,
        "layers": [
            {
                "rows": layer.n_out,
                "cols": layer.n_in,
                "weights": layer.weights_dense().reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in net.layers
        ],
    }
    return json.dumps(payload).encode("utf-8")


def deserialize(data):
    """Decode ``serialize`` output; raises ParseError on malformed input."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(payload, dict):
        raise ParseError("top-level value must be an object", offset=0)
    try:
        input_dim = int(payload["input_dim"])
        raw_layers = payload["layers"]
        layers = []
        for entry in raw_layers:
            rows, cols = int(entry["rows"]), int(entry["cols"])
            weights = np.asarray(entry["weights"], dtype=np.float64)
            if weights.size != rows * cols:
                raise ParseError(f"layer expects {rows * cols} weights, "
                                 f"got {weights.size}")
            layers.append(AffineLayer(weights.reshape(rows, cols),
                                      entry["bias"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed network object: {exc}") from exc
    return NeuralNetwork(layers, input_dim)
