import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relu_rb import backend
from relu_rb.calculus import identity_net
from relu_rb.errors import ParseError, ShapeError
from relu_rb.network import (
    AffineLayer,
    NeuralNetwork,
    deserialize,
    realize,
    realize_batch,
    serialize,
    size_metrics,
    validate,
)

from conftest import python_oracle_realize, random_dense_net


class TestRealize:
    def test_single_affine_layer_identity(self):
        net = NeuralNetwork([AffineLayer(np.eye(2), np.zeros(2))], 2)
        assert np.array_equal(realize(net, np.array([1.0, -1.0])),
                              np.array([1.0, -1.0]))

    def test_relu_clips_between_layers(self):
        net = NeuralNetwork(
            [AffineLayer(np.eye(1), np.zeros(1))] * 2, 1)
        assert realize(net, np.array([-3.0]))[0] == 0.0

    def test_identity_net_realizes_identity(self):
        net = identity_net(2, 3)
        assert np.array_equal(realize(net, np.array([0.7, -0.2])),
                              np.array([0.7, -0.2]))

    def test_input_shape_error(self):
        net = NeuralNetwork([AffineLayer(np.eye(2), np.zeros(2))], 2)
        with pytest.raises(ShapeError):
            realize(net, np.array([1.0, 2.0, 3.0]))

    def test_matches_python_oracle_bitwise(self, rng):
        for _ in range(25):
            net = random_dense_net(rng, int(rng.integers(1, 5)),
                                   int(rng.integers(1, 5)))
            x = rng.standard_normal(net.input_dim) * 4.0
            expected = python_oracle_realize(net, x)
            assert np.array_equal(realize(net, x), expected)

    def test_backends_bit_identical(self, rng):
        nets = [random_dense_net(rng, 3, 4) for _ in range(10)]
        x = rng.standard_normal((3, 17))
        previous = backend.active_backend()
        try:
            results = {}
            for name in backend.available_backends():
                backend.set_backend(name)
                results[name] = [realize_batch(net, x) for net in nets]
        finally:
            backend.set_backend(previous)
        if len(results) < 2:
            pytest.skip("compiled kernel not available")
        for a, b in zip(results["compiled"], results["python"]):
            assert np.array_equal(a, b)

    def test_batch_matches_single(self, rng):
        net = random_dense_net(rng, 4, 3)
        x = rng.standard_normal((4, 9))
        batched = realize_batch(net, x)
        for column in range(x.shape[1]):
            assert np.array_equal(batched[:, column],
                                  realize(net, x[:, column]))


class TestSizeMetrics:
    def test_identity_layer_counts(self):
        net = NeuralNetwork([AffineLayer(np.eye(2), np.zeros(2))], 2)
        report = size_metrics(net)
        assert report.depth == 1
        assert report.total_weights == 2
        assert report.neurons == 4

    def test_explicit_zeros_do_not_count(self):
        from scipy import sparse
        weights = sparse.csr_matrix(
            (np.array([1.0, 0.0, 2.0]),
             (np.array([0, 0, 1]), np.array([0, 1, 1]))),
            shape=(2, 2))
        net = NeuralNetwork([AffineLayer(weights, np.zeros(2))], 2)
        assert size_metrics(net).total_weights == 2

    def test_identity_net_weight_bound(self):
        report = size_metrics(identity_net(3, 2))
        assert report.total_weights <= 2 * 3 * 2

    def test_per_layer_sums_to_total(self, rng):
        net = random_dense_net(rng, 3, 4)
        report = size_metrics(net)
        assert sum(report.per_layer_weights) == report.total_weights
        assert report.neurons == net.input_dim + sum(
            layer.n_out for layer in net.layers)


class TestValidate:
    def test_chained_dims_ok(self):
        layers = [AffineLayer(np.ones((4, 3)), np.zeros(4)),
                  AffineLayer(np.ones((2, 4)), np.zeros(2))]
        assert validate(layers, 3) == []

    def test_mismatch_reported_with_layer_index(self):
        layers = [AffineLayer(np.ones((4, 3)), np.zeros(4)),
                  AffineLayer(np.ones((2, 5)), np.zeros(2))]
        problems = validate(layers, 3)
        assert len(problems) == 1
        assert "layer 2" in problems[0]

    def test_empty_layer_list(self):
        assert validate([], 3) == ["no layers"]

    def test_constructor_rejects_bad_chain(self):
        layers = [AffineLayer(np.ones((4, 3)), np.zeros(4)),
                  AffineLayer(np.ones((2, 5)), np.zeros(2))]
        with pytest.raises(ShapeError):
            NeuralNetwork(layers, 3)
        bad = NeuralNetwork(layers, 3, check=False)
        assert validate(bad)

    def test_bias_length_mismatch(self):
        with pytest.raises(ShapeError):
            AffineLayer(np.ones((2, 2)), np.zeros(3))


class TestSerialization:
    def test_round_trip_identity(self):
        net = identity_net(2, 1)
        assert deserialize(serialize(net)) == net

    def test_round_trip_preserves_realization(self, rng):
        from relu_rb.approx import scalar_mult_net
        net = scalar_mult_net(1.0, 1e-2)
        clone = deserialize(serialize(net))
        x = rng.uniform(-1, 1, (2, 100))
        assert np.array_equal(realize_batch(net, x),
                              realize_batch(clone, x))

    def test_round_trip_bit_exact_weights(self, rng):
        net = random_dense_net(rng, 3, 3)
        clone = deserialize(serialize(net))
        assert clone == net

    def test_truncated_stream_parse_error(self):
        data = serialize(identity_net(2, 2))[:-10]
        with pytest.raises(ParseError):
            deserialize(data)

    def test_parse_error_carries_offset(self):
        with pytest.raises(ParseError) as info:
            deserialize(b'{"input_dim": 2, "layers": [')
        assert info.value.offset is not None

    def test_schema_error(self):
        with pytest.raises(ParseError):
            deserialize(json.dumps({"input_dim": 2}).encode())

    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False,
                              width=64),
                    min_size=4, max_size=4))
    @settings(max_examples=50, deadline=None)
    def test_weight_values_round_trip(self, values):
        net = NeuralNetwork(
            [AffineLayer(np.array(values).reshape(2, 2), np.zeros(2))], 2)
        assert deserialize(serialize(net)) == net


def test_network_is_immutable():
    net = identity_net(2, 1)
    with pytest.raises(AttributeError):
        net.input_dim = 5
