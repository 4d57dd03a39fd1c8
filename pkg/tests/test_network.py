import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linregions.network import (
    Activation,
    DeepSignPattern,
    Layer,
    Network,
    NetworkFormatError,
    SignPattern,
    activation_pattern,
    forward,
    load_network,
    network_to_dict,
    random_network,
    region_affine_map,
    save_network,
)


def identity_relu_doc():
    return json.dumps(
        {
            "input_dim": 2,
            "layers": [
                {
                    "weights": [[1.0, 0.0], [0.0, 1.0]],
                    "bias": [0.0, 0.0],
                    "activation": {"kind": "relu"},
                }
            ],
        }
    )


class TestActivation:
    def test_slopes(self):
        assert Activation("relu").slopes() == (1.0, 0.0)
        assert Activation("leaky_relu", 0.1).slopes() == (1.0, 0.1)
        assert Activation("abs").slopes() == (1.0, -1.0)

    def test_identity_has_no_slopes(self):
        with pytest.raises(ValueError, match="sign semantics"):
            Activation("identity").slopes()

    def test_leaky_alpha_range(self):
        with pytest.raises(NetworkFormatError):
            Activation("leaky_relu", 0.0)
        with pytest.raises(NetworkFormatError):
            Activation("leaky_relu", 1.0)

    def test_unknown_kind(self):
        with pytest.raises(NetworkFormatError, match="unknown activation"):
            Activation("tanh")


class TestLoadNetwork:
    def test_identity_layer(self):
        net = load_network(identity_relu_doc())
        assert net.input_dim == 2
        assert net.layers[0].width == 2
        assert net.layers[0].activation == Activation("relu")

    def test_dimension_mismatch_reports_layer(self):
        doc = {
            "input_dim": 2,
            "layers": [
                {"weights": [[1.0, 0.0]], "bias": [0.0], "activation": {"kind": "relu"}},
                {"weights": [[1.0, 1.0]], "bias": [0.0], "activation": {"kind": "relu"}},
            ],
        }
        with pytest.raises(NetworkFormatError, match="layer 1"):
            load_network(json.dumps(doc))

    def test_zero_weight_row_rejected(self):
        doc = {
            "input_dim": 2,
            "layers": [
                {
                    "weights": [[1.0, 0.0], [0.0, 0.0]],
                    "bias": [0.0, 0.0],
                    "activation": {"kind": "relu"},
                }
            ],
        }
        with pytest.raises(NetworkFormatError, match="layer 0.*zero weight row"):
            load_network(json.dumps(doc))

    def test_identity_hidden_layer_rejected(self):
        doc = {
            "input_dim": 1,
            "layers": [
                {"weights": [[1.0]], "bias": [0.0], "activation": {"kind": "identity"}},
                {"weights": [[1.0]], "bias": [0.0], "activation": {"kind": "relu"}},
            ],
        }
        with pytest.raises(NetworkFormatError, match="layer 0.*identity"):
            load_network(json.dumps(doc))

    def test_identity_final_layer_allowed(self):
        doc = {
            "input_dim": 1,
            "layers": [
                {"weights": [[1.0]], "bias": [0.0], "activation": {"kind": "relu"}},
                {"weights": [[2.0]], "bias": [1.0], "activation": {"kind": "identity"}},
            ],
        }
        net = load_network(json.dumps(doc))
        assert not net.layers[-1].activation.sign_based

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("input_dim"),
            lambda d: d.pop("layers"),
            lambda d: d["layers"][0].pop("bias"),
            lambda d: d["layers"][0].pop("activation"),
            lambda d: d.__setitem__("layers", []),
            lambda d: d.__setitem__("input_dim", "two"),
        ],
    )
    def test_schema_violations(self, mutate):
        doc = json.loads(identity_relu_doc())
        mutate(doc)
        with pytest.raises(NetworkFormatError):
            load_network(json.dumps(doc))

    def test_invalid_json(self):
        with pytest.raises(NetworkFormatError, match="invalid JSON"):
            load_network("{not json")

    def test_round_trip_equals(self):
        net = load_network(identity_relu_doc())
        again = load_network(save_network(net))
        assert again == net


class TestRandomNetwork:
    def test_single_layer_shape(self):
        net = random_network(2, [16], Activation("leaky_relu", 0.01), seed=7)
        assert net.input_dim == 2
        assert [l.weights.shape for l in net.layers] == [(16, 2)]

    def test_two_layer_chain(self):
        net = random_network(4, [32, 32], Activation("relu"), seed=1)
        assert [l.weights.shape for l in net.layers] == [(32, 4), (32, 32)]

    def test_determinism(self):
        a = random_network(3, [8, 5], Activation("relu"), seed=42)
        b = random_network(3, [8, 5], Activation("relu"), seed=42)
        assert a == b
        for la, lb in zip(a.layers, b.layers):
            assert la.weights.tobytes() == lb.weights.tobytes()

    def test_different_seeds_differ(self):
        a = random_network(3, [8], Activation("relu"), seed=1)
        b = random_network(3, [8], Activation("relu"), seed=2)
        assert a != b

    def test_bad_args(self):
        with pytest.raises(ValueError):
            random_network(0, [4], Activation("relu"), seed=0)
        with pytest.raises(ValueError):
            random_network(2, [], Activation("relu"), seed=0)
        with pytest.raises(ValueError):
            random_network(2, [4, 0], Activation("relu"), seed=0)
        with pytest.raises(ValueError):
            random_network(2, [4], Activation("identity"), seed=0)


class TestForward:
    def test_identity_relu(self):
        net = load_network(identity_relu_doc())
        out, pre = forward(net, np.array([1.0, -1.0]))
        assert out == pytest.approx([1.0, 0.0])
        assert pre[0] == pytest.approx([1.0, -1.0])

    def test_abs_matches_definition(self):
        net = random_network(3, [6], Activation("abs"), seed=3)
        x = np.array([0.3, -1.2, 0.7])
        out, pre = forward(net, x)
        h = net.layers[0].weights @ x + net.layers[0].bias
        assert out == pytest.approx(np.abs(h))
        assert pre[0] == pytest.approx(h)

    def test_dimension_mismatch(self):
        net = load_network(identity_relu_doc())
        with pytest.raises(ValueError, match="width"):
            forward(net, np.array([1.0, 2.0, 3.0]))

    def test_batched_evaluation_matches_loop(self):
        net = random_network(2, [5, 4], Activation("leaky_relu"), seed=9)
        xs = np.random.default_rng(0).standard_normal((10, 2))
        batch_out, _ = forward(net, xs)
        for i, x in enumerate(xs):
            out, _ = forward(net, x)
            assert batch_out[i] == pytest.approx(out)


class TestActivationPattern:
    def test_identity_layer_signs(self):
        net = load_network(identity_relu_doc())
        pat = activation_pattern(net, np.array([1.0, -1.0]))
        assert pat.key() == "+-"
        assert not pat.per_layer[0].redundant.any()

    def test_sign_zero_is_positive(self):
        net = load_network(identity_relu_doc())
        pat = activation_pattern(net, np.array([0.0, -5.0]))
        assert pat.key() == "+-"

    def test_identity_output_layer_excluded(self):
        layers = [
            Layer([[1.0], [2.0]], [0.0, 0.0], Activation("relu")),
            Layer([[1.0, 1.0]], [0.0], Activation("identity")),
        ]
        net = Network(layers, 1)
        pat = activation_pattern(net, np.array([1.0]))
        assert len(pat.per_layer) == 1


class TestRegionAffineMap:
    def test_all_positive_is_raw_layer(self):
        net = random_network(3, [5], Activation("relu"), seed=11)
        pat = DeepSignPattern(
            (SignPattern(np.ones(5, dtype=np.int8), np.zeros(5, dtype=bool)),)
        )
        A, c = region_affine_map(net, pat)
        assert np.array_equal(A, net.layers[0].weights)
        assert np.array_equal(c, net.layers[0].bias)

    def test_all_negative_relu_is_dead(self):
        net = random_network(3, [5], Activation("relu"), seed=11)
        pat = DeepSignPattern(
            (SignPattern(-np.ones(5, dtype=np.int8), np.zeros(5, dtype=bool)),)
        )
        A, c = region_affine_map(net, pat)
        assert np.all(A == 0)
        assert np.all(c == 0)

    @pytest.mark.parametrize("kind,alpha", [("relu", 0.01), ("leaky_relu", 0.01), ("abs", 0.01)])
    def test_pointwise_consistency_with_forward(self, kind, alpha):
        # the pattern at x pins the slopes, so forward(x) == A x + c exactly
        net = random_network(3, [7, 6], Activation(kind, alpha), seed=21)
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = rng.standard_normal(3) * 2
            pat = activation_pattern(net, x)
            A, c = region_affine_map(net, pat)
            out, _ = forward(net, x)
            assert A @ x + c == pytest.approx(out, rel=1e-9, abs=1e-9)

    def test_identity_output_layer_composition(self):
        hidden = Layer([[1.0], [-1.0]], [0.0, 0.5], Activation("relu"))
        out_layer = Layer([[2.0, 3.0]], [1.0], Activation("identity"))
        net = Network([hidden, out_layer], 1)
        x = np.array([2.0])
        pat = activation_pattern(net, x)
        A, c = region_affine_map(net, pat)
        val, _ = forward(net, x)
        assert A @ x + c == pytest.approx(val)

    def test_width_mismatch(self):
        net = random_network(2, [4], Activation("relu"), seed=0)
        pat = DeepSignPattern(
            (SignPattern(np.ones(3, dtype=np.int8), np.zeros(3, dtype=bool)),)
        )
        with pytest.raises(ValueError, match="width"):
            region_affine_map(net, pat)


class TestSignPatterns:
    def test_sign_values_validated(self):
        with pytest.raises(ValueError):
            SignPattern(np.array([1, 0, -1], dtype=np.int8), np.zeros(3, dtype=bool))

    def test_redundant_units_keep_signs(self):
        p = SignPattern(np.array([1, -1], dtype=np.int8), np.array([False, True]))
        assert p.sign_string() == "+-"
        assert p.redundant_string() == "01"

    def test_lexicographic_order(self):
        plus = DeepSignPattern((SignPattern(np.array([1, 1], dtype=np.int8), np.zeros(2, bool)),))
        mixed = DeepSignPattern((SignPattern(np.array([1, -1], dtype=np.int8), np.zeros(2, bool)),))
        minus = DeepSignPattern((SignPattern(np.array([-1, 1], dtype=np.int8), np.zeros(2, bool)),))
        assert plus < mixed < minus
        assert sorted([minus, plus, mixed]) == [plus, mixed, minus]

    def test_deep_key_separates_layers(self):
        a = SignPattern(np.array([1, 1, -1], dtype=np.int8), np.zeros(3, bool))
        b = SignPattern(np.array([1, -1, 1], dtype=np.int8), np.zeros(3, bool))
        assert DeepSignPattern((a, b)).key() == "++-|+-+"


class TestSerialization:
    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_round_trip_bit_exact(self, seed):
        rng = np.random.default_rng(seed)
        depth = int(rng.integers(1, 3))
        widths = [int(rng.integers(1, 6)) for _ in range(depth)]
        net = random_network(int(rng.integers(1, 4)), widths, Activation("leaky_relu", 0.25), seed)
        again = load_network(save_network(net))
        for la, lb in zip(net.layers, again.layers):
            assert la.weights.tobytes() == lb.weights.tobytes()
            assert la.bias.tobytes() == lb.bias.tobytes()
            assert la.activation == lb.activation

    def test_awkward_floats_survive(self):
        w = np.array([[0.1, 1e-300], [-1.0 / 3.0, 1e17]])
        net = Network([Layer(w, np.array([np.pi, -0.0]), Activation("relu"))], 2)
        again = load_network(save_network(net))
        assert again.layers[0].weights.tobytes() == w.tobytes()

    def test_alpha_only_for_leaky(self):
        net = random_network(2, [3], Activation("relu"), seed=1)
        doc = network_to_dict(net)
        assert "alpha" not in doc["layers"][0]["activation"]
        net2 = random_network(2, [3], Activation("leaky_relu", 0.05), seed=1)
        doc2 = network_to_dict(net2)
        assert doc2["layers"][0]["activation"]["alpha"] == 0.05
