"""Piecewise-linear networks: forward evaluation, sign patterns, affine maps.

A network is a chain of dense layers, each a matrix/bias pair followed by a
two-slope pointwise nonlinearity (ReLU, leaky ReLU, absolute value).  On any
region of constant pre-activation signs the whole network collapses to a
single affine map, which :func:`region_affine_map` extracts by composing the
per-layer slope scalings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ACTIVATION_KINDS = ("relu", "leaky_relu", "abs", "identity")

DEFAULT_LEAKY_ALPHA = 0.01


class NetworkFormatError(ValueError):
    """A network document violates the schema or a structural invariant."""


@dataclass(frozen=True)
class Activation:
    """Two-slope pointwise nonlinearity.

    ``alpha`` is the negative-side slope and is only meaningful for
    ``leaky_relu``.  ``identity`` has no sign semantics and is legal only as
    the final layer's activation.
    """

    kind: str
    alpha: float = DEFAULT_LEAKY_ALPHA

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise NetworkFormatError(
                f"unknown activation kind {self.kind!r}; expected one of {ACTIVATION_KINDS}"
            )
        if self.kind == "leaky_relu" and not 0.0 < self.alpha < 1.0:
            raise NetworkFormatError(
                f"leaky_relu slope must satisfy 0 < alpha < 1, got {self.alpha}"
            )

    @property
    def sign_based(self) -> bool:
        return self.kind != "identity"

    def slopes(self) -> tuple[float, float]:
        """(positive-side, negative-side) slope pair."""
        if self.kind == "relu":
            return 1.0, 0.0
        if self.kind == "leaky_relu":
            return 1.0, self.alpha
        if self.kind == "abs":
            return 1.0, -1.0
        raise ValueError("identity activation has no sign semantics")

    def slope_vector(self, signs: np.ndarray) -> np.ndarray:
        s_pos, s_neg = self.slopes()
        return np.where(signs > 0, s_pos, s_neg)

    def apply(self, h: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(h, 0.0)
        if self.kind == "leaky_relu":
            return np.where(h >= 0, h, self.alpha * h)
        if self.kind == "abs":
            return np.abs(h)
        return h

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "leaky_relu":
            d["alpha"] = self.alpha
        return d


class Layer:
    """Dense affine map plus activation: x -> activation(weights @ x + bias)."""

    __slots__ = ("weights", "bias", "activation")

    def __init__(self, weights, bias, activation: Activation, index: int | None = None):
        tag = f"layer {index}: " if index is not None else ""
        weights = np.array(weights, dtype=np.float64)
        bias = np.array(bias, dtype=np.float64).ravel()
        if weights.ndim != 2:
            raise NetworkFormatError(f"{tag}weights must be a matrix, got ndim={weights.ndim}")
        if weights.shape[0] != bias.shape[0]:
            raise NetworkFormatError(
                f"{tag}weights have {weights.shape[0]} rows but bias has length {bias.shape[0]}"
            )
        norms = np.linalg.norm(weights, axis=1)
        if weights.shape[0] and norms.min() < 1e-12:
            k = int(np.argmin(norms))
            raise NetworkFormatError(f"{tag}all-zero weight row for unit {k}")
        weights.setflags(write=False)
        bias.setflags(write=False)
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, Layer)
            and self.activation == other.activation
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )

    def __repr__(self):
        return f"Layer({self.width}x{self.input_dim}, {self.activation.kind})"


class Network:
    """Sequential stack of layers over a D-dimensional input space.

    Adjacent widths must chain, and only the final layer may carry the
    identity activation; every other activation must be sign-based.
    """

    __slots__ = ("layers", "input_dim")

    def __init__(self, layers: list[Layer], input_dim: int):
        if input_dim < 1:
            raise NetworkFormatError(f"input_dim must be >= 1, got {input_dim}")
        if not layers:
            raise NetworkFormatError("a network needs at least one layer")
        expected = input_dim
        for i, layer in enumerate(layers):
            if layer.input_dim != expected:
                raise NetworkFormatError(
                    f"layer {i}: input width {layer.input_dim} does not match "
                    f"expected width {expected}"
                )
            expected = layer.width
            if not layer.activation.sign_based and i != len(layers) - 1:
                raise NetworkFormatError(
                    f"layer {i}: identity activation is only legal in the final layer"
                )
        self.layers = list(layers)
        self.input_dim = int(input_dim)

    @property
    def sign_layer_count(self) -> int:
        return sum(1 for l in self.layers if l.activation.sign_based)

    @property
    def widths(self) -> list[int]:
        return [l.width for l in self.layers]

    def __eq__(self, other):
        return (
            isinstance(other, Network)
            and self.input_dim == other.input_dim
            and self.layers == other.layers
        )

    def __repr__(self):
        dims = "->".join(str(d) for d in [self.input_dim, *self.widths])
        return f"Network({dims})"


@dataclass(frozen=True)
class SignPattern:
    """Per-unit activation signs for one layer.

    ``signs`` holds the resolved sign (+1/-1) of every unit, including units
    whose hyperplane does not cut the region; those are flagged in
    ``redundant`` instead of being zeroed out.
    """

    signs: np.ndarray
    redundant: np.ndarray

    def __post_init__(self):
        signs = np.ascontiguousarray(self.signs, dtype=np.int8)
        redundant = np.ascontiguousarray(self.redundant, dtype=bool)
        if signs.shape != redundant.shape or signs.ndim != 1:
            raise ValueError("signs and redundancy mask must be 1-d and equally long")
        if signs.size and not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be +1 or -1 (redundant units keep their resolved sign)")
        signs.setflags(write=False)
        redundant.setflags(write=False)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "redundant", redundant)

    @property
    def width(self) -> int:
        return self.signs.shape[0]

    def sign_string(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.signs)

    def redundant_string(self) -> str:
        return "".join("1" if r else "0" for r in self.redundant)

    def __eq__(self, other):
        return isinstance(other, SignPattern) and np.array_equal(self.signs, other.signs) and np.array_equal(
            self.redundant, other.redundant
        )

    def __hash__(self):
        return hash((self.signs.tobytes(), self.redundant.tobytes()))


@dataclass(frozen=True)
class DeepSignPattern:
    """Sign patterns of every sign-based layer; the identity of a region.

    Orders lexicographically by the flattened sign sequence ('+' before '-'),
    which fixes the canonical region ordering of a partition.
    """

    per_layer: tuple[SignPattern, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_layer", tuple(self.per_layer))

    def key(self) -> str:
        """Canonical pattern string, layer segments joined by '|'."""
        return "|".join(p.sign_string() for p in self.per_layer)

    def redundant_key(self) -> str:
        return "|".join(p.redundant_string() for p in self.per_layer)

    def signs_only(self) -> tuple[bytes, ...]:
        """Hashable per-layer signs, ignoring redundancy flags."""
        return tuple(p.signs.tobytes() for p in self.per_layer)

    def prefix(self, layers: int) -> "DeepSignPattern":
        return DeepSignPattern(self.per_layer[:layers])

    def __eq__(self, other):
        return isinstance(other, DeepSignPattern) and self.per_layer == other.per_layer

    def __hash__(self):
        return hash(self.per_layer)

    def __lt__(self, other):
        return self.key() < other.key()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network, returning the output and every pre-activation.

    ``x`` may be a single vector of length D or a batch of shape (N, D); the
    pre-activation list mirrors that shape per layer.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"input has width {x.shape[-1]}, network expects {net.input_dim}")
    z = x
    preacts = []
    for layer in net.layers:
        h = z @ layer.weights.T + layer.bias
        preacts.append(h)
        z = layer.activation.apply(h)
    return z, preacts


def activation_pattern(net: Network, x: np.ndarray) -> DeepSignPattern:
    """Sign pattern of x: elementwise pre-activation signs, sign(0) = +1.

    Redundancy flags are all false; a pointwise evaluation cannot know
    whether a unit's hyperplane misses the surrounding region.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("activation_pattern takes a single input vector")
    _, preacts = forward(net, x)
    per_layer = []
    for layer, h in zip(net.layers, preacts):
        if layer.activation.sign_based:
            signs = np.where(h >= 0, 1, -1).astype(np.int8)
            per_layer.append(SignPattern(signs, np.zeros(h.shape[0], dtype=bool)))
    return DeepSignPattern(tuple(per_layer))


def region_affine_map(net: Network, pattern: DeepSignPattern) -> tuple[np.ndarray, np.ndarray]:
    """Affine map (A, c) the network computes on the region with this pattern.

    Composition runs left to right: starting from the first layer's (W, b),
    each sign-based layer contributes a diagonal slope scaling before the
    next layer's weights are applied.  A final identity layer adds no
    scaling.
    """
    sign_widths = [l.width for l in net.layers if l.activation.sign_based]
    pat_widths = [p.width for p in pattern.per_layer]
    if sign_widths != pat_widths:
        raise ValueError(f"pattern widths {pat_widths} do not match layer widths {sign_widths}")
    A = net.layers[0].weights.copy()
    c = net.layers[0].bias.copy()
    seg = 0
    for i, layer in enumerate(net.layers):
        if i > 0:
            A = layer.weights @ A
            c = layer.weights @ c + layer.bias
        if layer.activation.sign_based:
            s = layer.activation.slope_vector(pattern.per_layer[seg].signs)
            seg += 1
            A *= s[:, None]
            c *= s
    return A, c


def random_network(
    input_dim: int,
    widths: list[int],
    activation: Activation,
    seed: int,
) -> Network:
    """Network with i.i.d. standard-normal weights and biases.

    Draws come from numpy's PCG64 stream seeded with ``seed`` (layer by
    layer, weights before bias), so the result is a pure function of the
    arguments and stable across platforms.
    """
    if input_dim < 1:
        raise ValueError(f"input_dim must be >= 1, got {input_dim}")
    if not widths or any(k < 1 for k in widths):
        raise ValueError(f"widths must all be >= 1, got {widths}")
    if not activation.sign_based:
        raise ValueError("random_network builds sign-based layers; identity is not allowed")
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    fan_in = input_dim
    for k in widths:
        w = rng.standard_normal((k, fan_in))
        b = rng.standard_normal(k)
        layers.append(Layer(w, b, activation))
        fan_in = k
    return Network(layers, input_dim)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation.to_dict(),
            }
            for layer in net.layers
        ],
    }


def save_network(net: Network) -> str:
    """JSON document for the network; floats keep full round-trip precision."""
    return json.dumps(network_to_dict(net), indent=2)


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise NetworkFormatError(f"expected a JSON object, got {type(doc).__name__}")
    try:
        input_dim = doc["input_dim"]
        raw_layers = doc["layers"]
    except KeyError as e:
        raise NetworkFormatError(f"missing required key {e.args[0]!r}") from None
    if not isinstance(input_dim, int) or isinstance(input_dim, bool):
        raise NetworkFormatError(f"input_dim must be an integer, got {input_dim!r}")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise NetworkFormatError("layers must be a non-empty list")
    layers = []
    for i, entry in enumerate(raw_layers):
        if not isinstance(entry, dict):
            raise NetworkFormatError(f"layer {i}: expected an object")
        for key in ("weights", "bias", "activation"):
            if key not in entry:
                raise NetworkFormatError(f"layer {i}: missing key {key!r}")
        act_doc = entry["activation"]
        if not isinstance(act_doc, dict) or "kind" not in act_doc:
            raise NetworkFormatError(f"layer {i}: activation must be an object with 'kind'")
        try:
            if act_doc["kind"] == "leaky_relu" and "alpha" in act_doc:
                act = Activation(act_doc["kind"], float(act_doc["alpha"]))
            else:
                act = Activation(act_doc["kind"])
        except NetworkFormatError as e:
            raise NetworkFormatError(f"layer {i}: {e}") from None
        try:
            layers.append(Layer(entry["weights"], entry["bias"], act, index=i))
        except (NetworkFormatError, ValueError, TypeError) as e:
            if isinstance(e, NetworkFormatError):
                raise
            raise NetworkFormatError(f"layer {i}: malformed weights or bias ({e})") from None
    return Network(layers, input_dim)


def load_network(document: str | bytes) -> Network:
    """Parse and validate a network from its JSON document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise NetworkFormatError(f"invalid JSON: {e}") from None
    return network_from_dict(doc)
