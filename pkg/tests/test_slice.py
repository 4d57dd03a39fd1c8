import numpy as np
import pytest

from linregions.deep import enumerate_network
from linregions.lp import Box
from linregions.network import Activation, forward, random_network
from linregions.slice2d import (
    LAYER_PALETTE,
    SliceSpec,
    boundary_segments,
    render_svg,
    restrict_network,
    slice_partition,
    slice_svg,
)


class TestSliceSpec:
    def test_axis_aligned_helper(self):
        spec = SliceSpec.axis_aligned(4, extent=3.0)
        assert spec.anchor.shape == (4,)
        assert spec.basis.shape == (4, 2)
        assert spec.extent == 3.0

    def test_orthonormality_enforced(self):
        basis = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError, match="orthonormal"):
            SliceSpec(np.zeros(2), basis, 5.0)

    def test_dimension_floor(self):
        with pytest.raises(ValueError, match="at least 2"):
            SliceSpec(np.zeros(1), np.zeros((1, 2)), 5.0)

    def test_extent_positive(self):
        with pytest.raises(ValueError, match="extent"):
            SliceSpec.axis_aligned(2, extent=0.0)


class TestRestrictNetwork:
    def test_identity_basis_is_noop_in_2d(self):
        net = random_network(2, [5], Activation("relu"), seed=1)
        spec = SliceSpec.axis_aligned(2)
        restricted = restrict_network(net, spec)
        assert np.allclose(restricted.layers[0].weights, net.layers[0].weights)
        assert np.allclose(restricted.layers[0].bias, net.layers[0].bias)

    def test_restriction_agrees_with_forward(self):
        net = random_network(5, [6, 4], Activation("leaky_relu", 0.01), seed=2)
        rng = np.random.default_rng(0)
        q, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        spec = SliceSpec(rng.standard_normal(5), q, 4.0)
        restricted = restrict_network(net, spec)
        for _ in range(20):
            u = rng.uniform(-4, 4, size=2)
            x = spec.anchor + spec.basis @ u
            out_full, _ = forward(net, x)
            out_slice, _ = forward(restricted, u)
            assert out_slice == pytest.approx(out_full, rel=1e-10, abs=1e-10)


class TestSegments:
    def test_segments_lie_on_generating_hyperplanes(self):
        net = random_network(2, [6], Activation("relu"), seed=4)
        spec = SliceSpec.axis_aligned(2, extent=5.0)
        partition = slice_partition(net, spec)
        segs = boundary_segments(partition)
        assert segs
        W = net.layers[0].weights
        b = net.layers[0].bias
        for e0, e1, layer in segs:
            assert layer == 0
            # sampled points on the drawn segment satisfy some unit's
            # hyperplane equation
            for t in (0.0, 0.25, 0.5, 0.75, 1.0):
                x = e0 + t * (e1 - e0)
                assert np.abs(W @ x + b).min() <= 1e-6

    def test_slice_count_matches_restricted_enumeration(self):
        net = random_network(3, [5, 3], Activation("leaky_relu", 0.01), seed=5)
        spec = SliceSpec.axis_aligned(3, extent=4.0)
        partition = slice_partition(net, spec)
        direct = enumerate_network(restrict_network(net, spec), Box(4.0, 2))
        assert partition.pattern_keys() == direct.pattern_keys()


class TestSvg:
    def test_three_layer_net_uses_three_colors(self):
        net = random_network(2, [4, 4, 4], Activation("leaky_relu", 0.01), seed=6)
        spec = SliceSpec.axis_aligned(2, extent=3.0)
        svg, partition = slice_svg(net, spec)
        colors = {c for c in LAYER_PALETTE if f'stroke="{c}"' in svg}
        assert len(colors) == 3
        assert svg.startswith('<?xml version="1.0"')
        assert 'version="1.1"' in svg

    def test_single_layer_single_color(self):
        net = random_network(2, [4], Activation("relu"), seed=7)
        svg, _ = slice_svg(net, SliceSpec.axis_aligned(2, extent=3.0))
        assert f'stroke="{LAYER_PALETTE[0]}"' in svg
        assert f'stroke="{LAYER_PALETTE[1]}"' not in svg

    def test_render_empty_segments(self):
        svg = render_svg([], SliceSpec.axis_aligned(2, extent=1.0, resolution=100))
        assert "<svg" in svg and "</svg>" in svg
