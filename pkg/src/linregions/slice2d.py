"""Exact 2D slices of a partition, drawn as SVG line art.

The network is restricted to a plane ``x = anchor + basis @ u`` by
reparameterizing the first layer, the restricted two-input network is
enumerated exactly, and every region boundary segment is obtained by
clipping its generating line against the region's other constraints.
Segments are colored by the depth of the layer that generated them.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import StringIO

import numpy as np

from .arrangement import Partition, SearchOptions
from .deep import enumerate_network
from .lp import Box
from .network import Layer, Network, NetworkFormatError

# layer 1 black, layer 2 blue, layer 3 red; deeper layers cycle
LAYER_PALETTE = ("#000000", "#0000ff", "#ff0000")

_MIN_SEGMENT = 1e-9


@dataclass(frozen=True)
class SliceSpec:
    """A 2-plane in input space plus rendering parameters.

    ``basis`` holds two orthonormal columns; ``extent`` is the half-width of
    the rendered square in slice coordinates and ``resolution`` its pixel
    size.
    """

    anchor: np.ndarray
    basis: np.ndarray
    extent: float
    resolution: int = 800

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=np.float64).ravel()
        basis = np.asarray(self.basis, dtype=np.float64)
        if anchor.shape[0] < 2:
            raise ValueError("slices need an input dimension of at least 2")
        if basis.shape != (anchor.shape[0], 2):
            raise ValueError(f"basis must be ({anchor.shape[0]}, 2), got {basis.shape}")
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(2), atol=1e-10):
            raise ValueError("basis columns must be orthonormal within 1e-10")
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16")
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "basis", basis)

    @staticmethod
    def axis_aligned(dim: int, extent: float = 5.0, resolution: int = 800) -> "SliceSpec":
        basis = np.zeros((dim, 2))
        basis[0, 0] = 1.0
        basis[1, 1] = 1.0
        return SliceSpec(np.zeros(dim), basis, extent, resolution)


def restrict_network(net: Network, spec: SliceSpec) -> Network:
    """Two-input network computing the original one on the slice plane."""
    if net.input_dim != spec.anchor.shape[0]:
        raise ValueError(
            f"slice anchor has dimension {spec.anchor.shape[0]}, network input is {net.input_dim}"
        )
    first = net.layers[0]
    w = first.weights @ spec.basis
    b = first.weights @ spec.anchor + first.bias
    norms = np.linalg.norm(w, axis=1)
    if w.shape[0] and norms.min() < 1e-12:
        k = int(np.argmin(norms))
        raise NetworkFormatError(
            f"unit {k}'s hyperplane is parallel to the slice plane; move the anchor or basis"
        )
    layers = [Layer(w, b, first.activation)] + net.layers[1:]
    return Network(layers, 2)


def slice_partition(
    net: Network, spec: SliceSpec, options: SearchOptions | None = None
) -> Partition:
    """Exact partition of the slice plane in slice coordinates."""
    restricted = restrict_network(net, spec)
    return enumerate_network(restricted, Box(spec.extent, 2), options)


def boundary_segments(partition: Partition) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """Region boundary segments ``(p0, p1, layer_index)`` in slice coordinates.

    Each region contributes the piece of every generating hyperplane that is
    tight against its remaining constraints; shared edges are deduplicated.
    """
    segments = []
    seen = set()
    for region in partition.regions:
        A = region.constraints.normals
        b = region.constraints.offsets
        src = region.sources
        for i in range(A.shape[0]):
            if src[i, 0] < 0:
                continue  # box face, not a network hyperplane
            a = A[i]
            c = b[i]
            p0 = -c * a
            d = np.array([-a[1], a[0]])
            t_lo, t_hi = -np.inf, np.inf
            ok = True
            for j in range(A.shape[0]):
                if j == i:
                    continue
                denom = float(A[j] @ d)
                rhs = -(float(A[j] @ p0) + b[j])
                if abs(denom) < 1e-14:
                    if rhs > 0:
                        ok = False
                        break
                elif denom > 0:
                    t_lo = max(t_lo, rhs / denom)
                else:
                    t_hi = min(t_hi, rhs / denom)
            if not ok or t_hi - t_lo <= _MIN_SEGMENT:
                continue
            e0 = p0 + t_lo * d
            e1 = p0 + t_hi * d
            key = (int(src[i, 0]), round(e0[0], 9), round(e0[1], 9), round(e1[0], 9), round(e1[1], 9))
            key_rev = (int(src[i, 0]), key[3], key[4], key[1], key[2])
            if key in seen or key_rev in seen:
                continue
            seen.add(key)
            segments.append((e0, e1, int(src[i, 0])))
    return segments


def render_svg(segments, spec: SliceSpec) -> str:
    """SVG 1.1 document of the slice boundaries, one stroke color per layer."""
    res = spec.resolution
    ext = float(spec.extent)
    scale = res / (2.0 * ext)

    def to_px(p):
        return (p[0] + ext) * scale, (ext - p[1]) * scale

    out = StringIO()
    out.write(
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{res}" height="{res}" viewBox="0 0 {res} {res}">\n'
    )
    out.write(f'<rect width="{res}" height="{res}" fill="#ffffff"/>\n')
    for e0, e1, layer in segments:
        x1, y1 = to_px(e0)
        x2, y2 = to_px(e1)
        color = LAYER_PALETTE[layer % len(LAYER_PALETTE)]
        out.write(
            f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" '
            f'stroke="{color}" stroke-width="1"/>\n'
        )
    out.write("</svg>\n")
    return out.getvalue()


def slice_svg(net: Network, spec: SliceSpec, options: SearchOptions | None = None) -> tuple[str, Partition]:
    partition = slice_partition(net, spec, options)
    svg = render_svg(boundary_segments(partition), spec)
    return svg, partition
