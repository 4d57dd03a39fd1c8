"""Multilayer partition enumeration by recursive subdivision.

Layer one's arrangement is enumerated first; within each of its regions the
next layer's pre-activation is an affine map of the input, so that layer
contributes a region-constrained arrangement of its own, and the single
layer search runs again seeded with the region's constraint rows.  Repeating
through the last sign-based layer yields the network's full input-space
partition with one affine map per region.
"""

from __future__ import annotations

import multiprocessing
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .arrangement import (
    VERT_MAX_DIM,
    EnumerationStats,
    Partition,
    Region,
    SearchOptions,
    _box_corner_vertices,
    _box_sources,
    _failure_label,
)
from .lp import Box, HalfspaceSystem, LPNumericalError
from .network import DeepSignPattern, Network, SignPattern, region_affine_map
from .search import LayerProblem, Node, StepStats, root_node, step


@dataclass
class SubdivisionFrame:
    """A region of the partition built by the first ``depth`` sign layers.

    ``composed`` is the affine feature map (A, c) of those layers restricted
    to the region, slope scalings folded in, so the next layer's
    pre-activation over the region is ``layer.weights @ (A x + c) +
    layer.bias``.  The private fields carry the search state (interior
    point, outer box, cached points, vertex set) that seeds the next
    layer's search.
    """

    depth: int
    region: Region
    composed: tuple[np.ndarray, np.ndarray]
    _islack: float = 0.0
    _lo: np.ndarray | None = None
    _hi: np.ndarray | None = None
    _pts: np.ndarray | None = None
    _pts_slack: np.ndarray | None = None
    _verts: np.ndarray | None = None
    _vrows: np.ndarray | None = None


def root_frame(net: Network, box: Box) -> SubdivisionFrame:
    """The whole box as a depth-0 frame with the identity feature map."""
    D = net.input_dim
    if box.dim != D:
        raise ValueError(f"box dimension {box.dim} does not match network input {D}")
    box_A, box_b = box.rows()
    constraints = HalfspaceSystem(box_A, box_b) if box_A.shape[0] else HalfspaceSystem(
        np.zeros((0, D)), np.zeros(0)
    )
    if box.bounded:
        hw = float(box.half_width)
        lo = np.full(D, -hw)
        hi = np.full(D, hw)
        islack = hw
    else:
        lo = np.full(D, -np.inf)
        hi = np.full(D, np.inf)
        islack = np.inf
    region = Region(
        pattern=DeepSignPattern(()),
        constraints=constraints,
        interior=np.zeros(D),
        margin=islack,
        sources=_box_sources(box),
    )
    frame = SubdivisionFrame(
        depth=0,
        region=region,
        composed=(np.eye(D), np.zeros(D)),
        _islack=islack,
        _lo=lo,
        _hi=hi,
        _pts=np.zeros((0, D)),
        _pts_slack=np.zeros(0),
    )
    if box.bounded and D <= VERT_MAX_DIM:
        frame._verts, frame._vrows = _box_corner_vertices(D, float(box.half_width))
    return frame


@dataclass
class _FrameContext:
    """Per-frame data shared by every node of its layer search."""

    depth: int
    prefix: tuple[SignPattern, ...]
    problem: LayerProblem
    base_sources: np.ndarray
    feat_A: np.ndarray
    feat_c: np.ndarray


def _frame_context(frame: SubdivisionFrame, layer, options: SearchOptions) -> _FrameContext:
    A, c = frame.composed
    if layer.input_dim != A.shape[0]:
        raise ValueError(
            f"layer expects width {layer.input_dim}, composed map outputs {A.shape[0]}"
        )
    eff_W = layer.weights @ A
    eff_b = layer.weights @ c + layer.bias
    problem = LayerProblem(
        eff_W,
        eff_b,
        frame.region.constraints.normals,
        frame.region.constraints.offsets,
        options.limits(),
        n_box=int(np.sum(frame.region.sources[:, 0] == -1)) if frame.region.sources is not None else 0,
    )
    return _FrameContext(
        depth=frame.depth,
        prefix=tuple(frame.region.pattern.per_layer),
        problem=problem,
        base_sources=frame.region.sources,
        feat_A=A,
        feat_c=c,
    )


def _frame_root_node(ctx: _FrameContext, frame: SubdivisionFrame) -> Node:
    node = root_node(
        ctx.problem,
        frame.region.interior,
        frame._islack,
        frame._lo,
        frame._hi,
        pts=frame._pts,
        pts_slack=frame._pts_slack,
    )
    node.verts = frame._verts
    node.vrows = frame._vrows
    return node


def _child_frame(ctx: _FrameContext, leaf: Node, layer) -> SubdivisionFrame:
    """Turn a finished layer-search leaf into the next frame."""
    problem = ctx.problem
    pattern = SignPattern(leaf.signs.copy(), leaf.redundant.copy())
    act = leaf.act_idx
    sgn = leaf.act_sgn.astype(np.float64)
    rows_A = np.vstack([problem.base_A, problem.hyp_A[act] * sgn[:, None]])
    rows_b = np.concatenate([problem.base_b, problem.hyp_b[act] * sgn])
    unit_src = (
        np.stack(
            [np.full(act.shape[0], ctx.depth, dtype=np.int32), act.astype(np.int32)], axis=1
        )
        if act.size
        else np.zeros((0, 2), dtype=np.int32)
    )
    sources = np.vstack([ctx.base_sources, unit_src])
    region = Region(
        pattern=DeepSignPattern(ctx.prefix + (pattern,)),
        constraints=HalfspaceSystem(rows_A, rows_b)
        if rows_A.shape[0]
        else HalfspaceSystem(np.zeros((0, problem.D)), np.zeros(0)),
        interior=leaf.interior,
        margin=float(leaf.islack),
        sources=sources,
    )
    slopes = layer.activation.slope_vector(leaf.signs)
    eff_W = layer.weights @ ctx.feat_A
    eff_b = layer.weights @ ctx.feat_c + layer.bias
    composed = (slopes[:, None] * eff_W, slopes * eff_b)
    verts = vrows = None
    if leaf.verts is not None:
        # remap defining-row ids: base rows keep their ids, added unit rows
        # take base-relative positions in the child frame's row table
        vrows = leaf.vrows.copy()
        n_base = problem.n_base
        pos_of_unit = {int(u): p for p, u in enumerate(act)}
        high = vrows >= n_base
        if high.any():
            flat = vrows[high]
            vrows[high] = np.array(
                [n_base + pos_of_unit[int(u - n_base)] for u in flat], dtype=np.int32
            )
        order = np.argsort(vrows, axis=1)
        vrows = np.take_along_axis(vrows, order, axis=1)
        verts = leaf.verts
    return SubdivisionFrame(
        depth=ctx.depth + 1,
        region=region,
        composed=composed,
        _islack=float(leaf.islack),
        _lo=leaf.lo,
        _hi=leaf.hi,
        _pts=leaf.pts,
        _pts_slack=leaf.pts_slack,
        _verts=verts,
        _vrows=vrows,
    )


def subdivide(
    frame: SubdivisionFrame, layer, box: Box, options: SearchOptions | None = None
) -> list[SubdivisionFrame]:
    """Split one frame by a layer's region-constrained arrangement.

    Runs the single-layer search seeded with the frame's constraint rows and
    returns one child frame per surviving sign pattern, each with its
    composed feature map extended by the layer's slope scaling.
    """
    options = options or SearchOptions()
    ctx = _frame_context(frame, layer, options)
    stats = StepStats()
    frames: list[SubdivisionFrame] = []
    failures: list[str] = []
    stack = [_frame_root_node(ctx, frame)]
    while stack:
        node = stack.pop()
        try:
            kind, *out = step(ctx.problem, node, stats)
        except LPNumericalError as exc:
            failures.append(f"layer {ctx.depth}: branch {_failure_label(node)}: {exc}")
            continue
        if kind == "branch":
            stack.extend(c for c in reversed(out) if c is not None)
        elif kind == "leaf":
            frames.append(_child_frame(ctx, out[0], layer))
    if failures:
        raise LPNumericalError("; ".join(failures))
    frames.sort(key=lambda f: f.region.pattern.key())
    return frames


def _sign_layers(net: Network):
    return [l for l in net.layers if l.activation.sign_based]


_WORKER_NET: Network | None = None
_WORKER_OPTS: SearchOptions | None = None


def _deep_pool_init(net, options):
    global _WORKER_NET, _WORKER_OPTS
    _WORKER_NET = net
    _WORKER_OPTS = options


def _run_deep_subtree(task):
    """Exhaust one (frame context, node) subtree across all deeper layers."""
    net, options = _WORKER_NET, _WORKER_OPTS
    ctx, node = task
    layers = _sign_layers(net)
    stats = StepStats()
    out_regions = []
    failures: list[str] = []
    count = 0
    stack = [(ctx, node)]
    while stack:
        ctx_i, node_i = stack.pop()
        try:
            kind, *out = step(ctx_i.problem, node_i, stats)
        except LPNumericalError as exc:
            failures.append(
                f"layer {ctx_i.depth}: branch {_failure_label(node_i)}: {exc}"
            )
            continue
        if kind == "branch":
            stack.extend((ctx_i, c) for c in reversed(out) if c is not None)
        elif kind == "leaf":
            frame = _child_frame(ctx_i, out[0], layers[ctx_i.depth])
            if frame.depth == len(layers):
                count += 1
                if not options.count_only:
                    out_regions.append(frame.region)
            else:
                nctx = _frame_context(frame, layers[frame.depth], options)
                stack.append((nctx, _frame_root_node(nctx, frame)))
    return out_regions, count, (stats.exams, stats.lp_calls, stats.leaves), failures


def enumerate_network(
    net: Network, box: Box, options: SearchOptions | None = None
) -> Partition:
    """Exact input-space partition of a network, with per-region affine maps.

    Every sign-based layer subdivides in turn; a final identity output layer
    contributes no hyperplanes.  Regions come back canonically sorted with
    the full network's (A, c) attached.
    """
    options = options or SearchOptions()
    t0 = time.perf_counter()
    layers = _sign_layers(net)
    if not layers:
        raise ValueError("network has no sign-based layers to subdivide by")
    workers = max(1, int(options.workers))
    stats = StepStats()
    failures: list[str] = []
    regions: list[Region] = []
    count = 0

    frame0 = root_frame(net, box)
    ctx0 = _frame_context(frame0, layers[0], options)
    start = (ctx0, _frame_root_node(ctx0, frame0))

    def collect(frame: SubdivisionFrame):
        nonlocal count
        count += 1
        if not options.count_only:
            regions.append(frame.region)

    if workers == 1:
        stack = [start]
        while stack:
            ctx_i, node_i = stack.pop()
            try:
                kind, *out = step(ctx_i.problem, node_i, stats)
            except LPNumericalError as exc:
                failures.append(
                    f"layer {ctx_i.depth}: branch {_failure_label(node_i)}: {exc}"
                )
                continue
            if kind == "branch":
                stack.extend((ctx_i, c) for c in reversed(out) if c is not None)
            elif kind == "leaf":
                frame = _child_frame(ctx_i, out[0], layers[ctx_i.depth])
                if frame.depth == len(layers):
                    collect(frame)
                else:
                    nctx = _frame_context(frame, layers[frame.depth], options)
                    stack.append((nctx, _frame_root_node(nctx, frame)))
    else:
        # breadth-first expansion in-process until there is enough work to
        # fan out whole subtrees
        target = workers * 8
        frontier: deque = deque([start])
        while frontier and len(frontier) < target:
            ctx_i, node_i = frontier.popleft()
            try:
                kind, *out = step(ctx_i.problem, node_i, stats)
            except LPNumericalError as exc:
                failures.append(
                    f"layer {ctx_i.depth}: branch {_failure_label(node_i)}: {exc}"
                )
                continue
            if kind == "branch":
                frontier.extend((ctx_i, c) for c in out if c is not None)
            elif kind == "leaf":
                frame = _child_frame(ctx_i, out[0], layers[ctx_i.depth])
                if frame.depth == len(layers):
                    collect(frame)
                else:
                    nctx = _frame_context(frame, layers[frame.depth], options)
                    frontier.append((nctx, _frame_root_node(nctx, frame)))
        if frontier:
            ctx_mp = multiprocessing.get_context()
            with ctx_mp.Pool(
                workers, initializer=_deep_pool_init, initargs=(net, options)
            ) as pool:
                for regs, cnt, st, fails in pool.imap_unordered(
                    _run_deep_subtree, list(frontier)
                ):
                    regions.extend(regs)
                    count += cnt
                    stats.exams += st[0]
                    stats.lp_calls += st[1]
                    stats.leaves += st[2]
                    failures.extend(fails)

    if not options.count_only:
        for r in regions:
            r.affine = region_affine_map(net, r.pattern)
        regions.sort(key=lambda r: r.pattern.key())
    failures.sort()
    enum_stats = EnumerationStats(
        region_count=count,
        lp_calls=stats.lp_calls,
        tree_nodes=stats.exams + stats.leaves,
        wall_time=time.perf_counter() - t0,
        worker_count=workers,
    )
    return Partition(regions=regions, stats=enum_stats, failures=failures)
