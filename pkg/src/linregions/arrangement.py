"""Single-layer region enumeration over a hyperplane arrangement.

``enumerate_layer`` walks the feasible sign patterns of one layer's
hyperplanes depth-first, skipping units whose hyperplane misses the current
region.  ``brute_force_enumerate`` is the 2^K oracle used to verify it, and
``general_position_count`` gives the closed-form chamber counts that hold
almost surely for continuous random weights.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from collections import deque
from dataclasses import dataclass, field
from io import StringIO
from math import comb

import numpy as np

from .lp import (
    EPS_CAP,
    TAU_INTERIOR,
    Box,
    HalfspaceSystem,
    LPNumericalError,
    cut_margin_lp,
    margin_lp,
)
from .network import DeepSignPattern, SignPattern
from .search import (
    _VERT_MAX_DIM as VERT_MAX_DIM,
    LayerProblem,
    Node,
    SearchLimits,
    StepStats,
    root_node,
    run_dfs,
    step,
)

BRUTE_FORCE_MAX_UNITS = 20


@dataclass
class SearchOptions:
    """Knobs shared by every enumeration entry point.

    ``workers=1`` runs in-process; higher counts fan subtrees out to a
    process pool (output is canonical either way).  ``count_only`` drops the
    region list and keeps statistics, for large counting experiments.
    """

    tau_interior: float = TAU_INTERIOR
    eps_cap: float = EPS_CAP
    workers: int = 1
    count_only: bool = False

    def limits(self) -> SearchLimits:
        return SearchLimits(tau_interior=self.tau_interior, eps_cap=self.eps_cap)


@dataclass
class EnumerationStats:
    """Search telemetry.

    ``tree_nodes`` counts unit examinations plus leaf checks (the
    recursive-call count of the sign-pattern search); ``lp_calls`` counts
    actual simplex solves, which certificate shortcuts keep well below the
    examination count.
    """

    region_count: int = 0
    lp_calls: int = 0
    tree_nodes: int = 0
    wall_time: float = 0.0
    worker_count: int = 1


@dataclass
class Region:
    """One cell of the partition: its identity, geometry, and affine map.

    ``constraints`` holds the box rows followed by the non-redundant
    hyperplane rows in the order the search added them; ``sources`` gives
    each row's provenance as (layer, unit), with layer -1 for box rows.
    """

    pattern: DeepSignPattern
    constraints: HalfspaceSystem
    interior: np.ndarray
    margin: float
    affine: tuple[np.ndarray, np.ndarray] | None = None
    sources: np.ndarray | None = None


@dataclass
class Partition:
    """Enumerated regions in canonical (lexicographic pattern) order."""

    regions: list[Region]
    stats: EnumerationStats
    failures: list[str] = field(default_factory=list)

    def pattern_keys(self) -> list[str]:
        return [r.pattern.key() for r in self.regions]

    def pattern_set(self) -> set[str]:
        return set(self.pattern_keys())

    def to_json(self) -> str:
        """Canonical JSON document; only schedule-independent stats fields."""
        obj = {
            "regions": [
                {
                    "pattern": r.pattern.key(),
                    "redundant": r.pattern.redundant_key(),
                    "interior": [float(v) for v in r.interior],
                    "margin": float(r.margin),
                }
                for r in self.regions
            ],
            "stats": {
                "region_count": self.stats.region_count,
                "lp_calls": self.stats.lp_calls,
                "tree_nodes": self.stats.tree_nodes,
            },
        }
        if self.failures:
            obj["failures"] = list(self.failures)
        return json.dumps(obj, indent=1)

    def to_csv(self) -> str:
        out = StringIO()
        dim = self.regions[0].interior.shape[0] if self.regions else 0
        cols = ["pattern", "redundant", "margin"] + [f"x{i}" for i in range(dim)]
        out.write(",".join(cols) + "\n")
        for r in self.regions:
            cells = [r.pattern.key(), r.pattern.redundant_key(), repr(float(r.margin))]
            cells += [repr(float(v)) for v in r.interior]
            out.write(",".join(cells) + "\n")
        return out.getvalue()


def general_position_count(K: int, D: int, central: bool = False) -> int:
    """Region count of K hyperplanes in general position in D dimensions.

    Affine arrangements: sum_{i<=D} C(K, i).  Central ones (all biases
    zero): 2 * sum_{i<=D-1} C(K-1, i), needing K >= 1.
    """
    if K < 0 or D < 1:
        raise ValueError("need K >= 0 and D >= 1")
    if central:
        if K < 1:
            raise ValueError("central arrangements need K >= 1")
        return 2 * sum(comb(K - 1, i) for i in range(D))
    return sum(comb(K, i) for i in range(min(K, D) + 1))


# ---------------------------------------------------------------------------
# Region assembly from finished search leaves
# ---------------------------------------------------------------------------


def _leaf_region(
    problem: LayerProblem,
    signs: np.ndarray,
    redundant: np.ndarray,
    interior: np.ndarray,
    margin: float,
    base_sources: np.ndarray,
    layer_index: int,
    prefix=(),
) -> Region:
    pattern = DeepSignPattern(
        tuple(prefix) + (SignPattern(signs.copy(), redundant.copy()),)
    )
    act = np.flatnonzero(~redundant).astype(np.int32)
    sgn = signs[act].astype(np.float64)
    rows_A = np.vstack([problem.base_A, problem.hyp_A[act] * sgn[:, None]])
    rows_b = np.concatenate([problem.base_b, problem.hyp_b[act] * sgn])
    unit_src = np.stack(
        [np.full(act.shape[0], layer_index, dtype=np.int32), act], axis=1
    ) if act.size else np.zeros((0, 2), dtype=np.int32)
    sources = np.vstack([base_sources, unit_src])
    constraints = HalfspaceSystem(rows_A, rows_b) if rows_A.shape[0] else HalfspaceSystem(
        np.zeros((0, problem.D)), np.zeros(0)
    )
    return Region(
        pattern=pattern,
        constraints=constraints,
        interior=interior,
        margin=float(margin),
        sources=sources,
    )


def _failure_label(node: Node) -> str:
    tags = {1: "+", -1: "-", 0: "?"}
    return "".join(tags[int(s)] for s in node.signs)


# ---------------------------------------------------------------------------
# Parallel driver: BFS the first few branch points in-process, then hand
# whole subtrees to pool workers.  Every node is processed by the same pure
# step function, so the result set and all deterministic statistics are
# schedule independent.
# ---------------------------------------------------------------------------

_WORKER_PROBLEM: LayerProblem | None = None


def _pool_init(problem: LayerProblem):
    global _WORKER_PROBLEM
    _WORKER_PROBLEM = problem


def _pack_leaves(leaves: list[Node], count_only: bool):
    if count_only or not leaves:
        return None
    return (
        np.stack([n.signs for n in leaves]),
        np.stack([n.redundant for n in leaves]),
        np.stack([n.interior for n in leaves]),
        np.array([n.islack for n in leaves]),
    )


def _run_subtree(node: Node):
    problem = _WORKER_PROBLEM
    stats = StepStats()
    leaves: list[Node] = []
    failures: list[str] = []
    run_dfs(
        problem,
        node,
        stats,
        leaves.append,
        lambda n, exc: failures.append(f"branch {_failure_label(n)}: {exc}"),
    )
    return _pack_leaves(leaves, False), (stats.exams, stats.lp_calls, stats.leaves), failures


def _run_subtree_counts(node: Node):
    problem = _WORKER_PROBLEM
    stats = StepStats()
    count = [0]
    failures: list[str] = []
    run_dfs(
        problem,
        node,
        stats,
        lambda n: count.__setitem__(0, count[0] + 1),
        lambda n, exc: failures.append(f"branch {_failure_label(n)}: {exc}"),
    )
    return count[0], (stats.exams, stats.lp_calls, stats.leaves), failures


def _search_problem(problem: LayerProblem, root: Node, options: SearchOptions):
    """Run one layer search to completion, possibly on a worker pool.

    Returns (leaf list or None, leaf_count, stats, failures); the leaf list
    is None in count_only mode.
    """
    stats = StepStats()
    failures: list[str] = []
    leaves: list[Node] = []
    count = 0
    workers = max(1, int(options.workers))

    if workers == 1:
        if options.count_only:
            def on_leaf(n):
                nonlocal count
                count += 1
        else:
            on_leaf = leaves.append
        run_dfs(
            problem,
            root,
            stats,
            on_leaf,
            lambda n, exc: failures.append(f"branch {_failure_label(n)}: {exc}"),
        )
        if not options.count_only:
            count = len(leaves)
        return (None if options.count_only else leaves), count, stats, failures

    # expand breadth-first until there is enough independent work
    target = workers * 8
    frontier: deque[Node] = deque([root])
    while frontier and len(frontier) < target:
        node = frontier.popleft()
        try:
            kind, *out = step(problem, node, stats)
        except LPNumericalError as exc:
            failures.append(f"branch {_failure_label(node)}: {exc}")
            continue
        if kind == "branch":
            for child in out:
                if child is not None:
                    frontier.append(child)
        elif kind == "leaf":
            leaves.append(out[0])
    count = len(leaves)

    if frontier:
        ctx = multiprocessing.get_context()
        fn = _run_subtree_counts if options.count_only else _run_subtree
        with ctx.Pool(workers, initializer=_pool_init, initargs=(problem,)) as pool:
            for packed, st, fails in pool.imap_unordered(fn, list(frontier)):
                stats.exams += st[0]
                stats.lp_calls += st[1]
                stats.leaves += st[2]
                failures.extend(fails)
                if options.count_only:
                    count += packed
                else:
                    if packed is not None:
                        s, r, x, m = packed
                        for i in range(s.shape[0]):
                            leaves.append(
                                Node(
                                    k=problem.K,
                                    signs=s[i],
                                    redundant=r[i],
                                    act_idx=np.zeros(0, np.int32),
                                    act_sgn=np.zeros(0, np.int8),
                                    interior=x[i],
                                    islack=float(m[i]),
                                    lo=root.lo,
                                    hi=root.hi,
                                    pts=np.zeros((0, problem.D)),
                                    pts_slack=np.zeros(0),
                                )
                            )
                        count += s.shape[0]
    failures.sort()
    return (None if options.count_only else leaves), count, stats, failures


def _box_sources(box: Box) -> np.ndarray:
    n = 0 if box.half_width is None else 2 * box.dim
    src = np.full((n, 2), -1, dtype=np.int32)
    src[:, 1] = np.arange(n, dtype=np.int32)
    return src


def _box_corner_vertices(D: int, hw: float) -> tuple[np.ndarray, np.ndarray]:
    """All 2^D corners of the box with their defining face-row ids.

    Box rows come in pairs per dimension: row 2d is the lower face (tight at
    x_d = -hw), row 2d+1 the upper face (tight at x_d = +hw).
    """
    n = 2**D
    verts = np.empty((n, D))
    vrows = np.empty((n, D), dtype=np.int32)
    for i in range(n):
        for d in range(D):
            if (i >> d) & 1:
                verts[i, d] = hw
                vrows[i, d] = 2 * d + 1
            else:
                verts[i, d] = -hw
                vrows[i, d] = 2 * d
    return verts, vrows


def _root_for_box(problem: LayerProblem, box: Box) -> Node:
    if box.bounded:
        hw = float(box.half_width)
        lo = np.full(problem.D, -hw)
        hi = np.full(problem.D, hw)
        islack = hw
    else:
        lo = np.full(problem.D, -np.inf)
        hi = np.full(problem.D, np.inf)
        islack = np.inf
    root = root_node(problem, np.zeros(problem.D), islack, lo, hi)
    if box.bounded and problem.D <= VERT_MAX_DIM:
        root.verts, root.vrows = _box_corner_vertices(problem.D, float(box.half_width))
    return root


def enumerate_layer(W, b, box: Box, options: SearchOptions | None = None) -> Partition:
    """Exact sign-pattern enumeration of one layer's arrangement in a box.

    Returns every pattern q in {-1,+1}^K whose region has interior margin
    above ``tau_interior``, each with its constraint system, a deep interior
    point, and that point's certified margin.
    """
    options = options or SearchOptions()
    t0 = time.perf_counter()
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if W.ndim != 2 or W.shape[0] != b.shape[0]:
        raise ValueError(f"weight/bias shapes do not agree: {W.shape} vs {b.shape}")
    norms = np.linalg.norm(W, axis=1)
    if W.shape[0] and norms.min() < 1e-12:
        raise ValueError(f"zero weight row at unit {int(np.argmin(norms))}")
    if W.shape[1] != box.dim:
        raise ValueError(f"dimension mismatch: weights are {W.shape[1]}-d, box is {box.dim}-d")

    base_A, base_b = box.rows()
    problem = LayerProblem(W, b, base_A, base_b, options.limits(), n_box=base_A.shape[0])
    root = _root_for_box(problem, box)
    leaves, count, stats, failures = _search_problem(problem, root, options)

    regions: list[Region] = []
    if leaves is not None:
        src = _box_sources(box)
        regions = [
            _leaf_region(problem, n.signs, n.redundant, n.interior, n.islack, src, 0)
            for n in leaves
        ]
        regions.sort(key=lambda r: r.pattern.key())
    enum_stats = EnumerationStats(
        region_count=count,
        lp_calls=stats.lp_calls,
        tree_nodes=stats.exams + stats.leaves,
        wall_time=time.perf_counter() - t0,
        worker_count=max(1, int(options.workers)),
    )
    return Partition(regions=regions, stats=enum_stats, failures=failures)


def brute_force_enumerate(W, b, box: Box, options: SearchOptions | None = None) -> Partition:
    """Test-oracle enumeration: check all 2^K sign patterns one by one.

    Guarded to K <= 20.  Produces the same Partition contract as
    :func:`enumerate_layer`; redundancy flags here mark units whose
    hyperplane is not a facet of the final region.
    """
    options = options or SearchOptions()
    t0 = time.perf_counter()
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    K = W.shape[0]
    if K > BRUTE_FORCE_MAX_UNITS:
        raise ValueError(f"brute force is guarded to K <= {BRUTE_FORCE_MAX_UNITS}, got {K}")
    norms = np.linalg.norm(W, axis=1)
    if K and norms.min() < 1e-12:
        raise ValueError(f"zero weight row at unit {int(np.argmin(norms))}")
    if W.shape[1] != box.dim:
        raise ValueError(f"dimension mismatch: weights are {W.shape[1]}-d, box is {box.dim}-d")

    Wn = W / norms[:, None]
    bn = b / norms
    box_A, box_b = box.rows()
    tau = options.tau_interior
    lp_calls = 0
    regions: list[Region] = []
    box_src = _box_sources(box)

    for code in range(2**K):
        q = np.array([1 if (code >> i) & 1 == 0 else -1 for i in range(K)], dtype=np.int8)
        A = np.vstack([box_A, Wn * q[:, None].astype(np.float64)])
        bb = np.concatenate([box_b, bn * q.astype(np.float64)])
        lp_calls += 1
        margin, x = margin_lp(A, bb, options.eps_cap)
        if margin <= tau:
            continue
        # classify facets: unit k is redundant iff its hyperplane misses the region
        redundant = np.zeros(K, dtype=bool)
        for k in range(K):
            others = np.concatenate([np.arange(k), np.arange(k + 1, K)])
            A_o = np.vstack([box_A, Wn[others] * q[others, None].astype(np.float64)])
            b_o = np.concatenate([box_b, bn[others] * q[others].astype(np.float64)])
            lp_calls += 1
            eps, _ = cut_margin_lp(A_o, b_o, Wn[k], float(bn[k]), options.eps_cap)
            redundant[k] = not (eps is not None and eps > tau)
        act = np.flatnonzero(~redundant)
        rows_A = np.vstack([box_A, Wn[act] * q[act, None].astype(np.float64)])
        rows_b = np.concatenate([box_b, bn[act] * q[act].astype(np.float64)])
        lp_calls += 1
        margin2, x2 = margin_lp(rows_A, rows_b, options.eps_cap)
        unit_src = (
            np.stack([np.zeros(act.shape[0], dtype=np.int32), act.astype(np.int32)], axis=1)
            if act.size
            else np.zeros((0, 2), dtype=np.int32)
        )
        regions.append(
            Region(
                pattern=DeepSignPattern((SignPattern(q, redundant),)),
                constraints=HalfspaceSystem(rows_A, rows_b),
                interior=x2,
                margin=float(margin2),
                sources=np.vstack([box_src, unit_src]),
            )
        )

    regions.sort(key=lambda r: r.pattern.key())
    stats = EnumerationStats(
        region_count=len(regions),
        lp_calls=lp_calls,
        tree_nodes=2**K,
        wall_time=time.perf_counter() - t0,
        worker_count=1,
    )
    return Partition(regions=regions, stats=stats, failures=[])
