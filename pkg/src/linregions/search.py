"""Depth-first sign-pattern search over one layer's hyperplanes.

The exported pieces are a problem description (the layer's normalized
hyperplane rows plus the inherited constraint rows of the region being
subdivided), a node state, and a ``step`` function that advances a node to
its next branch point or leaf.  Drivers (single-layer enumeration,
multilayer subdivision) own the traversal stack and decide what a leaf
means.

Units are examined in natural order and the +1 side is explored before the
-1 side, so the search tree - and therefore every numeric result - is a
pure function of the inputs, independent of scheduling.

Each unit examination is decided by the cheapest sound test available:

* a hyperplane passing within the node's inscribed ball certifies a cut;
* two cached region points strictly on opposite sides certify a cut (their
  connecting segment crosses the hyperplane inside the region);
* an outer bounding box strictly on one side certifies a no-cut;
* otherwise one LP settles it.

Only the LP fallback and the per-leaf interior LP count toward
``lp_calls``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .lp import LPNumericalError, cut_margin_lp, margin_lp, solve_lp

_ZERO_ROW_NORM = 1e-12

# cached interior points kept per node; more points catch more cuts but cost
# O(points) per examination
_MAX_POINTS = 12

_AABB_GUARD = 1e-9

# vertex tracking: sign margin for decisions at vertices, feasibility slack
# for newly built vertices, and hard caps that degrade a subtree to the
# LP path instead of risking an incomplete vertex set.  The sign band is
# generous because vertex coordinates carry O(cond * eps) solve error;
# anything inside the band goes to the LP instead of being guessed.
_VERT_EPS = 1e-5
_VERT_FEAS = 1e-6
_MAX_VERTS = 4096
_VERT_MAX_DIM = 8

# temporary tuning hook: when set to a list, every exam appends
# (decided_by, outcome, d_over_islack, mid_margin_over_rad)
DEBUG_EXAMS = None


@dataclass(frozen=True)
class SearchLimits:
    """Thresholds for the search.

    ``eps_cap`` caps published margins (the interior-LP contract);
    ``internal_cap`` is the much larger cap used for the search's own
    geometry so that interior slacks keep their true scale.  The refresh_*
    knobs control when a node spends 2D+1 support LPs to tighten its outer
    bounding box and recenter its interior point, unlocking certificate
    shortcuts for the whole subtree.
    """

    tau_interior: float = 1e-7
    eps_cap: float = 1.0
    internal_cap: float = 1e6
    # recenter/rebox triggers: at most refresh_budget times per lineage,
    # when at least refresh_undecided pending units are unresolved by the
    # free tests while the interior slack is below refresh_islack_gate
    refresh_budget: int = 3
    refresh_undecided: int = 8
    refresh_islack_gate: float = 2.0
    fbbt_passes: int = 1


class LayerProblem:
    """One layer's hyperplane rows restricted to a fixed base region.

    ``hyp_A``/``hyp_b`` hold unit-normalized hyperplane rows; rows whose raw
    normal was (numerically) zero are flagged in ``hyp_zero`` and keep only
    the sign of their raw offset in ``hyp_b``.  ``base_A``/``base_b`` are the
    region rows every node of this search inherits (box rows, and for deeper
    layers the rows accumulated by earlier layers).
    """

    __slots__ = (
        "hyp_A",
        "hyp_b",
        "hyp_zero",
        "base_A",
        "base_b",
        "n_box",
        "limits",
        "K",
        "D",
        "row_A",
        "row_b",
    )

    def __init__(self, raw_W, raw_b, base_A, base_b, limits: SearchLimits, n_box: int = 0):
        raw_W = np.ascontiguousarray(raw_W, dtype=np.float64)
        raw_b = np.ascontiguousarray(raw_b, dtype=np.float64).ravel()
        K, D = raw_W.shape
        norms = np.linalg.norm(raw_W, axis=1)
        zero = norms < _ZERO_ROW_NORM
        safe = np.where(zero, 1.0, norms)
        self.hyp_A = raw_W / safe[:, None]
        self.hyp_b = raw_b / safe
        self.hyp_A[zero] = 0.0
        self.hyp_b[zero] = raw_b[zero]
        self.hyp_zero = zero
        self.base_A = np.ascontiguousarray(base_A, dtype=np.float64).reshape(-1, D)
        self.base_b = np.ascontiguousarray(base_b, dtype=np.float64).ravel()
        # leading box rows of the base; excluded from dual certificates,
        # where the node's outer box covers the same ground more cheaply
        self.n_box = n_box
        self.limits = limits
        self.K = K
        self.D = D
        # global row table for vertex bookkeeping: base rows get ids
        # 0..B-1, unit k's (unsigned) hyperplane gets id B+k
        self.row_A = np.vstack([self.base_A, self.hyp_A])
        self.row_b = np.concatenate([self.base_b, self.hyp_b])

    @property
    def n_base(self) -> int:
        return self.base_A.shape[0]


@dataclass
class Node:
    """Search state: units < k are resolved, rows in act_* were added.

    ``interior`` is a strictly interior point of the node's region with
    verified slack ``islack``; ``lo``/``hi`` is a valid outer bounding box
    (infinite when the domain is unbounded); ``pts`` are additional interior
    points with per-point slack lower bounds in ``pts_slack``.
    """

    k: int
    signs: np.ndarray
    redundant: np.ndarray
    act_idx: np.ndarray
    act_sgn: np.ndarray
    interior: np.ndarray
    islack: float
    lo: np.ndarray
    hi: np.ndarray
    pts: np.ndarray
    pts_slack: np.ndarray
    refreshes: int = 0
    # complete vertex set of the region with each vertex's D defining row
    # ids (sorted); None once tracking has been dropped for the subtree
    verts: np.ndarray | None = None
    vrows: np.ndarray | None = None


@dataclass
class StepStats:
    exams: int = 0
    lp_calls: int = 0
    leaves: int = 0
    # breakdown of lp_calls, for tuning the certificate fast paths
    lp_exam: int = 0
    lp_leaf: int = 0
    lp_rescue: int = 0
    lp_refresh: int = 0

    def add(self, other: "StepStats"):
        self.exams += other.exams
        self.lp_calls += other.lp_calls
        self.leaves += other.leaves
        self.lp_exam += other.lp_exam
        self.lp_leaf += other.lp_leaf
        self.lp_rescue += other.lp_rescue
        self.lp_refresh += other.lp_refresh


def root_node(problem: LayerProblem, interior, islack, lo, hi, pts=None, pts_slack=None) -> Node:
    K, D = problem.K, problem.D
    if pts is None:
        pts = np.zeros((0, D))
        pts_slack = np.zeros(0)
    return Node(
        k=0,
        signs=np.zeros(K, dtype=np.int8),
        redundant=np.zeros(K, dtype=bool),
        act_idx=np.zeros(0, dtype=np.int32),
        act_sgn=np.zeros(0, dtype=np.int8),
        interior=np.asarray(interior, dtype=np.float64),
        islack=float(islack),
        lo=np.asarray(lo, dtype=np.float64),
        hi=np.asarray(hi, dtype=np.float64),
        pts=pts,
        pts_slack=pts_slack,
    )


def active_rows(problem: LayerProblem, node: Node) -> tuple[np.ndarray, np.ndarray]:
    """Constraint rows of the node's region: base rows then added rows."""
    if node.act_idx.size == 0:
        return problem.base_A, problem.base_b
    sgn = node.act_sgn.astype(np.float64)
    A = np.vstack([problem.base_A, problem.hyp_A[node.act_idx] * sgn[:, None]])
    b = np.concatenate([problem.base_b, problem.hyp_b[node.act_idx] * sgn])
    return A, b


@njit(cache=True)
def _solve_square(M, rhs, z):
    """Gauss elimination with partial pivoting; returns False when singular."""
    D = M.shape[0]
    for col in range(D):
        piv = col
        best = abs(M[col, col])
        for r in range(col + 1, D):
            v = abs(M[r, col])
            if v > best:
                best = v
                piv = r
        if best < 1e-11:
            return False
        if piv != col:
            for cc in range(D):
                tmp = M[col, cc]
                M[col, cc] = M[piv, cc]
                M[piv, cc] = tmp
            tmp = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = tmp
        inv = 1.0 / M[col, col]
        for r in range(col + 1, D):
            f = M[r, col] * inv
            if f != 0.0:
                for cc in range(col, D):
                    M[r, cc] -= f * M[col, cc]
                rhs[r] -= f * rhs[col]
    for col in range(D - 1, -1, -1):
        acc = rhs[col]
        for cc in range(col + 1, D):
            acc -= M[col, cc] * z[cc]
        z[col] = acc / M[col, col]
    return True


@njit(cache=True)
def _clip_verts(verts, vrows, hv, side, row_A, row_b, new_id, child_A, child_b):
    """Vertex set of (region with vertex set `verts`) cut to one side of a row.

    Kept vertices are those strictly on `side`; new vertices arise where
    edges cross the hyperplane, recognized in a simple polytope as vertex
    pairs sharing D-1 defining rows, and solved exactly from those rows plus
    the new one.  Returns (verts, vrows, ok); ok=False flags degeneracy or
    overflow, telling the caller to drop vertex tracking for the subtree.
    """
    V, D = verts.shape
    empty_v = np.empty((0, D))
    empty_r = np.empty((0, D), np.int32)
    nkeep = 0
    nopp = 0
    for i in range(V):
        sh = side * hv[i]
        if -_VERT_EPS < sh < _VERT_EPS:
            return empty_v, empty_r, False
        if sh > 0.0:
            nkeep += 1
        else:
            nopp += 1
    keep_idx = np.empty(nkeep, np.int64)
    opp_idx = np.empty(nopp, np.int64)
    a = 0
    o = 0
    for i in range(V):
        if side * hv[i] > 0.0:
            keep_idx[a] = i
            a += 1
        else:
            opp_idx[o] = i
            o += 1
    cap = nkeep + nkeep * nopp
    if cap > 4 * _MAX_VERTS:
        cap = 4 * _MAX_VERTS
    out_v = np.empty((cap, D))
    out_r = np.empty((cap, D), np.int32)
    for t in range(nkeep):
        i = keep_idx[t]
        for d in range(D):
            out_v[t, d] = verts[i, d]
            out_r[t, d] = vrows[i, d]
    cnt = nkeep
    M = np.empty((D, D))
    rhs = np.empty(D)
    z = np.empty(D)
    shared = np.empty(D, np.int32)
    for t in range(nkeep):
        u = keep_idx[t]
        for s in range(nopp):
            v = opp_idx[s]
            cu = 0
            cv = 0
            nsh = 0
            while cu < D and cv < D:
                ru = vrows[u, cu]
                rv = vrows[v, cv]
                if ru == rv:
                    shared[nsh] = ru
                    nsh += 1
                    cu += 1
                    cv += 1
                elif ru < rv:
                    cu += 1
                else:
                    cv += 1
            if nsh != D - 1:
                continue
            for q in range(D - 1):
                rid = shared[q]
                for d in range(D):
                    M[q, d] = row_A[rid, d]
                rhs[q] = -row_b[rid]
            for d in range(D):
                M[D - 1, d] = row_A[new_id, d]
            rhs[D - 1] = -row_b[new_id]
            M0 = M.copy()
            rhs0 = rhs.copy()
            if not _solve_square(M, rhs, z):
                return empty_v, empty_r, False
            # one step of iterative refinement
            for q in range(D):
                acc = rhs0[q]
                for d in range(D):
                    acc -= M0[q, d] * z[d]
                rhs[q] = acc
            M[:, :] = M0
            dz = np.empty(D)
            if _solve_square(M, rhs, dz):
                for d in range(D):
                    z[d] += dz[d]
            feas = True
            for rr in range(child_A.shape[0]):
                sl = child_b[rr]
                for d in range(D):
                    sl += child_A[rr, d] * z[d]
                if sl < -_VERT_FEAS:
                    feas = False
                    break
            if not feas:
                return empty_v, empty_r, False
            if cnt >= cap:
                return empty_v, empty_r, False
            for d in range(D):
                out_v[cnt, d] = z[d]
            pos = 0
            inserted = False
            for q in range(D - 1):
                if not inserted and new_id < shared[q]:
                    out_r[cnt, pos] = new_id
                    pos += 1
                    inserted = True
                out_r[cnt, pos] = shared[q]
                pos += 1
            if not inserted:
                out_r[cnt, pos] = new_id
            cnt += 1
    if cnt > _MAX_VERTS or cnt < D + 1:
        # a full-dimensional region needs at least D+1 vertices
        return empty_v, empty_r, False
    return out_v[:cnt].copy(), out_r[:cnt].copy(), True


@njit(cache=True)
def _side_bound(w, c, A, b, lo, hi, sweeps):
    """Certified lower bound on min(w.x + c) over {A x + b >= 0} within [lo, hi].

    Weak duality: for any lam >= 0, with residual r = w - A^T lam,
        min (w.x + c) >= c - lam.b + sum_d min(r_d lo_d, r_d hi_d).
    The right side is concave piecewise-linear in each lam_i, so coordinate
    ascent with an exact per-coordinate breakpoint scan maximizes it; the
    bound is sound at any point of the ascent.
    """
    M, D = A.shape
    lam = np.zeros(M)
    r = w.copy()
    ts = np.empty(D)
    for _ in range(sweeps):
        improved = False
        for i in range(M):
            # maximize g(t) = -(lam_i + t) b_i + sum_d f_d(r_d - t A_id)
            # over t >= -lam_i, where f_d(v) = v lo_d if v > 0 else v hi_d.
            # slope is non-increasing; walk breakpoints until it goes <= 0.
            nb = 0
            for j in range(D):
                aij = A[i, j]
                if aij != 0.0:
                    t = r[j] / aij
                    if t > -lam[i]:
                        ts[nb] = t
                        nb += 1
            # insertion sort (D is tiny)
            for p in range(1, nb):
                key = ts[p]
                q = p - 1
                while q >= 0 and ts[q] > key:
                    ts[q + 1] = ts[q]
                    q -= 1
                ts[q + 1] = key
            t_cur = -lam[i]
            t_opt = t_cur
            # slope just above t_cur
            slope = -b[i]
            for j in range(D):
                aij = A[i, j]
                if aij == 0.0:
                    continue
                v = r[j] - t_cur * aij
                going_pos = v > 0.0 or (v == 0.0 and aij < 0.0)
                slope -= aij * (lo[j] if going_pos else hi[j])
            if slope <= 0.0:
                if lam[i] > 0.0:
                    # concave with non-positive slope at the left end: the
                    # best move is back to lam_i = 0
                    t0 = -lam[i]
                    lam[i] = 0.0
                    for j in range(D):
                        r[j] -= t0 * A[i, j]
                    improved = True
                continue
            done = False
            for p in range(nb):
                tbp = ts[p]
                # recompute slope just above tbp
                s2 = -b[i]
                for j in range(D):
                    aij = A[i, j]
                    if aij == 0.0:
                        continue
                    v = r[j] - tbp * aij
                    going_pos = v > 0.0 or (v == 0.0 and aij < 0.0)
                    s2 -= aij * (lo[j] if going_pos else hi[j])
                if s2 <= 0.0:
                    t_opt = tbp
                    done = True
                    break
            if not done:
                # slope stays positive past the last breakpoint: can only
                # happen when the box is unbounded in a relevant direction
                continue
            if t_opt != 0.0 and np.isfinite(t_opt):
                lam[i] += t_opt
                if lam[i] < 0.0:
                    lam[i] = 0.0
                for j in range(D):
                    r[j] -= t_opt * A[i, j]
                improved = True
        if not improved:
            break
    bound = c
    for i in range(M):
        bound -= lam[i] * b[i]
    for j in range(D):
        rj = r[j]
        if rj > 0.0:
            bound += rj * lo[j]
        elif rj < 0.0:
            bound += rj * hi[j]
    return bound


@njit(cache=True)
def _box_tighten(lo, hi, A, b, passes):
    """Interval propagation of rows A x + b >= 0 onto the box, in place.

    Each pass takes the axis box hull of (box intersect one halfspace) per
    row; guards keep the result a valid outer box under roundoff.
    """
    M, D = A.shape
    for _ in range(passes):
        for i in range(M):
            s = 0.0
            for j in range(D):
                aj = A[i, j]
                if aj > 0.0:
                    s += aj * hi[j]
                elif aj < 0.0:
                    s += aj * lo[j]
            if not np.isfinite(s):
                continue
            t = -b[i]
            for j in range(D):
                aj = A[i, j]
                if aj == 0.0:
                    continue
                contrib = aj * hi[j] if aj > 0.0 else aj * lo[j]
                bound = (t - (s - contrib)) / aj
                g = 1e-9 * (1.0 + abs(bound))
                if aj > 0.0:
                    nb = bound - g
                    if nb > lo[j]:
                        lo[j] = nb
                else:
                    nb = bound + g
                    if nb < hi[j]:
                        hi[j] = nb
    for j in range(D):
        if hi[j] < lo[j]:
            hi[j] = lo[j]


def _filter_points(node: Node, w, c, side: int, new_pt, new_slack, tau: float):
    """Points of the child region on the given side of the new row."""
    if node.pts.shape[0]:
        h = node.pts @ w + c
        keep = (side * h) >= tau
        pts = node.pts[keep]
        slack = np.minimum(node.pts_slack[keep], side * h[keep])
    else:
        pts = node.pts
        slack = node.pts_slack
    pts = np.vstack([pts, new_pt[None, :]])
    slack = np.append(slack, new_slack)
    if pts.shape[0] > _MAX_POINTS:
        order = np.argsort(-slack, kind="stable")[:_MAX_POINTS]
        order.sort()
        pts = pts[order]
        slack = slack[order]
    return pts, slack


def _make_child(problem: LayerProblem, node: Node, j: int, side: int, x_on, slack_on, stats, hv_j=None):
    """Child region on one side of unit j's hyperplane, split at x_on.

    ``hv_j`` holds the parent vertices' pre-activation values for unit j
    when vertex tracking is live.
    """
    w = problem.hyp_A[j]
    c = problem.hyp_b[j]
    if not np.isfinite(slack_on):
        # splitting all of R^D: any finite push off the hyperplane works
        slack_on = max(1.0, problem.limits.eps_cap)
    delta = 0.5 * slack_on
    interior = x_on + (side * delta) * w
    signs = node.signs.copy()
    signs[j] = side
    redundant = node.redundant.copy()
    act_idx = np.append(node.act_idx, np.int32(j))
    act_sgn = np.append(node.act_sgn, np.int8(side))
    child = Node(
        k=j + 1,
        signs=signs,
        redundant=redundant,
        act_idx=act_idx,
        act_sgn=act_sgn,
        interior=interior,
        islack=delta,
        lo=node.lo,
        hi=node.hi,
        pts=node.pts,
        pts_slack=node.pts_slack,
        refreshes=node.refreshes,
    )
    # verify the derived interior honestly; rescue with an LP if float noise
    # ate the slack
    A, b = active_rows(problem, child)
    exact = float((A @ interior + b).min()) if A.shape[0] else np.inf
    if exact <= problem.limits.tau_interior / 8:
        stats.lp_calls += 1
        stats.lp_rescue += 1
        margin, x = margin_lp(A, b, problem.limits.internal_cap)
        if margin <= problem.limits.tau_interior:
            return None
        child.interior = x
        child.islack = margin
    else:
        child.islack = exact if np.isfinite(exact) else delta
    if node.verts is not None and hv_j is not None:
        cv, cr, ok = _clip_verts(
            node.verts, node.vrows, hv_j, side,
            problem.row_A, problem.row_b, problem.n_base + j, A, b,
        )
        if ok and cv.shape[0]:
            child.verts = cv
            child.vrows = cr
            guard = _AABB_GUARD * (1.0 + float(np.abs(cv).max()))
            child.lo = cv.min(axis=0) - guard
            child.hi = cv.max(axis=0) + guard
    if child.verts is None:
        lo = node.lo.copy()
        hi = node.hi.copy()
        _box_tighten(lo, hi, A, b, problem.limits.fbbt_passes)
        child.lo = lo
        child.hi = hi
    child.pts, child.pts_slack = _filter_points(
        node, w, c, side, child.interior, child.islack, problem.limits.tau_interior
    )
    return child


def _refresh(problem: LayerProblem, node: Node, stats: StepStats) -> None:
    """Exact outer box via 2D support LPs, plus a Chebyshev recenter.

    The support optima are region vertices; pulled part-way toward the
    center they become well-spread interior points that power the
    point-ball and segment cut certificates for the whole subtree.
    """
    lim = problem.limits
    node.refreshes += 1
    A, b = active_rows(problem, node)
    G = -A
    lo = node.lo.copy()
    hi = node.hi.copy()
    verts = []
    try:
        for i in range(problem.D):
            c = np.zeros(problem.D)
            c[i] = 1.0
            stats.lp_calls += 2
            stats.lp_refresh += 2
            status, z, low = solve_lp(c, G, b)
            if status == "optimal":
                lo[i] = max(lo[i], low - _AABB_GUARD * (1.0 + abs(low)))
                verts.append(z)
            status, z, negh = solve_lp(-c, G, b)
            if status == "optimal":
                high = -negh
                hi[i] = min(hi[i], high + _AABB_GUARD * (1.0 + abs(high)))
                verts.append(z)
        stats.lp_calls += 1
        stats.lp_refresh += 1
        margin, x = margin_lp(A, b, lim.internal_cap)
        if margin > node.islack:
            node.interior = x
            node.islack = margin
    except LPNumericalError:
        return
    np.maximum(hi, lo, out=hi)
    node.lo = lo
    node.hi = hi
    if verts:
        vs = np.asarray(verts)
        vs += 0.3 * (node.interior[None, :] - vs)
        vslack = (vs @ A.T + b).min(axis=1)
        good = vslack >= problem.limits.tau_interior / 2
        if good.any():
            pts = np.vstack([node.pts, vs[good]])
            slack = np.concatenate([node.pts_slack, vslack[good]])
            if pts.shape[0] > _MAX_POINTS:
                order = np.argsort(-slack, kind="stable")[:_MAX_POINTS]
                order.sort()
                pts = pts[order]
                slack = slack[order]
            node.pts = pts
            node.pts_slack = slack


def step(problem: LayerProblem, node: Node, stats: StepStats):
    """Advance a node to its next branch or to a leaf.

    Returns ``("branch", plus_child, minus_child)``, ``("leaf", node)`` with
    the node's interior/islack replaced by the final margin LP's witness and
    margin, or ``("pruned", None)`` when the leaf margin falls below the
    interior threshold.
    """
    tau = problem.limits.tau_interior
    K = problem.K
    k = node.k
    if k < K:
        finite_box = bool(np.isfinite(node.lo).all() and np.isfinite(node.hi).all())
        pending = np.arange(k, K)
        hypA = problem.hyp_A[pending]
        hypb = problem.hyp_b[pending]
        live = ~problem.hyp_zero[pending]

        def pending_geometry():
            d = hypA @ node.interior + hypb
            hp = hypA @ node.pts.T + hypb[:, None] if node.pts.shape[0] else None
            if finite_box:
                center = 0.5 * (node.lo + node.hi)
                half = 0.5 * (node.hi - node.lo)
                m = hypA @ center + hypb
                r = np.abs(hypA) @ half
            else:
                m = r = None
            return d, hp, m, r

        def undecided_count(d, hp, m, r):
            und = live & ~(np.abs(d) < node.islack - tau / 2)
            if hp is not None:
                und &= ~((node.pts_slack[None, :] - np.abs(hp)).max(axis=1) > tau / 2)
            if m is not None:
                und &= ~(np.abs(m) > r + tau)
            return int(und.sum())

        d_all, h_pts, mid, rad = pending_geometry()
        h_verts = None
        if node.verts is not None:
            h_verts = hypA @ node.verts.T + hypb[:, None]
        # recenter and rebox small regions when enough pending units are
        # unresolved by the free tests to pay for the 2D+1 support LPs;
        # descendants inherit the gain through the split clips
        lim = problem.limits
        if (
            h_verts is None
            and finite_box
            and node.refreshes < lim.refresh_budget
            and node.islack <= lim.refresh_islack_gate
            and undecided_count(d_all, h_pts, mid, rad) >= lim.refresh_undecided
        ):
            _refresh(problem, node, stats)
            d_all, h_pts, mid, rad = pending_geometry()
        n_pts = node.pts.shape[0]
        rows_A, rows_b = active_rows(problem, node)
        dual_A = np.ascontiguousarray(rows_A[problem.n_box :])
        dual_b = np.ascontiguousarray(rows_b[problem.n_box :])

        for idx in range(K - k):
            j = k + idx
            stats.exams += 1
            if problem.hyp_zero[j]:
                node.signs[j] = 1 if problem.hyp_b[j] >= 0 else -1
                node.redundant[j] = True
                continue
            d = float(d_all[idx])
            cut_x = None
            cut_slack = 0.0
            decided_side = 0
            hv_j = None
            if h_verts is not None:
                # the vertex set is exact and complete: signs at vertices
                # decide the exam outright when clear of the margin band
                hv_j = h_verts[idx]
                mn = float(hv_j.min())
                mx = float(hv_j.max())
                if mn >= _VERT_EPS:
                    decided_side = 1
                elif mx <= -_VERT_EPS:
                    decided_side = -1
                elif mn <= -_VERT_EPS and mx >= _VERT_EPS:
                    far = float(mn if d >= 0 else mx)
                    t = d / (d - far)
                    slack_z = (1.0 - t) * node.islack
                    if slack_z >= tau / 2:
                        v_far = node.verts[int(np.argmin(hv_j) if d >= 0 else np.argmax(hv_j))]
                        cut_x = node.interior + t * (v_far - node.interior)
                        cut_slack = slack_z
            if cut_x is None and decided_side == 0 and abs(d) < node.islack - tau / 2:
                # hyperplane crosses the inscribed ball
                cut_x = node.interior - d * hypA[idx]
                cut_slack = node.islack - abs(d)
            elif n_pts:
                # balls around the cached points, then segments between them
                gaps = node.pts_slack - np.abs(h_pts[idx])
                ig = int(np.argmax(gaps))
                if gaps[ig] > tau / 2:
                    cut_x = node.pts[ig] - float(h_pts[idx, ig]) * hypA[idx]
                    cut_slack = float(gaps[ig])
                elif h_pts[idx].min() <= -tau and h_pts[idx].max() >= tau:
                    ia = int(np.argmin(h_pts[idx]))
                    ib = int(np.argmax(h_pts[idx]))
                    ha = float(h_pts[idx, ia])
                    hb = float(h_pts[idx, ib])
                    if min(node.pts_slack[ia], node.pts_slack[ib]) >= tau / 2:
                        t = ha / (ha - hb)
                        cut_x = node.pts[ia] + t * (node.pts[ib] - node.pts[ia])
                        cut_slack = float(min(node.pts_slack[ia], node.pts_slack[ib]))
            if cut_x is None and decided_side == 0 and finite_box:
                if mid[idx] - rad[idx] > tau:
                    decided_side = 1
                elif mid[idx] + rad[idx] < -tau:
                    decided_side = -1
            if cut_x is None and decided_side == 0:
                # dual certificates of one-sidedness, trying the likely side
                # (the interior point's side) first
                w = hypA[idx]
                c = float(hypb[idx])
                first = 1 if d >= 0 else -1
                for side in (first, -first):
                    lb = _side_bound(side * w, side * c, dual_A, dual_b, node.lo, node.hi, 16)
                    if lb > tau:
                        decided_side = side
                        break
            if cut_x is None and decided_side == 0:
                stats.lp_calls += 1
                stats.lp_exam += 1
                eps, x = cut_margin_lp(
                    rows_A, rows_b, hypA[idx], float(hypb[idx]), problem.limits.internal_cap
                )
                if eps is not None and eps > tau:
                    cut_x = x
                    cut_slack = eps
                else:
                    decided_side = 1 if d >= 0 else -1
                if DEBUG_EXAMS is not None:
                    DEBUG_EXAMS.append(
                        (
                            "lp",
                            "cut" if cut_x is not None else "nocut",
                            abs(d) / node.islack if node.islack > 0 else np.inf,
                            (abs(float(mid[idx])) - float(rad[idx])) if finite_box else np.nan,
                            float(rad[idx]) if finite_box else np.nan,
                            node.islack,
                            eps if eps is not None else np.nan,
                        )
                    )
            elif DEBUG_EXAMS is not None:
                DEBUG_EXAMS.append(
                    (
                        "cert",
                        "cut" if cut_x is not None else "nocut",
                        abs(d) / node.islack if node.islack > 0 else np.inf,
                        np.nan,
                        np.nan,
                        node.islack,
                        np.nan,
                    )
                )
            if cut_x is not None:
                plus = _make_child(problem, node, j, 1, cut_x, cut_slack, stats, hv_j)
                minus = _make_child(problem, node, j, -1, cut_x, cut_slack, stats, hv_j)
                return "branch", plus, minus
            node.signs[j] = decided_side
            node.redundant[j] = True

    # leaf: certify and deepen the interior with the final margin LP
    stats.leaves += 1
    stats.lp_calls += 1
    stats.lp_leaf += 1
    A, b = active_rows(problem, node)
    margin, x = margin_lp(A, b, problem.limits.eps_cap)
    if margin <= tau:
        return "pruned", None
    node.interior = x
    node.islack = margin
    node.k = K
    return "leaf", node


def run_dfs(problem: LayerProblem, start: Node, stats: StepStats, on_leaf, on_failure):
    """Exhaust the subtree under ``start`` depth-first.

    ``on_leaf(node)`` receives each finalized leaf; LP failures abort the
    offending branch through ``on_failure(node, exc)`` without touching
    sibling branches.
    """
    stack = [start]
    while stack:
        node = stack.pop()
        try:
            kind, *out = step(problem, node, stats)
        except LPNumericalError as exc:
            on_failure(node, exc)
            continue
        if kind == "branch":
            plus, minus = out
            if minus is not None:
                stack.append(minus)
            if plus is not None:
                stack.append(plus)
        elif kind == "leaf":
            on_leaf(out[0])
