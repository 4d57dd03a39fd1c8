"""Dense LP kernel for the geometric queries behind region enumeration.

Three questions are answered here, all phrased on a halfspace system
``{x : A x + b >= 0}`` whose rows are unit-normalized:

* does the system have a strict interior, and how deep is it
  (:func:`interior_point`, a Chebyshev-center style margin LP);
* does a hyperplane pass through the interior of the region
  (:func:`hyperplane_cuts_region`);
* if it does not, on which side does the region lie.

The solver is a two-phase dense tableau simplex (Dantzig pricing with a
Bland's-rule fallback for anti-cycling), jitted with numba.  Problems here
are small: tens to a few hundred rows, a handful of columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

# Margin below which a region is considered to have no usable interior.
# Rows are unit-normalized, so this is a geometric distance.
TAU_INTERIOR = 1e-7

# Cap on the maximized slack; keeps the margin LP bounded even without box
# rows.  A margin report of EPS_CAP means "inradius at least EPS_CAP".
EPS_CAP = 1.0

_ROW_NORM_MIN = 1e-12


class LPNumericalError(RuntimeError):
    """Simplex failed to converge (cycling guard or iteration cap hit)."""


class LPStatus(Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"


class CutResult(Enum):
    CUTS = "cuts"
    NO_CUT_POSITIVE_SIDE = "no_cut_positive_side"
    NO_CUT_NEGATIVE_SIDE = "no_cut_negative_side"


@dataclass(frozen=True)
class LPResult:
    """Outcome of a margin LP.

    ``margin`` is the maximized uniform slack (the capped inradius when rows
    are unit-normalized).  ``witness`` is a deep interior point when
    ``status`` is FEASIBLE, else None.
    """

    status: LPStatus
    witness: np.ndarray | None
    margin: float

    @property
    def feasible(self) -> bool:
        return self.status is LPStatus.FEASIBLE


@dataclass(frozen=True)
class Box:
    """Axis-aligned symmetric domain restriction |x_i| <= half_width.

    ``half_width=None`` means unbounded (no box rows are emitted).
    """

    half_width: float | None
    dim: int

    def __post_init__(self):
        if self.half_width is not None and not self.half_width > 0:
            raise ValueError(f"box half_width must be positive, got {self.half_width}")
        if self.dim < 1:
            raise ValueError(f"box dimension must be >= 1, got {self.dim}")

    @property
    def bounded(self) -> bool:
        return self.half_width is not None

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Box faces as unit-normalized halfspace rows (a_j . x + b_j >= 0).

        Order: +e_0, -e_0, +e_1, -e_1, ...  Empty arrays when unbounded.
        """
        if self.half_width is None:
            return np.zeros((0, self.dim)), np.zeros(0)
        normals = np.zeros((2 * self.dim, self.dim))
        for i in range(self.dim):
            normals[2 * i, i] = 1.0
            normals[2 * i + 1, i] = -1.0
        offsets = np.full(2 * self.dim, float(self.half_width))
        return normals, offsets


class HalfspaceSystem:
    """Polytope {x : normals @ x + offsets >= 0} with unit-normalized rows.

    Construction rescales every row to unit Euclidean norm (offsets scaled
    along) so that slacks are geometric distances; zero-norm rows are
    rejected.
    """

    __slots__ = ("normals", "offsets")

    def __init__(self, normals, offsets):
        normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
        offsets = np.asarray(offsets, dtype=np.float64).ravel()
        if normals.size == 0:
            normals = normals.reshape(0, max(normals.shape[-1], 1) if normals.ndim else 1)
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError(
                f"row count mismatch: {normals.shape[0]} normals, {offsets.shape[0]} offsets"
            )
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms < _ROW_NORM_MIN):
            bad = int(np.argmin(norms))
            raise ValueError(f"zero-norm constraint row at index {bad}")
        self.normals = normals / norms[:, None]
        self.offsets = offsets / norms
        self.normals.setflags(write=False)
        self.offsets.setflags(write=False)

    @property
    def num_rows(self) -> int:
        return self.normals.shape[0]

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return self.normals @ x + self.offsets

    def __eq__(self, other):
        return (
            isinstance(other, HalfspaceSystem)
            and self.normals.shape == other.normals.shape
            and np.array_equal(self.normals, other.normals)
            and np.array_equal(self.offsets, other.offsets)
        )

    def __repr__(self):
        return f"HalfspaceSystem({self.num_rows} rows, dim={self.dim})"


def normalize_rows(normals, offsets) -> tuple[np.ndarray, np.ndarray]:
    """Unit-normalize halfspace rows; raises on zero-norm rows."""
    h = HalfspaceSystem(normals, offsets)
    return h.normals, h.offsets


# ---------------------------------------------------------------------------
# Simplex core.
#
# Solves  minimize c.z  s.t.  G z <= h,  E z == f,  z free,
# via the standard split z = u - v, slack variables on the inequality rows
# and artificials where needed.  Returns (code, z, objective) with
#   code 0 = optimal, 1 = infeasible, 2 = unbounded, 3 = numerical failure.
# ---------------------------------------------------------------------------

_OPT, _INFEASIBLE, _UNBOUNDED, _NUMFAIL = 0, 1, 2, 3

_PIV_TOL = 1e-9
_COST_TOL = 1e-9


@njit(cache=True)
def _pivot(T, basis, pr, pc):
    m1, n1 = T.shape
    piv = T[pr, pc]
    inv = 1.0 / piv
    for j in range(n1):
        T[pr, j] *= inv
    T[pr, pc] = 1.0
    for i in range(m1):
        if i == pr:
            continue
        factor = T[i, pc]
        if factor != 0.0:
            for j in range(n1):
                T[i, j] -= factor * T[pr, j]
            T[i, pc] = 0.0
    basis[pr] = pc


@njit(cache=True)
def _iterate(T, basis, ncols_enter, m, bland_after, maxiter):
    """Run simplex pivots on tableau T until optimal/unbounded/cap.

    Only columns < ncols_enter may enter the basis (this excludes
    artificial columns in phase 2).  Objective row is T[m], RHS column is
    the last one.
    """
    rhs = T.shape[1] - 1
    it = 0
    while True:
        it += 1
        if it > maxiter:
            return _NUMFAIL
        # entering column
        pc = -1
        if it <= bland_after:
            best = -_COST_TOL
            for j in range(ncols_enter):
                rc = T[m, j]
                if rc < best:
                    best = rc
                    pc = j
        else:
            for j in range(ncols_enter):
                if T[m, j] < -_COST_TOL:
                    pc = j
                    break
        if pc < 0:
            return _OPT
        # leaving row: min ratio; break ties toward bigger pivots (Dantzig
        # phase) or smaller basis index (Bland phase)
        pr = -1
        best_ratio = np.inf
        best_piv = 0.0
        for i in range(m):
            a = T[i, pc]
            if a > _PIV_TOL:
                ratio = T[i, rhs] / a
                if ratio < best_ratio - 1e-12:
                    best_ratio = ratio
                    best_piv = a
                    pr = i
                elif ratio < best_ratio + 1e-12 and pr >= 0:
                    if it <= bland_after:
                        if a > best_piv:
                            best_piv = a
                            pr = i
                    else:
                        if basis[i] < basis[pr]:
                            best_piv = a
                            pr = i
        if pr < 0:
            return _UNBOUNDED
        _pivot(T, basis, pr, pc)
    return _NUMFAIL


@njit(cache=True)
def _solve(c, G, h, E, f):
    """Minimize c.z subject to G z <= h, E z == f, z free."""
    m_ub = G.shape[0]
    m_eq = E.shape[0]
    n = G.shape[1]
    m = m_ub + m_eq

    nstruct = 2 * n + m_ub
    n_art = m_eq
    for i in range(m_ub):
        if h[i] < 0.0:
            n_art += 1
    ncols = nstruct + n_art
    rhs = ncols

    T = np.zeros((m + 1, ncols + 1))
    basis = np.empty(m, dtype=np.int64)
    art_used = 0
    for i in range(m_ub):
        sgn = 1.0 if h[i] >= 0.0 else -1.0
        for j in range(n):
            T[i, j] = sgn * G[i, j]
            T[i, n + j] = -sgn * G[i, j]
        T[i, 2 * n + i] = sgn
        T[i, rhs] = sgn * h[i]
        if sgn > 0.0:
            basis[i] = 2 * n + i
        else:
            acol = nstruct + art_used
            art_used += 1
            T[i, acol] = 1.0
            basis[i] = acol
    for k in range(m_eq):
        i = m_ub + k
        sgn = 1.0 if f[k] >= 0.0 else -1.0
        for j in range(n):
            T[i, j] = sgn * E[k, j]
            T[i, n + j] = -sgn * E[k, j]
        T[i, rhs] = sgn * f[k]
        acol = nstruct + art_used
        art_used += 1
        T[i, acol] = 1.0
        basis[i] = acol

    bland_after = 200 + 2 * (m + ncols)
    maxiter = 1000 + 20 * (m + ncols)
    z = np.zeros(n)

    if n_art > 0:
        for i in range(m):
            if basis[i] >= nstruct:
                for j in range(ncols + 1):
                    T[m, j] -= T[i, j]
        # artificials may leave the basis but never re-enter
        code = _iterate(T, basis, nstruct, m, bland_after, maxiter)
        if code == _NUMFAIL:
            return _NUMFAIL, z, 0.0
        infeas = -T[m, rhs]
        feas_tol = 1e-7 * (1.0 + np.abs(h).sum() + np.abs(f).sum())
        if code == _UNBOUNDED or infeas > feas_tol:
            return _INFEASIBLE, z, 0.0
        for i in range(m):
            if basis[i] >= nstruct:
                pc = -1
                for j in range(nstruct):
                    if abs(T[i, j]) > _PIV_TOL:
                        pc = j
                        break
                if pc >= 0:
                    _pivot(T, basis, i, pc)
                else:
                    for j in range(ncols + 1):
                        T[i, j] = 0.0
                    basis[i] = -1

    # phase 2: reduced costs for minimize c.(u - v)
    for j in range(ncols + 1):
        T[m, j] = 0.0
    for j in range(n):
        T[m, j] = c[j]
        T[m, n + j] = -c[j]
    for i in range(m):
        b = basis[i]
        if b >= 0:
            cb = T[m, b]
            if cb != 0.0:
                for j in range(ncols + 1):
                    T[m, j] -= cb * T[i, j]

    code = _iterate(T, basis, nstruct, m, bland_after, maxiter)
    if code == _NUMFAIL:
        return _NUMFAIL, z, 0.0
    if code == _UNBOUNDED:
        return _UNBOUNDED, z, 0.0

    for i in range(m):
        b = basis[i]
        if 0 <= b < n:
            z[b] += T[i, rhs]
        elif n <= b < 2 * n:
            z[b - n] -= T[i, rhs]
    return _OPT, z, -T[m, rhs]


def solve_lp(c, G=None, h=None, E=None, f=None):
    """Minimize ``c . z`` over ``G z <= h``, ``E z == f`` with ``z`` free.

    Returns ``(status, z, objective)`` where status is one of ``"optimal"``,
    ``"infeasible"``, ``"unbounded"``.  Raises LPNumericalError when the
    pivoting guard trips.
    """
    c = np.ascontiguousarray(c, dtype=np.float64)
    n = c.shape[0]
    if G is None:
        G = np.zeros((0, n))
        h = np.zeros(0)
    if E is None:
        E = np.zeros((0, n))
        f = np.zeros(0)
    G = np.ascontiguousarray(G, dtype=np.float64).reshape(-1, n)
    h = np.ascontiguousarray(h, dtype=np.float64).ravel()
    E = np.ascontiguousarray(E, dtype=np.float64).reshape(-1, n)
    f = np.ascontiguousarray(f, dtype=np.float64).ravel()
    code, z, obj = _solve(c, G, h, E, f)
    if code == _NUMFAIL:
        raise LPNumericalError("simplex iteration cap exceeded")
    status = {_OPT: "optimal", _INFEASIBLE: "infeasible", _UNBOUNDED: "unbounded"}[code]
    return status, (z if code == _OPT else None), (obj if code == _OPT else None)


# ---------------------------------------------------------------------------
# Margin LPs on raw row arrays (the hot path used by the search engine).
# Rows are assumed unit-normalized already.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _margin_lp(A, b, eps_cap):
    """max eps s.t. A x + b >= eps, eps <= eps_cap.  Returns (code, x, eps)."""
    M = A.shape[0]
    D = A.shape[1]
    G = np.zeros((M + 1, D + 1))
    h = np.zeros(M + 1)
    for i in range(M):
        for j in range(D):
            G[i, j] = -A[i, j]
        G[i, D] = 1.0
        h[i] = b[i]
    G[M, D] = 1.0
    h[M] = eps_cap
    c = np.zeros(D + 1)
    c[D] = -1.0
    E = np.zeros((0, D + 1))
    f = np.zeros(0)
    code, z, obj = _solve(c, G, h, E, f)
    x = z[:D]
    return code, x, -obj


@njit(cache=True)
def _cut_lp(A, b, w, c0, eps_cap):
    """max eps s.t. w.x + c0 == 0, A x + b >= eps, eps <= eps_cap."""
    M = A.shape[0]
    D = A.shape[1]
    G = np.zeros((M + 1, D + 1))
    h = np.zeros(M + 1)
    for i in range(M):
        for j in range(D):
            G[i, j] = -A[i, j]
        G[i, D] = 1.0
        h[i] = b[i]
    G[M, D] = 1.0
    h[M] = eps_cap
    c = np.zeros(D + 1)
    c[D] = -1.0
    E = np.zeros((1, D + 1))
    for j in range(D):
        E[0, j] = w[j]
    f = np.zeros(1)
    f[0] = -c0
    code, z, obj = _solve(c, G, h, E, f)
    x = z[:D]
    return code, x, -obj


def margin_lp(A, b, eps_cap=EPS_CAP):
    """Maximized uniform slack over ``{x : A x + b >= eps}`` with eps <= cap.

    A may have zero rows (then the answer is eps_cap at the origin).
    Returns ``(margin, x)``; raises LPNumericalError on solver failure.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    code, x, eps = _margin_lp(A, b, float(eps_cap))
    if code == _OPT:
        return eps, x
    if code == _NUMFAIL:
        raise LPNumericalError("margin LP: simplex iteration cap exceeded")
    # infeasible/unbounded are impossible for this LP shape in exact
    # arithmetic (eps is free below and capped above)
    raise LPNumericalError(f"margin LP: unexpected solver state {code}")


def cut_margin_lp(A, b, w, c, eps_cap=EPS_CAP):
    """Maximized slack on the slice ``w.x + c == 0`` of ``A x + b >= 0``.

    Returns ``(margin, x)`` or ``(None, None)`` when the hyperplane does not
    meet the constrained set at all (only possible with bounding rows).
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    code, x, eps = _cut_lp(A, b, w, float(c), float(eps_cap))
    if code == _OPT:
        return eps, x
    if code == _INFEASIBLE:
        return None, None
    raise LPNumericalError("cut LP: simplex failure")


def _stack_with_box(H: HalfspaceSystem, box: Box) -> tuple[np.ndarray, np.ndarray]:
    if H.dim != box.dim:
        raise ValueError(f"dimension mismatch: system is {H.dim}-d, box is {box.dim}-d")
    bn, bo = box.rows()
    A = np.vstack([H.normals, bn])
    b = np.concatenate([H.offsets, bo])
    return A, b


def interior_point(
    H: HalfspaceSystem,
    box: Box,
    tau_interior: float = TAU_INTERIOR,
    eps_cap: float = EPS_CAP,
) -> LPResult:
    """Strict-interior test: maximize the uniform slack over H within box.

    Feasible iff the optimal slack exceeds ``tau_interior``; the witness is
    then a deep interior point (the Chebyshev center when the cap is not
    active).  With no rows at all the witness is the origin and the margin
    is ``eps_cap``.
    """
    A, b = _stack_with_box(H, box)
    margin, x = margin_lp(A, b, eps_cap)
    if margin > tau_interior:
        return LPResult(LPStatus.FEASIBLE, x, margin)
    return LPResult(LPStatus.INFEASIBLE, None, margin)


def hyperplane_cuts_region(
    H: HalfspaceSystem,
    w: np.ndarray,
    c: float,
    box: Box,
    interior: np.ndarray,
    tau_interior: float = TAU_INTERIOR,
    eps_cap: float = EPS_CAP,
) -> tuple[CutResult, np.ndarray | None]:
    """Decide whether the hyperplane ``w.x + c == 0`` crosses the region.

    ``interior`` must be a strict interior point of H within box (the cached
    witness of :func:`interior_point`); it resolves the side when the
    hyperplane misses.  ``(w, c)`` should be unit-normalized like H's rows.
    Returns ``(CutResult.CUTS, witness_on_hyperplane)`` or
    ``(no-cut side, None)``.
    """
    A, b = _stack_with_box(H, box)
    margin, x = cut_margin_lp(A, b, w, c, eps_cap)
    if margin is not None and margin > tau_interior:
        return CutResult.CUTS, x
    side = float(np.dot(w, interior) + c)
    if side >= 0:
        return CutResult.NO_CUT_POSITIVE_SIDE, None
    return CutResult.NO_CUT_NEGATIVE_SIDE, None
