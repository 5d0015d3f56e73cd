"""Dense convex QP solving and the lexicographic layer on top of it.

The QP solver is a small operator-splitting (ADMM) method with an exact
polish step, solving
    min 1/2 x'Hx + f'x   s.t.  lower <= A_ineq x <= upper,  A_eq x = b_eq.

The lexicographic solvers stack prioritized levels of affine constraints
(inequalities A_i x + a_i <= 0 relaxed by nonnegative slacks, equalities
B_i x + b_i = 0 relaxed in a least-squares sense) and resolve them either
sequentially (higher levels frozen at their achieved residuals/slacks) or
as a single weighted QP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from scipy.linalg import lu_factor, lu_solve

RHO = 0.1
RHO_EQ_SCALE = 1e3
SIGMA = 1e-6
ALPHA = 1.6  # over-relaxation
REG = 0.0  # no diagonal regularization on level costs: any bias shifts the
# achieved residuals, which the hierarchy then freezes and amplifies.  Levels
# whose cost touches only a subspace leave x indeterminate in its complement,
# which is harmless (only residuals/slacks propagate); the singular KKT
# systems fall back to minimum-norm solves

OPTIMAL = "optimal"
MAX_ITER = "max-iter"
PRIMAL_INFEASIBLE = "primal-infeasible"


@dataclass
class QpProblem:
    """min 1/2 x'Hx + f'x  s.t. lower <= A_ineq x <= upper, A_eq x = b_eq."""

    H: np.ndarray
    f: np.ndarray
    A_ineq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    @property
    def dim(self):
        return self.f.shape[0]

    def stacked(self):
        """(A, l, u, n_eq_rows) with equalities first as l == u rows."""
        d = self.dim
        blocks, lo, up = [], [], []
        n_eq = 0
        if self.A_eq is not None and self.A_eq.shape[0]:
            blocks.append(np.atleast_2d(self.A_eq))
            lo.append(self.b_eq)
            up.append(self.b_eq)
            n_eq = np.atleast_2d(self.A_eq).shape[0]
        if self.A_ineq is not None and self.A_ineq.shape[0]:
            a = np.atleast_2d(self.A_ineq)
            blocks.append(a)
            m = a.shape[0]
            lo.append(self.lower if self.lower is not None else np.full(m, -np.inf))
            up.append(self.upper if self.upper is not None else np.full(m, np.inf))
        if not blocks:
            return np.zeros((0, d)), np.zeros(0), np.zeros(0), 0
        return (
            np.vstack(blocks),
            np.concatenate(lo),
            np.concatenate(up),
            n_eq,
        )


@dataclass
class QpResult:
    x: np.ndarray
    y: np.ndarray  # stacked constraint duals (eq rows first)
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    side: np.ndarray | None = None  # per-row active set: -1 lower, +1 upper

    @property
    def optimal(self):
        return self.status == OPTIMAL


def solve_qp(
    problem: QpProblem,
    warm_start: np.ndarray | None = None,
    warm_start_y: np.ndarray | None = None,
    warm_side: np.ndarray | None = None,
    max_iter: int = 4000,
    eps_abs: float = 1e-8,
    eps_rel: float = 1e-8,
    polish: bool = True,
    check_every: int = 25,
    feasible_start: np.ndarray | None = None,
) -> QpResult:
    h = 0.5 * (problem.H + problem.H.T)
    f = problem.f
    d = f.shape[0]
    a, lo, up, n_eq = problem.stacked()
    m = a.shape[0]

    if m == 0:
        x = np.linalg.solve(h + SIGMA * np.eye(d), -f)
        return QpResult(x, np.zeros(0), OPTIMAL, 0, 0.0, 0.0, np.zeros(0, np.int8))

    eq_row = np.zeros(m, dtype=bool)
    eq_row[:n_eq] = True

    # exact fast path: with a feasible point (and usually last solve's active
    # set as the guess) the primal active-set run finishes most solves alone
    if feasible_start is not None:
        side0 = (
            warm_side
            if warm_side is not None and warm_side.shape[0] == m
            else np.zeros(m, dtype=np.int8)
        )
        hit = _primal_active_set(
            h, f, a, lo, up, eq_row, feasible_start, side0, max_iter=150
        )
        if hit is None:
            # degenerate vertices (tied, near-parallel rows) can defeat the
            # exact solve; a deterministic ~1e-9 relaxation of the inequality
            # bounds separates the ties without moving the optimum noticeably
            lo_j, up_j = _jitter_bounds(lo, up, eq_row)
            hit = _primal_active_set(
                h, f, a, lo_j, up_j, eq_row, feasible_start, side0, max_iter=300
            )
        if hit is not None:
            xs, ys, side, p2, d2, it = hit
            return QpResult(xs, ys, OPTIMAL, it, p2, d2, side)
    elif warm_side is not None and warm_side.shape[0] == m:
        hit = _active_set_solve(h, f, a, lo, up, eq_row, warm_side, max_iter=12)
        if hit is not None:
            xs, ys, side, p2, d2, it = hit
            return QpResult(xs, ys, OPTIMAL, it, p2, d2, side)

    rho_base = RHO
    kkt = np.zeros((d + m, d + m))
    kkt[:d, :d] = h + SIGMA * np.eye(d)
    kkt[:d, d:] = a.T
    kkt[d:, :d] = a

    def factor(rb):
        r = np.full(m, rb)
        r[:n_eq] *= RHO_EQ_SCALE
        kkt[d:, d:] = -np.diag(1.0 / r)
        return r, lu_factor(kkt, check_finite=False)

    rho, lu = factor(rho_base)

    x = np.zeros(d) if warm_start is None else warm_start.copy()
    y = np.zeros(m) if warm_start_y is None else warm_start_y.copy()
    z = np.clip(a @ x, lo, up)
    rhs = np.empty(d + m)

    status = MAX_ITER
    it = 0
    pri = dua = np.inf
    y_prev_check = y.copy()
    for it in range(1, max_iter + 1):
        rhs[:d] = SIGMA * x - f
        rhs[d:] = z - y / rho
        sol = lu_solve(lu, rhs, check_finite=False)
        x_t = sol[:d]
        nu = sol[d:]
        z_t = z + (nu - y) / rho
        x = ALPHA * x_t + (1.0 - ALPHA) * x
        z_relaxed = ALPHA * z_t + (1.0 - ALPHA) * z
        z_new = np.clip(z_relaxed + y / rho, lo, up)
        y = y + rho * (z_relaxed - z_new)
        z = z_new

        if it % check_every == 0 or it == max_iter:
            ax = a @ x
            aty = a.T @ y
            hx = h @ x
            pri = np.abs(ax - z).max() if m else 0.0
            dua = np.abs(hx + f + aty).max()
            eps_pri = eps_abs + eps_rel * max(
                np.abs(ax).max(initial=0.0), np.abs(z).max(initial=0.0)
            )
            eps_dua = eps_abs + eps_rel * max(
                np.abs(hx).max(initial=0.0),
                np.abs(aty).max(initial=0.0),
                np.abs(f).max(initial=0.0),
            )
            if pri <= eps_pri and dua <= eps_dua:
                status = OPTIMAL
                break
            # after some progress, try exact refinement from the guessed
            # active set: if it verifies full KKT conditions we are done
            if it % (4 * check_every) == 0:
                side0 = _guess_side(z, y, lo, up, eq_row)
                if feasible_start is not None:
                    hit = _primal_active_set(
                        h, f, a, lo, up, eq_row, feasible_start, side0, max_iter=100
                    )
                else:
                    hit = _active_set_solve(h, f, a, lo, up, eq_row, side0)
                if hit is not None:
                    xs, ys, side, p2, d2, _ = hit
                    return QpResult(xs, ys, OPTIMAL, it, p2, d2, side)
            # adaptive step size: rebalance primal vs dual progress
            ratio = np.sqrt(
                (pri / max(eps_pri, 1e-12)) / max(dua / max(eps_dua, 1e-12), 1e-12)
            )
            if ratio > 5.0 or ratio < 0.2:
                rho_base = float(np.clip(rho_base * ratio, 1e-6, 1e6))
                rho, lu = factor(rho_base)
            # primal infeasibility certificate: dy in the recession cone with
            # negative support value
            dy = y - y_prev_check
            ndy = np.abs(dy).max()
            if ndy > 1e-12:
                pos = np.maximum(dy, 0.0)
                neg = np.minimum(dy, 0.0)
                inf_up = np.isinf(up)
                inf_lo = np.isinf(lo)
                bounded = not (
                    (pos[inf_up] > 1e-10 * ndy).any()
                    or (neg[inf_lo] < -1e-10 * ndy).any()
                )
                if bounded and np.abs(a.T @ dy).max() <= 1e-10 * ndy:
                    sup = up[~inf_up] @ pos[~inf_up] + lo[~inf_lo] @ neg[~inf_lo]
                    if sup < -1e-10 * ndy:
                        status = PRIMAL_INFEASIBLE
                        break
            y_prev_check = y.copy()

    side = _guess_side(z, y, lo, up, eq_row)
    if status == OPTIMAL and polish:
        if feasible_start is not None:
            hit = _primal_active_set(
                h, f, a, lo, up, eq_row, feasible_start, side, max_iter=100
            )
        else:
            hit = _active_set_solve(h, f, a, lo, up, eq_row, side)
        if hit is not None:
            xs, ys, side_p, p2, d2, _ = hit
            if p2 <= max(pri, 1e-9) and d2 <= max(dua, 1e-9):
                x, y, side, pri, dua = xs, ys, side_p, p2, d2

    return QpResult(x, y, status, it, pri, dua, side)


def _guess_side(z, y, lo, up, eq_row):
    """Guess the active set from a primal/dual iterate: rows sitting at a
    bound are marked active on that side (dual sign breaks ties)."""
    tol_up = 1e-7 * (1.0 + np.abs(up))
    tol_lo = 1e-7 * (1.0 + np.abs(lo))
    near_up = np.isfinite(up) & (up - z <= tol_up)
    near_lo = np.isfinite(lo) & (z - lo <= tol_lo)
    side = np.zeros(z.shape[0], dtype=np.int8)
    side[near_up & ~near_lo] = 1
    side[near_lo & ~near_up] = -1
    both = near_up & near_lo
    side[both] = np.where(y[both] >= 0.0, 1, -1)
    side[eq_row] = 1
    return side


def _active_set_solve(h, f, a, lo, up, eq_row, side, max_iter=40):
    """Exact solve by iterating on a guessed active set.

    Each pass solves the equality-constrained KKT system for the current
    guess, then re-guesses: active rows with wrong-signed duals are released,
    violated inactive rows are activated (all at once, which converges in a
    handful of passes from a decent guess).  The result is accepted only if
    the full KKT conditions -- feasibility, stationarity, complementarity,
    dual signs -- verify; otherwise None is returned and the caller keeps
    iterating its own method.
    """
    d = h.shape[0]
    m = a.shape[0]
    side = side.copy()
    seen = set()
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(eq_row | (side != 0))
        a_act = a[idx]
        b_act = np.where(side[idx] < 0, lo[idx], up[idx])
        k = idx.size
        kkt = np.zeros((d + k, d + k))
        kkt[:d, :d] = h
        kkt[:d, d:] = a_act.T
        kkt[d:, :d] = a_act
        rhs = np.concatenate([-f, b_act])
        # the KKT matrix may be singular (rank-deficient level costs leave x
        # indeterminate off the active set); solve a lightly shifted system
        # and remove the shift by iterative refinement (the refinement
        # residual corrects for the shift analytically, so only the shifted
        # matrix is ever formed)
        delta = 1e-10 * (1.0 + np.abs(np.diag(h)).max(initial=0.0))
        diag = np.arange(d + k)
        kkt[diag[:d], diag[:d]] += delta
        kkt[diag[d:], diag[d:]] -= delta
        shift = np.empty(d + k)
        rscale = 1.0 + np.abs(rhs).max(initial=0.0)
        try:
            lu = lu_factor(kkt, check_finite=False)
            sol = lu_solve(lu, rhs, check_finite=False)
            for _ in range(2):
                shift[:d] = delta * sol[:d]
                shift[d:] = -delta * sol[d:]
                sol += lu_solve(lu, rhs - kkt @ sol + shift, check_finite=False)
            if not np.isfinite(sol).all():
                raise np.linalg.LinAlgError
            shift[:d] = delta * sol[:d]
            shift[d:] = -delta * sol[d:]
            res = np.abs(rhs - kkt @ sol + shift).max()
        except np.linalg.LinAlgError:
            res = np.inf
        if res > 1e-9 * rscale:
            # singular KKT: the shifted solve leaks garbage into the null
            # space (delta * |sol| ~ residual), so take the minimum-norm
            # least-squares solution instead
            kkt[diag[:d], diag[:d]] -= delta
            kkt[diag[d:], diag[d:]] += delta
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            if np.abs(rhs - kkt @ sol).max() > 1e-6 * rscale:
                # active rows are mutually inconsistent (e.g. both sides of
                # an opposing pair): iterating from here is chaotic
                return None
        x = sol[:d]
        y = np.zeros(m)
        y[idx] = sol[d:]
        ax = a @ x
        ptol = 1e-9 * (1.0 + np.abs(ax).max(initial=0.0))
        dtol = 1e-9 * (1.0 + np.abs(y).max(initial=0.0))
        new_side = np.zeros(m, dtype=np.int8)
        new_side[~eq_row & (side > 0) & (y > -dtol)] = 1
        new_side[~eq_row & (side < 0) & (y < dtol)] = -1
        free = ~eq_row & (new_side == 0)
        new_side[free & (ax > up + ptol)] = 1
        new_side[free & (ax < lo - ptol)] = -1
        if np.array_equal(new_side, side):
            break
        key = new_side.tobytes()
        if key in seen:  # cycling: verify what we have, accept or give up
            side = new_side
            break
        seen.add(key)
        side = new_side
    else:
        return None

    return _kkt_verify(h, f, a, lo, up, eq_row, x, y, side, it)


def _kkt_verify(h, f, a, lo, up, eq_row, x, y, side, it):
    """Full KKT check: feasibility, complementarity, stationarity, dual
    signs.  Returns the solution tuple on success, None otherwise."""
    ax = a @ x
    act = eq_row | (side != 0)
    b_act = np.where(side < 0, lo, up)
    p2 = max((ax - up).max(initial=0.0), (lo - ax).max(initial=0.0), 0.0)
    comp = np.abs(ax[act] - b_act[act]).max(initial=0.0)
    d2 = np.abs(h @ x + f + a.T @ y).max()
    scale = 1.0 + np.abs(ax).max(initial=0.0)
    dscale = 1.0 + max(np.abs(f).max(initial=0.0), np.abs(h @ x).max(initial=0.0))
    dtol = 1e-9 * (1.0 + np.abs(y).max(initial=0.0))
    sign_ok = (
        (y[~eq_row & (side > 0)] >= -dtol).all()
        and (y[~eq_row & (side < 0)] <= dtol).all()
    )
    # near-parallel active rows make the dual split huge and non-unique, and
    # computing a' y then carries an irreducible absolute float noise of
    # roughly eps * sum |y_i| * |a_i|: widen the stationarity test by it
    dnoise = 4e-15 * float(np.abs(y) @ np.abs(a).max(axis=1, initial=0.0))
    if (
        sign_ok
        and p2 <= 1e-7 * scale
        and comp <= 1e-7 * scale
        and d2 <= 1e-7 * dscale + dnoise
    ):
        return x, y, side, p2, d2, it
    return None


def _eqp_step(h, g, a_act, resid=None):
    """Direction to the stationary point of 1/2 p'Hp + g'p s.t. a_act p = resid.

    Null-space method: an SVD of the active rows splits the step into a
    minimum-norm restoration of `resid` (default zero) plus a solve of the
    reduced Hessian on the constraint null space, so rank-deficient working
    sets are handled exactly.  Returns (p, y_act, ray); when the reduced
    Hessian has a zero-curvature direction with nonzero gradient there is no
    stationary point and that descent ray is returned with ray=True.
    Returns None when the active rows themselves are inconsistent.
    """
    d = h.shape[0]
    k = a_act.shape[0]
    if k:
        u, s, vt = np.linalg.svd(a_act)
        rank = int((s > s[0] * 1e-10).sum()) if s.size and s[0] > 0 else 0
        if resid is None:
            p0 = np.zeros(d)
        else:
            # restore drift only through well-conditioned directions: pushing
            # a tiny residual through a near-zero singular value turns solve
            # noise into a large spurious move, so truncate harder here than
            # for the null-space split and let sub-tolerance drift stand
            rr = int((s > s[0] * 1e-6).sum())
            p0 = vt[:rr].T @ ((u[:, :rr].T @ resid) / s[:rr])
            gap = np.abs(a_act @ p0 - resid).max(initial=0.0)
            if gap > 1e-7 * (1.0 + np.abs(resid).max()):
                return None  # active rows mutually inconsistent
        nb = vt[rank:].T  # null-space basis, d x (d - rank)
    else:
        p0 = np.zeros(d)
        nb = np.eye(d)
    gr = nb.T @ (g + h @ p0)
    if nb.shape[1]:
        hr = nb.T @ h @ nb
        w, q = np.linalg.eigh(hr)
        wtol = max(w[-1], 0.0) * 1e-10 + 1e-300
        gq = q.T @ gr
        flat = w <= wtol
        if flat.any() and np.abs(gq[flat]).max() > 1e-11 * (1.0 + np.abs(g).max()):
            ray = -nb @ (q[:, flat] @ gq[flat])
            return ray / np.abs(ray).max(), np.zeros(k), True
        z = np.zeros(w.size)
        z[~flat] = -gq[~flat] / w[~flat]
        p = p0 + nb @ (q @ z)
    else:
        p = p0
    if k:
        y = u[:, :rank] @ ((vt[:rank] @ -(g + h @ p)) / s[:rank])
    else:
        y = np.zeros(0)
    return p, y, False


_PAS_DEBUG = False


def _descent_lp(g, a, lo, up, eq_row, ax):
    """Feasible strict descent direction at a degenerate vertex.

    Minimizes g'p over the box |p| <= 1 subject to not leaving any tight
    row, which is exactly the question the working-set machinery cannot
    answer when many dependent rows are tight at once.  Returns the
    direction, a zero vector when the vertex is optimal, or None if the LP
    itself fails.
    """
    t_tol = 1e-7 * (1.0 + np.abs(ax))
    tu = ~eq_row & np.isfinite(up) & (up - ax <= t_tol)
    tl = ~eq_row & np.isfinite(lo) & (ax - lo <= t_tol) & ~tu
    n_ub = int(tu.sum() + tl.sum())
    n_eq = int(eq_row.sum())
    res = scipy.optimize.linprog(
        g,
        A_ub=np.vstack([a[tu], -a[tl]]) if n_ub else None,
        b_ub=np.zeros(n_ub) if n_ub else None,
        A_eq=a[eq_row] if n_eq else None,
        b_eq=np.zeros(n_eq) if n_eq else None,
        bounds=(-1.0, 1.0),
        method="highs",
    )
    if res.status != 0:
        return None
    if res.fun < -1e-9 * (1.0 + np.abs(g).max(initial=0.0)):
        return res.x
    return np.zeros(g.shape[0])


def _jitter_bounds(lo, up, eq_row):
    """Relax each inequality bound by a tiny row-dependent amount.

    Degeneracy comes from exact ties between bounds; a deterministic
    pseudo-random relaxation of order 1e-9 splits the ties while keeping
    every previously feasible point feasible.
    """
    m = lo.shape[0]
    r = 0.5 + (np.arange(m) * 2654435761 % 1024) / 1024.0
    lo_j = lo.copy()
    up_j = up.copy()
    ineq = ~eq_row
    fin = ineq & np.isfinite(up)
    up_j[fin] = up[fin] + 1e-9 * r[fin] * (1.0 + np.abs(up[fin]))
    fin = ineq & np.isfinite(lo)
    lo_j[fin] = lo[fin] - 1e-9 * r[fin] * (1.0 + np.abs(lo[fin]))
    return lo_j, up_j


def _primal_active_set(h, f, a, lo, up, eq_row, x0, side0, max_iter=60):
    """Feasible-iterates active-set solve from a feasible starting point.

    Classic primal strategy: solve the equality subproblem on the working
    set, step along the direction no further than the first blocking row,
    add that row; at a stationary point drop the row with the worst
    wrong-signed dual.  Feasibility is preserved throughout, so degenerate
    or flat objectives cannot send the iterate far afield the way a
    guess-and-resolve scheme can.  The result is accepted only when the full
    KKT conditions verify.
    """
    d = h.shape[0]
    m = a.shape[0]
    # equilibrate: rows spanning many orders of magnitude give huge duals on
    # the small rows, whose float noise then swamps the stationarity test
    rn = np.maximum(np.abs(a).max(axis=1, initial=0.0), 1e-12)
    a = a / rn[:, None]
    lo = lo / rn
    up = up / rn
    x = x0.copy()
    ax = a @ x
    # working set: rows of the guess that are actually tight at the start
    side = np.zeros(m, dtype=np.int8)
    tight = 1e-8 * (1.0 + np.abs(ax))
    side[(side0 > 0) & np.isfinite(up) & (up - ax <= tight)] = 1
    side[(side0 < 0) & np.isfinite(lo) & (ax - lo <= tight)] = -1
    side[eq_row] = 1
    y = np.zeros(m)
    fail = 0
    taboo = -1  # row released last iteration, shielded from noise re-entry
    last_drop = -1
    escapes = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(eq_row | (side != 0))
        g = h @ x + f
        # ask the step to land the active rows back on their bounds exactly,
        # so solve noise amplified by long ray steps cannot accumulate
        b_act = np.where(side[idx] < 0, lo[idx], up[idx])
        resid = b_act - ax[idx]
        if resid.size == 0 or np.abs(resid).max() <= 1e-9 * (
            1.0 + np.abs(b_act).max()
        ):
            # restoring negligible drift through near-zero singular values
            # would inject noise far larger than the drift itself
            resid = None
        hit = _eqp_step(h, g, a[idx], resid)
        if hit is None:
            # degenerate additions can leave mutually inconsistent active
            # rows; release the lowest-index inequality and retry
            loose = idx[~eq_row[idx]]
            fail += 1
            if _PAS_DEBUG:
                print(f"pas {it}: eqp-None nact={len(idx)} fail={fail}")
            if loose.size == 0 or fail > 6:
                return None
            side[loose[0]] = 0
            taboo = int(loose[0])
            last_drop = taboo
            continue
        p, y_act, ray = hit
        y.fill(0.0)
        y[idx] = y_act
        # step to the first blocking row; joint argmin keeps lowest-index
        # tie-breaking (Bland's rule) so degenerate alpha = 0 ties cannot
        # cycle between an entering row and a dropped one
        ap = a @ p
        cand = ~(eq_row | (side != 0))
        # a row released with a wrong-signed dual satisfies a p <= 0 in exact
        # arithmetic, so any tiny positive a p is noise: ignoring it for one
        # iteration breaks the drop/re-add cycle it would otherwise cause
        if taboo >= 0 and abs(ap[taboo]) <= 1e-7 * max(1.0, np.abs(ap).max()):
            cand[taboo] = False
        taboo = -1
        alpha = np.inf if ray else 1.0
        step_val = np.full(m, np.inf)
        pos = cand & (ap > 1e-12) & np.isfinite(up)
        step_val[pos] = (up[pos] - ax[pos]) / ap[pos]
        neg = cand & (ap < -1e-12) & np.isfinite(lo)
        step_val[neg] = (lo[neg] - ax[neg]) / ap[neg]
        block = -1
        if np.isfinite(step_val).any():
            j = int(np.argmin(step_val))
            if step_val[j] < alpha:
                alpha = max(step_val[j], 0.0)
                block = j
        if not np.isfinite(alpha):
            if _PAS_DEBUG:
                print(f"pas {it}: unbounded nact={len(idx)} ray={ray}")
            return None  # unbounded ray: nothing blocks a strict descent
        if block == last_drop and alpha <= 1e-12:
            # a released row genuinely re-blocks at zero step: the EQP
            # direction cannot slide along this degenerate vertex, so ask a
            # linear program over all tight rows for a usable direction
            escapes += 1
            if escapes > 3:
                return None
            p_lp = _descent_lp(h @ x + f, a, lo, up, eq_row, ax)
            if p_lp is None:
                return None
            if np.abs(p_lp).max(initial=0.0) > 0.0:
                ap = a @ p_lp
                curv = p_lp @ h @ p_lp
                g_lp = (h @ x + f) @ p_lp
                alpha = -g_lp / curv if curv > 0 else np.inf
                pos = (ap > 1e-12) & np.isfinite(up) & (up - ax > 0)
                if pos.any():
                    alpha = min(alpha, ((up[pos] - ax[pos]) / ap[pos]).min())
                neg = (ap < -1e-12) & np.isfinite(lo) & (ax - lo > 0)
                if neg.any():
                    alpha = min(alpha, ((lo[neg] - ax[neg]) / ap[neg]).min())
                if not np.isfinite(alpha):
                    return None
                x = x + alpha * p_lp
                ax = ax + alpha * ap
                if _PAS_DEBUG:
                    print(
                        f"pas {it}: lp-escape a={alpha:.2e}"
                        f" obj={0.5 * x @ h @ x + f @ x:.12e}"
                    )
            # refresh the working set from what is tight now
            side.fill(0)
            t_tol = 1e-8 * (1.0 + np.abs(ax))
            side[np.isfinite(up) & (up - ax <= t_tol)] = 1
            side[(side == 0) & np.isfinite(lo) & (ax - lo <= t_tol)] = -1
            side[eq_row] = 1
            last_drop = -1
            continue
        x = x + alpha * p
        ax = ax + alpha * ap
        if block >= 0:
            side[block] = 1 if ap[block] > 0 else -1
            if _PAS_DEBUG:
                print(
                    f"pas {it}: add {block} a={alpha:.2e} ap={ap[block]:.1e}"
                    f" nact={len(idx) + 1} ray={ray}"
                    f" obj={0.5 * x @ h @ x + f @ x:.12e}"
                )
            continue
        # a full unblocked step lands on the working-set optimum (up to
        # solve noise) with y its multiplier: optimal unless a dual says a
        # row should be released; release the lowest-index offender (Bland)
        dtol = 1e-9 * (1.0 + np.abs(y).max(initial=0.0))
        score = np.zeros(m)
        ineq = ~eq_row
        score[ineq & (side > 0)] = -y[ineq & (side > 0)]
        score[ineq & (side < 0)] = y[ineq & (side < 0)]
        bad = np.flatnonzero(score > dtol)
        if bad.size:
            # a dependent working set splits the dual non-uniquely, and the
            # minimum-norm split can carry a wrong sign even at the optimum:
            # decide by sign-constrained least squares before dropping
            y_nn = _signed_dual(h @ x + f, a, eq_row, side, idx)
            if y_nn is not None:
                y.fill(0.0)
                y[idx] = y_nn
            else:
                # at a degenerate vertex the certificate may need rows that
                # are tight without being in the working set: retry over all
                # of them before concluding the point is not optimal
                t_side = side.copy()
                t_tol = 1e-7 * (1.0 + np.abs(ax))
                t_side[np.isfinite(up) & (up - ax <= t_tol)] = 1
                t_side[(t_side == 0) & np.isfinite(lo) & (ax - lo <= t_tol)] = -1
                t_side[eq_row] = 1
                t_idx = np.flatnonzero(eq_row | (t_side != 0))
                y_nn = _signed_dual(h @ x + f, a, eq_row, t_side, t_idx)
                if y_nn is None:
                    if _PAS_DEBUG:
                        print(
                            f"pas {it}: drop {bad[0]} sc={score[bad[0]]:.1e}"
                            f" nbad={bad.size}"
                            f" obj={0.5 * x @ h @ x + f @ x:.12e}"
                        )
                    side[bad[0]] = 0
                    taboo = int(bad[0])
                    last_drop = taboo
                    continue
                side = t_side
                y.fill(0.0)
                y[t_idx] = y_nn
        done = _kkt_verify(h, f, a, lo, up, eq_row, x, y, side, it)
        if done is not None:
            xo, yo, so, p2, d2, nit = done
            return xo, yo / rn, so, p2, d2, nit
        # not converged to verification tolerance yet: the next subproblem
        # step refines both feasibility and stationarity, so keep going
        fail += 1
        if _PAS_DEBUG:
            ax2 = a @ x
            p2 = max(
                (ax2 - up)[np.isfinite(up)].max(initial=0.0),
                (lo - ax2)[np.isfinite(lo)].max(initial=0.0),
                0.0,
            )
            d2 = np.abs(h @ x + f + a.T @ y).max()
            dscale = 1.0 + max(
                np.abs(f).max(initial=0.0), np.abs(h @ x).max(initial=0.0)
            )
            print(
                f"pas {it}: verify-fail p2={p2:.1e}/{1e-7 * (1 + np.abs(ax2).max()):.0e}"
                f" d2={d2:.1e}/{1e-7 * dscale:.0e} nnls={bad.size > 0} fail={fail}"
            )
        if fail > 6:
            return None
    return None


def _signed_dual(g, a, eq_row, side, idx):
    """Correctly signed multipliers for the active rows, if any exist.

    Solves min ||g + a_act' y|| subject to the sign each active row's dual
    must carry (free for equality rows, which are split into a +/- column
    pair).  Returns the dual for the rows in `idx`, or None when no
    correctly signed dual annihilates the gradient.
    """
    cols = []
    sign = []
    for i in idx:
        if eq_row[i]:
            cols.append(a[i])
            cols.append(-a[i])
            sign.append(0)
        else:
            # upper-bound rows need y >= 0, lower-bound rows y <= 0
            cols.append(a[i] if side[i] > 0 else -a[i])
            sign.append(1 if side[i] > 0 else -1)
    if not cols:
        return None
    mat = np.array(cols).T
    u, rnorm = scipy.optimize.nnls(mat, -g)
    if rnorm > 1e-7 * (1.0 + np.abs(g).max(initial=0.0)):
        return None
    y_act = np.empty(len(idx))
    j = 0
    for k, s in enumerate(sign):
        if s == 0:
            y_act[k] = u[j] - u[j + 1]
            j += 2
        else:
            y_act[k] = s * u[j]
            j += 1
    return y_act


# ---------------------------------------------------------------------------
# lexicographic layer


@dataclass
class LqpLevel:
    """One priority level: inequalities A x + a <= 0 (slacked, slack >= 0) and
    equalities B x + b = 0 (least-squares); V/W are positive diagonal weights
    (1-D arrays) on the inequality slacks / equality residuals."""

    A: np.ndarray | None = None
    a: np.ndarray | None = None
    B: np.ndarray | None = None
    b: np.ndarray | None = None
    V: np.ndarray | None = None
    W: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.A is not None:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
            if self.A.shape[0] != self.a.shape[0]:
                raise ValueError(f"level {self.name!r}: A/a row mismatch")
        if self.B is not None:
            self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
            self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
            if self.B.shape[0] != self.b.shape[0]:
                raise ValueError(f"level {self.name!r}: B/b row mismatch")
        if self.V is None and self.A is not None:
            self.V = np.ones(self.A.shape[0])
        if self.W is None and self.B is not None:
            self.W = np.ones(self.B.shape[0])
        for w in (self.V, self.W):
            if w is not None and (np.asarray(w) <= 0).any():
                raise ValueError(f"level {self.name!r}: weights must be positive")

    @property
    def n_ineq(self):
        return 0 if self.A is None else self.A.shape[0]

    @property
    def n_eq(self):
        return 0 if self.B is None else self.B.shape[0]


@dataclass
class LqpSolution:
    x: np.ndarray
    slacks: list  # per-level nonnegative inequality slacks
    eq_residuals: list  # per-level equality residual vectors B x + b
    status: str
    iterations: list = field(default_factory=list)
    level_times_us: list = field(default_factory=list)
    warm: list = field(default_factory=list)  # per-level (x, y, side) for reuse

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _timer():
    import time

    return time.perf_counter()


def solve_lqp_sequential(
    levels,
    dim: int,
    H_a: np.ndarray | None = None,
    warm: list | None = None,
) -> LqpSolution:
    """Lexicographic solve, one QP per level with null-space substitution.

    Level k minimizes its weighted equality residuals and slack norms over
    (z, w_k) where x = x_bar + Z z and Z spans the null space of every
    higher-priority equality stack (so higher equalities hold exactly at
    their achieved values); higher-priority inequalities are frozen at their
    achieved slacks A_j x + a_j <= w_j*.  The final level additionally
    carries the acceleration-energy cost H_a on x.  Rank-deficient or
    conflicting equality stacks never abort: the basis only shrinks by the
    actual row rank, keeping every subsequent level feasible.
    """
    levels = list(levels)
    p = len(levels)
    if p == 0:
        raise ValueError("need at least one level")
    x = np.zeros(dim)
    z_basis = np.eye(dim)
    frozen_in_a, frozen_in_b = [], []
    slacks, eq_residuals, iters, times, warm_out = [], [], [], [], []
    status = OPTIMAL

    for k, lv in enumerate(levels):
        t0 = _timer()
        last = k == p - 1
        m = lv.n_ineq
        r = z_basis.shape[1]
        dz = r + m
        if dz == 0:
            slacks.append(np.zeros(0))
            eq_residuals.append(lv.B @ x + lv.b if lv.B is not None else np.zeros(0))
            iters.append(0)
            warm_out.append(None)
            times.append((_timer() - t0) * 1e6)
            continue
        h = np.zeros((dz, dz))
        f = np.zeros(dz)
        bz = None
        if lv.B is not None:
            bz = lv.B @ z_basis
            bw = bz * (lv.W**2)[:, None]
            h[:r, :r] += bz.T @ bw
            f[:r] += bw.T @ (lv.B @ x + lv.b)
        if last and H_a is not None:
            h[:r, :r] += z_basis.T @ H_a @ z_basis
            f[:r] += z_basis.T @ (H_a @ x)
        if m:
            h[r:, r:] = np.diag(lv.V**2)
        if REG:
            h += REG * max(np.abs(np.diag(h)).max(), 1e-12) * np.eye(dz)

        rows, lo, up = [], [], []
        if m:
            rr = np.zeros((m, dz))
            rr[:, :r] = lv.A @ z_basis
            rr[:, r:] = -np.eye(m)
            rows.append(rr)
            lo.append(np.full(m, -np.inf))
            up.append(-lv.a - lv.A @ x)
            r2 = np.zeros((m, dz))
            r2[:, r:] = np.eye(m)
            rows.append(r2)
            lo.append(np.zeros(m))
            up.append(np.full(m, np.inf))
        for fa, fb in zip(frozen_in_a, frozen_in_b):
            faz = fa @ z_basis
            # rows that the remaining basis cannot move are already satisfied
            # at z = 0; keeping them only degrades the QP's conditioning
            live = np.abs(faz).max(axis=1) > 1e-9
            if not live.any():
                continue
            rr = np.zeros((int(live.sum()), dz))
            rr[:, :r] = faz[live]
            rows.append(rr)
            lo.append(np.full(rr.shape[0], -np.inf))
            # clamp at zero so z = 0 stays feasible even after dropped
            # near-null rows drifted by solver noise at intermediate levels
            up.append(np.maximum((fb - fa @ x)[live], 0.0))

        prob = QpProblem(
            H=h,
            f=f,
            A_ineq=np.vstack(rows) if rows else None,
            lower=np.concatenate(lo) if rows else None,
            upper=np.concatenate(up) if rows else None,
        )
        # z coordinates change with the basis between ticks, but the
        # constraint rows keep their identity: reuse the dual and active set
        wy0 = ws0 = None
        if warm is not None and k < len(warm) and warm[k] is not None:
            wy0, ws0 = warm[k]
            if wy0.shape[0] != prob.stacked()[0].shape[0]:
                wy0 = ws0 = None
        # z = 0 with slacks at the achieved violations is always feasible
        x0 = np.zeros(dz)
        if m:
            x0[r:] = np.maximum(lv.A @ x + lv.a, 0.0)
        res = solve_qp(prob, warm_start_y=wy0, warm_side=ws0, feasible_start=x0)
        if not res.optimal:
            status = res.status if status == OPTIMAL else status
        x = x + z_basis @ res.x[:r]
        w_k = np.maximum(res.x[r:], 0.0)
        if m:
            # freeze at the actually-achieved violation so later levels stay
            # feasible even if the solver left a hair of slack error
            w_k = np.maximum(w_k, lv.A @ x + lv.a)
            frozen_in_a.append(lv.A)
            frozen_in_b.append(w_k - lv.a + 1e-10)
        if lv.B is not None:
            eq_residuals.append(lv.B @ x + lv.b)
            # restrict the basis to the null space of this level's rows
            _, sv, vt = np.linalg.svd(bz)
            rank = int((sv > max(sv[0] * 1e-10, 1e-12)).sum()) if sv.size else 0
            z_basis = z_basis @ vt[rank:].T
        else:
            eq_residuals.append(np.zeros(0))
        slacks.append(w_k)
        iters.append(res.iterations)
        warm_out.append((res.y.copy(), res.side))
        times.append((_timer() - t0) * 1e6)

    return LqpSolution(
        x=x,
        slacks=slacks,
        eq_residuals=eq_residuals,
        status=status,
        iterations=iters,
        level_times_us=times,
        warm=warm_out,
    )


def solve_lqp_weighted(
    levels,
    dim: int,
    H_a: np.ndarray | None = None,
    weight_ladder: float = 1e4,
    warm: list | None = None,
) -> LqpSolution:
    """Single-QP approximation of the hierarchy: level i's weights are scaled
    by weight_ladder**(p-1-i), all slacked inequalities kept hard on their
    slack variables."""
    levels = list(levels)
    p = len(levels)
    if p == 0:
        raise ValueError("need at least one level")
    if weight_ladder <= 1.0:
        raise ValueError("weight ladder must be > 1")
    t0 = _timer()
    m_all = [lv.n_ineq for lv in levels]
    dz = dim + sum(m_all)
    h = np.zeros((dz, dz))
    f = np.zeros(dz)
    rows, lo, up = [], [], []
    off = dim
    for i, lv in enumerate(levels):
        mu = weight_ladder ** (p - 1 - i)
        if lv.B is not None:
            bw = lv.B * (mu * lv.W**2)[:, None]
            h[:dim, :dim] += lv.B.T @ bw
            f[:dim] += bw.T @ lv.b
        m = m_all[i]
        if m:
            sl = slice(off, off + m)
            h[sl, sl] = np.diag(mu * lv.V**2)
            r = np.zeros((m, dz))
            r[:, :dim] = lv.A
            r[:, sl] = -np.eye(m)
            rows.append(r)
            lo.append(np.full(m, -np.inf))
            up.append(-lv.a)
            r2 = np.zeros((m, dz))
            r2[:, sl] = np.eye(m)
            rows.append(r2)
            lo.append(np.zeros(m))
            up.append(np.full(m, np.inf))
            off += m
    if H_a is not None:
        h[:dim, :dim] += H_a
    if REG:
        h += REG * max(np.abs(np.diag(h)).max(), 1e-12) * np.eye(dz)

    prob = QpProblem(
        H=h,
        f=f,
        A_ineq=np.vstack(rows) if rows else None,
        lower=np.concatenate(lo) if rows else None,
        upper=np.concatenate(up) if rows else None,
    )
    w0 = wy0 = ws0 = None
    if warm and warm[0] is not None and warm[0][0].shape[0] == dz:
        w0, wy0, ws0 = warm[0]
    # x = 0 with slacks absorbing each level's violation is always feasible
    x0 = np.zeros(dz)
    off = dim
    for i, lv in enumerate(levels):
        m = m_all[i]
        if m:
            x0[off : off + m] = np.maximum(lv.a, 0.0)
            off += m
    res = solve_qp(prob, warm_start=w0, warm_start_y=wy0, warm_side=ws0,
                   feasible_start=x0)
    x = res.x[:dim]
    slacks, eq_residuals = [], []
    off = dim
    for i, lv in enumerate(levels):
        m = m_all[i]
        slacks.append(np.maximum(res.x[off : off + m], 0.0))
        off += m
        eq_residuals.append(lv.B @ x + lv.b if lv.B is not None else np.zeros(0))
    return LqpSolution(
        x=x,
        slacks=slacks,
        eq_residuals=eq_residuals,
        status=res.status,
        iterations=[res.iterations],
        level_times_us=[(_timer() - t0) * 1e6],
        warm=[(res.x.copy(), res.y.copy(), res.side)],
    )


# ---------------------------------------------------------------------------
# problem dump (cross-solver debugging)


def dump_problem(p: QpProblem) -> str:
    def arr(a):
        return None if a is None else np.asarray(a).tolist()

    return json.dumps(
        {
            "H": arr(p.H),
            "f": arr(p.f),
            "A_ineq": arr(p.A_ineq),
            "lower": arr(p.lower),
            "upper": arr(p.upper),
            "A_eq": arr(p.A_eq),
            "b_eq": arr(p.b_eq),
        },
        indent=1,
    )


def load_problem(text: str) -> QpProblem:
    doc = json.loads(text)

    def arr(k):
        return None if doc.get(k) is None else np.array(doc[k], dtype=float)

    return QpProblem(
        H=arr("H"),
        f=arr("f"),
        A_ineq=arr("A_ineq"),
        lower=arr("lower"),
        upper=arr("upper"),
        A_eq=arr("A_eq"),
        b_eq=arr("b_eq"),
    )
