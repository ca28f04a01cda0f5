"""Dense linear programming kernel and the box-budget support function.

The solver is a two-phase primal simplex on the standard form min c.u,
A u = b, u >= 0, with Bland's least-index pivoting rule, so it cannot cycle
and is fully deterministic. Problems in this package are tiny (tens of
variables), so the basis system is re-solved from scratch at every pivot;
there is no tableau drift to manage.

Status is a strict trichotomy. Optimal results carry the dual objective
reconstructed from the final basis, unbounded results carry an improving ray
in the original variables, infeasible results carry a Farkas-style aggregated
certificate that is verified numerically before being returned.

``support_function`` maximizes E[f W | block] over the density polytope
{m0 <= f <= M0, E[f | block] = 1} by the continuous-knapsack greedy: atoms
sorted by payoff (ties by atom index), at most one fractional atom. It is the
solver-free twin of the same LP and the pair is cross-checked in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
COST_TOL = 1e-9
PIVOT_TOL = 1e-11
MAX_ITER = 1_000_000

_INF = math.inf


class LpError(Exception):
    """Malformed program data or iteration cap exceeded."""


class InfeasibleRegionError(ValueError):
    """A box-budget region with no feasible density."""


@dataclass(frozen=True)
class LinearProgram:
    """min or max of c.x subject to A_eq x = b_eq, A_ub x <= b_ub, lo <= x <= hi."""

    c: np.ndarray
    sense: str = "min"
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
            raise LpError("objective must be a finite vector")
        object.__setattr__(self, "c", c)
        if self.sense not in ("min", "max"):
            raise LpError(f"sense must be 'min' or 'max', got {self.sense!r}")
        n = c.size
        for name in ("eq", "ub"):
            a = getattr(self, f"a_{name}")
            b = getattr(self, f"b_{name}")
            if (a is None) != (b is None):
                raise LpError(f"a_{name} and b_{name} must be given together")
            if a is None:
                continue
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if a.shape != (b.size, n) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
                raise LpError(f"a_{name}/b_{name} malformed for {n} variables")
            object.__setattr__(self, f"a_{name}", a)
            object.__setattr__(self, f"b_{name}", b)
        bounds = self.bounds
        if bounds is None:
            bounds = tuple((0.0, _INF) for _ in range(n))
        else:
            bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
            if len(bounds) != n:
                raise LpError("one (lo, hi) pair per variable is required")
            for lo, hi in bounds:
                if math.isnan(lo) or math.isnan(hi):
                    raise LpError("NaN bound")
        object.__setattr__(self, "bounds", bounds)

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass(frozen=True)
class LpResult:
    status: str                       # "optimal" | "unbounded" | "infeasible"
    value: float
    x: np.ndarray | None = None
    dual_objective: float | None = None
    certificate: dict | None = None
    iterations: int = 0


def _simplex(a: np.ndarray, b: np.ndarray, c: np.ndarray, basis: list[int],
             start_iter: int = 0):
    """Bland-rule primal simplex from a feasible basis. Returns
    (status, basis, x_basic, y, iterations); status 'optimal' or 'unbounded'
    (with entering column j and direction d attached for rays)."""
    m, n = a.shape
    it = start_iter
    while True:
        if it > MAX_ITER:
            raise LpError("simplex iteration cap exceeded")
        it += 1
        bmat = a[:, basis]
        xb = np.linalg.solve(bmat, b)
        y = np.linalg.solve(bmat.T, c[basis])
        reduced = c - a.T @ y
        entering = -1
        for j in range(n):
            if j in basis:
                continue
            if reduced[j] < -COST_TOL:
                entering = j
                break
        if entering < 0:
            return "optimal", basis, xb, y, it, None, None
        d = np.linalg.solve(bmat, a[:, entering])
        ratios = []
        for i in range(m):
            if d[i] > PIVOT_TOL:
                ratios.append((xb[i] / d[i], basis[i], i))
        if not ratios:
            return "unbounded", basis, xb, y, it, entering, d
        theta = min(r[0] for r in ratios)
        # Bland: among minimal ratios leave the smallest basic variable index
        leave_row = min((bi, i) for t, bi, i in ratios if t <= theta + PIVOT_TOL)[1]
        basis[leave_row] = entering


def solve_lp(lp: LinearProgram) -> LpResult:
    """Solve a small dense LP with exact status certificates."""
    n = lp.n_vars
    sgn = 1.0 if lp.sense == "min" else -1.0
    c_orig = lp.c

    # --- substitution to u >= 0 -------------------------------------------
    # per original variable: (kind, u-index or (u+, u-), shift)
    cols: list[np.ndarray] = []     # u-columns expressed over original vars
    var_map = []
    bound_rows = []                 # (u_index, cap, orig_var) for two-sided vars
    u_cost = []
    for j, (lo, hi) in enumerate(lp.bounds):
        # reversed finite bounds yield a negative-capacity row; phase 1
        # certifies the resulting infeasibility like any other
        e = np.zeros(n)
        e[j] = 1.0
        if lo > -_INF:
            var_map.append(("lo", len(cols), lo))
            u_cost.append(sgn * c_orig[j])
            cols.append(e)
            if hi < _INF:
                bound_rows.append((len(cols) - 1, hi - lo, j))
        elif hi < _INF:
            var_map.append(("hi", len(cols), hi))
            u_cost.append(-sgn * c_orig[j])
            cols.append(-e)
        else:
            var_map.append(("free", (len(cols), len(cols) + 1), 0.0))
            u_cost.append(sgn * c_orig[j])
            u_cost.append(-sgn * c_orig[j])
            cols.append(e)
            cols.append(-e)
    umat = np.column_stack(cols) if cols else np.zeros((n, 0))
    # x = shift + signed u contributions
    shift = np.zeros(n)
    for j, (kind, pos, s) in enumerate(var_map):
        shift[j] = s

    n_u = umat.shape[1]

    # --- rows --------------------------------------------------------------
    rows = []
    rhs = []
    row_tag = []                    # ("eq", i) | ("ub", i) | ("bnd", var)
    if lp.a_eq is not None:
        for i in range(lp.a_eq.shape[0]):
            rows.append(lp.a_eq[i] @ umat)
            rhs.append(lp.b_eq[i] - lp.a_eq[i] @ shift)
            row_tag.append(("eq", i))
    n_slack = 0
    slack_for_row = {}
    if lp.a_ub is not None:
        for i in range(lp.a_ub.shape[0]):
            rows.append(lp.a_ub[i] @ umat)
            rhs.append(lp.b_ub[i] - lp.a_ub[i] @ shift)
            row_tag.append(("ub", i))
            slack_for_row[len(rows) - 1] = n_slack
            n_slack += 1
    for u_idx, cap, j in bound_rows:
        r = np.zeros(n_u)
        r[u_idx] = 1.0
        rows.append(r)
        rhs.append(cap)
        row_tag.append(("bnd", j))
        slack_for_row[len(rows) - 1] = n_slack
        n_slack += 1

    m = len(rows)
    amat = np.zeros((m, n_u + n_slack))
    bvec = np.zeros(m)
    for i in range(m):
        amat[i, :n_u] = rows[i]
        bvec[i] = rhs[i]
        if i in slack_for_row:
            amat[i, n_u + slack_for_row[i]] = 1.0
    flips = np.ones(m)
    for i in range(m):
        if bvec[i] < 0:
            amat[i] *= -1.0
            bvec[i] *= -1.0
            flips[i] = -1.0

    cost = np.concatenate([np.asarray(u_cost), np.zeros(n_slack)])
    const = float(sgn * (c_orig @ shift))

    def to_x(u: np.ndarray) -> np.ndarray:
        x = shift.copy()
        for j, (kind, pos, s) in enumerate(var_map):
            if kind == "lo":
                x[j] = s + u[pos]
            elif kind == "hi":
                x[j] = s - u[pos]
            else:
                x[j] = u[pos[0]] - u[pos[1]]
        return x

    # --- phase 1 -----------------------------------------------------------
    iters = 0
    if m > 0:
        a1 = np.hstack([amat, np.eye(m)])
        c1 = np.concatenate([np.zeros(n_u + n_slack), np.ones(m)])
        basis = list(range(n_u + n_slack, n_u + n_slack + m))
        status, basis, xb, y, iters, _, _ = _simplex(a1, bvec, c1, basis)
        if status != "optimal":              # phase 1 is always bounded below
            raise LpError("phase 1 reported unbounded")
        if float(c1[basis] @ xb) > FEAS_TOL:
            cert = _farkas_certificate(lp, y, flips, row_tag)
            return LpResult("infeasible", math.nan, None, None, cert, iters)
        # Drive artificials out or drop redundant rows. The phase-1 objective
        # above already certifies feasibility, yet an ill-conditioned basis
        # can park artificial pairs at small nonzero levels of opposite sign,
        # so every remaining artificial is handled here, not just the ones at
        # numerical zero; re-solving from the cleaned basis restores accuracy.
        keep = list(range(m))
        for i in range(m):
            if basis[i] >= n_u + n_slack:
                bi = a1[:, [bb for bb in basis]]
                binv_row = np.linalg.solve(bi.T, np.eye(m)[i])
                row_in_cols = binv_row @ amat
                pivot_col = -1
                for j in range(n_u + n_slack):
                    if j not in basis and abs(row_in_cols[j]) > 1e-8:
                        pivot_col = j
                        break
                if pivot_col >= 0:
                    basis[i] = pivot_col
                else:
                    keep[i] = -1
        if any(k < 0 for k in keep):
            sel = [i for i in range(m) if keep[i] >= 0]
            amat = amat[sel]
            bvec = bvec[sel]
            flips = flips[sel]
            row_tag = [row_tag[i] for i in sel]
            basis = [basis[i] for i in sel]
            m = len(sel)
        if any(bi >= n_u + n_slack for bi in basis):
            raise LpError("artificial variable stuck in basis")
    else:
        basis = []

    # --- phase 2 -----------------------------------------------------------
    status, basis, xb, y, iters, enter, d = _simplex(
        amat, bvec, cost, basis, iters)
    u = np.zeros(n_u + n_slack)
    for i, bi in enumerate(basis):
        u[bi] = xb[i]
    x_here = to_x(u[:n_u])
    if status == "unbounded":
        ray_u = np.zeros(n_u + n_slack)
        ray_u[enter] = 1.0
        for i, bi in enumerate(basis):
            ray_u[bi] = -d[i]
        ray = to_x(ray_u[:n_u]) - shift
        value = -_INF if lp.sense == "min" else _INF
        cert = {"kind": "ray", "ray": ray, "from_point": x_here}
        return LpResult("unbounded", value, None, None, cert, iters)

    # loud failure beats a silently corrupted answer: a basis bad enough to
    # break feasibility at this scale of problem is a bug, not an outcome
    resid = 0.0
    if lp.a_eq is not None:
        resid = max(resid, float(np.abs(lp.a_eq @ x_here - lp.b_eq).max()))
    if lp.a_ub is not None:
        resid = max(resid, float(np.maximum(lp.a_ub @ x_here - lp.b_ub, 0.0).max()))
    for j, (lo, hi) in enumerate(lp.bounds):
        if lo > -_INF:
            resid = max(resid, lo - x_here[j])
        if hi < _INF:
            resid = max(resid, x_here[j] - hi)
    if resid > 1e-6:
        raise LpError(f"optimal basis fails feasibility re-check ({resid:.3e})")

    value = float(c_orig @ x_here)
    dual_objective = float(sgn * (y @ bvec + const)) if m > 0 else float(sgn * const)
    return LpResult("optimal", value, x_here, dual_objective, None, iters)


def _farkas_certificate(lp: LinearProgram, y_std: np.ndarray, flips: np.ndarray,
                        row_tag: list) -> dict:
    """Aggregate phase-1 duals into an original-space infeasibility witness.

    The certificate is the functional phi(x) = y_eq.A_eq x + y_ub.A_ub x
    + sum_j y_bnd[j] x_j with y_ub, y_bnd >= 0, whose maximum of the
    right-hand sides is strictly below the minimum of phi over the bound box.
    Verified numerically here; on failure the raw multipliers are returned.
    """
    n = lp.n_vars
    m_eq = lp.a_eq.shape[0] if lp.a_eq is not None else 0
    m_ub = lp.a_ub.shape[0] if lp.a_ub is not None else 0
    y_eq = np.zeros(m_eq)
    y_ub = np.zeros(m_ub)
    y_bnd = np.zeros(n)
    for k, tag in enumerate(row_tag):
        val = -flips[k] * y_std[k]
        if tag[0] == "eq":
            y_eq[tag[1]] = val
        elif tag[0] == "ub":
            y_ub[tag[1]] = val
        else:
            y_bnd[tag[1]] = val
    for sign in (1.0, -1.0):
        ye, yu, yb = sign * y_eq, sign * y_ub, sign * y_bnd
        if np.any(yu < -1e-12) or np.any(yb < -1e-12):
            continue
        yu = np.maximum(yu, 0.0)
        yb = np.maximum(yb, 0.0)
        a = np.zeros(n)
        if m_eq:
            a += ye @ lp.a_eq
        if m_ub:
            a += yu @ lp.a_ub
        a += yb
        beta = 0.0
        if m_eq:
            beta += float(ye @ lp.b_eq)
        if m_ub:
            beta += float(yu @ lp.b_ub)
        beta += sum(yb[j] * lp.bounds[j][1] for j in range(n) if yb[j] > 0)
        box_min = 0.0
        ok = True
        for j in range(n):
            lo, hi = lp.bounds[j]
            if a[j] > 1e-12:
                if lo == -_INF:
                    ok = False
                    break
                box_min += a[j] * lo
            elif a[j] < -1e-12:
                if hi == _INF:
                    ok = False
                    break
                box_min += a[j] * hi
        if ok and box_min > beta + 1e-10:
            return {"kind": "farkas", "y_eq": ye, "y_ub": yu, "y_bounds": yb,
                    "gap": box_min - beta}
    return {"kind": "farkas_raw", "y": y_std.copy()}


def support_function(weights, probs, lower, upper):
    """Maximize E[f W | block] over {m0 <= f <= M0, E[f | block] = 1}.

    Returns (value, f). Greedy continuous knapsack: start every atom at its
    lower bound and spend the remaining budget on atoms in decreasing payoff
    order (ties broken by atom index), so at most one atom ends fractional.
    """
    w = np.asarray(weights, dtype=float)
    p = np.asarray(probs, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if not (w.shape == p.shape == lo.shape == hi.shape) or w.ndim != 1:
        raise LpError("support_function inputs must be equal-length vectors")
    if np.any(p <= 0):
        raise LpError("block probabilities must be positive")
    if np.any(lo > hi + 1e-12):
        raise InfeasibleRegionError("lower bound exceeds upper bound")
    total = float(p.sum())
    need = total - float(p @ lo)
    room = float(p @ hi) - total
    if need < -1e-12 or room < -1e-12:
        raise InfeasibleRegionError(
            f"budget 1 outside [{(p @ lo) / total:.6g}, {(p @ hi) / total:.6g}]")

    f = lo.copy()
    budget = max(need, 0.0)
    order = np.lexsort((np.arange(w.size), -w))
    for j in order:
        if budget <= 0.0:
            break
        step = min(hi[j] - lo[j], budget / p[j])
        f[j] += step
        budget -= step * p[j]
    value = float(p @ (f * w)) / total
    return value, f
