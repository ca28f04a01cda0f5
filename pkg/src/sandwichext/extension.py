"""Maximal extension of a convex monotone operator between bounds.

Everything happens per coarse block. The conjugate of an operator at a
density f is the optimal value of a small epigraph LP over the operator's
domain; unbounded means the density prices some domain payoff inconsistently
and its penalty is +infinity.

The extension of an operator x to all fine-level payoffs, constrained to the
densities sitting between a bound pair, is computed by one LP per block:

    maximize  E[f X | block] - sum_j theta_j c_j(block)
    over      f in the block's density polytope, theta in the simplex,
              E[f Y | block] = E[(sum_j theta_j f_j) Y | block]  for Y in L

The theta variables price the conjugate: for fixed f the inner minimum of
sum theta_j c_j over matching theta equals the conjugate of x at f by LP
duality, so the program computes sup_f {E[f X | block] - x*(f)}. Taking the
LP dual reproduces, row by row, the inf-convolution program
min_{Y in L} {x(Y) + S(X - Y)} with S the polytope support function, which is
why this route is the single-LP form of that identity; the max form is the
one shipped because its solution vector is the attaining density itself.
The tests cross-check the value against a solver-free grid minimization of
the inf-convolution and a brute-force dual enumeration before trusting it.

Attainment selects, among the optimal (f, theta), a deterministic point of
the optimal face: every density-side slack is first tested for being an
implicit equality on the face, then the minimum of the remaining slacks is
maximized. When the minorant is non-degenerate the polytope itself keeps
every feasible density strictly positive, so the attained density is too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, solve_lp
from .operators import (BlockPolytope, BoundPair, DensityPolytope, CheckEntry,
                        PolyhedralOperator, PolytopeError, SandwichReport,
                        ValidationReport, _block_iter, _segment_iter,
                        check_sandwich)
from .spaces import FilteredSpace, LevelError, RandomVariable

CONJ_TOL = 1e-9
FACE_TOL = 1e-9
PIN_TOL = 1e-9
EQ_RANK_TOL = 1e-10


class DensityError(ValueError):
    """Not a density: negative values or block expectation away from one."""


class SandwichViolation(ValueError):
    """Extension requested for bounds that do not dominate the operator."""

    def __init__(self, report: SandwichReport):
        super().__init__(
            f"sandwich condition fails on block {report.block}, piece "
            f"{report.piece} (gap {report.gap:.3e})")
        self.report = report


@dataclass(frozen=True, eq=False)
class PenaltyValue:
    """Extended-real penalty per coarse block; +inf marks an unbounded conjugate."""

    space: FilteredSpace
    level_a: int
    by_block: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.by_block, dtype=float).copy()
        vals.setflags(write=False)
        object.__setattr__(self, "by_block", vals)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.by_block)))

    def atomwise(self) -> np.ndarray:
        out = np.empty(self.space.n_atoms)
        for a, block in enumerate(self.space.blocks(self.level_a)):
            out[list(block)] = self.by_block[a]
        return out

    def as_rv(self) -> RandomVariable:
        if not self.finite:
            raise ValueError("penalty is +inf on some block")
        return self.space.rv(self.atomwise(), self.level_a)


def _check_density(space: FilteredSpace, level_a: int, level_b: int,
                   f: RandomVariable, tol: float = CONJ_TOL):
    if f.level > level_b:
        raise DensityError(
            f"density declared at level {f.level}, finer than {level_b}")
    if float(f.values.min()) < -tol:
        raise DensityError(f"density has negative atom {float(f.values.min()):.3e}")
    for a, ix, p, pa in _block_iter(space, level_a):
        ev = float(p @ f.values[ix]) / pa
        if abs(ev - 1.0) > tol:
            raise DensityError(
                f"block {a} expectation {ev:.12g} differs from 1")


def conjugate(op: PolyhedralOperator, f: RandomVariable,
              check: bool = True) -> PenaltyValue:
    """Largest gap between pricing by f and the operator, over the domain.

    Per block this is sup over domain payoffs X of E[f X | block] - x(X),
    an epigraph LP in the block coordinates of X; +inf when unbounded.
    The result is nonnegative because X = 0 is always admissible.
    """
    space = op.space
    if check:
        _check_density(space, op.level_a, op.level_b, f)
    vals = np.empty(len(space.blocks(op.level_a)))
    for a, ix, p, pa in _block_iter(space, op.level_a):
        bmat = op.domain.block_bases[a]
        d = bmat.shape[1]
        pw = p / pa
        obj = np.append(bmat.T @ (pw * f.values[ix]), -1.0)
        a_ub = []
        b_ub = []
        for pc in op.pieces:
            a_ub.append(np.append(bmat.T @ (pw * pc.density.values[ix]), -1.0))
            b_ub.append(pc.penalty.values[ix[0]])
        res = solve_lp(LinearProgram(
            c=obj, sense="max", a_ub=np.asarray(a_ub), b_ub=np.asarray(b_ub),
            bounds=[(-math.inf, math.inf)] * (d + 1)))
        if res.status == "unbounded":
            vals[a] = math.inf
        elif res.status == "optimal":
            vals[a] = max(res.value, 0.0)
        else:
            raise RuntimeError(f"conjugate LP infeasible on block {a}")
    return PenaltyValue(space, op.level_a, vals)


# --------------------------------------------------------------------------
# density polytope construction


def _block_rows(bounds: BoundPair, reps: np.ndarray, sp: np.ndarray, pa: float):
    """H-description pieces over z = (f, lam, mu) for one block.

    Density variables are per level_b segment; reps index a representative
    atom per segment and sp carries segment probabilities.
    """
    n = len(reps)
    if bounds.kind == "linear":
        n_lift = 0
        var_bounds = [(float(bounds.m0.values[i]), float(bounds.M0.values[i]))
                      for i in reps]
        a_eq = np.asarray(sp, dtype=float)[None, :]
        b_eq = np.array([pa])
        a_ub = None
        b_ub = None
    else:
        km = np.stack([k.values[reps] for k in bounds.m_kernels]).T
        kM = np.stack([k.values[reps] for k in bounds.M_kernels]).T
        nm, nM = km.shape[1], kM.shape[1]
        n_lift = nm + nM
        var_bounds = [(0.0, math.inf)] * n + [(0.0, math.inf)] * n_lift
        a_eq = np.zeros((3, n + n_lift))
        a_eq[0, :n] = sp
        a_eq[1, n:n + nm] = 1.0
        a_eq[2, n + nm:] = 1.0
        b_eq = np.array([pa, 1.0, 1.0])
        rows = []
        rhs = []
        for i in range(n):
            row = np.zeros(n + n_lift)
            row[i] = -1.0
            row[n:n + nm] = km[i]
            rows.append(row)          # sum_k lam_k km[i,k] <= f_i
            rhs.append(0.0)
            row = np.zeros(n + n_lift)
            row[i] = 1.0
            row[n + nm:] = -kM[i]
            rows.append(row)          # f_i <= sum_k mu_k kM[i,k]
            rhs.append(0.0)
        a_ub = np.asarray(rows)
        b_ub = np.asarray(rhs)
    return n_lift, a_eq, b_eq, a_ub, b_ub, var_bounds


def density_set(bounds: BoundPair, space: FilteredSpace | None = None) -> DensityPolytope:
    """Build the per-block density polytope and certify nonemptiness.

    Raises PolytopeError naming the first empty block.
    """
    space = space or bounds.space
    blocks = []
    for a, ix, segs, reps, sp, pa in _segment_iter(
            space, bounds.level_b, bounds.level_a):
        n = len(segs)
        n_lift, a_eq, b_eq, a_ub, b_ub, var_bounds = _block_rows(bounds, reps, sp, pa)
        res = solve_lp(LinearProgram(
            c=np.zeros(n + n_lift), sense="min", a_eq=a_eq, b_eq=b_eq,
            a_ub=a_ub, b_ub=b_ub, bounds=var_bounds))
        if res.status != "optimal":
            raise PolytopeError(
                f"density polytope empty on block {a} of level {bounds.level_a}",
                level_a=bounds.level_a, block=a)
        blocks.append(BlockPolytope(
            atoms=tuple(ix), segments=tuple(tuple(s) for s in segs),
            seg_probs=sp, n_f=n, n_lift=n_lift,
            a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub,
            var_bounds=tuple(var_bounds), feasible_point=res.x))
    return DensityPolytope(bounds=bounds, blocks=tuple(blocks))


# --------------------------------------------------------------------------
# the extension itself


@dataclass(eq=False)
class _BlockProgram:
    """Constraint template over z = (f, lift, theta) for one block.

    Density variables are per level_b segment of the block; ix lists every
    atom (for writing block-constant values back), reps one atom per segment.
    """

    ix: list[int]
    segs: list[list[int]]
    reps: np.ndarray
    sp: np.ndarray
    pa: float
    d: int
    n: int
    n_lift: int
    n_pieces: int
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray | None
    b_ub: np.ndarray | None
    var_bounds: list[tuple[float, float]]
    penalties: np.ndarray
    bmat: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.n + self.n_lift + self.n_pieces

    def objective(self, x_reps: np.ndarray) -> np.ndarray:
        c = np.zeros(self.n_vars)
        c[:self.n] = (self.sp / self.pa) * x_reps
        c[self.n + self.n_lift:] = -self.penalties
        return c


@dataclass(frozen=True, eq=False)
class Attainment:
    density: RandomVariable
    value: RandomVariable
    penalty: PenaltyValue


@dataclass(eq=False)
class ExtendedOperator:
    """The maximal extension of ``base`` dominated by ``bounds``.

    Callable on every fine-level payoff; restriction to the original domain
    reproduces the base operator. Evaluation and attainment results are
    memoized per payoff vector; instances are not safe for concurrent
    mutation and should be used from one thread at a time.
    """

    base: PolyhedralOperator
    bounds: BoundPair
    polytope: DensityPolytope
    _programs: list[_BlockProgram] = field(default_factory=list, repr=False)
    _eval_cache: dict = field(default_factory=dict, repr=False)
    _attain_cache: dict = field(default_factory=dict, repr=False)

    @property
    def space(self) -> FilteredSpace:
        return self.base.space

    @property
    def level_a(self) -> int:
        return self.base.level_a

    @property
    def level_b(self) -> int:
        return self.base.level_b

    def _key(self, X: RandomVariable) -> bytes:
        return X.values.tobytes()

    def evaluate(self, X: RandomVariable) -> RandomVariable:
        if X.level > self.level_b:
            raise LevelError("payoff finer than the extension level")
        key = self._key(X)
        hit = self._eval_cache.get(key)
        if hit is not None:
            return hit
        vals = np.empty(self.space.n_atoms)
        for prog in self._programs:
            vals[prog.ix] = self._solve_block(prog, X.values[prog.reps])[0]
        out = self.space.rv(vals, self.level_a)
        self._eval_cache[key] = out
        return out

    __call__ = evaluate

    def _solve_block(self, prog: _BlockProgram, x_reps: np.ndarray):
        res = solve_lp(LinearProgram(
            c=prog.objective(x_reps), sense="max",
            a_eq=prog.a_eq, b_eq=prog.b_eq, a_ub=prog.a_ub, b_ub=prog.b_ub,
            bounds=prog.var_bounds))
        if res.status != "optimal":
            raise RuntimeError(
                f"extension block program came back {res.status}; the sandwich "
                "precondition should rule this out")
        return res.value, res.x


def maximal_extension(op: PolyhedralOperator, bounds: BoundPair) -> ExtendedOperator:
    """Check the sandwich, build the polytope, assemble the block programs."""
    report = check_sandwich(op, bounds)
    if not report.holds:
        raise SandwichViolation(report)
    polytope = density_set(bounds)
    ext = ExtendedOperator(base=op, bounds=bounds, polytope=polytope)
    space = op.space
    for (a, ix, segs, reps, sp, pa), bp in zip(
            _segment_iter(space, op.level_b, op.level_a), polytope.blocks):
        rel = [ix.index(r) for r in reps]
        bmat = op.domain.block_bases[a][rel, :]       # segment basis values
        d = bmat.shape[1]
        n = bp.n_f
        nj = len(op.pieces)
        nv = n + bp.n_lift + nj
        fmat = np.stack([pc.density.values[reps] for pc in op.pieces]).T  # n x J
        pens = np.array([pc.penalty.values[ix[0]] for pc in op.pieces])
        # equalities: polytope rows, theta simplex, subspace matching
        eq_rows = [np.concatenate([row, np.zeros(nj)]) for row in bp.a_eq]
        eq_rhs = list(bp.b_eq)
        theta_row = np.zeros(nv)
        theta_row[n + bp.n_lift:] = 1.0
        eq_rows.append(theta_row)
        eq_rhs.append(1.0)
        wb = bmat.T * sp[None, :]                    # d x n, rows <B_k, sp . >
        match_f = wb
        match_th = -(wb @ fmat)                      # d x J
        for k in range(d):
            row = np.zeros(nv)
            row[:n] = match_f[k]
            row[n + bp.n_lift:] = match_th[k]
            eq_rows.append(row)
            eq_rhs.append(0.0)
        # the matching row along the constant direction restates budget and
        # simplex rows up to float noise; near-dependent equalities poison
        # simplex bases, so only an independent subset is kept
        eq_mat = np.asarray(eq_rows)
        eq_vec = np.asarray(eq_rhs)
        keep: list[int] = []
        for r in range(eq_mat.shape[0]):
            if np.linalg.matrix_rank(eq_mat[keep + [r]], tol=EQ_RANK_TOL) > len(keep):
                keep.append(r)
        eq_mat = eq_mat[keep]
        eq_vec = eq_vec[keep]
        if bp.a_ub is not None:
            ub_rows = np.hstack([bp.a_ub, np.zeros((bp.a_ub.shape[0], nj))])
            ub_rhs = bp.b_ub
        else:
            ub_rows = None
            ub_rhs = None
        var_bounds = list(bp.var_bounds) + [(0.0, math.inf)] * nj
        ext._programs.append(_BlockProgram(
            ix=ix, segs=[list(s) for s in segs], reps=reps, sp=sp, pa=pa,
            d=d, n=n, n_lift=bp.n_lift, n_pieces=nj,
            a_eq=eq_mat, b_eq=eq_vec,
            a_ub=ub_rows, b_ub=ub_rhs, var_bounds=var_bounds,
            penalties=pens, bmat=bmat))
    return ext


def attain(ext: ExtendedOperator, X: RandomVariable) -> Attainment:
    """Optimal density with its penalty, centered on the optimal face.

    The returned density satisfies, per block,
    E[f_X X | block] - penalty = extension value, and the penalty equals the
    conjugate of the base operator at f_X.
    """
    if X.level > ext.level_b:
        raise LevelError("payoff finer than the extension level")
    key = ext._key(X)
    hit = ext._attain_cache.get(key)
    if hit is not None:
        return hit
    space = ext.space
    f_full = np.empty(space.n_atoms)
    v_full = np.empty(space.n_atoms)
    pen = np.empty(len(space.blocks(ext.level_a)))
    for a, prog in enumerate(ext._programs):
        x_reps = X.values[prog.reps]
        value, z = ext._solve_block(prog, x_reps)
        zc = _center_on_face(prog, x_reps, value, z)
        for w, seg in enumerate(prog.segs):
            f_full[seg] = zc[w]
        v_full[prog.ix] = value
        pen[a] = float(prog.penalties @ zc[prog.n + prog.n_lift:])
    out = Attainment(
        density=space.rv(f_full, ext.level_b),
        value=space.rv(v_full, ext.level_a),
        penalty=PenaltyValue(space, ext.level_a, pen))
    ext._attain_cache[key] = out
    return out


def _center_on_face(prog: _BlockProgram, x_reps: np.ndarray, value: float,
                    z_opt: np.ndarray) -> np.ndarray:
    """Deterministic relative-interior point of the density side of the face.

    The face is the optimal set pinned by objective >= value - PIN_TOL. Each
    density-side slack is maximized once to find the implicit equalities;
    the minimum of the free slacks is then maximized. Runs on an augmented
    variable vector (z, t).
    """
    nv = prog.n_vars
    obj = prog.objective(x_reps)
    # slack descriptors: (row over z, rhs, sense) meaning row.z <= rhs,
    # slack = rhs - row.z; the bound-box slacks are expressed as rows here
    slats = []
    for i in range(prog.n):
        lo, hi = prog.var_bounds[i]
        e = np.zeros(nv)
        e[i] = 1.0
        if lo > -math.inf:
            slats.append((-e, -lo))
        if hi < math.inf:
            slats.append((e, hi))
    if prog.a_ub is not None:
        for row, rhs in zip(prog.a_ub, prog.b_ub):
            slats.append((row, rhs))

    def face_lp(extra_obj, t_rows):
        # variables (z, t); face rows keep z optimal, t_rows couple t
        n_all = nv + 1
        a_eq = np.hstack([prog.a_eq, np.zeros((prog.a_eq.shape[0], 1))])
        a_ub = [np.append(-obj, 0.0)]
        b_ub = [-(value - PIN_TOL)]
        if prog.a_ub is not None:
            for row, rhs in zip(prog.a_ub, prog.b_ub):
                a_ub.append(np.append(row, 0.0))
                b_ub.append(rhs)
        for row, rhs, use_t in t_rows:
            a_ub.append(np.append(row, use_t))
            b_ub.append(rhs)
        bounds = list(prog.var_bounds) + [(0.0, math.inf)]
        res = solve_lp(LinearProgram(
            c=np.asarray(extra_obj), sense="max", a_eq=a_eq, b_eq=prog.b_eq,
            a_ub=np.asarray(a_ub), b_ub=np.asarray(b_ub), bounds=bounds))
        if res.status != "optimal":
            raise RuntimeError(f"centering LP came back {res.status}")
        return res

    free = []
    for row, rhs in slats:
        c = np.append(-row, 0.0)     # maximize slack = rhs - row.z
        res = face_lp(c, [])
        if res.value + rhs >= FACE_TOL:
            free.append((row, rhs))
    if not free:
        return z_opt
    t_rows = [(row, rhs, 1.0) for row, rhs in free]   # row.z + t <= rhs
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    res = face_lp(c, t_rows)
    return res.x[:nv]


def minimal_penalty(ext: ExtendedOperator, f: RandomVariable,
                    tol: float = 1e-9) -> PenaltyValue:
    """Conjugate of the extension over all fine-level payoffs.

    The extension is the inf-convolution of the base operator with the
    polytope support function, so its conjugate is the base conjugate plus
    the polytope indicator: conjugate(base, f) where f is feasible, +inf on
    blocks where it is not.
    """
    space = ext.space
    _check_density(space, ext.level_a, ext.base.level_b, f)
    base = conjugate(ext.base, f, check=False)
    vals = np.array(base.by_block)
    for a, bp in enumerate(ext.polytope.blocks):
        if not ext.polytope.contains_on_block(a, f.values[list(bp.atoms)], tol):
            vals[a] = math.inf
    return PenaltyValue(space, ext.level_a, vals)


def verify_representation(op: PolyhedralOperator, n_payoffs: int = 20,
                          n_densities: int = 8, seed: int = 0,
                          tol: float = 1e-7) -> ValidationReport:
    """Reconstruct the operator from conjugates of a finite density family.

    The family is the operator's own piece densities plus random per-block
    convex mixtures of them. Each candidate scores at most the operator
    value, and the best candidate reaches it: with minimal penalties the
    pieces are self-representing.
    """
    space = op.space
    rng = np.random.default_rng(seed)
    family = [pc.density for pc in op.pieces]
    n_pieces = len(op.pieces)
    for _ in range(n_densities):
        mixed = np.empty(space.n_atoms)
        for a, ix, p, pa in _block_iter(space, op.level_a):
            w = rng.dirichlet(np.ones(n_pieces))
            mixed[ix] = sum(wj * pc.density.values[ix]
                            for wj, pc in zip(w, op.pieces))
        family.append(space.rv(mixed, op.level_b))
    penalties = [conjugate(op, f) for f in family]

    worst_gap = 0.0      # reconstruction error
    worst_over = 0.0     # candidate exceeding the operator
    for _ in range(n_payoffs):
        coeff = rng.normal(0.0, 1.0, op.domain.dim)
        xv = sum(ck * b.values for ck, b in zip(coeff, op.domain.basis))
        X = space.rv(xv, op.level_b)
        target = op.evaluate(X, check_domain=False)
        for a, ix, p, pa in _block_iter(space, op.level_a):
            best = -math.inf
            for f, pv in zip(family, penalties):
                if not math.isfinite(pv.by_block[a]):
                    continue
                score = float(p @ (f.values[ix] * X.values[ix])) / pa \
                    - pv.by_block[a]
                worst_over = max(worst_over, score - target.values[ix[0]])
                best = max(best, score)
            worst_gap = max(worst_gap, abs(best - target.values[ix[0]]))

    # splice: conjugates are local, so mixing two densities blockwise mixes
    # their penalties exactly
    splice_exact = True
    if len(family) >= 2:
        f1, f2 = family[0], family[1]
        n_blocks = len(space.blocks(op.level_a))
        pick = rng.integers(0, 2, n_blocks)
        mixed = np.empty(space.n_atoms)
        for a, ix, _, _ in _block_iter(space, op.level_a):
            mixed[ix] = (f1 if pick[a] == 0 else f2).values[ix]
        pv = conjugate(op, space.rv(mixed, op.level_b))
        expected = np.where(pick == 0, penalties[0].by_block,
                            penalties[1].by_block)
        splice_exact = np.array_equal(pv.by_block, expected)

    entries = (
        CheckEntry("dual_reconstruction", worst_gap <= tol,
                   f"max gap {worst_gap:.3e} over {n_payoffs} payoffs"),
        CheckEntry("candidates_dominated", worst_over <= tol,
                   f"max overshoot {worst_over:.3e}"),
        CheckEntry("conjugate_splice_exact", splice_exact,
                   "blockwise density splice matches blockwise penalties"),
    )
    return ValidationReport(entries)
