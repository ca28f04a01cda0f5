"""Convex monotone operators in max-affine form, and operator bounds.

An operator here is a finite family of pieces, each a nonnegative density
with unit conditional expectation onto the coarse level plus a nonnegative
coarse-level penalty; its value on a payoff is, per coarse block, the best
piece score E[f_j X | block] - c_j(block). Monotonicity, convexity, lower
semicontinuity, locality with respect to coarse indicators, and projection
onto coarse payoffs (when the per-block minimal penalty is zero) all follow
from this shape; ``validate_operator`` reports which of the defining data
constraints actually hold for a given instance.

Bounds come in two kinds. A linear pair evaluates through a single pair of
kernels (m0, M0); a polyhedral pair takes a minimum of kernels below and a
maximum above, superlinear and sublinear respectively on the positive cone.

``check_sandwich`` decides, exactly, whether a bound pair dominates the
operator in the sandwich sense: m(Z) + x(X) <= M(Y) whenever Z + X <= Y with
Y, Z nonnegative and X in the domain. The inequality system is positively
homogeneous apart from the penalties, so it holds if and only if, per block
and piece, a normalized LP has optimal value zero; a strictly negative value
scales into an explicit witness triple.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, solve_lp
from .spaces import FilteredSpace, LevelError, RandomVariable, cond_expectation
from .subspaces import Subspace

VALUE_TOL = 1e-9
DATA_TOL = 1e-12


class DomainError(ValueError):
    """Payoff outside the operator's declared domain."""


class BoundsError(ValueError):
    """Structurally invalid bound pair."""


class PolytopeError(ValueError):
    """Empty density region; carries the offending block."""

    def __init__(self, message: str, level_a: int | None = None,
                 block: int | None = None):
        super().__init__(message)
        self.level_a = level_a
        self.block = block


def _block_iter(space: FilteredSpace, level_a: int):
    """Yield (block index, atom list, atom probs, block prob)."""
    for a, block in enumerate(space.blocks(level_a)):
        ix = list(block)
        p = space.probs[ix]
        yield a, ix, p, float(p.sum())


def _segment_iter(space: FilteredSpace, level_b: int, level_a: int):
    """Yield, per level_a block, its decomposition into level_b blocks.

    Densities and test payoffs for a (level_a, level_b) operator live at
    level_b, so LP variables are indexed by these segments rather than by
    finest atoms. Yields (block index, atom list, segments as atom lists,
    representative atom per segment, segment probs, block prob).
    """
    seg_of = {}
    for seg in space.blocks(level_b):
        seg_of[seg[0]] = list(seg)
    for a, block in enumerate(space.blocks(level_a)):
        ix = list(block)
        segs = [seg_of[w] for w in ix if w in seg_of]
        reps = np.array([s[0] for s in segs])
        sp = np.array([float(space.probs[s].sum()) for s in segs])
        yield a, ix, segs, reps, sp, float(space.probs[ix].sum())


@dataclass(frozen=True, eq=False)
class Piece:
    """One max-affine piece: density at the fine level, penalty at the coarse."""

    density: RandomVariable
    penalty: RandomVariable


@dataclass(frozen=True, eq=False)
class PolyhedralOperator:
    domain: Subspace
    pieces: tuple[Piece, ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("an operator needs at least one piece")
        object.__setattr__(self, "pieces", tuple(self.pieces))
        for pc in self.pieces:
            if pc.density.level > self.domain.level_b:
                raise LevelError("piece density finer than the domain level")
            if pc.penalty.level > self.domain.level_a:
                raise LevelError("piece penalty must be coarse-level measurable")

    @property
    def space(self) -> FilteredSpace:
        return self.domain.space

    @property
    def level_a(self) -> int:
        return self.domain.level_a

    @property
    def level_b(self) -> int:
        return self.domain.level_b

    def scores(self, X: RandomVariable) -> np.ndarray:
        """Per-block piece scores E[f_j X | block] - c_j(block); shape (blocks, pieces)."""
        space = self.space
        out = np.empty((len(space.blocks(self.level_a)), len(self.pieces)))
        for a, ix, p, pa in _block_iter(space, self.level_a):
            for j, pc in enumerate(self.pieces):
                ev = float(p @ (pc.density.values[ix] * X.values[ix])) / pa
                out[a, j] = ev - pc.penalty.values[ix[0]]
        return out

    def evaluate(self, X: RandomVariable, check_domain: bool = True) -> RandomVariable:
        """Best piece score per coarse block."""
        if check_domain and not self.domain.contains(X):
            raise DomainError("payoff is not in the operator's domain")
        sc = self.scores(X)
        vals = np.empty(self.space.n_atoms)
        for a, ix, _, _ in _block_iter(self.space, self.level_a):
            vals[ix] = sc[a].max()
        return self.space.rv(vals, self.level_a)


@dataclass(frozen=True)
class CheckEntry:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[CheckEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[CheckEntry]:
        return [e for e in self.entries if not e.passed]


def validate_operator(op: PolyhedralOperator) -> ValidationReport:
    """Report the data constraints behind monotonicity and projection.

    Monotonicity needs nonnegative densities; consistency of conditioning
    needs unit block expectations; projection onto coarse payoffs needs the
    per-block minimum penalty to vanish and nonnegative penalties keep the
    operator dominated by its own unpenalized pieces. Convexity, lower
    semicontinuity and locality are structural for the max-affine shape and
    are reported as such.
    """
    space = op.space
    entries = []
    worst_neg = min(float(pc.density.values.min()) for pc in op.pieces)
    entries.append(CheckEntry(
        "densities_nonnegative", worst_neg >= -DATA_TOL, f"min density {worst_neg:.3e}"))
    worst_dev = 0.0
    for pc in op.pieces:
        ce = cond_expectation(space, pc.density, op.level_a)
        worst_dev = max(worst_dev, float(np.abs(ce.values - 1.0).max()))
    entries.append(CheckEntry(
        "unit_block_expectation", worst_dev <= VALUE_TOL, f"max |E[f|A]-1| {worst_dev:.3e}"))
    pen_min = min(float(pc.penalty.values.min()) for pc in op.pieces)
    entries.append(CheckEntry(
        "penalties_nonnegative", pen_min >= -DATA_TOL, f"min penalty {pen_min:.3e}"))
    worst_floor = 0.0
    for a, ix, _, _ in _block_iter(space, op.level_a):
        floor = min(pc.penalty.values[ix[0]] for pc in op.pieces)
        worst_floor = max(worst_floor, abs(floor))
    entries.append(CheckEntry(
        "zero_penalty_floor", worst_floor <= VALUE_TOL,
        f"max per-block min penalty {worst_floor:.3e}"))
    one = space.rv(np.ones(space.n_atoms), 0)
    entries.append(CheckEntry(
        "constants_in_domain", op.domain.contains(one), ""))
    entries.append(CheckEntry(
        "convex_lsc_local", True,
        "structural for max-affine pieces on a finite space"))
    return ValidationReport(tuple(entries))


# --------------------------------------------------------------------------
# bound pairs


@dataclass(frozen=True, eq=False)
class BoundPair:
    """Superlinear minorant and sublinear majorant on the positive cone.

    kind "linear": m(X) = E[m0 X | A], M(X) = E[M0 X | A].
    kind "polyhedral": m is the blockwise minimum and M the blockwise maximum
    of kernel expectations E[k X | A].

    Regularity (continuity along monotone sequences) is automatic on a finite
    space and recorded as the constant ``regular``.
    """

    space: FilteredSpace
    level_b: int
    level_a: int
    kind: str
    m_kernels: tuple[RandomVariable, ...]
    M_kernels: tuple[RandomVariable, ...]
    regular: bool = field(default=True, init=False)

    def __post_init__(self):
        self.space.check_level(self.level_b)
        self.space.check_level(self.level_a)
        if self.level_a > self.level_b:
            raise BoundsError("level_a must be at least as coarse as level_b")
        if self.kind not in ("linear", "polyhedral"):
            raise BoundsError(f"unknown kind {self.kind!r}")
        if not self.m_kernels or not self.M_kernels:
            raise BoundsError("kernels must be nonempty")
        for k in (*self.m_kernels, *self.M_kernels):
            if k.level > self.level_b:
                raise LevelError("kernel finer than level_b")
            if float(k.values.min()) < -DATA_TOL:
                raise BoundsError("kernels must be nonnegative")
        if self.kind == "linear":
            if len(self.m_kernels) != 1 or len(self.M_kernels) != 1:
                raise BoundsError("linear kind takes exactly one kernel per side")
            gap = self.M_kernels[0].values - self.m_kernels[0].values
            if float(gap.min()) < -DATA_TOL:
                raise BoundsError("m0 must not exceed M0")
        else:
            self._check_dominance()

    def _check_dominance(self):
        # exact per-block test that min-of-kernels <= max-of-kernels on the
        # positive cone of level_b payoffs: minimize the epigraph gap over
        # the segment simplex
        for a, ix, segs, reps, sp, pa in _segment_iter(
                self.space, self.level_b, self.level_a):
            km = np.stack([k.values[reps] for k in self.m_kernels])
            kM = np.stack([k.values[reps] for k in self.M_kernels])
            n = len(segs)
            # vars: (x in simplex, t); min t s.t. t >= <kM_i - km_j, x> for all i,j
            rows = []
            for i in range(kM.shape[0]):
                for j in range(km.shape[0]):
                    # <kM_i - km_j, x>_p - t <= 0, so t >= the (i, j) gap
                    rows.append(np.append(sp * (kM[i] - km[j]) / pa, -1.0))
            lp = LinearProgram(
                c=np.append(np.zeros(n), 1.0), sense="min",
                a_eq=[np.append(np.ones(n), 0.0)], b_eq=[1.0],
                a_ub=rows, b_ub=[0.0] * len(rows),
                bounds=[(0.0, np.inf)] * n + [(-np.inf, np.inf)])
            res = solve_lp(lp)
            if res.status != "optimal" or res.value < -VALUE_TOL:
                raise BoundsError(
                    f"minorant exceeds majorant on block {a} of level {self.level_a}"
                    f" (gap {res.value:.3e})")

    @classmethod
    def linear(cls, space: FilteredSpace, level_b: int, level_a: int,
               m0: RandomVariable, M0: RandomVariable) -> "BoundPair":
        return cls(space, level_b, level_a, "linear", (m0,), (M0,))

    @classmethod
    def polyhedral(cls, space: FilteredSpace, level_b: int, level_a: int,
                   m_kernels, M_kernels) -> "BoundPair":
        return cls(space, level_b, level_a, "polyhedral",
                   tuple(m_kernels), tuple(M_kernels))

    @property
    def m0(self) -> RandomVariable:
        if self.kind != "linear":
            raise BoundsError("m0 is only defined for the linear kind")
        return self.m_kernels[0]

    @property
    def M0(self) -> RandomVariable:
        if self.kind != "linear":
            raise BoundsError("M0 is only defined for the linear kind")
        return self.M_kernels[0]

    def _apply(self, X: RandomVariable, kernels, agg) -> RandomVariable:
        vals = np.empty(self.space.n_atoms)
        for a, ix, p, pa in _block_iter(self.space, self.level_a):
            scores = [float(p @ (k.values[ix] * X.values[ix])) / pa for k in kernels]
            vals[ix] = agg(scores)
        return self.space.rv(vals, self.level_a)

    def minorant(self, X: RandomVariable) -> RandomVariable:
        """m(X); superlinear on the positive cone."""
        return self._apply(X, self.m_kernels, min)

    def majorant(self, X: RandomVariable) -> RandomVariable:
        """M(X); sublinear on the positive cone."""
        return self._apply(X, self.M_kernels, max)

    def atom_floor(self) -> np.ndarray:
        """Per-atom lower envelope of the minorant kernels."""
        return np.min(np.stack([k.values for k in self.m_kernels]), axis=0)

    def atom_ceil(self) -> np.ndarray:
        return np.max(np.stack([k.values for k in self.M_kernels]), axis=0)


def check_nondegenerate(bounds: BoundPair, tol: float = DATA_TOL) -> bool:
    """True iff E[m(1_w)] > 0 for every finest atom w."""
    space = bounds.space
    for w in range(space.n_atoms):
        ind = np.zeros(space.n_atoms)
        ind[w] = 1.0
        ev = bounds.minorant(space.rv(ind, space.last_level))
        if float(space.probs @ ev.values) <= tol:
            return False
    return True


def check_mM1(family: dict, space: FilteredSpace, grid,
              n_samples: int = 64, seed: int = 0) -> ValidationReport:
    """Weak time-consistency of a bounds family over a time grid.

    ``family`` maps every grid pair (s, t), s < t, to a BoundPair with
    level_b = t and level_a = s. The checks are
    m_{r,s}(m_{s,t}(X)) >= m_{r,t}(X) and M_{r,s}(M_{s,t}(X)) <= M_{r,t}(X)
    for nonnegative X, plus non-degeneracy of the longest minorant. For
    all-linear families the block indicators of level t span the positive
    cone linearly, so testing them is exact; any polyhedral member makes the
    verdict sampled and extra random nonnegative payoffs are drawn.
    """
    grid = [space.check_level(g) for g in grid]
    if sorted(grid) != grid or len(set(grid)) != len(grid):
        raise LevelError("grid must be strictly increasing")
    entries = []
    pairs = [(s, t) for i, s in enumerate(grid) for t in grid[i + 1:]]
    missing = [st for st in pairs if st not in family]
    entries.append(CheckEntry(
        "family_complete", not missing,
        "" if not missing else f"missing pairs {missing}"))
    if missing:
        return ValidationReport(tuple(entries))
    level_ok = all(
        family[(s, t)].level_a == s and family[(s, t)].level_b == t
        for s, t in pairs)
    entries.append(CheckEntry("pair_levels", level_ok, ""))
    if not level_ok:
        return ValidationReport(tuple(entries))

    exact = all(family[st].kind == "linear" for st in pairs)
    rng = np.random.default_rng(seed)

    def test_vectors(t: int):
        vecs = []
        for block in space.blocks(t):
            v = np.zeros(space.n_atoms)
            v[list(block)] = 1.0
            vecs.append(space.rv(v, t))
        if not exact:
            nb = len(space.blocks(t))
            for _ in range(n_samples):
                per_block = rng.uniform(0.0, 2.0, nb)
                v = np.empty(space.n_atoms)
                for b, block in enumerate(space.blocks(t)):
                    v[list(block)] = per_block[b]
                vecs.append(space.rv(v, t))
        return vecs

    worst_m = 0.0
    worst_M = 0.0
    for i, r in enumerate(grid):
        for j in range(i + 1, len(grid)):
            s = grid[j]
            for k in range(j + 1, len(grid)):
                t = grid[k]
                b_rs, b_st, b_rt = family[(r, s)], family[(s, t)], family[(r, t)]
                for X in test_vectors(t):
                    two_m = b_rs.minorant(b_st.minorant(X))
                    one_m = b_rt.minorant(X)
                    worst_m = max(worst_m, float((one_m.values - two_m.values).max()))
                    two_M = b_rs.majorant(b_st.majorant(X))
                    one_M = b_rt.majorant(X)
                    worst_M = max(worst_M, float((two_M.values - one_M.values).max()))
    tag = "exact on block indicators" if exact else f"sampled, {n_samples} draws"
    entries.append(CheckEntry(
        "minorant_weakly_consistent", worst_m <= VALUE_TOL,
        f"max violation {worst_m:.3e}; {tag}"))
    entries.append(CheckEntry(
        "majorant_weakly_consistent", worst_M <= VALUE_TOL,
        f"max violation {worst_M:.3e}; {tag}"))
    entries.append(CheckEntry(
        "long_minorant_nondegenerate",
        check_nondegenerate(family[(grid[0], grid[-1])]), ""))
    return ValidationReport(tuple(entries))


# --------------------------------------------------------------------------
# sandwich check


@dataclass(frozen=True)
class SandwichReport:
    holds: bool
    fast_path: bool = False
    block: int | None = None
    piece: int | None = None
    gap: float = 0.0
    witness: tuple[RandomVariable, RandomVariable, RandomVariable] | None = None
    # witness is (X, Z, Y): X in the domain, Z, Y >= 0, Z + X <= Y and
    # m(Z) + x(X) > M(Y) on the reported block


def check_sandwich(op: PolyhedralOperator, bounds: BoundPair) -> SandwichReport:
    """Exact sandwich test via one homogeneous LP per block and piece.

    The feasible triples form a cone, so the per-piece inequality either
    holds everywhere or scales into an arbitrarily large violation; with the
    normalization row added, optimal value zero certifies the former.
    """
    if bounds.space is not op.space:
        raise ValueError("bounds and operator live on different spaces")
    if (bounds.level_a, bounds.level_b) != (op.level_a, op.level_b):
        raise LevelError("bounds and operator live on different level pairs")
    space = op.space

    if bounds.kind == "linear":
        m0 = bounds.m0.values
        M0 = bounds.M0.values
        inside = all(
            float((pc.density.values - m0).min()) >= -DATA_TOL
            and float((M0 - pc.density.values).min()) >= -DATA_TOL
            and float(pc.penalty.values.min()) >= -DATA_TOL
            for pc in op.pieces)
        if inside:
            return SandwichReport(holds=True, fast_path=True)

    for a, ix, segs, reps, sp, pa in _segment_iter(space, op.level_b, op.level_a):
        rel = [ix.index(r) for r in reps]
        bmat = op.domain.block_bases[a][rel, :]      # segment values of the basis
        d = bmat.shape[1]
        n = len(segs)
        km = np.stack([k.values[reps] for k in bounds.m_kernels])
        kM = np.stack([k.values[reps] for k in bounds.M_kernels])
        pw = sp / pa
        for j, pc in enumerate(op.pieces):
            fj = pc.density.values[reps]
            # vars: bp(d), bm(d), Y(n), Z(n), tM, um
            nv = 2 * d + 2 * n + 2
            def seg(*parts):
                row = np.zeros(nv)
                off = 0
                for width, chunk in parts:
                    if chunk is not None:
                        row[off:off + width] = chunk
                    off += width
                return row
            c = seg((d, -(bmat.T @ (pw * fj))), (d, bmat.T @ (pw * fj)),
                    (n, None), (n, None), (1, [1.0]), (1, [1.0]))
            a_ub = []
            b_ub = []
            # Z + B(bp - bm) - Y <= 0, atomwise
            for i in range(n):
                a_ub.append(seg((d, bmat[i]), (d, -bmat[i]),
                                (n, -np.eye(n)[i]), (n, np.eye(n)[i]),
                                (1, None), (1, None)))
                b_ub.append(0.0)
            # tM >= <k, Y> for every majorant kernel
            for krow in kM:
                a_ub.append(seg((d, None), (d, None), (n, pw * krow),
                                (n, None), (1, [-1.0]), (1, None)))
                b_ub.append(0.0)
            # um >= <-k, Z> for every minorant kernel
            for krow in km:
                a_ub.append(seg((d, None), (d, None), (n, None),
                                (n, -pw * krow), (1, None), (1, [-1.0])))
                b_ub.append(0.0)
            # normalization keeps the cone program bounded
            a_ub.append(seg((d, np.ones(d)), (d, np.ones(d)),
                            (n, np.ones(n)), (n, np.ones(n)),
                            (1, None), (1, None)))
            b_ub.append(1.0)
            bnds = [(0.0, np.inf)] * (2 * d + 2 * n) + [(-np.inf, np.inf)] * 2
            res = solve_lp(LinearProgram(c=c, sense="min", a_ub=a_ub, b_ub=b_ub,
                                         bounds=bnds))
            if res.status != "optimal":
                raise RuntimeError(f"sandwich LP came back {res.status}")
            if res.value < -VALUE_TOL:
                cj = pc.penalty.values[ix[0]]
                scale = (cj + 1.0) / (-res.value)
                z = res.x
                beta = (z[:d] - z[d:2 * d]) * scale
                Yv = np.zeros(space.n_atoms)
                Zv = np.zeros(space.n_atoms)
                Xv = np.zeros(space.n_atoms)
                xb = bmat @ beta
                for w, seg in enumerate(segs):
                    Yv[seg] = z[2 * d + w] * scale
                    Zv[seg] = z[2 * d + n + w] * scale
                    Xv[seg] = xb[w]
                lb = op.level_b
                witness = (space.rv(Xv, lb), space.rv(Zv, lb), space.rv(Yv, lb))
                return SandwichReport(holds=False, block=a, piece=j,
                                      gap=float(res.value), witness=witness)
    return SandwichReport(holds=True)


# --------------------------------------------------------------------------
# density polytope (built by the extension module, used across the package)


@dataclass(frozen=True, eq=False)
class BlockPolytope:
    """H-description of the feasible densities on one coarse block.

    Density variables are indexed by the level_b segments of the block (one
    value per segment, since densities are level_b measurable); z = (f, lam,
    mu) where lam and mu are simplex multipliers for the minorant and
    majorant kernel hulls (absent for the linear kind, where the kernels
    bound f directly through the box).
    """

    atoms: tuple[int, ...]
    segments: tuple[tuple[int, ...], ...]
    seg_probs: np.ndarray
    n_f: int
    n_lift: int
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray | None
    b_ub: np.ndarray | None
    var_bounds: tuple[tuple[float, float], ...]
    feasible_point: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.n_f + self.n_lift

    @property
    def reps(self) -> list[int]:
        return [seg[0] for seg in self.segments]


@dataclass(frozen=True, eq=False)
class DensityPolytope:
    """Per-block feasible densities pinned between the bound pair.

    On each coarse block this is {f >= 0, E[f | block] = 1, and
    m(X) <= E[f X | block] <= M(X) for every nonnegative X}; the two-sided
    envelope condition reduces to the box [m0, M0] for linear bounds and to
    membership of f in (hull of minorant kernels + positives) and
    (hull of majorant kernels - positives) for polyhedral ones, expressed
    exactly through lifted simplex multipliers.
    """

    bounds: BoundPair
    blocks: tuple[BlockPolytope, ...]

    @property
    def space(self) -> FilteredSpace:
        return self.bounds.space

    @property
    def level_a(self) -> int:
        return self.bounds.level_a

    def contains_on_block(self, a: int, f_local: np.ndarray,
                          tol: float = 1e-9) -> bool:
        """Membership of local density values (atom-indexed) in one block.

        The values must be level_b measurable; they are reduced to one value
        per segment before the test.
        """
        bounds = self.bounds
        bp = self.blocks[a]
        ix = list(bp.atoms)
        fl = np.asarray(f_local, dtype=float)
        reps = bp.reps
        rel = [ix.index(r) for r in reps]
        for w, seg in enumerate(bp.segments):
            pos = [ix.index(v) for v in seg]
            if float(fl[pos].max() - fl[pos].min()) > tol:
                return False
        fs = fl[rel]
        sp = bp.seg_probs
        if abs(float(sp @ fs) / float(sp.sum()) - 1.0) > tol:
            return False
        if float(fs.min()) < -tol:
            return False
        if bounds.kind == "linear":
            if float((fs - bounds.m0.values[reps]).min()) < -tol:
                return False
            if float((bounds.M0.values[reps] - fs).min()) < -tol:
                return False
            return True
        # small feasibility LP in the lifted multipliers
        km = np.stack([k.values[reps] for k in bounds.m_kernels]).T
        kM = np.stack([k.values[reps] for k in bounds.M_kernels]).T
        nm, nM = km.shape[1], kM.shape[1]
        a_eq = np.zeros((2, nm + nM))
        a_eq[0, :nm] = 1.0
        a_eq[1, nm:] = 1.0
        a_ub = []
        b_ub = []
        for i in range(len(reps)):
            row = np.zeros(nm + nM)
            row[:nm] = km[i]
            a_ub.append(row)
            b_ub.append(fs[i] + tol)
            row = np.zeros(nm + nM)
            row[nm:] = -kM[i]
            a_ub.append(row)
            b_ub.append(-fs[i] + tol)
        res = solve_lp(LinearProgram(
            c=np.zeros(nm + nM), sense="min",
            a_eq=a_eq, b_eq=np.ones(2),
            a_ub=np.asarray(a_ub), b_ub=np.asarray(b_ub)))
        return res.status == "optimal"

    def contains_density(self, f: RandomVariable, tol: float = 1e-9) -> bool:
        """Membership of a density in every block polytope."""
        if f.level > self.bounds.level_b:
            return False
        return all(
            self.contains_on_block(a, f.values[list(bp.atoms)], tol)
            for a, bp in enumerate(self.blocks))
