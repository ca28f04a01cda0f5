"""Subspaces of payoffs that are stable under coarse-level indicators.

The spans handled here contain the constants and are closed under
multiplication by indicators of the blocks of a chosen coarse level. Any such
span decomposes as a direct sum of its restrictions to those blocks, so we
store one probability-weighted orthonormal basis per block and assemble the
global basis from the pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spaces import FilteredSpace, LevelError, RandomVariable

RANK_TOL = 1e-10
MEMBER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Subspace:
    """A span of payoffs at ``level_b`` closed under ``level_a`` indicators.

    ``block_bases[a]`` holds, for block ``a`` of the coarse level, a matrix of
    shape (block size, local dimension) whose columns are orthonormal for the
    local inner product sum_w p_w u_w v_w. The global basis is the union of
    the zero-extended columns.
    """

    space: FilteredSpace
    level_b: int
    level_a: int
    block_bases: tuple[np.ndarray, ...]
    _basis_rvs: tuple[RandomVariable, ...] = field(init=False, repr=False)

    def __post_init__(self):
        rvs = []
        for a, block in enumerate(self.space.blocks(self.level_a)):
            mat = self.block_bases[a]
            for k in range(mat.shape[1]):
                full = np.zeros(self.space.n_atoms)
                full[list(block)] = mat[:, k]
                rvs.append(self.space.rv(full, self.level_b))
        object.__setattr__(self, "_basis_rvs", tuple(rvs))

    @property
    def dim(self) -> int:
        return sum(mat.shape[1] for mat in self.block_bases)

    @property
    def basis(self) -> tuple[RandomVariable, ...]:
        return self._basis_rvs

    def block_dim(self, a: int) -> int:
        return self.block_bases[a].shape[1]

    def project_block(self, a: int, local_values: np.ndarray) -> np.ndarray:
        """Weighted projection of a local vector onto the block span."""
        block = self.space.blocks(self.level_a)[a]
        w = self.space.probs[list(block)]
        mat = self.block_bases[a]
        coeffs = mat.T @ (w * local_values)
        return mat @ coeffs

    def contains(self, X: RandomVariable, tol: float = MEMBER_TOL) -> bool:
        """Membership test: weighted residual norm below ``tol``."""
        if X.level > self.level_b:
            return False
        sq = 0.0
        for a, block in enumerate(self.space.blocks(self.level_a)):
            ix = list(block)
            local = X.values[ix]
            resid = local - self.project_block(a, local)
            sq += float(self.space.probs[ix] @ resid**2)
        return np.sqrt(sq) < tol

    def coefficients(self, X: RandomVariable) -> np.ndarray:
        """Coordinates of X in the global basis (no membership check)."""
        out = []
        for a, block in enumerate(self.space.blocks(self.level_a)):
            ix = list(block)
            w = self.space.probs[ix]
            out.append(self.block_bases[a].T @ (w * X.values[ix]))
        return np.concatenate(out) if out else np.zeros(0)


def span_closure(space: FilteredSpace, level_b: int, level_a: int,
                 generators: list[RandomVariable]) -> Subspace:
    """Smallest indicator-stable span containing the constants and generators.

    Closure under multiplication by level_a block indicators splits every
    generator into per-block pieces, so the result is the blockwise span of
    the restricted generators together with the block constants. With no
    generators this yields exactly the level_a measurable payoffs.
    """
    lb = space.check_level(level_b)
    la = space.check_level(level_a)
    if la > lb:
        raise LevelError(f"level_a {la} must be at least as coarse as level_b {lb}")
    for g in generators:
        if g.level > lb:
            raise LevelError("generator finer than level_b")

    bases = []
    for block in space.blocks(la):
        ix = list(block)
        w = space.probs[ix]
        cols = [np.ones(len(ix))]
        cols.extend(g.values[ix] for g in generators)
        raw = np.column_stack(cols)
        # weighted Gram reduction through an SVD of sqrt(p)-scaled columns
        sq = np.sqrt(w)[:, None]
        u, s, _ = np.linalg.svd(sq * raw, full_matrices=False)
        rank = int(np.sum(s > RANK_TOL * max(1.0, s[0] if s.size else 1.0)))
        local = u[:, :rank] / sq
        bases.append(local)
    return Subspace(space, lb, la, tuple(bases))


def full_space(space: FilteredSpace, level_b: int, level_a: int) -> Subspace:
    """The whole of the level_b measurable payoffs as a Subspace."""
    # block indicators of level_b span exactly that space
    gens = []
    for block in space.blocks(level_b):
        vals = np.zeros(space.n_atoms)
        vals[list(block)] = 1.0
        gens.append(space.rv(vals, level_b))
    return span_closure(space, level_b, level_a, gens)
