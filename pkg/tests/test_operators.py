import numpy as np
import pytest

from sandwichext import (
    BoundPair,
    BoundsError,
    DomainError,
    FilteredSpace,
    LevelError,
    Piece,
    PolyhedralOperator,
    PolytopeError,
    check_mM1,
    check_nondegenerate,
    check_sandwich,
    cond_expectation,
    density_set,
    full_space,
    validate_operator,
)

TOL = 1e-9


def two_uniform():
    return FilteredSpace([0.5, 0.5], [[[0, 1]], [[0], [1]]], [0.0, 1.0])


def binom():
    return FilteredSpace(
        np.full(4, 0.25),
        [[[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]]],
        [0.0, 1.0, 2.0],
    )


def box(space, s, t, lo, hi):
    n = space.n_atoms
    return BoundPair.linear(space, t, s, space.rv(np.full(n, lo), level=t),
                            space.rv(np.full(n, hi), level=t))


def test_operator_level_guards():
    space = binom()
    dom = full_space(space, 1, 0)
    with pytest.raises(LevelError):
        PolyhedralOperator(dom, (
            Piece(space.rv([1.0, 1.0, 0.9, 1.1]),  # level 2 density
                  space.rv(np.zeros(4), level=0)),))
    with pytest.raises(LevelError):
        PolyhedralOperator(dom, (
            Piece(space.rv(np.ones(4), level=1),
                  space.rv([0.1, 0.1, 0.0, 0.0], level=1)),))
    with pytest.raises(ValueError):
        PolyhedralOperator(dom, ())


def test_evaluate_best_piece_and_domain_guard(two_atom):
    op = two_atom.op
    space = two_atom.space
    x = space.rv([2.0, 0.0])
    out = op.evaluate(x)
    # piece scores: E[1*X] = 1 and E[(1.5, 0.5) X] - 0.25 = 1.25
    assert out.values[0] == pytest.approx(1.25, abs=TOL)
    assert out.level == 0
    assert op.evaluate(space.rv([0.0, 2.0])).values[0] == pytest.approx(1.0, abs=TOL)
    restricted = PolyhedralOperator(
        full_space(binom(), 1, 0),
        (Piece(binom().rv(np.ones(4), level=1),
               binom().rv(np.zeros(4), level=0)),))
    with pytest.raises(DomainError):
        restricted.evaluate(binom().rv([1.0, 2.0, 3.0, 4.0]))


def test_validate_operator_passes_on_clean_data(two_atom):
    report = validate_operator(two_atom.op)
    assert report.passed
    names = [e.name for e in report.entries]
    assert names == [
        "densities_nonnegative", "unit_block_expectation",
        "penalties_nonnegative", "zero_penalty_floor",
        "constants_in_domain", "convex_lsc_local",
    ]


def test_validate_operator_flags_bad_data():
    space = two_uniform()
    dom = full_space(space, 1, 0)
    bad_density = PolyhedralOperator(dom, (
        Piece(space.rv([2.2, -0.2]), space.rv([0.0, 0.0], level=0)),))
    rep = validate_operator(bad_density)
    failed = {e.name for e in rep.failures()}
    assert "densities_nonnegative" in failed

    skew = PolyhedralOperator(dom, (
        Piece(space.rv([1.5, 1.0]), space.rv([0.0, 0.0], level=0)),))
    assert "unit_block_expectation" in {e.name for e in validate_operator(skew).failures()}

    lifted = PolyhedralOperator(dom, (
        Piece(space.rv([1.0, 1.0]), space.rv([0.3, 0.3], level=0)),))
    rep = validate_operator(lifted)
    failed = {e.name for e in rep.failures()}
    assert "zero_penalty_floor" in failed
    assert "penalties_nonnegative" not in failed


def test_bound_pair_rejects_inverted_and_negative_kernels():
    space = two_uniform()
    with pytest.raises(BoundsError):
        box(space, 0, 1, 1.5, 0.5)
    with pytest.raises(BoundsError):
        BoundPair.linear(space, 1, 0, space.rv([-0.1, -0.1]),
                         space.rv([1.0, 1.0]))
    with pytest.raises(LevelError):
        # kernels must be measurable at level_b or coarser
        BoundPair.linear(binom(), 1, 0, binom().rv([0.5, 0.6, 0.5, 0.5]),
                         binom().rv(np.full(4, 2.0), level=1))


def test_linear_bound_evaluation(two_atom):
    space = two_atom.space
    bounds = two_atom.bounds
    x = space.rv([2.0, 0.0])
    assert bounds.minorant(x).values[0] == pytest.approx(0.5, abs=TOL)
    assert bounds.majorant(x).values[0] == pytest.approx(1.5, abs=TOL)


def test_polyhedral_dominance_rejects_crossing_envelopes():
    space = two_uniform()
    # min(3 f0, 3 f1) exceeds f0 + f1 at the uniform test payoff
    with pytest.raises(BoundsError):
        BoundPair.polyhedral(
            space, 1, 0,
            [space.rv([3.0, 0.0]), space.rv([0.0, 3.0])],
            [space.rv([1.0, 1.0])])


def test_polyhedral_dominance_accepts_pointwise_crossing():
    # kernels cross atomwise yet the envelopes stay ordered in expectation
    space = FilteredSpace([1.0 / 3.0, 2.0 / 3.0], [[[0, 1]], [[0], [1]]], [0, 1])
    bp = BoundPair.polyhedral(
        space, 1, 0,
        [space.rv([0.6, 1.2]), space.rv([0.9, 1.05])],
        [space.rv([2.1, 0.45]), space.rv([0.3, 1.35])])
    assert bp.kind == "polyhedral"
    x = space.rv([1.0, 2.0])
    lo = bp.minorant(x).values[0]
    hi = bp.majorant(x).values[0]
    assert lo <= hi + TOL


def test_sandwich_linear_fast_path(two_atom):
    rep = check_sandwich(two_atom.op, two_atom.bounds)
    assert rep.holds and rep.fast_path


def test_sandwich_certified_by_block_programs(two_atom):
    space = two_atom.space
    poly = BoundPair.polyhedral(
        space, 1, 0, [space.rv([0.5, 0.5])], [space.rv([1.5, 1.5])])
    rep = check_sandwich(two_atom.op, poly)
    assert rep.holds and not rep.fast_path


def test_sandwich_violation_carries_checkable_witness():
    space = two_uniform()
    dom = full_space(space, 1, 0)
    op = PolyhedralOperator(dom, (
        Piece(space.rv([1.9, 0.1]), space.rv([0.0, 0.0], level=0)),))
    bounds = box(space, 0, 1, 0.8, 1.2)
    rep = check_sandwich(op, bounds)
    assert not rep.holds
    assert rep.gap < 0.0
    assert rep.block == 0 and rep.piece == 0
    X, Z, Y = rep.witness
    p = space.probs
    assert np.all(Z.values >= -TOL) and np.all(Y.values >= -TOL)
    assert np.all(Z.values + X.values <= Y.values + TOL)
    x_of = max(float(p @ (pc.density.values * X.values)) - pc.penalty.values[0]
               for pc in op.pieces)
    m_of = 0.8 * float(p @ Z.values)
    big_m = 1.2 * float(p @ Y.values)
    assert m_of + x_of > big_m + 1e-6


def test_sandwich_mismatch_raises(two_atom):
    space = binom()
    op = PolyhedralOperator(
        full_space(space, 1, 0),
        (Piece(space.rv(np.ones(4), level=1),
               space.rv(np.zeros(4), level=0)),))
    with pytest.raises(LevelError):
        check_sandwich(op, box(space, 0, 2, 0.5, 2.0))
    with pytest.raises(ValueError):
        check_sandwich(two_atom.op, box(space, 0, 1, 0.5, 2.0))


def test_mM1_consistent_linear_family():
    space = binom()
    family = {(0, 1): box(space, 0, 1, 0.5, 2.0),
              (1, 2): box(space, 1, 2, 0.5, 2.0),
              (0, 2): box(space, 0, 2, 0.25, 4.0)}
    rep = check_mM1(family, space, (0, 1, 2))
    assert rep.passed
    by_name = {e.name: e for e in rep.entries}
    assert "exact on block indicators" in by_name["minorant_weakly_consistent"].detail


def test_mM1_flags_incompatible_long_bounds():
    space = binom()
    base = {(0, 1): box(space, 0, 1, 0.5, 2.0),
            (1, 2): box(space, 1, 2, 0.5, 2.0)}
    tight_M = dict(base)
    tight_M[(0, 2)] = box(space, 0, 2, 0.25, 1.5)  # 1.5 < 2 * 2
    rep = check_mM1(tight_M, space, (0, 1, 2))
    failed = {e.name for e in rep.failures()}
    assert failed == {"majorant_weakly_consistent"}

    fat_m = dict(base)
    fat_m[(0, 2)] = box(space, 0, 2, 0.6, 4.0)  # 0.6 > 0.5 * 0.5
    rep = check_mM1(fat_m, space, (0, 1, 2))
    assert {e.name for e in rep.failures()} == {"minorant_weakly_consistent"}

    rep = check_mM1(base, space, (0, 1, 2))
    assert not rep.passed
    assert rep.entries[0].name == "family_complete" and not rep.entries[0].passed


def test_mM1_degenerate_long_minorant():
    space = binom()
    family = {(0, 1): box(space, 0, 1, 0.5, 2.0),
              (1, 2): box(space, 1, 2, 0.5, 2.0),
              (0, 2): box(space, 0, 2, 0.0, 4.0)}
    assert not check_nondegenerate(family[(0, 2)])
    rep = check_mM1(family, space, (0, 1, 2))
    assert {e.name for e in rep.failures()} == {"long_minorant_nondegenerate"}


def test_density_polytope_membership_by_segments():
    space = binom()
    poly = density_set(box(space, 0, 1, 0.5, 2.0))
    assert len(poly.blocks) == 1
    # level-1 measurable densities with unit mean and box values are members
    assert poly.contains_on_block(0, np.array([1.0, 1.0, 1.0, 1.0]))
    assert poly.contains_on_block(0, np.array([1.5, 1.5, 0.5, 0.5]))
    # varying inside a level-1 segment is not level_b measurable
    assert not poly.contains_on_block(0, np.array([1.2, 0.8, 1.0, 1.0]))
    # box violation and budget violation
    assert not poly.contains_on_block(0, np.array([0.2, 0.2, 1.8, 1.8]))
    assert not poly.contains_on_block(0, np.array([2.0, 2.0, 2.0, 2.0]))
    assert poly.contains_density(space.rv([1.5, 1.5, 0.5, 0.5], level=1))
    # finer-level payoffs are rejected outright
    assert not poly.contains_density(space.rv([1.2, 0.8, 1.0, 1.0]))


def test_empty_polytope_names_block_and_level():
    space = two_uniform()
    with pytest.raises(PolytopeError) as exc:
        density_set(box(space, 0, 1, 1.5, 1.8))
    msg = str(exc.value)
    assert "block 0" in msg and "level 0" in msg
