"""Acceptance gate: one test per shipped guarantee, at its stated tolerance.

Each test prints exactly one pass/fail line under ``pytest -v``. Derived
quantities are checked against the independent oracles in ``oracles.py``,
never against the code paths that produced them.
"""

import json

import numpy as np

import oracles
from conftest import (
    binomial_space,
    enclosing_bounds,
    fixture_path,
    random_polyhedral,
)
from sandwichext import (
    FilteredSpace,
    LinearProgram,
    attain,
    check_cocycle_and_local,
    cond_expectation,
    conjugate,
    extend_system,
    load_scenario,
    maximal_extension,
    price,
    refine_and_compare,
    solve_lp,
    support_function,
    verify_representation,
)
from sandwichext.cli import main

SEED = 20240816

RECON_TOL = 1e-7          # dual reconstruction, atomwise
EXT_VALUE_TOL = 1e-6      # frozen three-atom extension value
RESTRICT_TOL = 1e-7       # extension restricted to its domain
SANDWICH_TOL = 1e-8       # preserved sandwich inequality
PRIMAL_DUAL_TOL = 1e-5    # evaluation vs dual vertex enumeration
ATTAIN_TOL = 1e-7         # attained density reproduces the value
POSITIVITY_FLOOR = 1e-12  # strictly positive attained densities
PRICE_TOL = 1e-5          # composed price vs product brute force
PRICE_ID_TOL = 1e-6       # price identity through the density
SUPPORT_TOL = 1e-10       # knapsack vs simplex
DUALITY_TOL = 1e-8        # simplex strong duality residual

FIXTURES = ["fix_a.json", "fix_b.json", "fix_c_linear.json",
            "fix_c_restricted.json", "fix_refine.json"]


def two_atom_space() -> FilteredSpace:
    return FilteredSpace(
        probs=np.array([0.5, 0.5]),
        levels=[[[0, 1]], [[0], [1]]],
        time_labels=[0.0, 1.0],
    )


def random_payoff(space, level, rng):
    """Level-measurable payoff: one draw per block."""
    vals = np.empty(space.n_atoms)
    for block in space.blocks(level):
        vals[list(block)] = rng.normal() * 2.0
    return space.rv(vals, level)


def mix_pieces(space, op, level_a, rng):
    """Blockwise Dirichlet mixture of the piece densities; stays in the hull."""
    out = np.empty(space.n_atoms)
    for block in space.blocks(level_a):
        ix = list(block)
        w = rng.dirichlet(np.ones(len(op.pieces)))
        out[ix] = sum(wi * pc.density.values[ix]
                      for wi, pc in zip(w, op.pieces))
    return out


def test_criterion_1_representation_suite():
    rng = np.random.default_rng(SEED)
    small = two_atom_space()
    big = binomial_space()
    big_pairs = [(0, 1), (1, 2), (0, 2)]
    for k in range(50):
        if k % 2 == 0:
            space, (s, t) = small, (0, 1)
        else:
            space, (s, t) = big, big_pairs[(k // 2) % 3]
        op = random_polyhedral(space, t, s, rng)
        alphas = [oracles.scipy_conjugate(op, pc.density.values)
                  for pc in op.pieces]
        blocks = space.blocks(s)
        for _ in range(3):
            X = random_payoff(space, t, rng)
            direct = op.evaluate(X).values
            recon = np.full(space.n_atoms, -np.inf)
            for pc, al in zip(op.pieces, alphas):
                ex = cond_expectation(
                    space, space.rv(pc.density.values * X.values, t), s).values
                for a, block in enumerate(blocks):
                    ix = list(block)
                    recon[ix] = np.maximum(recon[ix], ex[ix] - al[a])
            assert np.abs(recon - direct).max() <= RECON_TOL
        # splicing densities across a coarse block splices their penalties
        f1 = mix_pieces(space, op, s, rng)
        f2 = mix_pieces(space, op, s, rng)
        spliced = f2.copy()
        ix0 = list(blocks[0])
        spliced[ix0] = f1[ix0]
        c1 = conjugate(op, space.rv(f1, t)).by_block
        c2 = conjugate(op, space.rv(f2, t)).by_block
        cs = conjugate(op, space.rv(spliced, t)).by_block
        assert cs[0] == c1[0]
        assert all(cs[a] == c2[a] for a in range(1, len(blocks)))
        oracle_c1 = oracles.scipy_conjugate(op, f1)
        assert np.abs(np.asarray(c1) - oracle_c1).max() <= 1e-8
        rep = verify_representation(op, n_payoffs=6, n_densities=4,
                                    seed=1000 + k, tol=RECON_TOL)
        assert rep.passed, [e.name for e in rep.failures()]


def test_criterion_2_extension_correctness(three_atom):
    space, op, bounds = three_atom.space, three_atom.op, three_atom.bounds
    ext = maximal_extension(op, bounds)
    v = ext.evaluate(space.rv([1.0, 0.0, 0.0])).values[0]
    assert abs(v - 1.25 / 3.0) <= EXT_VALUE_TOL
    assert abs(v - oracles.fix_b_parametric([1.0, 0.0, 0.0])) <= EXT_VALUE_TOL
    for b in op.domain.basis:
        dev = np.abs(ext.evaluate(b).values - op.evaluate(b).values)
        assert dev.max() <= RESTRICT_TOL
    rng = np.random.default_rng(SEED + 2)
    for _ in range(1000):
        x = rng.normal(size=3) * 2.0
        z = np.abs(rng.normal(size=3))
        y = np.maximum(z + x, 0.0) + np.abs(rng.normal(size=3))
        lhs = bounds.minorant(space.rv(z)).values \
            + ext.evaluate(space.rv(x)).values
        rhs = bounds.majorant(space.rv(y)).values
        assert (lhs <= rhs + SANDWICH_TOL).all()
    for _ in range(1000):
        x = np.abs(rng.normal(size=3)) * 2.0
        lo = bounds.minorant(space.rv(x)).values
        hi = bounds.majorant(space.rv(x)).values
        up = ext.evaluate(space.rv(x)).values
        dn = -ext.evaluate(space.rv(-x)).values
        assert (lo <= dn + SANDWICH_TOL).all()
        assert (dn <= up + SANDWICH_TOL).all()
        assert (up <= hi + SANDWICH_TOL).all()


def test_criterion_3_primal_dual_equality():
    rng = np.random.default_rng(SEED + 3)
    for i in range(30):
        if i % 5 == 4:
            space, (s, t) = binomial_space(), (1, 2)
        else:
            n = int(rng.integers(2, 7))
            probs = rng.uniform(0.5, 1.5, size=n)
            probs /= probs.sum()
            probs[-1] = 1.0 - probs[:-1].sum()
            space = FilteredSpace(
                probs=probs,
                levels=[[list(range(n))], [[j] for j in range(n)]],
                time_labels=[0.0, 1.0],
            )
            s, t = 0, 1
        op = random_polyhedral(space, t, s, rng)
        bounds = enclosing_bounds(space, t, s, op)
        ext = maximal_extension(op, bounds)
        for _ in range(2):
            X = random_payoff(space, t, rng)
            got = ext.evaluate(X).values
            want = oracles.vertex_dual_max(op, bounds, X)
            assert np.abs(got - want).max() <= PRIMAL_DUAL_TOL


def test_criterion_4_attainment_and_positivity(three_atom):
    rng = np.random.default_rng(SEED + 4)
    cases = [(three_atom.space, 0, 1,
              maximal_extension(three_atom.op, three_atom.bounds))]
    for i in range(8):
        if i % 2 == 0:
            space, (s, t) = two_atom_space(), (0, 1)
        else:
            space, (s, t) = binomial_space(), [(0, 1), (1, 2), (0, 2)][i // 3]
        op = random_polyhedral(space, t, s, rng)
        bounds = enclosing_bounds(space, t, s, op)
        assert bounds.atom_floor().min() > 0.0
        cases.append((space, s, t, maximal_extension(op, bounds)))
    for space, s, t, ext in cases:
        for _ in range(5):
            X = random_payoff(space, t, rng)
            att = attain(ext, X)
            assert att.density.values.min() > POSITIVITY_FLOOR
            prod = space.rv(att.density.values * X.values, t)
            recon = cond_expectation(space, prod, s).values \
                - att.penalty.atomwise()
            direct = ext.evaluate(X).values
            assert np.abs(recon - direct).max() <= ATTAIN_TOL


def test_criterion_5_dynamic_suite(restricted_system):
    ext = extend_system(restricted_system)
    space = restricted_system.space
    rng = np.random.default_rng(SEED + 5)
    payoffs = [np.array([2.0, -0.5, 1.0, 0.25])]
    payoffs += [rng.normal(size=4) * 2.0 for _ in range(24)]
    for x in payoffs:
        res = price(ext, 0, 2, space.rv(x))
        value = res.value.values[0]
        assert abs(value - oracles.restricted_product_price(x)) <= PRICE_TOL
        ev = float(space.probs @ (res.density.values * x))
        assert abs(ev - res.penalty.by_block[0] - value) <= PRICE_ID_TOL
    rep = check_cocycle_and_local(ext, 0, 1, 2, n_samples=20, seed=0)
    assert rep.passed, [e.name for e in rep.failures()]


def test_criterion_6_refinement_monotonicity():
    sc = load_scenario(fixture_path("fix_refine.json"))
    coarse = sc.subsystem([0, 2])
    rr = refine_and_compare(coarse, sc.system, n_payoffs=100, n_densities=20,
                            seed=0, value_tol=1e-8, penalty_tol=1e-8)
    assert rr.passed, [e.name for e in rr.report.failures()]
    assert rr.max_decrease > 1e-6
    assert rr.witness_pair == (0, 2)


def test_criterion_7_solver_self_test():
    rng = np.random.default_rng(SEED + 7)
    for _ in range(500):
        n = int(rng.integers(2, 8))
        p = rng.dirichlet(np.ones(n) * 2.0)
        lo = rng.uniform(0.0, 0.7, size=n)
        hi = lo + rng.uniform(0.3, 2.5, size=n)
        scale = float(p @ ((lo + hi) / 2.0))
        lo, hi = lo / scale, hi / scale
        w = rng.normal(size=n) * 3.0
        val, f = support_function(w, p, lo, hi)
        lp = LinearProgram(c=p * w / p.sum(), sense="max",
                           a_eq=[p / p.sum()], b_eq=[1.0],
                           bounds=tuple(zip(lo, hi)))
        res = solve_lp(lp)
        assert res.status == "optimal"
        assert abs(val - res.value) <= SUPPORT_TOL
        assert res.dual_objective is not None
        assert abs(res.value - res.dual_objective) < DUALITY_TOL


def test_criterion_8_cli_determinism(tmp_path, capsys):
    for name in FIXTURES:
        path = str(fixture_path(name))
        out1 = tmp_path / f"{name}.1.json"
        out2 = tmp_path / f"{name}.2.json"
        assert main(["report", "--input", path, "--output", str(out1)]) == 0
        assert main(["report", "--input", path, "--output", str(out2)]) == 0
        capsys.readouterr()
        b1, b2 = out1.read_bytes(), out2.read_bytes()
        assert b1 == b2, f"report on {name} is not reproducible"
        assert json.loads(b1)["passed"] is True
