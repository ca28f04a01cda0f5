"""Scenario files: one JSON document describing a space, a system and tasks.

The document format is fixed by the shipped JSON schema (version "1").
Vectors are arrays ordered by atom index; partitions are arrays of arrays of
atom indices; operators and bounds are tagged with their grid pair. Loading
validates against the schema first and then rebuilds the in-memory objects,
so every structural defect is reported with the JSON path that caused it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .dynamic import GridError, OperatorSystem, SystemStructureError
from .operators import BoundPair, BoundsError, Piece, PolyhedralOperator
from .spaces import FilteredSpace, MeasurabilityError, RandomVariable, SpaceError
from .subspaces import Subspace, full_space, span_closure

SCHEMA_VERSION = "1"

_SUITES = ("representation", "sandwich", "cocycle", "refine")


class ScenarioError(ValueError):
    """Input document rejected; ``path`` is the first failing JSON path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _schema() -> dict:
    text = resources.files("sandwichext").joinpath(
        "schema/scenario.schema.json").read_text()
    return json.loads(text)


def _json_path(parts) -> str:
    out = "$"
    for part in parts:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def _check_schema(doc) -> None:
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc),
                    key=lambda e: ([str(p) for p in e.absolute_path], e.message))
    if errors:
        first = errors[0]
        raise ScenarioError(_json_path(list(first.absolute_path)), first.message)


def _expand(value, n: int, path: str) -> np.ndarray:
    """A scalar becomes a constant vector; a vector must have one entry per atom."""
    if isinstance(value, (int, float)):
        return np.full(n, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ScenarioError(path, f"expected {n} entries, got {arr.size}")
    return arr


def _rv(space: FilteredSpace, values: np.ndarray, level: int,
        path: str) -> RandomVariable:
    try:
        return space.rv(values, level)
    except (MeasurabilityError, ValueError) as err:
        raise ScenarioError(path, str(err)) from err


@dataclass(frozen=True, eq=False)
class Scenario:
    """A parsed document: the space, the operator system, payoffs and tasks.

    ``raw`` keeps the document as loaded so reports can echo it verbatim.
    """

    raw: dict
    name: str
    space: FilteredSpace
    system: OperatorSystem
    payoffs: dict
    tasks: tuple

    def payoff(self, spec, level: int):
        """Resolve a named or inline payoff into (label, values-at-level).

        ``spec`` is either a key of the payoffs section or a vector over the
        finest atoms; the result is checked measurable at ``level``.
        """
        if isinstance(spec, str):
            if spec not in self.payoffs:
                raise ScenarioError("$.payoffs", f"unknown payoff {spec!r}")
            return spec, _rv(self.space, self.payoffs[spec], level,
                             f"$.payoffs.{spec}")
        vals = _expand(spec, self.space.n_atoms, "$.payoff")
        return None, _rv(self.space, vals, level, "$.payoff")

    def subsystem(self, grid) -> OperatorSystem:
        """The declared system restricted to a sub-grid (for refinement runs).

        Every adjacent pair of the sub-grid must have a declared operator and
        every sub-grid pair a declared bound pair; the shared objects are
        reused so both systems agree on them by construction.
        """
        grid = tuple(int(g) for g in grid)
        declared = self.system.declared_ops()
        one_step = {}
        long_ops = {}
        pairs = [(s, t) for i, s in enumerate(grid) for t in grid[i + 1:]]
        for s, t in zip(grid, grid[1:]):
            if (s, t) not in declared:
                raise ScenarioError(
                    "$.operators", f"sub-grid {list(grid)} needs an operator "
                    f"for pair ({s}, {t})")
            one_step[(s, t)] = declared[(s, t)]
        for s, t in pairs:
            if (s, t) not in self.system.bounds:
                raise ScenarioError(
                    "$.bounds", f"sub-grid {list(grid)} needs bounds "
                    f"for pair ({s}, {t})")
        for pair, op in declared.items():
            if pair in pairs and pair not in one_step:
                long_ops[pair] = op
        bounds = {pair: self.system.bounds[pair] for pair in pairs}
        try:
            return OperatorSystem(self.space, grid, one_step_ops=one_step,
                                  bounds=bounds, long_ops=long_ops)
        except (GridError, SystemStructureError) as err:
            raise ScenarioError("$.tasks", str(err)) from err


def _build_space(block: dict) -> FilteredSpace:
    names = block.get("atoms")
    n = len(block["probs"])
    if names is not None and len(names) != n:
        raise ScenarioError("$.space.atoms",
                            f"expected {n} atom names, got {len(names)}")
    try:
        return FilteredSpace(np.asarray(block["probs"], dtype=float),
                             block["partitions"], block["times"])
    except SpaceError as err:
        raise ScenarioError("$.space", str(err)) from err


def _domain(space: FilteredSpace, generators: dict, s: int, t: int) -> Subspace:
    if t in generators:
        return span_closure(space, t, s, generators[t])
    return full_space(space, t, s)


def build_scenario(doc: dict) -> Scenario:
    """Validate against the schema and rebuild the in-memory objects."""
    _check_schema(doc)
    space = _build_space(doc["space"])
    n = space.n_atoms

    grid = [int(g) for g in doc.get("grid", range(space.n_levels))]
    for i, g in enumerate(grid):
        if not 0 <= g < space.n_levels:
            raise ScenarioError(f"$.grid[{i}]", f"level {g} out of range")

    generators = {}
    for key, vecs in (doc.get("subspaces") or {}).items():
        lv = int(key)
        if not 0 <= lv < space.n_levels:
            raise ScenarioError(f"$.subspaces.{key}", f"level {lv} out of range")
        generators[lv] = [
            _rv(space, _expand(v, n, f"$.subspaces.{key}[{i}]"), lv,
                f"$.subspaces.{key}[{i}]")
            for i, v in enumerate(vecs)]

    ops = {}
    for i, item in enumerate(doc["operators"]):
        s, t = int(item["from"]), int(item["to"])
        path = f"$.operators[{i}]"
        if s not in grid or t not in grid or s >= t:
            raise ScenarioError(path, f"pair ({s}, {t}) is not an increasing "
                                      f"pair on grid {grid}")
        if (s, t) in ops:
            raise ScenarioError(path, f"duplicate operator for pair ({s}, {t})")
        pieces = []
        for j, pc in enumerate(item["pieces"]):
            density = _rv(space, _expand(pc["density"], n,
                                         f"{path}.pieces[{j}].density"),
                          t, f"{path}.pieces[{j}].density")
            penalty = _rv(space, _expand(pc["penalty"], n,
                                         f"{path}.pieces[{j}].penalty"),
                          s, f"{path}.pieces[{j}].penalty")
            pieces.append(Piece(density, penalty))
        ops[(s, t)] = PolyhedralOperator(_domain(space, generators, s, t),
                                         tuple(pieces))

    bounds = {}
    for i, item in enumerate(doc["bounds"]):
        s, t = int(item["from"]), int(item["to"])
        path = f"$.bounds[{i}]"
        if s not in grid or t not in grid or s >= t:
            raise ScenarioError(path, f"pair ({s}, {t}) is not an increasing "
                                      f"pair on grid {grid}")
        if (s, t) in bounds:
            raise ScenarioError(path, f"duplicate bounds for pair ({s}, {t})")
        try:
            if item["kind"] == "linear":
                m0 = _rv(space, _expand(item["m0"], n, f"{path}.m0"), t,
                         f"{path}.m0")
                M0 = _rv(space, _expand(item["M0"], n, f"{path}.M0"), t,
                         f"{path}.M0")
                bounds[(s, t)] = BoundPair.linear(space, t, s, m0, M0)
            else:
                mk = [_rv(space, _expand(v, n, f"{path}.m_kernels[{j}]"), t,
                          f"{path}.m_kernels[{j}]")
                      for j, v in enumerate(item["m_kernels"])]
                Mk = [_rv(space, _expand(v, n, f"{path}.M_kernels[{j}]"), t,
                          f"{path}.M_kernels[{j}]")
                      for j, v in enumerate(item["M_kernels"])]
                bounds[(s, t)] = BoundPair.polyhedral(space, t, s, mk, Mk)
        except BoundsError as err:
            raise ScenarioError(path, str(err)) from err

    adjacent = set(zip(grid, grid[1:]))
    one_step = {pair: op for pair, op in ops.items() if pair in adjacent}
    long_ops = {pair: op for pair, op in ops.items() if pair not in adjacent}
    try:
        system = OperatorSystem(space, tuple(grid), one_step_ops=one_step,
                                bounds=bounds, long_ops=long_ops)
    except (GridError, SystemStructureError) as err:
        raise ScenarioError("$.grid", str(err)) from err

    payoffs = {}
    for name, vec in (doc.get("payoffs") or {}).items():
        payoffs[name] = _expand(vec, n, f"$.payoffs.{name}")

    return Scenario(raw=doc, name=doc["name"], space=space, system=system,
                    payoffs=payoffs, tasks=tuple(doc.get("tasks") or ()))


def load_scenario(path) -> Scenario:
    """Read a JSON file and build the scenario it describes."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ScenarioError("$", f"not valid JSON: {err}") from err
    return build_scenario(doc)
