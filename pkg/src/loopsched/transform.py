"""Loop transformations, schedule-matrix composition, applicability checks.

Affine transformations (interchange, reversal, skewing) compose into a square
integer schedule matrix at the statement's original depth. Tiling, unrolling
and parallelization are non-affine tags: they never enter the schedule matrix
but reshape the effective loop structure used by the cost oracle.

Levels are 0-based, outermost first, and always refer to the pre-tiling loop
order of the statement they apply to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loop_ir import Program, Statement, iteration_domain, loop_depth

MAX_XFORMS = 4
TILE_SIZES = (2, 4, 8, 16, 32)
UNROLL_FACTORS = (2, 4, 8, 16)
SKEW_FACTOR_RANGE = (1, 4)

KINDS = ("Interchange", "Reversal", "Skewing", "Parallelize", "Tile", "Unroll")
AFFINE_KINDS = ("Interchange", "Reversal", "Skewing")


class ContractError(ValueError):
    """Operation called outside its contract (wrong variant, bad level)."""


@dataclass(frozen=True)
class Interchange:
    a: int
    b: int
    kind = "Interchange"


@dataclass(frozen=True)
class Reversal:
    level: int
    kind = "Reversal"


@dataclass(frozen=True)
class Skewing:
    """Rewrites row `a` of the iteration vector: new_ia = alpha*ia + beta*ib."""

    a: int
    b: int
    alpha: int
    beta: int
    kind = "Skewing"


@dataclass(frozen=True)
class Parallelize:
    level: int
    kind = "Parallelize"


@dataclass(frozen=True)
class Tile:
    """Tiles adjacent levels (a, a+1) with sizes (size_a, size_b)."""

    a: int
    b: int
    size_a: int
    size_b: int
    kind = "Tile"


@dataclass(frozen=True)
class Unroll:
    level: int
    factor: int
    kind = "Unroll"


Transformation = Interchange | Reversal | Skewing | Parallelize | Tile | Unroll
TransformationSequence = tuple


def is_affine(t: Transformation) -> bool:
    return t.kind in AFFINE_KINDS


def _levels(t: Transformation) -> tuple[int, ...]:
    if t.kind in ("Interchange", "Skewing", "Tile"):
        return (t.a, t.b)
    return (t.level,)


def affine_matrix(t: Transformation, depth: int) -> np.ndarray:
    """Square matrix acting on the iteration vector (new = M @ old)."""
    if not is_affine(t):
        raise ContractError(f"{t.kind} is not an affine transformation")
    if any(l < 0 or l >= depth for l in _levels(t)):
        raise IndexError(f"{t} level out of range for depth {depth}")
    m = np.eye(depth, dtype=np.int64)
    if t.kind == "Interchange":
        m[[t.a, t.b]] = m[[t.b, t.a]]
    elif t.kind == "Reversal":
        m[t.level, t.level] = -1
    else:  # Skewing
        m[t.a, t.a] = t.alpha
        m[t.a, t.b] = t.beta
    return m


def _affine_inverse(t: Transformation, depth: int) -> np.ndarray:
    # Interchange and Reversal are involutions; Skewing with alpha=1 inverts
    # by negating beta. alpha != 1 has no integer inverse (non-unimodular)
    # and is rejected by applicable().
    if t.kind == "Skewing":
        if t.alpha != 1:
            raise ContractError(f"skew with alpha={t.alpha} has no integer inverse")
        return affine_matrix(Skewing(t.a, t.b, 1, -t.beta), depth)
    return affine_matrix(t, depth)


def compose_schedule(sequence, depth: int) -> np.ndarray:
    """Product of affine matrices, later transforms multiplying on the left."""
    m = np.eye(depth, dtype=np.int64)
    for t in sequence:
        if is_affine(t):
            m = affine_matrix(t, depth) @ m
    return m


def compose_schedule_inverse(sequence, depth: int) -> np.ndarray:
    """Exact integer inverse of compose_schedule for applicable sequences."""
    m = np.eye(depth, dtype=np.int64)
    for t in sequence:
        if is_affine(t):
            m = m @ _affine_inverse(t, depth)
    return m


def sequence_key(sequence) -> str:
    """Canonical serialization used for dedup and deterministic tie-breaks."""
    import json

    return json.dumps(sequence_to_json(sequence), separators=(",", ":"))


def applicable(sequence, statement: Statement, program: Program) -> list[str]:
    """Structural violations of the sequence for one statement ([] = ok)."""
    violations: list[str] = []
    depth = loop_depth(statement.id, program)
    if len(sequence) > MAX_XFORMS:
        violations.append(f"sequence length {len(sequence)} exceeds {MAX_XFORMS}")
    counts = {"Parallelize": 0, "Tile": 0, "Unroll": 0}
    for t in sequence:
        if any(l < 0 or l >= depth for l in _levels(t)):
            violations.append(f"{t.kind} level out of range for depth {depth}")
            continue
        if t.kind in counts:
            counts[t.kind] += 1
        if t.kind == "Tile":
            if t.b != t.a + 1:
                violations.append(f"tile levels must be adjacent, got ({t.a}, {t.b})")
            if t.size_a not in TILE_SIZES or t.size_b not in TILE_SIZES:
                violations.append(f"tile sizes ({t.size_a}, {t.size_b}) not in {TILE_SIZES}")
        elif t.kind == "Unroll":
            if t.factor not in UNROLL_FACTORS:
                violations.append(f"unroll factor {t.factor} not in {UNROLL_FACTORS}")
        elif t.kind == "Skewing":
            lo, hi = SKEW_FACTOR_RANGE
            if not (lo <= t.alpha <= hi and lo <= t.beta <= hi):
                violations.append(f"skew factors ({t.alpha}, {t.beta}) outside [{lo}, {hi}]")
            elif t.alpha != 1:
                violations.append(f"skew with alpha={t.alpha} is not unimodular")
        elif t.kind == "Interchange":
            if t.a == t.b:
                violations.append("interchange of a level with itself")
    for kind, n in counts.items():
        if n > 1:
            violations.append(f"duplicate {kind.lower()}")
    for t in sequence:
        if t.kind == "Parallelize" and 0 <= t.level < depth:
            v = _parallel_violation(t.level, statement, program)
            if v:
                violations.append(v)
    return violations


def _parallel_violation(level: int, statement: Statement, program: Program) -> str | None:
    """Conservative same-buffer check for parallelization.

    Parallelizing level L of `statement` is rejected when, among the
    statements sharing that loop, one writes a buffer that another reads and
    the shared iterator appears in the writer's access matrix: the loop then
    potentially carries a read-after-write dependence we cannot disprove
    without dependence analysis.
    """
    chain = program.loop_chain(statement.id)
    loop = chain[level]
    # statements in the subtree of the parallelized loop
    stmts: list[Statement] = []

    def collect(node):
        if isinstance(node, Statement):
            stmts.append(node)
        else:
            for c in node.body:
                collect(c)

    collect(loop)
    from .loop_ir import read_accesses

    for writer in stmts:
        w_chain = program.loop_chain(writer.id)
        w_level = w_chain.index(loop)
        w_mat = writer.write.as_array()
        if not np.any(w_mat[:, w_level] != 0):
            continue
        for reader in stmts:
            if reader.id == writer.id:
                continue
            if any(acc.buffer == writer.write.buffer for acc in read_accesses(reader.expr)):
                return (f"parallelize level {level}: loop {loop.iterator!r} may carry a "
                        f"read-after-write on buffer {writer.write.buffer!r} "
                        f"(written by {writer.id!r}, read by {reader.id!r})")
    return None


@dataclass(frozen=True)
class LoopDescriptor:
    """One loop of the post-transformation structure."""

    trip_count: int
    unroll_factor: int = 1
    parallel: bool = False

    @property
    def instance_count(self) -> int:
        # unrolled bodies replicate the statement, so instances = trip x factor
        return self.trip_count * self.unroll_factor


def effective_loop_structure(statement: Statement, sequence, program: Program) -> list[LoopDescriptor]:
    """Post-transformation loop order and trip counts for one statement.

    Interchange permutes trip counts; reversal and skewing preserve them
    (rectangular approximation). Tiling replaces levels (a, a+1) with four
    loops [ceil(Ta/sa), ceil(Tb/sb), sa, sb]. Unroll divides its level's trip
    count (ceiling) and records the factor. Unroll/parallelize levels that
    collide with tiled levels map to the inner/outer tile loop respectively.
    """
    domain = iteration_domain(statement.id, program)
    trips = [hi - lo for lo, hi in domain]
    depth = len(trips)
    tile = unroll = parallel = None
    for t in sequence:
        if any(l < 0 or l >= depth for l in _levels(t)):
            raise IndexError(f"{t} level out of range for depth {depth}")
        if t.kind == "Interchange":
            trips[t.a], trips[t.b] = trips[t.b], trips[t.a]
        elif t.kind == "Tile":
            tile = t
        elif t.kind == "Unroll":
            unroll = t
        elif t.kind == "Parallelize":
            parallel = t

    def map_level(level: int, to_inner: bool) -> int:
        if tile is None or level < tile.a:
            return level
        if level == tile.a:
            return tile.a + 2 if to_inner else tile.a
        if level == tile.b:
            return tile.a + 3 if to_inner else tile.a + 1
        return level + 2

    if tile is not None:
        ta, tb = trips[tile.a], trips[tile.b]
        tiled = [-(-ta // tile.size_a), -(-tb // tile.size_b), tile.size_a, tile.size_b]
        trips = trips[:tile.a] + tiled + trips[tile.b + 1:]

    descs = [LoopDescriptor(t) for t in trips]
    if unroll is not None:
        i = map_level(unroll.level, to_inner=True)
        descs[i] = LoopDescriptor(-(-descs[i].trip_count // unroll.factor), unroll.factor,
                                  descs[i].parallel)
    if parallel is not None:
        i = map_level(parallel.level, to_inner=False)
        descs[i] = LoopDescriptor(descs[i].trip_count, descs[i].unroll_factor, True)
    return descs


# ---------------------------------------------------------------------------
# Serialization: tagged JSON objects, e.g. {"kind":"Interchange","a":0,"b":1}.
# ---------------------------------------------------------------------------

def transformation_to_json(t: Transformation) -> dict:
    if t.kind == "Interchange":
        return {"kind": "Interchange", "a": t.a, "b": t.b}
    if t.kind == "Reversal":
        return {"kind": "Reversal", "level": t.level}
    if t.kind == "Skewing":
        return {"kind": "Skewing", "a": t.a, "b": t.b, "alpha": t.alpha, "beta": t.beta}
    if t.kind == "Parallelize":
        return {"kind": "Parallelize", "level": t.level}
    if t.kind == "Tile":
        return {"kind": "Tile", "a": t.a, "b": t.b, "size_a": t.size_a, "size_b": t.size_b}
    if t.kind == "Unroll":
        return {"kind": "Unroll", "level": t.level, "factor": t.factor}
    raise ContractError(f"unknown transformation kind {t.kind!r}")


def transformation_from_json(d: dict) -> Transformation:
    k = d["kind"]
    if k == "Interchange":
        return Interchange(d["a"], d["b"])
    if k == "Reversal":
        return Reversal(d["level"])
    if k == "Skewing":
        return Skewing(d["a"], d["b"], d["alpha"], d["beta"])
    if k == "Parallelize":
        return Parallelize(d["level"])
    if k == "Tile":
        return Tile(d["a"], d["b"], d["size_a"], d["size_b"])
    if k == "Unroll":
        return Unroll(d["level"], d["factor"])
    raise ContractError(f"unknown transformation kind {k!r}")


def sequence_to_json(sequence) -> list[dict]:
    return [transformation_to_json(t) for t in sequence]


def sequence_from_json(items) -> tuple:
    return tuple(transformation_from_json(d) for d in items)
