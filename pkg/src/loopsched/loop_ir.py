"""Miniature loop-nest program representation.

A Program is an ordered forest of rectangular loops over statement leaves.
Array accesses are affine in the enclosing iterators and are described by
integer access matrices (k rows for a k-dimensional buffer, depth+1 columns:
one coefficient per enclosing iterator plus a trailing constant).

Programs are immutable after construction and all operations here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DEPTH = 4
MAX_OPS = 16
MAX_BUFFER_DIMS = 4

BINARY_OPS = ("ADD", "SUB", "MUL", "DIV", "MIN", "MAX")
LEAF_OPS = ("LEAF_ACCESS", "LEAF_CONST")


class LookupError_(KeyError):
    """Unknown statement/buffer id."""


@dataclass(frozen=True)
class BufferDecl:
    """Declared array: name, per-dimension extents (all positive)."""

    name: str
    dims: tuple[int, ...]

    @property
    def ndim(self) -> int:
        return len(self.dims)


@dataclass(frozen=True)
class AccessRelation:
    """One array access: buffer name + k x (depth+1) integer matrix.

    Row r expresses index r as a linear combination of the enclosing
    iterators (columns 0..depth-1) plus a constant (last column).
    """

    buffer: str
    matrix: tuple[tuple[int, ...], ...]

    @property
    def ndim(self) -> int:
        return len(self.matrix)

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=np.int64)


@dataclass(frozen=True)
class Expr:
    """Expression tree node.

    kind is one of BINARY_OPS (two children), "LEAF_ACCESS" (access set,
    children empty) or "LEAF_CONST" (value set, children empty). DIV
    denominators must be accesses or nonzero constants.
    """

    kind: str
    children: tuple["Expr", ...] = ()
    access: AccessRelation | None = None
    value: float | None = None

    def walk_postorder(self):
        for c in self.children:
            yield from c.walk_postorder()
        yield self


def const(v: float) -> Expr:
    return Expr("LEAF_CONST", value=v)


def read(access: AccessRelation) -> Expr:
    return Expr("LEAF_ACCESS", access=access)


def binop(kind: str, left: Expr, right: Expr) -> Expr:
    if kind not in BINARY_OPS:
        raise ValueError(f"not a binary op kind: {kind}")
    return Expr(kind, children=(left, right))


def count_op_nodes(expr: Expr) -> int:
    """Number of binary operation nodes (leaves excluded)."""
    return sum(1 for n in expr.walk_postorder() if n.kind in BINARY_OPS)


def read_accesses(expr: Expr) -> list[AccessRelation]:
    """Read accesses in post-order (left to right)."""
    return [n.access for n in expr.walk_postorder() if n.kind == "LEAF_ACCESS"]


@dataclass(frozen=True)
class Statement:
    """One assignment: write access = expression over reads and constants."""

    id: str
    write: AccessRelation
    expr: Expr


@dataclass(frozen=True)
class LoopNode:
    """Rectangular loop: iterator in [lower, upper), body of loops/statements."""

    iterator: str
    lower: int
    upper: int
    body: tuple = ()

    @property
    def trip_count(self) -> int:
        return self.upper - self.lower


@dataclass(frozen=True)
class Program:
    """A loop-nest program: ordered root loops plus buffer declarations."""

    id: str
    root_loops: tuple[LoopNode, ...]
    buffers: tuple[BufferDecl, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", _build_index(self))

    def buffer(self, name: str) -> BufferDecl:
        try:
            return self._index.buffers[name]
        except KeyError:
            raise LookupError_(f"unknown buffer {name!r} in program {self.id!r}")

    def statement(self, stmt_id: str) -> Statement:
        try:
            return self._index.statements[stmt_id]
        except KeyError:
            raise LookupError_(f"unknown statement {stmt_id!r} in program {self.id!r}")

    def loop_chain(self, stmt_id: str) -> tuple[LoopNode, ...]:
        """Enclosing loops of a statement, outermost first."""
        self.statement(stmt_id)
        return self._index.chains[stmt_id]

    @property
    def statements(self) -> tuple[Statement, ...]:
        return tuple(self._index.statements.values())


@dataclass
class _Index:
    statements: dict = field(default_factory=dict)
    chains: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)


def _build_index(program: Program) -> _Index:
    idx = _Index()
    for b in program.buffers:
        idx.buffers[b.name] = b

    def visit(node, chain):
        if isinstance(node, Statement):
            idx.statements[node.id] = node
            idx.chains[node.id] = tuple(chain)
        elif isinstance(node, LoopNode):
            chain.append(node)
            for child in node.body:
                visit(child, chain)
            chain.pop()

    for root in program.root_loops:
        visit(root, [])
    return idx


def loop_depth(statement_id: str, program: Program) -> int:
    """Count of loops enclosing the statement."""
    return len(program.loop_chain(statement_id))


def iteration_domain(statement_id: str, program: Program) -> list[tuple[int, int]]:
    """(lower, upper) per enclosing loop level, outermost first."""
    return [(lp.lower, lp.upper) for lp in program.loop_chain(statement_id)]


def access_matrix(index_expressions: list[dict[str | None, int]], depth: int,
                  iterator_names: list[str]) -> np.ndarray:
    """Build the k x (depth+1) matrix from affine index expressions.

    Each index expression is a mapping iterator_name -> coefficient, with the
    key None holding the constant term. Unknown iterator names are a
    featurization error (non-affine / out-of-scope index).
    """
    mat = np.zeros((len(index_expressions), depth + 1), dtype=np.int64)
    for r, expr in enumerate(index_expressions):
        for name, coef in expr.items():
            if name is None:
                mat[r, depth] = coef
            elif name in iterator_names:
                mat[r, iterator_names.index(name)] = coef
            else:
                raise ValueError(f"non-affine or out-of-scope index term {name!r}")
    return mat


def index_expressions_from_matrix(matrix: np.ndarray,
                                  iterator_names: list[str]) -> list[dict]:
    """Inverse of access_matrix (round-trip helper)."""
    out = []
    for row in np.asarray(matrix):
        expr = {}
        for c, coef in enumerate(row[:-1]):
            if coef != 0:
                expr[iterator_names[c]] = int(coef)
        if row[-1] != 0 or not expr:
            expr[None] = int(row[-1])
        out.append(expr)
    return out


def validate(program: Program) -> list[str]:
    """All invariant violations; empty list means the program is valid."""
    violations: list[str] = []
    seen_ids: set[str] = set()
    buffer_names = {b.name for b in program.buffers}
    for b in program.buffers:
        if b.ndim < 1 or b.ndim > MAX_BUFFER_DIMS:
            violations.append(f"buffer {b.name!r}: dimensionality {b.ndim} outside [1, {MAX_BUFFER_DIMS}]")
        if any(e <= 0 for e in b.dims):
            violations.append(f"buffer {b.name!r}: nonpositive extent")

    def check_access(acc: AccessRelation, depth: int, stmt_id: str, role: str):
        if acc.buffer not in buffer_names:
            violations.append(f"statement {stmt_id!r}: {role} references undeclared buffer {acc.buffer!r}")
            return
        decl = next(b for b in program.buffers if b.name == acc.buffer)
        if acc.ndim != decl.ndim:
            violations.append(
                f"statement {stmt_id!r}: {role} of {acc.buffer!r} has {acc.ndim} rows, buffer has {decl.ndim} dims")
        for row in acc.matrix:
            if len(row) != depth + 1:
                violations.append(
                    f"statement {stmt_id!r}: {role} of {acc.buffer!r} row has {len(row)} columns, expected {depth + 1}")
                break

    def visit(node, iter_names: list[str]):
        if isinstance(node, Statement):
            depth = len(iter_names)
            if node.id in seen_ids:
                violations.append(f"duplicate statement id {node.id!r}")
            seen_ids.add(node.id)
            if depth < 1 or depth > MAX_DEPTH:
                violations.append(f"statement {node.id!r}: nesting depth {depth} outside [1, {MAX_DEPTH}]")
            n_ops = count_op_nodes(node.expr)
            if n_ops < 1 or n_ops > MAX_OPS:
                violations.append(f"statement {node.id!r}: {n_ops} operation nodes outside [1, {MAX_OPS}]")
            check_access(node.write, depth, node.id, "write")
            for n in node.expr.walk_postorder():
                if n.kind == "LEAF_ACCESS":
                    check_access(n.access, depth, node.id, "read")
                elif n.kind == "LEAF_CONST":
                    if n.value is None:
                        violations.append(f"statement {node.id!r}: constant leaf without value")
                elif n.kind in BINARY_OPS:
                    if len(n.children) != 2:
                        violations.append(f"statement {node.id!r}: {n.kind} node with arity {len(n.children)}")
                    if n.kind == "DIV":
                        den = n.children[1]
                        if den.kind == "LEAF_CONST" and den.value == 0:
                            violations.append(f"statement {node.id!r}: DIV by constant zero")
                else:
                    violations.append(f"statement {node.id!r}: unknown expr kind {n.kind!r}")
        elif isinstance(node, LoopNode):
            if node.upper <= node.lower:
                violations.append(f"loop {node.iterator!r}: empty or negative range [{node.lower}, {node.upper})")
            elif node.trip_count < 2:
                violations.append(f"loop {node.iterator!r}: trip count {node.trip_count} < 2")
            if node.iterator in iter_names:
                violations.append(f"duplicate iterator name {node.iterator!r} on a nesting path")
            for child in node.body:
                visit(child, iter_names + [node.iterator])
        else:
            violations.append(f"unexpected node type {type(node).__name__}")

    for root in program.root_loops:
        visit(root, [])
    return violations


# ---------------------------------------------------------------------------
# JSON serialization. One document per program:
# {id, buffers:[{name,dims:[...]}], loops:[{iter,lo,hi,body:[...]}]}
# with statements inline in loop bodies.
# ---------------------------------------------------------------------------

def _expr_to_json(e: Expr):
    if e.kind == "LEAF_CONST":
        return {"const": e.value}
    if e.kind == "LEAF_ACCESS":
        return {"access": {"buffer": e.access.buffer,
                           "matrix": [list(r) for r in e.access.matrix]}}
    return {"op": e.kind, "args": [_expr_to_json(c) for c in e.children]}


def _expr_from_json(d) -> Expr:
    if "const" in d:
        return const(d["const"])
    if "access" in d:
        a = d["access"]
        return read(AccessRelation(a["buffer"], tuple(tuple(int(x) for x in r) for r in a["matrix"])))
    return Expr(d["op"], children=tuple(_expr_from_json(c) for c in d["args"]))


def _node_to_json(node):
    if isinstance(node, Statement):
        return {"stmt": node.id,
                "write": {"buffer": node.write.buffer,
                          "matrix": [list(r) for r in node.write.matrix]},
                "expr": _expr_to_json(node.expr)}
    return {"iter": node.iterator, "lo": node.lower, "hi": node.upper,
            "body": [_node_to_json(c) for c in node.body]}


def _node_from_json(d):
    if "stmt" in d:
        w = d["write"]
        return Statement(d["stmt"],
                         AccessRelation(w["buffer"], tuple(tuple(int(x) for x in r) for r in w["matrix"])),
                         _expr_from_json(d["expr"]))
    return LoopNode(d["iter"], int(d["lo"]), int(d["hi"]),
                    tuple(_node_from_json(c) for c in d["body"]))


def program_to_json(program: Program) -> dict:
    return {"id": program.id,
            "buffers": [{"name": b.name, "dims": list(b.dims)} for b in program.buffers],
            "loops": [_node_to_json(r) for r in program.root_loops]}


def program_from_json(d: dict) -> Program:
    return Program(d["id"],
                   tuple(_node_from_json(r) for r in d["loops"]),
                   tuple(BufferDecl(b["name"], tuple(int(x) for x in b["dims"])) for b in d["buffers"]))
