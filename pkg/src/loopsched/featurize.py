"""Fixed-length featurization of statements and their transformations.

A statement plus the transformation sequence applied to it packs into one
flat vector with five named segments:

  domain_seg   per loop level: (lower, upper, log2(trip), present flag)
  access_seg   write access matrix block, then read blocks in expression
               post-order, each padded to max_rows x (max_depth+1); plus a
               trailing access-count scalar
  ops_seg      one one-hot row per operation node / constant leaf, emitted in
               post-order (access leaves are implicit through access_seg)
  sched_seg    composed affine schedule matrix (padded to max_depth square)
               plus one (kind one-hot, 2 params) row per transformation
  tags_seg     per-level parallel flags; tile (flag, level, size_a, size_b);
               unroll (flag, log2 factor)

featurize_statement emits raw values (access/schedule matrices appear
verbatim). normalize() divides each position by a fixed, config-owned
constant; dataset files and model inputs carry normalized vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import loop_ir, transform
from .loop_ir import Program, Statement, read_accesses, count_op_nodes
from .transform import compose_schedule

OP_ONE_HOT = ("ADD", "SUB", "MUL", "DIV", "MIN", "MAX", "LEAF_CONST")
ACCESS_ROWS = 4  # max buffer dimensionality


class CapacityError(ValueError):
    """Statement exceeds the configured access/op capacity."""


@dataclass(frozen=True)
class FeatureConfig:
    max_depth: int = 4
    max_accesses: int = 6
    max_ops: int = 16
    max_xforms: int = 4
    op_kinds: int = len(OP_ONE_HOT)
    pad_value: float = 0.0
    # fixed normalization divisors, serialized with checkpoints
    bound_scale: float = 1024.0
    trip_log_scale: float = 10.0
    matrix_scale: float = 4.0
    param_scale: float = 8.0
    size_scale: float = 32.0
    factor_log_scale: float = 4.0

    def to_json(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json(d: dict) -> "FeatureConfig":
        return FeatureConfig(**d)


@dataclass(frozen=True)
class SegmentTable:
    """Offsets (start, length) of each named segment in the flat vector."""

    domain: tuple[int, int]
    access: tuple[int, int]
    ops: tuple[int, int]
    sched: tuple[int, int]
    tags: tuple[int, int]

    @property
    def total(self) -> int:
        return self.tags[0] + self.tags[1]


def segment_table(config: FeatureConfig) -> SegmentTable:
    d = config.max_depth
    domain_len = d * 4
    access_block = ACCESS_ROWS * (d + 1)
    access_len = config.max_accesses * access_block + 1
    ops_len = config.max_ops * config.op_kinds
    sched_len = d * d + config.max_xforms * (len(transform.KINDS) + 2)
    tags_len = d + 4 + 2
    start = 0
    segs = []
    for length in (domain_len, access_len, ops_len, sched_len, tags_len):
        segs.append((start, length))
        start += length
    return SegmentTable(*segs)


def total_dim(config: FeatureConfig) -> int:
    """Deterministic total width; 307 with the defaults."""
    return segment_table(config).total


@dataclass(frozen=True)
class ComputationVector:
    """Raw featurization of one (statement, sequence) pair."""

    program_id: str
    statement_id: str
    values: np.ndarray
    segments: SegmentTable = field(repr=False)

    def segment(self, name: str) -> np.ndarray:
        start, length = getattr(self.segments, name)
        return self.values[start:start + length]


def _transform_params(t) -> tuple[float, float]:
    if t.kind == "Interchange":
        return (t.a, t.b)
    if t.kind == "Reversal":
        return (t.level, 0.0)
    if t.kind == "Skewing":
        return (t.a, t.b)
    if t.kind == "Parallelize":
        return (t.level, 0.0)
    if t.kind == "Tile":
        return (t.a, t.size_a)
    return (t.level, t.factor)  # Unroll


def featurize_statement(program: Program, statement: Statement, sequence,
                        config: FeatureConfig = FeatureConfig()) -> ComputationVector:
    segs = segment_table(config)
    vec = np.full(segs.total, config.pad_value, dtype=np.float64)
    depth = loop_ir.loop_depth(statement.id, program)
    d = config.max_depth
    if depth > d:
        raise CapacityError(f"statement {statement.id!r}: depth {depth} exceeds max_depth {d}")

    # domain_seg
    base = segs.domain[0]
    for l, (lo, hi) in enumerate(loop_ir.iteration_domain(statement.id, program)):
        vec[base + 4 * l:base + 4 * l + 4] = (lo, hi, math.log2(hi - lo), 1.0)

    # access_seg: write block, then reads in post-order
    accesses = [statement.write] + read_accesses(statement.expr)
    if len(accesses) > config.max_accesses:
        raise CapacityError(
            f"statement {statement.id!r}: {len(accesses)} accesses exceed max_accesses {config.max_accesses}")
    base = segs.access[0]
    block = ACCESS_ROWS * (d + 1)
    for i, acc in enumerate(accesses):
        mat = acc.as_array()
        if mat.shape[0] > ACCESS_ROWS:
            raise CapacityError(
                f"statement {statement.id!r}: access to {acc.buffer!r} has {mat.shape[0]} rows, max {ACCESS_ROWS}")
        # k x (depth+1) matrix embedded verbatim at the block's top-left
        for r in range(mat.shape[0]):
            row_base = base + i * block + r * (d + 1)
            vec[row_base:row_base + depth + 1] = mat[r]
    vec[base + segs.access[1] - 1] = len(accesses)

    # ops_seg: post-order one-hot rows for op nodes and constant leaves
    rows = [n.kind for n in statement.expr.walk_postorder() if n.kind in OP_ONE_HOT]
    if len(rows) > config.max_ops:
        raise CapacityError(
            f"statement {statement.id!r}: {len(rows)} op/const rows exceed max_ops {config.max_ops}")
    base = segs.ops[0]
    for i, kind in enumerate(rows):
        vec[base + i * config.op_kinds + OP_ONE_HOT.index(kind)] = 1.0

    # sched_seg: composed schedule matrix + per-transform (one-hot, params) rows
    if len(sequence) > config.max_xforms:
        raise CapacityError(
            f"statement {statement.id!r}: {len(sequence)} transforms exceed max_xforms {config.max_xforms}")
    base = segs.sched[0]
    sched = compose_schedule(sequence, depth)
    for r in range(depth):
        vec[base + r * d:base + r * d + depth] = sched[r]
    row_w = len(transform.KINDS) + 2
    rows_base = base + d * d
    for i, t in enumerate(sequence):
        row = rows_base + i * row_w
        vec[row + transform.KINDS.index(t.kind)] = 1.0
        vec[row + len(transform.KINDS):row + row_w] = _transform_params(t)

    # tags_seg
    base = segs.tags[0]
    for t in sequence:
        if t.kind == "Parallelize":
            vec[base + t.level] = 1.0
        elif t.kind == "Tile":
            vec[base + d:base + d + 4] = (1.0, t.a, t.size_a, t.size_b)
        elif t.kind == "Unroll":
            vec[base + d + 4:base + d + 6] = (1.0, math.log2(t.factor))

    return ComputationVector(program.id, statement.id, vec, segs)


def norm_divisors(config: FeatureConfig) -> np.ndarray:
    """Per-position normalization divisors (all fixed constants)."""
    segs = segment_table(config)
    d = config.max_depth
    div = np.ones(segs.total, dtype=np.float64)
    base = segs.domain[0]
    for l in range(d):
        div[base + 4 * l:base + 4 * l + 3] = (config.bound_scale, config.bound_scale,
                                              config.trip_log_scale)
    base, length = segs.access
    div[base:base + length - 1] = config.matrix_scale
    div[base + length - 1] = config.max_accesses
    base = segs.sched[0]
    div[base:base + d * d] = config.matrix_scale
    row_w = len(transform.KINDS) + 2
    for i in range(config.max_xforms):
        row = base + d * d + i * row_w
        div[row + len(transform.KINDS):row + row_w] = config.param_scale
    base = segs.tags[0]
    div[base + d + 1] = config.max_depth        # tile level
    div[base + d + 2:base + d + 4] = config.size_scale
    div[base + d + 5] = config.factor_log_scale  # log2(unroll factor)
    return div


def normalize(values: np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / norm_divisors(config)


def denormalize(values: np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * norm_divisors(config)


# ---------------------------------------------------------------------------
# Program trees: the AST mirror with computation vectors at the leaves.
# ---------------------------------------------------------------------------

@dataclass
class ProgramTree:
    """Loop node of the featurized AST; a virtual root has level -1, trip 1."""

    trip_count: int
    level: int
    children: list  # ProgramTree | ComputationVector, in program order

    def leaves(self) -> list[ComputationVector]:
        out = []
        for c in self.children:
            if isinstance(c, ProgramTree):
                out.extend(c.leaves())
            else:
                out.append(c)
        return out

    def loop_depth_below(self) -> int:
        sub = [c.loop_depth_below() for c in self.children if isinstance(c, ProgramTree)]
        return 1 + max(sub) if sub else (0 if self.level < 0 else 1)


def featurize_program(program: Program, sequence,
                      config: FeatureConfig = FeatureConfig()) -> ProgramTree:
    """Tree isomorphic to the program loop AST, leaves = statement vectors."""

    def build(node, level):
        if isinstance(node, loop_ir.LoopNode):
            sub = ProgramTree(node.trip_count, level, [])
            for c in node.body:
                sub.children.append(build(c, level + 1))
            return sub
        return featurize_statement(program, node, sequence, config)

    root = ProgramTree(1, -1, [build(r, 0) for r in program.root_loops])
    return root


# ---------------------------------------------------------------------------
# Vector dataset files: JSON Lines with a header record carrying the
# FeatureConfig and total_dim; readers reject mismatched total_dim.
# ---------------------------------------------------------------------------

def write_vector_dataset(path, records, config: FeatureConfig):
    """records: iterable of (program_id, statement_id, sequence, vector)."""
    n = 0
    with open(path, "w") as f:
        header = {"feature_config": config.to_json(), "total_dim": total_dim(config)}
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for program_id, statement_id, sequence, vector in records:
            rec = {"program_id": program_id, "statement_id": statement_id,
                   "sequence": transform.sequence_to_json(sequence),
                   "vector": [float(x) for x in vector]}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
            n += 1
    return n


def read_vector_dataset(path, config: FeatureConfig | None = None):
    """Returns (config, program_ids, matrix) with one row per record."""
    with open(path) as f:
        header = json.loads(f.readline())
        file_config = FeatureConfig.from_json(header["feature_config"])
        if header["total_dim"] != total_dim(file_config):
            raise ValueError(f"corrupt header: total_dim {header['total_dim']} != "
                             f"{total_dim(file_config)}")
        if config is not None and total_dim(config) != header["total_dim"]:
            raise ValueError(
                f"dataset total_dim {header['total_dim']} does not match configured {total_dim(config)}")
        ids = []
        rows = []
        for line in f:
            rec = json.loads(line)
            ids.append(rec["program_id"])
            rows.append(rec["vector"])
    mat = np.array(rows, dtype=np.float64) if rows else np.zeros((0, total_dim(file_config)))
    return file_config, ids, mat
