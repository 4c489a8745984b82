"""Random program/transformation generation and the analytic cost oracle.

The oracle assigns every (program, sequence) pair a deterministic abstract
cost; speedups are ratios against the untransformed program. It stands in
for compiling and running code, so labels are exactly reproducible.

Per-program determinism: program i of a generation run derives its RNG from
SeedSequence(seed, spawn_key=(domain, i)), so generation order and worker
layout cannot change the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import featurize, loop_ir, transform
from .loop_ir import (AccessRelation, BufferDecl, Expr, LoopNode, Program,
                      Statement, binop, const, count_op_nodes, read)
from .transform import (ContractError, Interchange, Parallelize, Reversal,
                        Skewing, Tile, Unroll, applicable,
                        compose_schedule_inverse, effective_loop_structure,
                        sequence_key)

LABELED_DOMAIN = 0
PRETRAIN_DOMAIN = 1


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_programs: int = 100
    min_statements: int = 1
    max_statements: int = 3
    trip_choices: tuple[int, ...] = (8, 16, 32, 64, 128)
    min_sequences: int = 16
    max_sequences: int = 32
    depth_weights: tuple[float, ...] = (0.15, 0.30, 0.30, 0.25)
    second_root_prob: float = 0.15

    def to_json(self) -> dict:
        d = self.__dict__.copy()
        d["trip_choices"] = list(self.trip_choices)
        d["depth_weights"] = list(self.depth_weights)
        return d

    @staticmethod
    def from_json(d: dict) -> "GenConfig":
        d = dict(d)
        d["trip_choices"] = tuple(d["trip_choices"])
        d["depth_weights"] = tuple(d["depth_weights"])
        return GenConfig(**d)


@dataclass(frozen=True)
class MachineConfig:
    """Abstract machine for the cost oracle (fixed, documented constants)."""

    cores: int = 8                 # P
    parallel_efficiency: float = 0.9   # eta
    stride_penalty_cap: int = 16   # S
    tile_locality_bonus: float = 0.8   # tau
    unroll_bonus_cap: float = 0.7  # upsilon

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @staticmethod
    def from_json(d: dict) -> "MachineConfig":
        return MachineConfig(**d)


@dataclass(frozen=True)
class LabeledSample:
    program_id: str
    sequence: tuple
    speedup: float


def _program_rng(seed: int, domain: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(domain, index)))


# ---------------------------------------------------------------------------
# Program generation
# ---------------------------------------------------------------------------

_OP_CHOICES = ("ADD", "MUL", "SUB", "DIV", "MIN", "MAX")
_OP_WEIGHTS = (0.35, 0.28, 0.15, 0.08, 0.07, 0.07)
_INNER_COEFS = (0, 1, 1, 1, 2, 4, 8, 16)


def _gen_access(rng, buffer: BufferDecl, depth: int) -> AccessRelation:
    """Random affine access; the last row is the fastest-varying dimension."""
    k = buffer.ndim
    mat = np.zeros((k, depth + 1), dtype=np.int64)
    # map rows to iterators, innermost-aligned, occasionally permuted
    iters = list(range(depth))
    if rng.random() < 0.25:
        rng.shuffle(iters)
    for r in range(k):
        src = iters[(depth - k + r) % depth]
        if r == k - 1:
            coef = int(rng.choice(_INNER_COEFS))
        else:
            coef = int(rng.choice((1, 1, 1, 2)))
        mat[r, src] = coef
        if rng.random() < 0.20 and depth > 1:
            other = int(rng.integers(depth))
            if other != src:
                mat[r, other] += 1
        if rng.random() < 0.25:
            mat[r, depth] = int(rng.integers(-2, 3))
    return AccessRelation(buffer.name, tuple(tuple(int(x) for x in row) for row in mat))


def _gen_expr(rng, buffers, depth: int, max_reads: int) -> Expr:
    n_reads = int(rng.integers(1, max_reads + 1))
    n_consts = int(rng.integers(0, 3))
    if n_reads + n_consts < 2:
        n_consts = 2 - n_reads
    leaves = [read(_gen_access(rng, buffers[int(rng.integers(len(buffers)))], depth))
              for _ in range(n_reads)]
    leaves += [const(float(rng.integers(1, 5))) for _ in range(n_consts)]
    order = rng.permutation(len(leaves))
    acc = leaves[order[0]]
    for idx in order[1:]:
        op = str(rng.choice(_OP_CHOICES, p=_OP_WEIGHTS))
        acc = binop(op, acc, leaves[idx])  # right child is a leaf, so DIV is safe
    return acc


def gen_program(seed: int, index: int, config: GenConfig = GenConfig(),
                domain: int = LABELED_DOMAIN) -> Program:
    """Deterministic random program; always passes loop_ir.validate."""
    rng = _program_rng(seed, domain, index)
    prefix = "p" if domain == LABELED_DOMAIN else "q"
    pid = f"{prefix}{index:06d}"

    n_buffers = int(rng.integers(1, 4))
    n_stmts = int(rng.integers(config.min_statements, config.max_statements + 1))
    depth = int(rng.choice(np.arange(1, loop_ir.MAX_DEPTH + 1), p=config.depth_weights))

    buffers = []
    for b in range(n_buffers):
        k = int(rng.integers(1, min(loop_ir.MAX_BUFFER_DIMS, max(2, depth)) + 1))
        dims = tuple(int(rng.choice((16, 32, 64, 128, 256))) for _ in range(k))
        buffers.append(BufferDecl(f"{pid}_B{b}", dims))

    two_roots = depth >= 2 and n_stmts >= 2 and rng.random() < config.second_root_prob

    def build_chain(chain_id: str, chain_depth: int, stmt_ids: list[str]):
        trips = [int(rng.choice(config.trip_choices)) for _ in range(chain_depth)]
        # statements sit at the deepest level or one above it
        levels = []
        for i, _ in enumerate(stmt_ids):
            if i == 0 or chain_depth == 1 or rng.random() < 0.7:
                levels.append(chain_depth)
            else:
                levels.append(chain_depth - 1)
        stmts = []
        for sid, lvl in zip(stmt_ids, levels):
            wbuf = buffers[int(rng.integers(len(buffers)))]
            stmts.append((lvl, Statement(sid, _gen_access(rng, wbuf, lvl),
                                         _gen_expr(rng, buffers, lvl, max_reads=4))))
        body_by_level: dict[int, list] = {}
        for lvl, s in stmts:
            body_by_level.setdefault(lvl, []).append(s)
        node_body: tuple = tuple(body_by_level.get(chain_depth, []))
        node = LoopNode(f"{chain_id}i{chain_depth - 1}",
                        0, trips[chain_depth - 1], node_body)
        for lvl in range(chain_depth - 1, 0, -1):
            here = body_by_level.get(lvl, [])
            pos = int(rng.integers(len(here) + 1)) if here else 0
            body = tuple(here[:pos]) + (node,) + tuple(here[pos:])
            node = LoopNode(f"{chain_id}i{lvl - 1}", 0, trips[lvl - 1], body)
        return node

    stmt_ids = [f"{pid}_s{i}" for i in range(n_stmts)]
    if two_roots:
        cut = int(rng.integers(1, n_stmts))
        d2 = int(rng.integers(1, max(2, depth)))
        roots = (build_chain("", depth, stmt_ids[:cut]),
                 build_chain("r", d2, stmt_ids[cut:]))
    else:
        roots = (build_chain("", depth, stmt_ids),)
    return Program(pid, roots, tuple(buffers))


# ---------------------------------------------------------------------------
# Transformation sampling
# ---------------------------------------------------------------------------

def _min_depth(program: Program) -> int:
    return min(loop_ir.loop_depth(s.id, program) for s in program.statements)


def _min_trip(program: Program, level: int) -> int:
    trips = []
    for s in program.statements:
        dom = loop_ir.iteration_domain(s.id, program)
        trips.append(dom[level][1] - dom[level][0])
    return min(trips)


def _draw_sequence(rng, program: Program) -> tuple | None:
    depth = _min_depth(program)
    length = int(rng.choice((1, 2, 3, 4), p=(0.35, 0.30, 0.20, 0.15)))
    kinds = ("Interchange", "Reversal", "Skewing", "Parallelize", "Tile", "Unroll")
    weights = np.array((0.16, 0.10, 0.12, 0.24, 0.18, 0.20))
    used = set()
    seq = []
    for _ in range(length):
        for _attempt in range(8):
            kind = str(rng.choice(kinds, p=weights / weights.sum()))
            if kind in ("Parallelize", "Tile", "Unroll") and kind in used:
                continue
            if kind in ("Interchange", "Skewing", "Tile") and depth < 2:
                continue
            if kind == "Interchange":
                a, b = sorted(rng.choice(depth, size=2, replace=False).tolist())
                seq.append(Interchange(int(a), int(b)))
            elif kind == "Reversal":
                seq.append(Reversal(int(rng.integers(depth))))
            elif kind == "Skewing":
                a, b = sorted(rng.choice(depth, size=2, replace=False).tolist())
                seq.append(Skewing(int(a), int(b), 1, int(rng.integers(1, 5))))
            elif kind == "Parallelize":
                seq.append(Parallelize(int(rng.integers(depth))))
            elif kind == "Tile":
                a = int(rng.integers(depth - 1))
                sizes_a = [s for s in transform.TILE_SIZES if s <= _min_trip(program, a)]
                sizes_b = [s for s in transform.TILE_SIZES if s <= _min_trip(program, a + 1)]
                if not sizes_a or not sizes_b:
                    continue
                seq.append(Tile(a, a + 1, int(rng.choice(sizes_a)), int(rng.choice(sizes_b))))
            else:
                lvl = int(rng.integers(depth))
                factors = [f for f in transform.UNROLL_FACTORS if f <= _min_trip(program, lvl)]
                if not factors:
                    continue
                seq.append(Unroll(lvl, int(rng.choice(factors))))
            used.add(kind)
            break
    return tuple(seq) if seq else None


def sequence_applicable(sequence, program: Program) -> bool:
    return all(not applicable(sequence, s, program) for s in program.statements)


def sample_sequences(program: Program, seed: int, index: int,
                     config: GenConfig = GenConfig(),
                     domain: int = LABELED_DOMAIN) -> list[tuple]:
    """Distinct applicable sequences; the empty sequence comes first."""
    rng = _program_rng(seed, domain + 10, index)
    n_target = int(rng.integers(config.min_sequences, config.max_sequences + 1))
    out: list[tuple] = [()]
    seen = {sequence_key(())}
    attempts = 0
    while len(out) < n_target and attempts < 40 * n_target:
        attempts += 1
        seq = _draw_sequence(rng, program)
        if seq is None:
            continue
        key = sequence_key(seq)
        if key in seen:
            continue
        if not sequence_applicable(seq, program):
            continue
        seen.add(key)
        out.append(seq)
    return out


# ---------------------------------------------------------------------------
# Cost oracle
# ---------------------------------------------------------------------------

def _statement_cost(program: Program, statement: Statement, sequence,
                    machine: MachineConfig) -> float:
    depth = loop_ir.loop_depth(statement.id, program)
    structure = effective_loop_structure(statement, sequence, program)

    n_ops = count_op_nodes(statement.expr)
    work = float(n_ops)
    for desc in structure:
        work *= desc.instance_count

    sched_inv = compose_schedule_inverse(sequence, depth)
    tile = next((t for t in sequence if t.kind == "Tile"), None)
    unroll = next((t for t in sequence if t.kind == "Unroll"), None)
    parallel = next((t for t in sequence if t.kind == "Parallelize"), None)

    accesses = [statement.write] + loop_ir.read_accesses(statement.expr)
    penalties = []
    tiled_reuse = False
    for acc in accesses:
        a_iter = acc.as_array()[:, :depth] @ sched_inv
        stride = int(a_iter[-1, depth - 1])
        if stride == 0:
            penalties.append(1.0)
        else:
            penalties.append(1.0 + 0.25 * min(machine.stride_penalty_cap, abs(stride)))
        if tile is not None:
            for c in (tile.a, tile.b):
                if c < depth - 1 and np.any(a_iter[:, c] != 0):
                    tiled_reuse = True
    mem = float(np.mean(penalties))

    locality = machine.tile_locality_bonus if (tile is not None and tiled_reuse) else 1.0
    if unroll is not None:
        unroll_gain = max(machine.unroll_bonus_cap, 1.0 - 0.05 * math.log2(unroll.factor))
    else:
        unroll_gain = 1.0
    if parallel is not None:
        par_desc = next(d for d in structure if d.parallel)
        eff_workers = min(machine.cores, par_desc.trip_count)
        parallel_gain = 1.0 / (eff_workers * machine.parallel_efficiency)
    else:
        parallel_gain = 1.0

    return work * mem * locality * unroll_gain * parallel_gain


def oracle_cost(program: Program, sequence, machine: MachineConfig = MachineConfig()) -> float:
    """Total abstract time units for the program under the sequence."""
    for s in program.statements:
        violations = applicable(sequence, s, program)
        if violations:
            raise ContractError(
                f"sequence not applicable to {s.id!r}: {violations[0]}")
    return sum(_statement_cost(program, s, sequence, machine) for s in program.statements)


def speedup(program: Program, sequence, machine: MachineConfig = MachineConfig()) -> float:
    """oracle_cost(empty) / oracle_cost(sequence); 1.0 exactly for empty."""
    if not sequence:
        return 1.0
    return oracle_cost(program, (), machine) / oracle_cost(program, sequence, machine)


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------

@dataclass
class LabeledDataset:
    programs: dict[str, Program]
    splits: dict[str, list[LabeledSample]] = field(default_factory=dict)


def generate_labeled_samples(config: GenConfig, machine: MachineConfig):
    """Yields (program, [LabeledSample...]) per generated program."""
    for i in range(config.n_programs):
        program = gen_program(config.seed, i, config, LABELED_DOMAIN)
        samples = [LabeledSample(program.id, seq, speedup(program, seq, machine))
                   for seq in sample_sequences(program, config.seed, i, config, LABELED_DOMAIN)]
        yield program, samples


def split_programs(n_programs: int, seed: int) -> dict[str, np.ndarray]:
    """5:1:1 train/valid/test split of program indices (by program, not sample)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(99,)))
    perm = rng.permutation(n_programs)
    n_valid = int(round(n_programs / 7.0))
    n_test = n_valid
    return {"test": np.sort(perm[:n_test]),
            "valid": np.sort(perm[n_test:n_test + n_valid]),
            "train": np.sort(perm[n_test + n_valid:])}


def build_labeled_dataset(config: GenConfig,
                          machine: MachineConfig = MachineConfig()) -> LabeledDataset:
    """Labeled splits keyed 'train'/'valid'/'test'; no program straddles splits."""
    programs: dict[str, Program] = {}
    per_program: list[list[LabeledSample]] = []
    for program, samples in generate_labeled_samples(config, machine):
        programs[program.id] = program
        per_program.append(samples)
    split_idx = split_programs(config.n_programs, config.seed)
    ds = LabeledDataset(programs)
    for name, indices in split_idx.items():
        ds.splits[name] = [s for i in indices for s in per_program[i]]
    return ds


def build_pretrain_records(config: GenConfig,
                           feature_config: featurize.FeatureConfig = featurize.FeatureConfig(),
                           skip_counter: dict | None = None):
    """Unlabeled vector records for autoencoder pre-training (a generator).

    Never calls the oracle. Capacity errors are skipped; pass skip_counter
    (a dict) to receive the count under key "skipped".
    """
    divisors = featurize.norm_divisors(feature_config)
    for i in range(config.n_programs):
        program = gen_program(config.seed, i, config, PRETRAIN_DOMAIN)
        sequences = sample_sequences(program, config.seed, i, config, PRETRAIN_DOMAIN)
        for seq in sequences:
            for stmt in program.statements:
                try:
                    cv = featurize.featurize_statement(program, stmt, seq, feature_config)
                except featurize.CapacityError:
                    if skip_counter is not None:
                        skip_counter["skipped"] = skip_counter.get("skipped", 0) + 1
                    continue
                yield program.id, stmt.id, seq, cv.values / divisors


def subsample_fraction(items: list, fraction: float, seed: int) -> list:
    """floor(fraction*N) items, deterministic and nested across fractions."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    perm = rng.permutation(len(items))
    k = int(math.floor(fraction * len(items)))
    return [items[i] for i in perm[:k]]
