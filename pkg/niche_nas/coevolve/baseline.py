"""
Rule-based evolutionary operators: niche-preserving single-edge mutation,
uniform per-edge crossover and the repair step that pulls any cell back into
a niche.
"""
from typing import Sequence
import random

from ..arch_space import (
    EDGES,
    FILL_OPS,
    NUM_EDGES,
    ArchCell,
    ComplexityProfile,
    NichePredicate,
    OpKind,
    complexity,
    decode,
    encode,
)
from .operator_base import ArchitectureOperator, GenerationContext, OperatorResult, ParentRecord
from .proposals import CandidateProposal

import logging
logger = logging.getLogger(__name__)

__all__ = [
    'PARENT_SELECTION_MODES',
    'repair',
    'baseline_mutate',
    'baseline_crossover',
    'select_parents',
    'mutation_proposal',
    'crossover_proposal',
    'BaselineOperator',
]

PARENT_SELECTION_MODES = ('uniform', 'rank')
_C3 = OpKind.NOR_CONV_3X3
_C1 = OpKind.NOR_CONV_1X1
_MAX_REPAIR_TRIES = 32


def _shift(profile : ComplexityProfile, old : OpKind, new : OpKind) -> ComplexityProfile:
    n3 = profile.n_conv3x3 - (old is _C3) + (new is _C3)
    n1 = profile.n_conv1x1 - (old is _C1) + (new is _C1)
    return ComplexityProfile(n3, n1)


def repair(cell : ArchCell, niche : NichePredicate, rng : random.Random) -> ArchCell:
    """
    Smallest random edit of the convolution counts that puts ``cell`` into
    ``niche``. Cells already in the niche are returned unchanged.

    Surplus ``nor_conv_3x3`` edges are demoted to a random fill operator;
    deficits are covered by promoting fill edges (then ``nor_conv_1x1``
    edges). The ``nor_conv_1x1`` count is fixed the same way, promoting
    ``none`` edges first and spare ``nor_conv_3x3`` edges last. Only edges
    whose operator affects a convolution count are touched.
    """
    if niche.contains(cell):
        return cell
    edges = list(cell.edges)

    def positions(*ops):
        return [i for i, e in enumerate(edges) if e in ops]

    lo3, hi3 = niche.n_conv3x3.bounds()
    lo1, hi1 = niche.n_conv1x1.bounds()

    n3 = edges.count(_C3)
    if n3 > hi3:
        for i in rng.sample(positions(_C3), n3 - hi3):
            edges[i] = rng.choice(FILL_OPS)
    elif n3 < lo3:
        need = lo3 - n3
        pool = positions(*FILL_OPS)
        picked = rng.sample(pool, min(need, len(pool)))
        if need > len(pool):
            picked += rng.sample(positions(_C1), need - len(pool))
        for i in picked:
            edges[i] = _C3

    n1 = edges.count(_C1)
    if n1 > hi1:
        for i in rng.sample(positions(_C1), n1 - hi1):
            edges[i] = rng.choice(FILL_OPS)
    elif n1 < lo1:
        need = lo1 - n1
        spare3 = positions(_C3)
        spare3 = rng.sample(spare3, max(0, len(spare3) - lo3))
        for group in (positions(OpKind.NONE), positions(OpKind.SKIP_CONNECT, OpKind.AVG_POOL_3X3), spare3):
            take = rng.sample(group, min(need, len(group)))
            for i in take:
                edges[i] = _C1
            need -= len(take)
            if need == 0:
                break

    child = ArchCell(tuple(edges))
    if not niche.contains(child):
        msg = f"Repair failed to place {encode(cell)!r} into niche {niche.niche_id} ({niche.describe()})"
        logger.error(msg)
        raise RuntimeError(msg)
    return child


def baseline_mutate(parent : ArchCell, niche : NichePredicate, rng : random.Random) -> ArchCell:
    """
    Change exactly one edge of ``parent`` while staying in ``niche``.

    The move is drawn uniformly from all single-edge changes that keep the
    niche predicate. If there is none, a random edge is changed and the
    result repaired.
    """
    profile = complexity(parent)
    moves = [
        (i, op)
        for i, old in enumerate(parent.edges)
        for op in OpKind
        if op is not old and niche.contains_profile(_shift(profile, old, op))
    ]
    if moves:
        i, op = rng.choice(moves)
        return parent.with_edge(i, op)

    child = parent
    for _ in range(_MAX_REPAIR_TRIES):
        i = rng.randrange(NUM_EDGES)
        op = rng.choice([o for o in OpKind if o is not parent.edges[i]])
        child = repair(parent.with_edge(i, op), niche, rng)
        if child != parent:
            return child
    logger.warning(f"Niche {niche.niche_id} has no cell other than {encode(parent)!r}")
    return child


def baseline_crossover(
    p1 : ArchCell,
    p2 : ArchCell,
    niche : NichePredicate,
    rng : random.Random,
) -> ArchCell:
    """
    Uniform per-edge crossover of two parents, repaired into ``niche``.
    """
    edges = tuple(a if rng.random() < 0.5 else b for a, b in zip(p1.edges, p2.edges))
    return repair(ArchCell(edges), niche, rng)


def select_parents(
    parents : Sequence[ParentRecord],
    rng : random.Random,
    k : int = 1,
    mode : str = "uniform",
) -> list[ParentRecord]:
    """
    Draw ``k`` distinct parents.

    ``'uniform'`` draws uniformly. ``'rank'`` orders parents by latency and
    draws with weight ``1 / (1 + position)``.
    """
    if mode not in PARENT_SELECTION_MODES:
        raise ValueError(f"parent selection must be one of {PARENT_SELECTION_MODES}, got {mode!r}")
    if k > len(parents):
        raise ValueError(f"Cannot draw {k} distinct parents from {len(parents)}")
    if mode == "uniform":
        return rng.sample(list(parents), k)
    pool = sorted(parents, key=lambda p: (p.latency, -p.score, p.arch))
    weights = [1.0 / (1 + i) for i in range(len(pool))]
    picked = []
    for _ in range(k):
        j = rng.choices(range(len(pool)), weights=weights)[0]
        picked.append(pool.pop(j))
        weights.pop(j)
    return picked


def _describe_edits(parent : ArchCell, child : ArchCell) -> str:
    edits = [
        f"edge {EDGES[i][0]}<-{EDGES[i][1]} {a.op_name} -> {b.op_name}"
        for i, (a, b) in enumerate(zip(parent.edges, child.edges))
        if a is not b
    ]
    return "; ".join(edits) if edits else "no change"


def mutation_proposal(ctx : GenerationContext, child_id : str = "1") -> CandidateProposal:
    parent, = select_parents(ctx.parents, ctx.rng, 1, ctx.parent_selection)
    parent_cell = decode(parent.arch)
    child = baseline_mutate(parent_cell, ctx.niche, ctx.rng)
    return CandidateProposal(
        child_id=child_id,
        operation="mutation",
        architecture_code=encode(child),
        rationale=f"mutation of {parent.arch}: {_describe_edits(parent_cell, child)}",
    )


def crossover_proposal(ctx : GenerationContext, child_id : str = "1") -> CandidateProposal:
    p1, p2 = select_parents(ctx.parents, ctx.rng, 2, ctx.parent_selection)
    child = baseline_crossover(decode(p1.arch), decode(p2.arch), ctx.niche, ctx.rng)
    return CandidateProposal(
        child_id=child_id,
        operation="crossover",
        architecture_code=encode(child),
        rationale=f"uniform crossover of {p1.arch} and {p2.arch}",
    )


class BaselineOperator(ArchitectureOperator):
    """
    Crossover with probability ``crossover_prob`` (when the archive holds at
    least two parents), otherwise mutation, ``n_children`` times.
    """
    kind = "baseline"

    def _generate(self, ctx : GenerationContext) -> OperatorResult:
        result = OperatorResult()
        if not ctx.parents:
            return result
        for i in range(ctx.n_children):
            crossover = ctx.rng.random() < ctx.crossover_prob and len(ctx.parents) >= 2
            make = crossover_proposal if crossover else mutation_proposal
            result.proposals.append(make(ctx, child_id=str(i + 1)))
        return result
