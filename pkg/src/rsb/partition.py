"""Partitions, splitter search and the coarsest robust stutter bisimulation.

A candidate splitter for block ``P`` is a formula ``P U T`` or ``P W T``
whose target is a union of *exit classes* of ``P``: the blocks that contain
a successor of ``P`` lying outside ``P``.  Other blocks cannot influence which
states of ``P`` can enforce the formula, because a path from ``P`` first
leaves ``P`` into one of its successors.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CapExceeded, ModelError, PreconditionError
from .fixpoint import SMALL_SYSTEM, Region, _ecs_bits, from_bits, to_bits
from .logic import Modality, StutterStepFormula
from .ts import TransitionSystem


class Partition:
    """Equivalence relation on ``0..n-1`` given by its blocks.

    Blocks are numbered canonically by their smallest member, so equal
    relations always get identical numbering.
    """

    def __init__(self, n: int, blocks: Iterable[Iterable[int]], generation: int = 0):
        blocks = [frozenset(int(s) for s in b) for b in blocks]
        if any(not b for b in blocks):
            raise ModelError("partition blocks must be nonempty")
        blocks.sort(key=min)
        block_of = [-1] * n
        for i, b in enumerate(blocks):
            for s in b:
                if not 0 <= s < n:
                    raise ModelError(f"state {s} out of range")
                if block_of[s] != -1:
                    raise ModelError(f"state {s} occurs in two blocks")
                block_of[s] = i
        if -1 in block_of:
            raise ModelError("partition does not cover every state")
        self.n = n
        self.blocks: tuple[frozenset, ...] = tuple(blocks)
        self.block_of: tuple[int, ...] = tuple(block_of)
        self.generation = generation

    @classmethod
    def from_assignment(cls, assignment: Sequence, generation: int = 0) -> "Partition":
        groups: dict = {}
        for s, key in enumerate(assignment):
            groups.setdefault(key, []).append(s)
        return cls(len(assignment), groups.values(), generation)

    @classmethod
    def identity(cls, n: int) -> "Partition":
        return cls(n, [[s] for s in range(n)])

    @classmethod
    def universal(cls, n: int) -> "Partition":
        return cls(n, [range(n)] if n else [])

    @cached_property
    def block_array(self) -> np.ndarray:
        return np.array(self.block_of, dtype=np.int64)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[frozenset]:
        return iter(self.blocks)

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and self.n == other.n and self.blocks == other.blocks

    def __hash__(self) -> int:
        return hash(self.blocks)

    def __repr__(self) -> str:
        return f"Partition({[sorted(b) for b in self.blocks]})"

    def block(self, s: int) -> frozenset:
        return self.blocks[self.block_of[s]]

    def related(self, s: int, t: int) -> bool:
        return self.block_of[s] == self.block_of[t]

    def is_finer_than(self, other: "Partition") -> bool:
        """``self ⊆ other`` as relations."""
        return all(len({other.block_of[s] for s in b}) == 1 for b in self.blocks)

    def union_of(self, block_ids: Iterable[int]) -> frozenset:
        return frozenset().union(*(self.blocks[i] for i in block_ids))

    def label_consistent(self, G: TransitionSystem) -> bool:
        return all(len({G.labeling[s] for s in b}) == 1 for b in self.blocks)

    def to_dict(self, G: TransitionSystem) -> dict:
        return {"blocks": [[G.names[s] for s in sorted(b)] for b in self.blocks]}

    @classmethod
    def from_dict(cls, G: TransitionSystem, data: dict) -> "Partition":
        try:
            blocks = [[G.state_index(name) for name in b] for b in data["blocks"]]
        except (KeyError, TypeError):
            raise ModelError("partition file needs a 'blocks' list of state-name lists") from None
        return cls(G.n_states, blocks)


def initial_partition(G: TransitionSystem) -> Partition:
    """Blocks are the maximal sets of equally labelled states."""
    return Partition.from_assignment([tuple(sorted(ps)) for ps in G.labeling])


@dataclass(frozen=True)
class SplitterReport:
    formula: StutterStepFormula
    ecs_set: frozenset
    inside: frozenset
    outside: frozenset

    def __post_init__(self):
        if not self.inside or not self.outside:
            raise ValueError("a splitter divides its source block into two nonempty parts")


@dataclass
class SearchStats:
    formulas_tested: int = 0
    cache_hits: int = 0
    splitters_applied: int = 0
    iterations: int = 0


class _BlockSolver:
    """Answers ``P ∩ ECS(P ◇ T)`` for one block and targets given as block ids."""

    def __init__(self, G: TransitionSystem, P: frozenset):
        self.G = G
        self.P = P
        self.small = G.n_states <= SMALL_SYSTEM
        if self.small:
            masks = G.post_masks
            pbits = to_bits(P)
            out = 0
            for s in P:
                for m in masks[s].values():
                    out |= m
            self.exit_states = from_bits(out & ~pbits)
        else:
            self.region = Region(G, P)
            self.exit_states = self.region.exit_states

    def inside(self, R: Partition, target_blocks: Sequence[int], modality: Modality) -> frozenset:
        if self.small:
            psi = StutterStepFormula(self.P, R.union_of(target_blocks), modality)
            return _ecs_bits(self.G, psi).set & self.P
        sel = np.zeros(R.n_blocks, dtype=bool)
        sel[list(target_blocks)] = True
        hit = self.region.inside(sel[R.block_array], modality)
        return frozenset(self.region.states[hit].tolist())


class SplitterSearch:
    """Memoised splitter search across the iterations of the refinement loop.

    Results are keyed by block content and target content, so entries stay
    valid for every block and exit class that survives a refinement.
    """

    def __init__(self, G: TransitionSystem, descending: bool = False):
        self.G = G
        self.descending = descending
        self.stats = SearchStats()
        self._solvers: dict[frozenset, _BlockSolver] = {}
        self._memo: dict[tuple, frozenset] = {}
        self._stable: set[tuple] = set()
        self._learnt: dict[tuple, object] = {}

    def solver(self, P: frozenset) -> _BlockSolver:
        sv = self._solvers.get(P)
        if sv is None:
            sv = self._solvers[P] = _BlockSolver(self.G, P)
        return sv

    def exit_blocks(self, R: Partition, P: frozenset) -> tuple[int, ...]:
        return tuple(sorted({R.block_of[t] for t in self.solver(P).exit_states}))

    def inside(self, R: Partition, P: frozenset, target_blocks: Sequence[int], modality: Modality) -> frozenset:
        key = (P, frozenset(R.blocks[i] for i in target_blocks), modality)
        hit = self._memo.get(key)
        if hit is not None:
            self.stats.cache_hits += 1
            return hit
        self.stats.formulas_tested += 1
        res = self._memo[key] = self.solver(P).inside(R, target_blocks, modality)
        return res

    def find(self, R: Partition) -> SplitterReport | None:
        order = range(R.n_blocks - 1, -1, -1) if self.descending else range(R.n_blocks)
        for b in order:
            P = R.blocks[b]
            if len(P) == 1:
                continue
            exits = self.exit_blocks(R, P)
            stable_key = (P, frozenset(R.blocks[i] for i in exits))
            if stable_key in self._stable:
                continue
            for mod in (Modality.UNTIL, Modality.WEAK_UNTIL):
                found = self._one_step_splitter(R, P, mod) or self.learn(R, P, exits, mod)
                if isinstance(found, SplitterReport):
                    return found
            self._stable.add(stable_key)
        return None

    def _one_step_splitter(self, R: Partition, P: frozenset, modality: Modality) -> SplitterReport | None:
        """Try the exit classes of single transitions ``Post(s, a)`` as targets.

        A cheap pass that catches most splits of small blocks before the
        exact search runs.
        """
        if len(P) > FAMILY_MAX_BLOCK:
            return None
        seen = set()
        for s in sorted(P):
            for row in self.G.succ[s].values():
                tgt = frozenset(R.block_of[t] for t in row if t not in P)
                if not tgt or tgt in seen:
                    continue
                seen.add(tgt)
                inside = self.inside(R, P, sorted(tgt), modality)
                if inside and inside != P:
                    target = R.union_of(tgt)
                    return SplitterReport(StutterStepFormula(P, target, modality), target | inside, inside, P - inside)
        return None

    def minimal_targets(self, R: Partition, P: frozenset, modality: Modality) -> list[frozenset]:
        """Minimal exit-class targets (block ids) enforceable from all of ``P``.

        Raises :class:`PreconditionError` if ``P`` can be split.
        """
        found = self.learn(R, P, self.exit_blocks(R, P), modality)
        if isinstance(found, SplitterReport):
            raise PreconditionError(f"block is split by {found.formula}")
        return found

    def _family_targets(self, R: Partition, P: frozenset, seq: list[int], modality: Modality):
        """Splitter or whole-block minimal target masks from per-state target families.

        Returns ``None`` for large blocks, where membership queries are cheaper, and when the families grow past
        ``FAMILY_CAP``.  The caller then falls back to membership queries.
        """
        if len(P) > FAMILY_MAX_BLOCK:
            return None
        pos = {b: i for i, b in enumerate(seq)}
        exit_bit = {t: pos[R.block_of[t]] for t in self.solver(P).exit_states}
        fam = target_families(self.G, P, exit_bit, modality)
        self.stats.formulas_tested += 1
        if fam is None:
            return None
        members = sorted(P)
        ref = fam[members[0]]
        for s in members[1:]:
            if fam[s] == ref:
                continue
            T = next((m for m in fam[s] if not _covers(ref, m)), None)
            if T is None:
                T = next(m for m in ref if not _covers(fam[s], m))
            inside = frozenset(u for u in members if _covers(fam[u], T))
            target = R.union_of(seq[i] for i in range(len(seq)) if T >> i & 1)
            return SplitterReport(StutterStepFormula(P, target, modality), target | inside, inside, P - inside)
        return list(ref)

    def learn(self, R: Partition, P: frozenset, exits: tuple[int, ...], modality: Modality):
        """Either a splitter of ``P`` or the minimal targets that ``P`` enforces as a whole.

        For a block without splitter, ``T ↦ [P ⊆ ECS(P ◇ T)]`` is a monotone
        Boolean function of the exit classes in ``T``.  It is learnt from
        membership queries: minimal true sets (by greedy shrinking) and
        maximal false sets (complements of minimal transversals of the true
        sets) are collected until every target lies above a true set or below
        a false set.  A query that comes back partial is a splitter and ends
        the search.
        """
        key = (P, frozenset(R.blocks[i] for i in exits), modality)
        hit = self._learnt.get(key)
        if hit is not None:
            ids = {b: i for i, b in enumerate(R.blocks)}
            return [frozenset(ids[b] for b in t) for t in hit]
        seq = sorted(exits, reverse=self.descending)
        e = len(seq)
        full = (1 << e) - 1

        def blocks_of(mask: int) -> tuple[int, ...]:
            return tuple(seq[i] for i in range(e) if mask >> i & 1)

        def query(mask: int):
            tgt = blocks_of(mask)
            inside = self.inside(R, P, tgt, modality)
            if inside == P:
                return True
            if not inside:
                return False
            target = R.union_of(tgt)
            return SplitterReport(StutterStepFormula(P, target, modality), target | inside, inside, P - inside)

        fam = self._family_targets(R, P, seq, modality)
        if isinstance(fam, SplitterReport):
            return fam
        true_sets: list[int] = [] if fam is None else fam
        if fam is None:
            false_sets: set[int] = set()
            transversals = [0]  # minimal sets meeting every known true set
            # Complements of minimal transversals are the maximal sets above no
            # known true set.  A false answer there is already a maximal false set,
            # and maximal false sets stay candidates as true sets accumulate.
            pending = [full]
            while pending:
                witness = pending.pop()
                res = query(witness)
                if isinstance(res, SplitterReport):
                    return res
                if not res:
                    false_sets.add(witness)
                    continue
                mask = witness
                for i in range(e):
                    if mask >> i & 1:
                        r = query(mask & ~(1 << i))
                        if isinstance(r, SplitterReport):
                            return r
                        if r:
                            mask &= ~(1 << i)
                true_sets.append(mask)
                transversals = _extend_transversals(transversals, mask, e)
                pending = sorted(
                    (c for c in (full & ~h for h in transversals) if c not in false_sets),
                    key=lambda m: (bin(m).count("1"), -m),
                )
        result = sorted((frozenset(blocks_of(m)) for m in true_sets), key=lambda t: (len(t), sorted(t)))
        self._learnt[key] = [frozenset(R.blocks[i] for i in t) for t in result]
        return result


FAMILY_CAP = 2048
FAMILY_MAX_BLOCK = 64


def _covers(family: list[int], mask: int) -> bool:
    return any(m & ~mask == 0 for m in family)


def target_families(
    G: TransitionSystem,
    P: frozenset,
    exit_bit: dict[int, int],
    modality: Modality,
    cap: int | None = None,
) -> dict[int, list[int]] | None:
    """Minimal exit-class targets per state of ``P``, as bitmasks.

    ``fam[s]`` is the antichain of minimal ``T`` with ``s ∈ ECS(P ◇ T)``.
    Chaotic iteration of ``fam[s] = min ⋃_a (exit(s, a) ⊕ ⨁_{t ∈ Post(s, a) ∩ P} fam[t])``
    from ``{∅}`` yields the greatest fixpoint (weak until) and from the empty
    family the least one (until); for every fixed ``T`` this unrolls to the
    usual ``Pre`` iteration.  Returns ``None`` if some family exceeds ``cap``.
    """
    if cap is None:
        cap = FAMILY_CAP
    succ = G.succ
    members = sorted(P)
    opts: dict[int, list[tuple[int, tuple[int, ...]]]] = {}
    preds: dict[int, set[int]] = {s: set() for s in members}
    for s in members:
        raw = set()
        for row in succ[s].values():
            m, inner = 0, []
            for t in row:
                if t in P:
                    inner.append(t)
                else:
                    m |= 1 << exit_bit[t]
            raw.add((m, frozenset(inner)))
        keep = [o for o in raw if not any(q != o and q[0] & ~o[0] == 0 and q[1] <= o[1] for q in raw)]
        opts[s] = sorted((m, tuple(sorted(inner))) for m, inner in keep)
        for _, inner in opts[s]:
            for t in inner:
                preds[t].add(s)
    fam = {s: ([0] if modality is Modality.WEAK_UNTIL else []) for s in members}
    work = deque(members)
    queued = set(members)
    while work:
        s = work.popleft()
        queued.discard(s)
        acc: list[int] = []
        for m, inner in opts[s]:
            part = [m]
            for t in inner:
                part = _minimal_masks([x | y for x in part for y in fam[t]])
                if not part or len(part) > cap:
                    break
            acc.extend(part)
        new = sorted(_minimal_masks(acc))
        if len(new) > cap:
            return None
        if new != fam[s]:
            fam[s] = new
            for p in sorted(preds[s]):
                if p not in queued:
                    queued.add(p)
                    work.append(p)
    return fam


def _extend_transversals(transversals: list[int], edge: int, e: int) -> list[int]:
    """Minimal transversals after adding ``edge`` to the hypergraph (Berge step)."""
    keep = [h for h in transversals if h & edge]
    bits = [1 << i for i in range(e) if edge >> i & 1]
    fresh = set()
    for h in transversals:
        if h & edge:
            continue
        for b in bits:
            c = h | b
            if not any(k & ~c == 0 for k in keep):
                fresh.add(c)
    return keep + _minimal_masks(list(fresh))


def _minimal_masks(masks: list[int]) -> list[int]:
    out: list[int] = []
    for m in sorted(set(masks), key=lambda m: bin(m).count("1")):
        if not any(o & ~m == 0 for o in out):
            out.append(m)
    return out


def find_splitter(G: TransitionSystem, R: Partition, search: SplitterSearch | None = None) -> SplitterReport | None:
    """Some splitter of ``R``, or ``None`` if there is none."""
    if search is None:
        search = SplitterSearch(G)
    return search.find(R)


def refine(R: Partition, report: SplitterReport) -> Partition:
    """Replace the source block by its parts inside and outside the ECS."""
    P = report.formula.source
    if P not in R.blocks:
        raise PreconditionError("splitter source is not a block of the partition")
    if report.inside | report.outside != P or report.inside & report.outside:
        raise PreconditionError("splitter parts do not divide the source block")
    blocks = [b for b in R.blocks if b != P] + [report.inside, report.outside]
    return Partition(R.n, blocks, R.generation + 1)


@dataclass
class Minimization:
    partition: Partition
    stats: SearchStats
    chain: list[Partition] = field(default_factory=list)


def minimize(
    G: TransitionSystem,
    max_splits: int | None = None,
    descending: bool = False,
    keep_chain: bool = False,
    start: Partition | None = None,
) -> Minimization:
    """Run the refinement loop from the label partition until no splitter remains."""
    G.require_deadlock_free()
    R = start if start is not None else initial_partition(G)
    if not R.label_consistent(G):
        raise PreconditionError("start partition mixes differently labelled states")
    cap = G.n_states if max_splits is None else max_splits
    search = SplitterSearch(G, descending=descending)
    chain = [R] if keep_chain else []
    while True:
        search.stats.iterations += 1
        report = search.find(R)
        if report is None:
            return Minimization(R, search.stats, chain)
        if search.stats.splitters_applied >= cap:
            raise CapExceeded(f"more than {cap} block splits")
        R = refine(R, report)
        search.stats.splitters_applied += 1
        if keep_chain:
            chain.append(R)


def coarsest_rsb(G: TransitionSystem, max_splits: int | None = None) -> Partition:
    return minimize(G, max_splits).partition


def is_rsb(G: TransitionSystem, R: Partition) -> bool:
    """Label consistency plus absence of any splitter.

    Deadlocked states are handled by the plain fixpoint definition: they
    never enter ``Pre`` and so only satisfy formulas whose target holds them.
    """
    if R.n != G.n_states or not R.label_consistent(G):
        return False
    return SplitterSearch(G).find(R) is None
