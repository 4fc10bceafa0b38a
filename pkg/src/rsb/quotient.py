"""Quotient systems over a robust stutter bisimulation.

The quotient's labels are the superblock step formulas enforceable from a
whole block.  Their number is exponential, so each block stores only the
inclusion-minimal targets per modality and answers membership of any other
formula through :meth:`QuotientSystem.has_label`.

Until entries dominate weak-until entries: whenever ``P U T`` is enforceable
so is ``P W T'`` for every ``T' ⊇ T``, hence a weak-until target is kept only
if it contains no minimal until target.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import NotBisimulationError
from .logic import Modality, StutterStepFormula
from .partition import Partition, SplitterSearch, is_rsb
from .ts import TransitionSystem, union

U, W = Modality.UNTIL, Modality.WEAK_UNTIL


@dataclass(frozen=True)
class QuotientSystem:
    G: TransitionSystem
    R: Partition
    min_targets: Mapping[tuple[int, Modality], tuple[frozenset, ...]]
    initial_blocks: frozenset

    @property
    def n_blocks(self) -> int:
        return self.R.n_blocks

    def labeling(self, b: int) -> frozenset:
        return self.G.labeling[min(self.R.blocks[b])]

    def has_label(self, P: int, modality: Modality, target: Iterable[int]) -> bool:
        """Is ``P ◇ target`` (target given as block ids) a label of the quotient?"""
        target = frozenset(target)
        if P in target:
            return False
        if any(t <= target for t in self.min_targets[(P, U)]):
            return True
        return modality is W and any(t <= target for t in self.min_targets[(P, W)])

    def delta_view(self, P: int, modality: Modality, target: Iterable[int]) -> frozenset:
        """Successor blocks of ``P`` under the label ``P ◇ target``."""
        target = frozenset(target)
        if not self.has_label(P, modality, target):
            return frozenset()
        return target | {P} if modality is W else target

    def minimal_formulas(self, P: int) -> list[tuple[Modality, frozenset]]:
        return [(mod, t) for mod in (U, W) for t in self.min_targets[(P, mod)]]

    @property
    def deadlock_blocks(self) -> frozenset:
        return frozenset(b for b in range(self.n_blocks) if not self.minimal_formulas(b))

    def block_name(self, b: int) -> str:
        return block_name(self.G, self.R.blocks[b])

    def formula_label(self, P: int, modality: Modality, target: Iterable[int]) -> str:
        names = ",".join(self.block_name(t) for t in sorted(target))
        return f"{self.block_name(P)} {modality} {{{names}}}"

    def concrete_formula(self, P: int, modality: Modality, target: Iterable[int]) -> StutterStepFormula:
        return StutterStepFormula(self.R.blocks[P], self.R.union_of(target), modality)


def block_name(G: TransitionSystem, block: Iterable[int], show: int = 4) -> str:
    members = sorted(block)
    names = [G.names[s] for s in members[:show]]
    if len(members) > show:
        names.append(f"+{len(members) - show}")
    return "[" + ",".join(names) + "]"


def _antichain(found: list[frozenset]) -> tuple[frozenset, ...]:
    found = sorted(set(found), key=lambda t: (len(t), sorted(t)))
    keep: list[frozenset] = []
    for t in found:
        if not any(k <= t for k in keep):
            keep.append(t)
    return tuple(keep)


def _block_minimal(search: SplitterSearch, R: Partition, b: int) -> dict[Modality, tuple[frozenset, ...]]:
    P = R.blocks[b]
    until = _antichain(search.minimal_targets(R, P, U))
    weak = [t for t in search.minimal_targets(R, P, W) if not any(u <= t for u in until)]
    return {U: until, W: _antichain(weak)}


def build_quotient(
    G: TransitionSystem,
    R: Partition,
    check: bool = True,
    workers: int | None = None,
) -> QuotientSystem:
    """Quotient of ``G`` by the robust stutter bisimulation ``R``.

    ``workers`` (default: the ``RSB_THREADS`` environment variable, else 1)
    sets the thread pool size used across blocks.
    """
    G.require_deadlock_free()
    search = SplitterSearch(G)
    if check and (not R.label_consistent(G) or search.find(R) is not None):
        raise NotBisimulationError("partition is not a robust stutter bisimulation")
    if workers is None:
        workers = int(os.environ.get("RSB_THREADS", "1") or 1)
    for P in R.blocks:
        search.solver(P)
    blocks = range(R.n_blocks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_block = list(pool.map(lambda b: _block_minimal(search, R, b), blocks))
    else:
        per_block = [_block_minimal(search, R, b) for b in blocks]
    min_targets = {}
    for b, res in enumerate(per_block):
        for mod in (U, W):
            min_targets[(b, mod)] = res[mod]
    initial = frozenset(R.block_of[s] for s in G.initial)
    return QuotientSystem(G, R, min_targets, initial)


def quotient_as_ts(Q: QuotientSystem) -> TransitionSystem:
    """Materialise the quotient with one label per minimal formula.

    Blocks without any enforceable formula become deadlocks; they are listed
    in ``Q.deadlock_blocks``.
    """
    names = [Q.block_name(b) for b in range(Q.n_blocks)]
    alphabet: list[str] = []
    triples = []
    for b in range(Q.n_blocks):
        for mod, tgt in Q.minimal_formulas(b):
            a = len(alphabet)
            alphabet.append(Q.formula_label(b, mod, tgt))
            for t in sorted(Q.delta_view(b, mod, tgt)):
                triples.append((b, a, t))
    labeling = [Q.labeling(b) for b in range(Q.n_blocks)]
    return TransitionSystem.build(names, alphabet, triples, sorted(Q.initial_blocks), labeling, Q.G.props)


def parse_formula_label(Q: QuotientSystem, label: str) -> tuple[int, Modality, frozenset]:
    """Inverse of :meth:`QuotientSystem.formula_label` for minimal formulas."""
    for b in range(Q.n_blocks):
        for mod, tgt in Q.minimal_formulas(b):
            if Q.formula_label(b, mod, tgt) == label:
                return b, mod, tgt
    raise KeyError(label)


def extend_relation(G: TransitionSystem, R: Partition, Q: QuotientSystem | None = None) -> Partition:
    """``R`` extended to ``union(G, G/R)``: every quotient state joins its block."""
    n = G.n_states
    return Partition(n + R.n_blocks, [set(b) | {n + i} for i, b in enumerate(R.blocks)])


def check_union_bisimilar(G: TransitionSystem, R: Partition, Qts: TransitionSystem) -> bool:
    """Is the extended relation a robust stutter bisimulation relating the initial states?"""
    Ux = union(G, Qts)
    if not Ux.is_deadlock_free():
        return False
    Rhat = extend_relation(G, R)
    if not is_rsb(Ux, Rhat):
        return False
    n = G.n_states
    init_blocks = {R.block_of[s] for s in G.initial}
    quotient_init = {q - n for q in Ux.initial if q >= n}
    return init_blocks == quotient_init


def check_quotient_bisimilar(G: TransitionSystem, R: Partition, Q: QuotientSystem | None = None) -> bool:
    if Q is None:
        Q = build_quotient(G, R)
    return check_union_bisimilar(G, R, quotient_as_ts(Q))
