"""Controllable predecessors, Theta fixpoints and positional enforcers.

Two kernels compute the enforceable set of a stutter step formula ``P ◇ T``:

* a literal iteration of ``Theta(X) = T ∪ (P ∩ Pre(X))`` on Python integer
  bitsets, used for small systems and as a reference;
* a worklist kernel over a precomputed :class:`Region` (the rows of ``P`` in
  CSR form), used for large blocks and by partition refinement, where the
  same block is solved against many targets.

Both return identical sets and ranks; a property test holds them to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import CapExceeded, PreconditionError
from .logic import Modality, StutterStepFormula
from .ts import TransitionSystem

SMALL_SYSTEM = 256  # systems up to this many states use the bitset kernel


# --- bitset helpers -----------------------------------------------------------


def to_bits(states: Iterable[int]) -> int:
    m = 0
    for s in states:
        m |= 1 << s
    return m


def from_bits(mask: int) -> frozenset[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return frozenset(out)


def _members(mask: int) -> list[int]:
    return sorted(from_bits(mask))


# --- data types ---------------------------------------------------------------


@dataclass(frozen=True)
class RankedFixpoint:
    """Fixpoint of Theta with entry ranks (``None`` for greatest fixpoints).

    For a least fixpoint ``rank[s] = i`` means ``s`` first appears in the
    ``i``-th iterate ``Theta^i(∅)``; states of ``T`` have rank 1.
    """

    formula: StutterStepFormula
    set: frozenset
    rank: Mapping[int, int] | None = None


@dataclass(frozen=True)
class PositionalController:
    """Memoryless controller: ``allowed[s]`` is a set of label indices."""

    allowed: tuple[frozenset, ...]

    def __call__(self, s: int) -> frozenset:
        return self.allowed[s]

    def is_deadlock_free(self, G: TransitionSystem) -> bool:
        return all(any(a in G.succ[s] for a in acts) for s, acts in enumerate(self.allowed))

    def restrict(self, G: TransitionSystem) -> TransitionSystem:
        """The controlled system ``C/G``: only permitted transitions remain."""
        triples = [(s, a, t) for s, a, t in G.edges() if a in self.allowed[s]]
        return TransitionSystem.build(G.names, G.alphabet, triples, G.initial, G.labeling, G.props)


def _check(G: TransitionSystem, psi: StutterStepFormula) -> None:
    G.require_deadlock_free()
    n = G.n_states
    if any(not 0 <= s < n for s in psi.source | psi.target):
        raise PreconditionError("formula references states outside the system")


# --- Pre and Theta ------------------------------------------------------------


def pre_ctrl(G: TransitionSystem, X: Iterable[int]) -> frozenset[int]:
    """States with a label whose successor set is nonempty and inside ``X``."""
    x = to_bits(X)
    return from_bits(_pre_bits(G, x, (1 << G.n_states) - 1))


def _pre_bits(G: TransitionSystem, x: int, among: int) -> int:
    out = 0
    masks = G.post_masks
    for s in _members(among):
        for m in masks[s].values():
            if not m & ~x:
                out |= 1 << s
                break
    return out


def theta(G: TransitionSystem, psi: StutterStepFormula, X: Iterable[int]) -> frozenset[int]:
    """One application of ``Theta(X) = T ∪ (P ∩ Pre(X))``."""
    return from_bits(to_bits(psi.target) | _pre_bits(G, to_bits(X), to_bits(psi.source)))


def _ecs_bits(G: TransitionSystem, psi: StutterStepFormula) -> RankedFixpoint:
    p, t = to_bits(psi.source), to_bits(psi.target)
    if psi.is_until:
        x, i, rank = 0, 0, {}
        while True:
            i += 1
            nx = t | _pre_bits(G, x, p)
            for s in from_bits(nx & ~x):
                rank[s] = i
            if nx == x:
                return RankedFixpoint(psi, from_bits(x), rank)
            x = nx
    x = (1 << G.n_states) - 1
    while True:
        nx = t | _pre_bits(G, x, p)
        if nx == x:
            return RankedFixpoint(psi, from_bits(x), None)
        x = nx


# --- worklist kernel ----------------------------------------------------------


def _ranges(starts: np.ndarray, lens: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(starts[i], starts[i] + lens[i])``."""
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(starts - np.cumsum(lens) + lens, lens)
    return offs + np.arange(total, dtype=np.int64)


class Region:
    """The rows of a source set ``P`` prepared for repeated ECS queries.

    Successors are split into internal ones (inside ``P``, local indices) and
    external ones.  A row can only be used if every external successor lies
    in the target, which is an O(external edges) check per target.
    """

    def __init__(self, G: TransitionSystem, P: Iterable[int]):
        self.G = G
        n = G.n_states
        self.states = np.array(sorted(P), dtype=np.int64)
        self.size = len(self.states)
        local = np.full(n, -1, dtype=np.int64)
        local[self.states] = np.arange(self.size)
        self.local = local
        first = G.state_ptr[self.states]
        rows = _ranges(first, G.state_ptr[self.states + 1] - first)
        self.rows = rows
        self.owner = local[G.row_state[rows]]
        starts = G.indptr[rows]
        lens = G.indptr[rows + 1] - starts
        edge_row = np.repeat(np.arange(len(rows)), lens)
        edge_tgt = G.indices[_ranges(starts, lens)]
        tl = local[edge_tgt]
        inner = tl >= 0
        int_row, int_tgt = edge_row[inner], tl[inner]
        self.ext_row, self.ext_tgt = edge_row[~inner], edge_tgt[~inner]
        self.int_count = np.bincount(int_row, minlength=len(rows))
        order = np.argsort(int_tgt, kind="stable")
        self.pred_idx = int_row[order]
        self.pred_ptr = np.zeros(self.size + 1, dtype=np.int64)
        np.cumsum(np.bincount(int_tgt, minlength=self.size), out=self.pred_ptr[1:])
        self.exit_states = frozenset(np.unique(self.ext_tgt).tolist())

    def _preds(self, frontier: np.ndarray) -> np.ndarray:
        starts = self.pred_ptr[frontier]
        return self.pred_idx[_ranges(starts, self.pred_ptr[frontier + 1] - starts)]

    def dead_rows(self, in_target: np.ndarray) -> np.ndarray:
        dead = np.zeros(len(self.rows), dtype=bool)
        dead[self.ext_row[~in_target[self.ext_tgt]]] = True
        return dead

    def until_ranks(self, in_target: np.ndarray) -> np.ndarray:
        """Local ranks (0 = outside the least fixpoint) given a target mask."""
        dead = self.dead_rows(in_target)
        cnt = self.int_count.copy()
        rank = np.zeros(self.size, dtype=np.int64)
        frontier = np.unique(self.owner[~dead & (cnt == 0)])
        level = 2
        while frontier.size:
            rank[frontier] = level
            rows, hits = np.unique(self._preds(frontier), return_counts=True)
            cnt[rows] -= hits
            ready = rows[(cnt[rows] == 0) & ~dead[rows]]
            owners = np.unique(self.owner[ready])
            frontier = owners[rank[owners] == 0]
            level += 1
        return rank

    def weak_inside(self, in_target: np.ndarray) -> np.ndarray:
        """Local membership in the greatest fixpoint given a target mask."""
        dead = self.dead_rows(in_target)
        alive = np.bincount(self.owner[~dead], minlength=self.size)
        removed = alive == 0
        frontier = np.flatnonzero(removed)
        while frontier.size:
            rows = np.unique(self._preds(frontier))
            rows = rows[~dead[rows]]
            dead[rows] = True
            owners, hits = np.unique(self.owner[rows], return_counts=True)
            alive[owners] -= hits
            frontier = owners[(alive[owners] == 0) & ~removed[owners]]
            removed[frontier] = True
        return ~removed

    def inside(self, in_target: np.ndarray, modality: Modality) -> np.ndarray:
        if modality is Modality.UNTIL:
            return self.until_ranks(in_target) > 0
        return self.weak_inside(in_target)

    def fixpoint(self, psi: StutterStepFormula) -> RankedFixpoint:
        in_t = np.zeros(self.G.n_states, dtype=bool)
        in_t[list(psi.target)] = True
        if psi.is_until:
            ranks = self.until_ranks(in_t)
            rank = {int(t): 1 for t in psi.target}
            for i in np.flatnonzero(ranks):
                rank[int(self.states[i])] = int(ranks[i])
            return RankedFixpoint(psi, frozenset(rank), rank)
        inside = self.states[self.weak_inside(in_t)].tolist()
        return RankedFixpoint(psi, psi.target | frozenset(inside), None)


# --- public ECS ---------------------------------------------------------------


def ecs(G: TransitionSystem, psi: StutterStepFormula, kernel: str = "auto") -> RankedFixpoint:
    """Enforceable set of ``psi`` with ranks for until formulas.

    ``kernel`` selects ``"bits"`` (literal Theta iteration), ``"region"``
    (worklist) or ``"auto"``.
    """
    _check(G, psi)
    if kernel == "auto":
        kernel = "bits" if G.n_states <= SMALL_SYSTEM else "region"
    if kernel == "bits":
        return _ecs_bits(G, psi)
    if kernel == "region":
        return Region(G, psi.source).fixpoint(psi)
    raise ValueError(f"unknown kernel {kernel!r}")


def enforcer(G: TransitionSystem, psi: StutterStepFormula, fp: RankedFixpoint | None = None) -> PositionalController:
    """Memoryless controller enforcing ``psi`` from every state of ``fp.set``.

    Inside ``fp.set ∖ T`` a weak-until enforcer keeps successors inside the
    fixpoint and an until enforcer moves to strictly lower rank.  All other
    states may use every enabled label.
    """
    if fp is None:
        fp = ecs(G, psi)
    n = G.n_states
    big = np.iinfo(np.int64).max
    level = np.full(n, big, dtype=np.int64)
    if psi.is_until:
        for s, r in fp.rank.items():
            level[s] = r
    else:
        level[list(fp.set)] = 0
    # a row is good if every successor has level below the owner's (until)
    # or lies in the fixpoint (weak until)
    worst = np.zeros(G.n_rows, dtype=np.int64)
    if G.n_rows:
        worst = np.maximum.reduceat(level[G.indices], G.indptr[:-1])
    owner_level = level[G.row_state] if psi.is_until else np.ones(G.n_rows, dtype=np.int64)
    good = worst < owner_level
    labels = G.row_label.tolist()
    sp = G.state_ptr.tolist()
    constrained = fp.set - psi.target
    allowed = []
    for s in range(n):
        rows = range(sp[s], sp[s + 1])
        if s in constrained:
            acts = frozenset(labels[r] for r in rows if good[r])
            if not acts:
                raise PreconditionError(f"fixpoint does not match the formula at state {G.names[s]!r}")
        else:
            acts = frozenset(labels[r] for r in rows)
        allowed.append(acts)
    return PositionalController(tuple(allowed))


class LocalEnforcer:
    """The permissions of :func:`enforcer`, computed state by state on demand.

    Cheaper when only a few states of a large system are ever queried.
    """

    def __init__(self, G: TransitionSystem, psi: StutterStepFormula, fp: RankedFixpoint | None = None):
        self.G = G
        self.psi = psi
        self.fp = ecs(G, psi) if fp is None else fp
        self._cache: dict[int, frozenset] = {}

    def __call__(self, s: int) -> frozenset:
        acts = self._cache.get(s)
        if acts is None:
            acts = self._cache[s] = self._allowed(s)
        return acts

    def _allowed(self, s: int) -> frozenset:
        rows = self.G.succ[s]
        fp, psi = self.fp, self.psi
        if s not in fp.set or s in psi.target:
            return frozenset(rows)
        if psi.is_until:
            inf = float("inf")
            r = fp.rank[s]
            acts = frozenset(a for a, row in rows.items() if all(fp.rank.get(t, inf) < r for t in row))
        else:
            acts = frozenset(a for a, row in rows.items() if all(t in fp.set for t in row))
        if not acts:
            raise PreconditionError(f"fixpoint does not match the formula at state {self.G.names[s]!r}")
        return acts


# --- exact check of a given controller ----------------------------------------


def enforced_from(G: TransitionSystem, psi: StutterStepFormula, allowed: PositionalController) -> frozenset[int]:
    """States ``s`` with ``<C/G, s> |= psi`` for the positional controller ``C``.

    From a source state every permitted path must leave ``P`` into ``T`` or
    (weak until only) stay in ``P`` forever; until additionally forbids any
    permitted cycle inside ``P`` reachable from ``s``.
    """
    P, T = psi.source, psi.target
    succ = {s: {t for a in allowed.allowed[s] for t in G.succ[s].get(a, ())} for s in P}
    good = set(T)
    for s in P:
        seen, stack, ok = {s}, [s], True
        while stack and ok:
            u = stack.pop()
            for v in succ[u]:
                if v in P:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
                elif v not in T:
                    ok = False
                    break
        if ok and psi.is_until and _has_cycle({u: succ[u] & seen for u in seen}):
            ok = False
        if ok:
            good.add(s)
    return frozenset(good)


def _has_cycle(graph: dict[int, set[int]]) -> bool:
    indeg = {u: 0 for u in graph}
    for u in graph:
        for v in graph[u]:
            indeg[v] += 1
    queue = [u for u, d in indeg.items() if d == 0]
    removed = 0
    while queue:
        u = queue.pop()
        removed += 1
        for v in graph[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return removed < len(graph)


# --- brute-force oracle -------------------------------------------------------


def _nonempty_subsets(items: tuple[int, ...]) -> list[frozenset]:
    return [frozenset(c) for r in range(1, len(items) + 1) for c in combinations(items, r)]


def positional_controllers(G: TransitionSystem, deadlock_free_only: bool = True) -> Iterator[PositionalController]:
    """Every map from states to nonempty label subsets, optionally deadlock-free only."""
    labels = tuple(range(G.n_labels))
    if deadlock_free_only:
        choices = [
            [c for c in _nonempty_subsets(labels) if any(a in G.succ[s] for a in c)]
            for s in range(G.n_states)
        ]
    else:
        choices = [_nonempty_subsets(labels)] * G.n_states
    for combo in product(*choices):
        yield PositionalController(tuple(combo))


def outcome_profile(G: TransitionSystem, P: Iterable[int]) -> dict[int, frozenset[tuple[int, bool]]]:
    """For each ``s`` in ``P``: every ``(exit_bits, has_cycle)`` some controller achieves.

    ``exit_bits`` is the set of states outside ``P`` reachable from ``s``
    through ``P`` and ``has_cycle`` says whether that reachable part of ``P``
    contains a cycle.  Only the controller's choices on ``P`` matter, so only
    those are enumerated.
    """
    members = sorted(P)
    pbits = to_bits(members)
    masks = G.post_masks
    options = []
    for s in members:
        enabled = sorted(masks[s])
        opts = set()
        for c in _nonempty_subsets(tuple(enabled)):
            m = 0
            for a in c:
                m |= masks[s][a]
            opts.add(m)
        options.append(sorted(opts))
    idx = {s: i for i, s in enumerate(members)}
    found: dict[int, set] = {s: set() for s in members}
    for combo in product(*options):
        # reach[i]: states reachable from members[i] in >= 1 step via P
        reach = list(combo)
        changed = True
        while changed:
            changed = False
            for i in range(len(members)):
                r = reach[i]
                acc = r
                inner = r & pbits
                while inner:
                    low = inner & -inner
                    acc |= reach[idx[low.bit_length() - 1]]
                    inner ^= low
                if acc != r:
                    reach[i] = acc
                    changed = True
        on_cycle = 0
        for i, s in enumerate(members):
            if reach[i] >> s & 1:
                on_cycle |= 1 << s
        for i, s in enumerate(members):
            closure = reach[i] | (1 << s)
            found[s].add((closure & ~pbits, bool(closure & on_cycle)))
    return {s: frozenset(v) for s, v in found.items()}


def ecs_from_profile(profile: Mapping[int, frozenset], psi: StutterStepFormula) -> frozenset[int]:
    t = to_bits(psi.target)
    good = set(psi.target)
    for s, outcomes in profile.items():
        for exit_bits, cyclic in outcomes:
            if not exit_bits & ~t and not (cyclic and psi.is_until):
                good.add(s)
                break
    return frozenset(good)


def brute_force_ecs(G: TransitionSystem, psi: StutterStepFormula, cap: int = 6, max_labels: int = 3) -> frozenset[int]:
    """ECS by enumerating deadlock-free positional controllers (test oracle)."""
    if G.n_states > cap or G.n_labels > max_labels:
        raise CapExceeded(f"brute force limited to {cap} states and {max_labels} labels")
    _check(G, psi)
    return ecs_from_profile(outcome_profile(G, psi.source), psi)


def controlled_ecs_oracle(G: TransitionSystem, psi: StutterStepFormula) -> frozenset[int]:
    """Union over all deadlock-free positional controllers of the states they enforce from.

    Enumerates whole-system controllers; exponential, only for tiny systems.
    """
    out: set[int] = set()
    for C in positional_controllers(G):
        out |= enforced_from(G, psi, C)
    return frozenset(out)
