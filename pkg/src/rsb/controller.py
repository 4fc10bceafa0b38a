"""Abstract synthesis on the quotient and the concrete executor.

Abstract controllers are finite-memory machines on the materialised
quotient.  Their configuration ``(q, m)`` (quotient state, memory) is all the
executor needs: the superblock the abstract controller can reach next and
whether it may stay in ``q`` forever both depend only on the permitted
future, which ``(q, m)`` determines.

The executor turns each configuration into a stutter step formula over the
concrete system, solves it with the fixpoint machinery and answers with the
resulting memoryless enforcer until the concrete state changes block.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ExecutorError, ModelError, PreconditionError
from .fixpoint import LocalEnforcer, ecs
from .logic import (
    And, Atom, Finally, Formula, Globally, Modality, Not, Or, StutterStepFormula, Top,
    is_propositional, parse_formula,
)
from .partition import Partition
from .ts import TransitionSystem

Config = tuple  # (quotient state, memory)


@dataclass(frozen=True)
class FiniteMemoryController:
    """Controller on a transition system with memory ``0..n_memory-1``.

    ``output[(m, q)]`` is the permitted label set (label indices) and
    ``update[(m, q)]`` the memory used at the next state.  The update depends
    only on the state being left because paths are state sequences.
    """

    n_memory: int
    m0: int
    output: Mapping[tuple[int, int], frozenset]
    update: Mapping[tuple[int, int], int]
    winning: frozenset = frozenset()

    def allowed(self, m: int, q: int) -> frozenset:
        return self.output.get((m, q), frozenset())

    def next_memory(self, m: int, q: int, label: int | None = None, q_next: int | None = None) -> int:
        return self.update.get((m, q), m)

    @classmethod
    def memoryless(cls, T: TransitionSystem, allowed: Mapping[int, Iterable[int]] | None = None) -> "FiniteMemoryController":
        """One memory state; ``allowed`` overrides the default of every enabled label."""
        allowed = dict(allowed or {})
        output = {}
        for q in range(T.n_states):
            acts = allowed.get(q)
            output[(0, q)] = frozenset(acts) if acts is not None else frozenset(T.enabled(q))
        return cls(1, 0, output, {key: 0 for key in output})

    def moves(self, T: TransitionSystem, config: Config) -> list[tuple[int, Config]]:
        """Permitted ``(label, next configuration)`` pairs from ``config``."""
        q, m = config
        m2 = self.next_memory(m, q)
        return [(a, (t, m2)) for a in sorted(self.allowed(m, q)) for t in T.succ[q].get(a, ())]

    def is_deadlock_free_from(self, T: TransitionSystem, configs: Iterable[Config]) -> bool:
        return all(self.moves(T, c) for c in reachable_configs(T, self, configs))

    def to_dict(self, T: TransitionSystem) -> dict:
        rows = sorted(self.output)
        return {
            "memory_states": self.n_memory,
            "initial_memory": self.m0,
            "winning": [T.names[q] for q in sorted(self.winning)],
            "output": [[m, T.names[q], [T.alphabet[a] for a in sorted(self.output[(m, q)])]] for m, q in rows],
            "update": [[m, T.names[q], self.update[(m, q)]] for m, q in sorted(self.update)],
        }

    @classmethod
    def from_dict(cls, T: TransitionSystem, data: dict) -> "FiniteMemoryController":
        try:
            output = {
                (int(m), T.state_index(q)): frozenset(T.label_index(a) for a in acts)
                for m, q, acts in data["output"]
            }
            update = {(int(m), T.state_index(q)): int(m2) for m, q, m2 in data["update"]}
            winning = frozenset(T.state_index(q) for q in data.get("winning", []))
            return cls(int(data["memory_states"]), int(data.get("initial_memory", 0)), output, update, winning)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed controller file: {exc}") from None

    def dumps(self, T: TransitionSystem) -> str:
        return json.dumps(self.to_dict(T), indent=1) + "\n"


def reachable_configs(T: TransitionSystem, C: FiniteMemoryController, starts: Iterable[Config]) -> list[Config]:
    seen = dict.fromkeys(starts)
    queue = deque(seen)
    while queue:
        c = queue.popleft()
        for _, c2 in C.moves(T, c):
            if c2 not in seen:
                seen[c2] = None
                queue.append(c2)
    return list(seen)


def controlled_product(T: TransitionSystem, C: FiniteMemoryController, starts: Iterable[int] | None = None) -> tuple[TransitionSystem, list[Config]]:
    """Reachable part of ``T`` under ``C`` as a transition system over configurations."""
    if starts is None:
        starts = sorted(T.initial)
    configs = reachable_configs(T, C, [(q, C.m0) for q in starts])
    index = {c: i for i, c in enumerate(configs)}
    triples = [(index[c], a, index[c2]) for c in configs for a, c2 in C.moves(T, c)]
    names = [f"{T.names[q]}|{m}" for q, m in configs]
    init = [index[(q, C.m0)] for q in starts]
    return TransitionSystem.build(names, T.alphabet, triples, init, [T.labeling[q] for q, _ in configs], T.props), configs


# --- generalized Büchi synthesis ----------------------------------------------


def gf_goals(spec: Formula | str) -> list[Formula]:
    """Split ``G F g1 & ... & G F gk`` into its propositional goals."""
    if isinstance(spec, str):
        spec = parse_formula(spec)
    if isinstance(spec, And):
        return gf_goals(spec.left) + gf_goals(spec.right)
    if isinstance(spec, Globally) and isinstance(spec.arg, Finally) and is_propositional(spec.arg.arg):
        return [spec.arg.arg]
    raise ModelError(f"expected a conjunction of 'G F <propositional>' goals, got {spec}")


def eval_prop(f: Formula, props: frozenset) -> bool:
    if isinstance(f, Top):
        return True
    if isinstance(f, Atom):
        return f.name in props
    if isinstance(f, Not):
        return not eval_prop(f.arg, props)
    if isinstance(f, And):
        return eval_prop(f.left, props) and eval_prop(f.right, props)
    if isinstance(f, Or):
        return eval_prop(f.left, props) or eval_prop(f.right, props)
    raise ModelError(f"not a propositional formula: {f}")


def goal_states(T: TransitionSystem, goal: Formula | Iterable[str]) -> frozenset[int]:
    """States satisfying a propositional goal; a plain name set means any of them."""
    if isinstance(goal, Formula):
        return frozenset(q for q in range(T.n_states) if eval_prop(goal, T.labeling[q]))
    names = frozenset(goal)
    return frozenset(q for q in range(T.n_states) if T.labeling[q] & names)


def _pre(T: TransitionSystem, x: np.ndarray) -> np.ndarray:
    """Boolean mask of states with some label whose successors all lie in ``x``."""
    out = np.zeros(T.n_states, dtype=bool)
    if T.n_rows:
        misses = np.add.reduceat((~x[T.indices]).astype(np.int64), T.indptr[:-1])
        out[T.row_state[misses == 0]] = True
    return out


def _attractor(T: TransitionSystem, base: np.ndarray) -> np.ndarray:
    """Ranks of ``lfp Y. base ∪ Pre(Y)``; ``base`` gets rank 1, outside is 0."""
    rank = np.zeros(T.n_states, dtype=np.int64)
    x = np.zeros(T.n_states, dtype=bool)
    i = 0
    while True:
        i += 1
        nx = base | _pre(T, x)
        rank[nx & ~x] = i
        if np.array_equal(nx, x):
            return rank
        x = nx


def _goal_mask(T: TransitionSystem, goal) -> np.ndarray:
    mask = np.zeros(T.n_states, dtype=bool)
    mask[list(goal_states(T, goal))] = True
    return mask


def gf_winning(T: TransitionSystem, goals: Sequence) -> tuple[frozenset, list[dict[int, int]]]:
    """Winning set of the generalized Büchi game and per-goal attractor ranks."""
    targets = [_goal_mask(T, g) for g in goals]
    z = np.ones(T.n_states, dtype=bool)
    while True:
        stay = _pre(T, z)
        ranks = [_attractor(T, g & stay) for g in targets]
        nz = z.copy()
        for r in ranks:
            nz &= r > 0
        if np.array_equal(nz, z):
            return frozenset(np.flatnonzero(z).tolist()), [
                {int(q): int(r[q]) for q in np.flatnonzero(r)} for r in ranks
            ]
        z = nz


def synth_gf(T: TransitionSystem, goals: Sequence, initial: Iterable[int] | None = None) -> FiniteMemoryController | None:
    """Round-robin controller visiting every goal infinitely often, or ``None``.

    Memory ``i`` means "heading for goal ``i``".  Away from the goal the
    controller only permits labels that strictly decrease the attractor rank;
    on the goal it permits labels that stay in the winning set and advances
    the memory.
    """
    if not goals:
        raise PreconditionError("at least one goal is required")
    win, ranks = gf_winning(T, goals)
    init = set(T.initial if initial is None else initial)
    if not init or not init <= win:
        return None
    k = len(goals)
    n = T.n_states
    win_mask = np.zeros(n, dtype=bool)
    win_mask[list(win)] = True
    starts = T.indptr[:-1]
    stays = np.add.reduceat((~win_mask[T.indices]).astype(np.int64), starts) == 0 if T.n_rows else np.zeros(0, bool)
    labels = T.row_label.tolist()
    sp = T.state_ptr.tolist()
    big = np.iinfo(np.int64).max
    output, update = {}, {}
    for i, rank in enumerate(ranks):
        level = np.full(n, big, dtype=np.int64)
        for q, r in rank.items():
            level[q] = r
        descends = (np.maximum.reduceat(level[T.indices], starts) < level[T.row_state]) if T.n_rows else stays
        for q, r in rank.items():
            good = stays if r == 1 else descends
            output[(i, q)] = frozenset(labels[j] for j in range(sp[q], sp[q + 1]) if good[j])
            update[(i, q)] = (i + 1) % k if r == 1 else i
    return FiniteMemoryController(k, 0, output, update, win)


# --- abstract configuration analysis ------------------------------------------


def _staying(T: TransitionSystem, C: FiniteMemoryController, config: Config) -> dict[Config, list[Config]]:
    """Configurations reachable from ``config`` without leaving its state, with stay edges."""
    q = config[0]
    graph: dict[Config, list[Config]] = {}
    queue = deque([config])
    while queue:
        c = queue.popleft()
        if c in graph:
            continue
        graph[c] = [c2 for _, c2 in C.moves(T, c) if c2[0] == q]
        queue.extend(graph[c])
    return graph


def reached_superblock(T: TransitionSystem, C: FiniteMemoryController, config: Config) -> frozenset[int]:
    """Quotient states entered when first leaving ``config[0]`` under ``C``."""
    q = config[0]
    return frozenset(
        c2[0] for c in _staying(T, C, config) for _, c2 in C.moves(T, c) if c2[0] != q
    )


def can_stay_forever(T: TransitionSystem, C: FiniteMemoryController, config: Config) -> bool:
    graph = _staying(T, C, config)
    color: dict[Config, int] = {}
    for root in graph:
        if root in color:
            continue
        stack = [(root, iter(graph[root]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color.get(nxt) == 1:
                return True
            elif nxt not in color:
                color[nxt] = 1
                stack.append((nxt, iter(graph[nxt])))
    return False


def abstract_formula(T: TransitionSystem, C: FiniteMemoryController, config: Config) -> tuple[Modality, frozenset]:
    mod = Modality.WEAK_UNTIL if can_stay_forever(T, C, config) else Modality.UNTIL
    return mod, reached_superblock(T, C, config)


def enforced_formula(T: TransitionSystem, C: FiniteMemoryController, config: Config, R: Partition) -> StutterStepFormula:
    """The formula the concrete controller enforces while in block ``config[0]``."""
    mod, target = abstract_formula(T, C, config)
    return StutterStepFormula(R.blocks[config[0]], R.union_of(target), mod)


def follow_step(T: TransitionSystem, C: FiniteMemoryController, config: Config, block: int) -> Config | None:
    """Configuration after an abstract path that stays at ``config[0]`` and then enters ``block``.

    Shortest such path wins, ties go to the lowest memory.
    """
    q = config[0]
    frontier, seen = [config], {config}
    while frontier:
        hits = sorted({c2 for c in frontier for _, c2 in C.moves(T, c) if c2[0] == block})
        if hits:
            return min(hits, key=lambda c: c[1])
        nxt = []
        for c in frontier:
            for _, c2 in C.moves(T, c):
                if c2[0] == q and c2 not in seen:
                    seen.add(c2)
                    nxt.append(c2)
        frontier = nxt
    return None


# --- concrete executor --------------------------------------------------------


UNDEFINED = None


class Executor:
    """Runtime of the concrete controller for one run.

    :meth:`decide` and :meth:`advance` are pure in the executor configuration
    so closed-loop products can be explored; :meth:`start` and :meth:`step`
    add the mutable per-run bookkeeping and observation checks.
    """

    def __init__(self, G: TransitionSystem, R: Partition, Qts: TransitionSystem, C: FiniteMemoryController):
        if R.n != G.n_states or R.n_blocks != Qts.n_states:
            raise PreconditionError("partition does not match the concrete and quotient systems")
        self.G, self.R, self.Qts, self.C = G, R, Qts, C
        self._formulas: dict[Config, StutterStepFormula] = {}
        self._enforcers: dict[StutterStepFormula, LocalEnforcer] = {}
        self.config: Config | None = UNDEFINED
        self.state: int | None = None
        self.last: frozenset = frozenset()

    # pure part ---------------------------------------------------------

    def formula(self, config: Config) -> StutterStepFormula:
        psi = self._formulas.get(config)
        if psi is None:
            psi = self._formulas[config] = enforced_formula(self.Qts, self.C, config, self.R)
        return psi

    def enforcer_for(self, psi: StutterStepFormula) -> LocalEnforcer:
        ctl = self._enforcers.get(psi)
        if ctl is None:
            fp = ecs(self.G, psi)
            if not psi.source <= fp.set:
                raise ExecutorError(f"abstract controller asks for an unenforceable formula {psi}")
            ctl = self._enforcers[psi] = LocalEnforcer(self.G, psi, fp)
        return ctl

    def decide(self, config: Config | None, u: int) -> frozenset:
        if config is UNDEFINED or not self.C.allowed(config[1], config[0]):
            return frozenset(self.G.enabled(u))
        return self.enforcer_for(self.formula(config))(u)

    def advance(self, config: Config | None, u: int, v: int) -> Config | None:
        if config is UNDEFINED:
            return UNDEFINED
        bv = self.R.block_of[v]
        if bv == config[0]:
            return config
        return follow_step(self.Qts, self.C, config, bv)

    def initial_config(self, s0: int, q0: int | None = None) -> Config | None:
        q = self.R.block_of[s0] if q0 is None else q0
        if q != self.R.block_of[s0]:
            raise PreconditionError("initial quotient state does not contain the start state")
        config = (q, self.C.m0)
        return config if self.C.allowed(self.C.m0, q) else UNDEFINED

    # run bookkeeping ---------------------------------------------------

    @property
    def defined(self) -> bool:
        return self.config is not UNDEFINED

    @property
    def current_formula(self) -> StutterStepFormula | None:
        return None if self.config is UNDEFINED else self.formula(self.config)

    def start(self, s0: int, q0: int | None = None) -> frozenset:
        self.config = self.initial_config(s0, q0)
        if self.config is UNDEFINED:
            raise ExecutorError(f"abstract controller has no output at the block of {self.G.names[s0]!r}")
        self.state = s0
        self.last = self.decide(self.config, s0)
        return self.last

    def step(self, observed: int) -> frozenset:
        if self.state is None:
            raise ExecutorError("executor was not started")
        u = self.state
        if not any(observed in self.G.post(u, a) for a in self.last):
            raise ExecutorError(
                f"{self.G.names[observed]!r} is not a successor of {self.G.names[u]!r} under the permitted labels"
            )
        self.config = self.advance(self.config, u, observed)
        self.state = observed
        self.last = self.decide(self.config, observed)
        return self.last


def new_executor(G: TransitionSystem, R: Partition, Q, C: FiniteMemoryController, s0: int, q0: int | None = None) -> Executor:
    """Executor started at ``s0``; ``Q`` is a quotient system or its materialisation."""
    from .quotient import QuotientSystem, quotient_as_ts

    Qts = quotient_as_ts(Q) if isinstance(Q, QuotientSystem) else Q
    ex = Executor(G, R, Qts, C)
    ex.start(s0, q0)
    return ex


def executor_step(ex: Executor, observed: int) -> frozenset:
    return ex.step(observed)


# --- closed loop --------------------------------------------------------------


@dataclass
class ClosedLoop:
    """Reachable product of the concrete system and the executor configuration."""

    nodes: list[tuple[int, Config | None]]
    edges: dict[int, list[int]]
    initial: list[int]
    index: dict = field(repr=False, default_factory=dict)


def closed_loop(ex: Executor, starts: Iterable[int], limit: int = 10**6) -> ClosedLoop:
    nodes, index, edges = [], {}, {}
    queue = deque()

    def visit(key) -> int:
        i = index.get(key)
        if i is None:
            if len(nodes) >= limit:
                raise PreconditionError(f"closed loop exceeds {limit} configurations")
            i = index[key] = len(nodes)
            nodes.append(key)
            queue.append(i)
        return i

    initial = [visit((s, ex.initial_config(s))) for s in starts]
    while queue:
        i = queue.popleft()
        u, config = nodes[i]
        succ = set()
        for a in ex.decide(config, u):
            for v in ex.G.succ[u].get(a, ()):
                succ.add(visit((v, ex.advance(config, u, v))))
        edges[i] = sorted(succ)
    return ClosedLoop(nodes, edges, initial, index)


def sccs(n: int, edges: Mapping[int, Sequence[int]]) -> list[list[int]]:
    """Strongly connected components (iterative Tarjan)."""
    index, low, on, stack, out = {}, {}, set(), [], []
    counter = 0
    for root in range(n):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work.pop()
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on.add(v)
            succ = edges.get(v, [])
            if pi < len(succ):
                work.append((v, pi + 1))
                w = succ[pi]
                if w not in index:
                    work.append((w, 0))
                elif w in on:
                    low[v] = min(low[v], index[w])
                continue
            for w in succ:
                if w in on:
                    low[v] = min(low[v], low[w])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def cyclic_components(n: int, edges: Mapping[int, Sequence[int]]) -> list[list[int]]:
    return [c for c in sccs(n, edges) if len(c) > 1 or c[0] in edges.get(c[0], [])]


def check_block_correspondence(ex: Executor, loop: ClosedLoop) -> list[str]:
    """Problems that would break block-trace correspondence with the abstract run.

    Every configuration must be defined, and a cycle that never leaves a
    block must be matched by an abstract configuration that can stay in that
    block forever.  Block changes are matched by construction of
    :meth:`Executor.advance`.
    """
    problems = []
    for i, (u, config) in enumerate(loop.nodes):
        if config is UNDEFINED:
            problems.append(f"undefined executor at {ex.G.names[u]}")
    block = ex.R.block_of
    inner = {
        i: [j for j in succ if block[loop.nodes[j][0]] == block[loop.nodes[i][0]]]
        for i, succ in loop.edges.items()
    }
    for comp in cyclic_components(len(loop.nodes), inner):
        for i in comp:
            config = loop.nodes[i][1]
            if config is not UNDEFINED and not can_stay_forever(ex.Qts, ex.C, config):
                problems.append(f"concrete run can stay in block {config[0]} but the abstract run cannot")
                break
    return problems


def goals_violated(G: TransitionSystem, loop: ClosedLoop, goals: Sequence) -> list[int]:
    """Indices of goals some closed-loop run can avoid forever."""
    bad = []
    for i, g in enumerate(goals):
        hit = goal_states(G, g)
        sub = {v: [w for w in succ if loop.nodes[w][0] not in hit] for v, succ in loop.edges.items() if loop.nodes[v][0] not in hit}
        if cyclic_components(len(loop.nodes), sub):
            bad.append(i)
    return bad
