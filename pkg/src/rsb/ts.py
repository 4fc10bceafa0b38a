"""Explicit-state labelled transition systems.

States, labels and propositions are dense integer indices with display
names.  The transition relation is kept in compressed sparse row form with
one row per enabled pair ``(s, a)``: rows are sorted by state, then label,
and each lists its successors in ascending order.  Disabled pairs take no
space, which matters for quotients whose alphabet grows with the number of
blocks.  A backward index (target -> source rows) is built lazily.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ModelError, PreconditionError


class TransitionSystem:
    """Immutable transition system ``<S, Sigma, delta, S_init, AP, L>``."""

    def __init__(
        self,
        names: Sequence[str],
        alphabet: Sequence[str],
        props: Sequence[str],
        labeling: Sequence[Iterable[str]],
        initial: Iterable[int],
        row_state: np.ndarray,
        row_label: np.ndarray,
        indptr: np.ndarray,
        indices: np.ndarray,
    ):
        self.names = tuple(names)
        self.alphabet = tuple(alphabet)
        self.props = tuple(props)
        self.labeling = tuple(frozenset(p) for p in labeling)
        self.initial = frozenset(int(s) for s in initial)
        n, k = len(self.names), len(self.alphabet)
        row_state = np.asarray(row_state, dtype=np.int64)
        row_label = np.asarray(row_label, dtype=np.int64)
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        if len(set(self.names)) != n:
            raise ModelError("duplicate state name")
        if len(set(self.alphabet)) != k:
            raise ModelError("duplicate transition label")
        if len(self.labeling) != n:
            raise ModelError("labeling must cover every state")
        known = set(self.props)
        for s, ps in enumerate(self.labeling):
            if not ps <= known:
                raise ModelError(f"state {self.names[s]!r} uses undeclared propositions {sorted(ps - known)}")
        if any(not 0 <= s < n for s in self.initial):
            raise ModelError("initial state out of range")
        m = len(row_state)
        if (
            row_label.shape != (m,) or indptr.shape != (m + 1,)
            or indptr[0] != 0 or indptr[-1] != len(indices) or np.any(np.diff(indptr) <= 0)
        ):
            raise ModelError("malformed transition table")
        if m and (
            row_state.min() < 0 or row_state.max() >= n or row_label.min() < 0 or row_label.max() >= k
            or np.any(np.diff(row_state * k + row_label) <= 0)
        ):
            raise ModelError("malformed transition table")
        if len(indices) and (indices.min() < 0 or indices.max() >= n):
            raise ModelError("transition target out of range")
        for arr in (row_state, row_label, indptr, indices):
            arr.flags.writeable = False
        self.row_state = row_state
        self.row_label = row_label
        self.indptr = indptr
        self.indices = indices
        self.state_ptr = np.searchsorted(row_state, np.arange(n + 1))

    # construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        names: Sequence[str],
        alphabet: Sequence[str],
        transitions: Iterable[tuple[int, int, int]],
        initial: Iterable[int] = (),
        labeling: Sequence[Iterable[str]] | None = None,
        props: Sequence[str] | None = None,
    ) -> "TransitionSystem":
        """Build from integer triples ``(source, label, target)`` (any iterable or an ``(m, 3)`` array)."""
        n, k = len(names), len(alphabet)
        if labeling is None:
            labeling = [()] * n
        labeling = [frozenset(p) for p in labeling]
        if props is None:
            seen: dict[str, None] = {}
            for ps in labeling:
                for p in sorted(ps):
                    seen.setdefault(p)
            props = list(seen)
        if isinstance(transitions, np.ndarray):
            triples = np.unique(transitions.astype(np.int64).reshape(-1, 3), axis=0)
        else:
            triples = np.array(sorted(set((int(s), int(a), int(t)) for s, a, t in transitions)), dtype=np.int64)
        if len(triples) == 0:
            triples = np.zeros((0, 3), dtype=np.int64)
        if len(triples) and (
            triples[:, 0].min() < 0 or triples[:, 0].max() >= n
            or triples[:, 1].min() < 0 or triples[:, 1].max() >= k
            or triples[:, 2].min() < 0 or triples[:, 2].max() >= n
        ):
            raise ModelError("transition references an unknown state or label")
        keys = triples[:, 0] * k + triples[:, 1]
        first = np.ones(len(keys), dtype=bool)
        first[1:] = keys[1:] != keys[:-1]
        starts = np.flatnonzero(first)
        indptr = np.append(starts, len(keys)).astype(np.int64)
        return cls(
            names, alphabet, props, labeling, initial,
            triples[starts, 0], triples[starts, 1], indptr, triples[:, 2].copy(),
        )

    @classmethod
    def from_named(
        cls,
        states: Sequence[tuple[str, Iterable[str]]],
        alphabet: Sequence[str],
        transitions: Iterable[tuple[str, str, str]],
        initial: Iterable[str] = (),
        props: Sequence[str] | None = None,
    ) -> "TransitionSystem":
        """Build from ``(name, props)`` pairs and named transition triples."""
        names = [name for name, _ in states]
        sidx = {name: i for i, name in enumerate(names)}
        if len(sidx) != len(names):
            raise ModelError("duplicate state id")
        aidx = {a: i for i, a in enumerate(alphabet)}
        triples = []
        for s, a, t in transitions:
            for ref in (s, t):
                if ref not in sidx:
                    raise ModelError(f"transition references undeclared state {ref!r}")
            if a not in aidx:
                raise ModelError(f"transition uses undeclared label {a!r}")
            triples.append((sidx[s], aidx[a], sidx[t]))
        init = []
        for s in initial:
            if s not in sidx:
                raise ModelError(f"initial state {s!r} is not declared")
            init.append(sidx[s])
        return cls.build(names, alphabet, triples, init, [ps for _, ps in states], props)

    # basic queries ----------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.names)

    @property
    def n_labels(self) -> int:
        return len(self.alphabet)

    @property
    def n_transitions(self) -> int:
        return len(self.indices)

    def __repr__(self) -> str:
        return f"TransitionSystem(|S|={self.n_states}, |Sigma|={self.n_labels}, |delta|={self.n_transitions})"

    @property
    def n_rows(self) -> int:
        """Number of enabled ``(state, label)`` pairs."""
        return len(self.row_state)

    def row_of(self, s: int, a: int) -> int:
        """Row index of ``(s, a)``, or ``-1`` if ``a`` is disabled at ``s``."""
        lo, hi = self.state_ptr[s], self.state_ptr[s + 1]
        i = lo + int(np.searchsorted(self.row_label[lo:hi], a))
        return int(i) if i < hi and self.row_label[i] == a else -1

    def post(self, s: int, a: int) -> np.ndarray:
        r = self.row_of(s, a)
        if r < 0:
            return self.indices[:0]
        return self.indices[self.indptr[r]:self.indptr[r + 1]]

    def post_any(self, s: int) -> np.ndarray:
        lo, hi = self.state_ptr[s], self.state_ptr[s + 1]
        return np.unique(self.indices[self.indptr[lo]:self.indptr[hi]])

    def enabled(self, s: int) -> tuple[int, ...]:
        return tuple(self.row_label[self.state_ptr[s]:self.state_ptr[s + 1]].tolist())

    @cached_property
    def succ(self) -> tuple[dict[int, tuple[int, ...]], ...]:
        """Python-level successors: ``succ[s]`` maps each enabled label to its targets."""
        ptr = self.indptr.tolist()
        idx = self.indices.tolist()
        labels = self.row_label.tolist()
        sp = self.state_ptr.tolist()
        return tuple(
            {labels[r]: tuple(idx[ptr[r]:ptr[r + 1]]) for r in range(sp[s], sp[s + 1])}
            for s in range(self.n_states)
        )

    @cached_property
    def post_masks(self) -> tuple[dict[int, int], ...]:
        """Successor sets as integer bitsets: ``post_masks[s][a]`` for enabled ``a``."""
        return tuple(
            {a: sum(1 << t for t in row) for a, row in rows.items()} for rows in self.succ
        )

    @cached_property
    def _pred(self) -> tuple[np.ndarray, np.ndarray]:
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.indptr))
        order = np.argsort(self.indices, kind="stable")
        counts = np.bincount(self.indices, minlength=self.n_states)
        ptr = np.zeros(self.n_states + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        return ptr, rows[order]

    def pred_rows(self, t: int) -> np.ndarray:
        """Rows whose successor list contains ``t``."""
        ptr, rows = self._pred
        return rows[ptr[t]:ptr[t + 1]]

    def edges(self) -> Iterator[tuple[int, int, int]]:
        for s, rows in enumerate(self.succ):
            for a, row in rows.items():
                for t in row:
                    yield s, a, t

    def has_edge(self, s: int, t: int) -> bool:
        return any(t in row for row in self.succ[s].values())

    def props_of(self, s: int) -> frozenset[str]:
        return self.labeling[s]

    def states_with(self, prop: str) -> frozenset[int]:
        if prop not in self.props:
            raise ModelError(f"unknown proposition {prop!r}")
        return frozenset(s for s, ps in enumerate(self.labeling) if prop in ps)

    def state_index(self, name: str) -> int:
        try:
            return self._state_lookup[name]
        except KeyError:
            raise ModelError(f"unknown state {name!r}") from None

    def label_index(self, name: str) -> int:
        try:
            return self.alphabet.index(name)
        except ValueError:
            raise ModelError(f"unknown label {name!r}") from None

    @cached_property
    def _state_lookup(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def deadlocks(self) -> frozenset[int]:
        return self._deadlocks

    @cached_property
    def _deadlocks(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(np.diff(self.state_ptr) == 0).tolist())

    def is_deadlock_free(self) -> bool:
        return not self.deadlocks()

    def require_deadlock_free(self) -> None:
        dead = self.deadlocks()
        if dead:
            shown = ", ".join(self.names[s] for s in sorted(dead)[:5])
            raise PreconditionError(f"transition system has deadlock states: {shown}")


def is_deadlock_free(G: TransitionSystem) -> bool:
    return G.is_deadlock_free()


def union(G1: TransitionSystem, G2: TransitionSystem) -> TransitionSystem:
    """Disjoint union; ``G2``'s states are shifted by ``|S1|``.

    Labels and propositions are merged by name.  State names that clash are
    disambiguated with a ``'`` suffix on the second operand.
    """
    n1 = G1.n_states
    alphabet = list(G1.alphabet) + [a for a in G2.alphabet if a not in G1.alphabet]
    aidx = {a: i for i, a in enumerate(alphabet)}
    props = list(G1.props) + [p for p in G2.props if p not in G1.props]
    taken = set(G1.names)
    names2 = []
    for name in G2.names:
        while name in taken:
            name = name + "'"
        taken.add(name)
        names2.append(name)
    remap = [aidx[a] for a in G2.alphabet]
    triples = list(G1.edges())
    triples += [(s + n1, remap[a], t + n1) for s, a, t in G2.edges()]
    return TransitionSystem.build(
        list(G1.names) + names2,
        alphabet,
        triples,
        list(G1.initial) + [s + n1 for s in G2.initial],
        list(G1.labeling) + list(G2.labeling),
        props,
    )


@dataclass(frozen=True)
class Lasso:
    """Infinite path ``stem . cycle^omega`` given by state indices."""

    stem: tuple[int, ...]
    cycle: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "stem", tuple(self.stem))
        object.__setattr__(self, "cycle", tuple(self.cycle))
        if not self.cycle:
            raise ValueError("lasso cycle must be nonempty")

    @property
    def states(self) -> tuple[int, ...]:
        return self.stem + self.cycle

    def unroll(self, k: int) -> "Lasso":
        """Same infinite path with the cycle repeated ``k`` times in the stem."""
        return Lasso(self.stem + self.cycle * k, self.cycle)

    def prefix(self, length: int) -> tuple[int, ...]:
        out = list(self.stem[:length])
        while len(out) < length:
            out.extend(self.cycle)
        return tuple(out[:length])

    def is_path_of(self, G: TransitionSystem) -> bool:
        seq = self.states + (self.cycle[0],)
        return all(G.has_edge(u, v) for u, v in zip(seq, seq[1:]))


# --- model file I/O -----------------------------------------------------------


def load_ts(text: str) -> TransitionSystem:
    """Parse the JSON model format.

    ``{"states": [{"id": "s0", "props": ["a"]}, ...], "alphabet": [...],
    "initial": [...], "transitions": [["s0", "alpha", "s1"], ...]}``
    An optional top-level ``"props"`` list declares AP explicitly; when it is
    present every state proposition must be declared there.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"parse error at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ModelError("model must be a JSON object")
    for field in ("states", "alphabet", "transitions"):
        if field not in data:
            raise ModelError(f"missing field {field!r}")
    states = []
    for i, entry in enumerate(data["states"]):
        if isinstance(entry, str):
            entry = {"id": entry}
        if not isinstance(entry, dict) or "id" not in entry:
            raise ModelError(f"states[{i}]: expected an object with an 'id'")
        props = entry.get("props", [])
        if not isinstance(props, list) or not all(isinstance(p, str) for p in props):
            raise ModelError(f"states[{i}].props: expected a list of strings")
        states.append((str(entry["id"]), props))
    alphabet = data["alphabet"]
    if not isinstance(alphabet, list) or not all(isinstance(a, str) for a in alphabet):
        raise ModelError("alphabet: expected a list of strings")
    transitions = []
    for i, tr in enumerate(data["transitions"]):
        if not isinstance(tr, list) or len(tr) != 3:
            raise ModelError(f"transitions[{i}]: expected [source, label, target]")
        transitions.append(tuple(str(x) for x in tr))
    declared = data.get("props")
    if declared is not None and not isinstance(declared, list):
        raise ModelError("props: expected a list of strings")
    return TransitionSystem.from_named(states, alphabet, transitions, data.get("initial", []), declared)


def ts_to_dict(G: TransitionSystem) -> dict:
    return {
        "states": [{"id": name, "props": sorted(G.labeling[s])} for s, name in enumerate(G.names)],
        "props": list(G.props),
        "alphabet": list(G.alphabet),
        "initial": [G.names[s] for s in sorted(G.initial)],
        "transitions": [[G.names[s], G.alphabet[a], G.names[t]] for s, a, t in G.edges()],
    }


def save_ts(G: TransitionSystem) -> str:
    """Canonical JSON text; ``load_ts(save_ts(G))`` reproduces ``G``."""
    return json.dumps(ts_to_dict(G), indent=1) + "\n"


def same_system(G1: TransitionSystem, G2: TransitionSystem) -> bool:
    return (
        G1.names == G2.names
        and G1.alphabet == G2.alphabet
        and G1.props == G2.props
        and G1.labeling == G2.labeling
        and G1.initial == G2.initial
        and np.array_equal(G1.row_state, G2.row_state)
        and np.array_equal(G1.row_label, G2.row_label)
        and np.array_equal(G1.indptr, G2.indptr)
        and np.array_equal(G1.indices, G2.indices)
    )
