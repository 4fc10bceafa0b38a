"""LTL without next: syntax, lasso semantics and stutter machinery.

Formulas are small frozen dataclass trees.  Besides atomic propositions a
leaf may be an explicit state set (`States`), which is how stutter step
formulas ``P U T`` / ``P W T`` are expressed.  Evaluation is exact on lassos:
each subformula gets a truth vector over the lasso positions, computed as a
least (U, F) or greatest (W, G) fixpoint over the position graph.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Hashable, Iterable, Iterator, Sequence

from .errors import ModelError
from .ts import Lasso, TransitionSystem


class Modality(enum.Enum):
    UNTIL = "U"
    WEAK_UNTIL = "W"

    def __str__(self) -> str:
        return self.value


U = Modality.UNTIL
W = Modality.WEAK_UNTIL


# --- formula tree -------------------------------------------------------------


class Formula:
    """Base class of LTL-without-next formulas."""

    def __and__(self, other: "Formula") -> "Formula":
        return And(self, other)

    def __or__(self, other: "Formula") -> "Formula":
        return Or(self, other)

    def __invert__(self) -> "Formula":
        return Not(self)


@dataclass(frozen=True)
class Top(Formula):
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class Atom(Formula):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class States(Formula):
    """Generalised atom: holds iff the current state is in ``states``."""

    states: frozenset

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(self.states))

    def __str__(self):
        return "{" + ",".join(map(str, sorted(self.states))) + "}"


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def __str__(self):
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_wrap(self.left)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_wrap(self.left)} | {_wrap(self.right)}"


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_wrap(self.left)} U {_wrap(self.right)}"


@dataclass(frozen=True)
class WeakUntil(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return f"{_wrap(self.left)} W {_wrap(self.right)}"


@dataclass(frozen=True)
class Finally(Formula):
    arg: Formula

    def __str__(self):
        return f"F {_wrap(self.arg)}"


@dataclass(frozen=True)
class Globally(Formula):
    arg: Formula

    def __str__(self):
        return f"G {_wrap(self.arg)}"


def _wrap(f: Formula) -> str:
    if isinstance(f, (Top, Atom, States, Not, Finally, Globally)):
        return str(f)
    return f"({f})"


FALSE = Not(Top())


def expand(f: Formula) -> Formula:
    """Rewrite F, G, W and | into the core grammar ``T | p | !f | f & g | f U g``."""
    if isinstance(f, (Top, Atom, States)):
        return f
    if isinstance(f, Not):
        return Not(expand(f.arg))
    if isinstance(f, And):
        return And(expand(f.left), expand(f.right))
    if isinstance(f, Or):
        return Not(And(Not(expand(f.left)), Not(expand(f.right))))
    if isinstance(f, Until):
        return Until(expand(f.left), expand(f.right))
    if isinstance(f, Finally):
        return Until(Top(), expand(f.arg))
    if isinstance(f, Globally):
        return Not(Until(Top(), Not(expand(f.arg))))
    if isinstance(f, WeakUntil):
        psi, theta = f.left, f.right
        return expand(Or(Globally(psi), Until(psi, theta)))
    raise TypeError(f"not a formula: {f!r}")


def atoms_of(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    out: set[str] = set()
    for child in _children(f):
        out |= atoms_of(child)
    return out


def _children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (Not, Finally, Globally)):
        return (f.arg,)
    if isinstance(f, (And, Or, Until, WeakUntil)):
        return (f.left, f.right)
    return ()


def is_propositional(f: Formula) -> bool:
    if isinstance(f, (Until, WeakUntil, Finally, Globally)):
        return False
    return all(is_propositional(c) for c in _children(f))


# --- parser -------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\(|\)|!|&|\||->)|([A-Za-z_][A-Za-z0-9_.']*))")
_KEYWORDS = {"G", "F", "U", "W", "true", "false"}


def parse_formula(text: str) -> Formula:
    """Parse surface syntax such as ``G F Home & G F Task1``.

    Precedence from loosest to tightest: ``|``, ``&``, ``U``/``W`` (right
    associative), unary ``!``/``G``/``F``.
    """
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ModelError(f"unexpected character {text[pos]!r} at column {pos}")
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    parser = _Parser(tokens)
    f = parser.disjunction()
    if parser.i != len(tokens):
        raise ModelError(f"unexpected token {tokens[parser.i]!r}")
    return f


class _Parser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> str | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ModelError("unexpected end of formula")
        self.i += 1
        return tok

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.until()
        while self.peek() == "&":
            self.take()
            f = And(f, self.until())
        return f

    def until(self) -> Formula:
        f = self.unary()
        if self.peek() in ("U", "W"):
            op = self.take()
            rhs = self.until()
            return Until(f, rhs) if op == "U" else WeakUntil(f, rhs)
        return f

    def unary(self) -> Formula:
        tok = self.take()
        if tok == "!":
            return Not(self.unary())
        if tok == "G":
            return Globally(self.unary())
        if tok == "F":
            return Finally(self.unary())
        if tok == "(":
            f = self.disjunction()
            if self.take() != ")":
                raise ModelError("expected ')'")
            return f
        if tok == "true":
            return Top()
        if tok == "false":
            return FALSE
        if tok in _KEYWORDS or not re.match(r"[A-Za-z_]", tok):
            raise ModelError(f"unexpected token {tok!r}")
        return Atom(tok)


# --- stutter step formulas ----------------------------------------------------


@dataclass(frozen=True)
class StutterStepFormula:
    """``source U target`` or ``source W target`` over concrete state sets."""

    source: frozenset
    target: frozenset
    modality: Modality

    def __post_init__(self):
        object.__setattr__(self, "source", frozenset(self.source))
        object.__setattr__(self, "target", frozenset(self.target))
        if self.source & self.target:
            raise ValueError("stutter step formula needs disjoint source and target")

    @property
    def is_until(self) -> bool:
        return self.modality is Modality.UNTIL

    def as_ltl(self) -> Formula:
        p, t = States(self.source), States(self.target)
        return Until(p, t) if self.is_until else WeakUntil(p, t)

    def __str__(self) -> str:
        return f"{sorted(self.source)} {self.modality} {sorted(self.target)}"


def superblocks_of(R) -> Iterator[frozenset]:
    """All unions of blocks of ``R`` (anything with a ``blocks`` sequence), empty set first."""
    blocks = list(R.blocks)
    for r in range(len(blocks) + 1):
        for combo in combinations(blocks, r):
            yield frozenset().union(*combo)


# --- stutter-free sequences ---------------------------------------------------


def stutter_free(seq: Sequence[Hashable]) -> tuple:
    """Remove every element equal to its predecessor."""
    out: list = []
    for x in seq:
        if not out or out[-1] != x:
            out.append(x)
    return tuple(out)


def stutter_free_lasso(stem: Sequence[Hashable], cycle: Sequence[Hashable]) -> tuple[tuple, tuple]:
    """Canonical stutter-free form of the infinite word ``stem . cycle^omega``.

    The cycle is collapsed to a single letter when constant, rotated so that
    it starts where the stem can no longer absorb it, and reduced to its
    primitive root; equal infinite words give equal results.
    """
    cyc = list(stutter_free(cycle))
    if len(cyc) > 1 and cyc[0] == cyc[-1]:
        cyc.pop()
    # smallest period of the cyclic word
    n = len(cyc)
    for p in range(1, n + 1):
        if n % p == 0 and cyc == cyc[p:] + cyc[:p]:
            cyc = cyc[:p]
            break
    stem_sf = list(stutter_free(list(stem) + ([cyc[0]] if cyc else [])))
    if cyc:
        stem_sf.pop()
    # absorb trailing stem letters that match the cycle read backwards
    while stem_sf and len(cyc) > 1 and stem_sf[-1] == cyc[-1]:
        stem_sf.pop()
        cyc = [cyc[-1]] + cyc[:-1]
    while stem_sf and len(cyc) == 1 and stem_sf[-1] == cyc[0]:
        stem_sf.pop()
    return tuple(stem_sf), tuple(cyc)


def label_trace(G: TransitionSystem, states: Iterable[int]) -> tuple[frozenset, ...]:
    return tuple(G.labeling[s] for s in states)


def stutter_equivalent(G: TransitionSystem, p1: Lasso, p2: Lasso) -> bool:
    a = stutter_free_lasso(label_trace(G, p1.stem), label_trace(G, p1.cycle))
    b = stutter_free_lasso(label_trace(G, p2.stem), label_trace(G, p2.cycle))
    return a == b


# --- lasso semantics ----------------------------------------------------------


def eval_ltl_lasso(G: TransitionSystem, phi: Formula, pi: Lasso) -> bool:
    """Decide ``pi |= phi`` for the infinite path represented by ``pi``."""
    return _eval_positions(phi, len(pi.stem), len(pi.cycle), _state_atom(G, pi.states))[0]


def eval_ltl_trace(phi: Formula, stem: Sequence[frozenset], cycle: Sequence[frozenset]) -> bool:
    """Evaluate over a lasso-shaped word of proposition sets (no state atoms)."""
    word = list(stem) + list(cycle)

    def atom(f: Formula, i: int) -> bool:
        if isinstance(f, States):
            raise ModelError("state-set atoms need a transition system")
        return f.name in word[i]

    return _eval_positions(phi, len(stem), len(cycle), atom)[0]


def _state_atom(G: TransitionSystem, states: Sequence[int]) -> Callable[[Formula, int], bool]:
    props = set(G.props)

    def atom(f: Formula, i: int) -> bool:
        if isinstance(f, States):
            return states[i] in f.states
        if f.name not in props:
            raise ModelError(f"atom {f.name!r} is not a proposition of the system")
        return f.name in G.labeling[states[i]]

    return atom


def _eval_positions(phi: Formula, n_stem: int, n_cycle: int, atom) -> list[bool]:
    n = n_stem + n_cycle
    nxt = list(range(1, n)) + [n_stem]
    memo: dict[Formula, list[bool]] = {}

    def fix(step, init: bool) -> list[bool]:
        sat = [init] * n
        changed = True
        while changed:
            changed = False
            for i in reversed(range(n)):
                v = step(i, sat)
                if v != sat[i]:
                    sat[i] = v
                    changed = True
        return sat

    def ev(f: Formula) -> list[bool]:
        if f in memo:
            return memo[f]
        if isinstance(f, Top):
            out = [True] * n
        elif isinstance(f, (Atom, States)):
            out = [atom(f, i) for i in range(n)]
        elif isinstance(f, Not):
            out = [not v for v in ev(f.arg)]
        elif isinstance(f, And):
            a, b = ev(f.left), ev(f.right)
            out = [x and y for x, y in zip(a, b)]
        elif isinstance(f, Or):
            a, b = ev(f.left), ev(f.right)
            out = [x or y for x, y in zip(a, b)]
        elif isinstance(f, Until):
            a, b = ev(f.left), ev(f.right)
            out = fix(lambda i, s: b[i] or (a[i] and s[nxt[i]]), False)
        elif isinstance(f, WeakUntil):
            a, b = ev(f.left), ev(f.right)
            out = fix(lambda i, s: b[i] or (a[i] and s[nxt[i]]), True)
        elif isinstance(f, Finally):
            a = ev(f.arg)
            out = fix(lambda i, s: a[i] or s[nxt[i]], False)
        elif isinstance(f, Globally):
            a = ev(f.arg)
            out = fix(lambda i, s: a[i] and s[nxt[i]], True)
        else:
            raise TypeError(f"not a formula: {f!r}")
        memo[f] = out
        return out

    return ev(phi)


# --- bounded oracle -----------------------------------------------------------


def enumerate_lassos(G: TransitionSystem, s: int, bound: int) -> Iterator[Lasso]:
    """Every lasso from ``s`` with ``|stem| + |cycle| <= bound``."""
    succ = [sorted(set().union(*map(set, rows.values()))) if rows else [] for rows in G.succ]
    path = [s]

    def walk() -> Iterator[Lasso]:
        last = path[-1]
        for t in succ[last]:
            for j, u in enumerate(path):
                if u == t:
                    yield Lasso(tuple(path[:j]), tuple(path[j:]))
            if len(path) < bound:
                path.append(t)
                yield from walk()
                path.pop()

    yield from walk()


def holds_at_bounded(G: TransitionSystem, phi: Formula, s: int, bound: int | None = None) -> bool:
    """``<G, s> |= phi`` checked on every lasso up to ``bound`` states.

    Sound for refutation only: a ``False`` answer comes with a violating
    lasso, a ``True`` answer means no violation within the bound.
    """
    if bound is None:
        bound = G.n_states
    return find_violation(G, phi, s, bound) is None


def find_violation(G: TransitionSystem, phi: Formula, s: int, bound: int) -> Lasso | None:
    for pi in enumerate_lassos(G, s, bound):
        if not eval_ltl_lasso(G, phi, pi):
            return pi
    return None
