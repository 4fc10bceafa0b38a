"""Small reference systems used by tests, scripts and the CLI."""

from __future__ import annotations

from .ts import TransitionSystem


def two_goal_system() -> TransitionSystem:
    """Hub state 0 with an ``alpha`` round trip to 1 (``a``) and a ``beta`` round trip to 2 (``b``)."""
    return TransitionSystem.from_named(
        [("0", []), ("1", ["a"]), ("2", ["b"])],
        ["alpha", "beta"],
        [("0", "alpha", "1"), ("1", "alpha", "0"), ("0", "beta", "2"), ("2", "beta", "0")],
        initial=["0"],
        props=["a", "b"],
    )


FOUR_CLASS_STATES = ["a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4", "c1", "c2", "d1", "d2"]

FOUR_CLASS_EDGES = [
    ("a1", "sigma1", "a2"), ("a2", "sigma1", "a1"),
    ("a4", "sigma1", "a3"), ("a3", "sigma1", "a4"), ("a3", "sigma2", "b4"),
    ("b2", "sigma1", "b1"), ("b1", "sigma1", "a2"), ("b1", "sigma1", "a3"),
    ("b3", "sigma1", "b4"), ("b3", "sigma2", "b2"),
    ("b4", "sigma2", "b1"), ("b4", "sigma1", "a3"), ("b4", "sigma1", "c1"),
    ("c1", "sigma1", "b4"), ("c2", "sigma1", "b3"),
    ("d1", "sigma1", "d2"), ("d2", "sigma1", "d1"), ("d2", "sigma1", "c1"), ("d2", "sigma2", "a3"),
]


def four_class_system() -> TransitionSystem:
    """Twelve states labelled a/b/c/d whose coarsest bisimulation has six blocks."""
    return TransitionSystem.from_named(
        [(s, [s[0]]) for s in FOUR_CLASS_STATES],
        ["sigma1", "sigma2"],
        FOUR_CLASS_EDGES,
        initial=["d1"],
        props=["a", "b", "c", "d"],
    )


# expected coarsest blocks of four_class_system, by state name
FOUR_CLASS_BLOCKS = {
    "A1": ("a1", "a2"), "A2": ("a3", "a4"),
    "B1": ("b1", "b2"), "B2": ("b3", "b4"),
    "C": ("c1", "c2"), "D": ("d1", "d2"),
}
