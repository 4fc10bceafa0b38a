"""Robust stutter bisimulation: abstraction and controller synthesis for nondeterministic systems."""

from .controller import Executor, FiniteMemoryController, synth_gf
from .errors import (
    CapExceeded,
    ExecutorError,
    ModelError,
    NotBisimulationError,
    PreconditionError,
    RsbError,
)
from .fixpoint import brute_force_ecs, ecs, enforcer
from .logic import Modality, StutterStepFormula, parse_formula
from .partition import Partition, coarsest_rsb, find_splitter, is_rsb, minimize, refine
from .quotient import QuotientSystem, build_quotient, check_quotient_bisimilar, quotient_as_ts
from .ts import TransitionSystem, load_ts, save_ts, union

__all__ = [
    "CapExceeded",
    "Executor",
    "ExecutorError",
    "FiniteMemoryController",
    "Modality",
    "ModelError",
    "NotBisimulationError",
    "Partition",
    "PreconditionError",
    "QuotientSystem",
    "RsbError",
    "StutterStepFormula",
    "TransitionSystem",
    "brute_force_ecs",
    "build_quotient",
    "check_quotient_bisimilar",
    "coarsest_rsb",
    "ecs",
    "enforcer",
    "find_splitter",
    "is_rsb",
    "load_ts",
    "minimize",
    "parse_formula",
    "quotient_as_ts",
    "refine",
    "save_ts",
    "synth_gf",
    "union",
]

__version__ = "0.1.0"
