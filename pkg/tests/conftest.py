from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from rsb.logic import Modality
from rsb.models import FOUR_CLASS_BLOCKS, four_class_system
from rsb.ts import TransitionSystem

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

U, W = Modality.UNTIL, Modality.WEAK_UNTIL
MODELS = Path(__file__).resolve().parents[1] / "models"


@st.composite
def systems(draw, max_states=5, max_labels=2, props=("p", "q"), deadlock_free=True):
    """Random small transition systems; each state gets at least one move when ``deadlock_free``."""
    n = draw(st.integers(1, max_states))
    k = draw(st.integers(1, max_labels))
    triples = set()
    for s in range(n):
        for a in range(k):
            succ = draw(st.sets(st.integers(0, n - 1), max_size=min(n, 3)))
            triples |= {(s, a, t) for t in succ}
        if deadlock_free and not any(t[0] == s for t in triples):
            triples.add((s, draw(st.integers(0, k - 1)), draw(st.integers(0, n - 1))))
    labeling = [draw(st.sets(st.sampled_from(props))) for _ in range(n)]
    return TransitionSystem.build(
        [f"s{i}" for i in range(n)], [f"l{a}" for a in range(k)], sorted(triples), [0], labeling, list(props)
    )


def block_ids(G, R):
    """Map the named four-class blocks to block ids of ``R``."""
    return {name: R.block_of[G.state_index(members[0])] for name, members in FOUR_CLASS_BLOCKS.items()}


def states_of(G, *names):
    return frozenset(s for n in names for s in (G.state_index(x) for x in FOUR_CLASS_BLOCKS.get(n, (n,))))


@pytest.fixture(scope="session")
def four_class():
    return four_class_system()


class RobotPipeline:
    """Grid abstraction, coarsest partition, quotient and controller of the robot room."""

    def __init__(self):
        import time

        from rsb.controller import gf_goals, synth_gf
        from rsb.gridabs import build_grid_ts, robot_model
        from rsb.partition import minimize
        from rsb.quotient import build_quotient, quotient_as_ts

        self.model = robot_model(0.1)
        t0 = time.perf_counter()
        self.G, self.cmap = build_grid_ts(self.model)
        self.minimization = minimize(self.G)
        self.R = self.minimization.partition
        self.minimize_seconds = time.perf_counter() - t0
        self.Q = build_quotient(self.G, self.R, check=False)
        self.Qts = quotient_as_ts(self.Q)
        t1 = time.perf_counter()
        self.goals = gf_goals("G F Home & G F Task1 & G F Task2 & G F Task3")
        self.C = synth_gf(self.Qts, self.goals)
        self.synth_seconds = time.perf_counter() - t1


@pytest.fixture(scope="session")
def robot():
    return RobotPipeline()


# --- acceptance reporting -----------------------------------------------------

VERDICTS: dict[str, tuple[bool, str]] = {}


class Verdict:
    """Context manager recording one acceptance check; an exception inside records a failure."""

    def __init__(self, key: str):
        self.key = key
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        ok = kind is None
        detail = self.detail if ok or not str(exc) else f"{self.detail} {str(exc).splitlines()[0]}".strip()
        VERDICTS[self.key] = (ok, detail)
        print(f"criterion {self.key}: {'PASS' if ok else 'FAIL'} {detail}")
        return False


@pytest.fixture
def criterion():
    return Verdict


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    groups: dict[str, list[tuple[str, bool, str]]] = {}
    for key, (ok, detail) in VERDICTS.items():
        groups.setdefault(key.split("(")[0], []).append((key, ok, detail))
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(groups, key=int):
        parts = groups[num]
        ok = all(p[1] for p in parts)
        if len(parts) == 1:
            text = parts[0][2]
        else:
            text = "; ".join(f"{k[len(num):] or 'run'} {'pass' if o else 'FAIL'}: {d}" for k, o, d in sorted(parts))
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {text}")
