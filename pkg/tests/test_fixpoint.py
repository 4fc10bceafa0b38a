import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import U, W, states_of, systems
from rsb.errors import PreconditionError
from rsb.fixpoint import (
    LocalEnforcer, brute_force_ecs, controlled_ecs_oracle, ecs, enforced_from, enforcer,
    pre_ctrl, theta,
)
from rsb.logic import StutterStepFormula
from rsb.models import four_class_system


@pytest.fixture
def G():
    return four_class_system()


def f(G, src, mod, *tgt):
    return StutterStepFormula(states_of(G, *src), states_of(G, *tgt), mod)


def test_weak_until_self_loop_enforcer(G):
    psi = f(G, ["A1"], W)
    assert ecs(G, psi).set >= states_of(G, "A1")
    C = enforcer(G, psi)
    s1 = G.label_index("sigma1")
    assert C(G.state_index("a1")) == {s1} and C(G.state_index("a2")) == {s1}


def test_target_states_are_unconstrained(G):
    psi = StutterStepFormula(frozenset(), states_of(G, "B2"), U)
    C = enforcer(G, psi)
    for s in psi.target:
        assert C(s) == frozenset(G.succ[s])


def test_until_enforcer_ranks(G):
    psi = f(G, ["C"], U, "B2")
    fp = ecs(G, psi)
    c1, b4 = G.state_index("c1"), G.state_index("b4")
    assert fp.rank[c1] == 2 and fp.rank[b4] == 1
    assert enforcer(G, psi, fp)(c1) == {G.label_index("sigma1")}


def test_empty_source_gives_target(G):
    T = states_of(G, "C", "D")
    for mod in (U, W):
        assert ecs(G, StutterStepFormula(frozenset(), T, mod)).set == T


def test_b1_cannot_avoid_a1(G):
    fp = ecs(G, f(G, ["B1", "B2"], U, "A2", "C"))
    assert G.state_index("b1") not in fp.set
    assert {G.state_index("b3"), G.state_index("b4")} <= fp.set


def test_pre_and_weak_until_examples(G):
    assert G.state_index("b4") in pre_ctrl(G, states_of(G, "A2", "C"))
    assert states_of(G, "D") <= ecs(G, f(G, ["D"], W, "C", "A2")).set


def test_kernels_agree_on_four_class(G):
    names = list(("A1", "A2", "B1", "B2", "C", "D"))
    for src in names:
        others = [n for n in names if n != src]
        for k in range(1 << len(others)):
            tgt = [n for i, n in enumerate(others) if k >> i & 1]
            for mod in (U, W):
                psi = f(G, [src], mod, *tgt)
                a, b = ecs(G, psi, "bits"), ecs(G, psi, "region")
                assert a.set == b.set and a.rank == b.rank


def test_rejects_deadlocks_and_bad_states():
    from rsb.ts import TransitionSystem

    lone = TransitionSystem.build(["x", "y"], ["go"], [(0, 0, 1)])
    with pytest.raises(PreconditionError):
        ecs(lone, StutterStepFormula({0}, {1}, U))
    with pytest.raises(PreconditionError):
        ecs(four_class_system(), StutterStepFormula({0}, {99}, U))


# --- properties ---------------------------------------------------------------


@st.composite
def system_and_formula(draw, max_states=5):
    G = draw(systems(max_states=max_states))
    n = G.n_states
    P = draw(st.frozensets(st.integers(0, n - 1)))
    T = draw(st.frozensets(st.integers(0, n - 1))) - P
    return G, StutterStepFormula(P, T, draw(st.sampled_from([U, W])))


@given(system_and_formula())
def test_matches_brute_force(case):
    G, psi = case
    assert ecs(G, psi).set == brute_force_ecs(G, psi)


@given(system_and_formula(max_states=3))
def test_matches_whole_controller_enumeration(case):
    G, psi = case
    assert ecs(G, psi).set == controlled_ecs_oracle(G, psi)


@given(system_and_formula(), st.data())
def test_monotone_in_target(case, data):
    G, psi = case
    extra = data.draw(st.frozensets(st.integers(0, G.n_states - 1))) - psi.source
    bigger = StutterStepFormula(psi.source, psi.target | extra, psi.modality)
    assert ecs(G, psi).set <= ecs(G, bigger).set


@given(systems(max_states=6), st.data())
def test_pre_monotone(G, data):
    X = data.draw(st.frozensets(st.integers(0, G.n_states - 1)))
    Y = X | data.draw(st.frozensets(st.integers(0, G.n_states - 1)))
    assert pre_ctrl(G, X) <= pre_ctrl(G, Y)


@given(system_and_formula())
def test_is_fixpoint_and_lfp_inside_gfp(case):
    G, psi = case
    fp = ecs(G, psi)
    assert theta(G, psi, fp.set) == fp.set
    strong = StutterStepFormula(psi.source, psi.target, U)
    weak = StutterStepFormula(psi.source, psi.target, W)
    assert ecs(G, strong).set <= ecs(G, weak).set


@given(system_and_formula(max_states=7))
def test_region_kernel_matches_bits(case):
    G, psi = case
    a, b = ecs(G, psi, "bits"), ecs(G, psi, "region")
    assert a.set == b.set and a.rank == b.rank


@given(system_and_formula(max_states=6))
def test_enforcer_sound(case):
    G, psi = case
    fp = ecs(G, psi)
    C = enforcer(G, psi, fp)
    assert C.is_deadlock_free(G)
    assert fp.set <= enforced_from(G, psi, C)


@given(system_and_formula(max_states=6))
def test_local_enforcer_matches_table(case):
    G, psi = case
    fp = ecs(G, psi)
    table, lazy = enforcer(G, psi, fp), LocalEnforcer(G, psi, fp)
    assert all(table(s) == lazy(s) for s in range(G.n_states))
