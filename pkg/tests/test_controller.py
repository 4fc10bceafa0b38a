import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import U, W, block_ids, systems
from rsb.controller import (
    UNDEFINED, Executor, FiniteMemoryController, abstract_formula, check_block_correspondence,
    closed_loop, controlled_product, cyclic_components, enforced_formula, gf_goals, gf_winning,
    goal_states, goals_violated, new_executor, reached_superblock, synth_gf,
)
from rsb.errors import ExecutorError, ModelError
from rsb.fixpoint import ecs
from rsb.logic import Atom
from rsb.models import two_goal_system
from rsb.partition import Partition, coarsest_rsb
from rsb.quotient import build_quotient, quotient_as_ts
from rsb.ts import TransitionSystem


@pytest.fixture(scope="module")
def fc(four_class):
    G = four_class
    R = coarsest_rsb(G)
    Q = build_quotient(G, R)
    Qts = quotient_as_ts(Q)
    return G, R, Q, Qts, block_ids(G, R)


def label_of(Q, Qts, block, mod, *targets):
    return Qts.label_index(Q.formula_label(block, mod, targets))


def restricted(Qts, only):
    """Memoryless abstract controller: ``only`` fixes some blocks, the rest may use every label."""
    return FiniteMemoryController.memoryless(Qts, only)


def test_gf_goal_parsing():
    assert gf_goals("G F a & G F (b | c)") == [Atom("a"), Atom("b") | Atom("c")]
    with pytest.raises(ModelError):
        gf_goals("F a")


def test_synthesis_reaches_a_blocks(fc):
    G, R, Q, Qts, ids = fc
    C = synth_gf(Qts, [Atom("a")])
    assert C is not None and ids["D"] in C.winning
    assert C.is_deadlock_free_from(Qts, [(q, C.m0) for q in Qts.initial])


def test_single_state_synthesis():
    T = TransitionSystem.build(["P"], ["P W {}"], [(0, 0, 0)], [0], [{"p"}])
    C = synth_gf(T, [Atom("p")])
    assert C is not None and C.n_memory == 1 and C.allowed(0, 0) == {0}


def test_unknown_goal_is_unrealizable(fc):
    assert synth_gf(fc[3], [Atom("zz")]) is None


def test_two_goal_needs_memory():
    G = two_goal_system()
    C = synth_gf(G, [Atom("a"), Atom("b")], initial=range(3))
    assert C is not None and C.winning == {0, 1, 2} and C.n_memory == 2
    assert C.allowed(0, 0) != C.allowed(1, 0)
    prod, configs = controlled_product(G, C, range(3))
    for goal in ("a", "b"):
        hit = goal_states(G, [goal])
        avoid = {i: [j for s, _, j in prod.edges() if s == i and configs[j][0] not in hit]
                 for i in range(prod.n_states) if configs[i][0] not in hit}
        assert not cyclic_components(prod.n_states, avoid)


def test_reached_superblock_and_formulas(fc):
    G, R, Q, Qts, ids = fc
    D, C, B2, A1 = ids["D"], ids["C"], ids["B2"], ids["A1"]
    only_dwc = restricted(Qts, {D: {label_of(Q, Qts, D, W, C)}})
    assert reached_superblock(Qts, only_dwc, (D, 0)) == {C}
    assert abstract_formula(Qts, only_dwc, (D, 0)) == (W, frozenset({C}))
    both = restricted(Qts, {B2: {label_of(Q, Qts, B2, U, ids["B1"]), label_of(Q, Qts, B2, U, ids["A2"], C)}})
    assert reached_superblock(Qts, both, (B2, 0)) == {ids["B1"], ids["A2"], C}
    assert abstract_formula(Qts, both, (C, 0)) == (U, frozenset({B2}))
    stay = restricted(Qts, {A1: {label_of(Q, Qts, A1, W)}})
    assert reached_superblock(Qts, stay, (A1, 0)) == frozenset()
    assert abstract_formula(Qts, stay, (A1, 0)) == (W, frozenset())
    psi = enforced_formula(Qts, only_dwc, (D, 0), R)
    assert psi.source == R.blocks[D] and psi.target == R.blocks[C] and psi.modality is W


def test_executor_decisions(fc):
    G, R, Q, Qts, ids = fc
    D, C = ids["D"], ids["C"]
    abstract = restricted(Qts, {D: {label_of(Q, Qts, D, W, C)}})
    d1, d2, c1 = (G.state_index(x) for x in ("d1", "d2", "c1"))
    sigma1 = {G.label_index("sigma1")}
    ex = new_executor(G, R, Q, abstract, d1)
    assert ex.config == (D, 0) and ex.last == sigma1
    assert ex.current_formula.modality is W and ex.current_formula.target == R.blocks[C]
    assert ex.step(d2) == sigma1 and ex.config == (D, 0)
    ex.step(c1)
    assert ex.config[0] == C and ex.defined
    with pytest.raises(ExecutorError):
        ex.step(G.state_index("a1"))


def test_executor_undefined_fallback(fc):
    G, R, Q, Qts, ids = fc
    D, C = ids["D"], ids["C"]
    ex = Executor(G, R, Qts, restricted(Qts, {D: {label_of(Q, Qts, D, W, C)}}))
    d2, a3 = G.state_index("d2"), G.state_index("a3")
    assert ex.advance((D, 0), d2, a3) is UNDEFINED
    assert ex.decide(UNDEFINED, a3) == frozenset(G.enabled(a3))
    with pytest.raises(ExecutorError):
        Executor(G, R, Qts, FiniteMemoryController(1, 0, {}, {})).start(d2)


def test_identity_relation_executor():
    G = two_goal_system()
    R = Partition.identity(3)
    Q = build_quotient(G, R)
    Qts = quotient_as_ts(Q)
    C = synth_gf(Qts, [Atom("a"), Atom("b")], initial=range(3))
    ex = new_executor(G, R, Q, C, 0)
    for _ in range(5):
        psi = ex.current_formula
        assert len(psi.source) == 1
        for a in ex.last:
            assert set(G.post(ex.state, a)) <= psi.target
        nxt = sorted(set(G.post(ex.state, min(ex.last))))[0]
        ex.step(nxt)


def test_controller_json_roundtrip(fc):
    Qts = fc[3]
    C = synth_gf(Qts, [Atom("a")])
    C2 = FiniteMemoryController.from_dict(Qts, json.loads(C.dumps(Qts)))
    assert C2 == C
    with pytest.raises(ModelError):
        FiniteMemoryController.from_dict(Qts, {"output": [[0, "nope", []]]})


def test_enforcement_transfer_on_four_class(fc):
    G, R, Q, Qts, ids = fc
    for goals in ([Atom("a")], [Atom("b")]):
        C = synth_gf(Qts, goals)
        ex = Executor(G, R, Qts, C)
        loop = closed_loop(ex, sorted(G.initial))
        assert check_block_correspondence(ex, loop) == []
        assert goals_violated(G, loop, goals) == []
        # every formula the executor uses is enforceable from its whole block
        for _, config in loop.nodes:
            psi = ex.formula(config)
            assert psi.source <= ecs(G, psi).set


def test_executor_configs_follow_blocks(fc):
    G, R, Q, Qts, ids = fc
    C = synth_gf(Qts, [Atom("a")])
    rng = random.Random(3)
    for _ in range(20):
        ex = new_executor(G, R, Q, C, sorted(G.initial)[0])
        for _ in range(30):
            before = ex.config
            u = ex.state
            v = rng.choice([t for a in sorted(ex.last) for t in G.post(u, a).tolist()])
            ex.step(v)
            if R.block_of[v] == R.block_of[u]:
                assert ex.config == before
            else:
                assert ex.config[0] == R.block_of[v]


# --- properties ---------------------------------------------------------------


@given(systems(max_states=6, props=("p", "q")), st.lists(st.sampled_from(["p", "q"]), min_size=1, max_size=2, unique=True))
def test_synthesis_sound(T, goal_names):
    goals = [Atom(g) for g in goal_names]
    win, _ = gf_winning(T, goals)
    C = synth_gf(T, goals, initial=win) if win else None
    if C is None:
        return
    prod, configs = controlled_product(T, C, sorted(win))
    assert prod.is_deadlock_free()
    for g in goals:
        hit = goal_states(T, g)
        avoid = {}
        for s, _, t in prod.edges():
            if configs[s][0] not in hit and configs[t][0] not in hit:
                avoid.setdefault(s, []).append(t)
        assert not cyclic_components(prod.n_states, avoid)
