from itertools import combinations

import pytest
from hypothesis import given
from hypothesis import strategies as st

import rsb.partition as rp
from conftest import U, W, block_ids, states_of, systems
from rsb.errors import ModelError, PreconditionError
from rsb.fixpoint import brute_force_ecs, ecs
from rsb.logic import StutterStepFormula
from rsb.models import FOUR_CLASS_BLOCKS
from rsb.partition import (
    Partition, SplitterSearch, coarsest_rsb, find_splitter, initial_partition, is_rsb, minimize,
    refine, target_families,
)
from rsb.ts import TransitionSystem


def six_blocks(G):
    return Partition(G.n_states, [states_of(G, name) for name in FOUR_CLASS_BLOCKS])


def merged_b(G):
    R = six_blocks(G)
    B1, B2 = states_of(G, "B1"), states_of(G, "B2")
    return Partition(G.n_states, [b for b in R.blocks if b not in (B1, B2)] + [B1 | B2])


def test_initial_partition_by_labels(four_class):
    R = initial_partition(four_class)
    assert sorted(sorted(four_class.names[s][0] for s in b) for b in R.blocks) == [
        ["a"] * 4, ["b"] * 4, ["c"] * 2, ["d"] * 2,
    ]
    unlabelled = TransitionSystem.build(["x", "y", "z"], ["go"], [(0, 0, 1), (1, 0, 2), (2, 0, 0)])
    assert initial_partition(unlabelled).n_blocks == 1


def test_six_block_partition_is_final(four_class):
    G = four_class
    assert find_splitter(G, six_blocks(G)) is None
    assert is_rsb(G, six_blocks(G))
    assert coarsest_rsb(G) == six_blocks(G)


def test_merged_b_block_is_split(four_class):
    G = four_class
    R = merged_b(G)
    assert not is_rsb(G, R)
    B = states_of(G, "B1", "B2")
    b3, b4, b1 = (G.state_index(x) for x in ("b3", "b4", "b1"))
    psi = StutterStepFormula(B, states_of(G, "A2", "C"), U)
    inside = ecs(G, psi).set & B
    assert {b3, b4} <= inside and b1 not in inside
    report = find_splitter(G, R)
    assert report is not None and report.formula.source == B
    assert report.inside == ecs(G, report.formula).set & B
    R2 = refine(R, report)
    assert not R2.related(b1, b4)
    assert R2.generation == R.generation + 1
    assert R2.is_finer_than(R)


def test_trivial_cases():
    one = TransitionSystem.build(["x"], ["go"], [(0, 0, 0)])
    assert find_splitter(one, initial_partition(one)) is None
    loops = TransitionSystem.build(["x", "y", "z"], ["go"], [(s, 0, s) for s in range(3)], labeling=[{"p"}, {"p"}, {"q"}])
    assert coarsest_rsb(loops) == initial_partition(loops)


def test_identity_is_rsb(four_class):
    assert is_rsb(four_class, Partition.identity(four_class.n_states))


def test_minimal_targets_four_class(four_class):
    G = four_class
    R = six_blocks(G)
    ids = block_ids(G, R)
    names = {v: k for k, v in ids.items()}
    search = SplitterSearch(G)
    got = {
        (names[b], mod.value): sorted(sorted(names[t] for t in T) for T in search.minimal_targets(R, R.blocks[b], mod))
        for b in range(R.n_blocks) for mod in (U, W)
    }
    assert got[("C", "U")] == [["B2"]]
    assert got[("A1", "W")] == [[]]
    # the quotient later drops D W A2 because D U A2 implies it
    assert got[("D", "W")] == [["A2"], ["C"]]
    assert got[("B2", "U")] == [["A2", "C"], ["B1"]]
    with pytest.raises(PreconditionError):
        search.minimal_targets(merged_b(G), states_of(G, "B1", "B2"), U)


def test_minimize_rejects_deadlock():
    G = TransitionSystem.build(["x", "y"], ["go"], [(0, 0, 1)])
    with pytest.raises(PreconditionError):
        minimize(G)


def test_partition_validation_and_roundtrip(four_class):
    with pytest.raises(ModelError):
        Partition(3, [[0, 1], [1, 2]])
    with pytest.raises(ModelError):
        Partition(3, [[0, 1]])
    R = six_blocks(four_class)
    assert Partition.from_dict(four_class, R.to_dict(four_class)) == R


# --- independent oracle -------------------------------------------------------


def oracle_coarsest(G):
    """Naive refinement over every superblock target, using the enumeration oracle for ECS."""
    R = initial_partition(G)
    while True:
        for P in R.blocks:
            others = [b for b in R.blocks if b != P]
            split = None
            for r in range(len(others) + 1):
                for combo in combinations(others, r):
                    T = frozenset().union(*combo)
                    for mod in (U, W):
                        inside = brute_force_ecs(G, StutterStepFormula(P, T, mod)) & P
                        if inside and inside != P:
                            split = inside
                            break
                    if split:
                        break
                if split:
                    break
            if split:
                R = Partition(G.n_states, [b for b in R.blocks if b != P] + [split, P - split])
                break
        else:
            return R


@given(systems(max_states=5))
def test_coarsest_matches_naive_oracle(G):
    assert coarsest_rsb(G) == oracle_coarsest(G)


@given(systems(max_states=8))
def test_refinement_chain(G):
    run = minimize(G, keep_chain=True)
    final = run.partition
    assert is_rsb(G, final)
    for older, newer in zip(run.chain, run.chain[1:]):
        assert newer.is_finer_than(older) and newer.generation > older.generation
    assert all(final.is_finer_than(R) for R in run.chain)
    assert minimize(G).partition.blocks == final.blocks


@given(systems(max_states=5), st.data())
def test_exit_restriction_sound(G, data):
    R = Partition.from_assignment(data.draw(st.lists(st.integers(0, 2), min_size=G.n_states, max_size=G.n_states)))
    P = R.blocks[data.draw(st.integers(0, R.n_blocks - 1))]
    exits = frozenset(t for s in P for t in G.post_any(s).tolist()) - P
    closure = R.union_of({R.block_of[t] for t in exits})
    T = R.union_of(data.draw(st.frozensets(st.integers(0, R.n_blocks - 1)))) - P
    mod = data.draw(st.sampled_from([U, W]))
    full = brute_force_ecs(G, StutterStepFormula(P, T, mod)) & P
    restricted = brute_force_ecs(G, StutterStepFormula(P, T & closure, mod)) & P
    assert full == restricted


@given(systems(max_states=8))
def test_families_agree_with_membership_learning(G):
    fast = minimize(G).partition
    try:
        rp.FAMILY_MAX_BLOCK, saved = 0, rp.FAMILY_MAX_BLOCK
        slow = minimize(G).partition
        R = slow
        search = SplitterSearch(G)
        learnt = {(b, m): sorted(search.minimal_targets(R, R.blocks[b], m)) for b in range(R.n_blocks) for m in (U, W)}
    finally:
        rp.FAMILY_MAX_BLOCK = saved
    assert fast == slow
    search = SplitterSearch(G)
    fam = {(b, m): sorted(search.minimal_targets(R, R.blocks[b], m)) for b in range(R.n_blocks) for m in (U, W)}
    assert fam == learnt


@given(systems(max_states=6))
def test_target_families_are_antichains(G):
    R = initial_partition(G)
    P = R.blocks[0]
    search = SplitterSearch(G)
    seq = list(search.exit_blocks(R, P))
    exit_bit = {t: seq.index(R.block_of[t]) for t in search.solver(P).exit_states}
    for mod in (U, W):
        fam = target_families(G, P, exit_bit, mod)
        for s in P:
            masks = fam[s]
            assert all(not (x & y == x and x != y) for x in masks for y in masks)
            # each family member is exactly a minimal enforceable target for s
            for m in masks:
                T = R.union_of(seq[i] for i in range(len(seq)) if m >> i & 1)
                assert s in ecs(G, StutterStepFormula(P, T, mod)).set
