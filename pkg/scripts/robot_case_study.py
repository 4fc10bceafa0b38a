"""Robot room end to end: grid abstraction, coarsest partition, quotient, synthesis, simulation.

Expect several minutes on one core; the partition refinement dominates.
"""

import argparse
import time

from rsb.controller import Executor, gf_goals, synth_gf
from rsb.gridabs import build_grid_ts, robot_landmarks, robot_model, simulate
from rsb.logic import Modality
from rsb.partition import minimize
from rsb.quotient import build_quotient, quotient_as_ts


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cell-size", type=float, default=0.1)
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--steps", type=int, default=10_000)
    args = ap.parse_args()

    model = robot_model(args.cell_size)
    t0 = time.perf_counter()
    G, cmap = build_grid_ts(model)
    print(f"grid: {G.n_states} states, {G.n_labels} controls, {G.n_transitions} transitions")
    m = minimize(G)
    R = m.partition
    print(f"partition: {R.n_blocks} blocks, {m.stats.splitters_applied} splits "
          f"({time.perf_counter() - t0:.0f}s)")

    for region in model.regions:
        blocks = {R.block_of[s] for s in G.states_with(region.name)}
        print(f"  {region.name}: {len(G.states_with(region.name))} cells in {len(blocks)} block(s)")

    Q = build_quotient(G, R, check=False)
    Qts = quotient_as_ts(Q)
    print(f"quotient: {Qts.n_states} states, {Qts.n_labels} minimal formulas")

    marks, bad = robot_landmarks(), R.block_of[cmap.bad]
    strip = {R.block_of[s] for s in cmap.states_in(marks["strip"], "inside")}
    safe = [b for b in strip for mod in Modality for T in Q.min_targets[(b, mod)] if bad not in T]
    print(f"strip: {len(strip)} block(s), {len(safe)} with a formula avoiding the trap")

    home = {R.block_of[s] for s in G.states_with("Home")}
    for name in ("corridor", "loop"):
        cells = cmap.states_in(marks[name], "inside")
        inside = [b for b in range(R.n_blocks) if R.blocks[b] <= cells]
        reach = sum(Q.has_label(b, Modality.UNTIL, home) for b in inside)
        print(f"{name}: {reach}/{len(inside)} blocks can force reaching Home")

    spec = " & ".join(f"G F {r.name}" for r in model.regions)
    C = synth_gf(Qts, gf_goals(spec))
    if C is None:
        print("realizable: false")
        return
    print(f"realizable: true, memory states: {C.n_memory}")
    starts = sorted(G.initial)
    for seed in range(args.runs):
        ex = Executor(G, R, Qts, C)
        traj = simulate(cmap, ex, cmap.center(starts[seed % len(starts)]), args.steps, seed)
        visits = ", ".join(f"{k}={v}" for k, v in sorted(traj.region_entries().items()))
        print(f"run {seed}: failed={str(traj.failed).lower()} visits: {visits}")


if __name__ == "__main__":
    main()
