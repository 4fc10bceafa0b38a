"""Two goals reachable from a hub: no positional controller visits both, a two-memory one does."""

from rsb.controller import Executor, synth_gf
from rsb.logic import Atom
from rsb.models import two_goal_system
from rsb.partition import coarsest_rsb
from rsb.quotient import build_quotient, quotient_as_ts


def main() -> None:
    G = two_goal_system()
    R = coarsest_rsb(G)
    Qts = quotient_as_ts(build_quotient(G, R))
    C = synth_gf(Qts, [Atom("a"), Atom("b")], initial=range(Qts.n_states))
    print(f"blocks: {R.n_blocks}, memory states: {C.n_memory}")
    ex = Executor(G, R, Qts, C)
    s = G.state_index("0")
    labels = ex.start(s)
    for k in range(8):
        print(f"{k}: state {G.names[s]} labels {sorted(G.alphabet[a] for a in labels)}")
        s = int(G.post(s, min(labels))[0])
        labels = ex.step(s)


if __name__ == "__main__":
    main()
