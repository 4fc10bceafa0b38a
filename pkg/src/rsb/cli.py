"""Command-line front end: ``rsb <subcommand> ...``.

Exit codes: 0 success, 1 domain failure (unrealizable, not a bisimulation,
cap exceeded), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import Executor, FiniteMemoryController, gf_goals, synth_gf
from .errors import CapExceeded, ExecutorError, ModelError, NotBisimulationError, PreconditionError
from .fixpoint import ecs
from .gridabs import build_grid_ts, load_grid_config, robot_model, simulate
from .logic import Modality, StutterStepFormula, is_propositional, parse_formula
from .partition import Partition, minimize
from .quotient import block_name, build_quotient, quotient_as_ts
from .ts import TransitionSystem, load_ts, save_ts


@dataclass(frozen=True)
class PipelineConfig:
    command: str
    model: Path | None = None
    output: Path | None = None
    spec: str | None = None
    seed: int = 0
    steps: int = 100
    cell_size: float | None = None
    as_json: bool = False
    verbose: bool = False


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 2 with usage, as argparse does, but catchable
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rsb", description="Robust stutter bisimulation toolkit")
    p.add_argument("--json", action="store_true", help="machine-readable diagnostics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="validate a model and report deadlock freedom")
    c.add_argument("model", type=Path)

    c = sub.add_parser("ecs", help="enforceable set of a stutter step formula")
    c.add_argument("model", type=Path)
    c.add_argument("--source", required=True, help="propositional formula or @state,state,...")
    c.add_argument("--target", default="false", help="propositional formula or @state,state,...")
    c.add_argument("--modality", choices=["U", "W"], default="U")

    c = sub.add_parser("minimize", help="coarsest robust stutter bisimulation")
    c.add_argument("model", type=Path)
    c.add_argument("-o", "--output", type=Path)

    c = sub.add_parser("quotient", help="materialised quotient system")
    c.add_argument("model", type=Path)
    c.add_argument("-o", "--output", type=Path)
    c.add_argument("--partition", type=Path, help="use this partition instead of minimising")

    c = sub.add_parser("synth", help="minimise, build the quotient and solve a GF specification")
    c.add_argument("model", type=Path)
    c.add_argument("--spec", required=True)
    c.add_argument("-o", "--output", type=Path)

    c = sub.add_parser("run", help="run a synthesised controller on the model")
    c.add_argument("model", type=Path)
    c.add_argument("controller", type=Path)
    c.add_argument("--start", required=True)
    c.add_argument("--steps", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("grid-build", help="grid abstraction of the robot model")
    c.add_argument("--config", type=Path)
    c.add_argument("--cell-size", type=float)
    c.add_argument("-o", "--output", type=Path)

    c = sub.add_parser("grid-sim", help="synthesise on the grid and simulate the continuous robot")
    c.add_argument("--config", type=Path)
    c.add_argument("--cell-size", type=float)
    c.add_argument("--spec")
    c.add_argument("--steps", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("-o", "--output", type=Path)
    return p


def _config(ns: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        command=ns.command,
        model=getattr(ns, "model", None),
        output=getattr(ns, "output", None),
        spec=getattr(ns, "spec", None),
        seed=getattr(ns, "seed", 0),
        steps=getattr(ns, "steps", 100),
        cell_size=getattr(ns, "cell_size", None),
        as_json=ns.json,
        verbose=ns.verbose,
    )


class _Out:
    def __init__(self, as_json: bool):
        self.as_json = as_json

    def __call__(self, text: str, **fields):
        if self.as_json:
            print(json.dumps(fields, sort_keys=True))
        else:
            print(text)


def _load(path: Path) -> TransitionSystem:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None
    return load_ts(text)


def _state_set(G: TransitionSystem, expr: str) -> frozenset[int]:
    expr = expr.strip()
    if expr.startswith("@"):
        names = [n for n in expr[1:].split(",") if n]
        return frozenset(G.state_index(n) for n in names)
    from .controller import goal_states

    f = parse_formula(expr)
    if not is_propositional(f):
        raise ModelError("state sets must be propositional formulas")
    return goal_states(G, f)


def _names(G: TransitionSystem, states) -> list[str]:
    return [G.names[s] for s in sorted(states)]


def _pipeline(G: TransitionSystem):
    m = minimize(G)
    Q = build_quotient(G, m.partition, check=False)
    return m, Q, quotient_as_ts(Q)


def _cmd_check(cfg: PipelineConfig, out: _Out) -> int:
    G = _load(cfg.model)
    free = G.is_deadlock_free()
    out(f"deadlock-free: {str(free).lower()}", deadlock_free=free, states=G.n_states,
        labels=G.n_labels, transitions=G.n_transitions)
    return 0 if free else 1


def _cmd_ecs(cfg: PipelineConfig, ns, out: _Out) -> int:
    G = _load(cfg.model)
    P, T = _state_set(G, ns.source), _state_set(G, ns.target)
    if P & T:
        raise PreconditionError("source and target overlap")
    mod = Modality.UNTIL if ns.modality == "U" else Modality.WEAK_UNTIL
    fp = ecs(G, StutterStepFormula(P, T, mod))
    ranks = {G.names[s]: r for s, r in sorted(fp.rank.items())} if fp.rank is not None else None
    text = "ecs: {" + ", ".join(_names(G, fp.set)) + "}"
    if ranks:
        text += "\nranks: " + ", ".join(f"{k}={v}" for k, v in ranks.items())
    out(text, ecs=_names(G, fp.set), ranks=ranks)
    return 0


def _cmd_minimize(cfg: PipelineConfig, out: _Out) -> int:
    G = _load(cfg.model)
    m = minimize(G)
    if cfg.output:
        cfg.output.write_text(json.dumps(m.partition.to_dict(G), indent=1) + "\n", encoding="utf-8")
    st = m.stats
    out(
        f"blocks: {m.partition.n_blocks}\n"
        f"iterations: {st.iterations}, splitters tested: {st.formulas_tested}, splitters applied: {st.splitters_applied}",
        blocks=m.partition.n_blocks, iterations=st.iterations,
        splitters_tested=st.formulas_tested, splitters_applied=st.splitters_applied,
    )
    return 0


def _cmd_quotient(cfg: PipelineConfig, ns, out: _Out) -> int:
    G = _load(cfg.model)
    if ns.partition:
        R = Partition.from_dict(G, json.loads(ns.partition.read_text(encoding="utf-8")))
        Q = build_quotient(G, R)
    else:
        R = minimize(G).partition
        Q = build_quotient(G, R, check=False)
    Qts = quotient_as_ts(Q)
    if cfg.output:
        cfg.output.write_text(save_ts(Qts), encoding="utf-8")
        sidecar = {Q.block_name(b): _names(G, R.blocks[b]) for b in range(R.n_blocks)}
        cfg.output.with_suffix(".blocks.json").write_text(json.dumps(sidecar, indent=1) + "\n", encoding="utf-8")
    dead = [Q.block_name(b) for b in sorted(Q.deadlock_blocks)]
    text = f"quotient: {Qts.n_states} states, {Qts.n_labels} minimal formulas"
    if dead:
        text += "\ndeadlocked blocks: " + ", ".join(dead)
    if not cfg.output:
        text += "\n" + save_ts(Qts).rstrip()
    out(text, states=Qts.n_states, formulas=Qts.n_labels, deadlocked=dead)
    return 0


def _cmd_synth(cfg: PipelineConfig, out: _Out) -> int:
    G = _load(cfg.model)
    goals = gf_goals(cfg.spec)
    m, Q, Qts = _pipeline(G)
    C = synth_gf(Qts, goals)
    if C is None:
        out("realizable: false", realizable=False)
        return 1
    winning = sorted(C.winning)
    concrete = sorted(set().union(*(m.partition.blocks[b] for b in winning)))
    all_states = len(concrete) == G.n_states
    if cfg.output:
        data = C.to_dict(Qts)
        data["partition"] = m.partition.to_dict(G)["blocks"]
        cfg.output.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    out(
        f"realizable: true\nblocks: {m.partition.n_blocks}\nmemory states: {C.n_memory}\n"
        f"winning blocks: {len(winning)}/{Qts.n_states}\n"
        f"winning states: {'all' if all_states else len(concrete)}",
        realizable=True, blocks=m.partition.n_blocks, memory=C.n_memory,
        winning_blocks=[Qts.names[q] for q in winning], winning_states=_names(G, concrete),
    )
    return 0


def _cmd_run(cfg: PipelineConfig, ns, out: _Out) -> int:
    G = _load(cfg.model)
    data = json.loads(ns.controller.read_text(encoding="utf-8"))
    if "partition" not in data:
        raise ModelError("controller file lacks the partition it was synthesised for")
    R = Partition.from_dict(G, {"blocks": data["partition"]})
    Qts = quotient_as_ts(build_quotient(G, R, check=False))
    C = FiniteMemoryController.from_dict(Qts, data)
    ex = Executor(G, R, Qts, C)
    rng = np.random.default_rng(cfg.seed)
    s = G.state_index(ns.start)
    labels = ex.start(s)
    for k in range(cfg.steps):
        names = [G.alphabet[a] for a in sorted(labels)]
        out(f"{k} {G.names[s]} {{{','.join(names)}}} {block_name(G, R.block(s))}",
            step=k, state=G.names[s], labels=names, defined=ex.defined)
        a = min(labels)
        succ = G.post(s, a)
        s = int(succ[rng.integers(len(succ))])
        labels = ex.step(s)
    return 0


def _grid_model(ns):
    m = load_grid_config(ns.config.read_text(encoding="utf-8")) if ns.config else robot_model()
    if ns.cell_size:
        m = m.with_(cell_size=ns.cell_size)
    return m


def _cmd_grid_build(cfg: PipelineConfig, ns, out: _Out) -> int:
    G, cmap = build_grid_ts(_grid_model(ns))
    if cfg.output:
        cfg.output.write_text(save_ts(G), encoding="utf-8")
    out(f"grid states: {G.n_states} (cells {cmap.n_cells} + trap), labels: {G.n_labels}, transitions: {G.n_transitions}",
        states=G.n_states, labels=G.n_labels, transitions=G.n_transitions)
    return 0


def _cmd_grid_sim(cfg: PipelineConfig, ns, out: _Out) -> int:
    model = _grid_model(ns)
    G, cmap = build_grid_ts(model)
    spec = cfg.spec or " & ".join(f"G F {r.name}" for r in model.regions)
    goals = gf_goals(spec)
    m, Q, Qts = _pipeline(G)
    C = synth_gf(Qts, goals)
    if C is None:
        out("realizable: false", realizable=False)
        return 1
    start = sorted(G.initial)[0] if G.initial else 0
    traj = simulate(cmap, Executor(G, m.partition, Qts, C), cmap.center(start), cfg.steps, cfg.seed)
    if cfg.output:
        cfg.output.write_text(traj.to_csv(), encoding="utf-8")
    visits = traj.region_entries()
    out(
        f"blocks: {m.partition.n_blocks}\nsteps: {len(traj.records) - 1}, failed: {str(traj.failed).lower()}\n"
        "visits: " + ", ".join(f"{k}={v}" for k, v in sorted(visits.items())),
        blocks=m.partition.n_blocks, steps=len(traj.records) - 1, failed=traj.failed, visits=visits,
    )
    return 1 if traj.failed else 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"rsb: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    cfg = _config(ns)
    out = _Out(cfg.as_json)
    handlers = {
        "check": lambda: _cmd_check(cfg, out),
        "ecs": lambda: _cmd_ecs(cfg, ns, out),
        "minimize": lambda: _cmd_minimize(cfg, out),
        "quotient": lambda: _cmd_quotient(cfg, ns, out),
        "synth": lambda: _cmd_synth(cfg, out),
        "run": lambda: _cmd_run(cfg, ns, out),
        "grid-build": lambda: _cmd_grid_build(cfg, ns, out),
        "grid-sim": lambda: _cmd_grid_sim(cfg, ns, out),
    }
    try:
        return handlers[cfg.command]()
    except (ModelError, PreconditionError, OSError, json.JSONDecodeError) as exc:
        _diag(cfg, "error", exc)
        return 2
    except (NotBisimulationError, CapExceeded, ExecutorError) as exc:
        _diag(cfg, "failure", exc)
        return 1


def _diag(cfg: PipelineConfig, kind: str, exc: Exception) -> None:
    if cfg.as_json:
        print(json.dumps({kind: str(exc)}), file=sys.stderr)
    else:
        print(f"rsb: {kind}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
