"""Grid abstraction of ``x(k+1) = x(k) + u(k) + w(k)`` in the plane.

Cells are half-open squares ``[i h, (i+1) h) x [j h, (j+1) h)``.  From a cell
under control ``u`` the reachable set is the box ``cell + u + W``, so the
successor cells are exactly the cells meeting that box.  Cells that are
outside the domain or touch the obstacle are not states; reaching one of
them is a transition to a single labelled trap state.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
import shapely
from shapely.geometry import Polygon

from .errors import ModelError
from .ts import TransitionSystem

EPS = 1e-9  # tolerance, in cell units, for snapping to cell boundaries

Vertices = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class RegionSpec:
    name: str
    vertices: Vertices

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.vertices)


def rect(name: str, x0: float, y0: float, x1: float, y1: float) -> RegionSpec:
    return RegionSpec(name, ((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


@dataclass(frozen=True)
class GridModel:
    """Planar single-integrator robot with bounded disturbance."""

    domain: tuple[float, float, float, float] = (0.0, 0.0, 6.0, 5.0)
    obstacle: Vertices = ()
    cell_size: float = 0.1
    control_bound: tuple[float, float] = (0.6, 0.6)
    control_step: float = 0.3
    disturbance: tuple[float, float] = (0.3, 0.3)
    regions: tuple[RegionSpec, ...] = ()
    initial_region: str | None = None
    bad_label: str = "Bad"

    def validate(self) -> None:
        if len(self.domain) != 4 or len(self.disturbance) != 2 or len(self.control_bound) != 2:
            raise ModelError("domain needs 4 numbers, disturbance and control_bound 2 each")
        x0, y0, x1, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ModelError("domain must have positive extent")
        if self.cell_size <= 0:
            raise ModelError("cell size must be positive")
        if min(self.disturbance) < 0:
            raise ModelError("disturbance half-widths must be nonnegative")
        if self.control_step <= 0 or min(self.control_bound) < 0:
            raise ModelError("control grid must be nonempty")
        names = [r.name for r in self.regions]
        if len(set(names)) != len(names) or self.bad_label in names:
            raise ModelError("region names must be distinct and differ from the trap label")
        if self.initial_region is not None and self.initial_region not in names:
            raise ModelError(f"initial region {self.initial_region!r} is not defined")

    def controls(self) -> list[tuple[float, float]]:
        """Quantised control grid, ordered by first then second component."""
        axes = []
        for bound in self.control_bound:
            steps = int(math.floor(bound / self.control_step + EPS))
            axes.append([round(i * self.control_step, 12) for i in range(-steps, steps + 1)])
        return [(a, b) for a in axes[0] for b in axes[1]]

    def with_(self, **changes) -> "GridModel":
        return replace(self, **changes)


def robot_model(cell_size: float = 0.1) -> GridModel:
    """Robot in a 6 x 5 room with a slanted obstacle and four labelled corners."""
    return GridModel(
        domain=(0.0, 0.0, 6.0, 5.0),
        obstacle=((0.5, 2.0), (11 / 3, 2.0), (5.0, 4.0), (0.5, 4.0)),
        cell_size=cell_size,
        regions=(
            rect("Home", 0, 4, 1, 5),
            rect("Task1", 5, 4, 6, 5),
            rect("Task2", 0, 0, 1, 1),
            rect("Task3", 5, 0, 6, 1),
        ),
        initial_region="Home",
    )


def robot_landmarks() -> dict[str, RegionSpec]:
    """Unlabelled areas of the robot room used to inspect the computed partition.

    ``corridor`` is the passage above the obstacle, ``loop`` the area below
    and to the right of it, and ``strip`` the narrow gap left of it.
    """
    return {
        "corridor": RegionSpec("corridor", (
            (1, 5), (5, 5), (5, 4.3), (4.7, 4.3), (4.5001, 4), (1, 4), (1, 4.3),
        )),
        "loop": RegionSpec("loop", (
            (6, 4), (6, 1), (5, 1), (5, 0), (1, 0), (1, 1), (0, 1), (0, 2.3), (0.5, 2.3),
            (0.5, 2), (11 / 3, 2), (3.867, 2.3), (4.7, 3.5499), (4.8001, 3.7), (5.3, 3.7), (5.3, 4),
        )),
        "strip": rect("strip", 0, 2.3, 0.5, 3.7),
    }


# --- abstraction --------------------------------------------------------------


@dataclass
class CellMap:
    """Correspondence between grid cells and abstract states."""

    model: GridModel
    shape: tuple[int, int]
    state_of_cell: np.ndarray  # (nx, ny) -> state id, -1 if the cell is not a state
    cells: np.ndarray  # state id -> (i, j)
    bad: int
    controls: list[tuple[float, float]]
    labels: list[frozenset] = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        x0, y0 = self.model.domain[:2]
        h = self.model.cell_size
        return (int(math.floor((x - x0) / h + EPS)), int(math.floor((y - y0) / h + EPS)))

    def state_at(self, x: float, y: float) -> int:
        """Abstract state of a point; the trap state when it is not in a valid cell."""
        i, j = self.cell_index(x, y)
        nx, ny = self.shape
        if 0 <= i < nx and 0 <= j < ny:
            s = int(self.state_of_cell[i, j])
            if s >= 0:
                return s
        return self.bad

    def cell_box(self, s: int) -> tuple[float, float, float, float]:
        i, j = self.cells[s]
        x0, y0 = self.model.domain[:2]
        h = self.model.cell_size
        return (x0 + i * h, y0 + j * h, x0 + (i + 1) * h, y0 + (j + 1) * h)

    def center(self, s: int) -> tuple[float, float]:
        a, b, c, d = self.cell_box(s)
        return ((a + c) / 2, (b + d) / 2)

    def states_in(self, region: RegionSpec, how: str = "center") -> frozenset[int]:
        """Cell states whose center lies in (``center``) or whose box is inside (``inside``) a region."""
        poly = region.polygon
        h = self.model.cell_size
        x0, y0 = self.model.domain[:2]
        lo = self.cells * h + np.array([x0, y0])
        if how == "center":
            geoms = shapely.points(lo + h / 2)
            hit = shapely.contains(poly, geoms)
        elif how == "inside":
            geoms = shapely.box(lo[:, 0], lo[:, 1], lo[:, 0] + h, lo[:, 1] + h)
            hit = shapely.covers(shapely.buffer(poly, h * EPS), geoms)
        else:
            raise ValueError(how)
        return frozenset(np.flatnonzero(hit).tolist())

    def decode(self, label: int) -> tuple[float, float]:
        return self.controls[label]


def _label_name(u: tuple[float, float]) -> str:
    return f"u({u[0]:+.2f},{u[1]:+.2f})"


def build_grid_ts(m: GridModel) -> tuple[TransitionSystem, CellMap]:
    """Finite abstraction of the grid model and its cell map."""
    m.validate()
    x0, y0, x1, y1 = m.domain
    h = m.cell_size
    nx = int(math.floor((x1 - x0) / h + EPS))
    ny = int(math.floor((y1 - y0) / h + EPS))
    if nx <= 0 or ny <= 0:
        raise ModelError("domain is smaller than one cell")
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    lo_x = x0 + ii.ravel() * h
    lo_y = y0 + jj.ravel() * h
    valid = (lo_x + h <= x1 + h * EPS) & (lo_y + h <= y1 + h * EPS)
    if m.obstacle:
        obstacle = Polygon(m.obstacle)
        cell_boxes = shapely.box(lo_x, lo_y, lo_x + h, lo_y + h)
        overlap = shapely.area(shapely.intersection(cell_boxes, obstacle))
        valid &= overlap <= (h * h) * EPS
    keep = np.flatnonzero(valid)
    if len(keep) == 0:
        raise ModelError("no cell lies in the free space")
    state_of_cell = np.full(nx * ny, -1, dtype=np.int64)
    state_of_cell[keep] = np.arange(len(keep))
    state_of_cell = state_of_cell.reshape(nx, ny)
    cells = np.stack([ii.ravel()[keep], jj.ravel()[keep]], axis=1)
    n = len(keep)
    bad = n
    controls = m.controls()
    k = len(controls)

    # successor index ranges per axis, in cell units
    wx, wy = m.disturbance
    triples = []
    for a, (u1, u2) in enumerate(controls):
        span = []
        for axis, (u, w) in enumerate(((u1, wx), (u2, wy))):
            c = cells[:, axis].astype(float)
            lo = np.floor(c + (u - w) / h + EPS).astype(np.int64)
            hi = np.ceil(c + 1 + (u + w) / h - EPS).astype(np.int64) - 1
            span.append((lo, hi))
        (lx, hx), (ly, hy) = span
        width = int((hx - lx).max()) + 1
        height = int((hy - ly).max()) + 1
        for dx in range(width):
            for dy in range(height):
                ti, tj = lx + dx, ly + dy
                inside = (ti <= hx) & (tj <= hy)
                src = np.flatnonzero(inside)
                ti, tj = ti[src], tj[src]
                in_grid = (ti >= 0) & (ti < nx) & (tj >= 0) & (tj < ny)
                tgt = np.full(len(src), bad, dtype=np.int64)
                tgt[in_grid] = state_of_cell[ti[in_grid], tj[in_grid]]
                tgt[tgt < 0] = bad
                triples.append(np.stack([src, np.full(len(src), a), tgt], axis=1))
    triples.append(np.stack([np.full(k, bad), np.arange(k), np.full(k, bad)], axis=1))

    cmap = CellMap(m, (nx, ny), state_of_cell, cells, bad, controls)
    labeling: list[set] = [set() for _ in range(n)]
    for region in m.regions:
        for s in cmap.states_in(region, "center"):
            labeling[s].add(region.name)
    labeling.append({m.bad_label})
    cmap.labels = [frozenset(ps) for ps in labeling]
    initial = []
    if m.initial_region is not None:
        spec = next(r for r in m.regions if r.name == m.initial_region)
        initial = sorted(cmap.states_in(spec, "center"))
    names = [f"c{i}_{j}" for i, j in cells] + ["Bad"]
    props = [r.name for r in m.regions] + [m.bad_label]
    G = TransitionSystem.build(
        names, [_label_name(u) for u in controls], np.concatenate(triples), initial, labeling, props
    )
    return G, cmap


# --- simulation ---------------------------------------------------------------


class Controller(Protocol):
    def start(self, s0: int) -> frozenset: ...

    def step(self, observed: int) -> frozenset: ...


@dataclass(frozen=True)
class StepRecord:
    step: int
    x: float
    y: float
    cell: int
    label: int | None
    u: tuple[float, float]
    w: tuple[float, float]
    regions: frozenset


@dataclass
class Trajectory:
    records: list[StepRecord]
    seed: int
    failed: bool = False
    reason: str = ""

    def region_entries(self) -> dict[str, int]:
        """How often each proposition becomes true (counting the start)."""
        counts: dict[str, int] = {}
        prev: frozenset = frozenset()
        for r in self.records:
            for p in r.regions - prev:
                counts[p] = counts.get(p, 0) + 1
            prev = r.regions
        return counts

    def to_csv(self, cmap: CellMap | None = None) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["step", "x", "y", "cell", "label", "u1", "u2", "w1", "w2", "regions"])
        for r in self.records:
            writer.writerow([
                r.step, repr(r.x), repr(r.y), r.cell, "" if r.label is None else r.label,
                repr(r.u[0]), repr(r.u[1]), repr(r.w[0]), repr(r.w[1]), "|".join(sorted(r.regions)),
            ])
        return out.getvalue()


def simulate(
    cmap: CellMap,
    controller: Controller,
    start: tuple[float, float],
    steps: int,
    seed: int,
    disturbance: tuple[float, float] | None = None,
) -> Trajectory:
    """Closed-loop run of the continuous dynamics.

    Each step applies the lowest-index permitted label.  A run that reaches a
    point outside the abstract state space stops with ``failed`` set.
    """
    rng = np.random.default_rng(seed)
    wx, wy = cmap.model.disturbance if disturbance is None else disturbance
    x, y = map(float, start)
    s = cmap.state_at(x, y)
    if s == cmap.bad:
        raise ModelError(f"start point {start} is not in a free cell")
    labels = controller.start(s)
    records = []
    for k in range(steps):
        a = min(labels)
        u = cmap.decode(a)
        w = (float(rng.uniform(-wx, wx)), float(rng.uniform(-wy, wy)))
        records.append(StepRecord(k, x, y, s, a, u, w, cmap.labels[s]))
        x, y = x + u[0] + w[0], y + u[1] + w[1]
        s = cmap.state_at(x, y)
        if s == cmap.bad:
            records.append(StepRecord(k + 1, x, y, s, None, (0.0, 0.0), (0.0, 0.0), cmap.labels[s]))
            return Trajectory(records, seed, True, "left the free space")
        labels = controller.step(s)
    records.append(StepRecord(steps, x, y, s, None, (0.0, 0.0), (0.0, 0.0), cmap.labels[s]))
    return Trajectory(records, seed)


# --- config files -------------------------------------------------------------


def load_grid_config(text: str) -> GridModel:
    """Parse ``key = value`` lines with JSON values; ``region.NAME`` lines add regions."""
    fields: dict = {}
    regions = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ModelError(f"line {lineno}: {exc.msg}") from None
        if key.startswith("region."):
            regions.append(RegionSpec(key[len("region."):], tuple(tuple(map(float, v)) for v in parsed)))
        elif key in ("domain", "control_bound", "disturbance"):
            fields[key] = tuple(map(float, parsed))
        elif key == "obstacle":
            fields[key] = tuple(tuple(map(float, v)) for v in parsed)
        elif key in ("cell_size", "control_step"):
            fields[key] = float(parsed)
        elif key in ("initial_region", "bad_label"):
            fields[key] = str(parsed)
        else:
            raise ModelError(f"line {lineno}: unknown key {key!r}")
    model = GridModel(regions=tuple(regions), **fields)
    model.validate()
    return model


def dump_grid_config(m: GridModel) -> str:
    lines = [
        f"domain = {json.dumps(list(m.domain))}",
        f"obstacle = {json.dumps([list(v) for v in m.obstacle])}",
        f"cell_size = {json.dumps(m.cell_size)}",
        f"control_bound = {json.dumps(list(m.control_bound))}",
        f"control_step = {json.dumps(m.control_step)}",
        f"disturbance = {json.dumps(list(m.disturbance))}",
    ]
    if m.initial_region is not None:
        lines.append(f"initial_region = {json.dumps(m.initial_region)}")
    lines.append(f"bad_label = {json.dumps(m.bad_label)}")
    for r in m.regions:
        lines.append(f"region.{r.name} = {json.dumps([list(v) for v in r.vertices])}")
    return "\n".join(lines) + "\n"
