"""Exploration trials: entropy versus trajectory under MI compute rates.

A simulated robot scans a hidden ground-truth scene, folds each scan into
its occupancy grid by log-odds updates, and steers toward the frontier
cell with the best distance-discounted MI.  MI maps are produced by the
fixed-point map engine at the rate the compute platform allows: a compute
snapshots the grid when it starts and its result becomes available one
platform latency later, so slow platforms plan on stale maps.  Everything
downstream of the seed is deterministic.
"""

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .datapath import compute_mi_map_fxp
from .grid import (CellCoord, FcmiParams, MIMap, OccupancyGrid, SensorConfig,
                   bresenham_line)
from .reference import map_entropy

UNKNOWN_LO = 40        # level band treated as unexplored
UNKNOWN_HI = 60
L_FREE = -0.85         # log-odds added per free observation
L_OCC = 1.8            # log-odds added per hit
LEVEL_FLOOR = 1        # clamp band keeps every cell revisable
LEVEL_CEIL = 99
UTILITY_DECAY = 0.05   # per-cell distance discount in the frontier utility


@dataclass(frozen=True)
class Environment:
    """Hidden ground truth: boolean occupancy at the robot map's dims."""

    occupied: np.ndarray
    resolution: float = 1.0

    def __post_init__(self):
        occ = np.ascontiguousarray(np.asarray(self.occupied, dtype=bool))
        if occ.ndim != 2 or occ.size == 0:
            raise ValueError("ground truth must be a non-empty 2-D array")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "occupied", occ)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape

    @classmethod
    def from_grid(cls, grid: OccupancyGrid) -> "Environment":
        lv = grid.levels
        if not np.isin(lv, (0, 100)).all():
            raise ValueError("scene grids must use levels 0 and 100 only")
        return cls(lv == 100, grid.resolution)

    def to_grid(self) -> OccupancyGrid:
        return OccupancyGrid(np.where(self.occupied, 100, 0).astype(np.uint8),
                             self.resolution)


@dataclass(frozen=True)
class PlatformProfile:
    """Latency and energy of one full-map MI compute on a platform."""

    name: str
    mi_latency_s: float
    mi_energy_j: float

    def __post_init__(self):
        if not (self.mi_latency_s > 0 and self.mi_energy_j > 0):
            raise ValueError("latency and energy must both be positive")


# The accelerator figures come from its own cycle/energy model; the 100 ms
# profile stands in for a desktop-GPU baseline at the measured speed and
# energy ratios relative to it.
PLATFORMS = {
    "fpga": PlatformProfile("fpga", 1.55e-3, 1.7e-3),
    "gpu": PlatformProfile("gpu", 0.100, 4.5),
}


@dataclass
class RobotState:
    position: CellCoord
    trajectory_m: float = 0.0
    elapsed_s: float = 0.0


class TrialRow(NamedTuple):
    step: int
    sim_time_s: float
    trajectory_cells: int
    entropy_nats: float
    mi_computes: int
    mi_energy_j: float


@dataclass
class TrialLog:
    platform: str
    seed: int
    rows: list[TrialRow] = field(default_factory=list)
    complete: bool = False

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TrialRow._fields)
        for row in self.rows:
            w.writerow([row.step, f"{row.sim_time_s:.9f}",
                        row.trajectory_cells, f"{row.entropy_nats:.9f}",
                        row.mi_computes, f"{row.mi_energy_j:.9e}"])
        return buf.getvalue()

    def entropy_at(self, trajectory_cells: int) -> float:
        """Entropy after the last step at or under the given path length."""
        best = self.rows[0].entropy_nats
        for row in self.rows:
            if row.trajectory_cells > trajectory_cells:
                break
            best = row.entropy_nats
        return best


class ScanRay(NamedTuple):
    ray: int
    traversed: tuple[CellCoord, ...]   # ground-truth-free cells, pose first
    hit: CellCoord | None              # first occupied cell, None = max range


def simulate_scan(env: Environment, pose: CellCoord,
                  sensor: SensorConfig = SensorConfig()) -> list[ScanRay]:
    """Cast every sensor ray from the pose through the hidden scene."""
    r, c = pose
    height, width = env.shape
    if not (0 <= r < height and 0 <= c < width):
        raise ValueError(f"pose {pose} outside {height}x{width} scene")
    if env.occupied[r, c]:
        raise ValueError(f"pose {pose} is on an occupied ground-truth cell")
    rays = []
    for k, ang in enumerate(sensor.angles):
        scan = bresenham_line(pose, float(ang), env.shape, env.resolution)
        max_cells = len(scan.cells)
        if math.isfinite(sensor.max_range):
            max_cells = min(max_cells,
                            int(sensor.max_range / scan.cell_width) + 1)
        traversed = []
        hit = None
        for cell in scan.cells[:max_cells]:
            if env.occupied[cell.row, cell.col]:
                hit = cell
                break
            traversed.append(cell)
        rays.append(ScanRay(k, tuple(traversed), hit))
    return rays


def _requantize(level: int, delta: float) -> int:
    p = level / 100.0
    odds = math.log(p / (1.0 - p)) + delta
    q = round(100.0 / (1.0 + math.exp(-odds)))
    return min(LEVEL_CEIL, max(LEVEL_FLOOR, q))


def update_occupancy(grid: OccupancyGrid, scan: list[ScanRay]) -> OccupancyGrid:
    """Fold one scan into the map; each observed cell updates once."""
    levels = grid.levels.copy()
    free: set[CellCoord] = set()
    hits: set[CellCoord] = set()
    for ray in scan:
        free.update(ray.traversed)
        if ray.hit is not None:
            hits.add(ray.hit)
    for cell in free:
        levels[cell.row, cell.col] = _requantize(
            int(levels[cell.row, cell.col]), L_FREE)
    for cell in hits:
        levels[cell.row, cell.col] = _requantize(
            int(levels[cell.row, cell.col]), L_OCC)
    return OccupancyGrid(levels, grid.resolution)


def _free_mask(levels: np.ndarray) -> np.ndarray:
    return levels < UNKNOWN_LO


def _bfs_distances(levels: np.ndarray, start: CellCoord) -> np.ndarray:
    """4-connected hop counts through believed-free cells; -1 unreachable.

    The start cell is traversable regardless of its level: the robot is
    standing on it.
    """
    height, width = levels.shape
    passable = _free_mask(levels)
    dist = np.full((height, width), -1, dtype=np.int32)
    dist[start.row, start.col] = 0
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if (0 <= nr < height and 0 <= nc < width
                    and dist[nr, nc] < 0 and passable[nr, nc]):
                dist[nr, nc] = d
                queue.append((nr, nc))
    return dist


def frontier_cells(levels: np.ndarray) -> np.ndarray:
    """Boolean mask of free cells 4-adjacent to at least one unknown cell."""
    unknown = (levels >= UNKNOWN_LO) & (levels <= UNKNOWN_HI)
    near = np.zeros_like(unknown)
    near[:-1, :] |= unknown[1:, :]
    near[1:, :] |= unknown[:-1, :]
    near[:, :-1] |= unknown[:, 1:]
    near[:, 1:] |= unknown[:, :-1]
    return _free_mask(levels) & near


def gbl_select(mi_map: MIMap, grid: OccupancyGrid,
               robot: RobotState) -> CellCoord | None:
    """Reachable frontier cell maximizing MI discounted by path length.

    Ties fall to the nearer candidate, then to row-major order.  Returns
    None when no reachable frontier remains (exploration complete).
    """
    levels = grid.levels
    dist = _bfs_distances(levels, robot.position)
    cand = frontier_cells(levels) & (dist >= 0)
    if not cand.any():
        return None
    best = None
    best_u = -math.inf
    best_d = 0
    for r, c in np.argwhere(cand):
        d = int(dist[r, c])
        u = float(mi_map.values[r, c]) * math.exp(-UTILITY_DECAY * d)
        if u > best_u or (u == best_u and d < best_d):
            best, best_u, best_d = CellCoord(int(r), int(c)), u, d
    return best


def _step_toward(levels: np.ndarray, pos: CellCoord,
                 goal: CellCoord) -> CellCoord | None:
    """First move of a shortest free-space path, None if unreachable."""
    dist = _bfs_distances(levels, goal)
    if dist[pos.row, pos.col] < 0:
        return None
    height, width = levels.shape
    r, c = pos
    here = dist[r, c]
    for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
        if (0 <= nr < height and 0 <= nc < width
                and 0 <= dist[nr, nc] < here):
            return CellCoord(nr, nc)
    return None


class _MICompute(NamedTuple):
    basis: np.ndarray      # grid levels snapshot the compute started from
    basis_step: int        # scan counter at snapshot time
    finish_s: float


def run_trial(env: Environment, sensor: SensorConfig = SensorConfig(),
              params: FcmiParams = FcmiParams(),
              platform: PlatformProfile = PLATFORMS["fpga"],
              scan_rate_hz: float = 30.0, seed: int = 0,
              max_steps: int = 3000) -> TrialLog:
    """One exploration trial; identical inputs give an identical log.

    Per scan period the robot scans, folds the scan into its map, moves one
    cell along the shortest believed-free path to its goal, and replans
    from the newest completed MI map whenever the goal is reached or
    blocked.  A finished MI compute restarts immediately while scans it has
    not seen exist (a slow platform computes back to back); otherwise the
    engine idles until the next scan.  MI values are realized lazily from
    the recorded snapshots, which cannot change the trajectory because only
    maps the planner actually reads ever influence it.
    """
    if scan_rate_hz <= 0:
        raise ValueError("scan_rate_hz must be positive")
    rng = np.random.default_rng(seed)
    free_rows, free_cols = np.nonzero(~env.occupied)
    if free_rows.size == 0:
        raise ValueError("scene has no free cell to start from")
    pick = int(rng.integers(free_rows.size))
    robot = RobotState(CellCoord(int(free_rows[pick]), int(free_cols[pick])))
    grid = OccupancyGrid.uniform(env.shape, 50, env.resolution)
    period = 1.0 / scan_rate_hz

    log = TrialLog(platform.name, seed)
    in_flight: _MICompute | None = None
    latest: _MICompute | None = None
    latest_map: MIMap | None = None
    computes = 0
    goal: CellCoord | None = None
    step = 0
    while step < max_steps:
        now = step * period
        # completions first: a compute finishing exactly on a scan tick has
        # not seen that tick's scan
        while in_flight is not None and in_flight.finish_s <= now:
            latest, latest_map = in_flight, None
            computes += 1
            if latest.basis_step < step:
                start = max(in_flight.finish_s, 0.0)
                in_flight = _MICompute(grid.levels.copy(), step,
                                       start + platform.mi_latency_s)
            else:
                in_flight = None

        scan = simulate_scan(env, robot.position, sensor)
        grid = update_occupancy(grid, scan)
        step += 1
        robot.elapsed_s = now
        if in_flight is None:
            in_flight = _MICompute(grid.levels.copy(), step,
                                   now + platform.mi_latency_s)

        done = False
        if goal is None and latest is not None:
            if latest_map is None:
                latest_map = compute_mi_map_fxp(
                    OccupancyGrid(latest.basis, env.resolution), sensor, params)
            goal = gbl_select(latest_map, grid, robot)
            done = goal is None
        if goal is not None:
            nxt = _step_toward(grid.levels, robot.position, goal)
            if nxt is None:
                goal = None          # blocked: replan next cycle
            else:
                robot.position = nxt
                robot.trajectory_m += env.resolution
                if robot.position == goal:
                    goal = None
        log.rows.append(TrialRow(
            step, now, int(round(robot.trajectory_m / env.resolution)),
            map_entropy(grid), computes, computes * platform.mi_energy_j))
        if done:
            log.complete = True
            break
    return log
