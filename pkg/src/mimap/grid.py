"""Occupancy-grid containers and shared scan-line geometry.

Map-level algorithms in this package do not cast an independent ray from
every cell.  Instead, each beam angle gets one family of parallel scan
lines that covers the grid exactly once; the beam leaving any cell is then
a suffix of the scan line through that cell, so a single sweep of each
line serves every cell on it.

A line is parameterized along its major axis u (the axis with the larger
direction component; columns win ties) as

    minor(u) = phase + floor(slope * u + 0.5)

with a per-line integer ``phase``.  The midpoint rounding breaks ties
toward the positive minor axis.  Because the phase is a property of the
line rather than of any start cell, all cells on a line agree on its
discretization, which is what makes suffix sharing exact.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

OCC_LEVELS = 101  # occupancy stored as integer percent, 0..100


class CellCoord(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class SensorConfig:
    """Beam headings of the simulated range sensor.

    ``delta_theta`` is always derived from ``ray_count`` so the headings
    tile the full circle exactly.  ``max_range`` only matters for scan
    simulation; map-wide MI always extends beams to the grid edge.
    """

    ray_count: int = 60
    max_range: float = math.inf

    def __post_init__(self):
        if self.ray_count < 1:
            raise ValueError("ray_count must be >= 1")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")

    @property
    def delta_theta(self) -> float:
        return 2.0 * math.pi / self.ray_count

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.ray_count) / self.ray_count


@dataclass(frozen=True)
class FcmiParams:
    """Cap constant keeping the recursion finite for fully occupied cells."""

    lambda_cap: float = 1e7

    def __post_init__(self):
        if not self.lambda_cap > 1:
            raise ValueError("lambda_cap must be > 1")

    @property
    def log_lambda_cap(self) -> float:
        return math.log(self.lambda_cap)


@dataclass
class OccupancyGrid:
    """2D grid of occupancy levels; level/100 is the occupancy probability."""

    levels: np.ndarray
    resolution: float = 1.0

    def __post_init__(self):
        lv = np.asarray(self.levels)
        if lv.ndim != 2 or lv.size == 0:
            raise ValueError("levels must be a non-empty 2-D array")
        if lv.min() < 0 or lv.max() > 100:
            raise ValueError("occupancy levels must lie in 0..100")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        self.levels = np.ascontiguousarray(lv, dtype=np.uint8)

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels.shape

    @property
    def height(self) -> int:
        return self.levels.shape[0]

    @property
    def width(self) -> int:
        return self.levels.shape[1]

    def probabilities(self) -> np.ndarray:
        return self.levels.astype(np.float64) / 100.0

    @classmethod
    def uniform(cls, shape, level: int = 50, resolution: float = 1.0):
        return cls(np.full(shape, level, dtype=np.uint8), resolution)


@dataclass
class MIMap:
    """Per-cell mutual information accumulated over all beam headings.

    ``raw`` carries the Q20.12 accumulator words when the map came off the
    fixed-point path; it is None for the floating-point reference.
    """

    values: np.ndarray
    resolution: float = 1.0
    raw: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be 2-D")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def normalized(self) -> np.ndarray:
        """Min-max rescale to [0, 1]; a constant map rescales to all zeros."""
        lo = float(self.values.min())
        hi = float(self.values.max())
        if hi <= lo:
            return np.zeros_like(self.values)
        return (self.values - lo) / (hi - lo)


@dataclass
class LineScan:
    """One scan line: ordered cells plus the constant per-angle cell width.

    Cell order depends on the producer: ``bresenham_line`` yields beam
    order (start cell outward), ``line_families`` yields scan order, which
    is anti-parallel to the beam so the recursion can run in one pass.
    """

    angle: float
    cells: list[CellCoord]
    cell_width: float


def cell_width(angle: float, resolution: float) -> float:
    """Per-step beam advance at this heading: the major-axis chord length."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    return resolution / max(abs(math.cos(angle)), abs(math.sin(angle)))


def _axes(angle: float) -> tuple[bool, int, float]:
    """Split a heading into (major_is_col, step sign, minor-per-major slope)."""
    dc = math.cos(angle)  # along columns (x)
    dr = math.sin(angle)  # along rows (y)
    if abs(dc) >= abs(dr):
        return True, (1 if dc > 0 else -1), dr / dc
    return False, (1 if dr > 0 else -1), dc / dr


def bresenham_line(start: CellCoord, angle: float, bounds: tuple[int, int],
                   resolution: float = 1.0) -> LineScan:
    """Cells covered by the beam leaving ``start`` at ``angle``, start first.

    The traversal follows the shared line-family phase (module docstring),
    so the result is exactly the suffix, from ``start`` to the grid edge,
    of the family line through ``start``.
    """
    height, width = bounds
    r0, c0 = start
    if not (0 <= r0 < height and 0 <= c0 < width):
        raise ValueError(f"start cell {(r0, c0)} outside {height}x{width} grid")
    major_is_col, step, slope = _axes(angle)
    if major_is_col:
        u, v_max = c0, height
        u_max = width
        v0 = r0
    else:
        u, v_max = r0, width
        u_max = height
        v0 = c0
    phase = v0 - math.floor(slope * u + 0.5)
    cells = []
    while 0 <= u < u_max:
        v = phase + math.floor(slope * u + 0.5)
        if not (0 <= v < v_max):
            break  # minor coord is monotone in u: once out, never back
        cells.append(CellCoord(v, u) if major_is_col else CellCoord(u, v))
        u += step
    return LineScan(angle, cells, cell_width(angle, resolution))


@dataclass(frozen=True, eq=False)
class LineFamily:
    """Flat-array form of all scan lines of one heading over one grid shape.

    ``cells`` holds flat indices (row*W + col) for every grid cell exactly
    once, in scan order within each line (far end of the beam first).
    Lines are grouped into wrap units: phases congruent modulo the minor
    extent M form the modular continuation of a single beam across the map
    boundary, and each unit covers every major coordinate exactly once, so
    all units of one heading hold exactly the same number of cells.

      cells[seg_start[i] : seg_start[i+1]]   -> line i (one wrap segment)
      lines unit_first_seg[j] .. unit_first_seg[j+1]-1  -> wrap unit j
      seg_phase[i]                            -> phase of line i
    """

    angle: float
    shape: tuple[int, int]
    major_is_col: bool
    step: int
    slope: float
    cells: np.ndarray
    seg_start: np.ndarray
    unit_first_seg: np.ndarray
    seg_phase: np.ndarray

    @property
    def n_lines(self) -> int:
        return len(self.seg_start) - 1

    @property
    def n_units(self) -> int:
        return len(self.unit_first_seg) - 1

    def line_cells(self, i: int) -> np.ndarray:
        return self.cells[self.seg_start[i]:self.seg_start[i + 1]]

    def line_lengths(self) -> np.ndarray:
        return np.diff(self.seg_start)

    def iter_lines(self):
        for i in range(self.n_lines):
            yield self.line_cells(i)


@lru_cache(maxsize=512)
def _family_cached(angle: float, height: int, width: int) -> LineFamily:
    major_is_col, step, slope = _axes(angle)
    if major_is_col:
        u_max, v_max = width, height
    else:
        u_max, v_max = height, width
    u = np.arange(u_max, dtype=np.int64)
    m = np.floor(slope * u + 0.5).astype(np.int64)
    scan_u = u[::-1] if step > 0 else u  # anti-beam sweep direction
    m_scan = m[scan_u]
    rho = np.arange(v_max, dtype=np.int64)[:, None]
    v = (rho + m_scan[None, :]) % v_max          # unit rho at major scan_u
    if major_is_col:
        flat = v * width + scan_u[None, :]
    else:
        flat = scan_u[None, :] * width + v
    phase = v - m_scan[None, :]
    brk = np.empty(phase.shape, dtype=bool)
    brk[:, 0] = True
    brk[:, 1:] = phase[:, 1:] != phase[:, :-1]
    starts = np.flatnonzero(brk.ravel()).astype(np.int64)
    seg_start = np.append(starts, v_max * u_max)
    seg_phase = phase.ravel()[starts]
    segs_per_unit = brk.sum(axis=1)
    unit_first_seg = np.concatenate(([0], np.cumsum(segs_per_unit))).astype(np.int64)
    return LineFamily(angle, (height, width), major_is_col, step, slope,
                      np.ascontiguousarray(flat.ravel(), dtype=np.int64),
                      seg_start, unit_first_seg, seg_phase)


def line_family(angle: float, bounds: tuple[int, int]) -> LineFamily:
    height, width = bounds
    return _family_cached(float(angle), int(height), int(width))


def line_families(angle: float, bounds: tuple[int, int],
                  resolution: float = 1.0) -> list[LineScan]:
    """All scan lines of one heading, each in scan order, covering the grid
    exactly once."""
    fam = line_family(angle, bounds)
    width = bounds[1]
    w = cell_width(angle, resolution)
    out = []
    for cells in fam.iter_lines():
        coords = [CellCoord(int(f) // width, int(f) % width) for f in cells]
        out.append(LineScan(fam.angle, coords, w))
    return out
