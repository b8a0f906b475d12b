"""Cycle-level model of the multi-core MI accelerator.

Sixteen pipelined cores stream the scan lines of every heading, one cell
issue per core per cycle at best.  Timing obeys five micro-rules:

  1. a core issues at most one new cell per cycle, picked by scanning its
     ray slots round-robin from a rotating pointer and passing over slots
     whose banks are already claimed this cycle;
  2. a cell occupies one pipeline stage per cycle (19 stages total);
  3. consecutive cells of the same ray slot must issue at least 8 cycles
     apart (the feedback section, stages 11-18, carries the recursion
     state), so with 8 interleaved slots the dependency is fully hidden
     and with a single slot every cell pays the full spacing;
  4. per cycle each occupancy bank serves at most 2 reads, and each MI
     bank retires one accumulate (its single read and write port pair);
     accumulates queue in a small per-bank FIFO, and a core stalls when
     its cell's occupancy ports are exhausted or the FIFO is full, with
     cores arbitrated in ascending index order;
  5. cell (r, c) lives in bank (r + c) mod B in both memories, which makes
     any B consecutive cells along a row or column bank-distinct.

Work arrives as wrap units: with wrapping on, the scan lines of one
heading whose phases are congruent modulo the minor extent chain into one
equal-length unit, and units are dispatched in a stride-staggered order
so that units in flight at the same time sit on well-spread bank
diagonals; with wrapping off every line is its own unit and lines go out
in plain phase order.  Units are dealt round-robin to cores by a cursor
that persists across headings.

Each core keeps a window of live ray contexts (two per interleave slot)
that refill from its queue as units finish.  A context only accepts rays
of the heading the core is currently scanning, so headings change over
cleanly; with equal-length wrap units the service slack built up during
a heading exactly covers its drain and the changeover costs nothing,
while unequal bare lines leave the window starved and congested, which
is where the wrapping ablation's latency goes.  The one exception to the
heading gate is a starved tail: when fewer live rays remain than the
feedback spacing and none is ready, the core admits one next-heading ray
per idle beat instead of pacing out the stragglers.  When the scanner
passes over a contended ray it resumes there the next cycle rather than
a full rotation later, so one conflict costs one slip, not a pile-up.

Timing never changes values: the returned MI map comes from the
fixed-point map engine, which the interleaving order cannot perturb
because the Q20.12 accumulator never saturates on in-range workloads.
"""

from dataclasses import dataclass, field, replace
from math import gcd

import numpy as np

from .datapath import compute_mi_map_fxp
from .grid import CellCoord, FcmiParams, MIMap, OccupancyGrid, SensorConfig, line_family

try:
    import numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

CONTEXTS_PER_SLOT = 2  # live ray contexts per pipeline slot
MI_QUEUE_DEPTH = 64    # per-bank accumulate FIFO entries


@dataclass(frozen=True)
class PipelineSpec:
    total_stages: int = 19
    preprocess: tuple[int, int] = (1, 10)
    feedback: tuple[int, int] = (11, 18)
    postprocess: tuple[int, int] = (19, 19)

    def __post_init__(self):
        pre, fb, post = self.preprocess, self.feedback, self.postprocess
        if pre[0] != 1 or post[1] != self.total_stages:
            raise ValueError("pipeline sections must cover stages 1..total")
        if pre[1] + 1 != fb[0] or fb[1] + 1 != post[0]:
            raise ValueError("pipeline sections must be contiguous")

    @property
    def feedback_depth(self) -> int:
        return self.feedback[1] - self.feedback[0] + 1


@dataclass(frozen=True)
class EnergyParams:
    """Per-event energy constants.

    Defaults are calibrated, not measured: the stall cycle costs a quarter
    of an active cycle, static power is sized at 10% of the reference
    201x201/60-ray/16-core run, and the remaining 90% splits 70/30 between
    core cycles and memory accesses, scaled so that run totals 1.7e-3 J.
    """

    e_core_cycle: float = 4.4068397774278455e-10
    e_stall_cycle: float = 1.1017099443569614e-10
    e_mem_access: float = 6.311724957303037e-11
    e_static_per_s: float = 0.1110486915851221

    def __post_init__(self):
        for name in ("e_core_cycle", "e_stall_cycle", "e_mem_access", "e_static_per_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class ArchConfig:
    n_cores: int = 16
    clock_hz: float = 1e8
    n_banks: int | None = None          # None -> n_cores
    interleave_depth: int = 8
    banking: bool = True
    interleaving: bool = True
    wrapping: bool = True
    max_map: int = 512
    pipeline: PipelineSpec = field(default_factory=PipelineSpec)
    energy: EnergyParams = field(default_factory=EnergyParams)

    def __post_init__(self):
        if self.n_cores < 1 or self.interleave_depth < 1:
            raise ValueError("cores and interleave_depth must be >= 1")
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be positive")

    @property
    def eff_banks(self) -> int:
        if not self.banking:
            return 1
        return self.n_cores if self.n_banks is None else self.n_banks

    @property
    def eff_depth(self) -> int:
        return self.interleave_depth if self.interleaving else 1


@dataclass
class WorkUnit:
    """One slot's worth of chained scan-line segments."""

    angle: float
    segments: list[np.ndarray]

    @property
    def total_cells(self) -> int:
        return sum(len(s) for s in self.segments)


@dataclass
class SimReport:
    total_cycles: int
    latency_s: float
    lower_bound_s: float
    stall_cycles: dict[str, int]
    per_core_busy: list[float]
    energy_j: float
    memory_accesses: dict[str, np.ndarray]

    def busy_cycles(self) -> int:
        return int(round(sum(self.per_core_busy) * self.total_cycles))


def lower_bound_latency(height: int, ray_count: int, n_cores: int,
                        clock_hz: float) -> float:
    """One cell-visit per core per cycle with unlimited memory bandwidth."""
    if min(height, ray_count, n_cores) < 1 or clock_hz <= 0:
        raise ValueError("all arguments must be positive")
    return height * height * ray_count / (n_cores * clock_hz)


def bank_of(coord: CellCoord, n_banks: int) -> int:
    """Diagonal banking: B consecutive cells along any row or column land
    in B distinct banks."""
    if n_banks < 1:
        raise ValueError("bank count must be >= 1")
    return (coord[0] + coord[1]) % n_banks


def _stagger_stride(m: int, n_cores: int, n_banks: int) -> int:
    """Dispatch stride over a family's units, chosen near the golden
    fraction of the orbit count so that (a) any n_banks consecutive
    dispatches sit on distinct bank diagonals and (b) the units a single
    core holds in flight (every n_cores-th dispatch) do too."""
    if m <= 2:
        return 1
    target = max(1, round(0.382 * m))

    def spread(step: int) -> bool:
        return n_banks <= 1 or gcd(step % n_banks, n_banks) == 1

    best = 1
    for strict in (True, False):
        for d in range(m):
            for cand in (target - d, target + d):
                if not (1 <= cand < m and gcd(cand, m) == 1):
                    continue
                if not spread(cand):
                    continue
                if strict and not spread((n_cores * cand) % m):
                    continue
                return cand
    return best


def _unit_ranges(fam, config: ArchConfig) -> list[tuple[int, int]]:
    """Per-angle unit list as (first_seg, last_seg) pairs in dispatch order."""
    if config.wrapping:
        ufs = fam.unit_first_seg
        m = fam.n_units
        k = _stagger_stride(m, config.n_cores, config.eff_banks)
        return [(int(ufs[(j * k) % m]), int(ufs[(j * k) % m + 1])) for j in range(m)]
    order = np.argsort(fam.seg_phase, kind="stable")
    return [(int(s), int(s) + 1) for s in order]


def _deal(total_units: int, n_cores: int) -> list[list[int]]:
    """Deal unit ids round-robin to cores; the cursor persists across
    headings so per-core totals stay balanced."""
    queues: list[list[int]] = [[] for _ in range(n_cores)]
    for uid in range(total_units):
        queues[uid % n_cores].append(uid)
    return queues


def schedule(bounds: tuple[int, int], sensor: SensorConfig,
             config: ArchConfig) -> list[list[WorkUnit]]:
    """Per-core ordered work-unit lists covering every cell of every
    heading exactly once."""
    fams = [line_family(float(a), bounds) for a in sensor.angles]
    ranges = [_unit_ranges(f, config) for f in fams]
    local: list[tuple[int, int, int]] = []  # unit_id -> (angle, lo, hi)
    for a, rs in enumerate(ranges):
        for lo, hi in rs:
            local.append((a, lo, hi))
    queues = _deal(len(local), config.n_cores)
    per_core: list[list[WorkUnit]] = []
    for q in queues:
        units = []
        for uid in q:
            a, lo, hi = local[uid]
            segs = [fams[a].line_cells(s) for s in range(lo, hi)]
            units.append(WorkUnit(float(sensor.angles[a]), segs))
        per_core.append(units)
    return per_core


def _flat_schedule(bounds: tuple[int, int], sensor: SensorConfig, config: ArchConfig):
    """Kernel-ready arrays: per-cell bank stream, segment bounds, per-unit
    segment ranges, and the per-core dealt unit queues."""
    height, width = bounds
    n = config.n_cores
    n_banks = config.eff_banks
    bank_parts = []
    seg_parts = [np.zeros(1, dtype=np.int64)]
    unit_lo_parts, unit_hi_parts, unit_ang_parts = [], [], []
    cell_base = 0
    seg_base = 0
    total_units = 0
    for ai, angle in enumerate(sensor.angles):
        fam = line_family(float(angle), bounds)
        cells = fam.cells
        bank_parts.append((((cells // width) + (cells % width)) % n_banks).astype(np.int16))
        seg_parts.append(fam.seg_start[1:] + cell_base)
        ranges = _unit_ranges(fam, config)
        lo = np.array([r[0] for r in ranges], dtype=np.int64) + seg_base
        hi = np.array([r[1] for r in ranges], dtype=np.int64) + seg_base
        unit_lo_parts.append(lo)
        unit_hi_parts.append(hi)
        unit_ang_parts.append(np.full(len(ranges), ai, dtype=np.int64))
        total_units += len(ranges)
        cell_base += len(cells)
        seg_base += fam.n_lines
    bank_seq = np.concatenate(bank_parts)
    seg_start = np.concatenate(seg_parts)
    unit_lo = np.concatenate(unit_lo_parts)
    unit_hi = np.concatenate(unit_hi_parts)
    unit_ang = np.concatenate(unit_ang_parts)
    queues = _deal(total_units, n)
    core_units = np.array([uid for q in queues for uid in q], dtype=np.int64)
    core_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum([len(q) for q in queues], out=core_ptr[1:])
    return (bank_seq, seg_start, unit_lo, unit_hi, unit_ang,
            core_units, core_ptr, cell_base)


def _sim_kernel(n_cores, window, n_banks, gap, chain_pen, mi_cap,
                bank_seq, seg_start, unit_lo, unit_hi, unit_ang,
                core_units, core_ptr,
                busy, occ_reads, mi_reads, mi_writes, stalls, max_cycles):
    """Cycle loop over all cores and ray contexts; fills the count arrays
    and returns (last_issue_cycle, mi_backlog, status)."""
    slot_pos = np.full((n_cores, window), -1, dtype=np.int64)
    slot_end = np.zeros((n_cores, window), dtype=np.int64)
    slot_seg = np.zeros((n_cores, window), dtype=np.int64)
    slot_unit = np.zeros((n_cores, window), dtype=np.int64)
    slot_ready = np.zeros((n_cores, window), dtype=np.int64)
    rot = np.zeros(n_cores, dtype=np.int64)
    nxt = core_ptr[:-1].copy()
    occ_cnt = np.zeros(n_banks, dtype=np.int64)
    mi_q = np.zeros(n_banks, dtype=np.int64)
    last_issue = np.int64(-1)
    t = np.int64(0)
    while True:
        all_done = True
        for i in range(n_cores):
            if nxt[i] < core_ptr[i + 1]:
                all_done = False
                break
            for d in range(window):
                if slot_pos[i, d] >= 0:
                    all_done = False
                    break
            if not all_done:
                break
        if all_done:
            break
        for b in range(n_banks):
            occ_cnt[b] = 0
        for i in range(n_cores):
            qhi = core_ptr[i + 1]
            # refill free contexts from the core's queue; a context only
            # accepts rays of the heading the core is currently scanning,
            # so a new heading starts once the previous one fully drains
            if nxt[i] < qhi:
                heading = np.int64(-1)
                for d in range(window):
                    if slot_pos[i, d] >= 0:
                        heading = unit_ang[slot_unit[i, d]]
                        break
                for d in range(window):
                    if nxt[i] >= qhi or slot_pos[i, d] >= 0:
                        continue
                    u = core_units[nxt[i]]
                    if heading >= 0 and unit_ang[u] != heading:
                        # starvation trickle: when the tail of a heading
                        # leaves fewer live rays than the feedback gap and
                        # none is ready this cycle, admit one ray of the
                        # next heading instead of idling the beat
                        live = 0
                        ready = 0
                        for d2 in range(window):
                            if slot_pos[i, d2] >= 0:
                                live += 1
                                if slot_ready[i, d2] <= t:
                                    ready += 1
                        if ready > 0 or live >= gap or live == 0:
                            break
                        nxt[i] += 1
                        slot_unit[i, d] = u
                        slot_seg[i, d] = unit_lo[u]
                        slot_pos[i, d] = seg_start[unit_lo[u]]
                        slot_end[i, d] = seg_start[unit_lo[u] + 1]
                        slot_ready[i, d] = t
                        break
                    nxt[i] += 1
                    slot_unit[i, d] = u
                    slot_seg[i, d] = unit_lo[u]
                    slot_pos[i, d] = seg_start[unit_lo[u]]
                    slot_end[i, d] = seg_start[unit_lo[u] + 1]
                    slot_ready[i, d] = t
                    if heading < 0:
                        heading = unit_ang[u]
            # candidate: first ready context in rotation order whose banks
            # are still free this cycle; the bank-busy bitmap is broadcast,
            # so a core passes over contended rays and issues another
            cand = np.int64(-1)
            first_blocked = np.int64(-1)
            occupied_any = False
            ready_any = False
            for d in range(window):
                s = (rot[i] + d) % window
                if slot_pos[i, s] < 0:
                    continue
                occupied_any = True
                if slot_ready[i, s] > t:
                    continue
                ready_any = True
                b = bank_seq[slot_pos[i, s]]
                if occ_cnt[b] >= 2 or mi_q[b] >= mi_cap:
                    if first_blocked < 0:
                        first_blocked = s
                    continue
                cand = s
                break
            if cand < 0:
                if ready_any:
                    stalls[0] += 1
                elif occupied_any:
                    stalls[1] += 1
                else:
                    # core drained; it idles while the rest of the run ends
                    stalls[2] += 1
                continue
            s = cand
            b = bank_seq[slot_pos[i, s]]
            occ_cnt[b] += 1
            mi_q[b] += 1
            occ_reads[b] += 1
            mi_reads[b] += 1
            mi_writes[b] += 1
            busy[i] += 1
            last_issue = t
            pen = gap
            pos = slot_pos[i, s] + 1
            if pos >= slot_end[i, s]:
                sg = slot_seg[i, s] + 1
                if sg < unit_hi[slot_unit[i, s]]:
                    slot_seg[i, s] = sg
                    slot_pos[i, s] = seg_start[sg]
                    slot_end[i, s] = seg_start[sg + 1]
                    pen = gap + chain_pen
                else:
                    slot_pos[i, s] = -1
            else:
                slot_pos[i, s] = pos
            slot_ready[i, s] = t + pen
            # resume the scan at the skipped slot if there was one: the
            # passed-over ray keeps its place at the head of the rotation
            # instead of waiting out a whole round
            if first_blocked >= 0:
                rot[i] = first_blocked
            else:
                rot[i] = (s + 1) % window
        for b in range(n_banks):
            if mi_q[b] > 0:
                mi_q[b] -= 1
        t += 1
        if t > max_cycles:
            return last_issue, np.int64(0), np.int64(1)
    backlog = np.int64(0)
    for b in range(n_banks):
        if mi_q[b] > backlog:
            backlog = mi_q[b]
    return last_issue, backlog, np.int64(0)


_kernel_jit = None


def _get_kernel(use_jit: bool):
    global _kernel_jit
    if use_jit and _HAVE_NUMBA:
        if _kernel_jit is None:
            _kernel_jit = numba.njit(cache=True)(_sim_kernel)
        return _kernel_jit
    return _sim_kernel


def energy_of(busy_cycles: int, stall_cycles: int, mem_accesses: int,
              latency_s: float, params: EnergyParams) -> float:
    return (params.e_core_cycle * busy_cycles
            + params.e_stall_cycle * stall_cycles
            + params.e_mem_access * mem_accesses
            + params.e_static_per_s * latency_s)


def simulate(grid: OccupancyGrid, sensor: SensorConfig = SensorConfig(),
             params: FcmiParams = FcmiParams(), config: ArchConfig = ArchConfig(),
             compute_values: bool = True,
             use_jit: bool | None = None) -> tuple[MIMap | None, SimReport]:
    """Run the cycle model; returns the fixed-point MI map and the report.

    ``compute_values=False`` skips the map (latency studies); timing is
    identical either way because values never influence the cycle loop.
    """
    height, width = grid.shape
    if max(height, width) > config.max_map:
        raise ValueError(
            f"grid {height}x{width} exceeds configured capacity {config.max_map}")
    pipe = config.pipeline
    n = config.n_cores
    n_banks = config.eff_banks
    depth = config.eff_depth
    window = CONTEXTS_PER_SLOT * depth if depth > 1 else 1
    chain_pen = pipe.feedback_depth if depth == 1 else 0
    (bank_seq, seg_start, unit_lo, unit_hi, unit_ang,
     core_units, core_ptr, total_cells) = _flat_schedule((height, width), sensor, config)
    busy = np.zeros(n, dtype=np.int64)
    occ_reads = np.zeros(n_banks, dtype=np.int64)
    mi_reads = np.zeros(n_banks, dtype=np.int64)
    mi_writes = np.zeros(n_banks, dtype=np.int64)
    stalls = np.zeros(3, dtype=np.int64)
    max_cycles = 16 * total_cells + 1_000_000
    kernel = _get_kernel(True if use_jit is None else use_jit)
    last_issue, backlog, status = kernel(
        n, window, n_banks, pipe.feedback_depth, chain_pen,
        MI_QUEUE_DEPTH, bank_seq, seg_start, unit_lo, unit_hi, unit_ang,
        core_units, core_ptr, busy, occ_reads, mi_reads, mi_writes, stalls,
        max_cycles)
    if status != 0:
        raise RuntimeError("simulation exceeded the cycle safety cap")
    total_cycles = int(last_issue) + pipe.total_stages + 1 + int(backlog)
    latency_s = total_cycles / config.clock_hz
    stall_cycles = {"bank_conflict": int(stalls[0]),
                    "feedback_wait": int(stalls[1]),
                    "drain": int(stalls[2])}
    accesses = int(occ_reads.sum() + mi_reads.sum() + mi_writes.sum())
    energy = energy_of(int(busy.sum()), sum(stall_cycles.values()), accesses,
                       latency_s, config.energy)
    report = SimReport(
        total_cycles=total_cycles,
        latency_s=latency_s,
        lower_bound_s=height * width * sensor.ray_count / (n * config.clock_hz),
        stall_cycles=stall_cycles,
        per_core_busy=[b / total_cycles for b in busy.tolist()],
        energy_j=energy,
        memory_accesses={"occ_reads": occ_reads, "mi_reads": mi_reads,
                         "mi_writes": mi_writes},
    )
    mi = compute_mi_map_fxp(grid, sensor, params) if compute_values else None
    return mi, report


def scaling_sweep(grid: OccupancyGrid, sensor: SensorConfig, params: FcmiParams,
                  n_list: list[int], config: ArchConfig = ArchConfig(),
                  use_jit: bool | None = None) -> list[tuple[int, float, float]]:
    """Latency and energy per core count, with banks matched to cores."""
    rows = []
    for n in n_list:
        cfg = replace(config, n_cores=n, n_banks=n)
        _, rep = simulate(grid, sensor, params, cfg,
                          compute_values=False, use_jit=use_jit)
        rows.append((n, rep.latency_s, rep.energy_j))
    return rows


def report_csv(report: SimReport) -> str:
    lines = ["metric,value",
             f"total_cycles,{report.total_cycles}",
             f"latency_s,{report.latency_s:.9e}",
             f"lower_bound_s,{report.lower_bound_s:.9e}",
             f"stall.bank_conflict,{report.stall_cycles['bank_conflict']}",
             f"stall.feedback_wait,{report.stall_cycles['feedback_wait']}",
             f"stall.drain,{report.stall_cycles['drain']}"]
    lines += [f"busy.core{i},{frac:.9f}"
              for i, frac in enumerate(report.per_core_busy)]
    lines.append(f"energy_j,{report.energy_j:.9e}")
    return "\n".join(lines) + "\n"


_TRUE = {"true", "1", "on", "yes"}
_FALSE = {"false", "0", "off", "no"}


def parse_config(path) -> ArchConfig:
    """Line-based ``key = value`` config; '#' starts a comment."""
    scalars: dict = {}
    energy: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw_line in enumerate(fh, start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            try:
                if key == "cores":
                    scalars["n_cores"] = int(val)
                elif key == "banks":
                    scalars["n_banks"] = int(val)
                elif key == "clock_hz":
                    scalars["clock_hz"] = float(val)
                elif key == "interleave_depth":
                    scalars["interleave_depth"] = int(val)
                elif key == "max_map":
                    scalars["max_map"] = int(val)
                elif key.startswith("features."):
                    flag = key.split(".", 1)[1]
                    if flag not in ("banking", "interleaving", "wrapping"):
                        raise ValueError(f"unknown feature {flag!r}")
                    low = val.lower()
                    if low not in _TRUE | _FALSE:
                        raise ValueError(f"not a boolean: {val!r}")
                    scalars[flag] = low in _TRUE
                elif key.startswith("energy."):
                    name = key.split(".", 1)[1]
                    if name not in ("e_core_cycle", "e_stall_cycle",
                                    "e_mem_access", "e_static_per_s"):
                        raise ValueError(f"unknown energy constant {name!r}")
                    energy[name] = float(val)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
    if energy:
        scalars["energy"] = EnergyParams(**{**EnergyParams().__dict__, **energy})
    return ArchConfig(**scalars)
