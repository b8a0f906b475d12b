"""Fixed-point datapath model: occupancy LUTs, the piecewise-linear
exponential, and the Q20.12 realization of the expectation recursion.

The dataflow mirrors the hardware split:

  preprocess  - per cell: LUT fetch (lam, -log lam, 1/lam), x = lam*w, the
                PWL exponential E = pwl(-x), the three gamma values, and
                the four additive constants C1..C4
  feedback    - the recursive update of (a1, b1, a0, b0)
  postprocess - MI contribution (a1 - (1 - log cap)*b1) * dtheta and the
                read-modify-write into the MI accumulator

Preprocess outputs depend only on (occupancy level, heading), so the map
engine computes them once per level per heading with the scalar ops and
streams the feedback/postprocess over whole line families; every array op
carries the exact scalar rounding semantics, keeping the vector path
bit-identical to chaining ``step_expectations_fxp`` cell by cell.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import fixedpoint as fx
from .grid import FcmiParams, MIMap, OccupancyGrid, SensorConfig, cell_width, line_family
from .reference import _padded_lines

try:
    import numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

PWL_SEGMENTS = 16
PWL_LO = -8.0
PWL_LO_RAW = fx.encode(PWL_LO)            # -32768
PWL_SEG_RAW = (-PWL_LO_RAW) // PWL_SEGMENTS  # 2048 raw units per segment

# plain-int copies for the compiled sweep (closure-captured constants)
FRAC_BITS = fx.FRAC_BITS
FRAC_MASK = fx.SCALE - 1
HALF_ULP = fx.HALF_ULP
RAW_MIN = fx.RAW_MIN
RAW_MAX = fx.RAW_MAX


class OccLutEntry(NamedTuple):
    lam: int
    neg_log_lam: int
    inv_lam: int
    degenerate: str | None


@dataclass(frozen=True, eq=False)
class PwlExpTable:
    """16 uniform segments fitting exp(x) on [-8, 0].

    ``m``/``c`` are the exact continuous least-squares coefficients,
    ``m_raw``/``c_raw`` their Q20.12 roundings used by the datapath.
    """

    m: np.ndarray
    c: np.ndarray
    m_raw: np.ndarray
    c_raw: np.ndarray


@dataclass(frozen=True)
class FxpConstants:
    """Cap-derived datapath constants, encoded once in double precision."""

    k1: int          # 1 - log(cap), the conditional-entropy weight
    occ_a1: int      # (2 - log(cap)) / cap
    occ_b1: int      # 1 / cap
    occ_a0: int      # 1 - log(cap)
    occ_b0: int      # 1

    @classmethod
    def from_params(cls, params: FcmiParams) -> "FxpConstants":
        cap = params.lambda_cap
        ln_cap = params.log_lambda_cap
        k1 = fx.encode(1.0 - ln_cap)
        return cls(k1=k1,
                   occ_a1=fx.encode((2.0 - ln_cap) / cap),
                   occ_b1=fx.encode(1.0 / cap),
                   occ_a0=k1,
                   occ_b0=fx.ONE_RAW)


def build_occ_lut(params: FcmiParams = FcmiParams()) -> list[OccLutEntry]:
    """101 entries of (lam, -log lam, 1/lam); levels 0 and 100 are flagged
    degenerate and their stored words are never read by the step function."""
    entries = [OccLutEntry(0, 0, 0, "free")]
    for level in range(1, 100):
        lam = -math.log1p(-level / 100.0)
        entries.append(OccLutEntry(fx.encode(lam), fx.encode(-math.log(lam)),
                                   fx.encode(1.0 / lam), None))
    entries.append(OccLutEntry(0, 0, 0, "occupied"))
    return entries


def build_pwl_exp() -> PwlExpTable:
    """Continuous least-squares line fit of exp(x) per uniform segment.

    Minimizing the integral of (exp(x) - m*x - c)^2 over [a, b] gives the
    normal equations

        m*I_xx + c*I_x = J_x      I_xx = (b^3 - a^3)/3   J_x = x exp x - exp x |
        m*I_x  + c*L   = J        I_x  = (b^2 - a^2)/2   J   = exp b - exp a

    solved in closed form with the exact antiderivatives of exp and x exp.

    The raw words are quantization-aware: the slope is rounded first, then
    the intercept is refit to the rounded slope (c + (m - m_q)*(a+b)/2,
    the least-squares intercept given that slope) before its own rounding.
    Rounding both independently would let the slope's half-ulp error be
    amplified by |x| up to 8 at the left edge; the refit cancels all but
    the residual tilt across one segment, keeping the evaluated error
    within 2 ulp of the unrounded fit everywhere.
    """
    width = (0.0 - PWL_LO) / PWL_SEGMENTS
    m = np.empty(PWL_SEGMENTS)
    c = np.empty(PWL_SEGMENTS)
    m_raw = np.empty(PWL_SEGMENTS, dtype=np.int64)
    c_raw = np.empty(PWL_SEGMENTS, dtype=np.int64)
    for k in range(PWL_SEGMENTS):
        a = PWL_LO + k * width
        b = a + width
        ea, eb = math.exp(a), math.exp(b)
        big_j = eb - ea
        big_jx = (b - 1.0) * eb - (a - 1.0) * ea
        i_xx = (b ** 3 - a ** 3) / 3.0
        i_x = (b * b - a * a) / 2.0
        det = i_xx * width - i_x * i_x
        m[k] = (big_jx * width - big_j * i_x) / det
        c[k] = (big_j * i_xx - big_jx * i_x) / det
        m_raw[k] = fx.encode(m[k])
        c_raw[k] = fx.encode(c[k] + (m[k] - m_raw[k] / fx.SCALE) * (a + b) / 2.0)
    return PwlExpTable(m, c, m_raw, c_raw)


def pwl_segment(x_raw: int) -> int:
    """Covering segment index for a clamped raw input in [-32768, 0]."""
    idx = (x_raw - PWL_LO_RAW) // PWL_SEG_RAW
    return PWL_SEGMENTS - 1 if idx >= PWL_SEGMENTS else int(idx)


def pwl_exp(x_raw: int, table: PwlExpTable) -> int:
    """Datapath exponential: clamp to [-8, 0], then m*x + c in fixed point."""
    xc = min(max(x_raw, PWL_LO_RAW), 0)
    k = pwl_segment(xc)
    return fx.add_raw(fx.mul_raw(int(table.m_raw[k]), xc), int(table.c_raw[k]))


class _CellRow(NamedTuple):
    """Preprocess outputs for one (level, heading): feedback multipliers
    E and x plus the additive constants."""

    e: int
    x: int
    c1: int
    c2: int
    c3: int
    c4: int


def _preprocess(entry: OccLutEntry, w_raw: int, table: PwlExpTable,
                consts: FxpConstants) -> _CellRow:
    if entry.degenerate == "free":
        # E=1, x=0, zero constants turn the update into the pass-through
        # (a1 + w*a0, b1 + w*b0, a0, b0) exactly
        return _CellRow(fx.ONE_RAW, 0, 0, 0, 0, 0)
    if entry.degenerate == "occupied":
        # E=0 erases the previous state; constants carry the o=1 limits
        return _CellRow(0, 0, consts.occ_a1, consts.occ_b1,
                        consts.occ_a0, consts.occ_b0)
    x = fx.mul_raw(entry.lam, w_raw)
    e = pwl_exp(fx.neg_raw(x), table)
    g1 = fx.sub_raw(fx.ONE_RAW, e)
    g2 = fx.sub_raw(fx.ONE_RAW, fx.mul_raw(e, fx.add_raw(fx.ONE_RAW, x)))
    xx = fx.mul_raw(x, x)
    poly = fx.add_raw(xx, fx.add_raw(fx.add_raw(x, x), fx.TWO_RAW))
    g3 = fx.sub_raw(fx.TWO_RAW, fx.mul_raw(e, poly))
    c1 = fx.mul_raw(entry.inv_lam, fx.add_raw(g3, fx.mul_raw(g2, entry.neg_log_lam)))
    c2 = fx.mul_raw(entry.inv_lam, g2)
    c3 = fx.add_raw(g2, fx.mul_raw(g1, entry.neg_log_lam))
    c4 = g1
    return _CellRow(e, x, c1, c2, c3, c4)


def _feedback(prev: tuple[int, int, int, int], row: _CellRow,
              w_raw: int) -> tuple[int, int, int, int]:
    pa1, pb1, pa0, pb0 = prev
    t_a1 = fx.add_raw(pa1, fx.mul_raw(row.x, pb1))
    t_a0 = fx.add_raw(pa0, fx.mul_raw(row.x, pb0))
    t_b1 = fx.add_raw(pb1, fx.mul_raw(w_raw, pb0))
    na1 = fx.add_raw(fx.mul_raw(row.e, fx.add_raw(t_a1, fx.mul_raw(w_raw, t_a0))), row.c1)
    nb1 = fx.add_raw(fx.mul_raw(row.e, t_b1), row.c2)
    na0 = fx.add_raw(fx.mul_raw(row.e, t_a0), row.c3)
    nb0 = fx.add_raw(fx.mul_raw(row.e, pb0), row.c4)
    return na1, nb1, na0, nb0


@lru_cache(maxsize=8)
def _tables_cached(lambda_cap: float):
    params = FcmiParams(lambda_cap)
    return build_occ_lut(params), build_pwl_exp(), FxpConstants.from_params(params)


def step_expectations_fxp(prev: tuple[int, int, int, int], level: int,
                          w_raw: int,
                          params: FcmiParams = FcmiParams()) -> tuple[int, int, int, int]:
    """One recursion step on raw Q20.12 words; bit-deterministic."""
    if not 0 <= level <= 100:
        raise ValueError(f"occupancy level {level} outside 0..100")
    lut, table, consts = _tables_cached(params.lambda_cap)
    row = _preprocess(lut[level], w_raw, table, consts)
    return _feedback(prev, row, w_raw)


def _level_rows(w_raw: int, params: FcmiParams) -> np.ndarray:
    """(101, 6) int64 matrix of _CellRow fields for one heading."""
    lut, table, consts = _tables_cached(params.lambda_cap)
    rows = np.empty((101, 6), dtype=np.int64)
    for level in range(101):
        rows[level] = _preprocess(lut[level], w_raw, table, consts)
    return rows


def _sweep_family(levels_flat, mi_flat, idx, active, rows, w_arr, k1, dth_raw):
    """Scalar twin of the vector family sweep; numba-compiled when available.

    Same rounding and saturation semantics as the ``arr_*`` primitives,
    applied cell by cell; returns the number of saturation events.
    """
    frac_bits = FRAC_BITS
    frac_mask = FRAC_MASK
    half = HALF_ULP
    rmax = RAW_MAX
    rmin = RAW_MIN
    sat = np.zeros(1, dtype=np.int64)

    def smul(a, b):
        p = a * b
        q = p >> frac_bits
        r = p & frac_mask
        if r > half or (r == half and (q & 1) == 1):
            q += 1
        if q > rmax:
            sat[0] += 1
            return rmax
        if q < rmin:
            sat[0] += 1
            return rmin
        return q

    def sadd(a, b):
        q = a + b
        if q > rmax:
            sat[0] += 1
            return rmax
        if q < rmin:
            sat[0] += 1
            return rmin
        return q

    n_lines = idx.shape[1]
    a1 = np.zeros(n_lines, dtype=np.int64)
    b1 = np.zeros(n_lines, dtype=np.int64)
    a0 = np.zeros(n_lines, dtype=np.int64)
    b0 = np.zeros(n_lines, dtype=np.int64)
    for t in range(idx.shape[0]):
        for j in range(active[t]):
            ix = idx[t, j]
            lvl = levels_flat[ix]
            e = rows[lvl, 0]
            x = rows[lvl, 1]
            t_a1 = sadd(a1[j], smul(x, b1[j]))
            t_a0 = sadd(a0[j], smul(x, b0[j]))
            t_b1 = sadd(b1[j], smul(w_arr, b0[j]))
            na1 = sadd(smul(e, sadd(t_a1, smul(w_arr, t_a0))), rows[lvl, 2])
            nb1 = sadd(smul(e, t_b1), rows[lvl, 3])
            na0 = sadd(smul(e, t_a0), rows[lvl, 4])
            nb0 = sadd(smul(e, b0[j]), rows[lvl, 5])
            a1[j] = na1
            b1[j] = nb1
            a0[j] = na0
            b0[j] = nb0
            contrib = smul(sadd(na1, -smul(k1, nb1)), dth_raw)
            mi_flat[ix] = sadd(mi_flat[ix], contrib)
    return sat[0]


_sweep_jit = None


def _get_sweep(use_jit: bool):
    global _sweep_jit
    if not use_jit:
        return _sweep_family
    if not _HAVE_NUMBA:
        raise RuntimeError("numba is not installed; pass use_jit=False")
    if _sweep_jit is None:
        _sweep_jit = numba.njit(cache=True)(_sweep_family)
    return _sweep_jit


def compute_mi_map_fxp(grid: OccupancyGrid, sensor: SensorConfig = SensorConfig(),
                       params: FcmiParams = FcmiParams(),
                       use_jit: bool | None = None) -> MIMap:
    """Map-wide MI on the fixed-point datapath; accumulator also Q20.12.

    Sweeps the same line families as the reference engine, with every
    arithmetic op replaced by the saturating fixed-point primitives.  The
    returned map carries both the raw accumulator words and their decoded
    float values.  ``use_jit`` None picks the compiled sweep when numba is
    present; False forces the vectorized numpy sweep (bit-identical).
    """
    height, width = grid.shape
    levels_flat = grid.levels.reshape(-1).astype(np.int64)
    mi_flat = np.zeros(height * width, dtype=np.int64)
    _, _, consts = _tables_cached(params.lambda_cap)
    k1 = np.int64(consts.k1)
    dth_raw = np.int64(fx.encode(sensor.delta_theta))
    jit = _HAVE_NUMBA if use_jit is None else bool(use_jit)
    sweep = _get_sweep(True) if jit else None
    for angle in sensor.angles:
        fam = line_family(float(angle), (height, width))
        w_raw = fx.encode(cell_width(float(angle), grid.resolution))
        rows = _level_rows(w_raw, params)
        w_arr = np.int64(w_raw)
        idx, active = _padded_lines(fam)
        if sweep is not None:
            fx._tally_saturation(sweep(levels_flat, mi_flat, idx, active,
                                       rows, w_arr, k1, dth_raw))
            continue
        n_lines = idx.shape[1]
        a1 = np.zeros(n_lines, dtype=np.int64)
        b1 = np.zeros(n_lines, dtype=np.int64)
        a0 = np.zeros(n_lines, dtype=np.int64)
        b0 = np.zeros(n_lines, dtype=np.int64)
        for t in range(idx.shape[0]):
            na = int(active[t])
            ix = idx[t, :na]
            rr = rows[levels_flat[ix]]
            e, x, c1, c2, c3, c4 = (rr[:, 0], rr[:, 1], rr[:, 2],
                                    rr[:, 3], rr[:, 4], rr[:, 5])
            pa1, pb1, pa0, pb0 = a1[:na], b1[:na], a0[:na], b0[:na]
            t_a1 = fx.arr_add(pa1, fx.arr_mul(x, pb1))
            t_a0 = fx.arr_add(pa0, fx.arr_mul(x, pb0))
            t_b1 = fx.arr_add(pb1, fx.arr_mul(w_arr, pb0))
            na1 = fx.arr_add(fx.arr_mul(e, fx.arr_add(t_a1, fx.arr_mul(w_arr, t_a0))), c1)
            nb1 = fx.arr_add(fx.arr_mul(e, t_b1), c2)
            na0 = fx.arr_add(fx.arr_mul(e, t_a0), c3)
            nb0 = fx.arr_add(fx.arr_mul(e, pb0), c4)
            a1[:na], b1[:na], a0[:na], b0[:na] = na1, nb1, na0, nb0
            contrib = fx.arr_mul(fx.arr_sub(na1, fx.arr_mul(k1, nb1)), dth_raw)
            mi_flat[ix] = fx.arr_add(mi_flat[ix], contrib)
    raw = mi_flat.reshape(height, width).astype(np.int32)
    return MIMap(raw.astype(np.float64) / fx.SCALE, grid.resolution, raw=raw)


def dump_tables(params: FcmiParams = FcmiParams()) -> str:
    """Golden-file text dump: LUT entries then PWL segments, raw words."""
    lut, table, _ = _tables_cached(params.lambda_cap)
    lines = [f"{i} {e.lam} {e.neg_log_lam} {e.inv_lam}" for i, e in enumerate(lut)]
    lines += [f"{k} {int(table.m_raw[k])} {int(table.c_raw[k])}"
              for k in range(PWL_SEGMENTS)]
    return "\n".join(lines) + "\n"
