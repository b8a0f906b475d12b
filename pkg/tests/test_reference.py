"""Floating-point MI reference: recursion steps, entropies, map sweeps."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from mimap.grid import (
    CellCoord,
    FcmiParams,
    LineScan,
    MIMap,
    OccupancyGrid,
    SensorConfig,
)
from mimap.reference import (
    ZERO_STATE,
    CellParams,
    ExpectationState,
    compute_mi_map,
    entropy_pair,
    gamma_lower,
    map_entropy,
    scan_line,
    step_expectations,
)

CAP = FcmiParams()  # lambda cap 1e7
LN_CAP = CAP.log_lambda_cap
DTH60 = 2.0 * math.pi / 60.0


# ---------------------------------------------------------------- gammas


def test_gamma_endpoints():
    assert gamma_lower(1, 0.0) == 0.0
    assert gamma_lower(2, 0.0) == 0.0
    assert gamma_lower(3, 0.0) == 0.0
    # complete-gamma limits: (s-1)!
    assert gamma_lower(1, 50.0) == pytest.approx(1.0, rel=1e-15)
    assert gamma_lower(2, 50.0) == pytest.approx(1.0, rel=1e-15)
    assert gamma_lower(3, 50.0) == pytest.approx(2.0, rel=1e-15)


def test_gamma_closed_forms_match_quadrature():
    assert gamma_lower(1, 1.0) == pytest.approx(0.632120559, abs=1e-9)
    assert gamma_lower(2, 1.0) == pytest.approx(0.264241118, abs=1e-9)
    for s in (1, 2, 3):
        for x in (0.01, 0.5, 1.0, 3.0, 7.5, 20.0):
            assert gamma_lower(s, x) == pytest.approx(
                oracles.quad_gamma_lower(s, x), rel=1e-12, abs=1e-13
            )


def test_gamma_domain_errors():
    with pytest.raises(ValueError):
        gamma_lower(4, 1.0)
    with pytest.raises(ValueError):
        gamma_lower(1, -0.5)


@given(st.integers(1, 3), st.floats(0.0, 30.0), st.floats(0.0, 30.0))
def test_gamma_monotone_in_x(s, x, y):
    lo, hi = sorted((x, y))
    assert gamma_lower(s, lo) <= gamma_lower(s, hi) + 1e-15


# ---------------------------------------------------------------- recursion


def test_step_free_cell_closed_form():
    prev = ExpectationState(0.25, 0.5, -1.5, 2.0)
    cell = CellParams.from_probability(0.0, 0.7)
    out = step_expectations(prev, cell)
    assert out == ExpectationState(0.25 + 0.7 * -1.5, 0.5 + 0.7 * 2.0, -1.5, 2.0)


def test_step_free_limit_is_continuous():
    # lambda -> 0+: outputs converge on the o=0 closed form
    prev = ExpectationState(0.25, 0.5, -1.5, 2.0)
    free = np.array(step_expectations(prev, CellParams.from_probability(0.0, 0.7)))

    def gap(o):
        out = step_expectations(prev, CellParams.from_probability(o, 0.7))
        return float(np.abs(np.array(out) - free).max())

    tiny = -math.expm1(-1e-9)  # lambda = 1e-9 exactly
    assert gap(tiny) < 1e-7
    assert gap(tiny) < gap(0.0001) < gap(0.001) < 0.05


def test_step_occupied_cell_erases_history():
    for prev in (ZERO_STATE, ExpectationState(9.0, 9.0, 9.0, 9.0)):
        out = step_expectations(prev, CellParams.from_probability(1.0, 1.0), CAP)
        assert out.a1 == pytest.approx((2.0 - LN_CAP) / 1e7, rel=1e-12)
        assert out.a1 == pytest.approx(-1.4118e-6, abs=1e-10)
        assert out.b1 == 1e-7
        assert out.a0 == pytest.approx(1.0 - LN_CAP, rel=1e-12)
        assert out.a0 == pytest.approx(-15.1181, abs=1e-4)
        assert out.b0 == 1.0


def test_step_half_occupied_from_zero():
    out = step_expectations(ZERO_STATE, CellParams.from_probability(0.5, 1.0))
    lam = math.log(2.0)
    assert out.b0 == pytest.approx(gamma_lower(1, lam), rel=1e-15)
    assert out.b0 == pytest.approx(0.5, rel=1e-12)
    assert out.b1 == pytest.approx(gamma_lower(2, lam) / lam, rel=1e-14)
    mp_out = oracles.mp_step((0, 0, 0, 0), oracles.mpmath.mpf(1) / 2, 1)
    for got, want in zip(out, mp_out):
        assert got == pytest.approx(float(want), rel=1e-13)


def test_step_matches_mp_oracle_along_random_chains(rng):
    for _ in range(5):
        levels = rng.integers(0, 101, size=12)
        w = float(rng.uniform(0.05, 1.5))
        state = ZERO_STATE
        mp_state = (0, 0, 0, 0)
        for lv in levels:
            state = step_expectations(
                state, CellParams.from_level(int(lv), w, CAP), CAP
            )
            mp_state = oracles.mp_step(mp_state, oracles.mpmath.mpf(int(lv)) / 100, w)
            for got, want in zip(state, mp_state):
                assert got == pytest.approx(float(want), rel=1e-11, abs=1e-18)


@given(
    st.lists(st.integers(0, 100), min_size=1, max_size=30),
    st.floats(0.01, 2.0),
)
def test_beta_terms_stay_nonnegative(levels, width):
    state = ZERO_STATE
    for lv in levels:
        state = step_expectations(state, CellParams.from_level(lv, width, CAP), CAP)
        assert state.b0 >= 0.0
        assert state.b1 >= 0.0
        assert all(math.isfinite(v) for v in state)


def test_cell_params_validation():
    with pytest.raises(ValueError):
        CellParams.from_probability(1.5, 1.0)
    cell = CellParams.from_probability(0.3, 0.25)
    assert cell.lam == pytest.approx(-math.log1p(-0.3), rel=1e-15)
    assert cell.lam_m == cell.lam  # below the cap
    assert CellParams.from_probability(1.0, 1.0).lam_m == CAP.lambda_cap


# ---------------------------------------------------------------- entropies


def test_entropy_pair_zero_state():
    assert entropy_pair(ZERO_STATE, SensorConfig(60), CAP) == (0.0, 0.0)


def test_entropy_pair_conditional_term():
    state = ExpectationState(0.0, 1e-7, 0.0, 0.0)
    h, h_cond = entropy_pair(state, SensorConfig(60), CAP)
    assert h == 0.0
    assert h_cond == pytest.approx((1.0 - LN_CAP) * 1e-7 * DTH60, rel=1e-15)
    assert h_cond == pytest.approx(-1.5832e-7, abs=1e-11)


def test_occupied_cell_mi_is_dtheta_over_cap():
    state = step_expectations(ZERO_STATE, CellParams.from_probability(1.0, 1.0), CAP)
    h, h_cond = entropy_pair(state, SensorConfig(60), CAP)
    assert h - h_cond == pytest.approx(DTH60 / 1e7, rel=1e-12)
    assert h - h_cond == pytest.approx(1.0472e-8, abs=1e-12)


# ---------------------------------------------------------------- line sweeps


def _line(cells, angle=0.0, resolution=1.0):
    from mimap.grid import cell_width

    return LineScan(angle, [CellCoord(*c) for c in cells], cell_width(angle, resolution))


def test_scan_line_all_free_stays_zero():
    grid = OccupancyGrid(np.zeros((1, 8), dtype=np.uint8))
    mi = MIMap(np.zeros((1, 8)))
    scan_line(_line([(0, c) for c in range(8)]), grid, SensorConfig(60), CAP, mi)
    np.testing.assert_array_equal(mi.values, 0.0)


def test_scan_line_single_occupied_cell():
    grid = OccupancyGrid(np.array([[100]], dtype=np.uint8))
    mi = MIMap(np.zeros((1, 1)))
    scan_line(_line([(0, 0)]), grid, SensorConfig(60), CAP, mi)
    assert mi.values[0, 0] == pytest.approx(DTH60 / 1e7, rel=1e-12)


def test_scan_line_three_cells_match_unrolled_oracle():
    grid = OccupancyGrid(np.full((1, 3), 50, dtype=np.uint8), resolution=0.1)
    mi = MIMap(np.zeros((1, 3)))
    scan_line(_line([(0, 2), (0, 1), (0, 0)], resolution=0.1), grid,
              SensorConfig(60), CAP, mi)
    mp_state = (0, 0, 0, 0)
    w = oracles.mpmath.mpf(1) / 10
    half = oracles.mpmath.mpf(1) / 2
    for col in (2, 1, 0):
        mp_state = oracles.mp_step(mp_state, half, w)
        a1, b1 = mp_state[0], mp_state[1]
        want = float((a1 - (1 - oracles.mpmath.log(1e7)) * b1) * DTH60)
        assert mi.values[0, col] == pytest.approx(want, rel=1e-12)


def test_scan_order_locality():
    # contributions already emitted must not depend on cells folded later
    rng = np.random.default_rng(7)
    levels = rng.integers(0, 101, size=(1, 10), dtype=np.uint8)
    cells = [(0, c) for c in range(9, -1, -1)]  # scan order, beam points +x

    def sweep(lv):
        mi = MIMap(np.zeros((1, 10)))
        scan_line(_line(cells), OccupancyGrid(lv), SensorConfig(60), CAP, mi)
        return mi.values[0]

    base = sweep(levels)
    mutated = levels.copy()
    mutated[0, 4] = 100 - mutated[0, 4]
    changed = sweep(mutated)
    np.testing.assert_array_equal(changed[5:], base[5:])  # beyond the mutation
    assert np.any(changed[:5] != base[:5])


# ---------------------------------------------------------------- map sweeps


def test_map_all_free_is_zero():
    mi = compute_mi_map(OccupancyGrid(np.zeros((6, 6), dtype=np.uint8)))
    np.testing.assert_array_equal(mi.values, 0.0)


def test_map_matches_brute_force_oracle(rng):
    levels = rng.integers(0, 101, size=(5, 5), dtype=np.uint8)
    grid = OccupancyGrid(levels, resolution=0.25)
    for rays in (4, 8, 60):
        got = compute_mi_map(grid, SensorConfig(rays), CAP).values
        want = oracles.brute_force_mi_map(levels, rays, 0.25)
        scale = np.abs(want).max()
        assert np.abs(got - want).max() <= 1e-9 * scale


def test_map_rotation_symmetry_axis_rays():
    # constant grid, axis-aligned headings: families rotate exactly
    mi = compute_mi_map(OccupancyGrid.uniform((9, 9), level=35), SensorConfig(4))
    np.testing.assert_allclose(mi.values, np.rot90(mi.values), rtol=0, atol=1e-12)


def test_map_rotation_symmetry_dense_rays():
    # with oblique headings the symmetry is only approximate: cos(t + pi/2)
    # and -sin(t) round differently, so a few midpoint ties flip and single
    # cells hop between adjacent discrete lines near the boundary
    mi = compute_mi_map(OccupancyGrid.uniform((9, 9), level=35), SensorConfig(60))
    gap = np.abs(mi.values - np.rot90(mi.values)).max()
    assert gap <= 0.025 * np.abs(mi.values).max()


def test_map_cap_scaling_on_occupied_cell():
    grid = OccupancyGrid(np.array([[100]], dtype=np.uint8))
    lo = compute_mi_map(grid, SensorConfig(60), FcmiParams(1e7)).values[0, 0]
    hi = compute_mi_map(grid, SensorConfig(60), FcmiParams(1e8)).values[0, 0]
    assert lo == pytest.approx(2.0 * math.pi / 1e7, rel=1e-12)
    assert lo / hi == pytest.approx(10.0, rel=1e-12)


def test_map_is_deterministic(make_grid):
    grid = make_grid(12, 9)
    a = compute_mi_map(grid, SensorConfig(8)).values
    b = compute_mi_map(grid, SensorConfig(8)).values
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------- map entropy


def test_map_entropy_values():
    assert map_entropy(OccupancyGrid.uniform((10, 10))) == pytest.approx(
        100.0 * math.log(2.0), rel=1e-14
    )
    known = OccupancyGrid(np.array([[0, 100], [100, 0]], dtype=np.uint8))
    assert map_entropy(known) == 0.0
    one = OccupancyGrid(np.array([[25]], dtype=np.uint8))
    assert map_entropy(one) == pytest.approx(0.562335, abs=1e-6)
