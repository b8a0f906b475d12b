"""Cycle-level accelerator model: schedule, timing rules, reports."""

import itertools
from dataclasses import replace

import numpy as np
import pytest

from mimap.archsim import (
    ArchConfig,
    EnergyParams,
    PipelineSpec,
    bank_of,
    energy_of,
    lower_bound_latency,
    parse_config,
    report_csv,
    scaling_sweep,
    schedule,
    simulate,
)
from mimap.datapath import compute_mi_map_fxp
from mimap.grid import CellCoord, FcmiParams, OccupancyGrid, SensorConfig

PARAMS = FcmiParams()


def small_grid(rng, size=33):
    return OccupancyGrid(rng.integers(0, 101, size=(size, size), dtype=np.uint8), 0.1)


# ---------------------------------------------------------------- lower bound


def test_lower_bound_reference_values():
    lb = lower_bound_latency(201, 60, 16, 1e8)
    assert lb == 201 * 201 * 60 / (16 * 1e8)
    assert f"{lb * 1e3:.5f}" == "1.51504"
    assert lower_bound_latency(256, 60, 16, 1e8) == 2.4576e-3
    one = lower_bound_latency(128, 60, 1, 1e8)
    sixteen = lower_bound_latency(128, 60, 16, 1e8)
    assert one / sixteen == 16.0


# ---------------------------------------------------------------- banking


def test_bank_of_examples():
    assert bank_of(CellCoord(0, 0), 16) == 0
    assert bank_of(CellCoord(3, 5), 4) == 0
    assert bank_of(CellCoord(2, 5), 16) == 7


def test_bank_of_consecutive_cells_hit_distinct_banks():
    # diagonal layout: any 16 consecutive cells along a row or column
    for r in range(64):
        for c0 in range(0, 48, 7):
            banks = {bank_of(CellCoord(r, c0 + k), 16) for k in range(16)}
            assert len(banks) == 16
    for c in range(64):
        for r0 in range(0, 48, 7):
            banks = {bank_of(CellCoord(r0 + k, c), 16) for k in range(16)}
            assert len(banks) == 16


# ---------------------------------------------------------------- pipeline/energy


def test_pipeline_spec_sections():
    pipe = PipelineSpec()
    assert pipe.total_stages == 19
    assert pipe.preprocess == (1, 10)
    assert pipe.feedback == (11, 18)
    assert pipe.postprocess == (19, 19)
    assert pipe.feedback_depth == 8
    with pytest.raises(ValueError):
        PipelineSpec(preprocess=(1, 9), feedback=(11, 18))  # gap at stage 10


def test_energy_params_validation():
    with pytest.raises(ValueError):
        EnergyParams(e_core_cycle=-1.0)


def test_energy_of_closed_form():
    zero = EnergyParams(0.0, 0.0, 0.0, 0.0)
    assert energy_of(10 ** 9, 10 ** 6, 10 ** 7, 1.0, zero) == 0.0
    static = EnergyParams(0.0, 0.0, 0.0, 1.0)
    assert energy_of(0, 0, 0, 1e-3, static) == 1e-3
    p = EnergyParams(2.0, 3.0, 5.0, 7.0)
    assert energy_of(1, 1, 1, 1.0, p) == 2.0 + 3.0 + 5.0 + 7.0


# ---------------------------------------------------------------- schedule


def test_schedule_axis_family_is_balanced():
    for wrapping in (True, False):
        cfg = replace(ArchConfig(), wrapping=wrapping)
        per_core = schedule((32, 32), SensorConfig(1), cfg)
        units = [u for q in per_core for u in q]
        assert len(units) == 32
        assert all(u.total_cells == 32 for u in units)
        totals = [sum(u.total_cells for u in q) for q in per_core]
        assert max(totals) == min(totals) == 64


def test_schedule_covers_every_cell_once_per_heading():
    cfg = ArchConfig()
    sensor = SensorConfig(8)
    per_core = schedule((17, 17), sensor, cfg)
    for angle in sensor.angles:
        seen = np.zeros(17 * 17, dtype=int)
        for q in per_core:
            for u in q:
                if u.angle == angle:
                    for seg in u.segments:
                        seen[seg] += 1
        assert seen.min() == 1 and seen.max() == 1


def test_schedule_wrapped_oblique_units_equalize():
    cfg = ArchConfig()
    sensor = SensorConfig(8)
    oblique = sensor.angles[1]  # the 45 degree diagonal family
    per_core = schedule((33, 33), sensor, cfg)
    totals = []
    for q in per_core:
        cells = sum(u.total_cells for u in q if u.angle == oblique)
        totals.append(cells)
    units = [u for q in per_core for u in q if u.angle == oblique]
    assert all(u.total_cells == 33 for u in units)  # every chain is whole
    assert max(totals) - min(totals) <= 33  # at most one unit apart


def test_schedule_unwrapped_oblique_is_imbalanced():
    cfg = replace(ArchConfig(), wrapping=False)
    sensor = SensorConfig(8)
    oblique = sensor.angles[1]
    per_core = schedule((33, 33), sensor, cfg)
    totals = [sum(u.total_cells for u in q if u.angle == oblique) for q in per_core]
    assert max(totals) / min(totals) > 1.0  # corner chords are short


# ---------------------------------------------------------------- simulate


def test_simulate_rejects_oversized_grid(rng):
    cfg = replace(ArchConfig(), max_map=16)
    with pytest.raises(ValueError):
        simulate(small_grid(rng, 17), SensorConfig(4), PARAMS, cfg)


def test_work_conservation_and_bound(rng):
    grid = small_grid(rng)
    for cfg in (
        ArchConfig(),
        replace(ArchConfig(), wrapping=False),
        replace(ArchConfig(), interleaving=False),
        replace(ArchConfig(), banking=False, n_banks=1),
        replace(ArchConfig(), n_cores=4, n_banks=4),
    ):
        _, rep = simulate(grid, SensorConfig(60), PARAMS, cfg, compute_values=False)
        assert rep.busy_cycles() == 33 * 33 * 60
        assert rep.latency_s >= rep.lower_bound_s
        assert rep.total_cycles == round(rep.latency_s * cfg.clock_hz)


def test_mi_map_identical_across_timing_features(rng):
    # timing features change cycles, never values
    grid = small_grid(rng, 21)
    sensor = SensorConfig(8)
    want = compute_mi_map_fxp(grid, sensor, PARAMS)
    for banking, interleaving, wrapping in itertools.product((True, False), repeat=3):
        cfg = replace(ArchConfig(), banking=banking, interleaving=interleaving,
                      wrapping=wrapping)
        mi, _ = simulate(grid, sensor, PARAMS, cfg)
        np.testing.assert_array_equal(mi.raw, want.raw)
        np.testing.assert_array_equal(mi.values, want.values)


def test_single_requester_never_conflicts(rng):
    _, rep = simulate(small_grid(rng), SensorConfig(60), PARAMS,
                      replace(ArchConfig(), n_cores=1, n_banks=1),
                      compute_values=False)
    assert rep.stall_cycles["bank_conflict"] == 0


def test_same_heading_streaming_is_conflict_free(rng):
    # B = n = 16, one angle family: the diagonal layout keeps concurrent
    # accesses on distinct banks
    for size in (16, 32, 33):
        _, rep = simulate(small_grid(rng, size), SensorConfig(1), PARAMS,
                          ArchConfig(), compute_values=False)
        assert rep.stall_cycles["bank_conflict"] == 0


def test_interleave_depth_sensitivity(rng):
    grid = small_grid(rng)
    _, deep = simulate(grid, SensorConfig(60), PARAMS, ArchConfig(),
                       compute_values=False)
    _, shallow = simulate(grid, SensorConfig(60), PARAMS,
                          replace(ArchConfig(), interleaving=False),
                          compute_values=False)
    cells = 33 * 33 * 60
    # D=1 pays the full feedback spacing: 7 blocked cycles per steady cell
    assert 6.5 * cells <= shallow.stall_cycles["feedback_wait"] <= 7.0 * cells
    # D=8 hides nearly all of it (residue comes from heading-tail windows)
    assert deep.stall_cycles["feedback_wait"] * 50 < shallow.stall_cycles["feedback_wait"]
    assert shallow.total_cycles > 4 * deep.total_cycles


def test_simulate_is_deterministic(rng):
    grid = small_grid(rng)
    _, a = simulate(grid, SensorConfig(60), PARAMS, ArchConfig(), compute_values=False)
    _, b = simulate(grid, SensorConfig(60), PARAMS, ArchConfig(), compute_values=False)
    assert a.total_cycles == b.total_cycles
    assert a.stall_cycles == b.stall_cycles
    assert a.per_core_busy == b.per_core_busy
    assert a.energy_j == b.energy_j
    assert report_csv(a) == report_csv(b)


def test_jit_and_interpreter_agree(rng):
    pytest.importorskip("numba")
    grid = small_grid(rng, 17)
    _, jit = simulate(grid, SensorConfig(8), PARAMS, ArchConfig(),
                      compute_values=False, use_jit=True)
    _, plain = simulate(grid, SensorConfig(8), PARAMS, ArchConfig(),
                        compute_values=False, use_jit=False)
    assert jit.total_cycles == plain.total_cycles
    assert jit.stall_cycles == plain.stall_cycles
    np.testing.assert_array_equal(jit.memory_accesses["occ_reads"],
                                  plain.memory_accesses["occ_reads"])


# ---------------------------------------------------------------- sweep/report


def test_scaling_sweep_structure(rng):
    grid = small_grid(rng)
    rows = scaling_sweep(grid, SensorConfig(60), PARAMS, [1, 2, 4, 8, 16])
    assert [n for n, _, _ in rows] == [1, 2, 4, 8, 16]
    lats = [lat for _, lat, _ in rows]
    assert all(a > b for a, b in zip(lats, lats[1:]))  # more cores, faster
    for n, lat, energy in rows:
        assert lat >= lower_bound_latency(33, 60, n, 1e8)
        assert energy > 0.0


def test_report_csv_fields(rng):
    _, rep = simulate(small_grid(rng, 17), SensorConfig(8), PARAMS, ArchConfig(),
                      compute_values=False)
    lines = report_csv(rep).strip().splitlines()
    assert lines[0] == "metric,value"
    metrics = dict(line.split(",") for line in lines[1:])
    expected = {"total_cycles", "latency_s", "lower_bound_s",
                "stall.bank_conflict", "stall.feedback_wait", "stall.drain",
                "energy_j"} | {f"busy.core{i}" for i in range(16)}
    assert set(metrics) == expected
    assert int(metrics["total_cycles"]) == rep.total_cycles
    assert float(metrics["energy_j"]) == pytest.approx(rep.energy_j, rel=1e-8)


# ---------------------------------------------------------------- config file


def test_parse_config_full(tmp_path):
    p = tmp_path / "arch.cfg"
    p.write_text(
        "# accelerator model\n"
        "cores = 8\n"
        "banks = 8\n"
        "clock_hz = 2e8\n"
        "interleave_depth = 8\n"
        "max_map = 256\n"
        "features.banking = on\n"
        "features.interleaving = off\n"
        "features.wrapping = true\n"
        "energy.e_static_per_s = 0.25\n"
    )
    cfg = parse_config(p)
    assert cfg.n_cores == 8
    assert cfg.n_banks == 8
    assert cfg.clock_hz == 2e8
    assert cfg.max_map == 256
    assert cfg.banking and cfg.wrapping and not cfg.interleaving
    assert cfg.energy.e_static_per_s == 0.25
    assert cfg.energy.e_core_cycle == EnergyParams().e_core_cycle  # default kept


def test_parse_config_errors(tmp_path):
    bad_key = tmp_path / "bad.cfg"
    bad_key.write_text("cores = 8\nwat = 1\n")
    with pytest.raises(ValueError, match=r"bad\.cfg:2"):
        parse_config(bad_key)
    bad_bool = tmp_path / "bool.cfg"
    bad_bool.write_text("features.banking = maybe\n")
    with pytest.raises(ValueError, match="boolean"):
        parse_config(bad_bool)
    no_eq = tmp_path / "noeq.cfg"
    no_eq.write_text("cores 8\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_config(no_eq)
