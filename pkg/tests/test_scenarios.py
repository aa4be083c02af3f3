import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pon200.core import ChannelPlan, ConfigError
from pon200.photonics import AmplifierSpec, SplitterSpec
from pon200.receiver import BER_FLOOR, PinSpec
from pon200.scenarios import (
    PAPER_BANDWIDTHS,
    FilterShape,
    Subarea,
    SweepRow,
    SystemConfig,
    allocate_wavelengths,
    back_to_back_ber,
    build_system_a,
    build_system_b,
    calibrate_receiver_sensitivity,
    compute_link_budget,
    resolve_gamma,
    run_downstream,
    sweep_bandwidth,
    sweep_distance,
)


def test_system_a_parameters():
    a = build_system_a()
    assert a.plan.wavelengths == (1550.0, 1551.6, 1553.2, 1554.8, 1556.4)
    assert a.plan.aggregate_capacity == 200e9
    assert np.allclose(np.diff(a.plan.wavelengths), 1.6)
    assert a.total_distance == 20.0
    assert a.feeder_length == 10.0 and a.drop_length == 10.0
    assert (a.mux.bandwidth, a.tx.average_power, a.tx.extinction_ratio, a.tx.linewidth) == (7.23, 13.0, 10.0, 10e6)
    assert (a.fiber.attenuation, a.fiber.dispersion_D, a.fiber.pmd_coefficient) == (0.2, 16.75, 0.5)
    assert (a.splitter.n_outputs, a.splitter.excess_loss, a.amplifier.gain) == (32, 2.0, 10.0)
    assert (a.pin.responsivity, a.pin.dark_current, a.pin.sensitivity_reference) == (1.0, 10e-9, -18.0)
    assert a.lpf.cutoff_ratio == 0.75


def test_system_b_parameters():
    b = build_system_b()
    assert b.plan.n_channels == 10
    assert b.plan.aggregate_capacity == 200e9
    assert b.plan.wavelengths[-2:] == (1562.8, 1564.4)
    assert b.plan.spacing == 1.6
    assert replace(b, plan=build_system_a().plan, variant="A") == build_system_a()


def test_capacity_conservation_enforced():
    with pytest.raises(ConfigError, match="variant A"):
        SystemConfig(plan=ChannelPlan((1550.0, 1551.6), 1.6, 40e9))
    with pytest.raises(ConfigError):
        SystemConfig(variant="B")
    with pytest.raises(ConfigError, match="feeder_length"):
        SystemConfig(feeder_length=30.0)


def test_link_budget_examples():
    b = compute_link_budget(build_system_a())
    assert b.received_power == pytest.approx(1.95, abs=0.005)
    assert b.margin == pytest.approx(19.95, abs=0.005)
    assert compute_link_budget(build_system_a(), 25.0).received_power == pytest.approx(0.95, abs=0.005)
    bare = replace(build_system_a(), splitter=SplitterSpec(1, 0.0), amplifier=AmplifierSpec(0.0, 4.0))
    assert compute_link_budget(bare, 0.0).received_power == 13.0


@given(d=st.floats(0, 100), n=st.sampled_from([1, 2, 4, 8, 16, 32, 64, 128]), g=st.floats(0, 30))
def test_link_budget_invariant(d, n, g):
    cfg = replace(build_system_a(), splitter=SplitterSpec(n, 2.0), amplifier=AmplifierSpec(g, 4.0))
    b = compute_link_budget(cfg, d)
    assert b.received_power == pytest.approx(b.tx_power - b.fiber_loss - b.splitter_loss + b.amplifier_gain)
    assert b.margin == pytest.approx(b.received_power - b.sensitivity)


@given(seed=st.integers(0, 2**31))
def test_seed_never_changes_budget_or_plan(seed):
    a = build_system_a()
    s = replace(a, seed=seed)
    assert compute_link_budget(s) == compute_link_budget(a)
    assert s.plan == a.plan


def test_calibration_hits_design_point():
    pin = calibrate_receiver_sensitivity(PinSpec(), 40e9)
    assert 1e-12 < pin.thermal_noise_density < 1e-10
    ber = back_to_back_ber(pin, 40e9, -18.0, seed=99)
    assert 10**-12.5 <= ber <= 10**-11.5
    assert back_to_back_ber(pin, 40e9, -15.0, seed=99) < 1e-12


def test_calibration_without_solution():
    with pytest.raises(ConfigError, match="brackets"):
        calibrate_receiver_sensitivity(PinSpec(sensitivity_reference=-60.0), 40e9)
    with pytest.raises(ConfigError, match="finite"):
        calibrate_receiver_sensitivity(PinSpec(sensitivity_reference=-math.inf), 40e9)


def test_zero_length_noiseless_link_is_error_free(small_a):
    cfg = replace(small_a, feeder_length=0.0, fiber=replace(small_a.fiber, length=0.0))
    reports = run_downstream(cfg, 0.0, noiseless=True)
    assert len(reports) == 5
    assert all(r.min_ber == BER_FLOOR for r in reports)


def test_run_downstream_is_deterministic(small_a):
    cfg = replace(small_a, feeder_length=2.0, fiber=replace(small_a.fiber, length=3.0))
    a = run_downstream(cfg, seed=5, gamma=0.0, active_channels=[0, 4])
    b = run_downstream(cfg, seed=5, gamma=0.0, active_channels=[0, 4])
    c = run_downstream(cfg, seed=6, gamma=0.0, active_channels=[0, 4])
    assert a == b
    assert [r.channel_wavelength for r in a] == [1550.0, 1556.4]
    assert a != c


def test_run_downstream_rejects_distance_inside_feeder(small_a):
    with pytest.raises(ConfigError, match="feeder"):
        run_downstream(small_a, 5.0)


def test_budget_and_simulation_agree_with_open_filters(small_a):
    wide = FilterShape(bandwidth=math.inf, order=1)
    cfg = replace(small_a, mux=wide, drop_filter=wide)
    distances = (10.0, 14.0, 18.0, 24.0)
    rows = sweep_distance(cfg, distances, ("off",), noiseless=True)
    for r in rows:
        want = compute_link_budget(cfg, r.distance_km).received_power
        assert r.rx_power_dbm == pytest.approx(want, abs=0.3)


def test_bandwidth_sweep_cardinality(small_a):
    cfg = replace(small_a, feeder_length=1.0, fiber=replace(small_a.fiber, length=1.0))
    rows = sweep_bandwidth(cfg, PAPER_BANDWIDTHS, 2, ("off",), noiseless=True)
    assert len(rows) == 4 * 5
    assert {r.filter_order for r in rows} == {2}
    assert sorted(rows, key=SweepRow.key) == rows


def test_distance_sweep_rows_match_single_runs(small_a):
    cfg = replace(small_a, feeder_length=1.0, fiber=replace(small_a.fiber, length=2.0))
    rows = sweep_distance(cfg, (1.0, 2.0), ("off",), seed=3, active_channels=[1])
    single = run_downstream(cfg, 2.0, seed=3, active_channels=[1], gamma=0.0)[0]
    row = next(r for r in rows if r.distance_km == 2.0)
    assert row.min_ber == single.min_ber
    assert row.rx_power_dbm == single.received_power


def test_resolve_gamma():
    a = build_system_a()
    assert resolve_gamma(a, "off") == 0.0
    assert resolve_gamma(a, "default") == 1.3
    assert resolve_gamma(a, "2.5") == 2.5
    with pytest.raises(ConfigError):
        resolve_gamma(a, "loud")


# -- allocation ---------------------------------------------------------------


def table(bers):
    return [SweepRow(ch, d, 7.23, 1, "default", 0.0, 0.0, ber) for (ch, d), ber in bers.items()]


def test_threshold_one_allocates_everything():
    rows = table({(c, d): 0.4 for c in (1550.0, 1551.6) for d in (10.0, 20.0)})
    res = allocate_wavelengths(rows, 1.0, [Subarea(0, 10.0, 32), Subarea(1, 20.0, 16)], 40e9)
    assert all(s.wavelengths == (1550.0, 1551.6) for s in res.subareas)
    assert res.universal == (1550.0, 1551.6)
    assert [s.per_user_rate for s in res.subareas] == [40e9 / 32, 40e9 / 16]


def test_universal_channel_and_unserved_subarea():
    rows = table(
        {(1550.0, 10.0): 1e-20, (1550.0, 20.0): 1e-13, (1551.6, 10.0): 1e-14, (1551.6, 20.0): 1e-3}
    )
    res = allocate_wavelengths(rows, 1e-12, [Subarea(0, 8.0, 32), Subarea(1, 19.0, 32)])
    assert res.universal == (1550.0,)
    assert res.subareas[0].wavelengths == (1550.0, 1551.6)
    assert res.subareas[0].table_distance == 10.0
    assert res.subareas[1].wavelengths == (1550.0,)
    res = allocate_wavelengths(rows, 1e-15, [Subarea(0, 20.0, 32)])
    assert res.unserved == (0,)
    assert res.subareas[0].wavelengths == ()


def test_allocation_requires_coverage():
    rows = table({(1550.0, 10.0): 1e-20})
    with pytest.raises(ValueError, match="stops at"):
        allocate_wavelengths(rows, 1e-12, [Subarea(0, 12.0, 32)])


ber_values = st.sampled_from([1e-40, 1e-20, 1e-13, 1e-12, 1e-11, 1e-5, 0.3])


@given(
    grid=st.dictionaries(
        st.tuples(st.sampled_from([1550.0, 1551.6]), st.sampled_from([10.0, 14.0, 20.0])),
        ber_values,
        min_size=6,
        max_size=6,
    ),
    threshold=st.sampled_from([1e-40, 1e-12, 1e-5, 1.0]),
    distances=st.lists(st.sampled_from([0.0, 10.0, 11.0, 14.0, 20.0]), min_size=1, max_size=4),
)
def test_allocation_matches_brute_force(grid, threshold, distances):
    subareas = [Subarea(k, d, 8) for k, d in enumerate(distances)]
    res = allocate_wavelengths(table(grid), threshold, subareas, 40e9)
    table_d = sorted({d for _, d in grid})
    for sa, got in zip(subareas, res.subareas):
        nearest = min(d for d in table_d if d >= sa.distance)
        want = tuple(sorted(ch for (ch, d), ber in grid.items() if d == nearest and ber <= threshold))
        assert got.wavelengths == want
        for ch in got.wavelengths:  # soundness by lookup
            assert grid[(ch, got.table_distance)] <= threshold
    universal = tuple(
        ch for ch in (1550.0, 1551.6) if all(grid[(ch, d)] <= threshold for d in table_d)
    )
    assert res.universal == universal
    assert res.unserved == tuple(s.index for s in res.subareas if not s.wavelengths)


def test_allocation_keeps_worst_duplicate():
    rows = table({(1550.0, 10.0): 1e-20}) + table({(1550.0, 10.0): 1e-3})
    res = allocate_wavelengths(rows, 1e-12, [Subarea(0, 10.0, 32)])
    assert res.subareas[0].wavelengths == ()
    assert list(itertools.chain(res.unserved)) == [0]
