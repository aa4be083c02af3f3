"""
End-to-end 200G PON downstream scenarios.

System A multiplexes five 40 Gb/s transceivers, System B ten 20 Gb/s ones, on a
1.6 nm grid starting at 1550 nm. A run goes

    modulate -> mux -> feeder fiber -> 1:N splitter -> drop fiber
             -> ONT drop filter -> pre-amplifier -> PIN -> LPF -> min BER

and the sweeps reuse the feeder output wherever only the drop section changes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy.optimize import bisect

from .core import (
    BitStream,
    ChannelPlan,
    ConfigError,
    OpticalField,
    SimulationGrid,
    TransmitterSpec,
    _require,
    channel_offset,
    channel_slot_hz,
    generate_prbs,
    make_grid,
    modulate_nrz_ook,
)
from .fiber import FiberSpec, StepConfig, propagate, sample_pmd
from .photonics import (
    AmplifierSpec,
    BesselFilterSpec,
    MuxSpec,
    SplitterSpec,
    amplify,
    bessel_response,
    split,
    wdm_mux,
)
from .receiver import (
    BerReport,
    ElectricalFilterSpec,
    PinSpec,
    detect,
    electrical_lpf,
    estimate_min_ber,
    power_spectrum,
)
from .units import bandwidth_nm_to_hz, wavelength_to_frequency, watt_to_dbm

log = logging.getLogger(__name__)

AGGREGATE_CAPACITY = 200e9
SYSTEM_A_WAVELENGTHS = (1550.0, 1551.6, 1553.2, 1554.8, 1556.4)
SYSTEM_B_WAVELENGTHS = tuple(round(1550.0 + 1.6 * k, 1) for k in range(10))
PAPER_BANDWIDTHS = (1.8, 3.62, 7.23, 10.0)
DEFAULT_DISTANCES = tuple(float(d) for d in range(10, 25, 2))

# independent random streams per run
_PRBS, _PHASE, _PMD_FEEDER, _PMD_DROP, _ASE, _DETECT = range(1, 7)


def _seed(seed, *keys):
    return np.random.SeedSequence([int(seed), *keys])


@dataclass(frozen=True)
class FilterShape:
    """Bessel filter shape shared by every port of a WDM block."""

    bandwidth: float = 7.23  # nm
    order: int = 1
    insertion_loss: float = 0.0
    stopband_floor: float = -10.0

    def __post_init__(self):
        BesselFilterSpec(self.order, 1550.0, self.bandwidth, self.insertion_loss, self.stopband_floor)

    def at(self, center_wavelength):
        return BesselFilterSpec(
            self.order, float(center_wavelength), self.bandwidth, self.insertion_loss, self.stopband_floor
        )


@dataclass(frozen=True)
class SimulationSettings:
    samples_per_bit: int = 16
    n_bits: int = 4096
    prbs_order: Optional[int] = None  # None: log2(n_bits), one period per run
    step: StepConfig = field(default_factory=StepConfig)
    max_samples: int = 2**22

    def __post_init__(self):
        _require(
            self.prbs_order is None or 7 <= self.prbs_order <= 31,
            "SimulationSettings.prbs_order",
            "must be in [7, 31] or null",
        )

    @property
    def effective_prbs_order(self):
        if self.prbs_order is not None:
            return int(self.prbs_order)
        return min(31, max(7, int(self.n_bits).bit_length() - 1))


@dataclass(frozen=True)
class SystemConfig:
    """One 200G PON architecture with every component parameter.

    ``fiber.length`` is the total OLT-ONT distance; the drop section is what is
    left after ``feeder_length``.
    """

    variant: str = "A"
    plan: ChannelPlan = field(
        default_factory=lambda: ChannelPlan(SYSTEM_A_WAVELENGTHS, 1.6, 40e9, "downstream")
    )
    tx: TransmitterSpec = field(default_factory=TransmitterSpec)
    mux: FilterShape = field(default_factory=FilterShape)
    drop_filter: FilterShape = field(
        default_factory=lambda: FilterShape(bandwidth=0.8, order=2, stopband_floor=-40.0)
    )
    feeder_length: float = 10.0
    fiber: FiberSpec = field(default_factory=FiberSpec)
    splitter: SplitterSpec = field(default_factory=SplitterSpec)
    amplifier: AmplifierSpec = field(default_factory=AmplifierSpec)
    amplifier_position: str = "before_pin"
    pin: PinSpec = field(default_factory=PinSpec)
    lpf: ElectricalFilterSpec = field(default_factory=ElectricalFilterSpec)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    seed: int = 1

    def __post_init__(self):
        _require(self.variant in ("A", "B"), "SystemConfig.variant", "must be 'A' or 'B'")
        expected = {"A": (5, 40e9), "B": (10, 20e9)}[self.variant]
        _require(
            (self.plan.n_channels, self.plan.per_channel_bit_rate) == expected,
            "SystemConfig.plan",
            f"variant {self.variant} needs {expected[0]} x {expected[1] / 1e9:g} Gb/s",
        )
        _require(
            math.isclose(self.plan.aggregate_capacity, AGGREGATE_CAPACITY),
            "SystemConfig.plan",
            "must carry 200 Gb/s in aggregate",
        )
        _require(self.feeder_length >= 0, "SystemConfig.feeder_length", "must be >= 0")
        _require(
            self.feeder_length <= self.fiber.length,
            "SystemConfig.feeder_length",
            "must not exceed the total distance FiberSpec.length",
        )
        _require(
            self.amplifier_position in ("before_pin", "before_drop_filter"),
            "SystemConfig.amplifier_position",
            "must be 'before_pin' or 'before_drop_filter'",
        )
        _require(
            self.lpf.cutoff_ratio < self.simulation.samples_per_bit / 2,
            "ElectricalFilterSpec.cutoff_ratio",
            "must be below samples_per_bit / 2",
        )

    @property
    def bit_rate(self):
        return self.plan.per_channel_bit_rate

    @property
    def total_distance(self):
        return self.fiber.length

    @property
    def drop_length(self):
        return self.fiber.length - self.feeder_length

    def mux_spec(self):
        m = self.mux
        return MuxSpec.uniform(self.plan.wavelengths, m.bandwidth, m.order, m.insertion_loss, m.stopband_floor)

    def grid(self):
        drop_bw = float(bandwidth_nm_to_hz(self.drop_filter.bandwidth, np.mean(self.plan.wavelengths)))
        guard = drop_bw if math.isfinite(drop_bw) else 2 * self.bit_rate
        s = self.simulation
        return make_grid(self.plan, s.samples_per_bit, s.n_bits, guard, s.max_samples)

    def with_gamma(self, gamma):
        return replace(self, fiber=replace(self.fiber, nonlinear_gamma=float(gamma)))


def build_system_a():
    """Five 40 Gb/s channels at 1550-1556.4 nm."""
    return SystemConfig()


def build_system_b():
    """Ten 20 Gb/s channels at 1550 + 1.6k nm, k = 0..9."""
    return SystemConfig(
        variant="B", plan=ChannelPlan(SYSTEM_B_WAVELENGTHS, 1.6, 20e9, "downstream")
    )


def build_system(variant):
    return {"A": build_system_a, "B": build_system_b}[variant]()


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float
    fiber_loss: float
    splitter_loss: float
    amplifier_gain: float
    received_power: float
    sensitivity: float
    margin: float
    distance: float = 20.0
    direction: str = "downstream"


def compute_link_budget(config, total_distance=None, direction="downstream"):
    """Closed-form power budget; upstream uses the same (symmetric) losses."""
    d = config.total_distance if total_distance is None else float(total_distance)
    fiber_loss = config.fiber.attenuation * d
    rx = config.tx.average_power - fiber_loss - config.splitter.loss_db + config.amplifier.gain
    return LinkBudget(
        tx_power=config.tx.average_power,
        fiber_loss=fiber_loss,
        splitter_loss=config.splitter.loss_db,
        amplifier_gain=config.amplifier.gain,
        received_power=rx,
        sensitivity=config.pin.sensitivity_reference,
        margin=rx - config.pin.sensitivity_reference,
        distance=d,
        direction=direction,
    )


# -- receiver calibration -----------------------------------------------------


def back_to_back_ber(
    pin,
    bit_rate,
    average_power,
    extinction_ratio=10.0,
    lpf=ElectricalFilterSpec(),
    samples_per_bit=16,
    n_bits=4096,
    seed=2012,
):
    """Min BER of an unamplified NRZ signal straight into the PIN."""
    grid = SimulationGrid(
        samples_per_bit * bit_rate, samples_per_bit * n_bits, float(wavelength_to_frequency(1550.0))
    )
    bits = generate_prbs(15, 1 + int(seed) % 32767, n_bits, bit_rate)
    tx = TransmitterSpec(average_power, extinction_ratio, 0.0, 1550.0)
    opt = modulate_nrz_ook(bits, tx, grid, phase_noise=False)
    i = detect(opt, pin, rng_seed=_seed(seed, _DETECT))
    i = electrical_lpf(i, lpf, bit_rate, grid)
    return estimate_min_ber(i, bits, grid).min_ber


@lru_cache(maxsize=64)
def calibrate_receiver_sensitivity(
    pin,
    bit_rate,
    extinction_ratio=10.0,
    lpf=ElectricalFilterSpec(),
    target_ber=1e-12,
    samples_per_bit=16,
    n_bits=4096,
    seed=2012,
    bracket=(1e-15, 1e-8),
):
    """Solve for the thermal noise density that puts min BER at ``target_ber``
    with ``pin.sensitivity_reference`` dBm of average back-to-back power.
    """
    if bit_rate <= 0:
        raise ConfigError("calibrate_receiver_sensitivity: bit_rate must be > 0")
    if not math.isfinite(pin.sensitivity_reference):
        raise ConfigError("PinSpec.sensitivity_reference must be finite to calibrate")

    def excess(log_density):
        p = replace(pin, thermal_noise_density=10.0**log_density)
        ber = back_to_back_ber(
            p, bit_rate, pin.sensitivity_reference, extinction_ratio, lpf, samples_per_bit, n_bits, seed
        )
        return math.log10(ber) - math.log10(target_ber)

    lo, hi = (math.log10(b) for b in bracket)
    f_lo, f_hi = excess(lo), excess(hi)
    if not (f_lo < 0 < f_hi):
        raise ConfigError(
            "calibrate_receiver_sensitivity: no thermal density in "
            f"[{bracket[0]:g}, {bracket[1]:g}] A/sqrt(Hz) brackets BER {target_ber:g} "
            f"at {pin.sensitivity_reference} dBm"
        )
    root = bisect(excess, lo, hi, xtol=1e-4)
    density = 10.0**root
    log.info("calibrated thermal noise density %.4g A/sqrt(Hz) at %g b/s", density, bit_rate)
    return replace(pin, thermal_noise_density=density)


def calibrated_pin(config):
    if config.pin.is_calibrated:
        return config.pin
    return calibrate_receiver_sensitivity(
        config.pin, config.bit_rate, config.tx.extinction_ratio, config.lpf
    )


# -- waveform pipeline ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Transmitted:
    field: OpticalField
    bits: dict  # channel index -> BitStream
    grid: SimulationGrid


def transmit(config, seed, noiseless=False, active_channels=None):
    """Modulate the active channels and combine them through the mux."""
    grid = config.grid()
    active = range(config.plan.n_channels) if active_channels is None else active_channels
    active = sorted(set(active))
    mux = config.mux_spec()
    s = config.simulation
    order = s.effective_prbs_order
    full = (1 << order) - 1
    fields, ports, bits = [], [], {}
    for k in active:
        lam = config.plan.wavelengths[k]
        rng = np.random.default_rng(_seed(seed, _PRBS, k))
        b = generate_prbs(order, int(rng.integers(1, full + 1)), s.n_bits, config.bit_rate)
        tx = replace(config.tx, wavelength=lam)
        fields.append(modulate_nrz_ook(b, tx, grid, _seed(seed, _PHASE, k), phase_noise=not noiseless))
        ports.append(mux.ports[k])
        bits[k] = b
    composite = wdm_mux(fields, MuxSpec(tuple(ports)))
    return Transmitted(composite, bits, grid)


def _fiber_section(config, length, gamma):
    return replace(config.fiber, length=float(length), nonlinear_gamma=float(gamma))


def feeder_to_splitter(field, config, seed, gamma=None):
    """Propagate the feeder and take one splitter output."""
    gamma = config.fiber.nonlinear_gamma if gamma is None else gamma
    fiber = _fiber_section(config, config.feeder_length, gamma)
    pmd = sample_pmd(fiber, config.simulation.step, _seed(seed, _PMD_FEEDER))
    out = propagate(field, fiber, config.simulation.step, pmd)
    return split(out, config.splitter)


def slot_power(field, offset, slot_hz):
    """Mean power inside one channel slot [W]."""
    spec = np.sum(np.abs(sfft.fft(field.stacked(), axis=-1)) ** 2, axis=0) / field.grid.n_samples**2
    f = field.grid.frequency
    return float(spec[np.abs(f - offset) < slot_hz / 2].sum()) if math.isfinite(slot_hz) else float(spec.sum())


def receive(at_splitter, tx, config, total_distance, seed, gamma=None, noiseless=False, pin=None):
    """Drop section and ONT receivers for every transmitted channel."""
    gamma = config.fiber.nonlinear_gamma if gamma is None else gamma
    if total_distance < config.feeder_length - 1e-12:
        raise ConfigError(
            f"total distance {total_distance} km is shorter than the feeder ({config.feeder_length} km)"
        )
    drop = _fiber_section(config, max(0.0, total_distance - config.feeder_length), gamma)
    pmd = sample_pmd(drop, config.simulation.step, _seed(seed, _PMD_DROP, round(drop.length * 1e6)))
    at_ont = propagate(at_splitter, drop, config.simulation.step, pmd)
    if config.amplifier_position == "before_drop_filter":
        at_ont = amplify(at_ont, config.amplifier, _seed(seed, _ASE), include_ase=not noiseless)
    pin = pin or (config.pin if noiseless else calibrated_pin(config))
    grid = tx.grid
    slot = channel_slot_hz(config.plan)
    spectrum = sfft.fft(at_ont.stacked(), axis=-1)
    reports = []
    for k, bits in tx.bits.items():
        lam = config.plan.wavelengths[k]
        offset = channel_offset(grid, lam)
        try:
            h = bessel_response(config.drop_filter.at(lam), grid.frequency - offset)
            x = OpticalField.from_stacked(sfft.ifft(spectrum * h, axis=-1), grid)
            if config.amplifier_position == "before_pin":
                x = amplify(x, config.amplifier, _seed(seed, _ASE, k), include_ase=not noiseless)
            rx_dbm = float(watt_to_dbm(slot_power(x, offset, slot)))
            i = detect(x, pin, _seed(seed, _DETECT, k), shot_noise=not noiseless, thermal_noise=not noiseless)
            i = electrical_lpf(i, config.lpf, config.bit_rate, grid)
            reports.append(
                estimate_min_ber(
                    i, bits, grid, channel_wavelength=lam, distance=float(total_distance), received_power=rx_dbm
                )
            )
        except (ValueError, FloatingPointError) as exc:
            raise type(exc)(f"channel {lam} nm at {total_distance} km: {exc}") from exc
    return reports


def run_downstream(
    config, total_distance=None, seed=None, noiseless=False, active_channels=None, gamma=None
):
    """Simulate every downstream channel over ``total_distance`` km.

    Returns one :class:`BerReport` per channel in plan order. Deterministic for
    a given (config, distance, seed).
    """
    seed = config.seed if seed is None else seed
    d = config.total_distance if total_distance is None else float(total_distance)
    if d < config.feeder_length:
        raise ConfigError(f"total distance {d} km is shorter than the feeder ({config.feeder_length} km)")
    pin = None if noiseless else calibrated_pin(config)
    tx = transmit(config, seed, noiseless, active_channels)
    at_split = feeder_to_splitter(tx.field, config, seed, gamma)
    return receive(at_split, tx, config, d, seed, gamma, noiseless, pin)


# -- sweeps ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    channel_nm: float
    distance_km: float
    bandwidth_nm: float
    filter_order: int
    gamma_mode: str
    rx_power_dbm: float
    q_factor: float
    min_ber: float

    def key(self):
        return (self.channel_nm, self.distance_km, self.bandwidth_nm, self.filter_order, self.gamma_mode)


def resolve_gamma(config, mode):
    """Map a physics mode ('off', 'default' or a number) to gamma [1/(W km)]."""
    if mode == "off":
        return 0.0
    if mode == "default":
        return config.fiber.nonlinear_gamma
    try:
        g = float(mode)
    except (TypeError, ValueError):
        raise ConfigError(f"gamma mode must be 'off', 'default' or a number, got {mode!r}") from None
    _require(g >= 0, "FiberSpec.nonlinear_gamma", "must be >= 0")
    return g


def gamma_label(mode):
    return mode if mode in ("off", "default") else repr(float(mode))


def _rows(reports, config, mode):
    return [
        SweepRow(
            channel_nm=r.channel_wavelength,
            distance_km=r.distance,
            bandwidth_nm=config.mux.bandwidth,
            filter_order=int(config.mux.order),
            gamma_mode=gamma_label(mode),
            rx_power_dbm=r.received_power,
            q_factor=r.eye.q_factor,
            min_ber=r.min_ber,
        )
        for r in reports
    ]


def _pmap(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, *zip(*jobs)))
    return [fn(*job) for job in jobs]


def _bandwidth_point(config, distance, seed, mode, noiseless, active):
    reports = run_downstream(config, distance, seed, noiseless, active, resolve_gamma(config, mode))
    return _rows(reports, config, mode)


def sweep_bandwidth(
    config,
    bandwidths=PAPER_BANDWIDTHS,
    filter_order=1,
    gamma_modes=("default",),
    distance=None,
    seed=None,
    noiseless=False,
    active_channels=None,
    workers=1,
):
    """Min BER per (channel, mux bandwidth) for one mux filter order."""
    seed = config.seed if seed is None else seed
    if not noiseless:
        calibrated_pin(config)  # once, before any fan-out
    jobs = []
    for mode in gamma_modes:
        for bw in bandwidths:
            cfg = replace(config, mux=replace(config.mux, bandwidth=float(bw), order=int(filter_order)))
            jobs.append((cfg, distance, seed, mode, noiseless, active_channels))
    rows = [r for part in _pmap(_bandwidth_point, jobs, workers) for r in part]
    return sorted(rows, key=SweepRow.key)


def _distance_point(at_split, tx, config, distance, seed, gamma, noiseless, pin, mode):
    return _rows(receive(at_split, tx, config, distance, seed, gamma, noiseless, pin), config, mode)


def sweep_distance(
    config,
    distances=DEFAULT_DISTANCES,
    gamma_modes=("default",),
    seed=None,
    noiseless=False,
    active_channels=None,
    workers=1,
):
    """Min BER per (channel, total distance); the feeder is simulated once."""
    seed = config.seed if seed is None else seed
    bad = [d for d in distances if d < config.feeder_length]
    if bad:
        raise ConfigError(f"distances {bad} are shorter than the feeder ({config.feeder_length} km)")
    pin = None if noiseless else calibrated_pin(config)
    rows = []
    for mode in gamma_modes:
        gamma = resolve_gamma(config, mode)
        tx = transmit(config, seed, noiseless, active_channels)
        at_split = feeder_to_splitter(tx.field, config, seed, gamma)
        jobs = [(at_split, tx, config, float(d), seed, gamma, noiseless, pin, mode) for d in distances]
        rows += [r for part in _pmap(_distance_point, jobs, workers) for r in part]
    return sorted(rows, key=SweepRow.key)


def spectrum_at_splitter(config, resolution_bandwidth=None, seed=None, gamma=None, noiseless=False):
    """Optical spectrum at one splitter output (after the feeder)."""
    seed = config.seed if seed is None else seed
    if resolution_bandwidth is None:
        resolution_bandwidth = float(bandwidth_nm_to_hz(0.01, np.mean(config.plan.wavelengths)))
    tx = transmit(config, seed, noiseless)
    at_split = feeder_to_splitter(tx.field, config, seed, gamma)
    rbw = max(resolution_bandwidth, tx.grid.frequency_resolution)
    return power_spectrum(at_split, rbw)


# -- wavelength allocation -------------------------------------------------------


@dataclass(frozen=True)
class Subarea:
    index: int
    distance: float  # km, edge of the subarea
    users: int

    def __post_init__(self):
        _require(self.users >= 1, "Subarea.users", "must be >= 1")
        _require(self.distance >= 0, "Subarea.distance", "must be >= 0")


@dataclass(frozen=True)
class SubareaAllocation:
    index: int
    distance: float
    table_distance: float
    wavelengths: tuple
    users: int
    per_user_rate: Optional[float]


@dataclass(frozen=True)
class AllocationResult:
    subareas: tuple
    universal: tuple
    unserved: tuple
    threshold: float

    def as_dict(self):
        return {s.index: s.wavelengths for s in self.subareas}


def _triplet(row):
    if isinstance(row, BerReport):
        return row.channel_wavelength, row.distance, row.min_ber
    if isinstance(row, dict):
        return float(row["channel_nm"]), float(row["distance_km"]), float(row["min_ber"])
    return row.channel_nm, row.distance_km, row.min_ber


def allocate_wavelengths(ber_table, threshold, subareas, bit_rate=None):
    """Give each subarea every channel whose min BER stays under ``threshold``.

    A subarea at distance r is judged on the nearest simulated distance >= r.
    Duplicate (channel, distance) rows keep the worst BER. Channels that
    qualify at every simulated distance are listed as universal; subareas left
    without any channel are listed in ``unserved``.
    """
    worst = {}
    for row in ber_table:
        ch, d, ber = _triplet(row)
        worst[(ch, d)] = max(ber, worst.get((ch, d), 0.0))
    channels = sorted({ch for ch, _ in worst})
    distances = sorted({d for _, d in worst})

    def ok(ch, d):
        return (ch, d) in worst and worst[(ch, d)] <= threshold

    out, unserved = [], []
    for sa in subareas:
        if not isinstance(sa, Subarea):
            sa = Subarea(*sa)
        covering = [d for d in distances if d >= sa.distance - 1e-9]
        if not covering:
            raise ValueError(
                f"BER table stops at {max(distances, default=math.nan)} km; subarea {sa.index} needs {sa.distance} km"
            )
        d = covering[0]
        wl = tuple(ch for ch in channels if ok(ch, d))
        if not wl:
            unserved.append(sa.index)
        rate = None if bit_rate is None else bit_rate / sa.users
        out.append(SubareaAllocation(sa.index, sa.distance, d, wl, sa.users, rate))
    universal = tuple(ch for ch in channels if all(ok(ch, d) for d in distances))
    return AllocationResult(tuple(out), universal, tuple(unserved), threshold)


__all__ = [
    "AGGREGATE_CAPACITY",
    "PAPER_BANDWIDTHS",
    "DEFAULT_DISTANCES",
    "FilterShape",
    "SimulationSettings",
    "SystemConfig",
    "LinkBudget",
    "SweepRow",
    "Subarea",
    "SubareaAllocation",
    "AllocationResult",
    "build_system_a",
    "build_system_b",
    "build_system",
    "compute_link_budget",
    "back_to_back_ber",
    "calibrate_receiver_sensitivity",
    "calibrated_pin",
    "transmit",
    "feeder_to_splitter",
    "receive",
    "run_downstream",
    "resolve_gamma",
    "sweep_bandwidth",
    "sweep_distance",
    "spectrum_at_splitter",
    "allocate_wavelengths",
    "BitStream",
]
