"""
PIN detection, electrical low-pass filtering, Gaussian min-BER estimation and
optical spectrum analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy import signal
from scipy.special import erfc

from .core import ConfigError, _require, samples_per_bit
from .units import ELECTRON_CHARGE, frequency_to_wavelength, watt_to_dbm

BER_FLOOR = 1e-40
BER_CEIL = 0.5
GUARD_BITS = 16
MIN_RAIL_SAMPLES = 100


@dataclass(frozen=True)
class PinSpec:
    responsivity: float = 1.0  # A/W
    dark_current: float = 10e-9  # A
    thermal_noise_density: Optional[float] = None  # A/sqrt(Hz); None until calibrated
    sensitivity_reference: float = -18.0  # dBm

    def __post_init__(self):
        _require(self.responsivity > 0, "PinSpec.responsivity", "must be > 0")
        _require(self.dark_current >= 0, "PinSpec.dark_current", "must be >= 0")
        if self.thermal_noise_density is not None:
            _require(
                self.thermal_noise_density >= 0, "PinSpec.thermal_noise_density", "must be >= 0"
            )

    @property
    def is_calibrated(self):
        return self.thermal_noise_density is not None


@dataclass(frozen=True)
class ElectricalFilterSpec:
    cutoff_ratio: float = 0.75
    order: int = 4

    def __post_init__(self):
        _require(self.cutoff_ratio > 0, "ElectricalFilterSpec.cutoff_ratio", "must be > 0")
        _require(
            int(self.order) == self.order and self.order >= 1,
            "ElectricalFilterSpec.order",
            "must be an integer >= 1",
        )

    def cutoff(self, bit_rate):
        return self.cutoff_ratio * bit_rate


@dataclass(frozen=True)
class EyeStats:
    sampling_phase: float  # fraction of a bit period
    mu1: float
    mu0: float
    sigma1: float
    sigma0: float
    q_factor: float


@dataclass(frozen=True)
class BerReport:
    channel_wavelength: float
    distance: float
    received_power: float  # dBm
    eye: EyeStats
    min_ber: float
    counted_ber: Optional[float] = None

    def __post_init__(self):
        if not BER_FLOOR <= self.min_ber <= BER_CEIL:
            raise ValueError(f"BerReport.min_ber {self.min_ber} outside [{BER_FLOOR}, {BER_CEIL}]")


def detect(field, pin, rng_seed=None, shot_noise=True, thermal_noise=True):
    """Square-law PIN detection of both polarisations.

    Returns the photocurrent [A] per sample. Shot noise has variance
    ``2 q (R P + I_d) B_e`` and thermal noise ``density**2 * B_e`` with
    ``B_e = sample_rate / 2``. An uncalibrated thermal density counts as zero.
    """
    i = pin.responsivity * field.power + pin.dark_current
    b_e = field.grid.sample_rate / 2
    var = np.zeros(1)
    if shot_noise:
        var = var + 2 * ELECTRON_CHARGE * np.clip(i, 0, None) * b_e
    if thermal_noise and pin.thermal_noise_density:
        var = var + pin.thermal_noise_density**2 * b_e
    if np.any(var > 0):
        rng = np.random.default_rng(rng_seed)
        i = i + rng.standard_normal(i.shape) * np.sqrt(var)
    return i


def lpf_response(spec, bit_rate, frequency):
    b, a = signal.bessel(int(spec.order), 1.0, btype="low", analog=True, norm="mag")
    s = 1j * np.asarray(frequency, dtype=float) / spec.cutoff(bit_rate)
    return np.polyval(b, s) / np.polyval(a, s)


def electrical_lpf(waveform, spec, bit_rate, grid):
    """Bessel low-pass at ``cutoff_ratio * bit_rate`` with unit DC gain."""
    fc = spec.cutoff(bit_rate)
    if fc >= grid.sample_rate / 2:
        raise ConfigError(
            f"ElectricalFilterSpec.cutoff_ratio {spec.cutoff_ratio} puts the cutoff "
            f"({fc:g} Hz) at or above Nyquist ({grid.sample_rate / 2:g} Hz)"
        )
    f = sfft.rfftfreq(len(waveform), grid.time_step)
    return sfft.irfft(sfft.rfft(waveform) * lpf_response(spec, bit_rate, f), n=len(waveform))


def q_to_ber(q):
    """Gaussian BER 0.5*erfc(Q/sqrt(2)), clamped to [1e-40, 0.5]."""
    ber = 0.5 * erfc(np.asarray(q, dtype=float) / math.sqrt(2))
    return np.clip(ber, BER_FLOOR, BER_CEIL)


def align(waveform, reference_bits, grid):
    """Circularly shift ``waveform`` so bit k starts at sample k*spb."""
    spb = samples_per_bit(grid, reference_bits.bit_rate)
    if spb * len(reference_bits) != len(waveform):
        raise ValueError(
            f"waveform has {len(waveform)} samples, expected {spb * len(reference_bits)}"
        )
    ref = np.repeat(np.asarray(reference_bits.bits, dtype=float) - 0.5, spb)
    x = waveform - waveform.mean()
    xc = sfft.irfft(sfft.rfft(x) * np.conj(sfft.rfft(ref)), n=len(x))
    lag = int(np.argmax(xc))
    return np.roll(waveform, -lag), spb


def eye_by_phase(waveform, reference_bits, grid, guard_bits=GUARD_BITS):
    """Rail statistics at every sampling phase of the bit period.

    Returns
    -------
    mu1, mu0, sigma1, sigma0 : ndarray, shape (samples_per_bit,)
    """
    aligned, spb = align(waveform, reference_bits, grid)
    n_bits = len(reference_bits)
    keep = slice(guard_bits, n_bits - guard_bits)
    m = aligned.reshape(n_bits, spb)[keep]
    b = np.asarray(reference_bits.bits)[keep].astype(bool)
    if b.sum() < MIN_RAIL_SAMPLES or (~b).sum() < MIN_RAIL_SAMPLES:
        raise ValueError(
            f"estimate_min_ber: need >= {MIN_RAIL_SAMPLES} samples per rail, "
            f"got {int(b.sum())} ones and {int((~b).sum())} zeros"
        )
    ones, zeros = m[b], m[~b]
    return ones.mean(axis=0), zeros.mean(axis=0), ones.std(axis=0), zeros.std(axis=0)


def _q(mu1, mu0, s1, s0):
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(s1 + s0 > 0, (mu1 - mu0) / (s1 + s0), np.sign(mu1 - mu0) * np.inf)
    return np.nan_to_num(q, nan=0.0, posinf=np.inf, neginf=-np.inf)


def ber_vs_phase(waveform, reference_bits, grid):
    return q_to_ber(_q(*eye_by_phase(waveform, reference_bits, grid)))


def estimate_min_ber(
    waveform,
    reference_bits,
    grid,
    count_errors=False,
    channel_wavelength=math.nan,
    distance=math.nan,
    received_power=math.nan,
):
    """Minimum Gaussian BER over sampling phases.

    For every phase in the bit period the samples are split by transmitted bit,
    ``Q = (mu1 - mu0) / (sigma1 + sigma0)`` and ``BER = 0.5 erfc(Q / sqrt(2))``.
    The first and last 16 bits are discarded. With ``count_errors`` the best
    phase is also decided at the Gaussian-optimal threshold and errors counted.
    """
    mu1, mu0, s1, s0 = eye_by_phase(waveform, reference_bits, grid)
    q = _q(mu1, mu0, s1, s0)
    ber = q_to_ber(q)
    k = int(np.argmax(q))  # same minimum as argmin(ber), but breaks clamp ties
    spb = len(ber)
    eye = EyeStats(k / spb, float(mu1[k]), float(mu0[k]), float(s1[k]), float(s0[k]), float(q[k]))
    counted = None
    if count_errors:
        counted = _count_errors(waveform, reference_bits, grid, k, eye)
    return BerReport(
        channel_wavelength=channel_wavelength,
        distance=distance,
        received_power=received_power,
        eye=eye,
        min_ber=float(ber[k]),
        counted_ber=counted,
    )


def _count_errors(waveform, reference_bits, grid, phase, eye):
    aligned, spb = align(waveform, reference_bits, grid)
    n_bits = len(reference_bits)
    keep = slice(GUARD_BITS, n_bits - GUARD_BITS)
    samples = aligned.reshape(n_bits, spb)[keep, phase]
    b = np.asarray(reference_bits.bits)[keep].astype(bool)
    if eye.sigma0 + eye.sigma1 > 0:
        th = (eye.sigma0 * eye.mu1 + eye.sigma1 * eye.mu0) / (eye.sigma0 + eye.sigma1)
    else:
        th = (eye.mu1 + eye.mu0) / 2
    errors = np.count_nonzero(samples[b] < th) + np.count_nonzero(samples[~b] >= th)
    return errors / len(samples)


@dataclass(frozen=True, eq=False)
class Spectrum:
    frequency: np.ndarray  # absolute optical frequency [Hz], ascending
    power_w: np.ndarray  # power per resolution bin [W]
    resolution_bandwidth: float

    @property
    def wavelength(self):
        return frequency_to_wavelength(self.frequency)

    @property
    def power_dbm(self):
        return watt_to_dbm(self.power_w)

    @property
    def total_power(self):
        return float(self.power_w.sum())

    def rows(self):
        """(wavelength_nm, power_dbm) pairs sorted by wavelength."""
        order = np.argsort(self.wavelength)
        return list(zip(self.wavelength[order], self.power_dbm[order]))


def power_spectrum(field, resolution_bandwidth):
    """Welch-averaged optical spectrum integrated into resolution bins.

    Bins are centred on multiples of ``resolution_bandwidth`` from the grid
    centre; their sum equals the field's mean power.
    """
    grid = field.grid
    if resolution_bandwidth < grid.frequency_resolution * (1 - 1e-9):
        raise ValueError(
            f"resolution_bandwidth {resolution_bandwidth:g} Hz is finer than the grid "
            f"resolution {grid.frequency_resolution:g} Hz"
        )
    n = grid.n_samples
    nseg = min(n, 1 << max(0, math.ceil(math.log2(4 * grid.sample_rate / resolution_bandwidth))))
    density = None
    for pol in (field.samples_x, field.samples_y):
        if not np.any(pol):
            continue
        if nseg == n:
            f = sfft.fftfreq(n, grid.time_step)
            p = np.abs(sfft.fft(pol)) ** 2 / n**2 / (grid.sample_rate / n)
        else:
            f, p = signal.welch(
                pol,
                fs=grid.sample_rate,
                window="hann",
                nperseg=nseg,
                detrend=False,
                return_onesided=False,
                scaling="density",
            )
        density = p if density is None else density + p
    if density is None:
        f = sfft.fftfreq(nseg, grid.time_step)
        density = np.zeros(nseg)
    df = grid.sample_rate / len(f)
    idx = np.floor(f / resolution_bandwidth + 0.5).astype(int)  # ties go up, not to even
    lo = idx.min()
    power = np.bincount(idx - lo, weights=density * df)
    centers = (np.arange(len(power)) + lo) * resolution_bandwidth
    return Spectrum(grid.center_frequency + centers, power, resolution_bandwidth)


__all__ = [
    "BER_FLOOR",
    "PinSpec",
    "ElectricalFilterSpec",
    "EyeStats",
    "BerReport",
    "Spectrum",
    "detect",
    "lpf_response",
    "electrical_lpf",
    "q_to_ber",
    "align",
    "eye_by_phase",
    "ber_vs_phase",
    "estimate_min_ber",
    "power_spectrum",
]
