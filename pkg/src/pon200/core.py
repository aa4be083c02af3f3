"""
Sampling grid, optical field container and the OOK transmitter.

Every waveform in one run lives on a single :class:`SimulationGrid`: a complex
baseband lattice centred on the mean of the channel frequencies. All channels of
a system are synthesised onto that grid at their frequency offsets and summed,
so inter-channel mixing in the fiber comes out of the propagation itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .units import bandwidth_nm_to_hz, dbm_to_watt, wavelength_to_frequency


class ConfigError(ValueError):
    """Invalid parameter; the message names the offending ``Type.field``."""


def _require(cond, where, msg):
    if not cond:
        raise ConfigError(f"{where} {msg}")


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


MIN_GRID_SAMPLES = 2**10
MIN_STREAM_BITS = 2**7 - 1  # one PRBS-7 period
DEFAULT_MAX_SAMPLES = 2**22


@dataclass(frozen=True)
class SimulationGrid:
    """Time/frequency lattice shared by every field of a run.

    Parameters
    ----------
    sample_rate : float
        Samples per second [Hz]. Equals the simulated optical bandwidth.
    n_samples : int
        Number of samples, a power of two >= 1024.
    center_frequency : float
        Absolute optical frequency of zero offset [Hz].
    """

    sample_rate: float
    n_samples: int
    center_frequency: float

    def __post_init__(self):
        _require(self.sample_rate > 0, "SimulationGrid.sample_rate", "must be > 0")
        _require(
            isinstance(self.n_samples, (int, np.integer)) and _is_pow2(int(self.n_samples)),
            "SimulationGrid.n_samples",
            f"must be a power of two, got {self.n_samples}",
        )
        _require(
            self.n_samples >= MIN_GRID_SAMPLES,
            "SimulationGrid.n_samples",
            f"must be >= {MIN_GRID_SAMPLES}",
        )
        _require(self.center_frequency > 0, "SimulationGrid.center_frequency", "must be > 0")

    @property
    def time_step(self):
        return 1.0 / self.sample_rate

    @property
    def frequency_resolution(self):
        return self.sample_rate / self.n_samples

    @property
    def duration(self):
        return self.n_samples / self.sample_rate

    @property
    def time(self):
        return np.arange(self.n_samples) * self.time_step

    @property
    def frequency(self):
        """Baseband offsets in FFT order (not shifted)."""
        return sfft.fftfreq(self.n_samples, self.time_step)

    @property
    def angular_frequency(self):
        return 2 * np.pi * self.frequency

    def offset_of(self, absolute_frequency):
        return absolute_frequency - self.center_frequency

    def snap(self, offset):
        """Round an offset to the nearest frequency bin (keeps tones cyclic)."""
        df = self.frequency_resolution
        return np.round(offset / df) * df

    def contains(self, offset, half_width=0.0):
        return abs(offset) + half_width <= self.sample_rate / 2


@dataclass(frozen=True, eq=False)
class OpticalField:
    """Dual-polarisation complex envelope [sqrt(W)] on a grid."""

    samples_x: np.ndarray
    samples_y: np.ndarray
    grid: SimulationGrid

    def __post_init__(self):
        n = self.grid.n_samples
        if self.samples_x.shape != (n,) or self.samples_y.shape != (n,):
            raise ValueError(
                f"OpticalField: polarisation arrays must have shape ({n},), "
                f"got {self.samples_x.shape} and {self.samples_y.shape}"
            )
        p = self.mean_power
        if not np.isfinite(p):
            raise FloatingPointError("OpticalField: non-finite samples")

    @classmethod
    def single_polarization(cls, samples, grid):
        samples = np.asarray(samples, dtype=complex)
        return cls(samples, np.zeros_like(samples), grid)

    @classmethod
    def zeros(cls, grid):
        z = np.zeros(grid.n_samples, dtype=complex)
        return cls(z, z.copy(), grid)

    @property
    def center_frequency(self):
        return self.grid.center_frequency

    @property
    def power(self):
        """Instantaneous power |x|^2 + |y|^2 [W]."""
        return np.abs(self.samples_x) ** 2 + np.abs(self.samples_y) ** 2

    @property
    def mean_power(self):
        return float(np.mean(self.power))

    def stacked(self):
        return np.stack([self.samples_x, self.samples_y])

    @classmethod
    def from_stacked(cls, arr, grid):
        return cls(np.ascontiguousarray(arr[0]), np.ascontiguousarray(arr[1]), grid)

    def scaled(self, amplitude_gain):
        return OpticalField(
            self.samples_x * amplitude_gain, self.samples_y * amplitude_gain, self.grid
        )

    def __add__(self, other):
        if other.grid != self.grid:
            raise ValueError("cannot add fields on different grids")
        return OpticalField(
            self.samples_x + other.samples_x, self.samples_y + other.samples_y, self.grid
        )


@dataclass(frozen=True, eq=False)
class BitStream:
    bits: np.ndarray
    bit_rate: float

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1 or len(b) < MIN_STREAM_BITS:
            raise ValueError(f"BitStream: need >= {MIN_STREAM_BITS} bits, got {b.size}")
        if not np.all((b == 0) | (b == 1)):
            raise ValueError("BitStream: bits must be 0 or 1")
        _require(self.bit_rate > 0, "BitStream.bit_rate", "must be > 0")

    def __len__(self):
        return len(self.bits)


@dataclass(frozen=True)
class TransmitterSpec:
    average_power: float = 13.0  # dBm
    extinction_ratio: float = 10.0  # dB
    linewidth: float = 10e6  # Hz
    wavelength: float = 1550.0  # nm

    def __post_init__(self):
        _require(self.extinction_ratio > 0, "TransmitterSpec.extinction_ratio", "must be > 0 dB")
        _require(
            np.isfinite(self.average_power), "TransmitterSpec.average_power", "must be finite"
        )
        _require(self.linewidth >= 0, "TransmitterSpec.linewidth", "must be >= 0")
        _require(self.wavelength > 0, "TransmitterSpec.wavelength", "must be > 0")

    @property
    def levels(self):
        """(P1, P0) in W for equiprobable marks and spaces."""
        p_avg = float(dbm_to_watt(self.average_power))
        r = 10.0 ** (self.extinction_ratio / 10.0)
        if np.isinf(r):
            return 2 * p_avg, 0.0
        return 2 * p_avg * r / (r + 1), 2 * p_avg / (r + 1)


@dataclass(frozen=True)
class ChannelPlan:
    wavelengths: tuple = (1550.0,)  # nm
    spacing: float = 0.0  # nm
    per_channel_bit_rate: float = 40e9
    direction: str = "downstream"

    def __post_init__(self):
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        w = np.asarray(self.wavelengths)
        _require(len(w) >= 1, "ChannelPlan.wavelengths", "must not be empty")
        _require(np.all(w > 0), "ChannelPlan.wavelengths", "must be > 0")
        if len(w) > 1:
            d = np.diff(w)
            _require(np.all(d > 0), "ChannelPlan.wavelengths", "must be strictly increasing")
            _require(
                np.allclose(d, self.spacing, rtol=0, atol=1e-6),
                "ChannelPlan.spacing",
                f"must equal the wavelength step ({d[0]:g} nm)",
            )
        _require(self.per_channel_bit_rate > 0, "ChannelPlan.per_channel_bit_rate", "must be > 0")
        _require(
            self.direction in ("downstream", "upstream"),
            "ChannelPlan.direction",
            "must be 'downstream' or 'upstream'",
        )

    @property
    def n_channels(self):
        return len(self.wavelengths)

    @property
    def aggregate_capacity(self):
        return self.n_channels * self.per_channel_bit_rate

    @property
    def frequencies(self):
        return wavelength_to_frequency(np.asarray(self.wavelengths))

    @property
    def span_hz(self):
        f = self.frequencies
        return float(f.max() - f.min())


def make_grid(
    channel_plan,
    samples_per_bit=16,
    n_bits=4096,
    filter_bandwidth=0.0,
    max_samples=DEFAULT_MAX_SAMPLES,
):
    """Build the sampling grid for a channel plan.

    The sample rate starts at ``samples_per_bit`` times the bit rate and is
    doubled until ``sample_rate >= 2 * (span / 2 + filter_bandwidth)``, where
    ``filter_bandwidth`` [Hz] is the widest channel-selecting filter band
    that has to fit beyond the outermost channel.

    Raises
    ------
    ConfigError
        Bad sampling arguments, or the grid would exceed ``max_samples``.
    """
    _require(n_bits >= 128, "make_grid.n_bits", f"must be >= 128, got {n_bits}")
    _require(
        samples_per_bit >= 8 and _is_pow2(int(samples_per_bit)),
        "make_grid.samples_per_bit",
        f"must be a power of two >= 8, got {samples_per_bit}",
    )
    _require(_is_pow2(int(n_bits)), "make_grid.n_bits", f"must be a power of two, got {n_bits}")
    bit_rate = channel_plan.per_channel_bit_rate
    required = 2 * (channel_plan.span_hz / 2 + filter_bandwidth)
    spb = int(samples_per_bit)
    while spb * bit_rate < required:
        spb *= 2
    n = spb * int(n_bits)
    if n > max_samples:
        raise ConfigError(
            f"make_grid: plan needs {n} samples ({spb} samples/bit), over the cap of {max_samples}"
        )
    center = float(np.mean(channel_plan.frequencies))
    return SimulationGrid(sample_rate=spb * bit_rate, n_samples=n, center_frequency=center)


def samples_per_bit(grid, bit_rate):
    spb = grid.sample_rate / bit_rate
    if abs(spb - round(spb)) > 1e-9 * spb:
        raise ValueError(f"grid sample rate is not an integer multiple of {bit_rate:g} b/s")
    return int(round(spb))


# Primitive feedback taps (x^n + ... + 1), checked maximal for every order.
PRBS_TAPS = {
    7: (7, 6), 8: (8, 6, 5, 4), 9: (9, 5), 10: (10, 7), 11: (11, 9),
    12: (12, 6, 4, 1), 13: (13, 4, 3, 1), 14: (14, 5, 3, 1), 15: (15, 14),
    16: (16, 15, 13, 4), 17: (17, 14), 18: (18, 11), 19: (19, 6, 2, 1),
    20: (20, 17), 21: (21, 19), 22: (22, 21), 23: (23, 18), 24: (24, 23, 22, 17),
    25: (25, 22), 26: (26, 6, 2, 1), 27: (27, 5, 2, 1), 28: (28, 25),
    29: (29, 27), 30: (30, 6, 4, 1), 31: (31, 28),
}  # fmt: skip


def generate_prbs(order, seed, n_bits=None, bit_rate=40e9):
    """Maximal-length LFSR sequence of the given order.

    ``n_bits`` defaults to one full period, ``2**order - 1``. Longer requests
    wrap around the period.
    """
    if order not in PRBS_TAPS:
        raise ValueError(f"generate_prbs: order must be in [7, 31], got {order}")
    full = (1 << order) - 1
    state = int(seed) & full
    if state == 0:
        raise ValueError("generate_prbs: seed must be nonzero modulo 2**order")
    if n_bits is None:
        n_bits = full
    mask = 0
    for t in PRBS_TAPS[order]:
        mask |= 1 << (t - 1)
    out = np.empty(int(n_bits), dtype=np.uint8)
    for i in range(int(n_bits)):
        fb = (state & mask).bit_count() & 1
        state = ((state << 1) | fb) & full
        out[i] = fb
    return BitStream(out, bit_rate)


def laser_phase_noise(n_samples, linewidth, time_step, rng):
    """Wiener phase walk with per-sample variance 2*pi*linewidth*time_step."""
    if linewidth <= 0:
        return np.zeros(n_samples)
    sigma = math.sqrt(2 * np.pi * linewidth * time_step)
    return np.cumsum(rng.normal(0.0, sigma, n_samples))


RISE_TIME_FRACTION = 0.25
_GAUSS_10_90 = 2 * 1.2815515655446004  # 10-90 % rise of an erf edge, in sigmas


def nrz_power_waveform(bits, p1, p0, grid):
    """Two-level NRZ power waveform with Gaussian-smoothed edges."""
    spb = samples_per_bit(grid, bits.bit_rate)
    if spb * len(bits) != grid.n_samples:
        raise ValueError(
            f"{len(bits)} bits at {spb} samples/bit do not fill {grid.n_samples} samples"
        )
    levels = np.where(np.asarray(bits.bits) == 1, p1, p0).astype(float)
    p = np.repeat(levels, spb)
    sigma_t = RISE_TIME_FRACTION / bits.bit_rate / _GAUSS_10_90
    kernel = np.exp(-0.5 * (grid.angular_frequency * sigma_t) ** 2)
    p = sfft.ifft(sfft.fft(p) * kernel).real
    return np.clip(p, 0.0, None)


def modulate_nrz_ook(bits, tx, grid, rng_seed=None, phase_noise=True):
    """Chirp-free NRZ on-off keyed laser output at the channel's grid offset.

    Parameters
    ----------
    bits : BitStream
    tx : TransmitterSpec
        Average power, extinction ratio, linewidth and wavelength.
    grid : SimulationGrid
        Must hold at least 8 samples per bit.
    rng_seed : int or numpy SeedSequence, optional
        Seed for the laser phase walk.
    phase_noise : bool
        Set False for a noiseless transmitter.

    Returns
    -------
    OpticalField
        Single-polarisation field, ``samples_y`` all zero.
    """
    spb = samples_per_bit(grid, bits.bit_rate)
    if spb < 8:
        raise ConfigError(f"modulate_nrz_ook: grid gives {spb} samples/bit, need >= 8")
    offset = grid.snap(grid.offset_of(float(wavelength_to_frequency(tx.wavelength))))
    if not grid.contains(offset, half_width=bits.bit_rate):
        raise ConfigError(
            f"TransmitterSpec.wavelength {tx.wavelength} nm lies outside the simulation grid"
        )
    p1, p0 = tx.levels
    amp = np.sqrt(nrz_power_waveform(bits, p1, p0, grid))
    phase = 2 * np.pi * offset * grid.time
    if phase_noise and tx.linewidth > 0:
        rng = np.random.default_rng(rng_seed)
        phase = phase + laser_phase_noise(grid.n_samples, tx.linewidth, grid.time_step, rng)
    return OpticalField.single_polarization(amp * np.exp(1j * phase), grid)


def channel_offset(grid, wavelength_nm):
    return float(grid.snap(grid.offset_of(float(wavelength_to_frequency(wavelength_nm)))))


def channel_slot_hz(plan):
    """Width of the spectral slot owned by one channel [Hz]."""
    if plan.n_channels < 2:
        return math.inf
    return float(bandwidth_nm_to_hz(plan.spacing, np.mean(plan.wavelengths)))


__all__ = [
    "ConfigError",
    "SimulationGrid",
    "OpticalField",
    "BitStream",
    "TransmitterSpec",
    "ChannelPlan",
    "make_grid",
    "samples_per_bit",
    "generate_prbs",
    "laser_phase_noise",
    "nrz_power_waveform",
    "modulate_nrz_ook",
    "channel_offset",
    "channel_slot_hz",
    "PRBS_TAPS",
]
