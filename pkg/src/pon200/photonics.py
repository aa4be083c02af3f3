"""
Linear photonic components: Bessel optical filters, WDM mux, splitter, amplifier.

All filtering happens in the frequency domain on the shared grid with the full
complex Bessel response, magnitude and phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .core import ConfigError, OpticalField, _require
from .units import PLANCK, bandwidth_nm_to_hz, db_to_linear, wavelength_to_frequency


@dataclass(frozen=True)
class BesselFilterSpec:
    """Band-pass Bessel filter centred on a wavelength.

    ``bandwidth`` is the full -3 dB width in nm; ``stopband_floor`` is the
    minimum out-of-band rejection in dB (negative), applied as a floor on the
    magnitude response.
    """

    order: int = 1
    center_wavelength: float = 1550.0
    bandwidth: float = 7.23
    insertion_loss: float = 0.0
    stopband_floor: float = -10.0

    def __post_init__(self):
        _require(int(self.order) == self.order and self.order >= 1, "BesselFilterSpec.order", "must be an integer >= 1")
        _require(self.bandwidth > 0, "BesselFilterSpec.bandwidth", "must be > 0")
        _require(self.stopband_floor < 0, "BesselFilterSpec.stopband_floor", "must be < 0 dB")
        _require(self.insertion_loss >= 0, "BesselFilterSpec.insertion_loss", "must be >= 0 dB")
        _require(self.center_wavelength > 0, "BesselFilterSpec.center_wavelength", "must be > 0")

    @property
    def band_edge_hz(self):
        """Half the -3 dB width, in Hz."""
        return float(bandwidth_nm_to_hz(self.bandwidth, self.center_wavelength)) / 2


@dataclass(frozen=True)
class MuxSpec:
    ports: tuple

    def __post_init__(self):
        object.__setattr__(self, "ports", tuple(self.ports))
        _require(len(self.ports) >= 1, "MuxSpec.ports", "must not be empty")
        centers = [p.center_wavelength for p in self.ports]
        _require(len(set(centers)) == len(centers), "MuxSpec.ports", "centers must be pairwise distinct")
        bws = {p.bandwidth for p in self.ports}
        _require(len(bws) == 1, "MuxSpec.ports", "must share one bandwidth")

    @property
    def bandwidth(self):
        return self.ports[0].bandwidth

    @classmethod
    def uniform(cls, centers, bandwidth, order=1, insertion_loss=0.0, stopband_floor=-10.0):
        return cls(
            tuple(
                BesselFilterSpec(order, float(c), bandwidth, insertion_loss, stopband_floor)
                for c in centers
            )
        )


@dataclass(frozen=True)
class SplitterSpec:
    n_outputs: int = 32
    excess_loss: float = 2.0

    def __post_init__(self):
        n = self.n_outputs
        _require(
            int(n) == n and 1 <= n <= 128 and (int(n) & (int(n) - 1)) == 0,
            "SplitterSpec.n_outputs",
            f"must be a power of two in [1, 128], got {n}",
        )
        _require(self.excess_loss >= 0, "SplitterSpec.excess_loss", "must be >= 0 dB")

    @property
    def loss_db(self):
        return 10 * math.log10(self.n_outputs) + self.excess_loss


@dataclass(frozen=True)
class AmplifierSpec:
    gain: float = 10.0  # dB
    noise_figure: float = 4.0  # dB
    include_ase: bool = True

    def __post_init__(self):
        _require(self.gain >= 0, "AmplifierSpec.gain", "must be >= 0 dB")
        if self.include_ase:
            _require(self.noise_figure >= 3, "AmplifierSpec.noise_figure", "must be >= 3 dB with ASE")


@lru_cache(maxsize=None)
def _prototype(order):
    # analog low-pass prototype with |H| = -3 dB at w = 1
    return signal.bessel(int(order), 1.0, btype="low", analog=True, norm="mag")


def bessel_response(spec, frequency_offset):
    """Complex gain of a Bessel band-pass at offsets from its centre [Hz].

    ``H(f) = 1 / B_n(j f / f0)`` with ``f0`` the band edge, magnitude floored at
    the stopband floor and scaled by the insertion loss.
    """
    f = np.asarray(frequency_offset, dtype=float)
    if math.isinf(spec.bandwidth):
        h = np.ones(f.shape, dtype=complex)
    else:
        b, a = _prototype(spec.order)
        s = 1j * f / spec.band_edge_hz
        h = np.polyval(b, s) / np.polyval(a, s)
        floor = 10 ** (spec.stopband_floor / 20)
        mag = np.abs(h)
        low = mag < floor
        if np.any(low):
            h = np.where(low, floor * h / np.where(mag > 0, mag, 1), h)
    return h * 10 ** (-spec.insertion_loss / 20)


def group_delay(spec, frequency_offset):
    """Analytic group delay [s] of the Bessel response (floor not applied)."""
    b, a = _prototype(spec.order)
    w0 = 2 * np.pi * spec.band_edge_hz
    s = 1j * np.asarray(frequency_offset, dtype=float) / spec.band_edge_hz
    # tau = -d(arg H)/dw = Re[A'(s)/A(s) - B'(s)/B(s)] / w0
    da = np.polyval(np.polyder(a), s) / np.polyval(a, s)
    db = np.polyval(np.polyder(b), s) / np.polyval(b, s)
    return np.real(da - db) / w0


def _response_on_grid(grid, spec):
    center = grid.offset_of(float(wavelength_to_frequency(spec.center_wavelength)))
    if not grid.contains(center):
        raise ConfigError(
            f"BesselFilterSpec.center_wavelength {spec.center_wavelength} nm is outside the grid"
        )
    return bessel_response(spec, grid.frequency - center)


def apply_filter(field, spec):
    """Filter both polarisations with the Bessel response centred on ``spec``."""
    h = _response_on_grid(field.grid, spec)
    out = sfft.ifft(sfft.fft(field.stacked(), axis=-1) * h, axis=-1)
    return OpticalField.from_stacked(out, field.grid)


def wdm_mux(fields, spec):
    """Filter each input by its port and sum onto the shared grid."""
    fields = list(fields)
    if len(fields) != len(spec.ports):
        raise ValueError(f"wdm_mux: {len(fields)} fields for {len(spec.ports)} ports")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("wdm_mux: all fields must share one grid")
    acc = np.zeros((2, grid.n_samples), dtype=complex)
    for f, port in zip(fields, spec.ports):
        acc += sfft.fft(f.stacked(), axis=-1) * _response_on_grid(grid, port)
    return OpticalField.from_stacked(sfft.ifft(acc, axis=-1), grid)


def split(field, spec):
    """One splitter output: wavelength-flat power loss of 10log10(N) + excess."""
    if spec.n_outputs == 1 and spec.excess_loss == 0:
        return field
    return field.scaled(10 ** (-spec.loss_db / 20))


def ase_density(spec, frequency):
    """ASE power spectral density per polarisation [W/Hz]."""
    g = db_to_linear(spec.gain)
    nf = db_to_linear(spec.noise_figure)
    return float((nf * g - 1) * PLANCK * frequency / 2)


def amplify(field, spec, rng_seed=None, include_ase=None):
    """Scale by the gain and optionally add white ASE on both polarisations.

    ``include_ase`` overrides ``spec.include_ase`` (used for noiseless runs).
    """
    if include_ase is None:
        include_ase = spec.include_ase
    g_amp = 10 ** (spec.gain / 20)
    out = field.stacked() * g_amp
    if include_ase:
        grid = field.grid
        s = ase_density(spec, grid.center_frequency)
        sigma = math.sqrt(s * grid.sample_rate / 2)  # per quadrature
        rng = np.random.default_rng(rng_seed)
        out = out + rng.normal(0, sigma, out.shape) + 1j * rng.normal(0, sigma, out.shape)
    elif spec.gain == 0:
        return field
    return OpticalField.from_stacked(out, field.grid)


__all__ = [
    "BesselFilterSpec",
    "MuxSpec",
    "SplitterSpec",
    "AmplifierSpec",
    "bessel_response",
    "group_delay",
    "apply_filter",
    "wdm_mux",
    "split",
    "ase_density",
    "amplify",
]
