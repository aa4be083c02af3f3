"""
Single-mode fiber: loss, chromatic dispersion (beta2, beta3), first-order PMD via
a coarse-step waveplate model, and Kerr nonlinearity, solved with the symmetric
split-step Fourier method.

Sign convention: envelopes are ``A(t) exp(+j w0 t)`` and numpy's FFT pairs
``A(t) = sum A(f) exp(+j 2 pi f t)``. The linear operator for a step ``dz`` is
``exp((-j beta2 w^2 / 2 - j beta3 w^3 / 6 - alpha / 2) dz)`` and the nonlinear one
``exp(-j gamma |A|^2 dz)``; with ``beta2 < 0`` this supports bright solitons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .core import ConfigError, OpticalField, _require
from .units import SPEED_OF_LIGHT, alpha_db_to_neper

_C_NM_PER_PS = SPEED_OF_LIGHT * 1e-3  # 2.998e5 nm/ps


@dataclass(frozen=True)
class FiberSpec:
    length: float = 20.0  # km
    attenuation: float = 0.2  # dB/km
    dispersion_D: float = 16.75  # ps/(nm km)
    dispersion_slope: float = 0.075  # ps/(nm^2 km)
    pmd_coefficient: float = 0.5  # ps/sqrt(km)
    nonlinear_gamma: float = 1.3  # 1/(W km)
    reference_wavelength: float = 1550.0  # nm

    def __post_init__(self):
        _require(self.length >= 0, "FiberSpec.length", f"must be >= 0, got {self.length}")
        _require(self.attenuation >= 0, "FiberSpec.attenuation", "must be >= 0")
        _require(self.pmd_coefficient >= 0, "FiberSpec.pmd_coefficient", "must be >= 0")
        _require(self.nonlinear_gamma >= 0, "FiberSpec.nonlinear_gamma", "must be >= 0")
        _require(self.reference_wavelength > 0, "FiberSpec.reference_wavelength", "must be > 0")

    @property
    def loss_db(self):
        return self.attenuation * self.length


@dataclass(frozen=True)
class StepConfig:
    max_step: float = 0.1  # km
    nonlinear_phase_cap: float = 0.005  # rad
    pmd_section_length: float = 0.5  # km

    def __post_init__(self):
        _require(self.max_step > 0, "StepConfig.max_step", "must be > 0")
        _require(
            0 < self.nonlinear_phase_cap <= 0.05,
            "StepConfig.nonlinear_phase_cap",
            "must be in (0, 0.05]",
        )
        _require(self.pmd_section_length > 0, "StepConfig.pmd_section_length", "must be > 0")


@dataclass(frozen=True, eq=False)
class PmdRealization:
    """Per-section Jones rotations (n, 2, 2), DGDs [ps] and section lengths [km]."""

    rotations: np.ndarray
    dgd: np.ndarray
    section_lengths: np.ndarray
    seed: object = None

    @property
    def n_sections(self):
        return len(self.dgd)

    @property
    def is_trivial(self):
        return not np.any(self.dgd) and np.allclose(self.rotations, np.eye(2))

    def jones_matrix(self, angular_frequency):
        """Total Jones matrix at a baseband angular frequency [rad/ps]."""
        t = np.eye(2, dtype=complex)
        for r, tau in zip(self.rotations, self.dgd):
            d = np.diag([np.exp(-0.5j * angular_frequency * tau), np.exp(0.5j * angular_frequency * tau)])
            t = d @ r @ t
        return t

    def total_dgd(self, delta_omega=2 * np.pi * 1e-3):
        """Differential group delay [ps] by Jones-matrix eigenanalysis."""
        u = self.jones_matrix(delta_omega) @ self.jones_matrix(0.0).conj().T
        ev = np.linalg.eigvals(u)
        return abs(np.angle(ev[0] / ev[1])) / delta_omega


def dispersion_to_beta2(D, wavelength):
    """beta2 [ps^2/km] from D [ps/(nm km)] at ``wavelength`` [nm]."""
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    return -D * wavelength**2 / (2 * np.pi * _C_NM_PER_PS)


def slope_to_beta3(D, S, wavelength):
    """beta3 [ps^3/km] from D and dispersion slope S [ps/(nm^2 km)]."""
    k = wavelength / (2 * np.pi * _C_NM_PER_PS)
    return k**2 * (wavelength**2 * S + 2 * wavelength * D)


def dispersion_at(fiber, center_frequency):
    """(beta2, beta3) at the grid centre [ps^2/km, ps^3/km]."""
    lam_ref = fiber.reference_wavelength
    b2 = dispersion_to_beta2(fiber.dispersion_D, lam_ref)
    b3 = slope_to_beta3(fiber.dispersion_D, fiber.dispersion_slope, lam_ref)
    f_ref = SPEED_OF_LIGHT / (lam_ref * 1e-9)
    dw = 2 * np.pi * (center_frequency - f_ref) * 1e-12  # rad/ps
    return b2 + b3 * dw, b3


def _random_su2(rng, n):
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    a = q[:, 0] + 1j * q[:, 1]
    b = q[:, 2] + 1j * q[:, 3]
    r = np.empty((n, 2, 2), dtype=complex)
    r[:, 0, 0] = a
    r[:, 0, 1] = -b.conj()
    r[:, 1, 0] = b
    r[:, 1, 1] = a.conj()
    return r


_MAXWELL_MEAN = math.sqrt(8 / (3 * math.pi))  # mean DGD / rms DGD
_DGD_SPREAD = 0.2  # relative spread of per-section DGD


def _sections(length, section_length):
    n = max(1, math.ceil(length / section_length - 1e-9)) if length > 0 else 0
    if n == 0:
        return np.zeros(0)
    lens = np.full(n, section_length)
    lens[-1] = length - section_length * (n - 1)
    return lens


def sample_pmd(fiber, cfg, seed):
    """Draw a waveplate PMD realization.

    Section DGDs are Gaussian around a mean chosen so that the ensemble-mean
    total DGD equals ``pmd_coefficient * sqrt(length)``; sections are joined by
    Haar-random polarisation rotations.
    """
    lens = _sections(fiber.length, cfg.pmd_section_length)
    n = len(lens)
    if fiber.pmd_coefficient == 0 or n == 0:
        return PmdRealization(
            np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy(), np.zeros(n), lens, seed
        )
    rng = np.random.default_rng(seed)
    # sum of E[tau_k^2] = (3 pi / 8) coeff^2 L for a Maxwellian with the target mean
    mean_tau = fiber.pmd_coefficient * np.sqrt(lens) / _MAXWELL_MEAN / math.sqrt(1 + _DGD_SPREAD**2)
    tau = np.abs(mean_tau * (1 + _DGD_SPREAD * rng.normal(size=n)))
    return PmdRealization(_random_su2(rng, n), tau, lens, seed)


class PropagationError(RuntimeError):
    pass


def _occupied_fraction_beyond(spec_power, mask):
    total = spec_power.sum()
    return spec_power[mask].sum() / total if total > 0 else 0.0


def check_wraparound(field, fiber, limit_db=-40.0):
    """Energy fraction whose dispersive delay exceeds half the window must be < limit."""
    grid = field.grid
    b2, b3 = dispersion_at(fiber, grid.center_frequency)
    w = grid.angular_frequency * 1e-12  # rad/ps
    delay = np.abs(b2 * w + 0.5 * b3 * w**2) * fiber.length  # ps
    half_window = grid.duration * 1e12 / 2
    spec_power = np.sum(np.abs(sfft.fft(field.stacked(), axis=-1)) ** 2, axis=0)
    frac = _occupied_fraction_beyond(spec_power, delay > half_window)
    if frac > 10 ** (limit_db / 10):
        raise ConfigError(
            f"propagate: grid too short for {fiber.length} km of dispersion "
            f"({10 * np.log10(frac):.1f} dB of energy wraps around)"
        )


def propagate(field, fiber, cfg=None, pmd=None, check=True):
    """Symmetric split-step solution of the coupled NLSE (Manakov nonlinearity).

    Parameters
    ----------
    field : OpticalField
    fiber : FiberSpec
    cfg : StepConfig, optional
    pmd : PmdRealization, optional
        ``None`` disables PMD. Its sections must tile ``fiber.length``.
    check : bool
        Run the dispersion wrap-around precondition.

    Returns
    -------
    OpticalField
    """
    cfg = cfg or StepConfig()
    if fiber.length == 0:
        return field
    if check:
        check_wraparound(field, fiber)
    grid = field.grid
    b2, b3 = dispersion_at(fiber, grid.center_frequency)
    w = grid.angular_frequency * 1e-12  # rad/ps
    alpha = alpha_db_to_neper(fiber.attenuation)
    lin = -0.5j * b2 * w**2 - 1j / 6 * b3 * w**3 - alpha / 2  # per km

    if pmd is None or pmd.is_trivial:
        sections = [(None, 0.0, fiber.length)]
    else:
        if abs(pmd.section_lengths.sum() - fiber.length) > 1e-9 * max(1.0, fiber.length):
            raise ConfigError("PmdRealization sections do not match FiberSpec.length")
        sections = list(zip(pmd.rotations, pmd.dgd, pmd.section_lengths))

    a = field.stacked()
    scalar = sections[0][0] is None and not np.any(a[1])
    if scalar:
        a = a[:1]
    gamma = fiber.nonlinear_gamma
    for rot, tau, length in sections:
        if rot is not None:
            a = np.einsum("ij,jn->in", rot, a)
        op = np.broadcast_to(lin, (a.shape[0], len(w)))
        if tau:
            bire = np.stack([-0.5j * w * tau / length, 0.5j * w * tau / length])
            op = op + bire
        a = _split_step(a, op, gamma, length, cfg)
    if scalar:
        a = np.vstack([a, np.zeros_like(a)])
    return OpticalField.from_stacked(a, grid)


_LADDER = 32  # geometric step ladder, points per octave


def _next_step(a, gamma, remaining, cfg):
    """Adaptive step and its ladder index (``None`` when off the ladder).

    Steps are rounded down onto ``max_step * 2**(-k / _LADDER)`` so the linear
    operators can be cached; rounding down keeps the phase cap satisfied.
    """
    dz, k = cfg.max_step, 0
    if gamma > 0:
        peak = float(np.max(np.sum(a.real**2 + a.imag**2, axis=0)))
        if peak > 0:
            bound = cfg.nonlinear_phase_cap / (gamma * peak)
            if bound < dz:
                k = int(np.ceil(_LADDER * np.log2(dz / bound) - 1e-9))
                dz = cfg.max_step * 2.0 ** (-k / _LADDER)
    if dz >= remaining * (1 - 1e-12):
        return remaining, None
    return dz, k


class _LinearCache:
    """Linear propagators ``exp(op * h)`` keyed by ladder index pairs."""

    def __init__(self, op, size=16):
        self.op = op
        self.size = size
        self.store = {}

    def __call__(self, h, key):
        if key is None:
            return np.exp(self.op * h)
        hit = self.store.pop(key, None)
        if hit is None:
            hit = np.exp(self.op * h)
            if len(self.store) >= self.size:
                self.store.pop(next(iter(self.store)))
        self.store[key] = hit
        return hit


def _split_step(a, op, gamma, length, cfg):
    """Half-linear / nonlinear / half-linear, merging adjacent linear halves."""
    if gamma == 0:
        return sfft.ifft(sfft.fft(a, axis=-1) * np.exp(op * length), axis=-1)
    lin = _LinearCache(op)
    z = 0.0
    dz, k = _next_step(a, gamma, length, cfg)
    a = sfft.ifft(sfft.fft(a, axis=-1) * lin(dz / 2, None if k is None else ("half", k)), axis=-1)
    n = 0
    while True:
        p = np.sum(a.real**2 + a.imag**2, axis=0)
        a *= np.exp(-1j * gamma * dz * p)
        z += dz
        n += 1
        remaining = length - z
        if remaining <= 1e-12 * length:
            key = None if k is None else ("half", k)
            a = sfft.ifft(sfft.fft(a, axis=-1, overwrite_x=True) * lin(dz / 2, key), axis=-1)
            break
        dz_next, k_next = _next_step(a, gamma, remaining, cfg)
        key = None if k is None or k_next is None else (k, k_next)
        a = sfft.fft(a, axis=-1, overwrite_x=True)
        a *= lin((dz + dz_next) / 2, key)
        a = sfft.ifft(a, axis=-1, overwrite_x=True)
        dz, k = dz_next, k_next
        if n % 64 == 0 and not np.all(np.isfinite(a)):
            raise PropagationError(f"non-finite samples after {z:.3f} km")
    if not np.all(np.isfinite(a)):
        raise PropagationError("non-finite samples at fiber output")
    return a


__all__ = [
    "FiberSpec",
    "StepConfig",
    "PmdRealization",
    "PropagationError",
    "dispersion_to_beta2",
    "slope_to_beta3",
    "dispersion_at",
    "sample_pmd",
    "check_wraparound",
    "propagate",
]
