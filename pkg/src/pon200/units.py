"""Physical constants and unit conversions used throughout the simulator."""

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT, e as ELECTRON_CHARGE, h as PLANCK

__all__ = [
    "SPEED_OF_LIGHT",
    "ELECTRON_CHARGE",
    "PLANCK",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "wavelength_to_frequency",
    "frequency_to_wavelength",
    "bandwidth_nm_to_hz",
    "alpha_db_to_neper",
]


def dbm_to_watt(p_dbm):
    return 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def watt_to_dbm(p_w):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(p_w, dtype=float) / 1e-3)


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


def wavelength_to_frequency(wavelength_nm):
    """Vacuum wavelength [nm] -> optical frequency [Hz]."""
    return SPEED_OF_LIGHT / (np.asarray(wavelength_nm, dtype=float) * 1e-9)


def frequency_to_wavelength(frequency_hz):
    """Optical frequency [Hz] -> vacuum wavelength [nm]."""
    return SPEED_OF_LIGHT / np.asarray(frequency_hz, dtype=float) * 1e9


def bandwidth_nm_to_hz(bandwidth_nm, wavelength_nm):
    """Small-interval conversion df = c * dlambda / lambda**2."""
    lam = np.asarray(wavelength_nm, dtype=float) * 1e-9
    return SPEED_OF_LIGHT * np.asarray(bandwidth_nm, dtype=float) * 1e-9 / lam**2


def alpha_db_to_neper(alpha_db_per_km):
    """Power attenuation dB/km -> 1/km (power e-folding)."""
    return alpha_db_per_km * np.log(10.0) / 10.0
