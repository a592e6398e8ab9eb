"""Thermodynamic helpers shared by the scenario generator and the column kernel.

Saturation uses Tetens-type fits rather than lookup tables so that the
kernel stays a pure function of its inputs.
"""
import math

import numpy as np
from numba import njit

P0 = 1.0e5  # reference pressure for potential temperature (Pa)
RD = 287.04  # dry air gas constant (J/kg/K)
CP = 1004.5  # specific heat at constant pressure (J/kg/K)
KAPPA = RD / CP
LV = 2.501e6  # latent heat of vaporization (J/kg)
LS = 2.834e6  # latent heat of sublimation (J/kg)
LF = LS - LV  # latent heat of fusion (J/kg)
EPS_RATIO = 0.622  # Rd / Rv
T0C = 273.15


@njit(nogil=True, cache=True)
def exner(p):
    return (p / P0) ** KAPPA


@njit(nogil=True, cache=True)
def saturation_vapour_pressure(T):
    """Vapour pressure over liquid water (Pa)."""
    return 610.78 * math.exp(17.27 * (T - T0C) / (T - 35.86))


@njit(nogil=True, cache=True)
def saturation_vapour_pressure_ice(T):
    """Vapour pressure over ice (Pa)."""
    return 610.78 * math.exp(21.875 * (T - T0C) / (T - 7.66))


@njit(nogil=True, cache=True)
def qsat_liquid(T, p):
    es = saturation_vapour_pressure(T)
    # clamp keeps the denominator positive at very low pressure
    es = min(es, 0.5 * p)
    return EPS_RATIO * es / (p - es)


@njit(nogil=True, cache=True)
def qsat_ice(T, p):
    es = min(saturation_vapour_pressure_ice(T), 0.5 * p)
    return EPS_RATIO * es / (p - es)


def air_density(pressure, theta):
    """Dry-air density from pressure and potential temperature (vectorised)."""
    pressure = np.asarray(pressure, dtype=np.float64)
    temperature = np.asarray(theta, dtype=np.float64) * (pressure / P0) ** KAPPA
    return pressure / (RD * temperature)
