"""Domain types, the crystal-to-spectrum derivation chain, the closed-form
windowed coincidence rate, and curve analyzers (dip FWHM, side-lobe period,
group-index inversion).

Unit system: times in ps, angular frequencies in rad/ps, spectral variance
scales (rho, r, s) in ps^-2, fiber dispersion beta2 in ps^2/km, fiber length
in km, crystal length in mm.  With these choices L*beta2*rho is
dimensionless.  External interfaces carry explicit unit suffixes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from .erfkernel import erf_real, scaled_dip_term

C_MM_PER_PS = 0.299792458
"""Vacuum speed of light in mm/ps."""

C_NM_PER_PS = 299792.458
"""Vacuum speed of light in nm/ps."""

EPM_REL_TOL_DEFAULT = 0.15
"""Default tolerance for extended-phase-matching warnings; a real ppKTP
source with mismatch ~0.12 still counts as approximately phase matched."""


class FilterConvention(str, Enum):
    """How the quoted (rectangular) bandpass width maps onto the Gaussian model.

    FIELD_LEVEL matches the quoted FWHM to the Gaussian field amplitude,
    INTENSITY_LEVEL to the field squared; the resulting variance scales
    differ by exactly a factor of two.
    """

    FIELD_LEVEL = "field"
    INTENSITY_LEVEL = "intensity"


@dataclass(frozen=True)
class SourceParams:
    """Crystal and pump description.

    delta_ng_* are dimensionless group-index differences between pump and
    signal/idler; poling_period_um is metadata only (phase matching is taken
    as zeroed at degeneracy).
    """

    delta_ng_signal: float
    delta_ng_idler: float
    crystal_length_mm: float
    pump_wavelength_nm: float
    pump_sigma_radps: float
    poling_period_um: float = 0.0

    def __post_init__(self):
        if not self.crystal_length_mm > 0:
            raise ValueError("crystal_length_mm must be > 0")
        if not self.pump_wavelength_nm > 0:
            raise ValueError("pump_wavelength_nm must be > 0")
        if self.pump_sigma_radps < 0:
            raise ValueError("pump_sigma_radps must be >= 0")


@dataclass(frozen=True)
class FilterParams:
    """Gaussian-model bandpass filter; fwhm_nm = inf means no filter."""

    center_wavelength_nm: float
    fwhm_nm: float
    convention: FilterConvention = FilterConvention.FIELD_LEVEL

    def __post_init__(self):
        if not self.fwhm_nm > 0:
            raise ValueError("fwhm_nm must be > 0")
        if not self.center_wavelength_nm > 0:
            raise ValueError("center_wavelength_nm must be > 0")
        # accept the plain strings "field" / "intensity" from JSON configs
        object.__setattr__(self, "convention", FilterConvention(self.convention))


@dataclass(frozen=True)
class ChannelParams:
    """Dispersive fiber link; both polarization modes share beta2."""

    fiber_length_km: float
    beta2_ps2_per_km: float

    def __post_init__(self):
        if self.fiber_length_km < 0:
            raise ValueError("fiber_length_km must be >= 0")


@dataclass(frozen=True)
class DetectionParams:
    """Coincidence window half-width T of [-T, T] and splitter reflectivity."""

    window_half_width_ps: float
    eta: float = 0.5

    def __post_init__(self):
        if not self.window_half_width_ps > 0:
            raise ValueError("window_half_width_ps must be > 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must be in [0, 1]")


@dataclass(frozen=True)
class DerivedSpectral:
    """Spectral quantities derived from crystal, pump and filter.

    gamma_* in ps/mm, sigma_pm in rad/ps, r / r_p / s / rho in ps^-2.
    sigma_pm and the gamma_tilde pair are infinite in the exact
    extended-phase-matching limit (gamma_idler == -gamma_signal); r and rho
    remain valid there.
    """

    gamma_signal: float
    gamma_idler: float
    gamma_tilde_signal: float
    gamma_tilde_idler: float
    sigma_pm: float
    r: float
    r_p: float
    s: float
    rho: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be > 0")
        if not self.s > 0:
            raise ValueError("s must be > 0")
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if self.rho > min(self.r, self.s) * (1 + 1e-12):
            raise ValueError("rho must not exceed min(r, s)")
        if math.isfinite(self.gamma_tilde_signal) and math.isfinite(self.gamma_tilde_idler):
            if abs(self.gamma_tilde_signal + self.gamma_tilde_idler - 2.0) > 1e-9:
                raise ValueError("gamma_tilde values must sum to 2")


@dataclass
class HomCurve:
    """A sampled coincidence curve: strictly increasing delays + rates/counts."""

    tau_ps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.tau_ps = np.asarray(self.tau_ps, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.tau_ps.ndim != 1 or self.values.ndim != 1:
            raise ValueError("tau_ps and values must be one-dimensional")
        if self.tau_ps.shape != self.values.shape:
            raise ValueError("tau_ps and values must have equal length")
        if not (np.isfinite(self.tau_ps).all() and np.isfinite(self.values).all()):
            raise ValueError("curve samples must be finite")
        if self.tau_ps.size > 1 and not (np.diff(self.tau_ps) > 0).all():
            raise ValueError("tau_ps must be strictly increasing")
        if (self.values < 0).any():
            raise ValueError("curve values must be nonnegative")

    def __len__(self):
        return self.tau_ps.size


class EpmCheck(NamedTuple):
    mismatch: float
    within_tolerance: bool


class FwhmResult(NamedTuple):
    fwhm_ps: float
    baseline: float
    minimum: float
    left_crossing_ps: float
    right_crossing_ps: float


def derive_gammas(source: SourceParams) -> tuple[float, float]:
    """Group-delay mismatch rates (ps/mm) from the group-index differences."""
    return (
        source.delta_ng_signal / C_MM_PER_PS,
        source.delta_ng_idler / C_MM_PER_PS,
    )


def check_epm(gamma_signal, gamma_idler, rel_tol=EPM_REL_TOL_DEFAULT) -> EpmCheck:
    """Extended-phase-matching check: how far gamma_idler is from -gamma_signal.

    Returns the relative mismatch |gamma_i + gamma_s| / max(|gamma_i|, |gamma_s|)
    and whether it is within rel_tol.
    """
    if not rel_tol > 0:
        raise ValueError("rel_tol must be > 0")
    scale = max(abs(gamma_signal), abs(gamma_idler))
    if scale == 0.0:
        raise ValueError("degenerate phase matching: both gammas are zero")
    mismatch = abs(gamma_idler + gamma_signal) / scale
    return EpmCheck(mismatch, mismatch <= rel_tol)


def filter_variance(filt: FilterParams) -> float:
    """Gaussian variance scale s (ps^-2) matching the quoted filter width.

    The quoted FWHM (nm) at the center wavelength converts to an angular
    frequency width dw = 2*pi*c*dl/lambda^2 (rad/ps); the field-level
    convention gives s = dw^2/(8 ln 2), the intensity-level one twice that.
    """
    d_omega = 2.0 * math.pi * C_NM_PER_PS * filt.fwhm_nm / filt.center_wavelength_nm**2
    if filt.convention is FilterConvention.FIELD_LEVEL:
        return d_omega**2 / (8.0 * math.log(2.0))
    return d_omega**2 / (4.0 * math.log(2.0))


def derive_spectral(source: SourceParams, filt: FilterParams) -> DerivedSpectral:
    """Full derivation chain from crystal/pump/filter to the spectral scales.

    Raises if gamma_idler == gamma_signal (difference bandwidth degenerate).
    In the exact EPM limit gamma_idler == -gamma_signal the sum-coordinate
    quantities sigma_pm and gamma_tilde are flagged infinite while r and rho
    stay valid.
    """
    gamma_s, gamma_i = derive_gammas(source)
    d = source.crystal_length_mm
    if gamma_i == gamma_s:
        raise ValueError("r undefined (degenerate difference bandwidth)")
    gamma_sum = gamma_i + gamma_s
    if gamma_sum == 0.0:
        sigma_pm = math.inf
        gt_i = math.copysign(math.inf, gamma_i)
        gt_s = math.copysign(math.inf, gamma_s)
    else:
        sigma_pm = 4.0 * math.sqrt(6.0) / (gamma_sum * d)
        gt_i = 2.0 * gamma_i / gamma_sum
        gt_s = 2.0 * gamma_s / gamma_sum
    r = 24.0 / ((gamma_i - gamma_s) * d) ** 2
    r_p = source.pump_sigma_radps**2 / 4.0
    s = filter_variance(filt)
    rho = 1.0 / (1.0 / r + 1.0 / s) if math.isfinite(s) else r
    return DerivedSpectral(
        gamma_signal=gamma_s,
        gamma_idler=gamma_i,
        gamma_tilde_signal=gt_s,
        gamma_tilde_idler=gt_i,
        sigma_pm=sigma_pm,
        r=r,
        r_p=r_p,
        s=s,
        rho=rho,
    )


def broadened_rho(rho: float, channel: ChannelParams) -> float:
    """Difference-frequency variance scale after dispersive propagation.

    rho' = rho / (1 + (L*beta2*rho)^2); equals rho iff L*beta2 == 0.
    """
    if not rho > 0:
        raise ValueError("rho must be > 0")
    chirp = channel.fiber_length_km * channel.beta2_ps2_per_km * rho
    return rho / (1.0 + chirp * chirp)


def eta_prime(eta: float) -> float:
    """Splitter visibility constant (2*eta - 1)^2, symmetric about 1/2."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be in [0, 1]")
    return (2.0 * eta - 1.0) ** 2


def _rate_core(tau, rho, rho_prime, eta_p, window_t):
    """Vectorized windowed coincidence rate; preconditions already checked."""
    edge = math.sqrt(0.5 * rho_prime)
    first = 0.25 * (1.0 + eta_p) * (
        erf_real(edge * (window_t + tau)) + erf_real(edge * (window_t - tau))
    )
    y = math.sqrt(0.5 * (rho - rho_prime)) * tau
    with np.errstate(under="ignore"):
        envelope = np.exp(-0.5 * rho_prime * tau * tau)
    second = 0.5 * (1.0 - eta_p) * envelope * scaled_dip_term(edge * window_t, y)
    # The rate is nonnegative analytically; clip round-off-level negatives in
    # the deep tails so the contract holds for scalar and grid paths alike.
    return np.maximum(first - second, 0.0)


def _check_rate_params(rho, rho_prime, eta_p, window_t):
    if not rho_prime > 0:
        raise ValueError("rho_prime must be > 0")
    if rho < rho_prime:
        raise ValueError("rho must be >= rho_prime")
    if not 0.0 <= eta_p <= 1.0:
        raise ValueError("eta_prime must be in [0, 1]")
    if not window_t > 0:
        raise ValueError("window half-width T must be > 0")


def coincidence_rate(tau_ps, rho, rho_prime, eta_p, window_half_width_ps) -> float:
    """Windowed coincidence rate c(tau) of the dispersed photon pair.

    Closed form: (1+eta')/4 * [erf(sqrt(rho'/2)(T+tau)) + erf(sqrt(rho'/2)(T-tau))]
    - (1-eta')/2 * exp(-rho tau^2/2) * Re erf(sqrt(rho'/2) T + i sqrt((rho-rho')/2) tau),
    with the second term evaluated through the damped kernel so the bounded
    product never overflows.  Even in tau; zero at tau = 0 for a balanced
    splitter; tends to 0 as |tau| grows beyond the window.
    """
    _check_rate_params(rho, rho_prime, eta_p, window_half_width_ps)
    return float(_rate_core(float(tau_ps), rho, rho_prime, eta_p, window_half_width_ps))


def coincidence_curve(tau_grid_ps, rho, rho_prime, eta_p, window_half_width_ps) -> HomCurve:
    """Vectorized coincidence_rate over a strictly increasing delay grid."""
    _check_rate_params(rho, rho_prime, eta_p, window_half_width_ps)
    grid = np.asarray(tau_grid_ps, dtype=float)
    if grid.size == 0:
        return HomCurve(np.array([]), np.array([]))
    values = _rate_core(grid, rho, rho_prime, eta_p, window_half_width_ps)
    return HomCurve(grid, values)


def oscillation_period(rho, rho_prime, window_half_width_ps) -> float:
    """Period (ps) of the window-induced side lobes: 2*pi / (T sqrt(rho'(rho-rho')))."""
    if not window_half_width_ps > 0:
        raise ValueError("window half-width T must be > 0")
    if not 0 < rho_prime < rho:
        raise ValueError("no oscillations without dispersion (requires rho > rho_prime > 0)")
    return 2.0 * math.pi / (window_half_width_ps * math.sqrt(rho_prime * (rho - rho_prime)))


def extract_fwhm(curve: HomCurve) -> FwhmResult:
    """Full width at half maximum of a coincidence dip.

    Baseline is the curve maximum over the scanned range, the dip level its
    global minimum; the half level is their midpoint and each crossing is the
    first half-level crossing found moving outward from the minimum, located
    by linear interpolation.  Scale-free and deterministic on oscillatory
    curves.
    """
    tau = curve.tau_ps
    values = curve.values
    if len(curve) < 5:
        raise ValueError("no dip found: need at least 5 points")
    baseline = float(values.max())
    i_min = int(values.argmin())
    minimum = float(values[i_min])
    if i_min == 0 or i_min == values.size - 1 or not minimum < baseline:
        raise ValueError("no dip found")
    half = 0.5 * (baseline + minimum)

    def _cross(direction):
        i = i_min
        while 0 <= i + direction < values.size:
            j = i + direction
            if values[j] >= half:
                # interpolate on the segment between i and j
                frac = (half - values[i]) / (values[j] - values[i])
                return float(tau[i] + frac * (tau[j] - tau[i]))
            i = j
        raise ValueError("dip not resolved in scan range")

    left = _cross(-1)
    right = _cross(+1)
    return FwhmResult(right - left, baseline, minimum, left, right)


def group_index_bounds(rho, filt: FilterParams, crystal_length_mm) -> tuple[float, float]:
    """Invert a fitted rho back to |group-index difference| bounds.

    Removes the filter contribution for each matching convention
    (1/r = 1/rho - 1/s), converts r to |gamma_i - gamma_s| for the given
    crystal length, and applies the symmetric-phase-matching relation
    |dn_g| = c |gamma_i - gamma_s| / 2.  Returns the (low, high) pair for the
    two filter conventions.
    """
    if not rho > 0:
        raise ValueError("rho must be > 0")
    if not crystal_length_mm > 0:
        raise ValueError("crystal_length_mm must be > 0")
    bounds = []
    for convention in (FilterConvention.FIELD_LEVEL, FilterConvention.INTENSITY_LEVEL):
        s = filter_variance(replace(filt, convention=convention))
        if math.isfinite(s):
            if rho >= s:
                raise ValueError("filter narrower than fitted spectrum (rho >= s)")
            r = 1.0 / (1.0 / rho - 1.0 / s)
        else:
            r = rho
        gamma_diff = math.sqrt(24.0 / r) / crystal_length_mm
        bounds.append(C_MM_PER_PS * gamma_diff / 2.0)
    low, high = sorted(bounds)
    return low, high
