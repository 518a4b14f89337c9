"""Brute-force numerical reference for the windowed coincidence rate.

Evaluates the time-resolved two-photon rate directly from the dispersed
difference amplitude and integrates it over the coincidence window with an
adaptive Simpson rule.  Exists to validate the closed-form model: it shares
no code with the closed form beyond the broadened-width helper used in its
own contracts.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ChannelParams, broadened_rho


class QuadratureMethod(str, Enum):
    ADAPTIVE_SIMPSON = "adaptive-simpson"
    FIXED_SIMPSON = "fixed-simpson"


@dataclass(frozen=True)
class QuadratureSpec:
    """Integrator configuration.

    For the adaptive rule max_subdivisions is the dyadic refinement depth;
    for the fixed rule the panel count is 2**max_subdivisions.
    """

    method: QuadratureMethod = QuadratureMethod.ADAPTIVE_SIMPSON
    abs_tol: float = 1e-12
    rel_tol: float = 1e-9
    max_subdivisions: int = 24

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


class QuadratureError(RuntimeError):
    """Raised when the integrator cannot reach the requested tolerance.

    Carries the achieved estimate and its error bound.
    """

    def __init__(self, message, estimate, error_bound):
        super().__init__(f"{message} (estimate={estimate!r}, error_bound={error_bound!r})")
        self.estimate = estimate
        self.error_bound = error_bound


def max_workers() -> int:
    """Parallelism cap for grid evaluation; DISPHOM_THREADS overrides."""
    env = os.environ.get("DISPHOM_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError("DISPHOM_THREADS must be an integer") from exc
        return max(1, n)
    return min(4, os.cpu_count() or 1)


def beta_minus_time(t_ps, rho, fiber_length_km, beta2_ps2_per_km):
    """Time-domain difference amplitude after dispersion (complex, unit L2 norm).

    The frequency-domain amplitude is a chirped Gaussian exp(-a w^2) with
    a = (1/rho + i L beta2)/2; its Fourier transform is proportional to
    a^(-1/2) exp(-t^2/(4a)).  Normalized so that the intensity integrates to
    one, which makes |amplitude|^2 = sqrt(rho'/pi) exp(-rho' t^2) with rho'
    the broadened width.
    """
    if not rho > 0:
        raise ValueError("rho must be > 0")
    t = np.asarray(t_ps, dtype=float)
    a = 0.5 * (1.0 / rho + 1j * fiber_length_km * beta2_ps2_per_km)
    rho_p = broadened_rho(rho, ChannelParams(fiber_length_km, beta2_ps2_per_km))
    norm = math.sqrt(abs(a)) * (rho_p / math.pi) ** 0.25
    with np.errstate(under="ignore"):
        amp = norm / np.sqrt(a) * np.exp(-t * t / (4.0 * a))
    if np.isscalar(t_ps):
        return complex(amp)
    return amp


def differential_rate(tau_ps, sigma_ps, eta, rho, fiber_length_km, beta2_ps2_per_km):
    """Time-resolved rate density c(tau, sigma) before the window integral.

    c(tau, sigma) = (1/sqrt(2)) |eta b((tau+sigma)/sqrt2) - (1-eta) b((tau-sigma)/sqrt2)|^2,
    with b the unit-normalized difference amplitude; the sum-coordinate
    intensity integral is unity and is absorbed.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be in [0, 1]")
    tau = np.asarray(tau_ps, dtype=float)
    sigma = np.asarray(sigma_ps, dtype=float)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    plus = beta_minus_time((tau + sigma) * inv_sqrt2, rho, fiber_length_km, beta2_ps2_per_km)
    minus = beta_minus_time((tau - sigma) * inv_sqrt2, rho, fiber_length_km, beta2_ps2_per_km)
    with np.errstate(under="ignore"):
        amp = eta * plus - (1.0 - eta) * minus
        out = inv_sqrt2 * (amp.real**2 + amp.imag**2)
    if np.isscalar(tau_ps) and np.isscalar(sigma_ps):
        return float(out)
    return out


def _simpson_panels(lo_edges, hi_edges, f_lo, f_mid, f_hi):
    width = hi_edges - lo_edges
    return width / 6.0 * (f_lo + 4.0 * f_mid + f_hi)


def _adaptive_simpson(f, lo, hi, abs_tol, rel_tol, max_levels, seeds=()):
    """Adaptive Simpson over [lo, hi]; level-synchronous, numpy-batched.

    Returns (integral, error_bound).  seeds are extra initial breakpoints:
    the error estimator only sees structure its nodes sample, so narrow
    features and fast oscillations must be resolved by the starting grid
    (a uniform grid can hit an integer panels-per-period resonance and
    silently alias an oscillatory integrand).
    """
    base = np.linspace(lo, hi, 65)
    extra = np.asarray([s for s in np.atleast_1d(np.asarray(seeds, dtype=float)).ravel()
                        if lo < s < hi], dtype=float)
    grid = np.unique(np.concatenate([base, extra]))
    a = grid[:-1]
    b = grid[1:]
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)

    total_width = hi - lo
    accepted = []
    accepted_err = []
    estimate = float(np.sum(_simpson_panels(a, b, fa, fm, fb)))

    for _level in range(max_levels):
        if a.size == 0:
            break
        ml = 0.5 * (a + m)
        mr = 0.5 * (m + b)
        fml = f(ml)
        fmr = f(mr)
        s1 = _simpson_panels(a, b, fa, fm, fb)
        s2 = _simpson_panels(a, m, fa, fml, fm) + _simpson_panels(m, b, fm, fmr, fb)
        err = np.abs(s2 - s1) / 15.0
        tol = max(abs_tol, rel_tol * abs(estimate)) * (b - a) / total_width
        done = err <= tol
        if done.any():
            accepted.append(s2[done] + (s2[done] - s1[done]) / 15.0)
            accepted_err.append(err[done])
        keep = ~done
        if not keep.any():
            a = a[:0]
            break
        # split surviving panels in two for the next level
        a, m_old, b, fa, fm_old, fb = a[keep], m[keep], b[keep], fa[keep], fm[keep], fb[keep]
        fml, fmr = fml[keep], fmr[keep]
        ml, mr = ml[keep], mr[keep]
        a = np.concatenate([a, m_old])
        b = np.concatenate([m_old, b])
        fa = np.concatenate([fa, fm_old])
        fb = np.concatenate([fm_old, fb])
        m = np.concatenate([ml, mr])
        fm = np.concatenate([fml, fmr])
        estimate = float(
            sum(np.sum(c) for c in accepted) + np.sum(_simpson_panels(a, b, fa, fm, fb))
        )

    integral = float(sum(np.sum(c) for c in accepted))
    bound = float(sum(np.sum(c) for c in accepted_err))
    if a.size:
        remainder = _simpson_panels(a, b, fa, fm, fb)
        estimate = integral + float(np.sum(remainder))
        raise QuadratureError(
            f"quadrature did not converge within {max_levels} subdivision levels",
            estimate,
            bound + float(np.sum(np.abs(remainder))),
        )
    return integral, bound


def _fixed_simpson(f, lo, hi, abs_tol, rel_tol, depth):
    """Composite Simpson with 2**depth panels plus a halved-step error check."""
    n = 2 ** min(depth, 22)
    grid = np.linspace(lo, hi, 2 * n + 1)
    fv = f(grid)
    h = (hi - lo) / (2 * n)
    fine = h / 3.0 * (fv[0] + fv[-1] + 4.0 * np.sum(fv[1::2]) + 2.0 * np.sum(fv[2:-1:2]))
    coarse = (2 * h) / 3.0 * (
        fv[0] + fv[-1] + 4.0 * np.sum(fv[2::4]) + 2.0 * np.sum(fv[4:-1:4])
    )
    bound = abs(fine - coarse) / 15.0
    if bound > max(abs_tol, rel_tol * abs(fine)):
        raise QuadratureError(
            f"fixed Simpson with {n} panels did not reach tolerance", float(fine), float(bound)
        )
    return float(fine), float(bound)


def windowed_rate_numeric(
    tau_ps,
    window_half_width_ps,
    eta,
    rho,
    fiber_length_km,
    beta2_ps2_per_km,
    spec: QuadratureSpec | None = None,
):
    """Window integral of the time-resolved rate: c(tau) = int_{-T}^{T} c(tau, s) ds.

    tau_ps may be a scalar or a grid; grid rows are independent and evaluated
    concurrently up to the DISPHOM_THREADS cap.  Matches the closed-form rate
    up to one global positive scale (which is unity for this normalization).
    """
    if not window_half_width_ps > 0:
        raise ValueError("window half-width T must be > 0")
    spec = spec or QuadratureSpec()
    window_t = float(window_half_width_ps)

    # Feature scales of the integrand itself: the pair-amplitude intensity has
    # bumps of width 1/sqrt(rho') centered at sigma = -/+tau, and the
    # interference term carries a chirp phase whose local wavenumber in sigma
    # is 2|tau| Im(1/(4a)).  Both must be resolved by the initial grid.
    a_chirp = 0.5 * (1.0 / rho + 1j * fiber_length_km * beta2_ps2_per_km)
    rho_p = broadened_rho(rho, ChannelParams(fiber_length_km, beta2_ps2_per_km))
    bump_width = 1.0 / math.sqrt(rho_p)

    def _initial_seeds(tau):
        seeds = []
        for center in (-tau, tau):
            seeds.extend(center + bump_width * np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]))
        wavenumber = 2.0 * abs(tau) * abs((0.25 / a_chirp).imag)
        # where the interference envelope exp(-rho'(tau^2+sigma^2)/2) still matters
        cross_exponent = 0.5 * rho_p * tau * tau
        if wavenumber > 0.0 and cross_exponent < 50.0:
            sigma_cut = math.sqrt(2.0 * (50.0 - cross_exponent) / rho_p)
            half_span = min(window_t, sigma_cut)
            # ~6.1 nodes per oscillation period; non-integer to avoid resonance
            step = 2.0 * math.pi / (wavenumber * 6.1)
            count = int(min(2.0 * half_span / step, 2e5))
            if count > 1:
                seeds.extend(np.linspace(-half_span, half_span, count))
        return np.asarray(seeds)

    def one(tau):
        def integrand(sigma):
            return differential_rate(
                np.full_like(sigma, tau), sigma, eta, rho, fiber_length_km, beta2_ps2_per_km
            )

        if spec.method is QuadratureMethod.ADAPTIVE_SIMPSON:
            value, _ = _adaptive_simpson(
                integrand,
                -window_t,
                window_t,
                spec.abs_tol,
                spec.rel_tol,
                spec.max_subdivisions,
                seeds=_initial_seeds(tau),
            )
        else:
            value, _ = _fixed_simpson(
                integrand, -window_t, window_t, spec.abs_tol, spec.rel_tol, spec.max_subdivisions
            )
        return value

    if np.isscalar(tau_ps):
        return one(float(tau_ps))
    taus = np.asarray(tau_ps, dtype=float)
    workers = max_workers()
    if workers > 1 and taus.size > 8:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, taus.tolist()))
    else:
        values = [one(t) for t in taus.tolist()]
    return np.asarray(values)


def sinc_gaussian_check(x_values):
    """Deviation report for the small-argument Gaussian stand-in of sinc.

    Returns (max_deviation, x_at_max) of |sinc(x) - exp(-x^2/6)| over the
    given points.  The replacement is good to <0.01 for |x| <= 1.5 and
    useless in the tails (hence the bandpass filter in the derivation).
    """
    x = np.asarray(x_values, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("x_values must be finite")
    sinc = np.sinc(x / np.pi)  # numpy sinc is sin(pi x)/(pi x)
    dev = np.abs(sinc - np.exp(-x * x / 6.0))
    i = int(dev.argmax())
    return float(dev[i]), float(x[i])
