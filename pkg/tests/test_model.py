"""Derivation chain, closed-form rate properties, and curve analyzers."""

import math

import numpy as np
import pytest

from disphom import (
    C_MM_PER_PS,
    ChannelParams,
    FilterConvention,
    FilterParams,
    HomCurve,
    SourceParams,
    broadened_rho,
    check_epm,
    coincidence_curve,
    coincidence_rate,
    derive_gammas,
    derive_spectral,
    eta_prime,
    extract_fwhm,
    filter_variance,
    group_index_bounds,
    oscillation_period,
)
from conftest import DN_IDLER_REF, DN_SIGNAL_REF, RHO_REF, BETA2_REF, reference_filter


def _source(dn_s=DN_SIGNAL_REF, dn_i=DN_IDLER_REF, d=10.0, sigma_p=2.0):
    return SourceParams(dn_s, dn_i, d, 775.0, sigma_p, 46.2)


# --- derivation chain --------------------------------------------------------

def test_derive_gammas_zero():
    gs, gi = derive_gammas(_source(0.0, 0.0))
    assert gs == 0.0 and gi == 0.0


def test_derive_gammas_reference_crystal():
    gs, gi = derive_gammas(_source())
    assert gs == pytest.approx(0.15710868883832962, rel=1e-14)
    assert gi == pytest.approx(-0.13842909950723312, rel=1e-14)


def test_derive_gammas_unit_case():
    gs, _ = derive_gammas(_source(C_MM_PER_PS, 0.1))
    assert gs == 1.0


def test_check_epm_exact():
    res = check_epm(1.0, -1.0)
    assert res.mismatch == 0.0 and res.within_tolerance


def test_check_epm_reference_crystal():
    gs, gi = derive_gammas(_source())
    res = check_epm(gs, gi)
    assert res.mismatch == pytest.approx(0.11889596602972394, rel=1e-12)
    assert res.within_tolerance  # default tolerance admits the real crystal


def test_check_epm_anti():
    res = check_epm(1.0, 1.0)
    assert res.mismatch == 2.0 and not res.within_tolerance


def test_check_epm_degenerate():
    with pytest.raises(ValueError, match="degenerate phase matching"):
        check_epm(0.0, 0.0)


def test_filter_variance_values():
    filt = reference_filter()
    # d_omega = 2 pi c dl / l^2 = 9.408457... rad/ps at 12 nm / 1550 nm
    assert filter_variance(filt) == pytest.approx(15.963252895623894, rel=1e-12)
    intensity = filter_variance(reference_filter(convention=FilterConvention.INTENSITY_LEVEL))
    assert intensity == pytest.approx(2.0 * filter_variance(filt), rel=1e-15)


def test_derive_spectral_epm_symmetric():
    g = 0.03
    src = SourceParams(g, -g, 5.0, 775.0, 1.0)
    ds = derive_spectral(src, reference_filter())
    # r = 6 / (gamma d)^2 under exact symmetry
    gamma = g / C_MM_PER_PS
    assert ds.r == pytest.approx(6.0 / (gamma * 5.0) ** 2, rel=1e-12)
    assert math.isinf(ds.sigma_pm)
    assert not math.isfinite(ds.gamma_tilde_signal)
    assert ds.rho < ds.r  # filter always narrows


def test_derive_spectral_reference_crystal():
    ds = derive_spectral(_source(), reference_filter())
    assert ds.r == pytest.approx(2.747800535249048, rel=1e-12)
    assert ds.gamma_tilde_signal + ds.gamma_tilde_idler == pytest.approx(2.0, abs=1e-12)
    assert ds.r_p == pytest.approx(1.0)  # sigma_p^2 / 4 with sigma_p = 2
    assert 1.0 / ds.rho == pytest.approx(1.0 / ds.r + 1.0 / ds.s, rel=1e-12)


def test_derive_spectral_no_filter_limit():
    ds = derive_spectral(_source(), FilterParams(1550.0, math.inf))
    assert ds.rho == ds.r


def test_derive_spectral_degenerate_difference():
    with pytest.raises(ValueError, match="degenerate difference bandwidth"):
        derive_spectral(_source(0.02, 0.02), reference_filter())


def test_broadened_rho_no_fiber():
    assert broadened_rho(3.7, ChannelParams(0.0, 21.39)) == 3.7


def test_broadened_rho_reference_config():
    got = broadened_rho(RHO_REF, ChannelParams(10.0, BETA2_REF))
    assert got == pytest.approx(1.5042248936175193e-06, rel=1e-12)


def test_broadened_rho_unit_chirp():
    rho = 5.0
    channel = ChannelParams(2.0, 1.0 / (2.0 * rho))
    assert broadened_rho(rho, channel) == pytest.approx(rho / 2.0, rel=1e-12)


def test_broadened_rho_even_in_beta2():
    a = broadened_rho(7.0, ChannelParams(3.0, 8.5))
    b = broadened_rho(7.0, ChannelParams(3.0, -8.5))
    assert a == b


def test_eta_prime_values():
    assert eta_prime(0.5) == 0.0
    assert eta_prime(0.0) == 1.0
    assert eta_prime(1.0) == 1.0
    assert eta_prime(0.75) == pytest.approx(0.25, rel=1e-15)
    assert eta_prime(0.3) == eta_prime(0.7)


def test_eta_prime_domain():
    with pytest.raises(ValueError):
        eta_prime(1.2)


# --- coincidence rate ---------------------------------------------------------

def test_rate_perfect_dip_exact_zero():
    rng = np.random.default_rng(5)
    for _ in range(100):
        rho = float(np.exp(rng.uniform(np.log(0.1), np.log(100.0))))
        channel = ChannelParams(rng.uniform(0.0, 30.0), rng.uniform(-30.0, 30.0))
        rho_p = broadened_rho(rho, channel)
        window = float(np.exp(rng.uniform(np.log(10.0), np.log(2000.0))))
        assert coincidence_rate(0.0, rho, rho_p, eta_prime(0.5), window) == 0.0


def test_rate_dispersionless_gaussian_dip():
    rho, window = RHO_REF, 5000.0
    taus = np.linspace(-1.2, 1.2, 41)
    curve = coincidence_curve(taus, rho, rho, 0.0, window)
    reference = 0.5 * (1.0 - np.exp(-rho * taus**2 / 2.0))
    assert np.abs(curve.values - reference).max() <= 1e-12


def test_rate_symmetric_in_tau():
    rho_p = broadened_rho(RHO_REF, ChannelParams(10.0, BETA2_REF))
    rng = np.random.default_rng(9)
    taus = rng.uniform(0.0, 900.0, 200)
    for tau in taus:
        plus = coincidence_rate(tau, RHO_REF, rho_p, 0.01, 400.0)
        minus = coincidence_rate(-tau, RHO_REF, rho_p, 0.01, 400.0)
        assert abs(plus - minus) <= 1e-12


def test_rate_nonnegative_and_vanishing_tails():
    rho_p = broadened_rho(RHO_REF, ChannelParams(10.0, BETA2_REF))
    taus = np.linspace(-2000.0, 2000.0, 801)
    curve = coincidence_curve(taus, RHO_REF, rho_p, 0.0, 400.0)
    assert (curve.values >= 0.0).all()
    plateau = curve.values.max()
    far = 400.0 + 20.0 / math.sqrt(rho_p)
    assert coincidence_rate(far, RHO_REF, rho_p, 0.0, 400.0) < 1e-3 * plateau


def test_rate_monotone_in_window():
    rho_p = broadened_rho(RHO_REF, ChannelParams(10.0, BETA2_REF))
    windows = np.linspace(50.0, 1500.0, 30)
    for tau in (0.0, 35.0, 240.0, 800.0):
        values = [coincidence_rate(tau, RHO_REF, rho_p, 0.04, w) for w in windows]
        assert (np.diff(values) >= -1e-14).all()


def test_rate_infinite_window_is_dispersion_free():
    # for very wide windows the curve collapses onto the beta2-independent
    # Gaussian dip (local dispersion cancellation)
    for length in (1.0, 10.0, 29.0):
        rho_p = broadened_rho(RHO_REF, ChannelParams(length, BETA2_REF))
        window = 100.0 / math.sqrt(rho_p)
        taus = np.linspace(-5.0 / math.sqrt(RHO_REF), 5.0 / math.sqrt(RHO_REF), 101)
        eta_p = eta_prime(0.47)
        curve = coincidence_curve(taus, RHO_REF, rho_p, eta_p, window)
        reference = (1 + eta_p) / 2.0 - (1 - eta_p) / 2.0 * np.exp(-RHO_REF * taus**2 / 2.0)
        assert np.abs(curve.values - reference).max() <= 1e-6


def test_rate_preconditions():
    with pytest.raises(ValueError):
        coincidence_rate(0.0, 1.0, 2.0, 0.0, 100.0)  # rho < rho'
    with pytest.raises(ValueError):
        coincidence_rate(0.0, 1.0, 1.0, 1.5, 100.0)  # eta' out of range
    with pytest.raises(ValueError):
        coincidence_rate(0.0, 1.0, 1.0, 0.0, -5.0)  # bad window


def test_curve_empty_and_single():
    assert len(coincidence_curve([], 1.0, 1.0, 0.0, 10.0)) == 0
    single = coincidence_curve([0.0], 1.0, 1.0, 0.0, 10.0)
    assert single.values[0] == 0.0


def test_curve_matches_looped_rate():
    rho_p = broadened_rho(RHO_REF, ChannelParams(15.0, BETA2_REF))
    taus = np.linspace(-700.0, 700.0, 173)
    curve = coincidence_curve(taus, RHO_REF, rho_p, 0.09, 450.0)
    looped = np.array(
        [coincidence_rate(t, RHO_REF, rho_p, 0.09, 450.0) for t in taus]
    )
    assert np.array_equal(curve.values, looped)


# --- analyzers -----------------------------------------------------------------

def test_oscillation_period_reference_value():
    rho_p = broadened_rho(RHO_REF, ChannelParams(10.0, BETA2_REF))
    assert oscillation_period(RHO_REF, rho_p, 400.0) == pytest.approx(
        3.3599336908529556, rel=1e-12
    )


def test_oscillation_period_scales_inversely_with_window():
    rho_p = broadened_rho(RHO_REF, ChannelParams(10.0, BETA2_REF))
    assert oscillation_period(RHO_REF, rho_p, 800.0) == pytest.approx(
        0.5 * oscillation_period(RHO_REF, rho_p, 400.0), rel=1e-14
    )


def test_oscillation_period_degenerate():
    with pytest.raises(ValueError, match="no oscillations"):
        oscillation_period(RHO_REF, RHO_REF, 400.0)


def test_fwhm_gaussian_dip():
    taus = np.arange(-5.0, 5.0, 0.002)
    curve = coincidence_curve(taus, RHO_REF, RHO_REF, 0.0, 5000.0)
    result = extract_fwhm(curve)
    assert result.fwhm_ps == pytest.approx(0.617767300869324, rel=1e-4)
    assert result.left_crossing_ps == pytest.approx(-result.right_crossing_ps, abs=1e-6)


def test_fwhm_scale_and_translation_invariant():
    taus = np.arange(-5.0, 5.0, 0.002)
    curve = coincidence_curve(taus, RHO_REF, RHO_REF, 0.0, 5000.0)
    scaled = HomCurve(curve.tau_ps, 137.5 * curve.values)
    shifted = HomCurve(curve.tau_ps + 42.0, curve.values)
    assert extract_fwhm(scaled).fwhm_ps == extract_fwhm(curve).fwhm_ps
    assert extract_fwhm(shifted).fwhm_ps == pytest.approx(
        extract_fwhm(curve).fwhm_ps, rel=1e-12
    )


def test_fwhm_flat_curve_rejected():
    flat = HomCurve(np.linspace(0, 1, 10), np.ones(10))
    with pytest.raises(ValueError, match="no dip found"):
        extract_fwhm(flat)


def test_fwhm_monotone_curve_rejected():
    ramp = HomCurve(np.linspace(0, 1, 10), np.linspace(0.0, 1.0, 10))
    with pytest.raises(ValueError, match="no dip found"):
        extract_fwhm(ramp)


def test_fwhm_unresolved_dip_rejected():
    taus = np.linspace(-0.2, 0.25, 21)  # window never reaches the half level
    values = 0.5 * (1.0 - np.exp(-RHO_REF * taus**2 / 2.0))
    with pytest.raises(ValueError, match="not resolved"):
        extract_fwhm(HomCurve(taus, values))


def test_group_index_round_trip():
    g = 0.0471
    src = SourceParams(g, -g, 2.0, 775.0, 1.0)
    filt = reference_filter()
    rho = derive_spectral(src, filt).rho
    low, high = group_index_bounds(rho, filt, 2.0)
    assert low == pytest.approx(g, rel=1e-12)  # field-level convention inverts exactly
    assert high > low


def test_group_index_bounds_no_filter_coincide():
    low, high = group_index_bounds(RHO_REF, FilterParams(1550.0, math.inf), 2.0)
    assert low == high


def test_group_index_bounds_convention_ratio():
    # removing half the filter contribution changes the bound by exactly
    # sqrt((1/rho - 1/(2s)) / (1/rho - 1/s))
    filt = reference_filter()
    s = filter_variance(filt)
    low, high = group_index_bounds(RHO_REF, filt, 2.0)
    expected = math.sqrt((1.0 / RHO_REF - 1.0 / (2 * s)) / (1.0 / RHO_REF - 1.0 / s))
    assert high / low == pytest.approx(expected, rel=1e-12)


def test_group_index_bounds_filter_too_narrow():
    with pytest.raises(ValueError, match="filter narrower"):
        group_index_bounds(40.0, reference_filter(), 2.0)


# --- type validation ------------------------------------------------------------

def test_homcurve_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        HomCurve(np.array([0.0, 0.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError, match="nonnegative"):
        HomCurve(np.array([0.0, 1.0]), np.array([1.0, -0.5]))
    with pytest.raises(ValueError, match="equal length"):
        HomCurve(np.array([0.0, 1.0]), np.zeros(3))


def test_source_params_validation():
    with pytest.raises(ValueError):
        SourceParams(0.1, -0.1, -1.0, 775.0, 1.0)
    with pytest.raises(ValueError):
        SourceParams(0.1, -0.1, 1.0, 775.0, -1.0)


def test_detection_params_validation():
    from disphom import DetectionParams

    with pytest.raises(ValueError):
        DetectionParams(window_half_width_ps=0.0)
    with pytest.raises(ValueError):
        DetectionParams(window_half_width_ps=10.0, eta=1.5)
    assert DetectionParams(10.0, 0.5).eta == 0.5
