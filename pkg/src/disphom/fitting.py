"""Global nonlinear least-squares fit of the windowed coincidence model.

All datasets share the fiber dispersion beta2 and the spectral scale rho;
each dataset gets its own splitter reflectivity eta_i and a closed-form
profiled amplitude s_i0 = (f.y)/(f.f), which makes the metric agnostic to
the unknown pair rate.  The optimizer is a Levenberg-Marquardt loop on
conditioned internal coordinates (beta2/10, log rho, logit-mapped eta), with
central finite-difference Jacobians of the profiled residuals, so the
dependence of s_i0 on the parameters is part of every derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelParams, HomCurve, broadened_rho, coincidence_curve, eta_prime

_ETA_MARGIN = 1e-9


@dataclass
class Dataset:
    """One measured or synthetic coincidence curve plus its configuration."""

    curve: HomCurve
    window_half_width_ps: float
    fiber_length_km: float
    label: str = ""

    def __post_init__(self):
        if not self.window_half_width_ps > 0:
            raise ValueError("window_half_width_ps must be > 0")
        if self.fiber_length_km < 0:
            raise ValueError("fiber_length_km must be >= 0")


@dataclass
class FitParams:
    """Shared (beta2, rho) and per-dataset eta, canonicalized to eta >= 1/2.

    eta and 1 - eta are indistinguishable through the model (only
    (2 eta - 1)^2 enters), so the upper representative is reported.
    """

    beta2_ps2_per_km: float
    rho_ps2_inv: float
    etas: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.rho_ps2_inv > 0:
            raise ValueError("rho must be > 0")
        self.etas = [canonical_eta(e) for e in self.etas]


@dataclass
class FitOptions:
    max_iterations: int = 200
    loss_rel_tol: float = 1e-10
    damping_init: float = 1e-3
    damping_factor: float = 10.0
    fd_rel_step: float = 1e-6


@dataclass
class FitResult:
    params: FitParams
    beta2_sigma_ps2_per_km: float
    rho_sigma_ps2_inv: float
    scales: list[float]
    rmsre_per_dataset: list[float]
    covariance: np.ndarray
    covariance_order: list[str]
    loss: float
    iterations: int
    converged: bool
    pseudo_inverse_used: bool
    jtj_condition: float


def canonical_eta(eta: float) -> float:
    """Fold eta onto the identifiable representative in [1/2, 1]."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be in [0, 1]")
    return max(eta, 1.0 - eta)


def profile_scale(model_values, data_values) -> float:
    """Closed-form amplitude minimizing sum |s*f - y|^2."""
    f = np.asarray(model_values, dtype=float)
    y = np.asarray(data_values, dtype=float)
    denom = float(np.dot(f, f))
    if denom == 0.0:
        raise ValueError("scale undefined: model values are all zero")
    return float(np.dot(f, y)) / denom


def model_values(dataset: Dataset, beta2, rho, eta) -> np.ndarray:
    """Model curve for one dataset's delay grid and configuration."""
    rho_p = broadened_rho(rho, ChannelParams(dataset.fiber_length_km, beta2))
    curve = coincidence_curve(
        dataset.curve.tau_ps, rho, rho_p, eta_prime(eta), dataset.window_half_width_ps
    )
    return curve.values


def _residuals(datasets, beta2, rho, etas):
    """Per-dataset profiled residuals s_i0*f - y and scales, one model pass."""
    residuals = []
    scales = []
    for ds, eta in zip(datasets, etas):
        f = model_values(ds, beta2, rho, eta)
        s0 = profile_scale(f, ds.curve.values)
        residuals.append(s0 * f - ds.curve.values)
        scales.append(s0)
    return residuals, scales


def global_loss(params: FitParams, datasets) -> tuple[float, list[np.ndarray]]:
    """Total scale-agnostic loss E = sum_i sum_x |s_i0 f(x) - y_x|^2."""
    if len(datasets) == 0:
        return 0.0, []
    if len(params.etas) != len(datasets):
        raise ValueError("need one eta per dataset")
    residuals, _ = _residuals(datasets, params.beta2_ps2_per_km, params.rho_ps2_inv, params.etas)
    loss = float(sum(np.dot(r, r) for r in residuals))
    return loss, residuals


def rmsre(residuals, data_values) -> float:
    """Root mean square relative error sqrt(mean (r/y)^2), zero bins excluded."""
    r = np.asarray(residuals, dtype=float)
    y = np.asarray(data_values, dtype=float)
    valid = y > 0
    if not valid.any():
        raise ValueError("no valid points: all data values are zero")
    ratio = r[valid] / y[valid]
    return float(np.sqrt(np.mean(ratio * ratio)))


# --- internal optimizer coordinates -----------------------------------------
# beta2 is scaled by 10 ps^2/km, rho enters through its log, and eta through
# a logistic map onto (1/2, 1); this keeps JtJ decently conditioned even
# though the raw parameters span orders of magnitude.


def _eta_to_internal(eta):
    t = min(max(2.0 * canonical_eta(eta) - 1.0, _ETA_MARGIN), 1.0 - _ETA_MARGIN)
    return math.log(t / (1.0 - t))

def _eta_from_internal(u):
    return 0.5 + 0.5 / (1.0 + math.exp(-u))


def _pack(params: FitParams):
    return np.array(
        [params.beta2_ps2_per_km / 10.0, math.log(params.rho_ps2_inv)]
        + [_eta_to_internal(e) for e in params.etas]
    )


def _unpack(u):
    return 10.0 * u[0], math.exp(u[1]), [_eta_from_internal(v) for v in u[2:]]


def lm_fit(datasets, init: FitParams, options: FitOptions | None = None) -> FitResult:
    """Levenberg-Marquardt global fit with profiled per-dataset scales.

    The damping parameter starts at 1e-3, grows tenfold on a rejected step
    and shrinks tenfold on an accepted one; iteration stops when the relative
    loss decrease of an accepted step falls below 1e-10 or after 200
    iterations (a non-converged result is returned, never an exception).
    The covariance is (JtJ)^-1 * sum r^2 / (n - p) on the profiled residuals
    in external parameter units; a singular JtJ falls back to the
    pseudo-inverse and is flagged.
    """
    options = options or FitOptions()
    datasets = list(datasets)
    if len(datasets) == 0:
        raise ValueError("need at least one dataset")
    if len(init.etas) != len(datasets):
        raise ValueError("need one initial eta per dataset")
    n_points = sum(len(ds.curve) for ds in datasets)
    n_params = 2 + len(datasets)
    if n_points < n_params + 1:
        raise ValueError("need at least p + 1 data points for p parameters")

    lengths = [len(ds.curve) for ds in datasets]
    offsets = np.concatenate([[0], np.cumsum(lengths)])

    def stacked_residuals(u):
        beta2, rho, etas = _unpack(u)
        res, scales = _residuals(datasets, beta2, rho, etas)
        return np.concatenate(res), scales

    def loss_of(r):
        return float(np.dot(r, r))

    def jacobian(u, r0):
        """Central finite differences on the stacked profiled residuals.

        The eta_i coordinate only enters dataset i, so its column is filled
        from that dataset's block alone; the difference is identically zero
        elsewhere.
        """
        jac = np.zeros((n_points, u.size))
        for k in range(u.size):
            h = options.fd_rel_step * max(1.0, abs(u[k]))
            up = u.copy()
            un = u.copy()
            up[k] += h
            un[k] -= h
            if k < 2:
                rp, _ = stacked_residuals(up)
                rn, _ = stacked_residuals(un)
                jac[:, k] = (rp - rn) / (2.0 * h)
            else:
                i = k - 2
                ds = datasets[i]
                sl = slice(offsets[i], offsets[i + 1])
                bp, rhop, etap = _unpack(up)
                bn, rhon, etan = _unpack(un)
                fp = model_values(ds, bp, rhop, etap[i])
                fn = model_values(ds, bn, rhon, etan[i])
                rp = profile_scale(fp, ds.curve.values) * fp - ds.curve.values
                rn = profile_scale(fn, ds.curve.values) * fn - ds.curve.values
                jac[sl, k] = (rp - rn) / (2.0 * h)
        return jac

    u = _pack(init)
    r, scales = stacked_residuals(u)
    loss = loss_of(r)
    lam = options.damping_init
    converged = False
    iterations = 0

    for iterations in range(1, options.max_iterations + 1):
        jac = jacobian(u, r)
        jtj = jac.T @ jac
        grad = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = max(diag.max(), 1e-30)
        accepted = False
        while lam < 1e14:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step, *_ = np.linalg.lstsq(jtj + lam * np.diag(diag), -grad, rcond=None)
            u_new = u + step
            r_new, scales_new = stacked_residuals(u_new)
            loss_new = loss_of(r_new)
            if loss_new <= loss:
                accepted = True
                lam = max(lam / options.damping_factor, 1e-14)
                break
            lam *= options.damping_factor
        if not accepted:
            break
        rel_drop = (loss - loss_new) / max(loss, 1e-300)
        u, r, scales, loss = u_new, r_new, scales_new, loss_new
        if rel_drop < options.loss_rel_tol:
            converged = True
            break

    beta2, rho, etas = _unpack(u)
    params = FitParams(beta2, rho, list(etas))

    # Covariance in external units (beta2, rho, eta_1..eta_D), finite
    # differences of the same profiled residuals.
    theta = np.array([beta2, rho] + list(etas))

    def external_residuals(th):
        res, _ = _residuals(datasets, th[0], th[1], list(th[2:]))
        return np.concatenate(res)

    jac_ext = np.zeros((n_points, theta.size))
    for k in range(theta.size):
        h = options.fd_rel_step * max(1.0, abs(theta[k]))
        tp = theta.copy()
        tn = theta.copy()
        tp[k] += h
        tn[k] -= h
        jac_ext[:, k] = (external_residuals(tp) - external_residuals(tn)) / (2.0 * h)
    jtj_ext = jac_ext.T @ jac_ext
    dof = max(n_points - n_params, 1)
    variance = loss / dof
    cond = float(np.linalg.cond(jtj_ext))
    pseudo = not np.isfinite(cond) or cond > 1e12
    if pseudo:
        cov = np.linalg.pinv(jtj_ext, rcond=1e-12) * variance
    else:
        cov = np.linalg.inv(jtj_ext) * variance
    cov = 0.5 * (cov + cov.T)

    rmsre_list = []
    for i, ds in enumerate(datasets):
        block = r[offsets[i] : offsets[i + 1]]
        if (ds.curve.values > 0).any():
            rmsre_list.append(rmsre(block, ds.curve.values))
        else:
            rmsre_list.append(math.nan)

    order = ["beta2_ps2_per_km", "rho_ps2_inv"] + [
        f"eta[{i}]" for i in range(len(datasets))
    ]
    return FitResult(
        params=params,
        beta2_sigma_ps2_per_km=float(np.sqrt(max(cov[0, 0], 0.0))),
        rho_sigma_ps2_inv=float(np.sqrt(max(cov[1, 1], 0.0))),
        scales=[float(s) for s in scales],
        rmsre_per_dataset=rmsre_list,
        covariance=cov,
        covariance_order=order,
        loss=loss,
        iterations=iterations,
        converged=converged,
        pseudo_inverse_used=bool(pseudo),
        jtj_condition=cond,
    )
