"""Command-line front-end.

Subcommands: simulate (closed-form curve), oracle (quadrature curve plus
deviation report), derive-source (crystal/filter to spectral scales), gen
(synthetic campaign), fit (global fit of a data directory), fwhm, and
osc-period.  Windows are given in ns on the command line (half-width of the
symmetric coincidence window) and converted to ps internally; all JSON
output carries unit-suffixed keys.  User errors exit nonzero with a message,
never a traceback.  `fit` exits 0 only when the optimizer converged.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io as dio
from .fitting import Dataset, FitOptions, FitParams, lm_fit
from .model import (
    ChannelParams,
    FilterConvention,
    FilterParams,
    SourceParams,
    broadened_rho,
    check_epm,
    coincidence_curve,
    derive_spectral,
    eta_prime,
    extract_fwhm,
    group_index_bounds,
    oscillation_period,
)
from .oracle import QuadratureSpec, windowed_rate_numeric


class UserError(Exception):
    """A problem the user can fix; printed without a traceback."""


def _tau_grid(args):
    if not args.tau_max_ps > args.tau_min_ps:
        raise UserError("--tau-max-ps must exceed --tau-min-ps")
    if args.points < 2:
        raise UserError("--points must be >= 2")
    return np.linspace(args.tau_min_ps, args.tau_max_ps, args.points)


def _model_inputs(args):
    if not args.window_ns > 0:
        raise UserError("--window-ns must be > 0 (half-width of the window)")
    eta = getattr(args, "eta", 0.5)
    if not 0 <= eta <= 1:
        raise UserError("--eta must be in [0, 1]")
    if not args.rho > 0:
        raise UserError("--rho must be > 0 (ps^-2)")
    window_ps = 1000.0 * args.window_ns
    rho_p = broadened_rho(args.rho, ChannelParams(args.length_km, args.beta2))
    return window_ps, rho_p, eta_prime(eta)


def _write_curve(path, taus, values, window_ns, length_km, label):
    from .model import HomCurve

    dataset = Dataset(
        curve=HomCurve(taus, values),
        window_half_width_ps=1000.0 * window_ns,
        fiber_length_km=length_km,
        label=label,
    )
    dio.write_dataset(dataset, path)


def _cmd_simulate(args):
    window_ps, rho_p, eta_p = _model_inputs(args)
    taus = _tau_grid(args)
    curve = coincidence_curve(taus, args.rho, rho_p, eta_p, window_ps)
    _write_curve(args.out, taus, curve.values, args.window_ns, args.length_km, "simulate")
    print(f"wrote {args.out} ({taus.size} points)")
    return 0


def _cmd_oracle(args):
    window_ps, rho_p, eta_p = _model_inputs(args)
    taus = _tau_grid(args)
    spec = QuadratureSpec(rel_tol=args.rel_tol)
    numeric = windowed_rate_numeric(
        taus, window_ps, args.eta, args.rho, args.length_km, args.beta2, spec
    )
    closed = coincidence_curve(taus, args.rho, rho_p, eta_p, window_ps).values
    denom = float(np.dot(numeric, numeric))
    scale = float(np.dot(numeric, closed)) / denom if denom > 0 else 1.0
    plateau = float(closed.max())
    deviation = np.abs(scale * numeric - closed)
    floor = np.maximum(np.abs(closed), 1e-9 * plateau) if plateau > 0 else 1.0
    max_dev = float((deviation / floor).max()) if plateau > 0 else float(deviation.max())
    _write_curve(args.out, taus, numeric, args.window_ns, args.length_km, "oracle")
    print(f"wrote {args.out} ({taus.size} points)")
    print(f"matched_scale={scale!r}")
    print(f"max_scale_matched_relative_deviation={max_dev!r}")
    return 0


def _load_source_filter(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UserError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise UserError(f"{path}: invalid JSON ({exc})") from None
    try:
        source = SourceParams(**data["source"])
        filt = FilterParams(**data["filter"])
    except KeyError as exc:
        raise UserError(f"{path}: missing config key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise UserError(f"{path}: bad config ({exc})") from None
    return source, filt


def _cmd_derive_source(args):
    source, filt = _load_source_filter(args.config)
    report = {}
    for convention in (FilterConvention.FIELD_LEVEL, FilterConvention.INTENSITY_LEVEL):
        from dataclasses import replace

        derived = derive_spectral(source, replace(filt, convention=convention))
        report[convention.value] = {
            "gamma_signal_ps_per_mm": derived.gamma_signal,
            "gamma_idler_ps_per_mm": derived.gamma_idler,
            "gamma_tilde_signal": derived.gamma_tilde_signal,
            "gamma_tilde_idler": derived.gamma_tilde_idler,
            "sigma_pm_radps": derived.sigma_pm,
            "r_ps2_inv": derived.r,
            "r_p_ps2_inv": derived.r_p,
            "s_ps2_inv": derived.s,
            "rho_ps2_inv": derived.rho,
        }
    epm = check_epm(*(report["field"][k] for k in ("gamma_signal_ps_per_mm", "gamma_idler_ps_per_mm")))
    report["epm_mismatch"] = epm.mismatch
    report["epm_within_tolerance"] = epm.within_tolerance
    Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def _cmd_gen(args):
    try:
        config = dio.CampaignConfig.from_json(args.config)
    except (dio.DatasetFormatError, ValueError) as exc:
        raise UserError(str(exc)) from None
    except FileNotFoundError:
        raise UserError(f"{args.config}: no such file") from None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    datasets, rho = dio.generate_synthetic(config)
    for dataset in datasets:
        dio.write_dataset(dataset, out_dir / f"ds_{dataset.label}.csv")
    echo = config.to_json_dict()
    echo["derived_rho_ps2_inv"] = rho
    (out_dir / "campaign.json").write_text(
        json.dumps(echo, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(datasets)} datasets to {out_dir} (rho={rho:.6g} ps^-2)")
    return 0


def _cmd_fit(args):
    data_dir = Path(args.data_dir)
    if not data_dir.is_dir():
        raise UserError(f"{data_dir}: not a directory")
    paths = sorted(p for p in data_dir.glob("*.csv"))
    if not paths:
        raise UserError(f"{data_dir}: no .csv datasets found")
    try:
        datasets = [dio.read_dataset(p) for p in paths]
    except dio.DatasetFormatError as exc:
        raise UserError(str(exc)) from None

    init_beta2, init_rho, init_eta = 20.0, 10.0, 0.501
    if args.init is not None:
        try:
            init_data = json.loads(Path(args.init).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UserError(f"{args.init}: no such file") from None
        except json.JSONDecodeError as exc:
            raise UserError(f"{args.init}: invalid JSON ({exc})") from None
        init_beta2 = float(init_data.get("beta2_ps2_per_km", init_beta2))
        init_rho = float(init_data.get("rho_ps2_inv", init_rho))
        init_eta = init_data.get("eta", init_eta)
    if isinstance(init_eta, (int, float)):
        etas = [float(init_eta)] * len(datasets)
    else:
        if len(init_eta) != len(datasets):
            raise UserError(f"init eta list must have {len(datasets)} entries")
        etas = [float(e) for e in init_eta]

    result = lm_fit(datasets, FitParams(init_beta2, init_rho, etas), FitOptions())
    report = _fit_report(result, datasets, paths)
    Path(args.report).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    status = "converged" if result.converged else "NOT converged"
    print(
        f"{status} after {result.iterations} iterations: "
        f"beta2 = {result.params.beta2_ps2_per_km:.4f} +- {result.beta2_sigma_ps2_per_km:.4f} ps^2/km, "
        f"rho = {result.params.rho_ps2_inv:.4f} +- {result.rho_sigma_ps2_inv:.4f} ps^-2"
    )
    print(f"wrote {args.report}")
    return 0 if result.converged else 3


def _fit_report(result, datasets, paths):
    per_dataset = []
    for dataset, path, eta, scale, err in zip(
        datasets, paths, result.params.etas, result.scales, result.rmsre_per_dataset
    ):
        rho = result.params.rho_ps2_inv
        rho_p = broadened_rho(
            rho, ChannelParams(dataset.fiber_length_km, result.params.beta2_ps2_per_km)
        )
        if rho_p < rho:
            p_osc = oscillation_period(rho, rho_p, dataset.window_half_width_ps)
        else:
            p_osc = None
        try:
            fwhm = extract_fwhm(dataset.curve).fwhm_ps
        except ValueError:
            fwhm = None
        per_dataset.append(
            {
                "label": dataset.label,
                "file": str(path),
                "file_sha256": dio.sha256_of(path),
                "meta_sha256": dio.sha256_of(dio._meta_path(Path(path))),
                "window_half_width_ns": dataset.window_half_width_ps / 1000.0,
                "fiber_length_km": dataset.fiber_length_km,
                "n_points": len(dataset.curve),
                "eta": eta,
                "scale": scale,
                "rmsre": None if math.isnan(err) else err,
                "zero_count_bins": int((dataset.curve.values == 0).sum()),
                "fwhm_ps": fwhm,
                "predicted_oscillation_period_ps": p_osc,
            }
        )
    return {
        "converged": result.converged,
        "iterations": result.iterations,
        "loss": result.loss,
        "beta2_ps2_per_km": result.params.beta2_ps2_per_km,
        "beta2_sigma_ps2_per_km": result.beta2_sigma_ps2_per_km,
        "rho_ps2_inv": result.params.rho_ps2_inv,
        "rho_sigma_ps2_inv": result.rho_sigma_ps2_inv,
        "covariance_order": result.covariance_order,
        "covariance": result.covariance.tolist(),
        "covariance_pseudo_inverse": result.pseudo_inverse_used,
        "jtj_condition": result.jtj_condition,
        "datasets": per_dataset,
    }


def _cmd_fwhm(args):
    try:
        dataset = dio.read_dataset(args.infile)
    except dio.DatasetFormatError as exc:
        raise UserError(str(exc)) from None
    try:
        res = extract_fwhm(dataset.curve)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    report = {
        "fwhm_ps": res.fwhm_ps,
        "baseline": res.baseline,
        "minimum": res.minimum,
        "left_crossing_ps": res.left_crossing_ps,
        "right_crossing_ps": res.right_crossing_ps,
    }
    Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def _cmd_osc_period(args):
    window_ps, rho_p, _ = _model_inputs(args)
    try:
        period = oscillation_period(args.rho, rho_p, window_ps)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    print(json.dumps({"oscillation_period_ps": period}))
    return 0


def _add_model_flags(parser, with_eta=True):
    parser.add_argument("--rho", type=float, required=True, help="spectral scale rho (ps^-2)")
    parser.add_argument("--beta2", type=float, required=True, help="fiber dispersion (ps^2/km)")
    parser.add_argument("--length-km", type=float, required=True, help="fiber length (km)")
    parser.add_argument(
        "--window-ns", type=float, required=True,
        help="coincidence window half-width T of [-T, T] (ns)",
    )
    if with_eta:
        parser.add_argument("--eta", type=float, default=0.5, help="splitter reflectivity")
        parser.add_argument("--tau-min-ps", type=float, required=True)
        parser.add_argument("--tau-max-ps", type=float, required=True)
        parser.add_argument("--points", type=int, default=201)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="disphom",
        description="Windowed Hong-Ou-Mandel coincidence model for dispersed photon pairs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a closed-form coincidence curve")
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("oracle", help="write the quadrature curve and its deviation from the closed form")
    _add_model_flags(p)
    p.add_argument("--rel-tol", type=float, default=1e-9)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("derive-source", help="crystal/pump/filter to spectral scales (both filter conventions)")
    p.add_argument("--config", required=True, help="JSON with source and filter blocks")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_derive_source)

    p = sub.add_parser("gen", help="generate a synthetic Poisson campaign")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("fit", help="global fit of all datasets in a directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--init", default=None, help="JSON with initial beta2/rho/eta")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("fwhm", help="dip width of a stored curve")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fwhm)

    p = sub.add_parser("osc-period", help="predicted side-lobe period")
    _add_model_flags(p, with_eta=False)
    p.set_defaults(func=_cmd_osc_period)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
