"""Dataset serialization, campaign configuration, and synthetic generation.

Datasets are CSV files with the exact header ``tau_ps,counts`` (lines starting
with ``#`` are comments) plus a ``<name>.meta.json`` sidecar carrying
``window_half_width_ns``, ``fiber_length_km`` and ``label``.  Counts may be
non-integer (rates are allowed).  Synthetic campaigns draw Poisson counts
from a counter-based generator (Philox) keyed by the campaign seed and the
dataset index, so identical configurations produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import Dataset
from .model import (
    FilterParams,
    HomCurve,
    SourceParams,
    broadened_rho,
    ChannelParams,
    coincidence_curve,
    eta_prime,
)


class DatasetFormatError(ValueError):
    """A dataset file or sidecar violates the on-disk contract."""


def _meta_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".meta.json")


def read_dataset(path) -> Dataset:
    """Parse a dataset CSV and its metadata sidecar.

    Errors name the offending line or key: wrong header, non-monotone tau,
    negative counts, unparsable numbers, missing sidecar keys.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"{path}: no such file")
    taus: list[float] = []
    counts: list[float] = []
    header_seen = False
    with path.open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if [c.strip() for c in line.split(",")] != ["tau_ps", "counts"]:
                    raise DatasetFormatError(
                        f"{path}:{lineno}: expected header 'tau_ps,counts', got {line!r}"
                    )
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DatasetFormatError(f"{path}:{lineno}: expected two columns")
            try:
                tau = float(parts[0])
                value = float(parts[1])
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric value") from None
            if not (math.isfinite(tau) and math.isfinite(value)):
                raise DatasetFormatError(f"{path}:{lineno}: non-finite value")
            if taus and tau <= taus[-1]:
                raise DatasetFormatError(
                    f"{path}:{lineno}: tau_ps not strictly increasing"
                )
            if value < 0:
                raise DatasetFormatError(f"{path}:{lineno}: negative counts")
            taus.append(tau)
            counts.append(value)
    if not header_seen:
        raise DatasetFormatError(f"{path}: missing 'tau_ps,counts' header")

    meta_path = _meta_path(path)
    if not meta_path.exists():
        raise DatasetFormatError(f"{meta_path}: missing metadata sidecar")
    with meta_path.open("r", encoding="utf-8") as handle:
        try:
            meta = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{meta_path}: invalid JSON ({exc})") from None
    for key in ("window_half_width_ns", "fiber_length_km", "label"):
        if key not in meta:
            raise DatasetFormatError(f"{meta_path}: missing key '{key}'")
    return Dataset(
        curve=HomCurve(np.asarray(taus), np.asarray(counts)),
        window_half_width_ps=1000.0 * float(meta["window_half_width_ns"]),
        fiber_length_km=float(meta["fiber_length_km"]),
        label=str(meta["label"]),
    )


def write_dataset(dataset: Dataset, path) -> None:
    """Write a dataset CSV plus sidecar; floats round-trip losslessly."""
    path = Path(path)
    lines = ["tau_ps,counts"]
    for tau, value in zip(dataset.curve.tau_ps.tolist(), dataset.curve.values.tolist()):
        value_repr = repr(int(value)) if value.is_integer() else repr(value)
        lines.append(f"{tau!r},{value_repr}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = {
        "window_half_width_ns": dataset.window_half_width_ps / 1000.0,
        "fiber_length_km": dataset.fiber_length_km,
        "label": dataset.label,
    }
    _meta_path(path).write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- Poisson sampling --------------------------------------------------------
# Counts come from a Philox (counter-based) stream: sequential-search
# inversion below mean 30 and Hormann's PTRS transformed rejection above.
# Both consume the generator's uniforms only, which pins the byte-for-byte
# output across platforms for a given seed.

_PTRS_CUTOFF = 30.0


def _poisson_inversion(uniform, lam):
    u = uniform()
    p = math.exp(-lam)
    cdf = p
    k = 0
    while u > cdf:
        k += 1
        p *= lam / k
        cdf += p
        if p < 1e-300 and cdf < u:  # guard against an unreachable tail
            break
    return k


def _poisson_ptrs(uniform, lam):
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        u = uniform() - 0.5
        v = uniform()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v * inv_alpha / (a / (us * us) + b)) <= k * log_lam - lam - math.lgamma(
            k + 1.0
        ):
            return int(k)


def poisson_counts(means, seed_key) -> np.ndarray:
    """Seeded Poisson draw for an array of means (Philox counter stream)."""
    means = np.asarray(means, dtype=float)
    if (means < 0).any() or not np.isfinite(means).all():
        raise ValueError("Poisson means must be finite and nonnegative")
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed_key)))
    uniform = gen.random
    out = np.empty(means.size, dtype=np.int64)
    flat = means.ravel()
    for i, lam in enumerate(flat):
        if lam == 0.0:
            out[i] = 0
        elif lam < _PTRS_CUTOFF:
            out[i] = _poisson_inversion(uniform, lam)
        else:
            out[i] = _poisson_ptrs(uniform, lam)
    return out.reshape(means.shape)


# --- campaign configuration ---------------------------------------------------


@dataclass
class CampaignConfig:
    """Synthetic measurement campaign over windows x fiber lengths.

    etas may be a single float (applied to every dataset) or one value per
    (window, length) pair in row-major order (windows outer).  A null tau
    range means each dataset scans +-1.5 T on `tau_points` samples.
    """

    source: SourceParams
    filter: FilterParams
    beta2_ps2_per_km: float
    fiber_lengths_km: list[float]
    windows_ns: list[float]
    etas: float | list[float] = 0.5
    tau_points: int = 201
    tau_min_ps: float | None = None
    tau_max_ps: float | None = None
    peak_counts: float = 1e4
    seed: int = 0

    def __post_init__(self):
        if not self.fiber_lengths_km or not self.windows_ns:
            raise ValueError("need at least one fiber length and one window")
        if any(w <= 0 for w in self.windows_ns):
            raise ValueError("windows must be > 0")
        if any(length < 0 for length in self.fiber_lengths_km):
            raise ValueError("fiber lengths must be >= 0")
        if self.tau_points < 5:
            raise ValueError("tau_points must be >= 5")
        if not self.peak_counts > 0:
            raise ValueError("peak_counts must be > 0")
        if (self.tau_min_ps is None) != (self.tau_max_ps is None):
            raise ValueError("tau_min_ps and tau_max_ps must be given together")
        if self.tau_min_ps is not None and not self.tau_max_ps > self.tau_min_ps:
            raise ValueError("tau_max_ps must exceed tau_min_ps")
        n = len(self.windows_ns) * len(self.fiber_lengths_km)
        if isinstance(self.etas, (int, float)):
            self.etas = [float(self.etas)] * n
        elif len(self.etas) != n:
            raise ValueError(f"need one eta per dataset ({n}), got {len(self.etas)}")
        if any(not 0 <= e <= 1 for e in self.etas):
            raise ValueError("etas must be in [0, 1]")

    @classmethod
    def from_json(cls, path) -> "CampaignConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        try:
            source = SourceParams(**data["source"])
            filt = FilterParams(**data["filter"])
            return cls(
                source=source,
                filter=filt,
                beta2_ps2_per_km=data["beta2_ps2_per_km"],
                fiber_lengths_km=list(data["fiber_lengths_km"]),
                windows_ns=list(data["windows_ns"]),
                etas=data.get("etas", 0.5),
                tau_points=data.get("tau_points", 201),
                tau_min_ps=data.get("tau_min_ps"),
                tau_max_ps=data.get("tau_max_ps"),
                peak_counts=data.get("peak_counts", 1e4),
                seed=data.get("seed", 0),
            )
        except KeyError as exc:
            raise DatasetFormatError(f"{path}: missing config key {exc}") from None
        except TypeError as exc:
            raise DatasetFormatError(f"{path}: bad config field ({exc})") from None

    def to_json_dict(self) -> dict:
        return {
            "source": {
                "delta_ng_signal": self.source.delta_ng_signal,
                "delta_ng_idler": self.source.delta_ng_idler,
                "crystal_length_mm": self.source.crystal_length_mm,
                "pump_wavelength_nm": self.source.pump_wavelength_nm,
                "pump_sigma_radps": self.source.pump_sigma_radps,
                "poling_period_um": self.source.poling_period_um,
            },
            "filter": {
                "center_wavelength_nm": self.filter.center_wavelength_nm,
                "fwhm_nm": self.filter.fwhm_nm,
                "convention": self.filter.convention.value,
            },
            "beta2_ps2_per_km": self.beta2_ps2_per_km,
            "fiber_lengths_km": list(self.fiber_lengths_km),
            "windows_ns": list(self.windows_ns),
            "etas": list(self.etas),
            "tau_points": self.tau_points,
            "tau_min_ps": self.tau_min_ps,
            "tau_max_ps": self.tau_max_ps,
            "peak_counts": self.peak_counts,
            "seed": self.seed,
        }


def generate_synthetic(config: CampaignConfig):
    """Noisy datasets for every (window, length) pair of the campaign.

    The model curve is scaled so its maximum equals peak_counts, then each
    bin is drawn from a Poisson law with that mean.  The Philox key mixes
    the campaign seed with the dataset index, so datasets are independent
    but fully reproducible.
    """
    from .model import derive_spectral

    rho = derive_spectral(config.source, config.filter).rho
    datasets = []
    index = 0
    for window_ns in config.windows_ns:
        for length_km in config.fiber_lengths_km:
            window_ps = 1000.0 * window_ns
            if config.tau_min_ps is None:
                taus = np.linspace(-1.5 * window_ps, 1.5 * window_ps, config.tau_points)
            else:
                taus = np.linspace(config.tau_min_ps, config.tau_max_ps, config.tau_points)
            eta = config.etas[index]
            rho_p = broadened_rho(rho, ChannelParams(length_km, config.beta2_ps2_per_km))
            curve = coincidence_curve(taus, rho, rho_p, eta_prime(eta), window_ps)
            means = curve.values / curve.values.max() * config.peak_counts
            key = (int(config.seed) * 0x9E3779B97F4A7C15 + index) % 2**64
            counts = poisson_counts(means, key)
            label = f"T{window_ns:g}ns_L{length_km:g}km"
            datasets.append(
                Dataset(
                    curve=HomCurve(taus, counts.astype(float)),
                    window_half_width_ps=window_ps,
                    fiber_length_km=length_km,
                    label=label,
                )
            )
            index += 1
    return datasets, rho
