"""Monte Carlo replication engine, error metrics, variance curves and volume fits."""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from . import estim2d, estim3d
from .errors import (
    InvalidParamsError,
    PolyvolError,
    RankDeficiencyError,
    ReplicationError,
    UnsupportedVariantError,
)
from .sampler import DistanceSample, derive_seed, draw_sample, monte_carlo_volume
from .shapes import Shape, shape_from_dict

log = logging.getLogger(__name__)

MAD_SCALE = 1.4826
METHODS_2D = ("MOM", "MLE", "TMOM", "TMLE")
METHODS_3D = ("MOM3D", "MLE3D", "TMOM3D")
MAX_FAILURE_RATE = 0.5


def d_be(estimates: Iterable[float], theta: float) -> float:
    """Mean bounded error ``|T - theta| / (|T - theta| + 1)``; non-finite T counts as 1."""
    t = np.asarray(list(estimates), dtype=float)
    if len(t) == 0:
        raise InvalidParamsError("d_be needs at least one estimate")
    if not math.isfinite(theta):
        raise InvalidParamsError("target must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.abs(t - theta)
        contrib = np.where(np.isfinite(err), err / (err + 1.0), 1.0)
    return float(np.mean(contrib))


def robust_stats(estimates: Iterable[float]) -> tuple[float, float]:
    """Median and ``1.4826 * MAD``."""
    t = np.asarray(list(estimates), dtype=float)
    if len(t) == 0:
        raise InvalidParamsError("robust_stats needs at least one estimate")
    med = float(np.median(t))
    return med, MAD_SCALE * float(np.median(np.abs(t - med)))


# --------------------------------------------------------------------------
# Replication
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplicationConfig:
    shape: Shape
    R: float
    n: int
    B: int
    methods: tuple[str, ...] = METHODS_2D
    K: int = 5
    em_tolerance: float = 1e-5
    master_seed: int = 0
    phi0: float | None = None
    targets: dict[str, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(m.upper() for m in self.methods))
        if self.n < 2 or self.B < 1 or self.K < 1:
            raise InvalidParamsError("need n >= 2, B >= 1 and K >= 1")
        if not self.em_tolerance > 0:
            raise InvalidParamsError("EM tolerance must be positive")
        if not self.R > 0:
            raise InvalidParamsError("band radius must be positive")
        allowed = METHODS_2D if self.shape.dim == 2 else METHODS_3D
        bad = [m for m in self.methods if m not in allowed]
        if bad or not self.methods:
            raise InvalidParamsError(f"methods {bad} not available in {self.shape.dim}D; choose from {allowed}")

    @property
    def effective_phi0(self) -> float:
        if self.phi0 is not None:
            return self.phi0
        try:
            return self.shape.analytic_volume().phi0
        except UnsupportedVariantError:
            return 1.0

    def resolved_targets(self) -> dict[str, float]:
        """Target value per output key (``METHOD`` or ``METHOD:L0`` / ``METHOD:M``)."""
        if self.targets is not None:
            return dict(self.targets)
        try:
            poly = self.shape.analytic_volume()
        except UnsupportedVariantError:
            return {}
        out = {}
        for key in output_keys(self.methods):
            out[key] = poly.m if key.endswith(":M") else poly.l0
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "shape": self.shape.to_dict(),
            "R": self.R,
            "n": self.n,
            "B": self.B,
            "methods": list(self.methods),
            "K": self.K,
            "em_tolerance": self.em_tolerance,
            "master_seed": self.master_seed,
            "phi0": self.phi0,
            "targets": self.targets,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ReplicationConfig:
        from .shapes import FIXTURES

        doc = dict(doc)
        shape = doc.pop("shape", None)
        if isinstance(shape, str):
            if shape not in FIXTURES:
                raise InvalidParamsError(f"unknown fixture {shape!r}")
            shape = FIXTURES[shape]()
        elif isinstance(shape, dict):
            shape = shape_from_dict(shape)
        else:
            raise InvalidParamsError("config needs a 'shape' (fixture name or variant document)")
        if "methods" in doc:
            doc["methods"] = tuple(doc["methods"])
        try:
            return cls(shape=shape, **doc)
        except TypeError as exc:
            raise InvalidParamsError(f"bad replication config: {exc}") from exc


def output_keys(methods: Sequence[str]) -> list[str]:
    keys = []
    for m in methods:
        keys += [f"{m}:L0", f"{m}:M"] if m.endswith("3D") else [m]
    return keys


def apply_method(method: str, sample: DistanceSample, config: ReplicationConfig):
    """Run one estimator; returns the Estimate / Estimate3D object."""
    phi0 = config.effective_phi0
    if method == "MOM":
        return estim2d.mom_l0(sample, phi0)
    if method == "MLE":
        return estim2d.mle_l0(sample, phi0)
    if method == "TMOM":
        return estim2d.tmom_l0(sample, config.K, phi0)
    if method == "TMLE":
        return estim2d.tmle_l0(sample, config.K, phi0, config.em_tolerance)
    if method == "MOM3D":
        return estim3d.mom3d(sample, phi0)
    if method == "MLE3D":
        return estim3d.mle3d(sample, phi0)
    if method == "TMOM3D":
        return estim3d.tmom3d(sample, config.K, phi0)
    raise InvalidParamsError(f"unknown method {method!r}")


def run_replication(config: ReplicationConfig, index: int) -> dict[str, Any]:
    """One replication: values per output key, flags and failure messages."""
    seed = derive_seed(config.master_seed, index)
    sample = draw_sample(config.shape, config.R, config.n, seed)
    values: dict[str, float] = {}
    flags: dict[str, list[str]] = {}
    failures: dict[str, str] = {}
    for method in config.methods:
        try:
            est = apply_method(method, sample, config)
        except PolyvolError as exc:
            failures[method] = f"{type(exc).__name__}: {exc}"
            for key in output_keys([method]):
                values[key] = math.nan
            continue
        if method.endswith("3D"):
            values[f"{method}:L0"], values[f"{method}:M"] = est.l0, est.m
        else:
            values[method] = est.value
        flags[method] = est.flags
    return {"index": index, "seed": seed, "values": values, "flags": flags, "failures": failures}


def _run_chunk(config: ReplicationConfig, indices: list[int]) -> list[dict[str, Any]]:
    return [run_replication(config, i) for i in indices]


@dataclass(frozen=True)
class MethodSummary:
    median: float
    scaled_mad: float
    mean_dbe: float | None
    failures: int
    flagged: int


@dataclass
class ReplicationSummary:
    config: ReplicationConfig
    estimates: dict[str, np.ndarray]
    seeds: list[int]
    stats: dict[str, MethodSummary]
    failures: dict[str, int]
    warnings: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        """Per-replication estimates; byte-identical for a fixed master seed."""
        keys = list(self.estimates)
        buf = io.StringIO()
        buf.write(",".join(["replication", "seed", *keys]) + "\n")
        for i, seed in enumerate(self.seeds):
            row = [str(i), str(seed)] + [repr(float(self.estimates[k][i])) for k in keys]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write("key,median,scaled_mad,mean_dbe,failures,flagged\n")
        for k, s in self.stats.items():
            dbe = "" if s.mean_dbe is None else repr(s.mean_dbe)
            buf.write(f"{k},{s.median!r},{s.scaled_mad!r},{dbe},{s.failures},{s.flagged}\n")
        return buf.getvalue()


def replicate(config: ReplicationConfig, workers: int = 1) -> ReplicationSummary:
    """Run ``config.B`` replications, optionally over several processes.

    Replication ``r`` draws its sample from ``derive_seed(master_seed, r)``,
    so results do not depend on ``workers`` or on scheduling.
    """
    warnings = []
    try:
        r_max = config.shape.analytic_volume().r_max
        if config.R > r_max:
            warnings.append(f"R = {config.R} exceeds the polynomial-volume radius {r_max}")
    except UnsupportedVariantError:
        warnings.append("shape has no closed-form volume; the polynomial model is unchecked")
    for w in warnings:
        log.warning(w)

    indices = list(range(config.B))
    if workers <= 1 or config.B == 1:
        results = _run_chunk(config, indices)
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [config] * len(chunks), chunks)
            results = [r for part in parts for r in part]
    results.sort(key=lambda r: r["index"])

    keys = output_keys(config.methods)
    estimates = {k: np.array([r["values"][k] for r in results]) for k in keys}
    failures = {m: sum(m in r["failures"] for r in results) for m in config.methods}
    for m, count in failures.items():
        if count > MAX_FAILURE_RATE * config.B:
            first = next(r["failures"][m] for r in results if m in r["failures"])
            raise ReplicationError(f"{m} failed in {count} of {config.B} replications (first: {first})")

    targets = config.resolved_targets()
    stats = {}
    for k in keys:
        method = k.split(":")[0]
        ok = estimates[k][~np.isnan(estimates[k])]
        med, mad = robust_stats(ok) if len(ok) else (math.nan, math.nan)
        dbe = d_be(ok, targets[k]) if k in targets and len(ok) else None
        flagged = sum(bool(r["flags"].get(method)) for r in results)
        stats[k] = MethodSummary(med, mad, dbe, failures[method], flagged)
    return ReplicationSummary(config, estimates, [r["seed"] for r in results], stats, failures, warnings)


# --------------------------------------------------------------------------
# Asymptotic variance curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VarCurve:
    dimension: int
    R: np.ndarray
    columns: dict[str, np.ndarray]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(["R", *self.columns]) + "\n")
        for i, r in enumerate(self.R):
            buf.write(",".join([repr(float(r))] + [repr(float(c[i])) for c in self.columns.values()]) + "\n")
        return buf.getvalue()

    def to_svg(self, width: int = 480, height: int = 320) -> str:
        """Minimal line plot: one polyline per column, dashed after the first."""
        pad = 40
        x = self.R
        ys = np.concatenate(list(self.columns.values()))
        x0, x1 = float(x.min()), float(x.max())
        y0, y1 = 0.0, float(ys.max()) * 1.05
        if x1 == x0:
            x1 = x0 + 1.0

        def px(v):
            return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

        def py(v):
            return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
            f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
            f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">R</text>',
            f'<text x="{pad}" y="{height - pad + 16}" text-anchor="middle">{x0:g}</text>',
            f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="middle">{x1:g}</text>',
            f'<text x="{pad - 4}" y="{pad}" text-anchor="end">{y1:.3g}</text>',
        ]
        for i, (name, y) in enumerate(self.columns.items()):
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            dash = ' stroke-dasharray="6,4"' if i else ""
            parts.append(f'<polyline fill="none" stroke="black"{dash} points="{pts}"><title>{name}</title></polyline>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def var_curve(
    l0: float, r_values: Sequence[float], dimension: int = 2, m: float | None = None, phi0: float = 1.0
) -> VarCurve:
    """Asymptotic standard deviations over a grid of band radii."""
    r = np.asarray(r_values, dtype=float).ravel()
    if len(r) == 0 or not np.all(r > 0):
        raise InvalidParamsError("R grid must be nonempty and positive")
    if dimension == 2:
        cols = {
            "sd_mom": np.array([math.sqrt(estim2d.mom_asymp_var(l0, x, phi0)) for x in r]),
            "sd_mle": np.array([math.sqrt(estim2d.mle_asymp_var(l0, x, phi0)) for x in r]),
        }
    elif dimension == 3:
        if m is None:
            raise InvalidParamsError("3D curves need m")
        pairs = np.array([estim3d.mom3d_asymp_var(l0, m, x, phi0) for x in r])
        cols = {"sd_mom_l0": np.sqrt(pairs[:, 0]), "sd_mom_m": np.sqrt(pairs[:, 1])}
    else:
        raise InvalidParamsError("dimension must be 2 or 3")
    return VarCurve(dimension, r, cols)


# --------------------------------------------------------------------------
# Polynomial fit of Monte Carlo volumes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VolFit:
    """Generalised least-squares polynomial fit; coefficients ascending."""

    coefficients: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    r: np.ndarray
    volume: np.ndarray
    volume_se: np.ndarray
    max_residual: float  # largest whitened residual

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("power,coefficient,se\n")
        for k, (c, s) in enumerate(zip(self.coefficients, self.se)):
            buf.write(f"{k},{float(c)!r},{float(s)!r}\n")
        return buf.getvalue()


def vol_fit(shape: Shape, r_grid: Sequence[float], n_mc: int, degree: int, seed: int = 0) -> VolFit:
    """Fit ``V(r) = sum_k b_k r^k`` to shared-point Monte Carlo volumes.

    The estimates at different radii are correlated (nested hit events),
    so the fit is weighted by the full covariance.
    """
    if degree not in (2, 3):
        raise InvalidParamsError("degree must be 2 or 3")
    r = np.asarray(r_grid, dtype=float).ravel()
    if len(np.unique(r)) < degree + 1:
        raise RankDeficiencyError(f"need at least {degree + 1} distinct radii for a degree-{degree} fit")
    est = monte_carlo_volume(shape, r, n_mc, seed)
    X = np.vander(r, degree + 1, increasing=True)
    try:
        chol = np.linalg.cholesky(est.cov)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError("volume covariance is singular on this grid") from exc
    Xw = np.linalg.solve(chol, X)
    yw = np.linalg.solve(chol, est.volume)
    if np.linalg.matrix_rank(Xw) < degree + 1:
        raise RankDeficiencyError("design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    cov = np.linalg.inv(Xw.T @ Xw)
    resid = yw - Xw @ beta
    return VolFit(
        beta, np.sqrt(np.diag(cov)), cov, r, est.volume, est.se, float(np.max(np.abs(resid))) if len(r) > degree + 1 else 0.0
    )
