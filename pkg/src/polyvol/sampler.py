"""Uniform sampling in the outer band of a set, distance samples and MC oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import EmptySampleError, InvalidParamsError, RejectionEfficiencyError
from .shapes import MANIFOLD, SOLID, Shape

MIN_ACCEPTANCE = 1e-4
PROBE_DRAWS = 100_000


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of replication ``index`` under ``master_seed``."""
    words = np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def make_rng(seed: int) -> np.random.Generator:
    # Counter-based: streams depend only on the seed, never on scheduling.
    return np.random.Generator(np.random.Philox(seed))


def _accept(d: np.ndarray, R: float, model: str) -> np.ndarray:
    if model == SOLID:
        return (d > 0) & (d <= R)
    return d <= R


def sample_band(shape: Shape, R: float, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. uniform points on ``B(S, R) \\ S`` (solid) or ``B(S, R)`` (manifold).

    Rejection from the margin-``R`` bounding box. Chunk sizes depend only on
    ``n``, so the output is a function of ``seed`` alone.
    """
    if not R > 0:
        raise InvalidParamsError(f"band radius must be positive, got {R}")
    if n < 1:
        raise InvalidParamsError(f"need n >= 1 points, got {n}")
    rng = make_rng(seed)
    lo, hi = shape.bounding_box(R)
    chunk = max(4096, 2 * n)
    kept: list[np.ndarray] = []
    n_kept = drawn = 0
    while n_kept < n:
        pts = rng.uniform(lo, hi, size=(chunk, shape.dim))
        d = shape.distance(pts)
        pts = pts[_accept(d, R, shape.model)]
        kept.append(pts)
        n_kept += len(pts)
        drawn += chunk
        if drawn >= PROBE_DRAWS and n_kept < MIN_ACCEPTANCE * drawn:
            raise RejectionEfficiencyError(
                f"acceptance rate {n_kept / drawn:.2e} below {MIN_ACCEPTANCE:g} after {drawn} draws"
            )
    return np.concatenate(kept)[:n]


@dataclass(frozen=True)
class DistanceSample:
    """Observed distances ``D_1..D_n`` with their band radius and model tag."""

    values: np.ndarray
    R: float
    model: str = SOLID
    seed: int | None = None
    shape: dict[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.R > 0:
            raise InvalidParamsError(f"band radius must be positive, got {self.R}")
        if self.model not in (SOLID, MANIFOLD):
            raise InvalidParamsError(f"unknown model tag {self.model!r}")
        if len(v) and not (np.all(v > 0) and np.all(v <= self.R)):
            raise InvalidParamsError("distance values must lie in (0, R]")

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DistanceSample):
            return NotImplemented
        return (
            self.R == other.R
            and self.model == other.model
            and self.seed == other.seed
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # type: ignore[assignment]

    def require_nonempty(self) -> None:
        if len(self.values) == 0:
            raise EmptySampleError("the distance sample is empty")

    def to_csv(self, path: str | Path) -> None:
        seed = "" if self.seed is None else self.seed
        lines = [f"# R={self.R!r} model={self.model} seed={seed}"]
        lines += [repr(float(v)) for v in self.values]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> DistanceSample:
        text = Path(path).read_text().splitlines()
        if not text or not text[0].startswith("#"):
            raise InvalidParamsError(f"{path}: missing '# R=... model=... seed=...' header")
        meta = dict(tok.split("=", 1) for tok in text[0][1:].split())
        try:
            R = float(meta["R"])
        except (KeyError, ValueError) as exc:
            raise InvalidParamsError(f"{path}: header lacks a numeric R") from exc
        seed = meta.get("seed") or None
        values = [float(line) for line in text[1:] if line.strip()]
        return cls(values, R, meta.get("model", SOLID), int(seed) if seed else None)


def distances(shape: Shape, points, R: float, seed: int | None = None) -> DistanceSample:
    """Distance sample of ``points``; order and count are preserved."""
    pts = np.asarray(points, dtype=float).reshape(-1, shape.dim)
    d = shape.distance(pts) if len(pts) else np.empty(0)
    return DistanceSample(d, R, shape.model, seed, shape.to_dict())


def draw_sample(shape: Shape, R: float, n: int, seed: int) -> DistanceSample:
    return distances(shape, sample_band(shape, R, n, seed), R, seed)


def empirical_cdf(sample: DistanceSample) -> Callable[[Any], Any]:
    """Right-continuous ECDF of the sample."""
    sample.require_nonempty()
    sorted_values = np.sort(sample.values)
    n = len(sorted_values)

    def ecdf(r):
        return np.searchsorted(sorted_values, r, side="right") / n

    return ecdf


def kolmogorov_distance(sample: DistanceSample, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sup_r |F_n(r) - F(r)|`` for a continuous ``cdf``."""
    sample.require_nonempty()
    x = np.sort(sample.values)
    n = len(x)
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


@dataclass(frozen=True)
class VolumeEstimate:
    r: np.ndarray
    volume: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    n_mc: int


def monte_carlo_volume(shape: Shape, r_grid, n_mc: int, seed: int) -> VolumeEstimate:
    """Hit-count estimates of ``mu(B(S, r))`` on ``r_grid``.

    One set of uniform points in the box around ``B(S, max r)`` is shared by
    all radii. The events ``d <= r`` are nested, so the covariance of the
    estimates is ``vol^2 (p_min(i,j) - p_i p_j) / N``.
    """
    r = np.asarray(r_grid, dtype=float).ravel()
    if len(r) == 0 or not np.all(r > 0):
        raise InvalidParamsError("radius grid must be nonempty and positive")
    if n_mc < 10_000:
        raise InvalidParamsError(f"n_mc must be at least 1e4, got {n_mc}")
    lo, hi = shape.bounding_box(float(r.max()))
    box = float(np.prod(hi - lo))
    rng = make_rng(seed)
    d_all = []
    for start in range(0, n_mc, 1_000_000):
        m = min(1_000_000, n_mc - start)
        d_all.append(shape.distance(rng.uniform(lo, hi, size=(m, shape.dim))))
    d = np.sort(np.concatenate(d_all))
    p = np.searchsorted(d, r, side="right") / n_mc
    p_min = np.minimum.outer(p, p)
    cov = box * box * (p_min - np.outer(p, p)) / n_mc
    return VolumeEstimate(r, box * p, np.sqrt(np.diag(cov)), cov, n_mc)


def acceptance_rate(shape: Shape, R: float) -> float:
    """Analytic acceptance probability of ``sample_band`` (needs a closed-form volume)."""
    poly = shape.analytic_volume()
    lo, hi = shape.bounding_box(R)
    band = poly(R) - (poly.mu if shape.model == SOLID else 0.0)
    return float(band / np.prod(hi - lo))


def kolmogorov_bound(n: int, level: float = 0.05) -> float:
    """Asymptotic Kolmogorov critical value ``c(level) / sqrt(n)``."""
    c = math.sqrt(-0.5 * math.log(level / 2))
    return c / math.sqrt(n)
