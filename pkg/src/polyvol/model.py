"""Distribution of the distance D from a uniform band point to the set.

If ``V`` is the parallel volume of ``S`` then ``P(D <= r) = (V(r) - mu) / (V(R) - mu)``
on ``[0, R]``. For sets of polynomial volume this gives a finite mixture of
scaled Beta(k, 1) laws. ``phi0`` (the leading volume coefficient over the
unit-ball volume) is a known scalar; the classical case is ``phi0 = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidParamsError
from .shapes import VolumePolynomial


@dataclass(frozen=True)
class Params2D:
    l0: float
    R: float
    phi0: float = 1.0

    def __post_init__(self) -> None:
        if not (self.l0 > 0 and self.R > 0 and self.phi0 > 0):
            raise InvalidParamsError(f"need l0, R, phi0 > 0, got {self}")

    @property
    def c(self) -> float:
        """Quadratic volume coefficient ``phi0 * pi``."""
        return self.phi0 * math.pi


@dataclass(frozen=True)
class Params3D:
    l0: float
    m: float
    R: float
    phi0: float = 1.0

    def __post_init__(self) -> None:
        if not (self.l0 > 0 and self.R > 0 and self.phi0 > 0):
            raise InvalidParamsError(f"need l0, R, phi0 > 0, got {self}")
        # q(r) = l0 + 2 m r + 4 c r^2 is convex; check its minimum on [0, R].
        c4 = 4 * self.c
        r_star = min(max(-self.m / c4, 0.0), self.R)
        if not self.l0 + 2 * self.m * r_star + c4 * r_star**2 > 0:
            raise InvalidParamsError(f"density is not positive on [0, R] for {self}")

    @property
    def c(self) -> float:
        return self.phi0 * math.pi

    @property
    def total(self) -> float:
        """``T = l0 + m R + (4/3) c R^2``; the density's normaliser is ``T R``."""
        return self.l0 + self.m * self.R + 4 * self.c * self.R**2 / 3


def _check_support(r, R: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(~((r >= 0) & (r < R))):
        raise DomainError(f"r must lie in [0, R) = [0, {R})")
    return r


def _ret(x):
    return float(x) if np.ndim(x) == 0 else x


def density2d(r, p: Params2D):
    r = _check_support(r, p.R)
    return _ret((p.l0 + 2 * p.c * r) / (p.l0 * p.R + p.c * p.R**2))


def cdf2d(r, p: Params2D):
    r = np.clip(np.asarray(r, dtype=float), 0.0, p.R)
    return _ret((p.l0 * r + p.c * r**2) / (p.l0 * p.R + p.c * p.R**2))


@dataclass(frozen=True)
class Mixture2D:
    """``f = lam * f1 + (1 - lam) * f2``: uniform plus ``R * Beta(2, 1)``."""

    lam: float
    R: float

    def f1(self, r):
        return _ret(np.full_like(np.asarray(r, dtype=float), 1.0 / self.R))

    def f2(self, r):
        return _ret(2 * np.asarray(r, dtype=float) / self.R**2)

    def density(self, r):
        return _ret(self.lam * np.asarray(self.f1(r)) + (1 - self.lam) * np.asarray(self.f2(r)))


def mixture2d(p: Params2D) -> Mixture2D:
    return Mixture2D(p.l0 / (p.l0 + p.c * p.R), p.R)


def moments2d(p: Params2D) -> tuple[float, float]:
    """``(E D, Var D)``."""
    l0, R, c = p.l0, p.R, p.c
    s = l0 + c * R
    mean = (3 * l0 * R + 4 * c * R**2) / (6 * s)
    var = R**2 * (3 * l0**2 + 6 * c * R * l0 + 2 * c**2 * R**2) / (36 * s**2)
    return mean, var


def density3d(r, p: Params3D):
    r = _check_support(r, p.R)
    return _ret((p.l0 + 2 * p.m * r + 4 * p.c * r**2) / (p.total * p.R))


def cdf3d(r, p: Params3D):
    r = np.clip(np.asarray(r, dtype=float), 0.0, p.R)
    return _ret((p.l0 * r + p.m * r**2 + 4 * p.c * r**3 / 3) / (p.total * p.R))


@dataclass(frozen=True)
class Mixture3D:
    """Weights of uniform, ``R Beta(2,1)`` and ``R Beta(3,1)`` components."""

    weights: tuple[float, float, float]
    R: float

    @property
    def negative_weight(self) -> bool:
        return min(self.weights) < 0

    def components(self, r):
        r = np.asarray(r, dtype=float)
        R = self.R
        return np.full_like(r, 1.0 / R), 2 * r / R**2, 3 * r**2 / R**3

    def density(self, r):
        return _ret(sum(w * f for w, f in zip(self.weights, self.components(r))))


def mixture3d(p: Params3D) -> Mixture3D:
    t = p.total
    w = (p.l0 / t, p.m * p.R / t, 4 * p.c * p.R**2 / (3 * t))
    return Mixture3D(w, p.R)


@dataclass(frozen=True)
class Moments3D:
    mean: float
    mean2: float
    mean3: float
    cov: np.ndarray  # covariance of (D, D^2)


def raw_moment3d(k: int, p: Params3D) -> float:
    """``E D^k`` from the mixture: ``E (R Beta(j,1))^k = j R^k / (j + k)``."""
    w = mixture3d(p).weights
    return p.R**k * sum(wj * j / (j + k) for j, wj in zip((1, 2, 3), w))


def moments3d(p: Params3D) -> Moments3D:
    l0, m, R, c = p.l0, p.m, p.R, p.c
    t = p.total
    mean = (3 * l0 * R + 4 * m * R**2 + 6 * c * R**3) / (6 * t)
    mean2 = (10 * l0 * R**2 + 15 * m * R**3 + 24 * c * R**4) / (30 * t)
    mean3 = R**3 * (15 * l0 + 24 * m * R + 40 * c * R**2) / (60 * t)
    mean4 = raw_moment3d(4, p)
    cov = np.array(
        [
            [mean2 - mean**2, mean3 - mean * mean2],
            [mean3 - mean * mean2, mean4 - mean2**2],
        ]
    )
    return Moments3D(mean, mean2, mean3, cov)


def offset_boundary_measure(r, poly: VolumePolynomial):
    """Boundary measure of the offset ``B(S, r)``, i.e. ``V'(r)``."""
    r = np.asarray(r, dtype=float)
    if np.any(~((r > 0) & (r < poly.r_max))):
        raise DomainError(f"r must lie in (0, {poly.r_max})")
    return _ret(poly.derivative(r))


def distance_cdf(r, poly: VolumePolynomial, R: float):
    """``F(r) = (V(r) - mu) / (V(R) - mu)`` clipped to ``[0, R]``."""
    r = np.clip(np.asarray(r, dtype=float), 0.0, R)
    return _ret((poly(r) - poly.mu) / (poly(R) - poly.mu))


def params_from_polynomial(poly: VolumePolynomial, R: float) -> Params2D | Params3D:
    if poly.dimension == 2:
        return Params2D(poly.l0, R, poly.phi0)
    return Params3D(poly.l0, poly.m, R, poly.phi0)


def sample2d(p: Params2D, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws by inverting the quadratic CDF."""
    u = rng.uniform(size=n)
    a, b = p.c, p.l0
    target = u * (p.l0 * p.R + p.c * p.R**2)
    # Stable root of a r^2 + b r - target = 0.
    return 2 * target / (b + np.sqrt(b * b + 4 * a * target))


def sample3d(p: Params3D, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws by bisection on the monotone cubic CDF."""
    u = rng.uniform(size=n)
    lo = np.zeros(n)
    hi = np.full(n, p.R)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = cdf3d(mid, p) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def quantile_grid(cdf_params: Params2D | Params3D, n: int) -> np.ndarray:
    """Deterministic pseudo-sample: the ``(i - 1/2) / n`` quantiles."""
    u = (np.arange(n) + 0.5) / n
    lo = np.zeros(n)
    hi = np.full(n, cdf_params.R)
    cdf = cdf2d if isinstance(cdf_params, Params2D) else cdf3d
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = cdf(mid, cdf_params) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)
