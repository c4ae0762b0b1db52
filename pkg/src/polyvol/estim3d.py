"""Spatial estimators of the surface area ``L0`` and integrated mean curvature ``M``.

The density of D on ``[0, R)`` is ``(L + 2 M r + 4 c r^2) / (L R + M R^2 + 4 c R^3 / 3)``
with ``c = phi0 * pi``. It is the mixture ``lam1 f1 + lam2 f2 + lam3 f3`` of
``R Beta(j, 1)``, j = 1, 2, 3, with weights proportional to
``(L, M R, 4 c R^2 / 3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParamsError, OptimizerError, PoleError
from .model import Params3D, moments3d
from .sampler import DistanceSample

POLE_TOL = 1e-6
LAMBDA_CEIL = 1 - 1e-9
DEFAULT_BOX = ((0.0, 1e3), (-1e2, 1e3))


@dataclass(frozen=True)
class Estimate3D:
    l0: float
    m: float
    method: str
    n: int
    asymp_var_l0: float | None = None
    asymp_var_m: float | None = None
    pole_proximity: bool = False
    boundary_hit: bool = False
    clamp_applied: bool = False

    def __post_init__(self) -> None:
        for v in (self.asymp_var_l0, self.asymp_var_m):
            if v is not None and not v >= 0:
                raise InvalidParamsError("asymptotic variances must be nonnegative")

    @property
    def flags(self) -> list[str]:
        names = ("pole_proximity", "boundary_hit", "clamp_applied")
        return [f for f in names if getattr(self, f)]


def _c(phi0: float) -> float:
    if not phi0 > 0:
        raise InvalidParamsError(f"phi0 must be positive, got {phi0}")
    return phi0 * math.pi


def _pole(u: float, v: float, R: float) -> float:
    return R * R - 6 * u * R + 6 * v


def g1(u: float, v: float, R: float, phi0: float = 1.0) -> float:
    """Moment map ``(E D, E D^2) -> L0``."""
    den = _pole(u, v, R)
    if den == 0:
        raise PoleError("moment system is singular (R^2 - 6 u R + 6 v = 0)")
    return 2 * _c(phi0) * R**2 / 5 * (3 * R * R - 12 * u * R + 10 * v) / den


def g2(u: float, v: float, R: float, phi0: float = 1.0) -> float:
    """Moment map ``(E D, E D^2) -> M``."""
    den = _pole(u, v, R)
    if den == 0:
        raise PoleError("moment system is singular (R^2 - 6 u R + 6 v = 0)")
    return -4 * _c(phi0) * R / 5 * (3 * R * R - 16 * u * R + 15 * v) / den


def grad_g1(u: float, v: float, R: float, phi0: float = 1.0) -> np.ndarray:
    c, den2 = _c(phi0), _pole(u, v, R) ** 2
    return np.array(
        [12 * c * R**3 / 5 * (R * R - 2 * v) / den2, 8 * c * R**3 / 5 * (3 * u - 2 * R) / den2]
    )


def grad_g2(u: float, v: float, R: float, phi0: float = 1.0) -> np.ndarray:
    c, den2 = _c(phi0), _pole(u, v, R) ** 2
    return np.array(
        [-8 * c * R**2 * (R * R - 3 * v) / (5 * den2), 12 * c * R**2 * (R - 2 * u) / (5 * den2)]
    )


def population_gradients(l0: float, m: float, R: float, phi0: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``g1`` and ``g2`` at ``(E D, E D^2)`` in closed form."""
    c = _c(phi0)
    w = 4 * c * R**2 + 3 * m * R + 3 * l0
    grad1 = np.array(
        [3 * (5 * l0 - 4 * c * R**2) * w / (c * R**3), 5 * (2 * c * R**2 - 3 * l0) * w / (c * R**4)]
    )
    grad2 = np.array(
        [(32 * c * R + 15 * m) * w / (c * R**3), -15 * (2 * c * R + m) * w / (c * R**4)]
    )
    return grad1, grad2


def sigma_d_d2(l0: float, m: float, R: float, phi0: float = 1.0) -> np.ndarray:
    """Covariance matrix of ``(D, D^2)`` in closed form."""
    c = _c(phi0)
    L, M = l0, m
    w2 = (4 * c * R**2 + 3 * M * R + 3 * L) ** 2
    var_d = R**2 * (
        12 * c**2 * R**4 + 24 * c * M * R**3 + 10 * M**2 * R**2
        + 44 * c * L * R**2 + 30 * L * M * R + 15 * L**2
    ) / (20 * w2)
    var_d2 = R**4 * (
        768 * c**2 * R**4 + 1360 * c * M * R**3 + 525 * M**2 * R**2
        + 1920 * c * L * R**2 + 1260 * L * M * R + 560 * L**2
    ) / (700 * w2)
    cov = R**3 * (
        16 * c**2 * R**4 + 30 * c * M * R**3 + 12 * M**2 * R**2
        + 48 * c * L * R**2 + 32 * L * M * R + 15 * L**2
    ) / (20 * w2)
    return np.array([[var_d, cov], [cov, var_d2]])


def mom3d_asymp_var(l0: float, m: float, R: float, phi0: float = 1.0) -> tuple[float, float]:
    """Asymptotic variances of ``sqrt(n) (L_mom - L0)`` and ``sqrt(n) (M_mom - M)``."""
    Params3D(l0, m, R, phi0)
    sigma = sigma_d_d2(l0, m, R, phi0)
    grad1, grad2 = population_gradients(l0, m, R, phi0)
    return float(grad1 @ sigma @ grad1), float(grad2 @ sigma @ grad2)


def _plugin_vars(l0: float, m: float, R: float, phi0: float, n: int):
    try:
        v1, v2 = mom3d_asymp_var(l0, m, R, phi0)
    except InvalidParamsError:
        return None, None
    return v1 / n, v2 / n


def mom3d(sample: DistanceSample, phi0: float = 1.0) -> Estimate3D:
    sample.require_nonempty()
    R, d = sample.R, sample.values
    u, v = float(np.mean(d)), float(np.mean(d * d))
    l0, m = g1(u, v, R, phi0), g2(u, v, R, phi0)
    n = len(sample)
    var_l0, var_m = _plugin_vars(l0, m, R, phi0, n)
    near = abs(_pole(u, v, R)) < POLE_TOL * R * R
    return Estimate3D(l0, m, "MOM3D", n, var_l0, var_m, pole_proximity=near)


def lambda3_from_moments(m1: float, m2: float, m3: float, R: float) -> tuple[float, float, float]:
    """Mixture weights solving the three raw-moment equations."""
    R3 = R**3
    lam1 = 12 * (6 * R * R * m1 - 20 * R * m2 + 15 * m3) / R3
    lam2 = -30 * (4 * R * R * m1 - 15 * R * m2 + 12 * m3) / R3
    lam3 = 20 * (3 * R * R * m1 - 12 * R * m2 + 10 * m3) / R3
    return lam1, lam2, lam3


def lambda3_mom(sample: DistanceSample) -> tuple[float, float, float]:
    sample.require_nonempty()
    d = sample.values
    return lambda3_from_moments(float(np.mean(d)), float(np.mean(d**2)), float(np.mean(d**3)), sample.R)


def untruncated3d(lam1: float, lam2: float, R: float, phi0: float = 1.0) -> tuple[float, float]:
    """The series limits ``K -> infinity`` of ``truncated3d`` (requires ``a b < 1``)."""
    kappa = 4 * _c(phi0) * R**2 / 3
    a, b = lam1 / (1 - lam1), lam2 / (1 - lam2)
    l0 = kappa * a / (1 - lam2) / (1 - a * b)
    m = kappa / R * b * (a / (1 - lam2) / (1 - a * b) + 1)
    return l0, m


def truncated3d(
    lam1: float, lam2: float, K: int, R: float, phi0: float = 1.0, n: int = 0
) -> Estimate3D:
    """K-term truncations of the weight-ratio series for ``L0`` and ``M``.

    ``L0 = (4 c R^2 / 3) / lam2 * sum_j (a b)^j`` and
    ``M = (4 c R / 3) / (1 - lam2) * (sum_j (a b)^j + lam2)`` with
    ``a = lam1 / (1 - lam1)``, ``b = lam2 / (1 - lam2)``. The first is
    evaluated as ``sum_j a^j lam2^(j-1) / (1 - lam2)^j`` so ``lam2 = 0`` is fine.
    """
    if K < 1:
        raise InvalidParamsError(f"K must be at least 1, got {K}")
    kappa = 4 * _c(phi0) * R**2 / 3
    l1 = min(max(float(lam1), 0.0), LAMBDA_CEIL)
    l2 = min(max(float(lam2), 0.0), LAMBDA_CEIL)
    clamped = l1 != lam1 or l2 != lam2
    a, b = l1 / (1 - l1), l2 / (1 - l2)
    j = np.arange(1, K + 1)
    series_l0 = float(np.sum(a**j * l2 ** (j - 1) / (1 - l2) ** j))
    series_ab = float(np.sum((a * b) ** j))
    l0 = kappa * series_l0
    m = kappa / R / (1 - l2) * (series_ab + l2)
    return Estimate3D(l0, m, "TMOM3D", n, clamp_applied=clamped)


def tmom3d(sample: DistanceSample, K: int = 5, phi0: float = 1.0) -> Estimate3D:
    lam1, lam2, _ = lambda3_mom(sample)
    return truncated3d(lam1, lam2, K, sample.R, phi0, len(sample))


# --------------------------------------------------------------------------
# Maximum likelihood
# --------------------------------------------------------------------------


def loglik3d(l0: float, m: float, values: np.ndarray, R: float, phi0: float = 1.0) -> float:
    p = Params3D(l0, m, R, phi0)
    v = np.asarray(values, dtype=float)
    return float(np.sum(np.log((l0 + 2 * m * v + 4 * p.c * v * v) / (p.total * R))))


class _WeightProblem:
    """Log-likelihood in the weights ``(lam1, lam2)``; concave, with convex constraints."""

    def __init__(self, values: np.ndarray, R: float, c: float, box) -> None:
        self.R = R
        self.kappa = 4 * c * R**2 / 3
        s = values / R
        f1 = np.full_like(s, 1.0 / R)
        f2 = 2 * s / R
        self.f3 = 3 * s * s / R
        self.A = np.column_stack([f1 - self.f3, f2 - self.f3])
        (self.l_lo, self.l_hi), (self.m_lo, self.m_hi) = box

    def to_lm(self, th: np.ndarray) -> tuple[float, float]:
        lam3 = 1 - th[0] - th[1]
        return self.kappa * th[0] / lam3, self.kappa / self.R * th[1] / lam3

    def from_lm(self, l0: float, m: float) -> np.ndarray:
        t = l0 + m * self.R + self.kappa
        return np.array([l0 / t, m * self.R / t])

    def feasible(self, th: np.ndarray) -> bool:
        l1, l2 = th
        l3 = 1 - l1 - l2
        if not (l1 > 0 and l3 > 0):
            return False
        # Box in (L, M) is linear in the weights once multiplied by lam3 > 0.
        k = self.kappa
        if not (k * l1 > self.l_lo * l3 and k * l1 <= self.l_hi * l3):
            return False
        if not (self.m_lo * l3 <= k / self.R * l2 <= self.m_hi * l3):
            return False
        # Density shape l1 + 2 l2 s + 3 l3 s^2 must stay positive on [0, 1].
        s = min(max(-l2 / (3 * l3), 0.0), 1.0)
        return l1 + 2 * l2 * s + 3 * l3 * s * s > 0

    def value(self, th: np.ndarray) -> float:
        return float(np.sum(np.log(self.f3 + self.A @ th)))

    def derivatives(self, th: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = self.A / (self.f3 + self.A @ th)[:, None]
        return q.sum(axis=0), -(q.T @ q)


def mle3d(
    sample: DistanceSample,
    phi0: float = 1.0,
    box=DEFAULT_BOX,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> Estimate3D:
    """Maximum likelihood estimate of ``(L0, M)`` over a box.

    Damped Newton ascent in the mixture weights, where the log-likelihood is
    concave. Starts at the moment estimate when it is feasible.
    """
    sample.require_nonempty()
    R, n = sample.R, len(sample)
    prob = _WeightProblem(np.asarray(sample.values, dtype=float), R, _c(phi0), box)
    (l_lo, l_hi), (m_lo, m_hi) = box
    starts = []
    try:
        start = mom3d(sample, phi0)
        starts.append(prob.from_lm(start.l0, start.m))
    except PoleError:
        pass
    starts.append(np.array([1 / 3, 1 / 3]))
    # Fall back to points inside the box itself.
    l_mid = (max(l_lo, 0.0) + l_hi) / 2
    for m_try in (max(m_lo, 0.0), (m_lo + m_hi) / 2, m_hi):
        starts.append(prob.from_lm(l_mid, m_try))
    th = next((t for t in starts if np.all(np.isfinite(t)) and prob.feasible(t)), None)
    if th is None:
        raise OptimizerError("no feasible starting point inside the search box")
    f = prob.value(th)
    boundary = False
    for _ in range(max_iter):
        g, H = prob.derivatives(th)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        decrement = float(g @ step)
        if decrement < 0:
            step, decrement = g, float(g @ g)
        if decrement / 2 < tol:
            break
        t = 1.0
        blocked = False
        while t > 1e-14:
            cand = th + t * step
            if prob.feasible(cand):
                fc = prob.value(cand)
                if fc >= f + 1e-4 * t * decrement:
                    break
            else:
                blocked = True
            t *= 0.5
        else:
            # No admissible step. If a constraint blocked the search the
            # maximum sits on the boundary; otherwise we are at round-off level.
            boundary = blocked
            break
        th, f = cand, fc
    else:
        raise OptimizerError(f"Newton ascent did not converge in {max_iter} iterations")
    l0, m = prob.to_lm(th)
    return Estimate3D(float(l0), float(m), "MLE3D", n, boundary_hit=boundary)


def population_moments(l0: float, m: float, R: float, phi0: float = 1.0) -> tuple[float, float, float]:
    mo = moments3d(Params3D(l0, m, R, phi0))
    return mo.mean, mo.mean2, mo.mean3
