"""Planar estimators of the boundary length ``L0`` and the mixture weight ``lam``.

Notation: ``c = phi0 * pi``; the density of D on ``[0, R)`` is
``(L + 2 c r) / (L R + c R^2)``, a mixture of the uniform law (weight
``lam = L / (L + c R)``) and ``R * Beta(2, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, InvalidParamsError, PoleError
from .sampler import DistanceSample

POLE_TOL = 1e-3
SEARCH_CAP_FACTOR = 1e3


@dataclass(frozen=True)
class Estimate:
    """Point estimate with its plug-in asymptotic variance and diagnostics.

    ``asymp_variance`` is the variance of the estimate itself, i.e. the
    asymptotic variance of ``sqrt(n) (T - theta)`` divided by ``n``.
    """

    value: float
    method: str
    n: int
    asymp_variance: float | None = None
    pole_proximity: bool = False
    boundary_hit: bool = False
    clamp_applied: bool = False

    def __post_init__(self) -> None:
        if self.asymp_variance is not None and not self.asymp_variance >= 0:
            raise InvalidParamsError("asymptotic variance must be nonnegative")

    @property
    def flags(self) -> list[str]:
        names = ("pole_proximity", "boundary_hit", "clamp_applied")
        return [f for f in names if getattr(self, f)]


def _check_phi0(phi0: float) -> float:
    if not phi0 > 0:
        raise InvalidParamsError(f"phi0 must be positive, got {phi0}")
    return phi0 * math.pi


def mom_l0_from_mean(mean: float, R: float, phi0: float = 1.0) -> float:
    """Inverse of ``E D = (3 L R + 4 c R^2) / (6 (L + c R))``."""
    c = _check_phi0(phi0)
    denom = 2 * mean - R
    if denom == 0:
        raise PoleError("sample mean equals R/2: the moment estimator is undefined")
    return (2 * c * R / 3) * (2 * R - 3 * mean) / denom


def mom_asymp_var(l0: float, R: float, phi0: float = 1.0) -> float:
    """Asymptotic variance of ``sqrt(n) (L_mom - L0)``.

    ``(L + cR)^2 (3 L^2 + 6 c R L + 2 c^2 R^2) / (c R)^2``; for ``phi0 = 1``
    this is ``(L + pi R)^2 [3 (1 + L / (pi R))^2 - 1]``.
    """
    c = _check_phi0(phi0)
    if not (l0 > 0 and R > 0):
        raise InvalidParamsError("need l0 > 0 and R > 0")
    cr = c * R
    return (l0 + cr) ** 2 * (3 * l0**2 + 6 * cr * l0 + 2 * cr**2) / cr**2


def mom_l0(sample: DistanceSample, phi0: float = 1.0) -> Estimate:
    sample.require_nonempty()
    R = sample.R
    mean = float(np.mean(sample.values))
    value = mom_l0_from_mean(mean, R, phi0)
    n = len(sample)
    var = mom_asymp_var(value, R, phi0) / n if value > 0 else None
    return Estimate(value, "MOM", n, var, pole_proximity=abs(2 * mean - R) < POLE_TOL * R)


def fisher_info2d(l0: float, R: float, phi0: float = 1.0) -> float:
    """Fisher information of one observation about ``L0``."""
    c = _check_phi0(phi0)
    if not (l0 > 0 and R > 0):
        raise InvalidParamsError("need l0 > 0 and R > 0")
    s = l0 + c * R
    x = 2 * c * R / l0
    if x > 1e-2:
        return (math.log1p(x) / (2 * c * R) - 1 / s) / s
    # log1p(x)/x - 1/(1 + x/2) cancels for small x; sum its series instead.
    bracket = sum((-x) ** k * (1 / (k + 1) - 0.5**k) for k in range(2, 14))
    return bracket / (s * l0)


def mle_asymp_var(l0: float, R: float, phi0: float = 1.0) -> float:
    return 1.0 / fisher_info2d(l0, R, phi0)


def score2d(l0: float, values: np.ndarray, R: float, phi0: float = 1.0) -> float:
    """Derivative of the log-likelihood in ``L0``.

    Written as ``sum c (R - 2 D_i) / ((L + 2 c D_i)(L + c R))`` so it stays
    accurate for large ``L``. It is not monotone in ``L`` but changes sign at
    most once, since the log-likelihood is concave in ``lam``.
    """
    c = phi0 * math.pi
    v = np.asarray(values, dtype=float)
    return float(np.sum(c * (R - 2 * v) / ((l0 + 2 * c * v) * (l0 + c * R))))


def mle_l0(sample: DistanceSample, phi0: float = 1.0, search_cap: float | None = None) -> Estimate:
    """Maximum likelihood estimate of ``L0`` on ``[0, search_cap]``."""
    sample.require_nonempty()
    c = _check_phi0(phi0)
    R, v, n = sample.R, sample.values, len(sample)
    cap = SEARCH_CAP_FACTOR * c * R if search_cap is None else float(search_cap)
    if not cap > 0:
        raise InvalidParamsError(f"search cap must be positive, got {cap}")
    if score2d(0.0, v, R, phi0) <= 0:
        return Estimate(0.0, "MLE", n, None, boundary_hit=True)
    if score2d(cap, v, R, phi0) >= 0:
        return Estimate(cap, "MLE", n, mle_asymp_var(cap, R, phi0) / n, boundary_hit=True)
    root = brentq(score2d, 0.0, cap, args=(v, R, phi0), xtol=1e-14, rtol=1e-12, maxiter=500)
    return Estimate(root, "MLE", n, mle_asymp_var(root, R, phi0) / n)


def lambda_from_mean(mean: float, R: float) -> float:
    # E D = 2R/3 - lam R/6
    return 4 - 6 * mean / R


def lambda_mom(sample: DistanceSample, clamp: bool = False) -> Estimate:
    """Moment estimate ``4 - 6 D_bar / R`` of the uniform weight."""
    sample.require_nonempty()
    lam = lambda_from_mean(float(np.mean(sample.values)), sample.R)
    clamped = min(max(lam, 0.0), 1.0)
    if clamp:
        return Estimate(clamped, "LAMBDA_MOM", len(sample), clamp_applied=clamped != lam)
    return Estimate(lam, "LAMBDA_MOM", len(sample))


def mixture_loglik(lam: float, values: np.ndarray, R: float) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sum(np.log(lam / R + (1 - lam) * 2 * v / R**2)))


@dataclass(frozen=True)
class EMResult:
    estimate: Estimate
    lambdas: list[float] = field(default_factory=list)
    logliks: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.lambdas) - 1


def lambda_em(
    sample: DistanceSample, tol: float = 1e-5, max_iter: int = 10_000, start: float = 0.5
) -> EMResult:
    """EM for the uniform / ``R Beta(2, 1)`` mixture weight."""
    sample.require_nonempty()
    if not tol > 0:
        raise InvalidParamsError(f"tolerance must be positive, got {tol}")
    R, v = sample.R, sample.values
    lam = start
    lams, lls = [lam], [mixture_loglik(lam, v, R)]
    for _ in range(max_iter):
        # E-step: posterior probability of the uniform component.
        a = lam / R
        y = a / (a + (1 - lam) * 2 * v / R**2)
        new = float(np.mean(y))
        lams.append(new)
        lls.append(mixture_loglik(new, v, R))
        if abs(new - lam) < tol:
            return EMResult(Estimate(new, "EM", len(sample)), lams, lls)
        lam = new
    raise ConvergenceError(f"EM did not reach tolerance {tol} in {max_iter} iterations")


def truncated_l0(
    lam: float, K: int, R: float, phi0: float = 1.0, method: str = "TMOM", n: int = 0
) -> Estimate:
    """``c R sum_{k=1..K} lam^k`` with ``lam`` clamped to ``[0, 1]``."""
    if K < 1:
        raise InvalidParamsError(f"K must be at least 1, got {K}")
    c = _check_phi0(phi0)
    clamped = min(max(float(lam), 0.0), 1.0)
    total = sum(clamped**k for k in range(1, K + 1))
    return Estimate(c * R * total, method, n, clamp_applied=clamped != lam)


def tmom_l0(sample: DistanceSample, K: int = 5, phi0: float = 1.0) -> Estimate:
    lam = lambda_mom(sample).value
    return truncated_l0(lam, K, sample.R, phi0, "TMOM", len(sample))


def tmle_l0(sample: DistanceSample, K: int = 5, phi0: float = 1.0, tol: float = 1e-5) -> Estimate:
    lam = lambda_em(sample, tol).estimate.value
    return truncated_l0(lam, K, sample.R, phi0, "TMLE", len(sample))
