import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyvol import shapes
from polyvol.errors import InvalidParamsError, OptimizerError, PoleError
from polyvol.estim3d import (
    g1,
    g2,
    grad_g1,
    grad_g2,
    lambda3_from_moments,
    lambda3_mom,
    loglik3d,
    mle3d,
    mom3d,
    mom3d_asymp_var,
    population_gradients,
    population_moments,
    sigma_d_d2,
    tmom3d,
    truncated3d,
    untruncated3d,
)
from polyvol.model import Params3D, mixture3d, moments3d, quantile_grid, sample3d
from polyvol.sampler import DistanceSample

L0, M0, R0 = math.pi, 6.9404, 1.3
GRID = [
    (math.pi, 6.9404, 1.3),
    (math.pi, 6.9404, 1.9),
    (1.0, 0.5, 1.0),
    (10.0, 3.0, 0.4),
    (2.0, -0.5, 0.7),
    (0.3, 12.0, 2.5),
]


def _moment_sample(u, v, R):
    """Two-point sample with mean u and mean square v."""
    s = math.sqrt(v - u * u)
    return DistanceSample([u - s, u + s], R)


# --- moment maps -----------------------------------------------------------


@pytest.mark.criterion(10)
def test_mom3d_inverse_identity_cone_parameters():
    m1, m2, _ = population_moments(L0, M0, R0)
    assert g1(m1, m2, R0) == pytest.approx(L0, rel=1e-12)
    assert g2(m1, m2, R0) == pytest.approx(M0, rel=1e-12)
    est = mom3d(_moment_sample(m1, m2, R0))
    assert est.l0 == pytest.approx(L0, rel=1e-10)
    assert est.m == pytest.approx(M0, rel=1e-10)


@pytest.mark.criterion(10)
@pytest.mark.parametrize("l0,m,R", GRID)
@pytest.mark.parametrize("phi0", [1.0, 2.0])
def test_mom3d_inverse_identity_grid(l0, m, R, phi0):
    m1, m2, _ = population_moments(l0, m, R, phi0)
    assert g1(m1, m2, R, phi0) == pytest.approx(l0, rel=1e-8)
    assert g2(m1, m2, R, phi0) == pytest.approx(m, rel=1e-8, abs=1e-10)


def test_pole_denominator_closed_form():
    # R^2 - 6 E D R + 6 E D^2 = (2 pi R^4 / 5) / (3 L + 3 M R + 4 pi R^2)
    for l0, m, R in GRID:
        m1, m2, _ = population_moments(l0, m, R)
        den = R * R - 6 * m1 * R + 6 * m2
        assert den == pytest.approx(2 * math.pi * R**4 / 5 / (3 * l0 + 3 * m * R + 4 * math.pi * R**2), rel=1e-10)


def test_mom3d_pole():
    R = 1.0
    # u and v on the singular curve v = (6 u R - R^2) / 6
    u = 0.6
    v = (6 * u * R - R * R) / 6
    with pytest.raises(PoleError):
        g1(u, v, R)
    with pytest.raises(PoleError):
        g2(u, v, R)


def test_mom3d_pole_proximity_flag():
    R = 1.0
    u = 0.6
    v = (6 * u * R - R * R) / 6 + 1e-8
    est = mom3d(_moment_sample(u, v, R))
    assert est.pole_proximity


# --- asymptotic variances --------------------------------------------------


@pytest.mark.criterion(10)
@pytest.mark.parametrize("l0,m,R", GRID)
def test_gradients_match_finite_differences(l0, m, R):
    m1, m2, _ = population_moments(l0, m, R)
    grad1, grad2 = population_gradients(l0, m, R)
    hu, hv = 1e-6 * m1, 1e-6 * m2
    fd1 = [(g1(m1 + hu, m2, R) - g1(m1 - hu, m2, R)) / (2 * hu), (g1(m1, m2 + hv, R) - g1(m1, m2 - hv, R)) / (2 * hv)]
    fd2 = [(g2(m1 + hu, m2, R) - g2(m1 - hu, m2, R)) / (2 * hu), (g2(m1, m2 + hv, R) - g2(m1, m2 - hv, R)) / (2 * hv)]
    assert np.allclose(grad1, fd1, rtol=1e-6)
    assert np.allclose(grad2, fd2, rtol=1e-6)
    # General-point gradient formulas agree with the population closed forms.
    assert np.allclose(grad_g1(m1, m2, R), grad1, rtol=1e-9)
    assert np.allclose(grad_g2(m1, m2, R), grad2, rtol=1e-9)


@pytest.mark.parametrize("l0,m,R", GRID)
@pytest.mark.parametrize("phi0", [1.0, 0.5])
def test_sigma_closed_forms_match_moment_covariance(l0, m, R, phi0):
    try:
        p = Params3D(l0, m, R, phi0)
    except InvalidParamsError:
        pytest.skip("density not positive")
    assert np.allclose(sigma_d_d2(l0, m, R, phi0), moments3d(p).cov, rtol=1e-10, atol=1e-14)


@pytest.mark.criterion(10)
def test_asymptotic_variances_positive_on_grid():
    for l0 in (0.5, math.pi, 10.0):
        for m in (0.0, 3.0, 6.9404, 20.0):
            for R in np.linspace(0.3, 2.5, 12):
                v1, v2 = mom3d_asymp_var(l0, m, R)
                assert v1 > 0 and v2 > 0


@pytest.mark.criterion(10)
def test_variance_curves_single_trough():
    R = np.linspace(1.0, 2.5, 61)
    sd = np.sqrt(np.array([mom3d_asymp_var(L0, M0, r) for r in R]))
    for col in sd.T:
        assert np.all(np.isfinite(col)) and np.all(col > 0)
        d = np.sign(np.diff(col))
        # At most one change of direction, from falling to rising.
        changes = np.count_nonzero(np.diff(d[d != 0]))
        assert changes <= 1
        if changes:
            assert d[d != 0][0] < 0


def test_asymptotic_variance_matches_simulation():
    p = Params3D(L0, M0, R0)
    rng = np.random.default_rng(17)
    est = np.array([[e.l0, e.m] for e in (mom3d(DistanceSample(sample3d(p, 4000, rng), R0)) for _ in range(400))])
    v1, v2 = mom3d_asymp_var(L0, M0, R0)
    sd = est.std(axis=0) * math.sqrt(4000)
    assert sd[0] == pytest.approx(math.sqrt(v1), rel=0.15)
    assert sd[1] == pytest.approx(math.sqrt(v2), rel=0.15)


# --- lambda system and truncation ------------------------------------------


@pytest.mark.criterion(10)
@pytest.mark.parametrize("l0,m,R", GRID)
def test_lambda_system_at_population_moments(l0, m, R):
    m1, m2, m3 = population_moments(l0, m, R)
    lam = lambda3_from_moments(m1, m2, m3, R)
    assert np.allclose(lam, mixture3d(Params3D(l0, m, R)).weights, rtol=1e-9, atol=1e-12)
    assert sum(lam) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.criterion(10)
def test_lambda_system_pure_components():
    R = 1.7
    assert np.allclose(lambda3_from_moments(R / 2, R**2 / 3, R**3 / 4, R), (1, 0, 0), atol=1e-12)
    assert np.allclose(lambda3_from_moments(3 * R / 4, 3 * R**2 / 5, R**3 / 2, R), (0, 0, 1), atol=1e-12)
    assert np.allclose(lambda3_from_moments(2 * R / 3, R**2 / 2, 2 * R**3 / 5, R), (0, 1, 0), atol=1e-12)


def test_lambda3_mom_on_sample():
    d = np.array([0.2, 0.5, 0.9])
    lam = lambda3_mom(DistanceSample(d, 1.0))
    assert lam == lambda3_from_moments(d.mean(), (d**2).mean(), (d**3).mean(), 1.0)


@pytest.mark.criterion(10)
def test_truncated3d_zero_weights():
    est = truncated3d(0.0, 0.0, 5, 1.3)
    assert est.l0 == 0.0 and est.m == 0.0


@pytest.mark.criterion(10)
@pytest.mark.parametrize("lam1,lam2", [(0.1, 0.2), (0.16325755911481923, 0.46886874101309), (0.3, 0.05), (0.02, 0.0)])
def test_truncated3d_series_limit(lam1, lam2):
    lim = untruncated3d(lam1, lam2, 1.3)
    est = truncated3d(lam1, lam2, 400, 1.3)
    assert est.l0 == pytest.approx(lim[0], rel=1e-12)
    assert est.m == pytest.approx(lim[1], rel=1e-12)


def test_truncated3d_recovers_parameters_at_population_weights():
    lam1, lam2, _ = mixture3d(Params3D(L0, M0, R0)).weights
    l0, m = untruncated3d(lam1, lam2, R0)
    assert l0 == pytest.approx(L0, rel=1e-12) and m == pytest.approx(M0, rel=1e-12)


@pytest.mark.criterion(10)
@settings(max_examples=300, deadline=None)
@given(st.floats(-2, 3), st.floats(-2, 3), st.integers(1, 10))
def test_truncated3d_finite_and_bounded(lam1, lam2, K):
    est = truncated3d(lam1, lam2, K, 1.0)
    assert math.isfinite(est.l0) and math.isfinite(est.m)
    l1 = min(max(lam1, 0.0), 1 - 1e-9)
    l2 = min(max(lam2, 0.0), 1 - 1e-9)
    a, b = l1 / (1 - l1), l2 / (1 - l2)
    kappa = 4 * math.pi / 3
    # K-term partial-sum bounds.
    bound_l0 = kappa * K * max(1.0, a) ** K * max(1.0, b) ** (K - 1) / (1 - l2)
    bound_m = kappa / (1 - l2) * (K * max(1.0, a * b) ** K + l2)
    assert 0 <= est.l0 <= bound_l0 * (1 + 1e-12)
    assert 0 <= est.m <= bound_m * (1 + 1e-12)
    assert est.clamp_applied == (l1 != lam1 or l2 != lam2)


def test_tmom3d_on_sample():
    p = Params3D(L0, M0, R0)
    s = DistanceSample(sample3d(p, 20_000, np.random.default_rng(2)), R0)
    est = tmom3d(s, K=50)
    assert est.l0 == pytest.approx(L0, rel=0.3)
    with pytest.raises(InvalidParamsError):
        truncated3d(0.1, 0.1, 0, 1.0)


# --- maximum likelihood ----------------------------------------------------


@pytest.mark.criterion(10)
def test_mle3d_beats_truth_on_quantile_grid():
    p = Params3D(L0, M0, R0)
    q = quantile_grid(p, 5000)
    est = mle3d(DistanceSample(q, R0))
    assert not est.boundary_hit
    assert loglik3d(est.l0, est.m, q, R0) >= loglik3d(L0, M0, q, R0) - 1e-9
    assert est.l0 == pytest.approx(L0, rel=1e-3)
    assert est.m == pytest.approx(M0, rel=1e-3)


def test_mle3d_not_worse_than_mom_start():
    rng = np.random.default_rng(5)
    p = Params3D(L0, M0, R0)
    for _ in range(20):
        s = DistanceSample(sample3d(p, 2000, rng), R0)
        mle, mom = mle3d(s), mom3d(s)
        try:
            ll_mom = loglik3d(mom.l0, mom.m, s.values, R0)
        except InvalidParamsError:
            ll_mom = -math.inf
        assert loglik3d(mle.l0, mle.m, s.values, R0) >= ll_mom - 1e-9


def test_mle3d_stationary_point():
    p = Params3D(L0, M0, R0)
    x = sample3d(p, 3000, np.random.default_rng(8))
    est = mle3d(DistanceSample(x, R0))
    h = 1e-5
    for dl, dm in ((h, 0), (-h, 0), (0, h), (0, -h)):
        assert loglik3d(est.l0 + dl, est.m + dm, x, R0) <= loglik3d(est.l0, est.m, x, R0) + 1e-9


def test_mle3d_boundary_flag():
    # Mostly large distances pull L0 toward zero, onto the box edge.
    x = np.linspace(0.6, 1.0, 200)
    est = mle3d(DistanceSample(x, 1.0))
    assert est.boundary_hit
    tight = mle3d(DistanceSample(sample3d(Params3D(L0, M0, R0), 2000, np.random.default_rng(1)), R0), box=((0, 2.0), (-100, 1000)))
    assert tight.boundary_hit and tight.l0 == pytest.approx(2.0, rel=1e-6)


def test_mle3d_infeasible_box():
    with pytest.raises(OptimizerError):
        mle3d(DistanceSample([0.2, 0.4], 1.0), box=((5.0, 1.0), (0.0, 1.0)))


def test_cone_sample_estimates_near_truth():
    sh = shapes.cone()
    from polyvol.sampler import draw_sample

    s = draw_sample(sh, 1.3, 40_000, seed=3)
    mom, mle = mom3d(s), mle3d(s)
    assert mom.l0 == pytest.approx(math.pi, abs=0.5)
    assert mle.l0 == pytest.approx(math.pi, abs=0.5)


def test_mom3d_error_shrinks_with_n():
    p = Params3D(L0, M0, R0)
    rng = np.random.default_rng(40)
    errs = []
    for n in (5000, 20_000, 40_000):
        est = np.array([mom3d(DistanceSample(sample3d(p, n, rng), R0)).l0 for _ in range(200)])
        errs.append(np.median(np.abs(est - L0)))
    assert errs[0] > errs[1] > errs[2], errs
