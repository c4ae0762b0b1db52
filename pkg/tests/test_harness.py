import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyvol import estim2d, estim3d, shapes
from polyvol.errors import InvalidParamsError, RankDeficiencyError, ReplicationError
from polyvol.harness import (
    MAD_SCALE,
    ReplicationConfig,
    d_be,
    output_keys,
    replicate,
    robust_stats,
    run_replication,
    var_curve,
    vol_fit,
)
from polyvol.sampler import derive_seed, draw_sample

# --- metrics ---------------------------------------------------------------


@pytest.mark.criterion(10)
def test_dbe_examples():
    assert d_be([math.pi] * 5, math.pi) == 0.0
    assert d_be([2.0], 1.0) == 0.5
    assert d_be([math.inf], 1.0) == 1.0
    assert d_be([1e308 * 10, -math.inf, math.nan], 0.0) == 1.0
    assert d_be([1e12], 0.0) == pytest.approx(1.0, abs=1e-11)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(allow_nan=True, allow_infinity=True), min_size=1, max_size=30), st.floats(-1e6, 1e6))
def test_dbe_in_unit_interval(ts, theta):
    v = d_be(ts, theta)
    assert 0.0 <= v <= 1.0


def test_dbe_validates():
    with pytest.raises(InvalidParamsError):
        d_be([], 1.0)
    with pytest.raises(InvalidParamsError):
        d_be([1.0], math.nan)


@pytest.mark.criterion(10)
def test_robust_stats_examples():
    assert robust_stats([1, 2, 3]) == (2.0, MAD_SCALE)
    assert robust_stats([4.5] * 7) == (4.5, 0.0)
    assert robust_stats([1, 2, 3, 10])[0] == 2.5


@pytest.mark.criterion(10)
def test_scaled_mad_is_consistent_for_gaussian():
    z = np.random.default_rng(99).standard_normal(100_000)
    med, mad = robust_stats(z)
    assert mad == pytest.approx(1.0, rel=0.02)
    assert abs(med) < 0.02


# --- replication -----------------------------------------------------------


def _config(**kw):
    base = dict(shape=shapes.two_disk(), R=1.0, n=200, B=8, master_seed=5)
    base.update(kw)
    return ReplicationConfig(**base)


def test_config_validation():
    for bad in (dict(n=1), dict(B=0), dict(K=0), dict(em_tolerance=0.0), dict(R=0.0), dict(methods=("MOM3D",))):
        with pytest.raises(InvalidParamsError):
            _config(**bad)
    with pytest.raises(InvalidParamsError):
        ReplicationConfig(shapes.cone(), 1.3, 100, 2, methods=("MOM",))


def test_config_round_trip_and_fixture_names():
    cfg = _config(methods=("mom", "tmle"), K=7)
    assert cfg.methods == ("MOM", "TMLE")
    assert ReplicationConfig.from_dict(cfg.to_dict()) == cfg
    named = ReplicationConfig.from_dict({"shape": "cone", "R": 1.3, "n": 50, "B": 2, "methods": ["MOM3D"]})
    assert named.shape == shapes.cone()
    with pytest.raises(InvalidParamsError):
        ReplicationConfig.from_dict({"shape": "nope", "R": 1, "n": 5, "B": 1})
    with pytest.raises(InvalidParamsError):
        ReplicationConfig.from_dict({"shape": "cone", "R": 1, "n": 5, "B": 1, "colour": "red"})


def test_default_phi0_and_targets_come_from_the_shape():
    cfg = _config()
    assert cfg.effective_phi0 == 2.0
    assert cfg.resolved_targets() == {m: pytest.approx(math.pi) for m in ("MOM", "MLE", "TMOM", "TMLE")}
    c3 = ReplicationConfig(shapes.cone(), 1.3, 100, 2, methods=("MOM3D", "MLE3D"))
    t = c3.resolved_targets()
    assert set(t) == set(output_keys(("MOM3D", "MLE3D")))
    assert t["MOM3D:M"] == pytest.approx(c3.shape.analytic_volume().m)


@pytest.mark.criterion(10)
def test_replication_uses_derived_seed_and_all_methods():
    cfg = _config()
    rec = run_replication(cfg, 3)
    assert rec["seed"] == derive_seed(5, 3)
    s = draw_sample(cfg.shape, 1.0, 200, rec["seed"])
    assert rec["values"]["MOM"] == estim2d.mom_l0(s, 2.0).value
    assert rec["values"]["MLE"] == estim2d.mle_l0(s, 2.0).value
    assert rec["values"]["TMOM"] == estim2d.tmom_l0(s, 5, 2.0).value
    assert rec["values"]["TMLE"] == estim2d.tmle_l0(s, 5, 2.0).value


@pytest.mark.criterion(10)
def test_single_replication_summary():
    summ = replicate(_config(B=1))
    for k, st_ in summ.stats.items():
        assert st_.median == summ.estimates[k][0]
        assert st_.scaled_mad == 0.0


@pytest.mark.criterion(10)
def test_csv_byte_identical_across_worker_counts():
    cfg = _config(B=9, methods=("MOM", "MLE", "TMLE"))
    a = replicate(cfg, workers=1).to_csv()
    b = replicate(cfg, workers=3).to_csv()
    c = replicate(cfg, workers=1).to_csv()
    assert a == b == c
    assert a.splitlines()[0] == "replication,seed,MOM,MLE,TMLE"
    assert replicate(_config(B=9, master_seed=6, methods=("MOM",))).to_csv() != replicate(
        _config(B=9, methods=("MOM",))
    ).to_csv()


def test_3d_replication_keys():
    cfg = ReplicationConfig(shapes.cone(), 1.3, 500, 3, methods=("MOM3D", "TMOM3D"), master_seed=1)
    summ = replicate(cfg)
    assert list(summ.estimates) == ["MOM3D:L0", "MOM3D:M", "TMOM3D:L0", "TMOM3D:M"]
    s = draw_sample(cfg.shape, 1.3, 500, summ.seeds[0])
    e = estim3d.mom3d(s, 1.0)
    assert summ.estimates["MOM3D:L0"][0] == e.l0 and summ.estimates["MOM3D:M"][0] == e.m


def test_summary_invariants():
    summ = replicate(_config(B=20, n=100))
    for s in summ.stats.values():
        assert 0.0 <= s.mean_dbe <= 1.0
        assert s.scaled_mad >= 0
    lines = summ.summary_csv().splitlines()
    assert lines[0] == "key,median,scaled_mad,mean_dbe,failures,flagged"
    assert len(lines) == 5


def test_failures_are_counted_then_fatal(monkeypatch):
    from polyvol import harness
    from polyvol.errors import ConvergenceError

    calls = {"n": 0}
    real = harness.apply_method

    def flaky(method, sample, config):
        if method == "TMLE":
            calls["n"] += 1
            if calls["n"] % 4 == 0:
                raise ConvergenceError("forced")
        return real(method, sample, config)

    monkeypatch.setattr(harness, "apply_method", flaky)
    summ = replicate(_config(B=8))
    assert summ.failures["TMLE"] == 2 and summ.stats["TMLE"].failures == 2
    assert np.isnan(summ.estimates["TMLE"]).sum() == 2
    assert np.isfinite(summ.stats["TMLE"].median)

    def broken(method, sample, config):
        if method == "MLE":
            raise ConvergenceError("always")
        return real(method, sample, config)

    monkeypatch.setattr(harness, "apply_method", broken)
    with pytest.raises(ReplicationError):
        replicate(_config(B=4))


def test_warning_when_band_exceeds_polynomial_range():
    summ = replicate(_config(R=3.0, B=1, methods=("MOM",)))
    assert any("exceeds" in w for w in summ.warnings)
    hull = shapes.ConvexPolygon(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)))
    assert replicate(ReplicationConfig(hull, 0.3, 50, 1, methods=("MOM",))).warnings == []


def test_dbe_non_increasing_in_n():
    base = dict(shape=shapes.two_disk(), R=1.0, B=200, methods=("MOM", "MLE", "TMOM", "TMLE"), master_seed=11)
    dbe = {n: replicate(ReplicationConfig(n=n, **base), workers=4).stats for n in (100, 1000, 20_000)}
    for m in base["methods"]:
        seq = [dbe[n][m].mean_dbe for n in (100, 1000, 20_000)]
        assert seq[0] >= seq[1] >= seq[2], (m, seq)


# --- variance curves -------------------------------------------------------


@pytest.mark.criterion(10)
def test_varcurve_mle_below_mom():
    curve = var_curve(math.pi, np.linspace(1, 2.5, 31))
    assert np.all(curve.columns["sd_mle"] < curve.columns["sd_mom"])
    csv = curve.to_csv().splitlines()
    assert csv[0] == "R,sd_mom,sd_mle" and len(csv) == 32
    svg = curve.to_svg()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2


@pytest.mark.criterion(10)
def test_varcurve_single_point():
    curve = var_curve(math.pi, [1.0])
    assert len(curve.R) == 1
    assert curve.columns["sd_mom"][0] == pytest.approx(math.sqrt(44) * math.pi, rel=1e-12)
    assert "<polyline" in curve.to_svg()


@pytest.mark.criterion(10)
def test_varcurve_3d_finite_positive():
    poly = shapes.cone().analytic_volume()
    curve = var_curve(poly.l0, np.linspace(0.5, 2.5, 21), dimension=3, m=poly.m)
    for col in curve.columns.values():
        assert np.all(np.isfinite(col)) and np.all(col > 0)


def test_varcurve_validates():
    with pytest.raises(InvalidParamsError):
        var_curve(1.0, [])
    with pytest.raises(InvalidParamsError):
        var_curve(1.0, [1.0], dimension=3)
    with pytest.raises(InvalidParamsError):
        var_curve(1.0, [1.0], dimension=4)


# --- volume fits -----------------------------------------------------------


def _within(fit, truth, k=3.0):
    return np.all(np.abs(fit.coefficients - np.asarray(truth)) < k * fit.se)


@pytest.mark.criterion(10)
def test_volfit_unit_ball_steiner():
    fit = vol_fit(shapes.Ball(), np.linspace(0.1, 1.0, 10), 400_000, 3, seed=4)
    assert _within(fit, [4 * math.pi / 3, 4 * math.pi, 4 * math.pi, 4 * math.pi / 3])
    assert fit.to_csv().splitlines()[0] == "power,coefficient,se"


@pytest.mark.criterion(10)
def test_volfit_touching_balls():
    fit = vol_fit(shapes.touching_balls(), np.linspace(0.1, 1.0, 10), 400_000, 3, seed=5)
    assert _within(fit, [8 * math.pi / 3, 8 * math.pi, 6 * math.pi, 4 * math.pi / 3])


@pytest.mark.criterion(10)
def test_volfit_two_disk_linear_and_quadratic():
    poly = shapes.two_disk().analytic_volume()
    fit = vol_fit(shapes.two_disk(), np.linspace(0.1, 1.0, 10), 400_000, 2, seed=6)
    assert _within(fit, poly.coefficients[:3])
    assert fit.coefficients[1] == pytest.approx(math.pi, abs=0.1)
    assert fit.coefficients[2] == pytest.approx(2 * math.pi, abs=0.1)


def test_volfit_rank_deficiency():
    with pytest.raises(RankDeficiencyError):
        vol_fit(shapes.Ball(), [0.5, 0.5, 0.5, 0.5], 10_000, 3)
    with pytest.raises(RankDeficiencyError):
        vol_fit(shapes.Ball(), [0.2, 0.4, 0.6], 10_000, 3)
    with pytest.raises(InvalidParamsError):
        vol_fit(shapes.Ball(), [0.2, 0.4, 0.6], 10_000, 4)


def test_volfit_residual_flags_wrong_model():
    # A quadratic cannot describe a ball's cubic volume.
    good = vol_fit(shapes.Ball(), np.linspace(0.1, 2.0, 10), 400_000, 3, seed=9)
    bad = vol_fit(shapes.Ball(), np.linspace(0.1, 2.0, 10), 400_000, 2, seed=9)
    assert good.max_residual < 4 < bad.max_residual
