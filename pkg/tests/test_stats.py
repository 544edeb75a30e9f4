import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sst

from riskladder.fluctuation import ladder_context
from riskladder.model import JumpDistribution
from riskladder.pk_engine import INTEGRATED_TAIL
from riskladder.simulator import PathEvent, Probes, SimConfig, batch_simulate, scripted_run, \
    summarize_runs
from riskladder.stats import (FAIL, INCONCLUSIVE, PASS, CheckReport, EmpiricalCDF,
                              decomposition_check, independence_check, joint_law_check,
                              ks_distance, ks_two_sample, occupation_check, overshoot_check,
                              proportion_ci, standardized_mean, tv_geometric, two_sample_band)

from conftest import SQRT2, cp_model

EXP1 = sst.expon().cdf


def test_ecdf_basic():
    f = EmpiricalCDF([3.0, 1.0, 2.0, 2.0])
    assert f(0.5) == 0 and f(1.0) == 0.25 and f(2.0) == 0.75 and f(10) == 1.0
    assert f.left(2.0) == 0.25
    xs, fs = f.table()
    np.testing.assert_array_equal(xs, [1, 2, 3])
    np.testing.assert_array_equal(fs, [0.25, 0.75, 1.0])
    with pytest.raises(ValueError):
        EmpiricalCDF([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_ecdf_is_a_cdf(xs):
    f = EmpiricalCDF(xs)
    grid = np.sort(np.concatenate([xs, np.linspace(-2e6, 2e6, 11)]))
    vals = f(grid)
    assert np.all((vals >= 0) & (vals <= 1)) and np.all(np.diff(vals) >= 0)


def test_ks_quantile_sample():
    n = 200
    sample = sst.expon.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert ks_distance(EmpiricalCDF(sample), EXP1) <= 0.5 / n + 1e-12


def test_ks_single_sample():
    assert ks_distance(EmpiricalCDF([math.log(2)]), EXP1) == pytest.approx(0.5)


def test_ks_large_sample():
    rng = np.random.default_rng(0)
    assert ks_distance(EmpiricalCDF(rng.exponential(size=100_000)), EXP1) <= 0.01


def test_ks_matches_scipy_for_continuous_reference():
    rng = np.random.default_rng(1)
    x = rng.normal(size=500)
    assert ks_distance(EmpiricalCDF(x), sst.norm.cdf) == pytest.approx(
        sst.kstest(x, "norm").statistic, abs=1e-14)


def test_ks_with_reference_atom():
    # reference: atom 0.4 at zero, then Exp(1) scaled; a sample matching the atom
    ref = lambda x: np.where(np.asarray(x) < 0, 0.0, 0.4 + 0.6 * EXP1(x))
    sample = np.r_[np.zeros(400), sst.expon.ppf((np.arange(1, 601) - 0.5) / 600)]
    assert ks_distance(EmpiricalCDF(sample), ref) <= 0.5 / 1000 + 1e-9


def test_two_sample_ks_matches_scipy():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=700), rng.normal(0.1, size=450)
    assert ks_two_sample(a, b) == pytest.approx(sst.ks_2samp(a, b).statistic, abs=1e-14)
    c = np.round(a, 1)
    d = np.round(b, 1)
    assert ks_two_sample(c, d) == pytest.approx(sst.ks_2samp(c, d).statistic, abs=1e-14)


def test_band():
    assert two_sample_band(10_000, 10_000) == pytest.approx(1.63 * math.sqrt(2e-4))


def test_independence_null_and_alternative():
    rng = np.random.default_rng(3)
    values = rng.exponential(size=20_000)
    flags = rng.random(20_000) < 0.5
    assert independence_check(values, flags).status == PASS
    shifted = values + flags
    assert independence_check(shifted, flags).status == FAIL


def test_independence_small_group_is_inconclusive():
    values = np.arange(3000.0)
    flags = np.zeros(3000, bool)
    flags[:10] = True
    assert independence_check(values, flags).status == INCONCLUSIVE


def test_independence_calibration():
    rng = np.random.default_rng(4)
    fails = 0
    for _ in range(100):
        values = rng.exponential(size=4000)
        flags = rng.random(4000) < 0.4
        fails += independence_check(values, flags).status == FAIL
    assert fails <= 5


def test_wilson_interval():
    lo, hi = proportion_ci(0, 50)
    assert lo == 0.0 and hi > 0
    lo, hi = proportion_ci(50, 50)
    assert hi == 1.0 and lo < 1
    lo, hi = proportion_ci(5000, 10_000)
    assert (hi - lo) / 2 == pytest.approx(0.0129, abs=5e-5)
    with pytest.raises(ValueError):
        proportion_ci(1, 0)


def test_standardized_mean():
    mean, se, stat = standardized_mean([1.0, 3.0])
    assert mean == 2.0 and se == pytest.approx(1.0) and stat == pytest.approx(2.0)
    assert standardized_mean([0.0, 0.0])[2] == 0.0
    assert standardized_mean([1.0, 1.0])[2] == math.inf


def test_tv_geometric():
    rho = 0.4
    pmf = (1 - rho) * rho ** np.arange(60)
    assert tv_geometric(pmf * 1e12, rho) < 1e-12
    assert tv_geometric([1, 0, 0], 0.5) == pytest.approx(0.5)


def test_report_status_follows_threshold():
    from riskladder.stats import _report

    assert _report("x", 0.1, 0.1, (1,)).status == PASS
    assert _report("x", 0.11, 0.1, (1,)).status == FAIL
    assert _report("x", math.nan, 0.1, (1,)).status == FAIL
    r = CheckReport("x", 1.0, 2.0, PASS, (3,))
    assert r.passed and r.to_dict()["status"] == "pass"


# -- checks on simulated data ---------------------------------------------

@pytest.fixture(scope="module")
def m2_summary():
    model = cp_model()
    probes = Probes(occupation=[(1.0, 2.0), (1e9, 1e9)])
    return model, batch_simulate(model, SimConfig(20_000, 1e-3, 17), probes)


def test_checks_are_reproducible(m2_summary):
    model, s = m2_summary
    ctx = ladder_context(model)
    assert occupation_check(s, ctx, 1.0, 2.0) == occupation_check(s, ctx, 1.0, 2.0)
    assert overshoot_check(s, ctx) == overshoot_check(s, ctx)


def test_occupation_limit_case(m2_summary):
    model, s = m2_summary
    ctx = ladder_context(model)
    assert occupation_check(s, ctx, 1e9, 1e9).status == PASS
    assert occupation_check(s, ctx, 1.0, 2.0).status == PASS


def test_occupation_without_claims():
    model = cp_model(lam=0.0, premium=0.3, vol=1.0)
    s = batch_simulate(model, SimConfig(4000, 2e-3, 5), Probes(occupation=[(0.5, 1.0)]))
    assert not s.sigma_le_tau.any()
    assert occupation_check(s, ladder_context(model), 0.5, 1.0).statistic <= 3.5


def test_joint_law_beyond_support():
    model = cp_model(premium=3.0, lam=1.0, law=JumpDistribution.deterministic(1.0))
    s = batch_simulate(model, SimConfig(3000, 1e-3, 5))
    rep = joint_law_check(s, ladder_context(model), 0.6, 5.0, 0.5)
    assert rep.details["lhs"] == 0.0 and rep.details["rhs"] == 0.0 and rep.status == PASS


def test_joint_law_small_x_z_is_p_tau_identity(m2_summary):
    model, s = m2_summary
    ctx = ladder_context(model)
    rep = joint_law_check(s, ctx, 1e-9, 1e9, 1e-9)
    assert rep.status == PASS
    # z -> 0 keeps only paths with a positive gap; for M2 that is every epoch
    assert rep.details["lhs"] == pytest.approx(s.sigma_le_tau.mean())


def test_joint_law_forms_differ(m2_summary):
    model, s = m2_summary
    ctx = ladder_context(model)
    assert joint_law_check(s, ctx, 1.0, 3.0, 0.2).status == PASS
    assert joint_law_check(s, ctx, 1.0, 3.0, 0.2, form=INTEGRATED_TAIL).status == FAIL


def test_overshoot_deterministic_support():
    model = cp_model(premium=3.0, lam=1.0, law=JumpDistribution.deterministic(1.0))
    s = batch_simulate(model, SimConfig(3000, 1e-3, 6))
    assert s.overshoots.max() <= 1.0
    band = 1.63 / math.sqrt(s.overshoots.size)
    assert overshoot_check(s, ladder_context(model), band, min_samples=100).status == PASS


def test_overshoot_too_few_is_inconclusive():
    model = cp_model()
    s = batch_simulate(model, SimConfig(50, 1e-3, 6))
    assert overshoot_check(s, ladder_context(model)).status == INCONCLUSIVE


def test_decomposition_check_flags_nonpositive_jump():
    run = scripted_run(cp_model(premium=1.0), 3.0, [PathEvent(1.0, 2.0, "claim")])
    s = summarize_runs([run])
    assert decomposition_check(s).status == PASS
    bad = s.subset(np.array([0]))
    object.__setattr__(bad, "min_jump", np.array([0.0]))
    assert decomposition_check(bad).status == FAIL
