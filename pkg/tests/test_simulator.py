import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sst

from riskladder.model import JumpDistribution, ModelSpec
from riskladder.simulator import (CLAIM, PERTURBATION, ConfigError, PathEvent, Probes, SimConfig,
                                  batch_simulate, build_run, detect_modified_ladder,
                                  first_passage, occupation_time, scripted_run,
                                  simulate_killed_run, summarize_runs)

from conftest import SQRT2, cp_model

DRIFT = ModelSpec.build(1.0, 0.1)
UNIT = cp_model(premium=1.0, lam=1.0)


def claim(t, size):
    return PathEvent(t, size, CLAIM)


# -- configuration --------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(n_paths=0, dt=1e-3, master_seed=1)
    with pytest.raises(ConfigError):
        SimConfig(n_paths=1, dt=0.0, master_seed=1)


def test_dt_guard(m1):
    SimConfig(1, 0.004, 1).check_guard(m1)
    with pytest.raises(ConfigError):
        SimConfig(1, 0.005, 1).check_guard(m1)
    with pytest.raises(ConfigError):
        simulate_killed_run(m1, SimConfig(1, 0.01, 1), 0)


def test_probes_must_be_positive():
    with pytest.raises(ConfigError):
        Probes(occupation=[(0.0, 1.0)])


# -- hand traces ----------------------------------------------------------

def test_pure_drift_path():
    run = scripted_run(DRIFT, 2.5, [])
    assert run.Shat_tau == 0.0 and run.S_tau == 2.5 and run.I_tau == 0.0
    dec = detect_modified_ladder(run)
    assert dec.N_tau == 0 and dec.shat_pre_sigma == 0.0


def test_single_forced_claim():
    run = scripted_run(UNIT, 3.0, [claim(1.0, 2.0)])
    k = int(np.searchsorted(run.times, 1.0))
    assert run.x_pre[k] == 1.0 and run.x_post[k] == -1.0
    assert run.shat_before()[k] == 0.0 and run.shat_after()[k] == 1.0
    dec = detect_modified_ladder(run)
    np.testing.assert_array_equal(dec.sigmas, [1.0])
    assert dec.L_parts[0] == 0.0 and dec.J_parts[0] == 1.0
    assert dec.gap_at_sigma == 1.0
    assert run.Shat_tau == 1.0 and dec.residual() == 0.0


def test_small_claim_is_not_an_epoch():
    run = scripted_run(UNIT, 3.0, [claim(1.0, 0.5)])
    dec = detect_modified_ladder(run)
    assert dec.N_tau == 0 and run.Shat_tau == 0.0


def test_perturbation_jump_never_triggers_sigma():
    model = cp_model(premium=1.0, lam=1.0, neg_jump_intensity=1.0,
                     neg_jump_law=JumpDistribution.exponential(1.0))
    run = scripted_run(model, 3.0, [PathEvent(1.0, 5.0, PERTURBATION)])
    dec = detect_modified_ladder(run)
    assert dec.N_tau == 0
    assert run.Shat_tau > 0 and dec.shat_pre_sigma == run.Shat_tau


def test_two_epochs_decomposition():
    # X: t up to 1, drop 2 -> -1; rise to 0 at 2; drop 3 -> -3; up to -2 at tau = 3
    run = scripted_run(UNIT, 3.0, [claim(1.0, 2.0), claim(2.0, 3.0)])
    dec = detect_modified_ladder(run)
    np.testing.assert_array_equal(dec.sigmas, [1.0, 2.0])
    np.testing.assert_allclose(dec.J_parts, [1.0, 2.0])
    np.testing.assert_allclose(dec.L_parts, [0.0, 0.0, 0.0])
    assert run.Shat_tau == 3.0


def test_first_passage_hand_trace():
    run = scripted_run(UNIT, 3.0, [claim(1.0, 2.0)])
    assert first_passage(run, 0.5) == (True, 1.0)
    assert first_passage(run, 1.0) == (False, None)
    assert first_passage(scripted_run(DRIFT, 2.0, []), 1.0) == (False, None)


def test_first_passage_continuous_crossing():
    # no Brownian part, negative drift: X = -t, crosses -y = -0.5 at t = 0.5
    run = scripted_run(ModelSpec.build(-1.0, 0.1), 2.0, [])
    hit, t = first_passage(run, 0.5)
    assert hit and t == pytest.approx(0.5)


def test_occupation_pure_drift():
    run = scripted_run(DRIFT, 2.0, [])
    assert occupation_time(run, 0.5, 10.0) == pytest.approx(0.5)
    assert occupation_time(run, 1e9, 10.0) == pytest.approx(2.0)


def test_occupation_stops_at_sigma():
    run = scripted_run(UNIT, 3.0, [claim(1.0, 2.0)])
    assert occupation_time(run, 1e9, 10.0) == pytest.approx(1.0)
    assert occupation_time(run, 0.25, 10.0) == pytest.approx(0.25)


def test_occupation_reflected_linear():
    # X = -t on [0, 2]: gap is 0 throughout, passage above y = 0.5 at t = 0.5
    run = scripted_run(ModelSpec.build(-1.0, 0.1), 2.0, [])
    assert occupation_time(run, 0.1, 0.5) == pytest.approx(0.5)
    # claim-free paths with a jump of the perturbation: gap after a drop is reset
    model = ModelSpec.build(1.0, 0.1, neg_jump_intensity=1.0,
                            neg_jump_law=JumpDistribution.exponential(1.0))
    run = scripted_run(model, 3.0, [PathEvent(1.0, 0.5, PERTURBATION)])
    # slope is 1 + 1 (compensation): X = 2t to 2, drop to 1.5, then gap 1.5 + 2 (t - 1)
    assert occupation_time(run, 1.0, 10.0) == pytest.approx(0.5)


def test_occupation_small_x_brownian():
    model = cp_model(lam=0.0, vol=1.0)
    vals = [occupation_time(simulate_killed_run(model, SimConfig(1, 1e-3, 3), i), 1e-4, 50.0)
            for i in range(20)]
    assert np.mean(vals) < 0.05


# -- invariants on random paths --------------------------------------------

@pytest.fixture(scope="module")
def m1_runs():
    model = cp_model(vol=SQRT2)
    cfg = SimConfig(300, 2e-3, 11)
    return [simulate_killed_run(model, cfg, i) for i in range(300)]


def test_runs_are_deterministic(m1):
    cfg = SimConfig(5, 2e-3, 99)
    a, b = simulate_killed_run(m1, cfg, 3), simulate_killed_run(m1, cfg, 3)
    for f in ("times", "x_pre", "x_post", "seg_max", "seg_min"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert a.tau == b.tau and a.events == b.events
    c = simulate_killed_run(m1, cfg, 4)
    assert c.tau != a.tau


def test_run_invariants(m1_runs):
    for run in m1_runs:
        assert run.x_post[0] == 0.0 and run.times[0] == 0.0 and run.times[-1] == run.tau
        assert np.all(np.diff(run.times) >= 0)
        assert run.Shat_tau == -run.I_tau
        assert np.all(run.seg_max >= np.maximum(run.x_pre, np.r_[0, run.x_post[:-1]]))
        assert np.all(run.seg_min <= np.minimum(run.x_pre, np.r_[0, run.x_post[:-1]]))
        times = [e.time for e in run.events]
        assert times == sorted(times) and all(e.size > 0 for e in run.events)


def test_decomposition_invariants(m1_runs):
    for run in m1_runs:
        dec = detect_modified_ladder(run)
        assert dec.residual() <= 1e-9
        assert np.all(dec.J_parts > 0) and np.all(dec.L_parts >= 0)
        assert np.all(np.diff(dec.sigmas) > 0)
        assert dec.N_tau == dec.J_parts.size == dec.L_parts.size - 1


def test_epoch_condition(m1_runs):
    for run in m1_runs[:50]:
        dec = detect_modified_ladder(run)
        before = run.shat_before()
        for e in run.events:
            k = int(np.searchsorted(run.times, e.time))
            gap = before[k] + run.x_pre[k]
            assert (e.time in dec.sigmas) == (e.size > gap)


def test_passage_consistency_and_monotone(m1_runs):
    for run in m1_runs[:100]:
        prev = True
        for y in (0.1, 0.5, 1.0, 2.0, 5.0):
            hit, t = first_passage(run, y)
            assert hit == (run.Shat_tau > y)
            assert (t is None) == (not hit)
            assert prev or not hit
            prev = hit


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 4.99), st.floats(0.01, 4.0)), max_size=8),
       st.floats(0.2, 3.0))
def test_scripted_decomposition_property(events, premium):
    model = cp_model(premium=premium, lam=1.0)
    ev = {round(t, 6): s for t, s in events}
    run = scripted_run(model, 5.0, [claim(t, s) for t, s in ev.items()])
    dec = detect_modified_ladder(run)
    assert dec.residual() <= 1e-9
    assert np.all(dec.J_parts > 0) and np.all(dec.L_parts >= -1e-12)
    assert run.Shat_tau == pytest.approx(-min(0.0, run.x_post.min()), abs=1e-12)


def test_build_run_rejects_bad_events():
    with pytest.raises(ValueError):
        scripted_run(UNIT, 1.0, [claim(2.0, 1.0)])
    with pytest.raises(ValueError):
        scripted_run(UNIT, 3.0, [PathEvent(1.0, 1.0, "other")])


def test_endpoint_mode_has_no_bridge_excess(m1):
    run = simulate_killed_run(m1, SimConfig(1, 2e-3, 5, exact_max=False), 0)
    ends = np.maximum(run.x_pre, np.r_[0, run.x_post[:-1]])
    assert np.array_equal(run.seg_max, ends)


# -- batches --------------------------------------------------------------

def test_single_path_batch_equals_pipeline(m1):
    cfg = SimConfig(1, 2e-3, 21)
    probes = Probes(occupation=[(1.0, 2.0)])
    s = batch_simulate(m1, cfg, probes)
    run = simulate_killed_run(m1, cfg, 0)
    dec = detect_modified_ladder(run)
    assert s.shat_tau[0] == run.Shat_tau and s.n_tau[0] == dec.N_tau
    assert s.occupation[0, 0] == occupation_time(run, 1.0, 2.0)


def test_batch_independent_of_batching(m1):
    probes = Probes(occupation=[(1.0, 2.0)])
    a = batch_simulate(m1, SimConfig(40, 2e-3, 5, batch_size=40), probes)
    b = batch_simulate(m1, SimConfig(40, 2e-3, 5, batch_size=7), probes)
    assert a.equals(b)


def test_batch_with_workers_matches_serial(m1):
    a = batch_simulate(m1, SimConfig(12, 4e-3, 5, batch_size=4))
    b = batch_simulate(m1, SimConfig(12, 4e-3, 5, batch_size=4, workers=2))
    assert a.equals(b)


def test_merge_commutes(m1):
    s = batch_simulate(m1, SimConfig(30, 4e-3, 8), Probes(occupation=[(1.0, 2.0)]))
    a, b = s.subset(s.path_index < 13), s.subset(s.path_index >= 13)
    assert a.merge(b).equals(b.merge(a)) and a.merge(b).equals(s)
    with pytest.raises(ValueError):
        a.merge(a)


def test_summary_counts(m1):
    s = batch_simulate(m1, SimConfig(200, 4e-3, 8))
    assert s.overshoots.size == s.sigma_le_tau.sum()
    assert np.all(np.isnan(s.overshoot[~s.sigma_le_tau]))
    assert s.n_tau_hist().sum() == 200


def test_no_claims_no_sigma():
    s = batch_simulate(cp_model(lam=0.0, vol=1.0), SimConfig(100, 4e-3, 8))
    assert not s.sigma_le_tau.any()


def test_no_brownian_ladder_starts_at_zero(m2):
    s = batch_simulate(m2, SimConfig(500, 1e-3, 2))
    assert np.all(s.shat_pre_sigma[s.sigma_le_tau] == 0.0)


def test_killing_times_are_exponential(m2):
    s = batch_simulate(m2, SimConfig(20000, 1e-3, 3))
    assert sst.kstest(s.tau, sst.expon(scale=10).cdf).statistic <= 0.015


def test_summarize_runs_sorts_by_index():
    runs = [scripted_run(UNIT, 2.0, [], path_index=i) for i in (2, 0, 1)]
    s = summarize_runs(runs)
    np.testing.assert_array_equal(s.path_index, [0, 1, 2])


def test_errors_carry_path_index(monkeypatch, m1):
    import riskladder.simulator as sim

    def boom(*a, **k):
        raise FloatingPointError("bad")

    monkeypatch.setattr(sim, "_summarize_path", boom)
    with pytest.raises(RuntimeError, match="path 0"):
        batch_simulate(m1, SimConfig(2, 4e-3, 1))
