import math

import numpy as np
import pytest

import linklab.engine as engine
from linklab.channel import IosGrid
from linklab.config import ConfigError, SystemConfig
from linklab.engine import (
    ExperimentPlan,
    SweepError,
    default_workers,
    no_ios_baseline,
    run_ergodic,
    run_nmse,
    split_trials,
    ts_protocol_rate,
)
from linklab.report import report_to_csv

SMALL = SystemConfig(m_ap=16, ios_r=IosGrid(4, 4), ios_t=IosGrid(4, 4), k_pilots=4, blocks=4, trials_per_block=100)


def test_rerun_is_byte_identical():
    plan = ExperimentPlan(SMALL.replace(eps_v=0.95, ios_phases="random"), "rho_dbm", (0, 20), seed=11)
    assert report_to_csv(run_ergodic(plan, 1)) == report_to_csv(run_ergodic(plan, 1))


def test_worker_count_does_not_change_output():
    plan = ExperimentPlan(SMALL, "m_ap", (8, 16), seed=3)
    assert report_to_csv(run_ergodic(plan, 1)) == report_to_csv(run_ergodic(plan, 2))


def test_seed_changes_output():
    a = run_ergodic(ExperimentPlan(SMALL, "rho_dbm", (10,), seed=1), 1)
    b = run_ergodic(ExperimentPlan(SMALL, "rho_dbm", (10,), seed=2), 1)
    assert a.rows[0].sum_rate_sim != b.rows[0].sum_rate_sim


def test_report_shape_and_metadata():
    plan = ExperimentPlan(SMALL, "kappa_db", (-5, 0, 5), seed=7)
    rep = run_ergodic(plan, 1)
    assert len(rep) == 3
    assert [r.value for r in rep.rows] == [-5.0, 0.0, 5.0]
    assert all(r.axis == "kappa_db" and r.seed == 7 for r in rep.rows)
    assert rep.metadata["seed"] == 7
    assert rep.metadata["config_hash"] == SMALL.config_hash()
    assert (rep.metadata["blocks"], rep.metadata["trials_per_block"]) == (4, 100)
    for r in rep.rows:
        assert r.sum_rate_sim == pytest.approx(r.rate_r_sim + r.rate_t_sim)


def test_rate_increases_with_power_under_ideal_hardware():
    plan = ExperimentPlan(SMALL.replace(blocks=5, trials_per_block=200), "rho_dbm", (0, 10, 20, 30, 40), seed=0)
    rates = run_ergodic(plan, 1).column("sum_rate_sim")
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_ts_halves_a_lone_user():
    cfg = SMALL.replace(rho_t_dbm=-300.0)
    plan = ExperimentPlan(cfg, "eps_v", (1.0,), seed=5)
    ms = run_ergodic(plan, 1).rows[0]
    ts = ts_protocol_rate(plan, 1).rows[0]
    assert ts.axis == "eps_v[ts]"
    assert ms.rate_r_sim / ts.rate_r_sim == pytest.approx(2.0, rel=0.05)
    assert ms.rate_t_sim == pytest.approx(0.0, abs=1e-9)


def test_no_ios_without_direct_link_has_zero_rate():
    plan = ExperimentPlan(SMALL, "alpha_b", (1e3,), seed=0)
    row = no_ios_baseline(plan, 1).rows[0]
    assert row.axis == "alpha_b[no_ios]"
    assert row.sum_rate_sim == 0.0
    assert math.isnan(row.nmse_theory)


def test_surface_helps_only_when_direct_link_is_weak():
    cfg = SystemConfig(blocks=4, trials_per_block=250)
    plan = ExperimentPlan(cfg, "alpha_b", (2.5, 5.5), seed=0)
    with_ios = run_ergodic(plan, 1).column("sum_rate_sim")
    without = no_ios_baseline(plan, 1).column("sum_rate_sim")
    assert without[0] >= 0.9 * with_ios[0]
    assert with_ios[1] > without[1]


def test_ignoring_impairments_costs_accuracy():
    cfg = SMALL.replace(eps_v=0.95, eps_ur=0.9, eps_ut=0.9)
    rep = run_nmse(ExperimentPlan(cfg, "rho_dbm", (0, 20, 40), seed=1), 1)
    aware = rep.column("nmse_theory", "rho_dbm")
    ignore = rep.column("nmse_theory", "rho_dbm[ignore_hwi]")
    assert len(aware) == len(ignore) == 3
    assert all(i >= a for a, i in zip(aware, ignore))
    # at 0 dBm the two differ by far less than the Monte Carlo noise
    sim_aware = rep.column("nmse_sim", "rho_dbm")[1:]
    sim_ignore = rep.column("nmse_sim", "rho_dbm[ignore_hwi]")[1:]
    assert all(i > a for a, i in zip(sim_aware, sim_ignore))


def test_nmse_plateau_at_high_power():
    cfg = SystemConfig(m_ap=50, eps_v=0.99, eps_ur=0.99, eps_ut=0.99, blocks=4, trials_per_block=50)
    theory = run_ergodic(ExperimentPlan(cfg, "rho_dbm", (30, 40), seed=0), 1).column("nmse_theory")
    assert 0.8 <= theory[1] / theory[0] <= 1.0


def test_simulated_rate_below_loose_bound():
    plan = ExperimentPlan(SystemConfig(eps_v=0.99, eps_ur=0.95, eps_ut=0.95), "rho_dbm", (0, 20, 40), seed=0)
    for row in run_ergodic(plan, 1).rows:
        assert row.rate_r_sim <= row.ub_thm5_r + 1e-2
        assert row.rate_t_sim <= row.ub_thm5_t + 1e-2
        assert row.ub_thm3_r <= row.ub_thm5_r + 1e-9


def test_plan_validation():
    with pytest.raises(ConfigError):
        ExperimentPlan(SMALL, "speed", (1,))
    with pytest.raises(ConfigError):
        ExperimentPlan(SMALL, "rho_dbm", (math.nan,))
    with pytest.raises(ConfigError):
        ExperimentPlan(SMALL, "rho_dbm", (1,), seed=-1)
    with pytest.raises(ConfigError):
        ExperimentPlan(SMALL, "rho_dbm", (1,), protocol="fdd")
    with pytest.raises(ConfigError):
        run_ergodic(ExperimentPlan(SMALL, "rho_dbm", (1,)), 0)


def test_numeric_failure_reports_coordinates(monkeypatch):
    def boom(config, seed, block, protocol="ms"):
        if block == 2:
            raise np.linalg.LinAlgError("not positive definite")
        return real(config, seed, block, protocol)

    real = engine.run_block
    monkeypatch.setattr(engine, "run_block", boom)
    with pytest.raises(SweepError) as info:
        run_ergodic(ExperimentPlan(SMALL, "m_ap", (8,)), 1)
    assert (info.value.axis, info.value.value, info.value.block) == ("m_ap", 8.0, 2)


def test_split_trials():
    assert split_trials(10_000, 20) == 500
    assert split_trials(101, 20) == 6
    assert split_trials(3, 20) == 1
    with pytest.raises(ConfigError):
        split_trials(0, 20)


def test_default_workers(monkeypatch):
    monkeypatch.delenv("LINKLAB_WORKERS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("LINKLAB_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("LINKLAB_WORKERS", "many")
    with pytest.raises(ConfigError):
        default_workers()
