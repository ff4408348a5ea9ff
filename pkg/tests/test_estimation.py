import math

import numpy as np
import pytest

from conftest import emp_cov, normalized_error, random_angles, unit_budget
from linklab.beamforming import random_ios_phases
from linklab.channel import PerSide, build_statistics, sample_channels
from linklab.config import SystemConfig
from linklab.engine import setup_block
from linklab.estimation import (
    HardwareProfile,
    PilotBook,
    build_estimator,
    despread,
    lmmse_estimate,
    make_pilots,
    nmse_monte_carlo,
    nmse_theoretical,
    observation_moments,
    sample_despread,
    simulate_pilot_rx,
)

P = PerSide(1.0, 1.0)


def _stats(geometry, rng, **kw):
    return build_statistics(geometry, unit_budget(**kw), random_angles(rng), random_ios_phases(geometry, rng))


def test_hardware_profile_range():
    with pytest.raises(ValueError):
        HardwareProfile(1.1, 1, 1)
    with pytest.raises(ValueError):
        HardwareProfile(1, -0.1, 1)


def test_pilots_two_point():
    pb = make_pilots(2)
    np.testing.assert_allclose(pb.tau_r, [1, 1])
    np.testing.assert_allclose(pb.tau_t, [1, -1], atol=1e-15)
    assert np.sum(pb.tau_r * pb.tau_t.conj()) == pytest.approx(0)
    assert np.sum(np.abs(pb.tau_r) ** 2) == pytest.approx(2)


@pytest.mark.parametrize("k", [2, 3, 4, 16, 31])
def test_pilots_orthogonal_unit_modulus(k):
    pb = make_pilots(k)
    for tau in pb.tau:
        np.testing.assert_allclose(np.abs(tau), 1)
        assert np.sum(np.abs(tau) ** 2) == pytest.approx(k)
    assert abs(np.sum(pb.tau_r * pb.tau_t.conj())) <= 1e-12


def test_pilots_reject_short():
    with pytest.raises(ValueError):
        make_pilots(1)


def test_ideal_noiseless_single_slot(rng):
    h = PerSide(rng.standard_normal(4) + 0j, rng.standard_normal(4) + 1j)
    pb = PilotBook(1, PerSide(np.array([1.0 + 0j]), np.array([1j])))
    x = simulate_pilot_rx(h, HardwareProfile(), pb, (2.0, 3.0), 0.0, rng)
    np.testing.assert_allclose(x[0], math.sqrt(2) * h.r + math.sqrt(3) * h.t * 1j)


def test_zero_power_gives_noise(rng):
    h = PerSide(np.ones(6, complex), np.ones(6, complex))
    x = np.stack([simulate_pilot_rx(h, HardwareProfile(0.9, 0.8, 0.8), make_pilots(4), (0.0, 0.0), 2.5, rng) for _ in range(5000)])
    assert np.mean(np.abs(x) ** 2) == pytest.approx(2.5, rel=0.02)


def test_despread_ideal_noiseless(rng):
    h = PerSide(rng.standard_normal(5) + 1j, rng.standard_normal(5) - 1j)
    pb = make_pilots(8)
    obs = simulate_pilot_rx(h, HardwareProfile(), pb, (2.0, 0.5), 0.0, rng)
    np.testing.assert_allclose(despread(obs, pb, "r"), math.sqrt(8 * 2.0) * h.r, atol=1e-12)
    np.testing.assert_allclose(despread(obs, pb, "t"), math.sqrt(8 * 0.5) * h.t, atol=1e-12)


def test_despread_pure_noise(rng):
    h = PerSide(np.zeros((100_000, 4), complex), np.zeros((100_000, 4), complex))
    pb = make_pilots(4)
    obs = simulate_pilot_rx(h, HardwareProfile(), pb, P, 0.3, rng)
    x = despread(obs, pb, "r")
    assert np.mean(np.sum(np.abs(x) ** 2, axis=-1)) == pytest.approx(4 * 0.3, rel=0.05)


def test_despread_length_mismatch():
    with pytest.raises(ValueError):
        despread(np.zeros((3, 4)), make_pilots(4), "r")


def test_despread_covariance_matches_model(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    h = sample_channels(stats, rng, size=100_000).h
    pb = make_pilots(4)
    obs = simulate_pilot_rx(h, impaired, pb, P, 1.0, rng)
    for side in ("r", "t"):
        x = despread(obs, pb, side)
        mean, _, c_xx = observation_moments(stats, impaired, P, 1.0, 4, side)
        assert normalized_error(emp_cov(x), c_xx) < 0.03
        se = np.sqrt(np.real(np.diag(c_xx)) / x.shape[0])
        assert np.all(np.abs(x.mean(axis=0) - mean) < 4.5 * se)


def test_closed_form_despread_matches_model(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    h = sample_channels(stats, rng, size=100_000).h
    xs = sample_despread(h, impaired, P, 1.0, 4, rng)
    for side in ("r", "t"):
        _, _, c_xx = observation_moments(stats, impaired, P, 1.0, 4, side)
        assert normalized_error(emp_cov(xs[side]), c_xx) < 0.03


def test_estimator_covariance_split(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, impaired, P, 1.0, 4)
    for md in models:
        assert np.linalg.norm(md.c_hat + md.c_err - md.c_hh) <= 1e-9 * np.linalg.norm(md.c_hh)
        assert np.trace(md.c_err).real >= 0
        np.testing.assert_allclose(md.c_hx, math.sqrt(4 * 0.9 * 0.8) * md.c_hh)


def test_perfect_estimation_limit(small_geometry, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, HardwareProfile(), P, 1e-14, 4)
    for md in models:
        assert np.trace(md.c_err).real < 1e-9 * np.trace(md.c_hh).real


def test_zero_pilot_power_returns_prior(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, impaired, (0.0, 1.0), 1.0, 4)
    np.testing.assert_array_equal(models.r.c_hat, 0)
    np.testing.assert_allclose(models.r.c_err, models.r.c_hh)
    x = rng.standard_normal(8) + 0j
    np.testing.assert_allclose(lmmse_estimate(models.r, x), stats.r.hbar)
    both = build_estimator(stats, impaired, (0.0, 0.0), 1.0, 4)
    assert nmse_theoretical(both) == pytest.approx(1.0)


def test_estimate_at_prior_mean(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, impaired, P, 1.0, 4)
    np.testing.assert_allclose(lmmse_estimate(models.t, models.t.x_mean), stats.t.hbar)
    with pytest.raises(ValueError):
        lmmse_estimate(models.t, np.zeros(3))


def test_noiseless_ideal_estimate_recovers_channel(small_geometry, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, HardwareProfile(), P, 1e-14, 4)
    h = sample_channels(stats, rng).h
    xs = sample_despread(h, HardwareProfile(), P, 1e-14, 4, rng)
    for side in ("r", "t"):
        est = lmmse_estimate(models[side], xs[side])
        assert np.linalg.norm(est - h[side]) < 1e-4 * np.linalg.norm(h[side])
    assert nmse_theoretical(models) < 1e-9


def test_error_covariance_and_orthogonality(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, impaired, P, 1.0, 4)
    n = 100_000
    h = sample_channels(stats, rng, size=n).h
    xs = sample_despread(h, impaired, P, 1.0, 4, rng)
    for side in ("r", "t"):
        est = lmmse_estimate(models[side], xs[side])
        err = h[side] - est
        assert normalized_error(err.T @ err.conj() / n, models[side].c_err) < 0.03
        # estimate and error are uncorrelated
        ec = est - est.mean(0)
        cross = ec.T @ err.conj() / n
        se = np.sqrt(np.outer(np.mean(np.abs(ec) ** 2, 0), np.mean(np.abs(err) ** 2, 0)) / n)
        assert np.all(np.abs(cross) < 4.5 * se)


def test_mismatched_estimator_error_moment(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, impaired, P, 1.0, 4, assumed_profile=HardwareProfile())
    n = 100_000
    h = sample_channels(stats, rng, size=n).h
    xs = sample_despread(h, impaired, P, 1.0, 4, rng)
    for side in ("r", "t"):
        err = h[side] - lmmse_estimate(models[side], xs[side])
        assert normalized_error(err.T @ err.conj() / n, models[side].c_err) < 0.03
    matched = build_estimator(stats, impaired, P, 1.0, 4)
    assert nmse_theoretical(models) >= nmse_theoretical(matched)


def test_nmse_explicit_and_closed_form_routes_agree(small_geometry, impaired, rng):
    stats = _stats(small_geometry, rng)
    models = build_estimator(stats, impaired, P, 1.0, 4)
    theory = nmse_theoretical(models)
    assert nmse_monte_carlo(stats, models, impaired, P, 1.0, 4, 50_000, rng) == pytest.approx(theory, rel=0.02)
    assert nmse_monte_carlo(stats, models, impaired, P, 1.0, 4, 50_000, rng, full=True) == pytest.approx(theory, rel=0.02)
    with pytest.raises(ValueError):
        nmse_monte_carlo(stats, models, impaired, P, 1.0, 4, 0, rng)


def _default_block(seed=11, **changes):
    cfg = SystemConfig(m_ap=50, trials_per_block=10, **changes)
    stats, _, rng = setup_block(cfg, seed, 0)
    return cfg, stats, rng


def test_nmse_simulation_matches_theory_at_default_scale():
    cfg, stats, rng = _default_block(eps_v=0.99, eps_ur=0.99, eps_ut=0.99)
    models = build_estimator(stats, cfg.profile, cfg.powers, cfg.noise, 16)
    sim = nmse_monte_carlo(stats, models, cfg.profile, cfg.powers, cfg.noise, 16, 10_000, rng)
    assert sim == pytest.approx(nmse_theoretical(models), rel=0.02)


def test_nmse_orderings_at_default_scale():
    eps = 0.99
    cfg, stats, _ = _default_block(eps_v=eps, eps_ur=eps, eps_ut=eps)
    prof = cfg.profile

    def nmse(rho_dbm, k, assumed=None):
        w = 10 ** ((rho_dbm - 30) / 10)
        return nmse_theoretical(build_estimator(stats, prof, (w, w), cfg.noise, k, assumed))

    grid = [-10, 0, 10, 20, 30, 40]
    for k in (4, 16):
        series = [nmse(r, k) for r in grid]
        assert all(b <= a for a, b in zip(series, series[1:]))
        assert all(0 < v <= 1 for v in series)
    for r in grid:
        ks = [nmse(r, k) for k in (2, 4, 8, 16, 32)]
        assert all(b <= a for a, b in zip(ks, ks[1:]))
        assert nmse(r, 16) < nmse(r, 4)
    assert 0.8 <= nmse(40, 16) / nmse(30, 16) <= 1.0
    assert nmse(30, 16, HardwareProfile()) >= nmse(30, 16)
