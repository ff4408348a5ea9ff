"""Self-check suite: every numerical identity and Monte Carlo moment oracle in one run.

The scenario is deliberately small (8 antennas, 2x2 surfaces, unit link gains)
so that 10^5-draw moment checks finish in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .beamforming import (
    RVariant,
    combiner_rates,
    ergodic_se_upper_bound,
    eta,
    interference_matrix,
    mmse_combiners,
    optimal_ios_phases,
    random_ios_phases,
    se_instantaneous,
    sinr,
    zeta_bar,
)
from .channel import (
    LINKS,
    RICIAN_LINKS,
    SIDES,
    AngleSet,
    ArrayGeometry,
    IosGrid,
    LinkBudget,
    PerSide,
    SideAngles,
    build_statistics,
    ios_steering,
    los_gain,
    sample_channels,
)
from .config import SystemConfig
from .estimation import (
    HardwareProfile,
    build_estimator,
    despread,
    lmmse_estimate,
    make_pilots,
    observation_moments,
    sample_despread,
    simulate_pilot_rx,
)
from .linalg import herm_solve, unit_cn, woodbury_inverse

DRAWS = 100_000
MOMENT_TOL = 0.03


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    metric: float
    tolerance: float

    def line(self) -> str:
        status = "pass" if self.passed else "fail"
        return f"{self.name},{status},{self.metric:.3e},{self.tolerance:.1e}"


@dataclass(frozen=True)
class Scenario:
    geometry: ArrayGeometry
    budget: LinkBudget
    profile: HardwareProfile
    powers: PerSide
    noise: float
    k: int


def small_scenario() -> Scenario:
    gains = {ln: 1.0 for ln in LINKS}
    gains.update(b_r=0.5, b_t=0.5)
    return Scenario(
        geometry=ArrayGeometry(8, 0.5, IosGrid(2, 2), IosGrid(2, 2)),
        budget=LinkBudget(gains, {ln: 1.0 for ln in RICIAN_LINKS}),
        profile=HardwareProfile(0.9, 0.8, 0.8),
        powers=PerSide(1.0, 1.0),
        noise=1.0,
        k=4,
    )


def _angles(rng, delta_psi=0.3) -> AngleSet:
    u = rng.random(9)
    tp = 2 * math.pi
    psi = tp * u[8]
    return AngleSet(
        SideAngles(math.pi * u[0], tp * u[1], math.pi * u[2], tp * u[3], psi),
        SideAngles(math.pi * u[4], tp * u[5], math.pi * u[6], tp * u[7], psi - delta_psi),
    )


def _rel_elementwise(emp, model) -> float:
    """Largest entry error, each entry scaled by ``sqrt(model_ii model_jj)``."""
    d = np.sqrt(np.abs(np.diag(model)))
    return float(np.max(np.abs(emp - model) / np.outer(d, d)))


def _emp_cov(x) -> np.ndarray:
    xc = x - x.mean(axis=0)
    return xc.T @ xc.conj() / x.shape[0]


def check_woodbury(rng) -> OracleResult:
    worst = 0.0
    for dim in (1, 2, 6, 16, 32):
        k = max(1, dim // 2)
        a = unit_cn(rng, (dim, dim))
        d = a @ a.conj().T + dim * np.eye(dim)
        f1, f3 = unit_cn(rng, (dim, k)), unit_cn(rng, (k, dim))
        b = unit_cn(rng, (k, k))
        f2 = b @ b.conj().T + np.eye(k)
        direct = np.linalg.inv(d + f1 @ f2 @ f3)
        err = np.linalg.norm(woodbury_inverse(d, f1, f2, f3) - direct) / np.linalg.norm(direct)
        worst = max(worst, err)
    return OracleResult("woodbury_inverse", worst <= 1e-9, worst, 1e-9)


def check_solve(rng) -> OracleResult:
    worst = 0.0
    for dim in (2, 8, 64):
        a = unit_cn(rng, (dim, dim))
        a = a @ a.conj().T + np.eye(dim)
        b = unit_cn(rng, dim)
        worst = max(worst, np.linalg.norm(a @ herm_solve(a, b) - b) / np.linalg.norm(b))
    return OracleResult("herm_solve_residual", worst <= 1e-10, worst, 1e-10)


def check_channel_moments(sc: Scenario, rng) -> list[OracleResult]:
    stats = build_statistics(sc.geometry, sc.budget, _angles(rng), random_ios_phases(sc.geometry, rng))
    h = sample_channels(stats, rng, size=DRAWS).h
    mean_err = max(
        float(np.max(np.abs(h[s].mean(axis=0) - stats[s].hbar) / np.sqrt(np.diag(stats[s].c_hh).real / DRAWS)))
        for s in SIDES
    )
    cov_err = max(_rel_elementwise(_emp_cov(h[s]), stats[s].c_hh) for s in SIDES)
    return [
        OracleResult("channel_mean_sigmas", mean_err <= 4.5, mean_err, 4.5),
        OracleResult("channel_covariance", cov_err <= MOMENT_TOL, cov_err, MOMENT_TOL),
    ]


def check_pilot_covariance(sc: Scenario, rng) -> OracleResult:
    stats = build_statistics(sc.geometry, sc.budget, _angles(rng), random_ios_phases(sc.geometry, rng))
    h = sample_channels(stats, rng, size=DRAWS).h
    pilots = make_pilots(sc.k)
    obs = simulate_pilot_rx(h, sc.profile, pilots, sc.powers, sc.noise, rng)
    worst = 0.0
    for s in SIDES:
        x = despread(obs, pilots, s)
        _, _, c_xx = observation_moments(stats, sc.profile, sc.powers, sc.noise, sc.k, s)
        worst = max(worst, _rel_elementwise(_emp_cov(x), c_xx))
    return OracleResult("pilot_observation_covariance", worst <= MOMENT_TOL, worst, MOMENT_TOL)


def check_received_moment(sc: Scenario, rng, variant) -> OracleResult:
    """Average of ``y y^H`` minus the estimated-channel terms against ``R``."""
    stats = build_statistics(sc.geometry, sc.budget, _angles(rng), random_ios_phases(sc.geometry, rng))
    models = build_estimator(stats, sc.profile, sc.powers, sc.noise, sc.k)
    r = interference_matrix(stats, models, sc.profile, sc.powers, sc.noise, variant)
    h = sample_channels(stats, rng, size=DRAWS).h
    xs = sample_despread(h, sc.profile, sc.powers, sc.noise, sc.k, rng)
    m = sc.geometry.m_ap
    ev = sc.profile.eps_v
    y = math.sqrt(sc.noise) * unit_cn(rng, (DRAWS, m))
    acc = np.zeros((m, m), dtype=complex)
    for s in SIDES:
        rho, eu = sc.powers[s], sc.profile.eps_u(s)
        sym, u = unit_cn(rng, (DRAWS, 1)), unit_cn(rng, (DRAWS, 1))
        v = unit_cn(rng, (DRAWS, m))
        y = y + math.sqrt(rho * ev * eu) * h[s] * sym + math.sqrt(rho * ev * (1 - eu)) * h[s] * u
        y = y + math.sqrt(rho * (1 - ev)) * h[s] * v
        h_hat = lmmse_estimate(models[s], xs[s])
        acc += rho * ev * (h_hat.T @ h_hat.conj())
    emp = (y.T @ y.conj() - acc) / DRAWS
    err = _rel_elementwise(emp, r.r_mat)
    return OracleResult(f"received_moment[{RVariant(variant).value}]", err <= MOMENT_TOL, err, MOMENT_TOL)


def check_sinr_equivalence(sc: Scenario, rng) -> list[OracleResult]:
    worst_se, worst_mmse = 0.0, 0.0
    for eps in (1.0, 0.99, 0.9):
        prof = HardwareProfile(eps, eps, eps)
        for _ in range(100):
            stats = build_statistics(sc.geometry, sc.budget, _angles(rng), random_ios_phases(sc.geometry, rng))
            models = build_estimator(stats, prof, sc.powers, sc.noise, sc.k)
            r = interference_matrix(stats, models, prof, sc.powers, sc.noise)
            h = sample_channels(stats, rng).h
            xs = sample_despread(h, prof, sc.powers, sc.noise, sc.k, rng)
            h_hat = PerSide(*(lmmse_estimate(models[s], xs[s]) for s in SIDES))
            closed = se_instantaneous(h_hat, r, prof, sc.powers)
            q = mmse_combiners(h_hat, r, prof, sc.powers, route="direct")
            for s in SIDES:
                via_q = math.log2(1 + float(sinr(q.q[s], s, h_hat, r, prof, sc.powers)))
                worst_se = max(worst_se, abs(via_q - float(closed.se[s])) / max(1.0, abs(via_q)))
            others = [combiner_rates(h_hat, r, prof, sc.powers, m).sinr for m in ("mr", "zf")]
            for s in SIDES:
                gap = max(float(o[s]) for o in others) - float(closed.sinr[s])
                worst_mmse = max(worst_mmse, gap / max(1.0, float(closed.sinr[s])))
    return [
        OracleResult("sinr_closed_form_equivalence", worst_se <= 1e-9, worst_se, 1e-9),
        OracleResult("mmse_dominance", worst_mmse <= 1e-12, max(worst_mmse, 0.0), 1e-12),
    ]


def check_estimator_split(sc: Scenario, rng) -> OracleResult:
    worst = 0.0
    for _ in range(20):
        stats = build_statistics(sc.geometry, sc.budget, _angles(rng), random_ios_phases(sc.geometry, rng))
        models = build_estimator(stats, sc.profile, sc.powers, sc.noise, sc.k)
        for s in SIDES:
            md = models[s]
            worst = max(worst, np.linalg.norm(md.c_hat + md.c_err - md.c_hh) / np.linalg.norm(md.c_hh))
    return OracleResult("estimate_plus_error_covariance", worst <= 1e-9, worst, 1e-9)


def brute_force_los_gain(coupling: np.ndarray, steps: int = 64) -> float:
    """Maximize ``|sum_n c_n exp(j theta_n)|^2`` over phases with the first phase fixed at zero."""
    n = coupling.size
    if n == 1:
        return float(abs(coupling[0]) ** 2)
    grid = 2 * np.pi * np.arange(steps) / steps
    terms = coupling[1:, None] * np.exp(1j * grid)[None, :]
    total = np.full((1,), coupling[0], dtype=complex)
    for row in terms:
        total = (total[:, None] + row[None, :]).ravel()
    best = np.unravel_index(int(np.argmax(np.abs(total))), (steps,) * (n - 1))
    start = grid[list(best)]

    def neg(th):
        return -abs(coupling[0] + np.sum(coupling[1:] * np.exp(1j * th))) ** 2

    res = minimize(neg, start, method="BFGS", options={"gtol": 1e-12})
    return float(max(-res.fun, np.max(np.abs(total)) ** 2))


def check_phases(rng) -> list[OracleResult]:
    worst_bf = 0.0
    for nx, ny in ((1, 1), (2, 1), (2, 2), (1, 4)):
        grid = IosGrid(nx, ny)
        geo = ArrayGeometry(4, 0.5, grid, grid)
        for _ in range(3):
            ang = _angles(rng)
            a = ang.r
            a_ios = ios_steering(a.omega, a.varpi, grid)
            gbar = ios_steering(a.phi, a.varphi, grid)
            closed = los_gain(a_ios, optimal_ios_phases(ang, geo).r, gbar)
            bf = brute_force_los_gain(a_ios.conj() * gbar)
            worst_bf = max(worst_bf, abs(closed - bf) / grid.n**2)
    worst_exact = 0.0
    for nx, ny in ((1, 1), (2, 2), (4, 4), (8, 4), (20, 20)):
        grid = IosGrid(nx, ny)
        geo = ArrayGeometry(4, 0.5, grid, grid)
        ang = _angles(rng)
        for s in SIDES:
            a = ang[s]
            g = los_gain(ios_steering(a.omega, a.varpi, grid), optimal_ios_phases(ang, geo)[s], ios_steering(a.phi, a.varphi, grid))
            worst_exact = max(worst_exact, abs(g - grid.n**2) / grid.n**2)
    return [
        OracleResult("phase_bruteforce", worst_bf <= 1e-6, worst_bf, 1e-6),
        OracleResult("phase_full_alignment", worst_exact <= 1e-9, worst_exact, 1e-9),
    ]


def check_bound_ordering(sc: Scenario, rng) -> OracleResult:
    """Simulated ergodic rate against the statistics-based bound, per user, 10^4 draws.

    Also checks that the mean post-combining gain stays below its
    statistics-only ceiling.
    """
    worst = -math.inf
    for _ in range(3):
        stats = build_statistics(sc.geometry, sc.budget, _angles(rng), optimal_ios_phases(_angles(rng), sc.geometry))
        models = build_estimator(stats, sc.profile, sc.powers, sc.noise, sc.k)
        r = interference_matrix(stats, models, sc.profile, sc.powers, sc.noise)
        h = sample_channels(stats, rng, size=10_000).h
        xs = sample_despread(h, sc.profile, sc.powers, sc.noise, sc.k, rng)
        h_hat = PerSide(*(lmmse_estimate(models[s], xs[s]) for s in SIDES))
        rep = se_instantaneous(h_hat, r, sc.profile, sc.powers)
        for s in SIDES:
            ub = ergodic_se_upper_bound(stats, models, r, sc.profile, sc.powers, s)
            worst = max(worst, math.fsum(rep.se[s]) / rep.se[s].size - ub)
            # the statistics-only ceiling on zeta_bar that yields the loose bound
            etas = [eta(sc.budget, sc.geometry.grid(x).n, x) for x in SIDES]
            scalar = (1 - sc.profile.eps_v) * (sc.powers.r * etas[0] + sc.powers.t * etas[1]) + sc.noise
            ceiling = sc.geometry.m_ap * eta(sc.budget, sc.geometry.grid(s).n, s) / scalar
            worst = max(worst, zeta_bar(stats, models[s], r, s) / ceiling - 1)
    return OracleResult("ergodic_rate_below_bound", worst <= 1e-2, worst, 1e-2)


def check_cross_term_decay(seed: int) -> OracleResult:
    from .engine import cross_term_decay

    cfg = SystemConfig(ios_r=IosGrid(4, 4), ios_t=IosGrid(4, 4), blocks=20, trials_per_block=50)
    ratios = cross_term_decay(cfg, (8, 32, 128, 512), seed=seed)
    steps = [b / a for a, b in zip(ratios, ratios[1:])]
    worst = max(steps)
    return OracleResult("cross_term_decay", worst < 1.0, worst, 1.0)


def run_suite(seed: int = 0, variant: RVariant | str = RVariant.APPENDIX_A) -> list[OracleResult]:
    root = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in root.spawn(10)]
    sc = small_scenario()
    results = [check_woodbury(streams[0]), check_solve(streams[1])]
    results += check_channel_moments(sc, streams[2])
    results.append(check_pilot_covariance(sc, streams[3]))
    results.append(check_received_moment(sc, streams[4], variant))
    results += check_sinr_equivalence(sc, streams[5])
    results.append(check_estimator_split(sc, streams[6]))
    results += check_phases(streams[7])
    results.append(check_bound_ordering(sc, streams[8]))
    results.append(check_cross_term_decay(seed))
    return results


def format_table(results: list[OracleResult]) -> str:
    lines = ["oracle,status,metric,tolerance"] + [r.line() for r in results]
    return "\n".join(lines)
