"""Receive combining, spectral efficiency, surface phase design and rate bounds.

Channel-estimate arguments accept leading batch axes, so a whole coherence
block of trials can be evaluated against one interference matrix at once.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .channel import (
    SIDES,
    ArrayGeometry,
    AngleSet,
    ChannelStatistics,
    IosPhases,
    LinkBudget,
    PerSide,
    Side,
)
from .estimation import HardwareProfile, _powers
from .linalg import HermitianSolver, hermitian_part

ZF_COND_LIMIT = 1e12


class Combiner(str, enum.Enum):
    MMSE = "mmse"
    MR = "mr"
    ZF = "zf"


class RVariant(str, enum.Enum):
    APPENDIX_A = "appendix_a"
    AS_PRINTED = "eq29_as_printed"


class BoundConditionWarning(UserWarning):
    """The two users share the same AP arrival cosine, so the bound is not tight."""


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class InterferenceModel:
    """Covariance of everything in the received signal except the estimated-channel terms."""

    r_mat: np.ndarray
    variant: RVariant = RVariant.APPENDIX_A
    _solver: HermitianSolver = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variant", RVariant(self.variant))
        object.__setattr__(self, "_solver", HermitianSolver(self.r_mat))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """``R^-1 b`` for ``b`` of shape ``(M,)`` or ``(..., M)`` (batch of vectors)."""
        b = np.asarray(b)
        flat = b.reshape(-1, b.shape[-1]).T
        return self._solver.solve(flat).T.reshape(b.shape)

    def inverse(self) -> np.ndarray:
        return self._solver.inverse()

    def scaled(self, c: float) -> "InterferenceModel":
        return InterferenceModel(c * self.r_mat, self.variant)


def interference_matrix(
    stats: ChannelStatistics,
    models: PerSide,
    profile: HardwareProfile,
    powers,
    noise: float,
    variant: RVariant | str = RVariant.APPENDIX_A,
) -> InterferenceModel:
    """Build ``R``.

    The default variant weights each error covariance by ``rho_i eps_v``, which
    is what decomposing the received signal around the estimates produces. The
    ``AS_PRINTED`` variant uses ``rho_i eps_v (1 - eps_u,i)`` instead and is kept
    so the two can be compared against simulated received-signal moments.
    """
    variant = RVariant(variant)
    p = _powers(powers)
    ev = profile.eps_v
    m = stats.r.m
    r = noise * np.eye(m, dtype=complex)
    for side in SIDES:
        rho = p[side]
        coef = rho * ev
        if variant is RVariant.AS_PRINTED:
            coef *= 1 - profile.eps_u(side)
        r += coef * models[side].c_err
        r += rho * (1 - ev) * stats[side].antenna_power * np.eye(m)
    return InterferenceModel(hermitian_part(r), variant)


@dataclass(frozen=True)
class CombinerSet:
    q: PerSide
    method: Combiner

    @property
    def q_r(self) -> np.ndarray:
        return self.q.r

    @property
    def q_t(self) -> np.ndarray:
        return self.q.t


def _hats(h_hat) -> PerSide:
    h = PerSide(np.asarray(h_hat[Side.R], dtype=complex), np.asarray(h_hat[Side.T], dtype=complex))
    if h.r.shape != h.t.shape:
        raise ValueError("estimate shapes differ between sides")
    return h


def _quad(a, b):
    """Batched ``a^H b`` over the last axis."""
    return np.einsum("...m,...m->...", a.conj(), b)


def mmse_combiners(h_hat, r: InterferenceModel, profile: HardwareProfile, powers, route: str = "woodbury") -> CombinerSet:
    """MMSE combiners for both users.

    ``route="woodbury"`` reuses the factorization of ``R`` and inverts only a
    2x2 matrix per trial; ``route="direct"`` solves the full M x M system.
    """
    h = _hats(h_hat)
    p = _powers(powers)
    ev = profile.eps_v
    d = np.array([p.r * ev, p.t * ev])
    hh = np.stack([h.r, h.t], axis=-1)  # (..., M, 2)
    if route == "direct":
        sys = r.r_mat + np.einsum("...mi,i,...ni->...mn", hh, d, hh.conj())
        x = np.linalg.solve(sys, hh)
    elif route == "woodbury":
        g = np.stack([r.solve(h.r), r.solve(h.t)], axis=-1)
        inner = np.eye(2) + d[:, None] * np.einsum("...mi,...mj->...ij", hh.conj(), g)
        x = g @ np.linalg.inv(inner)
    else:
        raise ValueError(f"unknown route {route!r}")
    q = [p[s] * ev * profile.eps_u(s) * x[..., j] for j, s in enumerate(SIDES)]
    return CombinerSet(PerSide(*q), Combiner.MMSE)


def mr_zf_combiners(h_hat, method: Combiner | str) -> CombinerSet:
    method = Combiner(method)
    h = _hats(h_hat)
    if method is Combiner.MR:
        return CombinerSet(PerSide(h.r.copy(), h.t.copy()), method)
    if method is not Combiner.ZF:
        raise ValueError("mr_zf_combiners handles MR and ZF only")
    hh = np.stack([h.r, h.t], axis=-1)
    gram = np.einsum("...mi,...mj->...ij", hh.conj(), hh)
    cond = np.linalg.cond(gram)
    if np.any(~np.isfinite(cond)) or np.any(cond > ZF_COND_LIMIT):
        raise RankDeficiencyError(f"estimated channels are nearly collinear (condition {np.max(cond):.3e})")
    q = hh @ np.linalg.inv(gram)
    return CombinerSet(PerSide(q[..., 0], q[..., 1]), method)


def sinr(q, side, h_hat, r: InterferenceModel, profile: HardwareProfile, powers) -> np.ndarray:
    """SINR of one user for an arbitrary combiner ``q``."""
    side = Side(side)
    other = side.other
    h = _hats(h_hat)
    p = _powers(powers)
    ev, eu = profile.eps_v, profile.eps_u(side)
    q = np.asarray(q, dtype=complex)
    gi = np.abs(_quad(q, h[side])) ** 2
    gj = np.abs(_quad(q, h[other])) ** 2
    rq = q @ r.r_mat.T
    den = p[side] * ev * (1 - eu) * gi + p[other] * ev * gj + _quad(q, rq).real
    if np.any(den <= 0):
        raise ZeroDivisionError("SINR denominator is not positive")
    return p[side] * ev * eu * gi / den


@dataclass(frozen=True)
class RateReport:
    """Per-user rates; every field is a :class:`PerSide` of arrays or floats."""

    sinr: PerSide
    se: PerSide
    zeta: PerSide | None = None
    se_ub: PerSide | None = None
    se_loose_ub: PerSide | None = None
    eta: PerSide | None = None
    condition_violated: bool = False

    @property
    def sum_se(self):
        return self.se.r + self.se.t


def zeta(h_hat, r: InterferenceModel, powers, profile: HardwareProfile) -> PerSide:
    """Effective post-combining gain that enters the closed-form rate."""
    h = _hats(h_hat)
    p = _powers(powers)
    ev = profile.eps_v
    g = PerSide(r.solve(h.r), r.solve(h.t))
    a_rr = _quad(h.r, g.r).real
    a_tt = _quad(h.t, g.t).real
    a_rt = _quad(h.r, g.t)
    z_r = a_rr - p.t * ev * np.abs(a_rt) ** 2 / (1 + p.t * ev * a_tt)
    z_t = a_tt - p.r * ev * np.abs(a_rt) ** 2 / (1 + p.r * ev * a_rr)
    return PerSide(z_r, z_t)


def rate_from_zeta(z, rho: float, eps_v: float, eps_u: float):
    z = np.asarray(z)
    s = rho * eps_v * eps_u * z / (1 + rho * eps_v * (1 - eps_u) * z)
    return s, np.log2(1 + s)


def se_instantaneous(h_hat, r: InterferenceModel, profile: HardwareProfile, powers) -> RateReport:
    """Instantaneous rates under MMSE combining, through the closed form in ``zeta``."""
    p = _powers(powers)
    z = zeta(h_hat, r, p, profile)
    sinrs, ses = [], []
    for side in SIDES:
        s, se = rate_from_zeta(z[side], p[side], profile.eps_v, profile.eps_u(side))
        sinrs.append(s)
        ses.append(se)
    return RateReport(sinr=PerSide(*sinrs), se=PerSide(*ses), zeta=z)


def combiner_rates(h_hat, r: InterferenceModel, profile: HardwareProfile, powers, method) -> RateReport:
    method = Combiner(method)
    if method is Combiner.MMSE:
        return se_instantaneous(h_hat, r, profile, powers)
    cs = mr_zf_combiners(h_hat, method)
    sinrs = PerSide(*(sinr(cs.q[s], s, h_hat, r, profile, powers) for s in SIDES))
    return RateReport(sinr=sinrs, se=PerSide(np.log2(1 + sinrs.r), np.log2(1 + sinrs.t)))


def cross_term_ratio(h_hat, r: InterferenceModel, profile: HardwareProfile, powers, side="r") -> float:
    """Mean interference correction of ``zeta`` over the mean of ``h^H R^-1 h`` for one user."""
    side = Side(side)
    h = _hats(h_hat)
    p = _powers(powers)
    ev = profile.eps_v
    hi, hj = h[side], h[side.other]
    gi, gj = r.solve(hi), r.solve(hj)
    num = p[side.other] * ev * np.abs(_quad(hi, gj)) ** 2 / (1 + p[side.other] * ev * _quad(hj, gj).real)
    den = _quad(hi, gi).real
    return math.fsum(np.ravel(num)) / math.fsum(np.ravel(den))


def optimal_ios_phases(angles: AngleSet, geometry: ArrayGeometry) -> IosPhases:
    """Phases that align every element's LoS contribution toward the AP."""
    thetas = []
    for side in SIDES:
        a = angles[side]
        grid = geometry.grid(side)
        nx = np.arange(1, grid.nx + 1)
        ny = np.arange(1, grid.ny + 1)
        theta = 2 * np.pi * (
            grid.dx * nx[None, :] * (math.sin(a.phi) * math.cos(a.varphi) - math.sin(a.omega) * math.cos(a.varpi))
            + grid.dy * ny[:, None] * (math.cos(a.phi) - math.cos(a.omega))
        )
        thetas.append(np.mod(theta.ravel(), 2 * np.pi))
    return IosPhases(*thetas)


def random_ios_phases(geometry: ArrayGeometry, rng: np.random.Generator) -> IosPhases:
    return IosPhases(*(rng.uniform(0.0, 2 * np.pi, geometry.grid(s).n) for s in SIDES))


def zeta_bar(stats: ChannelStatistics, model, r: InterferenceModel, side) -> float:
    """``E[h_hat^H R^-1 h_hat]`` from the statistics alone."""
    mean = model.h_hat_mean
    los = float(np.vdot(mean, r.solve(mean)).real)
    spread = float(np.trace(r.solve(model.c_hat)).real)
    return los + spread


def same_arrival_cosine(stats: ChannelStatistics, tol: float = 1e-12) -> bool:
    a_r, a_t = stats.r.a_ap, stats.t.a_ap
    return abs(np.vdot(a_r, a_t)) >= a_r.size * (1 - tol)


def ergodic_se_upper_bound(
    stats: ChannelStatistics,
    models: PerSide,
    r: InterferenceModel,
    profile: HardwareProfile,
    powers,
    side,
) -> float:
    """Jensen-type upper bound on the ergodic rate of one user under MMSE combining.

    Emits :class:`BoundConditionWarning` when both users have the same AP
    arrival cosine; the value is still returned.
    """
    side = Side(side)
    p = _powers(powers)
    if same_arrival_cosine(stats):
        warnings.warn("equal AP arrival cosines: bound is evaluated but not tight", BoundConditionWarning, stacklevel=2)
    zb = zeta_bar(stats, models[side], r, side)
    return float(rate_from_zeta(zb, p[side], profile.eps_v, profile.eps_u(side))[1])


def eta(budget: LinkBudget, n_elements: int, side) -> float:
    """Per-antenna channel power with fully aligned surface phases."""
    rho_a, rho_g, rho_b, k_a, k_g = budget.side(side)
    n = n_elements
    return rho_a * rho_g * (k_a * k_g * n * n + (1 + k_g + k_a) * n) / ((1 + k_a) * (1 + k_g)) + rho_b


def loose_upper_bound(
    budget: LinkBudget,
    profile: HardwareProfile,
    powers,
    noise: float,
    m: int,
    n_elements,
    side,
) -> tuple[float, float]:
    """Statistics-only upper bound for one user; returns ``(bound, eta_i)``.

    ``n_elements`` is a pair ``(N_r, N_t)``.
    """
    side = Side(side)
    p = _powers(powers)
    n = n_elements if isinstance(n_elements, PerSide) else PerSide(*n_elements)
    etas = PerSide(eta(budget, n.r, Side.R), eta(budget, n.t, Side.T))
    ev, eu = profile.eps_v, profile.eps_u(side)
    e_i = etas[side]
    num = p[side] * ev * eu * m * e_i
    den = p[side] * ev * (1 - eu) * m * e_i + (1 - ev) * (p.r * etas.r + p.t * etas.t) + noise
    if num == 0:
        return 0.0, e_i
    return float(math.log2(1 + num / den)), e_i


@dataclass(frozen=True)
class ScalingSummary:
    extra_antennas: float
    ue_saturation: PerSide

    @property
    def sum_saturation(self) -> float:
        return self.ue_saturation.r + self.ue_saturation.t


def ue_saturation(eps_u: float) -> float:
    if eps_u >= 1.0:
        return math.inf
    return math.log2(1 + eps_u / (1 - eps_u))


def scaling_helpers(profile: HardwareProfile, m: int) -> ScalingSummary:
    """Antennas needed to offset AP impairments and the per-user rate ceiling set by UE impairments."""
    if profile.eps_v <= 0:
        raise ValueError("eps_v must be positive")
    return ScalingSummary(
        extra_antennas=(1 - profile.eps_v) * m / profile.eps_v,
        ue_saturation=PerSide(ue_saturation(profile.eps_ur), ue_saturation(profile.eps_ut)),
    )


def element_doubling_shift_db(
    budget: LinkBudget,
    profile: HardwareProfile,
    noise: float,
    m: int,
    n: int,
    rho_dbm: float,
    side="r",
) -> float:
    """Extra transmit power (dB) an ``N``-element surface needs to match ``2N`` elements.

    Both users transmit at the same power; the shift is found on the loose bound.
    """
    from .linalg import dbm_to_watts

    def bound(n_el, dbm):
        w = dbm_to_watts(dbm)
        return loose_upper_bound(budget, profile, (w, w), noise, m, (n_el, n_el), side)[0]

    target = bound(2 * n, rho_dbm)
    return brentq(lambda s: bound(n, rho_dbm + s) - target, -1.0, 20.0, xtol=1e-10)
