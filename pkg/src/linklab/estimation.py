"""Pilot transmission under transceiver impairments and LMMSE channel estimation.

Both users send orthogonal unit-modulus pilots of length ``K``. The AP
despreads the ``K`` observations per user and applies the LMMSE filter built
from the known channel statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import SIDES, ChannelStatistics, PerSide, Side, SideStatistics
from .linalg import HermitianSolver, hermitian_part, unit_cn


@dataclass(frozen=True)
class HardwareProfile:
    """Quality factors in [0, 1]; 1 means ideal hardware."""

    eps_v: float = 1.0
    eps_ur: float = 1.0
    eps_ut: float = 1.0

    def __post_init__(self):
        for name in ("eps_v", "eps_ur", "eps_ut"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def eps_u(self, side) -> float:
        return self.eps_ur if Side(side) is Side.R else self.eps_ut

    @classmethod
    def ideal(cls) -> "HardwareProfile":
        return cls(1.0, 1.0, 1.0)


@dataclass(frozen=True)
class PilotBook:
    k: int
    tau: PerSide

    @property
    def tau_r(self) -> np.ndarray:
        return self.tau.r

    @property
    def tau_t(self) -> np.ndarray:
        return self.tau.t


def make_pilots(k: int) -> PilotBook:
    """First two rows of the ``k``-point DFT matrix."""
    if k < 2:
        raise ValueError(f"pilot length must be >= 2, got {k}")
    idx = np.arange(k)
    return PilotBook(k, PerSide(np.ones(k, dtype=complex), np.exp(-2j * np.pi * idx / k)))


def _powers(powers) -> PerSide:
    p = powers if isinstance(powers, PerSide) else PerSide(*powers)
    for value in p:
        if value < 0:
            raise ValueError("transmit powers must be >= 0")
    return p


def simulate_pilot_rx(h, profile: HardwareProfile, pilots: PilotBook, powers, noise: float, rng):
    """Raw pilot observations, shape ``(..., K, M)`` for channels of shape ``(..., M)``.

    UE distortion is one scalar per user and pilot slot; AP distortion and noise
    are i.i.d. per antenna and slot.
    """
    p = _powers(powers)
    h = PerSide(np.asarray(h[Side.R]), np.asarray(h[Side.T]))
    if h.r.shape != h.t.shape:
        raise ValueError("channel shapes differ between sides")
    lead, m = h.r.shape[:-1], h.r.shape[-1]
    k = pilots.k
    ev = profile.eps_v
    x = math.sqrt(noise) * unit_cn(rng, lead + (k, m))
    for side in SIDES:
        rho, eu = p[side], profile.eps_u(side)
        hk = h[side][..., None, :]
        tau = pilots.tau[side][:, None]
        u = unit_cn(rng, lead + (k, 1))
        v = unit_cn(rng, lead + (k, m))
        x = x + math.sqrt(rho * ev * eu) * hk * tau
        x = x + math.sqrt(rho * ev * (1 - eu)) * hk * u
        x = x + math.sqrt(rho * (1 - ev)) * hk * v
    return x


def despread(observations, pilots: PilotBook, side) -> np.ndarray:
    """Correlate the ``K`` slots with one user's pilot, normalized by ``1/sqrt(K)``."""
    obs = np.asarray(observations)
    if obs.ndim < 2 or obs.shape[-2] != pilots.k:
        raise ValueError(f"expected {pilots.k} pilot slots, got shape {obs.shape}")
    tau = pilots.tau[side]
    return np.einsum("...km,k->...m", obs, tau.conj()) / math.sqrt(pilots.k)


def sample_despread(h, profile: HardwareProfile, powers, noise: float, k: int, rng) -> PerSide:
    """Draw despread observations for both users directly.

    Despreading with orthonormal pilots is a unitary projection, so every
    distortion and noise term lands on an independent unit Gaussian. The result
    has the same law as :func:`simulate_pilot_rx` followed by :func:`despread`
    at a fraction of the cost.
    """
    p = _powers(powers)
    h = PerSide(np.asarray(h[Side.R]), np.asarray(h[Side.T]))
    lead, m = h.r.shape[:-1], h.r.shape[-1]
    ev = profile.eps_v
    out = []
    for side in SIDES:
        x = math.sqrt(k * p[side] * ev * profile.eps_u(side)) * h[side]
        for src in SIDES:
            rho, eu = p[src], profile.eps_u(src)
            u = unit_cn(rng, lead + (1,))
            v = unit_cn(rng, lead + (m,))
            x = x + math.sqrt(rho * ev * (1 - eu)) * h[src] * u
            x = x + math.sqrt(rho * (1 - ev)) * h[src] * v
        out.append(x + math.sqrt(noise) * unit_cn(rng, lead + (m,)))
    return PerSide(*out)


@dataclass(frozen=True)
class EstimatorModel:
    """LMMSE operator for one user together with its error statistics.

    ``filt`` and ``x_ref`` are what the estimator applies,
    ``h_hat = hbar + filt @ (x - x_ref)``. ``c_hat`` and ``c_err`` are the true
    second-order statistics of the estimate (central) and of the error
    (raw second moment). When the estimator is built with the true hardware
    profile ``x_ref == x_mean`` and ``c_hat + c_err == c_hh``.
    """

    hbar: np.ndarray
    c_hh: np.ndarray
    x_mean: np.ndarray
    x_ref: np.ndarray
    c_hx: np.ndarray
    c_xx: np.ndarray
    filt: np.ndarray
    c_hat: np.ndarray
    c_err: np.ndarray
    matched: bool = True

    @property
    def nmse(self) -> float:
        prior = float(np.trace(self.c_hh).real)
        if prior <= 0:
            raise ValueError("prior covariance has zero trace")
        return float(np.trace(self.c_err).real) / prior

    @property
    def h_hat_mean(self) -> np.ndarray:
        return self.hbar + self.filt @ (self.x_mean - self.x_ref)


def observation_moments(stats: ChannelStatistics, profile: HardwareProfile, powers, noise: float, k: int, side):
    """``(E[x_i], C_hx, C_xx)`` for the despread observation of one user."""
    p = _powers(powers)
    side = Side(side)
    ev = profile.eps_v
    st: SideStatistics = stats[side]
    m = st.m
    rho_i, eu_i = p[side], profile.eps_u(side)
    gain = math.sqrt(k * rho_i * ev * eu_i)
    x_mean = gain * st.hbar
    c_hx = gain * st.c_hh
    c_xx = rho_i * ev * (1 + (k - 1) * eu_i) * st.c_hh + noise * np.eye(m)
    c_xx = c_xx.astype(complex)
    for src in SIDES:
        ss = stats[src]
        rho, eu = p[src], profile.eps_u(src)
        if src is not side:
            c_xx += rho * ev * (1 - eu) * ss.c_hh
        c_xx += rho * ev * (1 - eu) * np.outer(ss.hbar, ss.hbar.conj())
        c_xx += rho * (1 - ev) * (np.diag(np.diag(ss.c_hh)) + ss.los_scale * ss.los_gain * np.eye(m))
    return x_mean, c_hx, hermitian_part(c_xx)


def build_estimator(
    stats: ChannelStatistics,
    profile: HardwareProfile,
    powers,
    noise: float,
    k: int,
    assumed_profile: HardwareProfile | None = None,
) -> PerSide:
    """LMMSE models for both users.

    ``assumed_profile`` lets the filter be designed for different hardware than
    the one generating the data (for instance ideal hardware, to quantify the
    loss from ignoring impairments). Error statistics always refer to the true
    profile.
    """
    if k < 1:
        raise ValueError("pilot length must be >= 1")
    models = []
    for side in SIDES:
        x_mean, c_hx, c_xx = observation_moments(stats, profile, powers, noise, k, side)
        if assumed_profile is None:
            x_ref, c_hx_a, c_xx_a = x_mean, c_hx, c_xx
        else:
            x_ref, c_hx_a, c_xx_a = observation_moments(stats, assumed_profile, powers, noise, k, side)
        c_hh = stats[side].c_hh
        if not np.any(c_hx_a):
            filt = np.zeros_like(c_hh, dtype=complex)
        else:
            solver = HermitianSolver(c_xx_a)
            filt = solver.solve(c_hx_a.conj().T).conj().T
        c_hat = hermitian_part(filt @ c_xx @ filt.conj().T)
        if assumed_profile is None:
            c_err = hermitian_part(c_hh - filt @ c_hx.conj().T)
        else:
            bias = filt @ (x_mean - x_ref)
            cross = c_hx @ filt.conj().T
            c_err = hermitian_part(c_hh - cross - cross.conj().T + c_hat + np.outer(bias, bias.conj()))
        models.append(
            EstimatorModel(
                hbar=stats[side].hbar,
                c_hh=c_hh,
                x_mean=x_mean,
                x_ref=x_ref,
                c_hx=c_hx,
                c_xx=c_xx,
                filt=filt,
                c_hat=c_hat,
                c_err=c_err,
                matched=assumed_profile is None,
            )
        )
    return PerSide(*models)


def lmmse_estimate(model: EstimatorModel, x) -> np.ndarray:
    """``hbar + W (x - x_ref)``; ``x`` may carry leading batch axes."""
    x = np.asarray(x)
    if x.shape[-1] != model.hbar.size:
        raise ValueError(f"observation has dim {x.shape[-1]}, model expects {model.hbar.size}")
    return model.hbar + (x - model.x_ref) @ model.filt.T


def nmse_theoretical(models: PerSide) -> float:
    return 0.5 * (models.r.nmse + models.t.nmse)


def nmse_monte_carlo(
    stats: ChannelStatistics,
    models: PerSide,
    profile: HardwareProfile,
    powers,
    noise: float,
    k: int,
    trials: int,
    rng,
    full: bool = False,
) -> float:
    """Average of ``||h - h_hat||^2 / Tr C_hh`` over both users and fresh draws.

    ``full=True`` runs the explicit pilot-slot simulation instead of the
    closed-form despread draw.
    """
    from .channel import sample_channels

    if trials < 1:
        raise ValueError("trials must be >= 1")
    real = sample_channels(stats, rng, size=trials)
    if full:
        obs = simulate_pilot_rx(real.h, profile, make_pilots(k), powers, noise, rng)
        xs = PerSide(*(despread(obs, make_pilots(k), s) for s in SIDES))
    else:
        xs = sample_despread(real.h, profile, powers, noise, k, rng)
    total = 0.0
    for side in SIDES:
        err = real.h[side] - lmmse_estimate(models[side], xs[side])
        per_trial = np.sum(np.abs(err) ** 2, axis=-1) / np.trace(models[side].c_hh).real
        total += math.fsum(per_trial) / trials
    return 0.5 * total
