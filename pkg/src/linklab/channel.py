"""Scenario geometry, steering vectors and equivalent UE-to-AP channel statistics.

Wavelength is normalized to one, so every spacing is in wavelengths. Steering
vectors use the negative-exponent phase progression ``exp(-j 2 pi (...))``;
``sign=+1`` flips to the conjugate convention everywhere at once.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Generic, Iterator, Mapping, TypeVar

import numpy as np

from .linalg import unit_cn

T = TypeVar("T")

RICIAN_LINKS = ("A_r", "A_t", "g_r", "g_t")
LINKS = RICIAN_LINKS + ("b_r", "b_t")
NODES = ("ap", "ue_r", "ue_t", "ios_r", "ios_t")
LINK_ENDPOINTS = {
    "A_r": ("ios_r", "ap"),
    "A_t": ("ios_t", "ap"),
    "g_r": ("ue_r", "ios_r"),
    "g_t": ("ue_t", "ios_t"),
    "b_r": ("ue_r", "ap"),
    "b_t": ("ue_t", "ap"),
}


class Side(str, enum.Enum):
    """UE-R sits on the reflecting side of the surface, UE-T on the transmitting side."""

    R = "r"
    T = "t"

    @property
    def other(self) -> "Side":
        return Side.T if self is Side.R else Side.R


SIDES = (Side.R, Side.T)


@dataclass(frozen=True)
class PerSide(Generic[T]):
    r: T
    t: T

    def __getitem__(self, side) -> T:
        return self.r if Side(side) is Side.R else self.t

    def __iter__(self) -> Iterator[T]:
        yield self.r
        yield self.t


@dataclass(frozen=True)
class IosGrid:
    nx: int
    ny: int
    dx: float = 0.5
    dy: float = 0.5

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid counts must be >= 1, got {self.nx}x{self.ny}")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("grid spacings must be positive")

    @property
    def n(self) -> int:
        return self.nx * self.ny

    @classmethod
    def with_elements(cls, n: int, dx: float = 0.5, dy: float = 0.5) -> "IosGrid":
        """Grid with ``n`` elements: square if possible, else ``2s x s``, else closest factor pair."""
        n = int(n)
        if n < 1:
            raise ValueError("element count must be >= 1")
        s = math.isqrt(n)
        if s * s == n:
            return cls(s, s, dx, dy)
        if n % 2 == 0 and math.isqrt(n // 2) ** 2 == n // 2:
            s = math.isqrt(n // 2)
            return cls(2 * s, s, dx, dy)
        ny = max(k for k in range(1, s + 1) if n % k == 0)
        return cls(n // ny, ny, dx, dy)


@dataclass(frozen=True)
class ArrayGeometry:
    m_ap: int
    d0: float
    ios_r: IosGrid
    ios_t: IosGrid

    def __post_init__(self):
        if self.m_ap < 1:
            raise ValueError("m_ap must be >= 1")
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")

    def grid(self, side) -> IosGrid:
        return self.ios_r if Side(side) is Side.R else self.ios_t


@dataclass(frozen=True)
class SideAngles:
    """Angles for one user, in radians.

    ``phi``/``varphi``: elevation/azimuth of arrival at the surface from the UE.
    ``omega``/``varpi``: elevation/azimuth of departure from the surface toward the AP.
    ``psi``: angle of arrival at the AP array.
    """

    phi: float
    varphi: float
    omega: float
    varpi: float
    psi: float

    def __post_init__(self):
        for name in ("phi", "varphi", "omega", "varpi", "psi"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"angle {name} is not finite")
            object.__setattr__(self, name, float(value) % (2 * math.pi))


class AngleSet(PerSide[SideAngles]):
    pass


@dataclass(frozen=True)
class LinkBudget:
    """Large-scale gains and Rician factors.

    ``gain`` maps each of A_r, A_t, g_r, g_t, b_r, b_t to the linear path gain
    ``c0 * d**-alpha``; ``kappa`` maps the four surface links to linear Rician
    factors.
    """

    gain: Mapping[str, float]
    kappa: Mapping[str, float]

    def __post_init__(self):
        for link in LINKS:
            if link not in self.gain:
                raise ValueError(f"missing gain for link {link}")
            if not self.gain[link] >= 0:
                raise ValueError(f"gain for {link} must be >= 0")
        for link in RICIAN_LINKS:
            if link not in self.kappa:
                raise ValueError(f"missing Rician factor for link {link}")
            if not (self.kappa[link] >= 0 and math.isfinite(self.kappa[link])):
                raise ValueError(f"Rician factor for {link} must be finite and >= 0")

    @classmethod
    def from_distances(cls, distances, alpha, c0: float, kappa) -> "LinkBudget":
        return cls({ln: path_loss(c0, distances[ln], alpha[ln]) for ln in LINKS}, dict(kappa))

    def without_ios(self) -> "LinkBudget":
        gain = dict(self.gain)
        for link in RICIAN_LINKS:
            gain[link] = 0.0
        return LinkBudget(gain, dict(self.kappa))

    def with_gains(self, **gains: float) -> "LinkBudget":
        gain = dict(self.gain)
        gain.update(gains)
        return LinkBudget(gain, dict(self.kappa))

    def side(self, side) -> tuple[float, float, float, float, float]:
        """``(rho_A, rho_g, rho_b, kappa_A, kappa_g)`` for one user."""
        s = Side(side).value
        return (
            self.gain[f"A_{s}"],
            self.gain[f"g_{s}"],
            self.gain[f"b_{s}"],
            self.kappa[f"A_{s}"],
            self.kappa[f"g_{s}"],
        )


class IosPhases(PerSide[np.ndarray]):
    def __post_init__(self):
        for arr in self:
            arr = np.asarray(arr)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValueError("phase vectors must be finite 1-D arrays")

    def matrix(self, side) -> np.ndarray:
        return np.diag(np.exp(1j * np.asarray(self[side])))


def path_loss(c0: float, d: float, alpha: float) -> float:
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return c0 * d ** (-alpha)


def ios_steering(elev: float, azim: float, grid: IosGrid, sign: int = -1) -> np.ndarray:
    """Planar-array response, flattened with the x index running fastest."""
    nx = np.arange(grid.nx)
    ny = np.arange(grid.ny)
    phase = (
        grid.dx * nx[None, :] * math.sin(elev) * math.cos(azim)
        + grid.dy * ny[:, None] * math.cos(elev)
    )
    return np.exp(sign * 2j * np.pi * phase).ravel()


def ap_steering(psi: float, m: int, d0: float, sign: int = -1) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.exp(sign * 2j * np.pi * d0 * np.arange(m) * math.cos(psi))


def los_gain(a_ios: np.ndarray, theta: np.ndarray, gbar: np.ndarray) -> float:
    """``|a_ios^H Theta gbar|^2``."""
    return float(abs(np.vdot(a_ios, np.exp(1j * np.asarray(theta)) * gbar)) ** 2)


@dataclass(frozen=True)
class SideStatistics:
    """First- and second-order statistics of one user's equivalent channel."""

    hbar: np.ndarray
    c_hh: np.ndarray
    a_ap: np.ndarray
    a_ios: np.ndarray
    gbar: np.ndarray
    theta: np.ndarray
    los_gain: float
    rho_A: float
    rho_g: float
    rho_b: float
    kappa_A: float
    kappa_g: float

    @property
    def m(self) -> int:
        return self.hbar.size

    @property
    def n_elements(self) -> int:
        return self.theta.size

    @property
    def los_scale(self) -> float:
        """``rho_A rho_g kappa_A kappa_g / ((1+kappa_A)(1+kappa_g))``."""
        return (
            self.rho_A * self.rho_g * self.kappa_A * self.kappa_g
            / ((1 + self.kappa_A) * (1 + self.kappa_g))
        )

    @property
    def scattered_power(self) -> float:
        """Per-antenna variance of the equivalent channel (the diagonal of ``c_hh``)."""
        k_a, k_g = self.kappa_A, self.kappa_g
        return (
            self.rho_A * self.rho_g * (1 + k_g + k_a) * self.n_elements / ((1 + k_a) * (1 + k_g))
            + self.rho_b
        )

    @property
    def antenna_power(self) -> float:
        """``E|h_m|^2``, the quantity scaling the AP distortion of this user."""
        return self.scattered_power + self.los_scale * self.los_gain


class ChannelStatistics(PerSide[SideStatistics]):
    pass


def _side_vectors(angles: AngleSet, geometry: ArrayGeometry, side, sign: int):
    ang = angles[side]
    grid = geometry.grid(side)
    a_ap = ap_steering(ang.psi, geometry.m_ap, geometry.d0, sign)
    a_ios = ios_steering(ang.omega, ang.varpi, grid, sign)
    gbar = ios_steering(ang.phi, ang.varphi, grid, sign)
    return a_ap, a_ios, gbar


def _check_phases(phases: IosPhases, geometry: ArrayGeometry, side) -> np.ndarray:
    theta = np.asarray(phases[side], dtype=float)
    if theta.size != geometry.grid(side).n:
        raise ValueError(
            f"side {Side(side).value}: {theta.size} phases for {geometry.grid(side).n} elements"
        )
    return theta


def channel_mean(budget, angles, geometry, phases, side, sign: int = -1) -> np.ndarray:
    rho_a, rho_g, _, k_a, k_g = budget.side(side)
    a_ap, a_ios, gbar = _side_vectors(angles, geometry, side, sign)
    theta = _check_phases(phases, geometry, side)
    coupling = np.vdot(a_ios, np.exp(1j * theta) * gbar)
    scale = math.sqrt(rho_a * rho_g) * math.sqrt(k_a * k_g / ((1 + k_a) * (1 + k_g)))
    return scale * coupling * a_ap


def channel_covariance(budget, angles, geometry, phases, side, sign: int = -1) -> np.ndarray:
    rho_a, rho_g, rho_b, k_a, k_g = budget.side(side)
    a_ap = ap_steering(angles[side].psi, geometry.m_ap, geometry.d0, sign)
    n = geometry.grid(side).n
    m = geometry.m_ap
    cov = (
        rho_a * rho_g * n
        * ((1 + k_g) * np.eye(m) + k_a * np.outer(a_ap, a_ap.conj()))
        / ((1 + k_a) * (1 + k_g))
    )
    return cov + rho_b * np.eye(m)


def build_statistics(
    geometry: ArrayGeometry,
    budget: LinkBudget,
    angles: AngleSet,
    phases: IosPhases,
    sign: int = -1,
) -> ChannelStatistics:
    sides = []
    for side in SIDES:
        rho_a, rho_g, rho_b, k_a, k_g = budget.side(side)
        a_ap, a_ios, gbar = _side_vectors(angles, geometry, side, sign)
        theta = _check_phases(phases, geometry, side)
        sides.append(
            SideStatistics(
                hbar=channel_mean(budget, angles, geometry, phases, side, sign),
                c_hh=channel_covariance(budget, angles, geometry, phases, side, sign),
                a_ap=a_ap,
                a_ios=a_ios,
                gbar=gbar,
                theta=theta,
                los_gain=los_gain(a_ios, theta, gbar),
                rho_A=rho_a,
                rho_g=rho_g,
                rho_b=rho_b,
                kappa_A=k_a,
                kappa_g=k_g,
            )
        )
    return ChannelStatistics(*sides)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of both equivalent channels with the small-scale draws behind them.

    ``a_tilde`` is ``None`` for draws made through the reduced route, where only
    ``a_tilde @ Theta @ g`` is needed and is drawn directly.
    """

    h: PerSide
    g_tilde: PerSide
    b: PerSide
    a_tilde: PerSide | None = field(default=None)

    @property
    def h_r(self) -> np.ndarray:
        return self.h.r

    @property
    def h_t(self) -> np.ndarray:
        return self.h.t


def compose_channel(st: SideStatistics, g_tilde, a_tilde, b) -> np.ndarray:
    """Equivalent channel from explicit small-scale draws (single realization)."""
    k_a, k_g = st.kappa_A, st.kappa_g
    g = (math.sqrt(k_g) * st.gbar + g_tilde) / math.sqrt(1 + k_g)
    a = (math.sqrt(k_a) * np.outer(st.a_ap, st.a_ios.conj()) + a_tilde) / math.sqrt(1 + k_a)
    return math.sqrt(st.rho_A * st.rho_g) * (a @ (np.exp(1j * st.theta) * g)) + math.sqrt(st.rho_b) * b


def compose_channel_reduced(st: SideStatistics, g_tilde, z, b) -> np.ndarray:
    """Batched equivalent channel where ``a_tilde @ Theta @ g`` is replaced by ``||g|| z``.

    Rows of the NLoS surface-to-AP matrix are i.i.d. CN(0, I), so given ``g`` that
    product is exactly CN(0, ||g||^2 I). Leading axes of the inputs are batch axes.
    """
    k_a, k_g = st.kappa_A, st.kappa_g
    g = (math.sqrt(k_g) * st.gbar + g_tilde) / math.sqrt(1 + k_g)
    coupling = g @ (np.exp(1j * st.theta) * st.a_ios.conj())
    norm_g = np.linalg.norm(g, axis=-1)
    scatter = (
        math.sqrt(k_a) * coupling[..., None] * st.a_ap + norm_g[..., None] * z
    ) / math.sqrt(1 + k_a)
    return math.sqrt(st.rho_A * st.rho_g) * scatter + math.sqrt(st.rho_b) * b


def sample_channels(
    stats: ChannelStatistics,
    rng: np.random.Generator,
    size: int | None = None,
    full: bool = False,
) -> ChannelRealization:
    """Draw equivalent channels for both users.

    ``full=True`` draws the whole surface-to-AP NLoS matrix and composes the
    channel literally (single realization only); otherwise the reduced route is
    used, which has the same distribution and supports a batch ``size``.
    """
    hs, gs, bs, As = [], [], [], []
    for st in stats:
        m, n = st.m, st.n_elements
        if full:
            if size is not None:
                raise ValueError("full composition draws one realization at a time")
            g_tilde = unit_cn(rng, n)
            a_tilde = unit_cn(rng, (m, n))
            b = unit_cn(rng, m)
            hs.append(compose_channel(st, g_tilde, a_tilde, b))
            As.append(a_tilde)
        else:
            lead = () if size is None else (size,)
            g_tilde = unit_cn(rng, lead + (n,))
            z = unit_cn(rng, lead + (m,))
            b = unit_cn(rng, lead + (m,))
            hs.append(compose_channel_reduced(st, g_tilde, z, b))
        gs.append(g_tilde)
        bs.append(b)
    return ChannelRealization(
        h=PerSide(*hs), g_tilde=PerSide(*gs), b=PerSide(*bs), a_tilde=PerSide(*As) if full else None
    )


def link_distances(coords: Mapping[str, tuple]) -> dict[str, float]:
    pos = {}
    for node in NODES:
        if node not in coords:
            raise ValueError(f"missing coordinates for node {node}")
        pos[node] = np.asarray(coords[node], dtype=float)
        if pos[node].shape != (3,):
            raise ValueError(f"node {node} needs three coordinates")
    for i, a in enumerate(NODES):
        for b in NODES[i + 1:]:
            if np.allclose(pos[a], pos[b]):
                raise ValueError(f"nodes {a} and {b} coincide")
    return {ln: float(np.linalg.norm(pos[u] - pos[v])) for ln, (u, v) in LINK_ENDPOINTS.items()}


def angles_from_scenario(coords, delta_psi: float, rng: np.random.Generator) -> AngleSet:
    """Random angle set for one statistical block.

    Elevations are uniform on [0, pi), azimuths and the AP arrival angle of
    UE-R uniform on [0, 2 pi); the UE-T arrival angle is offset so that
    ``psi_r - psi_t == delta_psi``. ``coords`` is only checked for coincident
    nodes here; distances come from :func:`link_distances`.
    """
    link_distances(coords)
    u = rng.random(9)
    two_pi = 2 * math.pi
    psi_r = two_pi * u[8]
    return AngleSet(
        SideAngles(math.pi * u[0], two_pi * u[1], math.pi * u[2], two_pi * u[3], psi_r),
        SideAngles(math.pi * u[4], two_pi * u[5], math.pi * u[6], two_pi * u[7], psi_r - delta_psi),
    )
