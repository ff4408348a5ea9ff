"""Scenario configuration: JSON ingestion, validation, hashing and sweep overrides.

Fields with a ``_db`` or ``_dbm`` suffix are logarithmic; everything handed to
the numerical modules is linear.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .beamforming import Combiner, RVariant
from .channel import LINKS, RICIAN_LINKS, ArrayGeometry, IosGrid, LinkBudget, PerSide, link_distances
from .estimation import HardwareProfile
from .linalg import db_to_linear, dbm_to_watts

AXES = (
    "rho_dbm",
    "m_ap",
    "n_elements_per_side",
    "kappa_db",
    "delta_psi_rad",
    "alpha_b",
    "eps_u",
    "eps_v",
    "k_pilots",
)

DEFAULT_COORDS = {
    "ap": (0.0, -100.0, 20.0),
    "ue_r": (0.0, -20.0, 5.0),
    "ue_t": (0.0, 20.0, 5.0),
    "ios_r": (2.0, 0.0, 15.0),
    "ios_t": (-2.0, 0.0, 15.0),
}
DEFAULT_ALPHA = {"A_r": 2.2, "A_t": 2.2, "g_r": 2.2, "g_t": 2.2, "b_r": 4.8, "b_t": 4.8}


class ConfigError(ValueError):
    pass


def _grid_dict(g: IosGrid) -> dict:
    return {"nx": g.nx, "ny": g.ny, "dx": g.dx, "dy": g.dy}


def _per_link(value, links, name) -> dict[str, float]:
    """Expand a scalar, a per-kind mapping (``A``, ``g``, ``b``) or a per-link mapping."""
    if isinstance(value, (int, float)):
        return {ln: float(value) for ln in links}
    if not isinstance(value, Mapping):
        raise ConfigError(f"{name} must be a number or an object")
    out = {}
    for ln in links:
        if ln in value:
            out[ln] = float(value[ln])
        elif ln.split("_")[0] in value:
            out[ln] = float(value[ln.split("_")[0]])
        else:
            raise ConfigError(f"{name} has no entry for link {ln}")
    unknown = set(value) - set(links) - {ln.split("_")[0] for ln in links}
    if unknown:
        raise ConfigError(f"{name} has unknown links {sorted(unknown)}")
    return out


@dataclass(frozen=True)
class SystemConfig:
    m_ap: int = 100
    d0: float = 0.5
    ios_r: IosGrid = IosGrid(20, 20)
    ios_t: IosGrid = IosGrid(20, 20)
    coords: Mapping[str, tuple] = field(default_factory=lambda: dict(DEFAULT_COORDS))
    delta_psi_rad: float = 0.1 * math.pi
    kappa: Mapping[str, float] = field(default_factory=lambda: {ln: 1.0 for ln in RICIAN_LINKS})
    alpha: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_ALPHA))
    c0_db: float = -30.0
    k_pilots: int = 16
    eps_v: float = 1.0
    eps_ur: float = 1.0
    eps_ut: float = 1.0
    rho_r_dbm: float = 20.0
    rho_t_dbm: float = 20.0
    noise_dbm: float = -90.0
    estimator_ignores_hwi: bool = False
    combiner: str = "mmse"
    ios_phases: str = "optimal"
    r_matrix_variant: str = "appendix_a"
    include_ios: bool = True
    blocks: int = 20
    trials_per_block: int = 500

    def __post_init__(self):
        try:
            ArrayGeometry(self.m_ap, self.d0, self.ios_r, self.ios_t)
            HardwareProfile(self.eps_v, self.eps_ur, self.eps_ut)
            Combiner(self.combiner)
            RVariant(self.r_matrix_variant)
            link_distances(self.coords)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.ios_phases not in ("optimal", "random"):
            raise ConfigError(f"ios_phases must be 'optimal' or 'random', got {self.ios_phases!r}")
        for ln in RICIAN_LINKS:
            k = self.kappa.get(ln)
            if k is None or not (math.isfinite(k) and k >= 0):
                raise ConfigError(f"Rician factor for {ln} must be finite and >= 0, got {k}")
        for ln in LINKS:
            a = self.alpha.get(ln)
            if a is None or not (math.isfinite(a) and a > 0):
                raise ConfigError(f"path-loss exponent for {ln} must be positive, got {a}")
        if self.k_pilots < 2:
            raise ConfigError("k_pilots must be >= 2")
        if self.blocks < 1 or self.trials_per_block < 1:
            raise ConfigError("blocks and trials_per_block must be >= 1")
        for name in ("delta_psi_rad", "c0_db", "rho_r_dbm", "rho_t_dbm", "noise_dbm", "d0"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    # derived quantities
    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.m_ap, self.d0, self.ios_r, self.ios_t)

    @property
    def profile(self) -> HardwareProfile:
        return HardwareProfile(self.eps_v, self.eps_ur, self.eps_ut)

    @property
    def powers(self) -> PerSide:
        return PerSide(dbm_to_watts(self.rho_r_dbm), dbm_to_watts(self.rho_t_dbm))

    @property
    def noise(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def n_elements(self) -> PerSide:
        return PerSide(self.ios_r.n, self.ios_t.n)

    def budget(self) -> LinkBudget:
        b = LinkBudget.from_distances(link_distances(self.coords), self.alpha, db_to_linear(self.c0_db), self.kappa)
        return b if self.include_ios else b.without_ios()

    # overrides
    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_axis(self, axis: str, value: float) -> "SystemConfig":
        if axis not in AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
        if not math.isfinite(value):
            raise ConfigError(f"sweep value for {axis} is not finite")
        if axis == "rho_dbm":
            return self.replace(rho_r_dbm=value, rho_t_dbm=value)
        if axis == "m_ap":
            return self.replace(m_ap=_as_int(value, axis))
        if axis == "n_elements_per_side":
            n = _as_int(value, axis)
            return self.replace(
                ios_r=IosGrid.with_elements(n, self.ios_r.dx, self.ios_r.dy),
                ios_t=IosGrid.with_elements(n, self.ios_t.dx, self.ios_t.dy),
            )
        if axis == "kappa_db":
            return self.replace(kappa={ln: db_to_linear(value) for ln in RICIAN_LINKS})
        if axis == "delta_psi_rad":
            return self.replace(delta_psi_rad=value)
        if axis == "alpha_b":
            return self.replace(alpha={**self.alpha, "b_r": value, "b_t": value})
        if axis == "eps_u":
            return self.replace(eps_ur=value, eps_ut=value)
        if axis == "eps_v":
            return self.replace(eps_v=value)
        return self.replace(k_pilots=_as_int(value, axis))

    # serialization
    def to_dict(self) -> dict[str, Any]:
        return {
            "m_ap": self.m_ap,
            "d0": self.d0,
            "ios": {"r": _grid_dict(self.ios_r), "t": _grid_dict(self.ios_t)},
            "coords": {k: list(v) for k, v in sorted(self.coords.items())},
            "delta_psi_rad": self.delta_psi_rad,
            "kappa": dict(sorted(self.kappa.items())),
            "alpha": dict(sorted(self.alpha.items())),
            "c0_db": self.c0_db,
            "k_pilots": self.k_pilots,
            "eps_v": self.eps_v,
            "eps_ur": self.eps_ur,
            "eps_ut": self.eps_ut,
            "rho_r_dbm": self.rho_r_dbm,
            "rho_t_dbm": self.rho_t_dbm,
            "noise_dbm": self.noise_dbm,
            "estimator_ignores_hwi": self.estimator_ignores_hwi,
            "combiner": self.combiner,
            "ios_phases": self.ios_phases,
            "r_matrix_variant": self.r_matrix_variant,
            "include_ios": self.include_ios,
            "blocks": self.blocks,
            "trials_per_block": self.trials_per_block,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SystemConfig":
        return config_from_dict(raw)[0]


def _as_int(value, name) -> int:
    if float(value) != int(value):
        raise ConfigError(f"{name} must be an integer, got {value}")
    return int(value)


_SCALAR_KEYS = {
    "m_ap": int,
    "d0": float,
    "delta_psi_rad": float,
    "c0_db": float,
    "k_pilots": int,
    "eps_v": float,
    "eps_ur": float,
    "eps_ut": float,
    "rho_r_dbm": float,
    "rho_t_dbm": float,
    "noise_dbm": float,
    "estimator_ignores_hwi": bool,
    "combiner": str,
    "ios_phases": str,
    "r_matrix_variant": str,
    "include_ios": bool,
    "blocks": int,
    "trials_per_block": int,
}
_OTHER_KEYS = {"ios", "coords", "kappa", "kappa_db", "alpha", "sweep", "values", "axis"}


def config_from_dict(raw: Mapping[str, Any]) -> tuple[SystemConfig, list[float] | None]:
    """Parse a config mapping; returns the config and optional sweep values."""
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(_SCALAR_KEYS) - _OTHER_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw: dict[str, Any] = {}
    for key, typ in _SCALAR_KEYS.items():
        if key in raw:
            value = raw[key]
            if typ is bool:
                if not isinstance(value, bool):
                    raise ConfigError(f"{key} must be true or false")
            elif typ is int:
                value = _as_int(value, key)
            elif typ is float:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{key} must be a number")
                value = float(value)
            elif not isinstance(value, str):
                raise ConfigError(f"{key} must be a string")
            kw[key] = value
    if "ios" in raw:
        ios = raw["ios"]
        try:
            for side in ("r", "t"):
                if side in ios:
                    g = ios[side]
                    kw[f"ios_{side}"] = IosGrid(int(g["nx"]), int(g["ny"]), float(g.get("dx", 0.5)), float(g.get("dy", 0.5)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad ios block: {exc}") from None
    if "coords" in raw:
        kw["coords"] = {**DEFAULT_COORDS, **{k: tuple(float(c) for c in v) for k, v in raw["coords"].items()}}
    if "kappa" in raw and "kappa_db" in raw:
        raise ConfigError("give either kappa (linear) or kappa_db, not both")
    if "kappa" in raw:
        kappa = _per_link(raw["kappa"], RICIAN_LINKS, "kappa")
        bad = {ln: v for ln, v in kappa.items() if not v >= 0}
        if bad:
            raise ConfigError(f"Rician factors must be >= 0, got {bad}")
        kw["kappa"] = kappa
    elif "kappa_db" in raw:
        kw["kappa"] = {ln: db_to_linear(v) for ln, v in _per_link(raw["kappa_db"], RICIAN_LINKS, "kappa_db").items()}
    if "alpha" in raw:
        alpha = dict(DEFAULT_ALPHA)
        if isinstance(raw["alpha"], Mapping):
            for key, v in raw["alpha"].items():
                targets = [ln for ln in LINKS if ln == key or ln.split("_")[0] == key]
                if not targets:
                    raise ConfigError(f"alpha has unknown link {key!r}")
                for ln in targets:
                    alpha[ln] = float(v)
        else:
            alpha = _per_link(raw["alpha"], LINKS, "alpha")
        kw["alpha"] = alpha
    values = raw.get("values", raw.get("sweep"))
    if values is not None:
        if isinstance(values, Mapping):
            values = values.get("values")
        try:
            values = [float(v) for v in values]
        except (TypeError, ValueError):
            raise ConfigError("sweep values must be a list of numbers") from None
    return SystemConfig(**kw), values


def load_config(path: str | Path) -> tuple[SystemConfig, list[float] | None]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)
