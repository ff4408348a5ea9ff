"""Monte Carlo sweeps over statistical blocks and coherence intervals.

Each sweep point is split into independent ``(value, block)`` tasks. A block
draws its angles (and random surface phases, if requested) from a stream keyed
by ``(seed, block)`` and its coherence-interval draws from a second stream keyed
the same way, so every sweep value sees the same angles and the result does
not depend on how tasks are scheduled across workers.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .beamforming import (
    BoundConditionWarning,
    Combiner,
    combiner_rates,
    ergodic_se_upper_bound,
    interference_matrix,
    loose_upper_bound,
    optimal_ios_phases,
    random_ios_phases,
    rate_from_zeta,
    se_instantaneous,
)
from .channel import SIDES, PerSide, Side, angles_from_scenario, build_statistics, sample_channels
from .config import AXES, ConfigError, SystemConfig
from .estimation import HardwareProfile, build_estimator, lmmse_estimate, sample_despread

PROTOCOLS = ("ms", "ts")


class SweepError(RuntimeError):
    """A numerical failure inside one task; carries the sweep coordinates."""

    def __init__(self, axis, value, block, cause):
        super().__init__(f"{axis}={value} block={block}: {type(cause).__name__}: {cause}")
        self.axis, self.value, self.block = axis, value, block


def default_workers() -> int:
    raw = os.environ.get("LINKLAB_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"LINKLAB_WORKERS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class ExperimentPlan:
    """A sweep of one config axis.

    ``label`` is written in the report's axis column; it defaults to the axis
    name. ``protocol`` selects simultaneous transmission (``ms``) or the
    half-time single-user baseline (``ts``).
    """

    config: SystemConfig
    axis: str
    values: tuple
    seed: int = 0
    label: str | None = None
    protocol: str = "ms"

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("sweep values must be finite")
        object.__setattr__(self, "values", vals)
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def blocks(self) -> int:
        return self.config.blocks

    @property
    def trials_per_block(self) -> int:
        return self.config.trials_per_block

    @property
    def axis_label(self) -> str:
        return self.label or self.axis

    def variant(self, tag: str, **config_changes) -> "ExperimentPlan":
        return replace(
            self,
            config=self.config.replace(**config_changes) if config_changes else self.config,
            label=f"{self.axis}[{tag}]",
        )


@dataclass(frozen=True)
class BlockResult:
    se_r: float
    se_t: float
    nmse_sim: float
    ub3_r: float
    ub3_t: float
    ub5_r: float
    ub5_t: float
    nmse_theory: float
    trials: int
    condition_violated: bool


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    sum_rate_sim: float
    rate_r_sim: float
    rate_t_sim: float
    ub_thm3_r: float
    ub_thm3_t: float
    ub_thm5_r: float
    ub_thm5_t: float
    nmse_theory: float
    nmse_sim: float
    seed: int


COLUMNS = tuple(f.name for f in SweepRow.__dataclass_fields__.values())


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def series(self, label: str) -> list:
        return [r for r in self.rows if r.axis == label]

    def column(self, name: str, label: str | None = None) -> list:
        rows = self.rows if label is None else self.series(label)
        return [getattr(r, name) for r in rows]

    def extend(self, other: "SweepReport") -> "SweepReport":
        self.rows.extend(other.rows)
        self.metadata.setdefault("series", []).extend(other.metadata.get("series", []))
        for key in ("seed", "config_hash", "blocks", "trials_per_block"):
            self.metadata.setdefault(key, other.metadata.get(key))
        return self


def _nmse_or_nan(model) -> float:
    prior = float(np.trace(model.c_hh).real)
    return float(np.trace(model.c_err).real) / prior if prior > 0 else math.nan


def _fsum_mean_sum(x) -> float:
    return math.fsum(np.ravel(x))


def _estimate(stats, config: SystemConfig, powers, h, rng):
    profile = config.profile
    assumed = HardwareProfile.ideal() if config.estimator_ignores_hwi else None
    models = build_estimator(stats, profile, powers, config.noise, config.k_pilots, assumed)
    r = interference_matrix(stats, models, profile, powers, config.noise, config.r_matrix_variant)
    xs = sample_despread(h, profile, powers, config.noise, config.k_pilots, rng)
    h_hat = PerSide(*(lmmse_estimate(models[s], xs[s]) for s in SIDES))
    return models, r, h_hat


def _bound(stats, models, r, profile, powers, side) -> tuple[float, bool]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundConditionWarning)
        ub = ergodic_se_upper_bound(stats, models, r, profile, powers, side)
    return ub, any(issubclass(w.category, BoundConditionWarning) for w in caught)


def _err_sum(h, h_hat, model) -> float:
    prior = float(np.trace(model.c_hh).real)
    if prior <= 0:
        return math.nan
    return _fsum_mean_sum(np.abs(h - h_hat) ** 2) / prior


def setup_block(config: SystemConfig, seed: int, block: int):
    """Angles, phases and statistics of one block plus its batch of channel draws.

    Returns ``(stats, realization, rng)`` where ``rng`` is the block's trial
    stream, already advanced past the channel draws.
    """
    geo = config.geometry
    rng_block = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, block)))
    angles = angles_from_scenario(config.coords, config.delta_psi_rad, rng_block)
    if config.ios_phases == "random":
        phases = random_ios_phases(geo, rng_block)
    else:
        phases = optimal_ios_phases(angles, geo)
    stats = build_statistics(geo, config.budget(), angles, phases)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, block)))
    return stats, sample_channels(stats, rng, size=config.trials_per_block), rng


def run_block(config: SystemConfig, seed: int, block: int, protocol: str = "ms") -> BlockResult:
    """Simulate one statistical block of ``config.trials_per_block`` coherence intervals."""
    geo = config.geometry
    budget = config.budget()
    profile = config.profile
    powers = config.powers
    trials = config.trials_per_block
    stats, real, rng = setup_block(config, seed, block)

    se, ub3, ub5, nmse_th, err = {}, {}, {}, {}, {}
    flagged = False
    if protocol == "ms":
        models, r, h_hat = _estimate(stats, config, powers, real.h, rng)
        rates = combiner_rates(h_hat, r, profile, powers, config.combiner)
        for s in SIDES:
            se[s] = _fsum_mean_sum(rates.se[s])
            ub3[s], flag = _bound(stats, models, r, profile, powers, s)
            flagged |= flag
            ub5[s] = loose_upper_bound(budget, profile, powers, config.noise, geo.m_ap, config.n_elements, s)[0]
            nmse_th[s] = _nmse_or_nan(models[s])
            err[s] = _err_sum(real.h[s], h_hat[s], models[s])
    else:
        for s in SIDES:
            solo = PerSide(powers.r, 0.0) if s is Side.R else PerSide(0.0, powers.t)
            models, r, h_hat = _estimate(stats, config, solo, real.h, rng)
            if Combiner(config.combiner) is Combiner.MMSE:
                rates = se_instantaneous(h_hat, r, profile, solo)
                se_s = rates.se[s]
            else:
                # a lone user gets the same direction from MR and ZF
                q = h_hat[s]
                num = np.abs(np.einsum("...m,...m->...", q.conj(), h_hat[s])) ** 2
                den = np.einsum("...m,...m->...", q.conj(), q @ r.r_mat.T).real
                g = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
                se_s = rate_from_zeta(g, solo[s], profile.eps_v, profile.eps_u(s))[1]
            se[s] = 0.5 * _fsum_mean_sum(se_s)
            ub, flag = _bound(stats, models, r, profile, solo, s)
            ub3[s] = 0.5 * ub
            ub5[s] = 0.5 * loose_upper_bound(budget, profile, solo, config.noise, geo.m_ap, config.n_elements, s)[0]
            nmse_th[s] = _nmse_or_nan(models[s])
            err[s] = _err_sum(real.h[s], h_hat[s], models[s])
    return BlockResult(
        se_r=se[Side.R],
        se_t=se[Side.T],
        nmse_sim=0.5 * (err[Side.R] + err[Side.T]),
        ub3_r=ub3[Side.R],
        ub3_t=ub3[Side.T],
        ub5_r=ub5[Side.R],
        ub5_t=ub5[Side.T],
        nmse_theory=0.5 * (nmse_th[Side.R] + nmse_th[Side.T]),
        trials=trials,
        condition_violated=flagged,
    )


def _task(args):
    config, axis, value, seed, block, protocol = args
    try:
        return run_block(config, seed, block, protocol)
    except (np.linalg.LinAlgError, ValueError, ZeroDivisionError, FloatingPointError) as exc:
        raise SweepError(axis, value, block, exc) from exc


def _aggregate(plan: ExperimentPlan, value: float, blocks: Sequence[BlockResult]) -> SweepRow:
    total = sum(b.trials for b in blocks)
    nb = len(blocks)

    def mean(attr, denom):
        return math.fsum(getattr(b, attr) for b in blocks) / denom

    rate_r = mean("se_r", total)
    rate_t = mean("se_t", total)
    return SweepRow(
        axis=plan.axis_label,
        value=value,
        sum_rate_sim=rate_r + rate_t,
        rate_r_sim=rate_r,
        rate_t_sim=rate_t,
        ub_thm3_r=mean("ub3_r", nb),
        ub_thm3_t=mean("ub3_t", nb),
        ub_thm5_r=mean("ub5_r", nb),
        ub_thm5_t=mean("ub5_t", nb),
        nmse_theory=mean("nmse_theory", nb),
        nmse_sim=mean("nmse_sim", total),
        seed=plan.seed,
    )


def run_ergodic(plan: ExperimentPlan, workers: int | None = None) -> SweepReport:
    """Ergodic rates, bounds and estimation error for every value of the sweep."""
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    configs = [plan.config.with_axis(plan.axis, v) for v in plan.values]
    tasks = [
        (cfg, plan.axis, v, plan.seed, b, plan.protocol)
        for cfg, v in zip(configs, plan.values)
        for b in range(plan.blocks)
    ]
    if workers == 1 or len(tasks) <= 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(_task, tasks))
    rows = []
    violations = []
    for i, v in enumerate(plan.values):
        chunk = results[i * plan.blocks:(i + 1) * plan.blocks]
        rows.append(_aggregate(plan, v, chunk))
        violations += [(v, b) for b, res in enumerate(chunk) if res.condition_violated]
    meta = {
        "seed": plan.seed,
        "config_hash": plan.config.config_hash(),
        "blocks": plan.blocks,
        "trials_per_block": plan.trials_per_block,
        "series": [
            {
                "label": plan.axis_label,
                "axis": plan.axis,
                "protocol": plan.protocol,
                "config_hash": plan.config.config_hash(),
                "bound_condition_violations": violations,
            }
        ],
    }
    return SweepReport(rows, meta)


def run_nmse(plan: ExperimentPlan, workers: int | None = None) -> SweepReport:
    """Estimator-aware series followed by the series whose estimator assumes ideal hardware."""
    aware = run_ergodic(replace(plan, config=plan.config.replace(estimator_ignores_hwi=False)), workers)
    ignore = run_ergodic(plan.variant("ignore_hwi", estimator_ignores_hwi=True), workers)
    return aware.extend(ignore)


def ts_protocol_rate(plan: ExperimentPlan, workers: int | None = None) -> SweepReport:
    return run_ergodic(replace(plan.variant("ts"), protocol="ts"), workers)


def no_ios_baseline(plan: ExperimentPlan, workers: int | None = None) -> SweepReport:
    return run_ergodic(plan.variant("no_ios", include_ios=False), workers)


def split_trials(total: int, blocks: int) -> int:
    """Coherence intervals per block for a requested total (rounded up)."""
    if total < 1:
        raise ConfigError("trials must be >= 1")
    blocks = min(blocks, total)
    return -(-total // blocks)


def cross_term_decay(config: SystemConfig, m_values: Sequence[int], seed: int = 0, side="r") -> list[float]:
    """Monte Carlo ratio of the inter-user correction of ``zeta`` to ``E[h^H R^-1 h]`` for each antenna count."""
    from .beamforming import _quad

    side = Side(side)
    out = []
    for m in m_values:
        cfg = config.with_axis("m_ap", m)
        num, den = [], []
        for block in range(cfg.blocks):
            stats, real, rng = setup_block(cfg, seed, block)
            _, r, h_hat = _estimate(stats, cfg, cfg.powers, real.h, rng)
            hi, hj = h_hat[side], h_hat[side.other]
            gi, gj = r.solve(hi), r.solve(hj)
            c = cfg.powers[side.other] * cfg.eps_v
            num.extend(c * np.abs(_quad(hi, gj)) ** 2 / (1 + c * _quad(hj, gj).real))
            den.extend(_quad(hi, gi).real)
        out.append(math.fsum(num) / math.fsum(den))
    return out
