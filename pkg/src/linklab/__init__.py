"""Link-level simulator for a two-user uplink assisted by an intelligent omni-surface.

Modules
-------
linalg       dense Hermitian solves, the matrix inversion lemma, Gaussian sampling
channel      geometry, steering vectors, channel statistics and draws
estimation   pilot model with hardware impairments and LMMSE estimation
beamforming  combiners, rates, surface phase design and rate bounds
engine       Monte Carlo sweeps, baselines and reports
"""

from .beamforming import (
    Combiner,
    InterferenceModel,
    RateReport,
    RVariant,
    ergodic_se_upper_bound,
    interference_matrix,
    loose_upper_bound,
    mmse_combiners,
    mr_zf_combiners,
    optimal_ios_phases,
    random_ios_phases,
    scaling_helpers,
    se_instantaneous,
    sinr,
)
from .channel import (
    AngleSet,
    ArrayGeometry,
    ChannelRealization,
    ChannelStatistics,
    IosGrid,
    IosPhases,
    LinkBudget,
    PerSide,
    Side,
    angles_from_scenario,
    ap_steering,
    build_statistics,
    channel_covariance,
    channel_mean,
    ios_steering,
    path_loss,
    sample_channels,
)
from .config import ConfigError, SystemConfig, load_config
from .engine import ExperimentPlan, SweepReport, no_ios_baseline, run_ergodic, run_nmse, ts_protocol_rate
from .estimation import (
    EstimatorModel,
    HardwareProfile,
    PilotBook,
    build_estimator,
    despread,
    lmmse_estimate,
    make_pilots,
    nmse_monte_carlo,
    nmse_theoretical,
    simulate_pilot_rx,
)
from .linalg import FactorizationError, db_to_linear, dbm_to_watts, herm_solve, sample_cn, woodbury_inverse
from .report import emit_report

__version__ = "0.1.0"
