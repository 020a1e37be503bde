"""Spot volatility from order prices with one-sided microstructure noise."""

from .blocks import BlockPartition, LocalMinima, estimate_noise_level, local_minima, partition
from .estimators import (
    ASYMPTOTIC_VARIANCE,
    HALF_NORMAL_FACTOR,
    QUARTICITY_FACTOR,
    EstimatorConfig,
    SpotEstimate,
    VolatilityCurve,
    confidence_interval,
    spot_estimate,
    spot_quarticity,
    spot_vol_centered,
    spot_vol_post,
    spot_vol_pre,
    vol_jump_statistic,
    volatility_curve,
)
from .market import (
    JumpConfig,
    NoiseConfig,
    ObservationSeries,
    PathBundle,
    SvModelConfig,
    add_jumps,
    simulate_path,
    synthesize_observations,
)
from .psi import (
    PsiConfig,
    PsiTable,
    build_psi_table,
    estimate_psi_point,
    fit_slope,
    invert_psi,
    sample_min_bruteforce,
    sample_min_dp,
)

__version__ = "0.1.0"
