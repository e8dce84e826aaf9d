"""Gibbs-type Indian buffet processes: exact and Monte Carlo weights,
partition and feature-allocation simulation, stick-breaking constructions,
power-law diagnostics, and black-box posterior inference."""

from .gibbs_weights import (
    GibbsModel,
    McConfig,
    McDegeneracyError,
    NggWeightSampler,
    NormalizationError,
    PrimitiveCache,
    WeightTable,
    block_count_distribution,
    build_primitive_cache,
    build_weight_table,
    calibrate,
    expected_blocks,
    load_weight_table,
    log_primitive,
    ngg_weights_smalln,
    persistence_probability,
    primitive,
    py_primitive_closed,
    save_weight_table,
    weight_table_from_sampler,
)
from .ibp import (
    FeatureAllocation,
    expected_features,
    feature_statistics,
    log_joint,
    powerlaw_constant,
    sample_feature_counts,
    simulate_ibp,
)
from .inference import (
    ChainConfig,
    LatentFactorState,
    Priors,
    SampleArchive,
    geweke_check,
    gibbs_sweep,
    initial_state,
    log_likelihood,
    run_chain,
    slice_sample,
    synthesize_data,
)
from .partition import (
    PartitionState,
    log_eppf,
    sample_block_counts,
    sample_partition,
)
from .special_functions import (
    build_gfc_table,
    gfc_bruteforce,
    log_rising_factorial,
    log_upper_incomplete_gamma,
    positive_stable_density,
)
from .stable_sampling import (
    TiltedStableSpec,
    sample_positive_stable,
    sample_tilted_stable,
)
from .stick_breaking import (
    construct_truncated,
    draw_bernoulli,
    sample_sticks,
    sample_truncated_feature_counts,
    structural_density,
    suggest_rounds,
    superposition_intensity,
)

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "FeatureAllocation",
    "GibbsModel",
    "LatentFactorState",
    "McConfig",
    "McDegeneracyError",
    "NggWeightSampler",
    "NormalizationError",
    "PartitionState",
    "PrimitiveCache",
    "Priors",
    "SampleArchive",
    "TiltedStableSpec",
    "WeightTable",
    "block_count_distribution",
    "build_gfc_table",
    "build_primitive_cache",
    "build_weight_table",
    "calibrate",
    "construct_truncated",
    "draw_bernoulli",
    "expected_blocks",
    "expected_features",
    "feature_statistics",
    "geweke_check",
    "gfc_bruteforce",
    "gibbs_sweep",
    "initial_state",
    "load_weight_table",
    "log_eppf",
    "log_joint",
    "log_likelihood",
    "log_primitive",
    "log_rising_factorial",
    "log_upper_incomplete_gamma",
    "ngg_weights_smalln",
    "persistence_probability",
    "positive_stable_density",
    "powerlaw_constant",
    "primitive",
    "py_primitive_closed",
    "run_chain",
    "sample_block_counts",
    "sample_feature_counts",
    "sample_partition",
    "sample_positive_stable",
    "sample_sticks",
    "sample_tilted_stable",
    "sample_truncated_feature_counts",
    "save_weight_table",
    "simulate_ibp",
    "slice_sample",
    "structural_density",
    "suggest_rounds",
    "superposition_intensity",
    "synthesize_data",
    "weight_table_from_sampler",
]
