"""Limited-feedback MIMO-OFDM broadcast downlink simulator.

Monte Carlo achievable rates under zero-forcing beamforming, and the
matching closed-form rate-gap bounds, for three CSI feedback families:
analog pilots with MMSE interpolation, per-cluster random vector
quantization, and time-domain / Karhunen-Loeve coefficient quantization.
"""

from .channel_model import (
    ChannelRealization,
    ChannelStats,
    RaisedCosinePulse,
    TabulatedPulse,
    TriangularPulse,
    build_dip_stats,
    build_physical_stats,
    freq_correlation,
    freq_covariance,
    preset_stats,
    sample_channel,
)
from .analog_feedback import (
    AnalogFeedbackConfig,
    MmseInterpolator,
    build_interpolator,
    estimate,
    mmse_error_trace_reduced,
    simulate_feedback,
)
from .quantizers import (
    BitAllocation,
    ResourceCapError,
    RvqCodebook,
    design_suq,
    gaussian_test_channel,
    greedy_bit_alloc,
    kl_transform,
    quantize_channel_tdq,
    rvq_build,
    rvq_quantize,
    rwf_by_distortion,
    rwf_by_rate,
    suq_alloc_from_rwf,
    suq_distortion,
    suq_quantize,
    suq_step_asymptotic,
)
from .zfbf_rates import (
    BeamformerSet,
    RateEstimate,
    mc_rates,
    perfect_csit_rate,
    zf_beamformer,
)
from .analytic_bounds import (
    bound_analog,
    bound_analog_highsnr,
    bound_rvq,
    bound_rvq_budget,
    bound_suq,
    bound_tdq_highsnr,
    bound_tdq_limit,
    budget_to_bits,
    sum_rate_lower,
)
from .rng import substream
from .harness import (
    ConfigError,
    ExperimentConfig,
    SweepRecord,
    emit_csv,
    load_config,
    parse_csv,
    run_sweep,
)

__version__ = "0.1.0"
