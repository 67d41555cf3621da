"""Set-membership channel estimation for multi-hop amplify-and-forward
sensor networks: SM-NLMS and BEACON estimators with an adaptive error bound,
steady-state analysis, and a Monte Carlo experiment harness."""

__version__ = "0.1.0"

from .numerics import (
    ParameterError,
    RngStream,
    SingularMatrixError,
    chi_square_cdf,
    complex_gaussian_vector,
    frobenius_norm,
    invert_small,
    lower_incomplete_gamma,
)
from .fading import FadingProcess, FadingSpec, awgn, clarke_process, draw_block_fading
from .wsn import (
    ChannelRealization,
    Packet,
    Topology,
    TopologyError,
    amplification_matrix,
    assemble_stacked,
    draw_channels,
    make_packet,
    propagate_phase,
    transmit,
)
from .estimators import (
    BoundController,
    EstimatorState,
    RankDeficiencyError,
    StateCorruptionError,
    StepReport,
    beacon_step,
    bound_update,
    ls_batch,
    mmse_batch,
    nlms_step,
    rls_step,
    sm_nlms_step,
)
from .detection import (
    DetectorConfig,
    decision_directed_feed,
    lmmse_detect,
    qpsk_demod,
    qpsk_mod,
    qpsk_slice,
)
from .analysis import (
    ComplexityCount,
    ConditionalMoments,
    DegenerateRegimeError,
    InsufficientDataError,
    collect_moments,
    complexity_per_update,
    excess_mse_steady,
    excess_mse_recursion_step,
    p_update_analytical,
    sigma_inflation_for_smnlms,
)
from .experiments import (
    EstimatorSpec,
    RunMetrics,
    Scenario,
    run_analysis_validation,
    run_ber,
    run_complexity_table,
    run_learning_curve,
    run_mse_vs_snr,
    save_metrics,
)
