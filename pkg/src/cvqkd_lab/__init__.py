"""CV-QKD key rates, noise optimization and LO-manipulation analysis."""

from .attack import AttackScenario, RateGap, constant_total_noise_scenario, rate_gap
from .kernels import BACKEND
from .keyrate import holevo_bound, key_rate, mutual_information, noisy_homodyne_key_rate
from .model import (
    ChannelModel,
    DetectorModel,
    Heterodyne,
    KeyRateBreakdown,
    NoiseBudget,
    NoisyHomodyne,
    PerfectHomodyne,
    ProtocolParams,
    TwoModeCovariance,
    UnphysicalStateError,
    covariance_from_link,
    db_to_transmission,
    g_entropy,
    noise_budget,
    symplectic_pair,
)
from .optimizer import (
    BracketError,
    FrontierPoint,
    GainPlan,
    gain_for_electronic_noise,
    gain_for_target_noise,
    optimal_added_noise,
    tolerable_excess_noise,
)

__version__ = "0.1.0"
