"""fdce: a simulation lab for FDD downlink MIMO channel estimation.

Generate geometry-shared uplink/downlink channel datasets, train a
low-complexity two-layer circular-convolution estimator on transposed
uplink channels, serialize its parameters, and benchmark it on downlink
channels against classic baselines.
"""

from .channels import PropagationScene, ScenarioConfig, sample_scene, synthesize_channel, ula_steering
from .datasets import (
    ChannelSample,
    Dataset,
    PairedDatasets,
    generate_gaussian_dataset,
    generate_paired_datasets,
    global_sample_cov,
    load_dataset,
    normalize_dataset,
    save_dataset,
)
from .linalg import Shape2D
from .pilots import Observation, PilotConfig, lift_pilot, observe, pilot_matrix, snr_to_sigma2
from .stats import BoxplotStats, boxplot_stats, empirical_cdf, nmse
from .estimators import (
    CnnChannelEstimator,
    EstimatorContext,
    GenieOmpEstimator,
    GriddedMmseEstimator,
    LeastSquaresEstimator,
    LmmseEstimator,
    SpectralMlEstimator,
    StructuredMmseEstimator,
    TrainConfig,
    TrainedModel,
    load_params,
    save_params,
    train,
)

__version__ = "0.1.0"
