"""Channel estimators: classic baselines, grid-prior MMSE, and the
trainable spectral-convolution estimator."""

from .base import BaseChannelEstimator, EstimatorContext
from .baselines import (
    GenieOmpEstimator,
    LeastSquaresEstimator,
    LmmseEstimator,
    OmpDictionary,
    SpectralMlEstimator,
    build_dictionary,
    genie_omp_estimate,
    lmmse_filter,
    lmmse_global,
    ls_estimate,
    ml_structured,
    omp,
)
from .cnn import (
    CnnChannelEstimator,
    CnnParams,
    TrainConfig,
    TrainedModel,
    TrainMeta,
    cnn_params_from_structured_bank,
    compute_chat,
    estimate,
    forward,
    init_params,
    load_params,
    loss_and_grad,
    save_params,
    train,
)
from .grid import (
    GriddedFilterBank,
    GriddedMmseEstimator,
    PriorGrid,
    StructuredBank,
    StructuredMmseEstimator,
    build_grid,
    circulant_grid,
    circulant_spectra,
    conditional_mmse_filter,
    gridded_estimate,
    structured_bank_from_spectra,
    structured_estimate,
    ula_angular_covariance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
