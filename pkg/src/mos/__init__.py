"""Model order selection for antenna arrays: neural classifiers and AIC/MDL baselines."""

from mos.classical import EigenSpectrum, eigen_spectrum, information_criterion
from mos.features import (
    FeatureVector,
    covariance_features,
    sample_covariance,
    stack_real_imag,
)
from mos.network import MlpParams, forward, glorot_uniform_init, predict
from mos.signal import (
    Sample,
    ScenarioConfig,
    draw_balanced_dataset,
    draw_sample,
    steering_matrix,
    steering_vector,
    tridiagonal_calibration,
)
from mos.training import EvalReport, TrainConfig, evaluate, evaluate_classical, train_offline, train_online

__version__ = "0.1.0"

__all__ = [
    "EigenSpectrum",
    "EvalReport",
    "FeatureVector",
    "MlpParams",
    "Sample",
    "ScenarioConfig",
    "TrainConfig",
    "covariance_features",
    "draw_balanced_dataset",
    "draw_sample",
    "eigen_spectrum",
    "evaluate",
    "evaluate_classical",
    "forward",
    "glorot_uniform_init",
    "information_criterion",
    "predict",
    "sample_covariance",
    "stack_real_imag",
    "steering_matrix",
    "steering_vector",
    "train_offline",
    "train_online",
    "tridiagonal_calibration",
]
