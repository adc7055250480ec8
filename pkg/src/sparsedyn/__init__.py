"""Discovery of sparse governing ODEs from noisy time series by jointly
training an implicit neural representation and a sparse coefficient matrix."""

from .dictionary import DictionarySpec, enumerate_features, eval_features
from .dynamics import Dataset, OdeSystem, SYSTEMS, generate_dataset, integrate_rk4_fixed
from .metrics import DiscoveryResult, coeff_error, format_equations, simulate_discovered
from .network import NormalizationRecord, SirenNetwork, init_siren, predict
from .regression import CoefficientMatrix, rk4_sindy_direct, stls_sindy, threshold
from .training import LossWeights, TrainSchedule, TrainingTrace, train_ineural

__all__ = [
    "DictionarySpec",
    "enumerate_features",
    "eval_features",
    "Dataset",
    "OdeSystem",
    "SYSTEMS",
    "generate_dataset",
    "integrate_rk4_fixed",
    "DiscoveryResult",
    "coeff_error",
    "format_equations",
    "simulate_discovered",
    "NormalizationRecord",
    "SirenNetwork",
    "init_siren",
    "predict",
    "CoefficientMatrix",
    "rk4_sindy_direct",
    "stls_sindy",
    "threshold",
    "LossWeights",
    "TrainSchedule",
    "TrainingTrace",
    "train_ineural",
]

__version__ = "0.1.0"
