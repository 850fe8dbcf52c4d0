"""Monte Carlo Gaussian-dropout classifiers with uncertainty calibration.

Trains small dense classifiers with Gaussian dropout, quantifies
miscalibration of their predictive uncertainty (UCE, classwise UCE, ECE),
recalibrates them with temperature/vector/auxiliary logit scaling, and runs
rejection and out-of-distribution experiments on synthetic data.
"""

__version__ = "0.1.0"

from .archive import LogitArchive, read_archive, write_archive
from .errors import (
    ArchiveFormatError,
    FitFailureError,
    InvalidConfigError,
    InvalidInputError,
    TrainingFailureError,
    UncalError,
)
from .experiments import (
    OodCurve,
    PipelineConfig,
    RejectionCurve,
    SyntheticSpec,
    make_dataset,
    ood_mixing_curve,
    rejection_curve,
    run_pipeline,
)
from .mathops import RngStream, normalized_entropy, softmax, standard_normal
from .metrics import (
    BinnedReliability,
    EvalRecord,
    bin_index,
    classwise_ece,
    classwise_uce,
    ece,
    nll,
    records_from_archive,
    records_from_probs,
    reliability_data,
    uce,
)
from .network import (
    DenseLayer,
    GaussianDropoutClassifier,
    TrainConfig,
    bernoulli_dropout_forward,
    dump_archive,
    gaussian_dropout_forward,
    mc_forward,
    mc_predict,
    train,
)
from .scalers import AuxScaler, FitConfig, TemperatureScaler, VectorScaler

__all__ = [
    "ArchiveFormatError",
    "AuxScaler",
    "BinnedReliability",
    "DenseLayer",
    "EvalRecord",
    "FitConfig",
    "FitFailureError",
    "GaussianDropoutClassifier",
    "InvalidConfigError",
    "InvalidInputError",
    "LogitArchive",
    "OodCurve",
    "PipelineConfig",
    "RejectionCurve",
    "RngStream",
    "SyntheticSpec",
    "TemperatureScaler",
    "TrainConfig",
    "TrainingFailureError",
    "UncalError",
    "VectorScaler",
    "bernoulli_dropout_forward",
    "bin_index",
    "classwise_ece",
    "classwise_uce",
    "dump_archive",
    "ece",
    "gaussian_dropout_forward",
    "make_dataset",
    "mc_forward",
    "mc_predict",
    "nll",
    "normalized_entropy",
    "ood_mixing_curve",
    "read_archive",
    "records_from_archive",
    "records_from_probs",
    "rejection_curve",
    "reliability_data",
    "run_pipeline",
    "softmax",
    "standard_normal",
    "train",
    "uce",
    "write_archive",
]
