"""AMDNet23: fundus quality gating, CLAHE enhancement and a CNN-LSTM classifier."""

from .estimator import AMDNet23Classifier, FundusEnhancer, QualityGate
from .model import ModelSpec, ModelState, TrainConfig, build_model, shape_trace

__version__ = "0.1.0"

__all__ = [
    "AMDNet23Classifier",
    "FundusEnhancer",
    "ModelSpec",
    "ModelState",
    "QualityGate",
    "TrainConfig",
    "build_model",
    "shape_trace",
]
