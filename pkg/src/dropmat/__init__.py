"""Identify the ground material a phone fell onto from its accelerometer trace."""

from dropmat.features import FEATURE_NAMES, FeatureVector, PeakSet, detect_peaks, extract_features
from dropmat.mlp import MATERIALS, MlpModel, TrainConfig, evaluate, predict, train
from dropmat.segmentation import DropSegment, SegmentationConfig, cut
from dropmat.signal import AccelTrace, MagnitudeSeries, magnitude

__version__ = "0.1.0"

__all__ = [
    "AccelTrace",
    "DropSegment",
    "FEATURE_NAMES",
    "FeatureVector",
    "MATERIALS",
    "MagnitudeSeries",
    "MlpModel",
    "PeakSet",
    "SegmentationConfig",
    "TrainConfig",
    "cut",
    "detect_peaks",
    "evaluate",
    "extract_features",
    "magnitude",
    "predict",
    "train",
]
