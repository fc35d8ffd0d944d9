"""Weakly supervised temporal action localization with sparse temporal pooling."""

from .data import DatasetManifest, SynthConfig, VideoRecord, load_manifest, synth_dataset
from .estimators import STPNClassifier, TemporalLocalizer
from .evaluation import EvalReport, average_precision, evaluate, iou
from .localize import Detection, LocalizeConfig, localize_video
from .model import ModelParams, forward, init_params
from .train import Hyperparams, train

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest", "SynthConfig", "VideoRecord", "load_manifest", "synth_dataset",
    "STPNClassifier", "TemporalLocalizer", "EvalReport", "average_precision", "evaluate",
    "iou", "Detection", "LocalizeConfig", "localize_video", "ModelParams", "forward",
    "init_params", "Hyperparams", "train",
]
