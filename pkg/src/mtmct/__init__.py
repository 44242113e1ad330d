"""Offline multi-camera vehicle tracking association engine."""
from .core import (BoundingBox, CapacityError, ConfigError, FrameObservation, GlobalTrack, InputError,
                   ModelError, MTMCTError, Rect, Tracklet, feature_distance, iou, overlap_ratio)
from .config import PipelineConfig, load_config
from .pipeline import run_tracking, train_link_model

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "CapacityError", "ConfigError", "FrameObservation", "GlobalTrack", "InputError",
    "ModelError", "MTMCTError", "PipelineConfig", "Rect", "Tracklet", "feature_distance", "iou",
    "load_config", "overlap_ratio", "run_tracking", "train_link_model",
]
