"""Oriented object detection toolkit: rotated-box geometry, oriented
proposals with rotation pooling, an image-pyramid branch fused into a toy
single-shot backbone, DOTA-style data handling and mAP evaluation."""
from .errors import ConfigError, ContractViolation, DataError, ParseError
from .geometry import HorizontalBox, RotatedBox, SubGrid, iou_rotated
from .pipeline import PipelineConfig, build_model, load_config, run_pipeline

__version__ = "0.1.0"
