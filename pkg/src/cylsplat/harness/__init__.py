"""Synthetic scenes, stand-in feature processors and the end-to-end driver."""

from .config import ConfigError, PipelineConfig
from .passthrough import PassthroughProcessors
from .pipeline import PipelineResult, StageError, run_pipeline, write_dump
from .processors import ContractError, FeatureProcessor, ReferenceProcessors
from .scene import (SyntheticScene, constant_sky, generate_scene, gradient_sky,
                    render_ground_truth)

__all__ = ["ConfigError", "PipelineConfig", "PassthroughProcessors", "PipelineResult",
           "StageError", "run_pipeline", "write_dump", "ContractError", "FeatureProcessor",
           "ReferenceProcessors", "SyntheticScene", "constant_sky", "generate_scene",
           "gradient_sky", "render_ground_truth"]
