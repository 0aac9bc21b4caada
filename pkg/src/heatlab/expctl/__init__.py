"""Experiment controller: configuration, presets and the run pipeline."""
from heatlab.expctl.config import ConfigError, Diagnostic, RunConfig, validate
from heatlab.expctl.presets import list_presets, preset, preset_text
from heatlab.expctl.runner import RunResult, StageError, ValidationError, run

__all__ = ["ConfigError", "Diagnostic", "RunConfig", "RunResult", "StageError", "ValidationError",
           "list_presets", "preset", "preset_text", "run", "validate"]
