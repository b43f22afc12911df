from .config import ExperimentConfig, ConfigError, preset, PRESETS
from .runner import run, resume, execute, execute_resume

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "execute", "execute_resume", "preset", "resume", "run"]
