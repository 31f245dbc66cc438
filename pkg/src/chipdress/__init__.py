"""Microwave dressed-state potentials on an atom chip and two-component BEC interferometry (87Rb)."""

from .core import (CONSTANTS, ConfigError, ExperimentConfig, Grid3, PhysicalConstants,
                   load_config, validate)

__version__ = "0.1.0"

__all__ = ["CONSTANTS", "ConfigError", "ExperimentConfig", "Grid3", "PhysicalConstants",
           "load_config", "validate", "__version__"]
