"""Long-term hydrothermal generation scheduling with environmental outflow rules."""

from .io import load_rules, load_system, synthetic_scenarios
from .model import ConfigurationError, HydroPlant, SystemConfig, ThermalPlant
from .sddp import Problem, TrainingOptions, ValueFunction, simulate, train

__all__ = [
    "ConfigurationError",
    "HydroPlant",
    "Problem",
    "SystemConfig",
    "ThermalPlant",
    "TrainingOptions",
    "ValueFunction",
    "load_rules",
    "load_system",
    "simulate",
    "synthetic_scenarios",
    "train",
]

__version__ = "0.1.0"
