"""Emitter photodynamics: simulation, analysis and closed-loop checks."""

from ._photodyn import (
    ConfigError,
    FitFailed,
    InsufficientData,
    IoError,
    MissingInput,
    StageResult,
    __version__,
    analyze,
    closed_loop,
    mixture_pmf,
    report,
    sha256_hex,
    simulate,
    simulate_file,
    suite_names,
)
from .results import read_csv, read_json

__all__ = [
    "ConfigError",
    "FitFailed",
    "InsufficientData",
    "IoError",
    "MissingInput",
    "StageResult",
    "__version__",
    "analyze",
    "closed_loop",
    "mixture_pmf",
    "read_csv",
    "read_json",
    "report",
    "sha256_hex",
    "simulate",
    "simulate_file",
    "suite_names",
]
