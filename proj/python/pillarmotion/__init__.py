"""Pillar motion estimation by direct optimization of a BEV motion field."""

from ._core import (
    ConfigError,
    EmptyInputError,
    GridSpec,
    MotionField,
    NumericalError,
    ParseError,
    Scene,
    centered_grid,
    estimate,
    estimate_clouds,
    evaluate,
    generate,
    read_field,
    static_probability,
    write_bundle,
    write_field,
)

__all__ = [
    "ConfigError",
    "EmptyInputError",
    "GridSpec",
    "MotionField",
    "NumericalError",
    "ParseError",
    "Scene",
    "centered_grid",
    "estimate",
    "estimate_clouds",
    "evaluate",
    "generate",
    "read_field",
    "static_probability",
    "write_bundle",
    "write_field",
]
