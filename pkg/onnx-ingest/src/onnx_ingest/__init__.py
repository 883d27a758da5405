"""ONNX -> IR-JSON converter for the multi-PU accelerator toolchain."""

from .convert import (
    DEFAULT_SCALE,
    ConversionReport,
    SchemaEmitError,
    UnreadableModel,
    convert,
    convert_bytes,
    pow2_exponent,
)

__all__ = [
    "DEFAULT_SCALE", "ConversionReport", "SchemaEmitError",
    "UnreadableModel", "convert", "convert_bytes", "pow2_exponent",
]
