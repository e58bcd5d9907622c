"""Spatially coupled pooling designs and threshold decoding for sublinear pooled data."""

from .decoder import DecodeReport, Thresholds, classify, decode, thresholds
from .design import (
    DerivedParams,
    DesignParams,
    Overrides,
    PoolingDesign,
    build_design,
    derive_params,
    feasibility_report,
)
from .signal import Signal, measure, sample_signal

__all__ = [
    "DecodeReport",
    "DerivedParams",
    "DesignParams",
    "Overrides",
    "PoolingDesign",
    "Signal",
    "Thresholds",
    "build_design",
    "classify",
    "decode",
    "derive_params",
    "feasibility_report",
    "measure",
    "sample_signal",
    "thresholds",
]
