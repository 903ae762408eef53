"""Test-set sizing, dependency-tree counts and guarantee simulation."""

from ._core import (
    MeterError,
    band_for,
    count_incremental,
    count_regular,
    enumerate,
    plan,
    replay,
    simulate,
    size_independent,
    size_resampling,
    size_single,
)

__all__ = [
    "MeterError",
    "band_for",
    "count_incremental",
    "count_regular",
    "enumerate",
    "plan",
    "replay",
    "simulate",
    "size_independent",
    "size_resampling",
    "size_single",
]
