"""Deterministic latency simulator for LLM inference on a heterogeneous PIM accelerator."""

import json

from _hpimsim import (
    CapacityError,
    ConfigError,
    IoError,
    derived_metrics,
    kv_cache_bytes,
    model_presets,
    model_weight_bytes,
    run_report_json,
    sweep_csv,
    validate_text,
)

__all__ = [
    "CapacityError",
    "ConfigError",
    "IoError",
    "derived_metrics",
    "kv_cache_bytes",
    "model_presets",
    "model_weight_bytes",
    "run",
    "run_report_json",
    "sweep_csv",
    "validate_text",
]


def run(model, hw="hpim-default", len_in=1, len_out=0, baseline="a100"):
    """Simulate one request and return the report as a dict."""
    return json.loads(run_report_json(model, hw, len_in, len_out, baseline))
