"""Collapse unravelings, Gaussian fields and regulated propagators."""

import json as _json

from ._core import (
    AmplificationPoint,
    BeablesError,
    DeltaMetricResult,
    NotPositiveSemidefiniteError,
    amplification_scan,
    bessel_k0,
    bessel_k1,
    cell_kernel,
    characteristic_function,
    delta_metric_mc,
    omega_from_quadrature,
    omega_infinity,
    sample_fields,
    trace_distance,
)
from ._core import run_experiment as _run_experiment

__version__ = "0.1.0"


def run_experiment(config, output_dir=None, threads=None):
    """Run a scenario. `config` is a dict or a JSON string; returns the report as a dict."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(_run_experiment(config, output_dir, threads))


__all__ = [
    "AmplificationPoint",
    "BeablesError",
    "DeltaMetricResult",
    "NotPositiveSemidefiniteError",
    "amplification_scan",
    "bessel_k0",
    "bessel_k1",
    "cell_kernel",
    "characteristic_function",
    "delta_metric_mc",
    "omega_from_quadrature",
    "omega_infinity",
    "run_experiment",
    "sample_fields",
    "trace_distance",
]
