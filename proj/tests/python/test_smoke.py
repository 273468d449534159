import math
import os
import tempfile

import numpy as np
import pytest

import beables

OUT = os.environ.get("BEABLES_OUT_DIR") or tempfile.mkdtemp(prefix="beables_py_")


def test_bessel_k0_small_argument():
    x = 1e-4
    assert beables.bessel_k0(x) == pytest.approx(-math.log(x / 2) - 0.5772156649015329, rel=1e-6)


def test_omega_infinity_matches_long_time_quadrature():
    inf = beables.omega_infinity(1.0, cutoff_mass=10.0)
    t = beables.omega_from_quadrature(1.0, 200.0, cutoff_mass=10.0)
    assert inf < 0
    assert t == pytest.approx(inf, rel=1e-2)


def test_trace_distance_of_orthogonal_pure_states():
    a = np.diag([1.0, 0.0]).astype(complex)
    b = np.diag([0.0, 1.0]).astype(complex)
    assert beables.trace_distance(a, b) == pytest.approx(1.0)


def test_sampled_covariance_matches_kernel():
    gamma = np.array([[1.0, 0.3j], [-0.3j, 0.5]])
    relation = np.array([[0.2, 0.1], [0.1, 0.1]], dtype=complex)
    x = beables.sample_fields(gamma, relation, seed=7, count=40000)
    assert x.shape == (40000, 2)
    emp = x.T @ x.conj() / len(x)
    assert np.max(np.abs(emp - gamma)) < 0.03
    assert np.max(np.abs(x.T @ x / len(x) - relation)) < 0.03


def test_sampler_is_deterministic():
    gamma = np.eye(3, dtype=complex)
    zero = np.zeros((3, 3), dtype=complex)
    a = beables.sample_fields(gamma, zero, seed=3, count=10)
    b = beables.sample_fields(gamma, zero, seed=3, count=10)
    assert np.array_equal(a, b)


def test_indefinite_pair_raises():
    gamma = np.array([[1.0, 2.0], [2.0, 1.0]], dtype=complex)
    with pytest.raises(beables.NotPositiveSemidefiniteError):
        beables.sample_fields(gamma, np.zeros((2, 2), dtype=complex), seed=1, count=1)


def test_delta_metric_at_zero_time():
    res = beables.delta_metric_mc(3.0, 0.0, samples=100)
    assert res.delta_mc == pytest.approx(0.5)
    assert res.delta_analytic == pytest.approx(0.5)


def test_amplification_ratio():
    scan = beables.amplification_scan([1, 2])
    assert scan[1].ratio == pytest.approx(2.0, rel=0.1)
    assert all(p.in_regime for p in scan)


def test_run_experiment_round_trip():
    cfg = {"schema_version": 1, "scenario": "csl_unraveling", "seed": 11, "params": {"samples": 200}}
    out = os.path.join(OUT, "csl_smoke")
    first = beables.run_experiment(cfg, output_dir=out)
    second = beables.run_experiment(cfg, output_dir=out, threads=2)
    assert first["scenario"] == "csl_unraveling"
    assert first["report_hash"] == second["report_hash"]
    assert os.path.exists(os.path.join(out, "report.json"))


def test_bad_config_raises():
    with pytest.raises(beables.BeablesError, match="seed"):
        beables.run_experiment({"schema_version": 1, "scenario": "born_rule"}, output_dir=OUT)
    with pytest.raises(beables.BeablesError):
        beables.run_experiment("{not json", output_dir=OUT)
