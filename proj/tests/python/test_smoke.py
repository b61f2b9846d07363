import math

import pytest

import bethe


def test_normal_kernels():
    assert bethe.ndtr(0.0) == pytest.approx(0.5, abs=1e-15)
    assert bethe.log_ndtr(0.0) == pytest.approx(-math.log(2.0), rel=1e-14)
    assert bethe.mills_ratio(0.0) == pytest.approx(0.7978845608028654, rel=1e-13)
    assert bethe.ndtri(0.975) == pytest.approx(1.959963984540054, rel=1e-12)
    # deep tail stays finite and accurate
    assert bethe.log_ndtr(-30.0) == pytest.approx(-454.3212439563432, rel=1e-12)
    assert bethe.probit_gauss_conv(1.0, 0.0, 2.3, 1.0) == pytest.approx(0.5)
    assert bethe.gauss_conv_nll(1.0, 1.0, 1.0) == pytest.approx(0.9189385332046727)


def test_generators_and_split():
    x, y = bethe.two_moons(n=200, noise=0.1, seed=5)
    assert x.shape == (200, 2)
    assert y.shape == (200,)
    assert sum(y) == 100  # balanced classes

    x2, y2 = bethe.two_moons(n=200, noise=0.1, seed=5)
    assert (x == x2).all() and (y == y2).all()

    train, val, test = bethe.split_indices(100, seed=7)
    assert len(train) == 60 and len(val) == 20 and len(test) == 20
    assert sorted(list(train) + list(val) + list(test)) == list(range(100))


def test_benchmark_regression_deterministic():
    x, y = bethe.linear_gaussian(n=300, d=4, alpha=1.0, sigma=0.5, seed=9)
    rec = bethe.benchmark(x, y, task="regression", method="regression v2 eb 0l", seed=5)
    assert rec["ok"]
    assert math.isfinite(rec["nll"])
    assert math.isfinite(rec["rmse"])
    assert rec["alpha"] > 0

    rec2 = bethe.benchmark(x, y, task="regression", method="regression v2 eb 0l", seed=5)
    assert rec2["nll"] == rec["nll"]
    assert rec2["steps"] == rec["steps"]


def test_benchmark_classification():
    x, y = bethe.probit_linear(n=400, d=4, alpha=1.0, c=1.0, seed=11)
    rec = bethe.benchmark(x, y, task="classification", method="binary v3 eb 0l", seed=6)
    assert rec["ok"]
    assert 0.0 <= rec["acc"] <= 1.0
    assert rec["acc"] > 0.6
    assert rec["nll"] < math.log(2.0)


def test_metrics():
    p = bethe.paired_t_test([1.1, 0.9, 1.3, 0.7, 1.0], [0.0] * 5)
    assert p == pytest.approx(0.000562003622715991, rel=1e-9)

    probs = [[0.95, 0.05], [0.85, 0.15], [0.65, 0.35], [0.65, 0.35]]
    assert bethe.expected_calibration_error(probs, [0, 1, 0, 1]) == pytest.approx(0.3)


def test_verify_suite_passes():
    assert bethe.verify() == 0
