import math
import os

import numpy as np
import pytest

import tdk


def test_bound_worked_value():
    assert tdk.confidence_bound(1.0, 0.2, alpha=10.0, beta=0.05) == pytest.approx(1 / (1 + math.exp(-1.5)), abs=1e-15)
    assert tdk.confidence_bound(0.5, 0.1, alpha=3.0, beta=0.05) == 0.5


def test_profile_worked_example():
    p = tdk.profile([0, 1, 1, 0, 1, 2])
    assert p["p1"] == 0.5
    assert p["p2"] == 1 / 3
    assert p["top"] == 1
    assert p["counts"] == {0: 2, 1: 3, 2: 1}


def test_clopper_pearson_zero_successes():
    low, high = tdk.clopper_pearson(0, 10)
    assert low == 0.0
    assert high == pytest.approx(1 - 0.025 ** 0.1, abs=1e-8)


def test_threshold_order_statistic():
    values = [(i + 1) / 1000 for i in range(100)]
    assert tdk.threshold_for_frr(values, 0.01) == 0.099


def test_dynamic_sigma_black_image_gets_max():
    assert tdk.dynamic_sigma(np.zeros((4, 4, 3)), sigma_max=0.8) == 0.8


def test_synthetic_shapes():
    images, labels = tdk.generate_synthetic(30, seed=3)
    assert images.shape == (30, 16, 16, 3)
    assert sorted(set(labels)) == list(range(10))
    assert images.min() >= 0.0 and images.max() <= 1.0


def test_bad_arguments_raise_value_error():
    with pytest.raises(ValueError):
        tdk.profile([])
    with pytest.raises(ValueError):
        tdk.dynamic_sigma(np.zeros((4, 4)))
    cfg = tdk.DetectorConfig()
    with pytest.raises(ValueError):
        cfg.distribution = "uniform"


def echo_fn(x):
    k = int(np.rint(x.flat[0] * 9))
    p = [0.0] * 10
    p[k] = 1.0
    return p


def test_callable_oracle_matches_builtin_echo():
    images, _ = tdk.generate_synthetic(20, seed=1)
    cfg = tdk.DetectorConfig()
    cfg.m = 16
    native = tdk.calibrate(tdk.EchoOracle(), images, cfg, frr=0.1, seed=5)
    wrapped = tdk.calibrate(tdk.CallableOracle(echo_fn, (16, 16, 3), 10, tag="echo"), images, cfg, frr=0.1, seed=5)
    assert wrapped.l_values == native.l_values
    assert wrapped.tau == native.tau


def test_calibrate_detect_round_trip(tmp_path):
    images, _ = tdk.generate_synthetic(40, seed=2)
    oracle = tdk.EchoOracle()
    cfg = tdk.DetectorConfig()
    cfg.m = 20
    cfg.top_k_fraction = 1.0
    record = tdk.calibrate(oracle, images, cfg, frr=0.05, seed=9)
    path = tmp_path / "calibration.json"
    record.save(path)
    loaded = tdk.CalibrationRecord.load(path)
    assert loaded == record
    assert loaded.detector.top_k_fraction == 1.0
    for i in (0, 7):
        v = tdk.detect(oracle, loaded, images[i], seed=9, index=i)
        assert v["L"] == record.l_values[i]
        assert v["trojan"] == (v["L"] > record.tau)
    with pytest.raises(tdk.FingerprintMismatch):
        tdk.detect(tdk.EchoOracle(classes=9), loaded, images[0])


def test_python_errors_surface_as_oracle_errors():
    def broken(x):
        raise RuntimeError("model exploded")

    oracle = tdk.CallableOracle(broken, (16, 16, 3), 10)
    images, _ = tdk.generate_synthetic(2, seed=1)
    with pytest.raises(tdk.OracleError, match="model exploded"):
        tdk.calibrate(oracle, images, frr=0.5)


def test_train_and_predict():
    images, labels = tdk.generate_synthetic(200, seed=4)
    model = tdk.train_mlp(images, labels, epochs=15, hidden=32, seed=1)
    preds = [int(np.argmax(model.predict(x))) for x in images]
    assert np.mean(np.array(preds) == np.array(labels)) > 0.9


@pytest.mark.skipif("TDK_ECHO_ORACLE" not in os.environ, reason="echo oracle binary not provided")
def test_external_oracle_matches_builtin_echo():
    images, _ = tdk.generate_synthetic(10, seed=6)
    cfg = tdk.DetectorConfig()
    cfg.m = 10
    ext = tdk.ExternalOracle([os.environ["TDK_ECHO_ORACLE"]])
    assert ext.fingerprint == tdk.EchoOracle().fingerprint
    a = tdk.calibrate(ext, images, cfg, frr=0.2, seed=3)
    b = tdk.calibrate(tdk.EchoOracle(), images, cfg, frr=0.2, seed=3)
    assert a == b
