import json
import math

import numpy as np
import pytest

rlad = pytest.importorskip("rlad")


def test_reward_table_and_shaping():
    assert [rlad.reward_r1(a, y) for a, y in [(1, 1), (0, 0), (1, 0), (0, 1)]] == [5.0, 1.0, -1.0, -5.0]
    assert rlad.shaped_reward(1.0, 0.5, 0.8, 0.99) == pytest.approx(1.292)


def test_heuristic_and_severity():
    assert rlad.heuristic_potential(np.zeros((8, 1))) == 0.0
    plateau = np.array([[0, 0, 0, 5, 5, 5, 5, 5]], dtype=float).T
    assert abs(rlad.heuristic_potential(plateau) - 0.75) <= 0.05
    assert rlad.parse_severity('{"severity": 0.3}') == 0.3
    assert rlad.parse_severity("nonsense") == 0.5


def test_lambda_and_metrics():
    assert rlad.update_lambda(1.0, 0.01, 100.0, 50.0) == pytest.approx(1.5)
    assert rlad.update_lambda(1.0, 1.0, 100.0, 0.0) == 2.0
    f1 = rlad.f1_from(0.6051, 0.9565)
    assert abs(f1 - 0.7413) <= 5e-4
    assert rlad.confusion([1, 0, 1, 0], [1, 1, 0, 0]) == {"tp": 1, "fp": 1, "tn": 1, "fn": 1}
    assert rlad.margin(0.2, 0.5) == pytest.approx(0.3)


def test_propagation_matches_a_direct_solve():
    rng = np.random.default_rng(4)
    labeled = np.vstack([rng.normal(0, 1, (3, 2)), rng.normal(3, 1, (3, 2))])
    labels = [0, 0, 0, 1, 1, 1]
    unl = rng.normal(1.5, 1.5, (8, 2))
    sigma = 1.2
    F = rlad.propagate_probabilities(labeled, labels, unl, sigma, 5000)
    pts = np.vstack([labeled, unl])
    W = np.exp(-((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1) / (2 * sigma**2))
    L = len(labels)
    Wuu, Wul = W[L:, L:], W[L:, :L]
    A = np.diag(W[L:].sum(1)) - Wuu
    p1 = np.linalg.solve(A, Wul @ np.array(labels, dtype=float))
    assert np.max(np.abs(F[L:, 1] - p1)) <= 1e-8
    with pytest.raises(rlad.InvalidSigma):
        rlad.propagate_probabilities(labeled, labels, unl, 0.0)


def test_synth_series():
    s = rlad.synth_spike_series(300, 1, 6, 2)
    assert len(s) == 300
    assert sum(s.labels) == 6
    assert s.values.shape == (300, 1)
    again = rlad.synth_spike_series(300, 1, 6, 2)
    assert np.array_equal(s.values, again.values)


def test_config_errors():
    assert rlad.validate_config({"episodes": 3})["episodes"] == 3
    with pytest.raises(rlad.ConfigError):
        rlad.validate_config({"episodes": "many"})
    with pytest.raises(rlad.MissingFile):
        rlad.validate_config("/nonexistent/config.json")


def test_train_and_evaluate(tmp_path):
    cfg = {
        "dataset": {"kind": "synthetic", "T": 300, "d": 1, "n_anomalies": 6, "seed": 5},
        "n_steps": 10,
        "episodes": 2,
        "seed": 3,
        "agent": {"hidden": 6, "batch_size": 16, "warmup_steps": 50, "eps_decay_steps": 300},
        "vae": {"hidden": [8], "latent": 2, "epochs": 2, "batch_size": 32},
        "active": {"n_al": 4, "k_lp": 5, "theta": 0.8},
    }
    run = tmp_path / "run"
    metrics = rlad.train(cfg, str(run))
    assert 0.0 <= metrics["test_f1"] <= 1.0
    assert json.loads((run / "metrics.json").read_text())["test_f1"] == metrics["test_f1"]
    ev = rlad.evaluate(cfg, str(run / "qnet.ckpt"), str(tmp_path / "ev"), str(run / "labels.jsonl"))
    assert ev["test_f1"] == metrics["test_f1"]
    with pytest.raises(rlad.MissingFile):
        rlad.evaluate(cfg, str(tmp_path / "none.ckpt"), str(tmp_path / "ev"))
    assert not math.isnan(metrics["test_f1"])
