import json
import os
import signal
import subprocess
import time
import urllib.error
import urllib.request
from pathlib import Path

import pytest

CLI = os.environ.get("RLAD_CLI", "rlad")
REPO = Path(os.environ.get("RLAD_REPO", Path(__file__).resolve().parents[2]))


def rlad(*args, check=True):
    return subprocess.run([CLI, "--log-level", "warn", *map(str, args)], capture_output=True, text=True, check=check)


def tiny_config(tmp_path, **extra):
    cfg = {
        "dataset": {"kind": "synthetic", "T": 300, "d": 1, "n_anomalies": 6, "seed": 5},
        "n_steps": 10,
        "episodes": 2,
        "seed": 3,
        "agent": {"hidden": 6, "batch_size": 16, "warmup_steps": 50, "eps_decay_steps": 300, "target_sync_every": 50},
        "vae": {"hidden": [8], "latent": 2, "epochs": 2, "batch_size": 32},
        "active": {"n_al": 4, "k_lp": 5, "theta": 0.8},
        "output_dir": str(tmp_path / "run"),
    }
    cfg.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def get_json(url):
    with urllib.request.urlopen(url, timeout=5) as r:
        return r.status, json.loads(r.read())


def post_json(url, body):
    req = urllib.request.Request(url, data=json.dumps(body).encode(), headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=5) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def test_synth_writes_a_labeled_csv(tmp_path):
    out = tmp_path / "s.csv"
    rlad("synth", "--T", 200, "--n-anomalies", 4, "--seed", 2, "--out", out)
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 201
    assert sum(int(r.split(",")[-1]) for r in rows[1:]) == 4

    again = tmp_path / "t.csv"
    rlad("synth", "--T", 200, "--n-anomalies", 4, "--seed", 2, "--out", again)
    assert again.read_bytes() == out.read_bytes()


def test_train_then_eval(tmp_path):
    cfg = tiny_config(tmp_path)
    res = rlad("train", "--config", cfg)
    metrics = json.loads(res.stdout)
    run = tmp_path / "run"
    for name in ["config.json", "vae.ckpt", "qnet.ckpt", "run.log.jsonl", "labels.jsonl", "metrics.json"]:
        assert (run / name).exists(), name
    assert 0.0 <= metrics["test_f1"] <= 1.0
    assert len((run / "run.log.jsonl").read_text().strip().splitlines()) == 2

    ev = rlad("eval", "--config", cfg, "--checkpoint", run / "qnet.ckpt", "--out", tmp_path / "ev",
              "--labels", run / "labels.jsonl")
    again = json.loads(ev.stdout)
    for k in ["test_tp", "test_fp", "test_tn", "test_fn", "test_f1"]:
        assert again[k] == metrics[k], k


def test_errors_exit_nonzero(tmp_path):
    cfg = tiny_config(tmp_path)
    res = rlad("eval", "--config", cfg, "--checkpoint", tmp_path / "none.ckpt", "--out", tmp_path / "ev", check=False)
    assert res.returncode != 0
    assert "error" in res.stderr

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"episodes": "many"}))
    assert rlad("train", "--config", bad, check=False).returncode != 0


@pytest.fixture
def server(tmp_path):
    (tmp_path / "ui").mkdir()
    (tmp_path / "ui" / "index.html").write_text("<html>annotator</html>")
    cfg = tiny_config(tmp_path)
    proc = subprocess.Popen([CLI, "--log-level", "warn", "serve", "--config", str(cfg), "--port", "0",
                             "--static-dir", str(tmp_path / "ui")], stdout=subprocess.PIPE, text=True)
    line = proc.stdout.readline().strip()
    assert line.startswith("serving on http://"), line
    yield line.split()[-1]
    proc.send_signal(signal.SIGTERM)
    assert proc.wait(timeout=10) == 0


def test_serve_endpoints(server):
    status, body = get_json(server + "/api/status")
    assert status == 200
    assert body["pending"] == 0
    assert get_json(server + "/api/queries") == (200, [])

    status, body = get_json(server + "/api/series/synth-5?from=10&to=20")
    assert status == 200
    assert len(body["values"]) == 10

    assert post_json(server + "/api/labels", {"series": "synth-5", "t": 200, "label": 1})[0] == 409
    assert post_json(server + "/api/labels", {"series": "synth-5", "label": 1})[0] == 400

    with urllib.request.urlopen(server + "/", timeout=5) as r:
        assert r.read() == b"<html>annotator</html>"
