import json
import os
import subprocess

import numpy as np
import pytest

tnas = pytest.importorskip("tangle_nas")

CLI = os.environ.get("TNAS_CLI", "tnas")


def test_supernet_surface():
    net = tnas.Supernet({"space": "toy_conv_macro"})
    assert net.mode == "WE"
    assert net.cardinality == 3 ** 8
    largest = net.largest()
    assert net.param_count(largest) == net.param_count()
    logits = net.forward_path(largest, np.zeros((2, 1, 8, 8)))
    assert logits.shape == (2, 4)
    ws = tnas.Supernet({"space": "toy_conv_macro", "mode": "WS"})
    assert ws.param_count() > net.param_count()


def test_samplers():
    w = tnas.sample([0.0, 1.0, 2.0], "gumbel_st", 1.0, 3)
    assert sorted(w) == [0.0, 0.0, 1.0]
    d = tnas.sample([0.5, -1.0], "dirichlet", seed=1)
    assert abs(sum(d) - 1.0) < 1e-12 and min(d) >= 0.0
    with pytest.raises(tnas.ConfigError):
        tnas.sample([0.0], "nope")


def test_cka():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 3))
    assert abs(tnas.linear_cka(x, 3.0 * x) - 1.0) < 1e-12
    with pytest.raises(tnas.DimensionError):
        tnas.linear_cka(x, x[:10])


def test_search_is_reproducible(tmp_path):
    cfg = {"optimizer": "tanglenas-gdas", "seed": 4, "bilevel": {"epochs": 1}}
    a = tnas.run_search(cfg, str(tmp_path / "a.jsonl"))
    b = tnas.run_search(cfg)
    assert a["arch"] == b["arch"] and a["alphas"] == b["alphas"]
    rows = tnas.read_results(str(tmp_path / "a.jsonl"))
    assert [r["kind"] for r in rows] == ["epoch", "final"]
    assert tnas.search_config(cfg)["bilevel"]["sampler"]["strategy"] == "gumbel_st"


def test_evolution_with_python_metric():
    target = tnas.Supernet({"space": "toy_conv_macro"}).largest()
    want = dict(p.split("=") for p in target.split(";"))

    def metric(arch):
        got = dict(p.split("=") for p in arch.split(";"))
        return float(sum(got[k] == v for k, v in want.items()))

    trace = tnas.evolutionary_search({"space": "toy_conv_macro"}, metric, generations=30,
                                     max_evaluations=300, seed=1)
    assert len(trace["evaluated"]) <= 300
    assert trace["best_so_far"] == sorted(trace["best_so_far"])


def run_cli(*args, **kw):
    return subprocess.run([CLI, *args], capture_output=True, text=True, **kw)


def test_cli_exit_codes(tmp_path):
    assert run_cli("search", "--optimizer", "bogus", "--out", str(tmp_path / "x.jsonl")).returncode == 2
    assert run_cli("search", "--space", "toy_conv_macro", "--channel-divisor", "16",
                   "--out", str(tmp_path / "y.jsonl")).returncode == 2
    assert run_cli("report", "--in", str(tmp_path / "missing.jsonl")).returncode == 2
    assert run_cli("search", "--no-such-flag").returncode == 2


def test_cli_rerun_from_manifest(tmp_path):
    first = tmp_path / "first.jsonl"
    again = tmp_path / "again.jsonl"
    r = run_cli("search", "--optimizer", "tanglenas-darts", "--epochs", "1", "--seed", "7", "--out", str(first))
    assert r.returncode == 0, r.stderr
    manifest = json.loads((tmp_path / "first.jsonl.manifest.json").read_text())
    assert manifest["config"]["seed"] == 7
    r = run_cli("search", "--manifest", str(tmp_path / "first.jsonl.manifest.json"), "--out", str(again))
    assert r.returncode == 0, r.stderr

    def stable(path):
        out = []
        for line in path.read_text().splitlines():
            row = json.loads(line)
            row.pop("wall_seconds")
            out.append(row)
        return out

    assert stable(first) == stable(again)
    assert run_cli("search", "--epochs", "1", "--out", str(first)).returncode != 0
