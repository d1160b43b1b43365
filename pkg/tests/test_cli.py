import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from quadtilt.cli import main, read_samples, write_samples

REPO = Path(__file__).resolve().parents[1]
FOUR = {
    "kind": "finite_atoms",
    "atoms": [
        {"location": [1.0, 0.0], "weight": 0.1},
        {"location": [0.0, 0.8], "weight": 0.2},
        {"location": [-0.6, -0.6], "weight": 0.3},
        {"location": [0.3, -0.9], "weight": 0.4},
    ],
}


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_cfg(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def files_under(root):
    return sorted(str(p.relative_to(root)) for p in Path(root).rglob("*"))


def test_zero_tilt_matches_base_run(work):
    cfg = write_cfg(work / "c.json", {"base": FOUR, "epsilon": 0.2, "num_samples": 50})
    assert main(["--seed", "3", "--out-dir", "base", "--config", cfg, "sample-base"]) == 0
    assert main(["--seed", "3", "--out-dir", "tilt", "--config", cfg, "sample-linear-tilt", "--v", "0,0"]) == 0
    assert (work / "base/samples.csv").read_bytes() == (work / "tilt/samples.csv").read_bytes()


def test_manifest_replay_is_bitwise(work):
    cfg = write_cfg(work / "c.json", {"base": FOUR, "v": [1.0, -2.0], "epsilon": 0.2, "num_samples": 40})
    assert main(["--seed", "11", "--out-dir", "a", "--config", cfg, "sample-linear-tilt"]) == 0
    assert main(["--out-dir", "b", "--config", "a/manifest.json", "run"]) == 0
    assert (work / "a/samples.csv").read_bytes() == (work / "b/samples.csv").read_bytes()
    manifest = json.loads((work / "a/manifest.json").read_text())
    assert manifest["command"] == "sample-linear-tilt" and manifest["seed"] == 11
    assert set(manifest["schedule"]) == {"num_steps", "sigma_min", "sigma_max"}
    assert manifest["budget"]["max_steps"] == 20000


def test_schedule_flag_overrides(work):
    cfg = write_cfg(work / "c.json", {"base": FOUR, "epsilon": 0.2, "num_samples": 5})
    assert main(["--out-dir", "o", "--config", cfg, "sample-base", "--num-steps", "7", "--sigma-min", "0.05"]) == 0
    manifest = json.loads((work / "o/manifest.json").read_text())
    assert manifest["schedule"]["num_steps"] == 7 and manifest["schedule"]["sigma_min"] == 0.05


def test_samples_csv_format(work):
    x = np.array([[0.1, -1 / 3], [1e-300, 2.0]])
    write_samples(work / "s.csv", x)
    lines = (work / "s.csv").read_text().splitlines()
    assert lines[0] == "index,x_1,x_2"
    assert lines[1] == "0,0.1,-0.3333333333333333"
    np.testing.assert_array_equal(read_samples(work / "s.csv"), x)


def test_shipped_estimate_config(work):
    assert main(["--out-dir", "z", "--config", str(REPO / "configs/hypercube_d2_estimate_z.json"), "run"]) == 0
    rec = json.loads((work / "z/metrics.json").read_text())
    assert 1.125 <= math.exp(rec["log_value"]) <= 1.375
    assert {"log_value", "N", "M", "epsilon", "delta", "budget_limited"} <= set(rec)


def test_verify_same_csv(work):
    write_samples(work / "s.csv", np.random.default_rng(0).standard_normal((20, 2)))
    assert main(["--out-dir", "v", "verify", "s.csv", "s.csv"]) == 0
    rec = json.loads((work / "v/metrics.json").read_text())
    assert rec["records"][0] == {"metric": "w2", "value": 0.0, "floor": 0.0, "sliced": False, "tolerance": 0.0, "pass": True}


def test_verify_bases(work):
    (work / "a.json").write_text(json.dumps(FOUR))
    other = json.loads(json.dumps(FOUR))
    other["atoms"][0]["weight"], other["atoms"][1]["weight"] = 0.2, 0.1
    (work / "b.json").write_text(json.dumps(other))
    assert main(["--out-dir", "v", "verify", "a.json", "b.json", "--tolerance", "0.01"]) == 0
    recs = {r["metric"]: r for r in json.loads((work / "v/metrics.json").read_text())["records"]}
    assert recs["tv"]["value"] == pytest.approx(0.1)
    assert not recs["tv"]["pass"]


@pytest.mark.parametrize(
    "args",
    [
        ["sample-linear-tilt", "--v", "1,2,3"],
        ["sample-base", "--epsilon", "1.5"],
        ["estimate-z", "--v", "1,0", "--delta", "0"],
        ["sample-base", "--num-samples", "0"],
    ],
)
def test_validation_errors_exit_2(work, args, capsys):
    cfg = write_cfg(work / "c.json", {"base": FOUR, "num_samples": 4})
    assert main(["--out-dir", "o", "--config", cfg, *args]) == 2
    err = capsys.readouterr().err
    assert any(name in err for name in ("v:", "epsilon", "delta", "num_samples"))


def test_missing_file_exit_2(work, capsys):
    assert main(["--out-dir", "o", "sample-base", "--base-file", "nope.json"]) == 2
    assert "base_file" in capsys.readouterr().err


def test_bad_seed_exit_2(work):
    cfg = write_cfg(work / "c.json", {"base": FOUR, "seed": -1})
    assert main(["--out-dir", "o", "--config", cfg, "sample-base"]) == 2


def test_grid_cap_exit_3(work, capsys):
    (work / "L.txt").write_text("1.3 -0.9\n")
    cfg = write_cfg(work / "c.json", {"base": FOUR, "num_samples": 2})
    assert main(["--out-dir", "o", "--config", cfg, "--cap-grid", "50", "sample-psd-tilt", "--L-file", "L.txt"]) == 3
    assert "gamma" in capsys.readouterr().err


def test_sample_cap_exit_3(work):
    cfg = write_cfg(work / "c.json", {"base": FOUR, "num_samples": 100})
    assert main(["--out-dir", "o", "--config", cfg, "--cap-samples", "10", "sample-base"]) == 3


def test_psd_command_emits_diagnostics(work):
    (work / "L.txt").write_text("# factor\n0.5 -0.3\n")
    cfg = write_cfg(
        work / "c.json",
        {"base": FOUR, "eps_final": 0.45, "num_samples": 8, "budget": {"max_draws": 4, "estimation_steps": 5, "max_steps": 50}},
    )
    assert main(["--out-dir", "p", "--config", cfg, "sample-psd-tilt", "--L-file", "L.txt"]) == 0
    rec = json.loads((work / "p/metrics.json").read_text())
    assert {"R", "gamma", "grid_size", "budget_limited"} <= set(rec)
    assert read_samples(work / "p/samples.csv").shape == (8, 2)
    assert json.loads((work / "p/manifest.json").read_text())["L"] == [[0.5, -0.3]]


def test_demos_write_only_into_out_dir(work):
    before = files_under(work)
    assert main(["--seed", "1", "--out-dir", "d/part", "partition-demo", "--dim", "6", "--trials", "20", "--trace"]) == 0
    assert main(["--seed", "1", "--out-dir", "d/cut", "maxcut-check", "--dim", "4"]) == 0
    assert main(["--seed", "1", "--out-dir", "d/gibbs", "gibbs-demo", "--steps", "500", "--trace"]) == 0
    new = set(files_under(work)) - set(before)
    assert all(p.startswith("d") for p in new)
    part = json.loads((work / "d/part/metrics.json").read_text())
    assert part["beta"] == 11.0 and "decoded_yes_fraction" in part
    cut = json.loads((work / "d/cut/metrics.json").read_text())
    assert cut["mismatches"] == 0 and cut["subsets_checked"] == 16
    gibbs = json.loads((work / "d/gibbs/metrics.json").read_text())
    assert gibbs["expected_flips"] == pytest.approx(500 * 3.588e-3, rel=1e-3)
    assert len((work / "d/gibbs/trace.csv").read_text().splitlines()) == 501


def test_partition_replay_is_bitwise(work):
    assert main(["--seed", "4", "--out-dir", "p1", "partition-demo", "--trials", "10", "--trace"]) == 0
    assert main(["--out-dir", "p2", "--config", "p1/manifest.json", "run"]) == 0
    assert (work / "p1/trace.csv").read_bytes() == (work / "p2/trace.csv").read_bytes()
    assert (work / "p1/metrics.json").read_bytes() == (work / "p2/metrics.json").read_bytes()


def test_config_command_mismatch(work):
    cfg = write_cfg(work / "c.json", {"command": "estimate-z"})
    assert main(["--out-dir", "o", "--config", cfg, "sample-base"]) == 2


def test_module_entry_point(work):
    res = subprocess.run([sys.executable, "-m", "quadtilt", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("sample-base", "sample-psd-tilt", "estimate-z", "verify", "gibbs-demo", "accept"):
        assert cmd in res.stdout


def test_accept_subset(work, capsys):
    assert main(["--out-dir", "acc", "accept", "--only", "1,12"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2


RUN_CONFIGS = [p for p in sorted((REPO / "configs").glob("*.json")) if "command" in json.loads(p.read_text())]


@pytest.mark.parametrize("path", RUN_CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_resolve(path):
    from quadtilt.cli import DEFAULTS, resolve_config

    doc = json.loads(path.read_text())
    cfg = resolve_config(doc["command"], doc, {}, path.parent)
    assert set(DEFAULTS[doc["command"]]) <= set(cfg)
