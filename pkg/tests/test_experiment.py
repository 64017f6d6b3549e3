import json

import pytest

from ttnsketch.experiment import (
    ConfigError,
    build_sketch,
    run_experiment,
    validate_config,
)
from ttnsketch.tree import path_tree


def test_run_experiment_outputs(tmp_path):
    cfg = validate_config(
        {
            "preset": "trident10",
            "sketch": {"kind": "markov"},
            "rank": 2,
            "n_list": [256, 1024],
            "seeds": [0, 1, 2],
            "out": str(tmp_path / "out"),
        }
    )
    out = run_experiment(cfg)
    runs = (out / "runs.csv").read_text().splitlines()
    # 2 Ns x 3 seeds x 3 models x 2 metrics
    assert len(runs) == 1 + 2 * 3 * 3 * 2
    agg = (out / "aggregate.csv").read_text().splitlines()
    med_rows = [r for r in agg if r.startswith("ttns-sketch") and ",slope," not in r]
    assert len(med_rows) == 2
    slope_rows = [r for r in agg if ",slope," in r]
    assert len(slope_rows) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["runs_total"] == 6
    assert manifest["failures"] == []
    assert manifest["format_versions"] == {"samples": 1, "model": 1}


def test_error_medians_decrease_with_n(tmp_path):
    cfg = validate_config(
        {
            "preset": "trident10",
            "rank": 2,
            "n_list": [2**8, 2**14],
            "seeds": [0, 1, 2],
            "out": str(tmp_path / "out"),
            "baselines": [],
        }
    )
    out = run_experiment(cfg)
    meds = {}
    for line in (out / "aggregate.csv").read_text().splitlines()[1:]:
        name, N, val = line.split(",")
        if N != "slope":
            meds[int(N)] = float(val)
    assert meds[2**14] < meds[2**8]


def test_failures_recorded_not_fatal(tmp_path):
    # rank 5 is impossible for binary Markov sketches (dims 4 x 2)
    cfg = validate_config(
        {
            "preset": "trident10",
            "rank": 5,
            "n_list": [128],
            "seeds": [0],
            "out": str(tmp_path / "out"),
        }
    )
    out = run_experiment(cfg)
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["failures"]) == 1
    assert "exceeds" in manifest["failures"][0]["error"]


def test_path_tree_source_and_save_models(tmp_path):
    cfg = validate_config(
        {
            "preset": "bipartite10",
            "tree": "path",
            "rank": 2,
            "n_list": [512],
            "seeds": [0],
            "out": str(tmp_path / "out"),
            "baselines": ["gm-path"],
            "save_models": True,
        }
    )
    out = run_experiment(cfg)
    assert (out / "fit-N512-s0.json").exists()
    assert (out / "fit-N512-s0.bin").exists()


def test_build_sketch_eps_schedule():
    tree = path_tree(4)
    sk = build_sketch(
        {"kind": "perturbative", "eps_c": 2.0, "eps_f": 0.5, "l": 3, "seed": 0},
        tree, [2, 2, 2, 2], n_samples=400,
    )
    assert abs(sk.eps - 2.0 / 20.0) < 1e-12


def test_validate_config_rejects_bad_blocks():
    with pytest.raises(ConfigError):
        validate_config({"preset": "trident10", "rank": 2, "tree": "mst"})
    with pytest.raises(ConfigError):
        validate_config({"preset": "trident10", "rank": 2, "baselines": ["bm"]})
    with pytest.raises(ConfigError):
        validate_config({"preset": "trident10", "rank": 2, "sketch": {"L": 2}})
    with pytest.raises(ConfigError):
        validate_config({"preset": "trident10", "rank": 2, "n_list": [0]})
