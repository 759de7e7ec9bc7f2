import json
import os

import numpy as np
import pytest

from econet.cli import main
from econet.volume import load_mask, load_volume


def test_phantom_generation(tmp_path):
    out = str(tmp_path / "vol.nii.gz")
    gt_out = str(tmp_path / "gt.nii.gz")
    rc = main(["phantom", "--kind", "intensity-separable", "--dims", "32",
               "--seed", "3", "--lesions", "1", "--out", out, "--gt-out", gt_out])
    assert rc == 0
    v = load_volume(out)
    gt = load_mask(gt_out)
    assert v.dims == (32, 32, 32)
    assert gt.foreground_count() > 0


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    config = {
        "methods": ["econet", "histogram"],
        "rounds": 2,
        "seed": 1,
        "dataset": {"phantoms": [
            {"kind": "intensity-separable", "dims": [32, 32, 32], "seed": 5,
             "lesion_count": 1, "lesion_radius": [7, 9]}]},
        "econet": {"kernel_size": 3, "num_filters": 8, "fc_sizes": [8],
                   "epochs": 10, "lr_schedule": {"0": 0.01}},
    }
    cfg_path = str(base / "config.json")
    with open(cfg_path, "w") as f:
        json.dump(config, f)
    out = str(base / "results")
    assert main(["bench", "run", "--config", cfg_path, "--out", out]) == 0
    return out


def test_bench_run_outputs(run_dir):
    for name in ("report.json", "report.csv", "curves.csv", "traces.csv"):
        assert os.path.exists(os.path.join(run_dir, name))
    with open(os.path.join(run_dir, "report.json")) as f:
        report = json.load(f)
    assert {s["method"] for s in report["samples"]} == {"econet", "histogram"}


def test_bench_curves_reexport(run_dir, tmp_path):
    out = str(tmp_path / "curves2.csv")
    rc = main(["bench", "curves", "--report",
               os.path.join(run_dir, "report.json"), "--out", out])
    assert rc == 0
    with open(out) as f:
        header = f.readline().strip()
    assert header == "method,curve,x,y"


def test_bench_ablation(tmp_path):
    base = str(tmp_path / "abl")
    cfg = {
        "methods": ["econet"],
        "rounds": 1,
        "seed": 2,
        "dataset": {"phantoms": [
            {"kind": "intensity-separable", "dims": [32, 32, 32], "seed": 6,
             "lesion_count": 1, "lesion_radius": [7, 9]}]},
        "econet": {"kernel_size": 3, "num_filters": 6, "fc_sizes": [6],
                   "epochs": 5, "lr_schedule": {"0": 0.01}},
    }
    cfg_path = str(tmp_path / "abl.json")
    with open(cfg_path, "w") as f:
        json.dump(cfg, f)
    rc = main(["bench", "ablation", "--axis", "filters", "--values", "4,8",
               "--config", cfg_path, "--out", base])
    assert rc == 0
    path = os.path.join(base, "ablation_filters.csv")
    with open(path) as f:
        lines = f.read().strip().splitlines()
    assert len(lines) == 3  # header + two axis values
