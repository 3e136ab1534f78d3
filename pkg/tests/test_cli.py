"""CLI subcommands: strict configs, artifacts, manifests, error paths."""

import json
import os

import numpy as np
import pytest

from advdistill.cli import main
from advdistill.config import SCHEMA_VERSION, read_config, write_config
from advdistill.datasets import load_dataset


def _write(path, sections):
    write_config(str(path), {"meta": {"schema": SCHEMA_VERSION}, **sections})
    return str(path)


@pytest.fixture()
def gen_data_cfg(tmp_path):
    # the training preset: gaussian-kernel GRF, l = 0.1, range (0, 1)
    out = tmp_path / "data"
    cfg = _write(
        tmp_path / "gen.cfg",
        {
            "dataset": {"count": 6, "seed": 3, "out_dir": str(out)},
            "grid": {"dims": 1, "n": 64, "length": 1.0},
            "solver": {"equation": "burgers1d", "nu": 0.01, "dt": 0.005, "t_end": 0.2},
            "kernel": {"family": "rbf", "length_scale": 0.1},
            "generator": {"kind": "grf", "range_lo": 0.0, "range_hi": 1.0},
        },
    )
    return cfg, str(out)


class TestGenData:
    def test_writes_dataset_and_manifest(self, gen_data_cfg, capsys):
        cfg, out = gen_data_cfg
        assert main(["gen-data", cfg]) == 0
        ds = load_dataset(out)
        assert len(ds) == 6
        assert (0 <= ds.inputs).all() and (ds.inputs <= 1).all()
        manifest = read_config(os.path.join(out, "run_manifest.cfg"))
        assert manifest["run"]["command"] == "gen-data"

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = _write(
            tmp_path / "bad.cfg",
            {
                "dataset": {"count": 1, "out_dir": str(tmp_path / "d"), "typo_key": 7},
                "grid": {"dims": 1, "n": 64},
                "solver": {"equation": "burgers1d", "nu": 0.01, "dt": 0.005, "t_end": 0.1},
            },
        )
        rc = main(["gen-data", cfg])
        assert rc != 0
        err = json.loads(capsys.readouterr().err.strip())
        assert "typo_key" in err["error"]

    def test_missing_config_reports_path(self, capsys):
        rc = main(["gen-data", "/nonexistent/path.cfg"])
        assert rc != 0
        err = json.loads(capsys.readouterr().err.strip())
        assert "/nonexistent/path.cfg" in err["error"]


class TestTrainAttackPipeline:
    def test_train_then_attack_and_eval(self, gen_data_cfg, tmp_path, capsys):
        gen_cfg, data_dir = gen_data_cfg
        assert main(["gen-data", gen_cfg]) == 0

        ckpt = tmp_path / "model.sgno"
        train_cfg = _write(
            tmp_path / "train.cfg",
            {
                "data": {"dir": data_dir},
                "model": {"arch": "fno1d", "modes": 8, "width": 12, "layers": 2, "seed": 1},
                "train": {"epochs": 3, "batch_size": 3, "lr": 2e-3},
                "output": {"checkpoint": str(ckpt), "out_dir": str(tmp_path / "train_out")},
            },
        )
        assert main(["train", train_cfg]) == 0
        assert ckpt.exists()
        hist = (tmp_path / "train_out" / "history.csv").read_text().strip().split("\n")
        assert hist[0] == "epoch,train_loss"
        assert len(hist) == 4

        attack_out = tmp_path / "attack_out"
        attack_cfg = _write(
            tmp_path / "attack.cfg",
            {
                "data": {"dir": data_dir},
                "model": {"checkpoint": str(ckpt)},
                "grid": {"dims": 1, "n": 64, "length": 1.0},
                "solver": {"equation": "burgers1d", "nu": 0.01, "dt": 0.005, "t_end": 0.2},
                "attack": {"norm": "l2", "epsilon": 1.0, "alpha": 0.1, "steps": 4,
                           "indices": "[0, 1]"},
                "output": {"out_dir": str(attack_out)},
            },
        )
        assert main(["attack", attack_cfg]) == 0
        curve = (attack_out / "losses_00000.csv").read_text().strip().split("\n")
        assert curve[0] == "step,true_loss,surrogate_loss,alpha_used,blowup_flag"
        assert (attack_out / "perturbation_00000.sgf1").exists()
        manifest = read_config(os.path.join(attack_out, "run_manifest.cfg"))
        assert "timings" in manifest

        eval_out = tmp_path / "eval_out"
        eval_cfg = _write(
            tmp_path / "eval.cfg",
            {
                "model": {"checkpoint": str(ckpt)},
                "pools": {"train_dist": data_dir},
                "output": {"out_dir": str(eval_out)},
            },
        )
        assert main(["eval-ood", eval_cfg]) == 0
        table = (eval_out / "ood_metrics.csv").read_text()
        assert table.startswith("name,rmse,mae")

        # determinism: re-running eval reproduces byte-identical CSV output
        first = (eval_out / "ood_metrics.csv").read_bytes()
        assert main(["eval-ood", eval_cfg]) == 0
        assert (eval_out / "ood_metrics.csv").read_bytes() == first


class TestDiagnose:
    def test_empty_results_dir_is_an_error(self, tmp_path, capsys):
        empty = tmp_path / "results"
        empty.mkdir()
        cfg = _write(
            tmp_path / "diag.cfg",
            {
                "diagnose": {"results_dir": str(empty)},
                "output": {"out_dir": str(tmp_path / "diag_out")},
            },
        )
        rc = main(["diagnose", cfg])
        assert rc != 0
        err = json.loads(capsys.readouterr().err.strip())
        assert "nothing to diagnose" in err["error"]

    def test_diagnose_on_attack_outputs(self, tmp_path, capsys):
        from advdistill.io import write_field
        from advdistill.solvers import forcing_pattern
        from advdistill.spectral import Field, make_grid

        g = make_grid(2, 16, 1.0)
        results = tmp_path / "results"
        results.mkdir()
        pat = forcing_pattern("diagonal", g, 0.5)
        for i in range(3):
            write_field(str(results / f"perturbation_{i:05d}.sgf1"), pat)
        cfg = _write(
            tmp_path / "diag.cfg",
            {
                "diagnose": {"results_dir": str(results), "forcing": "diagonal",
                             "forcing_amplitude": 0.5},
                "output": {"out_dir": str(tmp_path / "diag_out")},
            },
        )
        assert main(["diagnose", cfg]) == 0
        text = (tmp_path / "diag_out" / "diagnostics.csv").read_text()
        rows = dict(line.split(",") for line in text.strip().split("\n")[1:])
        assert float(rows["forcing_correlation"]) == pytest.approx(1.0, abs=1e-9)
        assert (tmp_path / "diag_out" / "mean_perturbation.pgm").exists()
