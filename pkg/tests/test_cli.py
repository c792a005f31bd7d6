import json
import os
import subprocess
import sys

import pytest

from vlpl_lab import cli
from vlpl_lab.config import config_from_dict, load_config


def synth_args(out_dir, samples=150, labels=6, dim=16, seed=1, noise=0.2, avg=1.8):
    return [
        "synth",
        "--labels", str(labels),
        "--samples", str(samples),
        "--dim", str(dim),
        "--seed", str(seed),
        "--avg-positives", str(avg),
        "--noise-sigma", str(noise),
        "--out-dir", str(out_dir),
    ]


@pytest.fixture()
def dataset_dir(tmp_path):
    out = tmp_path / "data"
    assert cli.main(synth_args(out)) == 0
    return out


def write_config(tmp_path, dataset_dir, **tweaks):
    cfg = {
        "paths": {
            "image_embeddings": str(dataset_dir / "images.emb"),
            "label_embeddings": str(dataset_dir / "labels.emb"),
            "annotations": str(dataset_dir / "ground_truth.jsonl"),
            "output_dir": str(tmp_path / "out"),
        },
        "dataset": {"val_fraction": 0.2, "test_fraction": 0.2, "seed": 0},
        "pseudo": {"tau": 0.03, "theta": 0.3},
        "loss": {"variant": "vlpl_positive_only", "alpha": 0.2},
        "train": {"epochs": 2, "batch_size": 16, "lr": 0.01, "seed": 0},
    }
    for key, value in tweaks.items():
        section, _, field = key.partition(".")
        if field:
            cfg.setdefault(section, {})[field] = value
        else:
            cfg[section] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSynth:
    def test_writes_three_files(self, tmp_path):
        out = tmp_path / "d"
        assert cli.main(synth_args(out)) == 0
        for name in ("images.emb", "images.emb.json", "labels.emb", "labels.emb.json", "ground_truth.jsonl"):
            assert (out / name).exists()

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cli.main(synth_args(a))
        cli.main(synth_args(b))
        for name in ("images.emb", "labels.emb", "ground_truth.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_missing_flag_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["synth", "--labels", "6", "--out-dir", str(tmp_path)])
        assert exc.value.code == 2

    def test_invalid_spec_exit_one(self, tmp_path):
        rc = cli.main(synth_args(tmp_path / "d", avg=25, labels=20))
        assert rc == 1


class TestSimulate:
    def test_outputs(self, tmp_path, dataset_dir):
        out = tmp_path / "sim"
        rc = cli.main([
            "simulate",
            "--annotations", str(dataset_dir / "ground_truth.jsonl"),
            "--n-labels", "6",
            "--fraction", "0.2",
            "--seed", "3",
            "--out-dir", str(out),
        ])
        assert rc == 0
        split = json.loads((out / "split.json").read_text())
        assert len(split["val_indices"]) == 30
        train_lines = (out / "train_annotations.jsonl").read_text().splitlines()
        assert len(train_lines) == 120
        assert all(len(json.loads(line)["positives"]) == 1 for line in train_lines)


class TestPseudolabel:
    def test_summary_and_dump(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(tmp_path, dataset_dir)
        rc = cli.main(["pseudolabel", "--config", str(cfg_path), "--with-probs"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "pseudo positives:" in out and "precision" in out
        dump = (tmp_path / "out" / "pseudo_labels.jsonl").read_text().splitlines()
        assert len(dump) == 150
        assert "probs" in json.loads(dump[0])

    def test_high_theta_zero_positives(self, tmp_path, dataset_dir, capsys):
        # high tau flattens the softmax so no probability clears 0.999
        cfg_path = write_config(tmp_path, dataset_dir, **{"pseudo.theta": 0.999, "pseudo.tau": 5.0})
        assert cli.main(["pseudolabel", "--config", str(cfg_path)]) == 0
        assert "pseudo positives: 0 " in capsys.readouterr().out

    def test_noise_free_precision_one(self, tmp_path, capsys):
        clean = tmp_path / "clean"
        assert cli.main(synth_args(clean, samples=100, noise=0.0, avg=1.0)) == 0
        cfg_path = write_config(tmp_path, clean)
        assert cli.main(["pseudolabel", "--config", str(cfg_path)]) == 0
        assert "precision: 1.0000" in capsys.readouterr().out

    def test_delta_zero_no_negatives(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(tmp_path, dataset_dir, **{"pseudo.use_negatives": True, "pseudo.delta_pct": 0.0})
        assert cli.main(["pseudolabel", "--config", str(cfg_path)]) == 0
        assert "pseudo negatives: 0" in capsys.readouterr().out


class TestTrain:
    def test_artifacts(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(tmp_path, dataset_dir)
        assert cli.main(["train", "--config", str(cfg_path)]) == 0
        out_dir = tmp_path / "out"
        assert (out_dir / "probe.ckpt").exists()
        assert (out_dir / "probe.ckpt.json").exists()
        assert (out_dir / "history.csv").exists()
        report = json.loads((out_dir / "report.json").read_text())
        assert "map_x100" in report and "pseudo_quality" in report
        assert "test mAP:" in capsys.readouterr().out

    def test_history_byte_identical(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir)
        run_a = tmp_path / "a"
        run_b = tmp_path / "b"
        assert cli.main(["train", "--config", str(cfg_path), "--out-dir", str(run_a)]) == 0
        assert cli.main(["train", "--config", str(cfg_path), "--out-dir", str(run_b)]) == 0
        assert (run_a / "history.csv").read_bytes() == (run_b / "history.csv").read_bytes()

    def test_epochs_zero_config_error(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir, **{"train.epochs": 0})
        assert cli.main(["train", "--config", str(cfg_path)]) == 2

    def test_missing_embeddings_config_error(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir, **{"paths.image_embeddings": str(tmp_path / "nope.emb")})
        assert cli.main(["train", "--config", str(cfg_path)]) == 2

    def test_variant_override(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir)
        out = tmp_path / "an"
        assert cli.main(["train", "--config", str(cfg_path), "--variant", "assume_negative", "--out-dir", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["loss"]["variant"] == "assume_negative"
        assert "pseudo_quality" not in report


class TestEval:
    def test_eval_after_train(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(tmp_path, dataset_dir)
        assert cli.main(["train", "--config", str(cfg_path)]) == 0
        ckpt = str(tmp_path / "out" / "probe.ckpt")
        assert cli.main(["eval", "--config", str(cfg_path), "--checkpoint", ckpt]) == 0
        assert (tmp_path / "out" / "eval_report.json").exists()
        train_map = json.loads((tmp_path / "out" / "report.json").read_text())["map_x100"]
        eval_map = json.loads((tmp_path / "out" / "eval_report.json").read_text())["map_x100"]
        assert train_map == eval_map
        assert cli.main(["eval", "--config", str(cfg_path), "--checkpoint", ckpt, "--split", "val"]) == 0


class TestSweep:
    def test_sweep_outputs_and_resume(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(
            tmp_path,
            dataset_dir,
            sweep={"taus": [0.01, 0.03], "thetas": [0.2, 0.3], "repeats": 2},
        )
        assert cli.main(["sweep", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "computed: 8" in out
        out_dir = tmp_path / "out"
        assert (out_dir / "results.csv").exists()
        summary = json.loads((out_dir / "summary.json").read_text())
        assert len(summary["cells"]) == 4
        assert (out_dir / "plot_theta_0.2.csv").exists()
        assert (out_dir / "plot_theta_0.3.csv").exists()
        plot = (out_dir / "plot_theta_0.2.csv").read_text().splitlines()
        assert plot[0] == "tau,median_map" and len(plot) == 3

        journal_before = (out_dir / "results.csv").read_bytes()
        assert cli.main(["sweep", "--config", str(cfg_path)]) == 0
        assert "computed: 0" in capsys.readouterr().out
        assert (out_dir / "results.csv").read_bytes() == journal_before

    def test_sweep_missing_section(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir)
        assert cli.main(["sweep", "--config", str(cfg_path)]) == 2

    def test_empty_grid_config_error(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir, sweep={"taus": []})
        assert cli.main(["sweep", "--config", str(cfg_path)]) == 2


class TestConfig:
    def test_dump_config_roundtrip(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(tmp_path, dataset_dir)
        assert cli.main(["train", "--config", str(cfg_path), "--dump-config"]) == 0
        dumped = capsys.readouterr().out
        reparsed = config_from_dict(json.loads(dumped))
        assert reparsed == cli._apply_overrides(load_config(str(cfg_path)), type("A", (), {})())

    def test_seed_override_applies_everywhere(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(tmp_path, dataset_dir)
        assert cli.main(["train", "--config", str(cfg_path), "--seed", "77", "--dump-config"]) == 0
        dumped = json.loads(capsys.readouterr().out)
        assert dumped["dataset"]["seed"] == 77 and dumped["train"]["seed"] == 77

    def test_unknown_section_rejected(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir, extra={"x": 1})
        assert cli.main(["train", "--config", str(cfg_path)]) == 2

    def test_unknown_key_rejected(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir, **{"train.warmup": 5})
        assert cli.main(["train", "--config", str(cfg_path)]) == 2

    def test_missing_config_file(self):
        assert cli.main(["train", "--config", "/nonexistent/config.json"]) == 2

    def test_bad_variant_rejected(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir, **{"loss.variant": "focal"})
        assert cli.main(["train", "--config", str(cfg_path)]) == 2


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "vlpl_lab.cli"] + synth_args(tmp_path / "d", samples=30, labels=4, dim=8),
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert (tmp_path / "d" / "images.emb").exists()


class TestSweepAllFailed:
    def test_all_cells_failed_exit_one(self, tmp_path, dataset_dir, capsys):
        cfg_path = write_config(tmp_path, dataset_dir, sweep={"taus": [-1.0], "thetas": [0.3], "repeats": 1})
        assert cli.main(["sweep", "--config", str(cfg_path)]) == 1
        assert "failed" in capsys.readouterr().err


class TestEvalPerClassCsv:
    def test_flag_writes_csv(self, tmp_path, dataset_dir):
        cfg_path = write_config(tmp_path, dataset_dir)
        assert cli.main(["train", "--config", str(cfg_path)]) == 0
        ckpt = str(tmp_path / "out" / "probe.ckpt")
        assert cli.main(["eval", "--config", str(cfg_path), "--checkpoint", ckpt, "--per-class-csv"]) == 0
        lines = (tmp_path / "out" / "per_class_ap.csv").read_text().splitlines()
        assert lines[0] == "class_name,ap" and len(lines) == 7
