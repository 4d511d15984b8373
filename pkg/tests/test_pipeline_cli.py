"""End-to-end pipeline and CLI surface tests on a desk-scale corpus."""

import json
import shutil
from pathlib import Path

import pytest
import yaml

from murmurlab.cli import main
from murmurlab.config import ConfigError, DEFAULTS, dump_config, load_config
from murmurlab.corpus import Workspace, load_table
from murmurlab.pipeline import StageError, run_pipeline

SMALL_CFG = {
    "seed": 7,
    "synth": {"n_mild": 8, "n_moderate": 6, "n_loud_thrilling": 8, "snr_db": 18.0},
    "train": {
        "classifiers": ["random_forest", "adaboost", "gradient_boost"],
        "random_forest": {"n_trees": 15, "max_depth": 8, "min_leaf": 2},
        "adaboost": {"n_rounds": 15, "stump_depth": 2, "learning_rate": 0.5},
        "gradient_boost": {"n_rounds": 10, "max_depth": 3, "learning_rate": 0.3,
                           "reg_lambda": 1.0, "gamma": 0.0},
    },
    "split": {"fraction": 0.25},
}


def _write_cfg(tmp_path, overrides=SMALL_CFG) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(overrides))
    return path


@pytest.fixture(scope="module")
def finished_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    cfg = load_config(_write_cfg(root))
    ws = Workspace(root / "run")
    run_pipeline(ws, cfg, echo=lambda *_: None)
    return ws, cfg


class TestConfig:
    def test_defaults_validate(self):
        cfg = load_config(None)
        assert cfg == DEFAULTS

    def test_missing_key_named(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("dsp:\n  f_hi: null\n")
        with pytest.raises(ConfigError, match="dsp.f_hi"):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("dsp:\n  f_high: 450\n")
        with pytest.raises(ConfigError, match="f_high"):
            load_config(path)

    def test_seed_override(self, tmp_path):
        cfg = load_config(_write_cfg(tmp_path), seed=99)
        assert cfg["seed"] == 99

    def test_dump_round_trips(self):
        cfg = load_config(None)
        assert yaml.safe_load(dump_config(cfg)) == cfg


class TestPipeline:
    def test_all_stages_produce_outputs(self, finished_workspace):
        ws, cfg = finished_workspace
        assert (ws.features_dir / "features.csv").exists()
        assert (ws.reports_dir / "report.csv").exists()
        assert (ws.reports_dir / "alpha_trace.csv").exists()
        assert (ws.reports_dir / "metrics.png").exists()
        assert (ws.reports_dir / "cycle_counts.png").exists()
        assert (ws.reports_dir / "alpha_trace.png").exists()

    def test_report_has_sc_and_hq_rows_per_classifier(self, finished_workspace):
        ws, cfg = finished_workspace
        rows = load_table(ws.reports_dir / "report.csv")
        combos = {(r["dataset"], r["classifier"]) for r in rows}
        for clf in cfg["train"]["classifiers"]:
            assert ("SC", clf) in combos
            assert ("HQ", clf) in combos
        classes = {r["class"] for r in rows}
        assert classes == {"all", "mild", "moderate", "loud_thrilling"}

    def test_feature_csv_schema(self, finished_workspace):
        ws, _ = finished_workspace
        rows = load_table(ws.features_dir / "features.csv",
                          required=("recording_id", "cycle_index", "sc_label", "mv_label",
                                    "f00", "f67"))
        assert rows

    def test_rerun_is_noop_and_stable(self, finished_workspace):
        ws, cfg = finished_workspace
        before = (ws.reports_dir / "report.csv").read_bytes()
        stamps = {p: p.stat().st_mtime_ns for p in ws.reports_dir.iterdir()}
        run_pipeline(ws, cfg, echo=lambda *_: None)  # checksum-guarded: no rewrites
        assert (ws.reports_dir / "report.csv").read_bytes() == before
        assert {p: p.stat().st_mtime_ns for p in ws.reports_dir.iterdir()} == stamps

    def test_fresh_rerun_byte_identical(self, finished_workspace, tmp_path):
        ws, cfg = finished_workspace
        ws2 = Workspace(tmp_path / "run2")
        run_pipeline(ws2, cfg, echo=lambda *_: None)
        for rel in ("reports/report.csv", "reports/alpha_trace.csv",
                    "reports/cycle_counts.csv", "labels/labelmatrix.csv",
                    "labels/split.csv", "features/features.csv"):
            assert (ws2.root / rel).read_bytes() == (ws.root / rel).read_bytes(), rel

    def test_stage_errors_name_the_stage(self, tmp_path):
        cfg = load_config(_write_cfg(tmp_path))
        ws = Workspace(tmp_path / "empty").ensure()
        with pytest.raises(StageError, match="segment"):
            from murmurlab.pipeline import stage_segment
            stage_segment(ws, cfg)

    def test_split_has_no_leakage(self, finished_workspace):
        ws, _ = finished_workspace
        rows = load_table(ws.labels_dir / "split.csv")
        for r in rows:
            assert not (r["in_test"] and (r["in_train_sc"] or r["in_train_hq"]))

    def test_run_meta_carries_seed(self, finished_workspace):
        ws, cfg = finished_workspace
        meta = json.loads((ws.root / "run_meta.json").read_text())
        assert meta["seed"] == cfg["seed"]
        state = json.loads((ws.root / "stage_state.json").read_text())
        assert all(entry["seed"] == cfg["seed"] for entry in state.values())

    def test_feature_names_documented(self, finished_workspace):
        ws, _ = finished_workspace
        rows = load_table(ws.features_dir / "feature_names.csv", required=("column", "name"))
        assert len(rows) == 68
        assert rows[0] == {"column": "f00", "name": "amp_mean"}

    def test_cycle_counts_match_features(self, finished_workspace):
        ws, _ = finished_workspace
        feat = load_table(ws.features_dir / "features.csv")
        counts = load_table(ws.reports_dir / "cycle_counts.csv")
        split = {r["recording_id"]: r for r in load_table(ws.labels_dir / "split.csv")}
        test_total = sum(1 for f in feat if split[f["recording_id"]]["in_test"])
        assert sum(r["n_cycles"] for r in counts if r["subset"] == "test") == test_total


class TestBindAddress:
    def test_env_var_parsed(self, monkeypatch):
        import argparse
        from murmurlab.cli import _bind_address
        monkeypatch.setenv("MURMURLAB_BIND", "0.0.0.0:9000")
        args = argparse.Namespace(host=None, port=None)
        assert _bind_address(args) == ("0.0.0.0", 9000)

    def test_flags_override_env(self, monkeypatch):
        import argparse
        from murmurlab.cli import _bind_address
        monkeypatch.setenv("MURMURLAB_BIND", "0.0.0.0:9000")
        args = argparse.Namespace(host="127.0.0.1", port=8401)
        assert _bind_address(args) == ("127.0.0.1", 8401)

    def test_defaults(self, monkeypatch):
        import argparse
        from murmurlab.cli import _bind_address
        monkeypatch.delenv("MURMURLAB_BIND", raising=False)
        args = argparse.Namespace(host=None, port=None)
        assert _bind_address(args) == ("127.0.0.1", 8400)


class TestCli:
    def test_print_config(self, capsys):
        assert main(["run", "--print-config"]) == 0
        out = capsys.readouterr().out
        assert "dsp:" in out and "f_hi: 500.0" in out

    def test_missing_workspace_is_user_error(self, capsys):
        assert main(["segment"]) == 1
        assert "workspace" in capsys.readouterr().err

    def test_bad_config_key_is_user_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("dsp:\n  f_hi: null\n")
        assert main(["--config", str(bad), "run"]) == 1
        assert "dsp.f_hi" in capsys.readouterr().err

    def test_unknown_command_is_user_error(self):
        assert main(["frobnicate"]) == 1

    def test_stagewise_cli_run(self, tmp_path, capsys):
        cfg_path = _write_cfg(tmp_path)
        ws = tmp_path / "ws"
        base = ["--workspace", str(ws), "--config", str(cfg_path)]
        assert main(base + ["synth"]) == 0
        assert main(base + ["segment"]) == 0
        assert (Path(ws) / "features" / "cycles.csv").exists()
        # stage with missing upstream input fails as a user error
        shutil.rmtree(ws / "features")
        assert main(base + ["features"]) == 1
