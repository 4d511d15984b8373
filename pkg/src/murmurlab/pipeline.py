"""Workspace pipeline: synth -> segment -> alpha -> select -> features ->
split -> train -> evaluate.

Each stage reads and writes the workspace CSV/WAV conventions and is guarded
by an input checksum: rerunning a stage whose inputs and parameters have not
changed is a no-op.  Any stage failure aborts the run with the stage name
(and recording id where known) attached.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import reporting
from .corpus import MurmurIntensity, Workspace, load_table, save_table, save_wav
from .dsp import DspError, HeartCycle, bandpass, segment_recording
from .ensembles import (
    fit_adaboost,
    fit_gradient_boost,
    fit_random_forest,
    load_model,
    save_model,
)
from .evaluation import RecordingLabel, confusion, grouped_split, format_report, metric_rows
from .features import FEATURE_COLUMNS, N_FEATURES, extract, feature_table_columns
from .labels import (
    agreement_trace,
    load_label_matrix,
    save_label_matrix,
    save_selection_report,
    select_recordings,
)
from .synth import RaterModel, noisy_intensity_labels, simulate_raters, synth_corpus


class StageError(Exception):
    """A pipeline stage failed; carries the stage name and context."""

    def __init__(self, stage: str, message: str, recording_id: Optional[str] = None):
        self.stage = stage
        self.recording_id = recording_id
        where = f"stage {stage!r}"
        if recording_id:
            where += f" (recording {recording_id!r})"
        super().__init__(f"{where}: {message}")


STAGE_ORDER = ("synth", "segment", "alpha", "select", "features", "split",
               "train", "evaluate")


# ---------------------------------------------------------------------------
# Checksum guard
# ---------------------------------------------------------------------------

def _state_path(ws: Workspace) -> Path:
    return ws.root / "stage_state.json"


def _load_state(ws: Workspace) -> dict:
    path = _state_path(ws)
    if path.exists():
        return json.loads(path.read_text())
    return {}


def _fingerprint(inputs: list[Path], params: dict) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps(params, sort_keys=True).encode())
    for path in sorted(Path(p) for p in inputs):
        digest.update(str(path).encode())
        if path.exists():
            digest.update(path.read_bytes())
    return digest.hexdigest()


def _guarded(ws: Workspace, stage: str, inputs: list[Path], params: dict,
             outputs: list[Path]) -> bool:
    """True when the stage may be skipped: same inputs, outputs all present."""
    state = _load_state(ws)
    entry = state.get(stage)
    if entry is None:
        return False
    if entry.get("fingerprint") != _fingerprint(inputs, params):
        return False
    return all(Path(p).exists() for p in entry.get("outputs", [])) and \
        set(entry.get("outputs", [])) == {str(p) for p in outputs}


def _record_stage(ws: Workspace, stage: str, inputs: list[Path], params: dict,
                  outputs: list[Path], seed: Optional[int] = None) -> None:
    state = _load_state(ws)
    state[stage] = {
        "fingerprint": _fingerprint(inputs, params),
        "outputs": sorted(str(p) for p in outputs),
        "seed": seed,
    }
    _state_path(ws).write_text(json.dumps(state, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_synth(ws: Workspace, cfg: dict) -> list[Path]:
    """Generate the synthetic corpus: WAVs, truth, site labels, label matrix."""
    ws.ensure()
    seed = cfg["seed"]
    s = cfg["synth"]
    params = {"seed": seed, "synth": s}
    outputs = [ws.labels_dir / "truth.csv", ws.labels_dir / "sc_labels.csv",
               ws.labels_dir / "labelmatrix.csv"]
    if _guarded(ws, "synth", [], params, outputs):
        return outputs
    try:
        recordings, truths = synth_corpus(
            (s["n_mild"], s["n_moderate"], s["n_loud_thrilling"]), seed=seed,
            snr_db=s["snr_db"], heart_rate_range=(s["heart_rate_min"], s["heart_rate_max"]),
            duration=s["duration_s"])
        sc = noisy_intensity_labels([t.true_class for t in truths], s["sc_flip_p"],
                                    seed=seed + 2)
        matrix = simulate_raters(
            [t.true_class for t in truths],
            RaterModel(adjacent_flip_p=s["rater"]["adjacent_flip_p"],
                       off_domain_p=s["rater"]["off_domain_p"], seed=seed + 1),
            recording_ids=[r.id for r in recordings])
        for rec in recordings:
            save_wav(rec, ws.recordings_dir / f"{rec.id}.wav")
        save_table([{"recording_id": r.id, "true_class": t.true_class.value,
                     "s1_onsets": ";".join(str(int(i)) for i in t.s1_onsets)}
                    for r, t in zip(recordings, truths)],
                   outputs[0], fieldnames=("recording_id", "true_class", "s1_onsets"))
        save_table([{"recording_id": r.id, "sc_label": lab.value}
                    for r, lab in zip(recordings, sc)],
                   outputs[1], fieldnames=("recording_id", "sc_label"))
        save_label_matrix(matrix, outputs[2])
    except StageError:
        raise
    except Exception as exc:
        raise StageError("synth", str(exc))
    _record_stage(ws, "synth", [], params, outputs, seed=cfg["seed"])
    return outputs


def stage_segment(ws: Workspace, cfg: dict) -> list[Path]:
    """Detect S1 peaks and record cycle boundaries for every recording."""
    dsp_cfg = cfg["dsp"]
    wavs = sorted(ws.recordings_dir.glob("*.wav"))
    if not wavs:
        raise StageError("segment", f"no recordings in {ws.recordings_dir}")
    outputs = [ws.features_dir / "cycles.csv"]
    if _guarded(ws, "segment", wavs, dsp_cfg, outputs):
        return outputs
    registry = ws.load_recordings()
    rows = []
    for rec in registry:
        try:
            s1, cycles = segment_recording(
                rec, f_lo=dsp_cfg["f_lo"], f_hi=dsp_cfg["f_hi"], order=dsp_cfg["order"],
                smooth_ms=dsp_cfg["smooth_ms"], peak_k=dsp_cfg["peak_k"],
                refractory_factor=dsp_cfg["refractory_factor"])
        except DspError as exc:
            warnings.warn(f"segment: skipping {rec.id}: {exc}")
            continue
        except Exception as exc:
            raise StageError("segment", str(exc), recording_id=rec.id)
        for i in range(len(s1) - 1):
            rows.append({"recording_id": rec.id, "cycle_index": i,
                         "start_sample": int(s1[i]), "end_sample": int(s1[i + 1]),
                         "duration_s": (int(s1[i + 1]) - int(s1[i])) / rec.sample_rate})
    if not rows:
        raise StageError("segment", "no recording produced any heart cycle")
    save_table(rows, outputs[0], fieldnames=("recording_id", "cycle_index", "start_sample",
                                             "end_sample", "duration_s"))
    _record_stage(ws, "segment", wavs, dsp_cfg, outputs, seed=cfg["seed"])
    return outputs


def stage_alpha(ws: Workspace, cfg: dict) -> list[Path]:
    """Agreement statistics across selection steps, as CSV and figure."""
    matrix_path = ws.labels_dir / "labelmatrix.csv"
    outputs = [ws.reports_dir / "alpha_trace.csv", ws.reports_dir / "alpha_trace.png"]
    if _guarded(ws, "alpha", [matrix_path], {}, outputs):
        return outputs
    try:
        trace = agreement_trace(load_label_matrix(matrix_path))
        save_table(reporting.agreement_rows(trace), outputs[0])
        reporting.plot_agreement_trace(trace, outputs[1])
    except StageError:
        raise
    except Exception as exc:
        raise StageError("alpha", str(exc))
    _record_stage(ws, "alpha", [matrix_path], {}, outputs, seed=cfg["seed"])
    return outputs


def stage_select(ws: Workspace, cfg: dict) -> list[Path]:
    """Four-step selection + majority vote; writes the selection report."""
    matrix_path = ws.labels_dir / "labelmatrix.csv"
    outputs = [ws.labels_dir / "selection_report.csv"]
    if _guarded(ws, "select", [matrix_path], {}, outputs):
        return outputs
    try:
        matrix = load_label_matrix(matrix_path)
        save_selection_report(matrix, select_recordings(matrix), outputs[0])
    except StageError:
        raise
    except Exception as exc:
        raise StageError("select", str(exc))
    _record_stage(ws, "select", [matrix_path], {}, outputs, seed=cfg["seed"])
    return outputs


def _read_label_maps(ws: Workspace) -> tuple[dict, dict]:
    sc_rows = load_table(ws.labels_dir / "sc_labels.csv", required=("recording_id", "sc_label"))
    sc = {str(r["recording_id"]): MurmurIntensity(r["sc_label"]) for r in sc_rows}
    sel_rows = load_table(ws.labels_dir / "selection_report.csv",
                          required=("recording_id", "status", "mv_label"))
    mv = {str(r["recording_id"]): MurmurIntensity(r["mv_label"])
          for r in sel_rows if r["status"] == "kept"}
    return sc, mv


def stage_features(ws: Workspace, cfg: dict) -> list[Path]:
    """Extract the 68-value descriptor for every segmented cycle."""
    dsp_cfg = cfg["dsp"]
    inputs = [ws.features_dir / "cycles.csv", ws.labels_dir / "sc_labels.csv",
              ws.labels_dir / "selection_report.csv"]
    outputs = [ws.features_dir / "features.csv", ws.features_dir / "feature_names.csv"]
    if _guarded(ws, "features", inputs, dsp_cfg, outputs):
        return outputs
    try:
        cycle_rows = load_table(inputs[0], required=("recording_id", "cycle_index",
                                                     "start_sample", "end_sample"))
        sc, mv = _read_label_maps(ws)
        registry = ws.load_recordings()
    except StageError:
        raise
    except Exception as exc:
        raise StageError("features", str(exc))
    by_rec: dict[str, list[dict]] = {}
    for row in cycle_rows:
        by_rec.setdefault(str(row["recording_id"]), []).append(row)
    out_rows = []
    for rec_id in sorted(by_rec):
        try:
            rec = registry.get(rec_id)
            filtered = bandpass(rec.samples, rec.sample_rate, f_lo=dsp_cfg["f_lo"],
                                f_hi=dsp_cfg["f_hi"], order=dsp_cfg["order"])
            for row in sorted(by_rec[rec_id], key=lambda r: r["cycle_index"]):
                cycle = HeartCycle(recording_id=rec_id, index=int(row["cycle_index"]),
                                   samples=filtered[int(row["start_sample"]):int(row["end_sample"])],
                                   sample_rate=rec.sample_rate)
                fv = extract(cycle, sc_label=sc.get(rec_id), mv_label=mv.get(rec_id))
                out = {"recording_id": fv.recording_id, "cycle_index": fv.cycle_index,
                       "sc_label": fv.sc_label.value if fv.sc_label else None,
                       "mv_label": fv.mv_label.value if fv.mv_label else None}
                for i, v in enumerate(fv.values):
                    out[f"f{i:02d}"] = float(v)
                out_rows.append(out)
        except StageError:
            raise
        except Exception as exc:
            raise StageError("features", str(exc), recording_id=rec_id)
    save_table(out_rows, outputs[0], fieldnames=feature_table_columns())
    save_table([{"column": col, "name": name} for col, name in FEATURE_COLUMNS.items()],
               outputs[1], fieldnames=("column", "name"))
    _record_stage(ws, "features", inputs, dsp_cfg, outputs, seed=cfg["seed"])
    return outputs


def stage_split(ws: Workspace, cfg: dict) -> list[Path]:
    """Grouped stratified split at the recording level."""
    inputs = [ws.labels_dir / "sc_labels.csv", ws.labels_dir / "selection_report.csv",
              ws.features_dir / "cycles.csv"]
    params = {"fraction": cfg["split"]["fraction"], "seed": cfg["seed"]}
    outputs = [ws.labels_dir / "split.csv"]
    if _guarded(ws, "split", inputs, params, outputs):
        return outputs
    try:
        sc, mv = _read_label_maps(ws)
        cycle_rows = load_table(inputs[2], required=("recording_id",))
        counts: dict[str, int] = {}
        for row in cycle_rows:
            counts[str(row["recording_id"])] = counts.get(str(row["recording_id"]), 0) + 1
        labels = [RecordingLabel(recording_id=rid, sc_label=sc.get(rid), mv_label=mv.get(rid),
                                 n_cycles=n)
                  for rid, n in sorted(counts.items())]
        plan = grouped_split(labels, fraction=params["fraction"], seed=cfg["seed"] + 3)
        rows = []
        for lab in labels:
            rid = lab.recording_id
            rows.append({
                "recording_id": rid,
                "in_test": int(rid in plan.test_recordings),
                "in_train_sc": int(rid in plan.train_sc),
                "in_train_hq": int(rid in plan.train_hq),
                "sc_label": lab.sc_label.value if lab.sc_label else None,
                "mv_label": lab.mv_label.value if lab.mv_label else None,
                "n_cycles": lab.n_cycles,
            })
        save_table(rows, outputs[0], fieldnames=("recording_id", "in_test", "in_train_sc",
                                                 "in_train_hq", "sc_label", "mv_label",
                                                 "n_cycles"))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("split", str(exc))
    _record_stage(ws, "split", inputs, params, outputs, seed=cfg["seed"])
    return outputs


_FITTERS = {
    "random_forest": lambda X, y, p, seed, cw: fit_random_forest(
        X, y, n_trees=p["n_trees"], max_depth=p["max_depth"], min_leaf=p["min_leaf"],
        seed=seed, class_weight=cw),
    "adaboost": lambda X, y, p, seed, cw: fit_adaboost(
        X, y, n_rounds=p["n_rounds"], stump_depth=p["stump_depth"],
        learning_rate=p["learning_rate"], seed=seed, class_weight=cw),
    "gradient_boost": lambda X, y, p, seed, cw: fit_gradient_boost(
        X, y, n_rounds=p["n_rounds"], max_depth=p["max_depth"],
        learning_rate=p["learning_rate"], reg_lambda=p["reg_lambda"], gamma=p["gamma"],
        seed=seed, class_weight=cw),
}


def _load_feature_split(ws: Workspace):
    feat_rows = load_table(ws.features_dir / "features.csv",
                           required=tuple(feature_table_columns()))
    split_rows = load_table(ws.labels_dir / "split.csv",
                            required=("recording_id", "in_test", "in_train_sc", "in_train_hq"))
    X = np.array([[row[f"f{i:02d}"] for i in range(N_FEATURES)] for row in feat_rows])
    ids = np.array([str(row["recording_id"]) for row in feat_rows])
    sc_y = np.array([row["sc_label"] or "" for row in feat_rows])
    mv_y = np.array([row["mv_label"] or "" for row in feat_rows])
    test_ids = {str(r["recording_id"]) for r in split_rows if r["in_test"]}
    sc_ids = {str(r["recording_id"]) for r in split_rows if r["in_train_sc"]}
    hq_ids = {str(r["recording_id"]) for r in split_rows if r["in_train_hq"]}
    return X, ids, sc_y, mv_y, test_ids, sc_ids, hq_ids


def stage_train(ws: Workspace, cfg: dict) -> list[Path]:
    """Fit every configured classifier on the noisy (sc) and cleaned (hq) pools."""
    inputs = [ws.features_dir / "features.csv", ws.labels_dir / "split.csv"]
    params = {"train": cfg["train"], "seed": cfg["seed"]}
    outputs = [ws.models_dir / f"{clf}_{ds}.json"
               for clf in cfg["train"]["classifiers"] for ds in ("sc", "hq")]
    if _guarded(ws, "train", inputs, params, outputs):
        return outputs
    try:
        X, ids, sc_y, mv_y, test_ids, sc_ids, hq_ids = _load_feature_split(ws)
    except Exception as exc:
        raise StageError("train", str(exc))
    cw = cfg["train"]["class_weight"]
    cw = None if cw in ("none", None) else cw
    sc_mask = np.isin(ids, sorted(sc_ids)) & (sc_y != "")
    hq_mask = np.isin(ids, sorted(hq_ids)) & (mv_y != "")
    for clf in cfg["train"]["classifiers"]:
        fitter = _FITTERS[clf]
        p = cfg["train"][clf]
        try:
            model_sc = fitter(X[sc_mask], sc_y[sc_mask], p, cfg["seed"] + 4, cw)
            save_model(model_sc, ws.models_dir / f"{clf}_sc.json")
            model_hq = fitter(X[hq_mask], mv_y[hq_mask], p, cfg["seed"] + 4, cw)
            save_model(model_hq, ws.models_dir / f"{clf}_hq.json")
        except Exception as exc:
            raise StageError("train", f"{clf}: {exc}")
    _record_stage(ws, "train", inputs, params, outputs, seed=cfg["seed"])
    return outputs


def stage_evaluate(ws: Workspace, cfg: dict, echo=print) -> list[Path]:
    """Score every trained model on the shared test cycles; write reports."""
    inputs = [ws.features_dir / "features.csv", ws.labels_dir / "split.csv"] + [
        ws.models_dir / f"{clf}_{ds}.json"
        for clf in cfg["train"]["classifiers"] for ds in ("sc", "hq")]
    outputs = [ws.reports_dir / "report.csv", ws.reports_dir / "metrics.png",
               ws.reports_dir / "cycle_counts.csv", ws.reports_dir / "cycle_counts.png"]
    if _guarded(ws, "evaluate", inputs, {}, outputs):
        return outputs
    try:
        X, ids, sc_y, mv_y, test_ids, sc_ids, hq_ids = _load_feature_split(ws)
        test_mask = np.isin(ids, sorted(test_ids))
        if not test_mask.any():
            raise StageError("evaluate", "test set contains no cycles")
        y_test = mv_y[test_mask]
        rows = []
        for clf in cfg["train"]["classifiers"]:
            for ds in ("sc", "hq"):
                model = load_model(ws.models_dir / f"{clf}_{ds}.json")
                cm = confusion(list(y_test), list(model.predict(X[test_mask])))
                rows.extend(metric_rows(ds.upper(), clf, cm))
        reporting.write_report_csv(rows, outputs[0])
        reporting.plot_metric_comparison(rows, outputs[1])
        counts = {
            "sc_train": _per_class_counts(sc_y[np.isin(ids, sorted(sc_ids))]),
            "hq_train": _per_class_counts(mv_y[np.isin(ids, sorted(hq_ids)) & (mv_y != "")]),
            "test": _per_class_counts(y_test),
        }
        save_table(reporting.cycle_count_rows(counts), outputs[2],
                   fieldnames=("subset", "class", "n_cycles"))
        reporting.plot_cycle_counts(counts, outputs[3])
        echo(format_report(rows))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("evaluate", str(exc))
    _record_stage(ws, "evaluate", inputs, {}, outputs, seed=cfg["seed"])
    return outputs


def _per_class_counts(y: np.ndarray) -> dict:
    return {cls: int(np.sum(y == cls)) for cls in ("mild", "moderate", "loud_thrilling")}


def run_pipeline(ws: Workspace, cfg: dict, echo=print) -> dict[str, list[Path]]:
    """Execute every stage in order; returns written paths per stage.

    The workspace's run_meta.json records the seed and effective config;
    stage_state.json repeats the seed per stage, so every artifact can be
    traced back to the run that produced it.
    """
    ws.ensure()
    (ws.root / "run_meta.json").write_text(json.dumps({"seed": cfg["seed"], "config": cfg},
                                                      indent=2, sort_keys=True))
    written = {}
    for stage in STAGE_ORDER:
        func = globals()[f"stage_{stage}"]
        echo(f"[{stage}]")
        if stage == "evaluate":
            written[stage] = func(ws, cfg, echo=echo)
        else:
            written[stage] = func(ws, cfg)
    return written
