"""Staged batch pipeline with a content-keyed cache.

Stages run in the order of :data:`STAGES`.  Each writes into its own
directory under the output root and finishes by writing ``stage.json``,
whose ``key`` hashes the config sections the stage reads together with the
key of the stage before it.  A stage whose ``stage.json`` carries the
current key is skipped, so deleting a stage directory (or changing a
section it depends on) recomputes that stage and everything after it.

Every emitted file names the config hash: delimited files and graymaps in a
leading ``#`` comment, JSON files in a ``config_hash`` field.  Nothing
time- or host-dependent is written, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import features, infer, ingest, netmetrics, recurrence, study
from .config import PipelineConfig
from .face import FACE_FEATURES, HEAD_FEATURES, load_shape_model
from .signals import MODALITIES, DataError
from .windowing import FeatureWindowSeries, PhysioEvents, windowize

STAGES = ("synth", "facefit", "featurize", "recur", "metrics", "train", "report")
STAGE_SECTIONS = {
    "synth": ("study", "seed"),
    "facefit": ("face",),
    "featurize": ("filters", "windows"),
    "recur": ("embedding",),
    "metrics": ("metrics",),
    "train": ("model", "baseline_correction", "seed"),
    "report": (),
}
NETWORKS = MODALITIES + ("joint",)
TASKS = ("classify", "regress")
STAGE_FILE = "stage.json"
DATA_DIR = "data"


class StageError(RuntimeError):
    """A stage failed; carries the stage name and the item it was working on."""

    def __init__(self, stage: str, item: str, cause: BaseException):
        self.stage, self.item, self.cause = stage, item, cause
        super().__init__(f"stage {stage} failed on {item}: {cause}")


# --- small file helpers -----------------------------------------------------

def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_matrix(path, columns, rows, comment: str) -> None:
    """Comma-separated table with a ``#`` comment line and a header row.
    Floats are written as shortest round-trip decimals."""
    with open(path, "w") as fh:
        fh.write(f"# {comment}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else repr(float(v)) for v in row) + "\n")


def read_matrix(path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:] if ln]


def _finite(x):
    """JSON-safe float (NaN becomes null)."""
    x = float(x)
    return x if np.isfinite(x) else None


@lru_cache(maxsize=1)
def _model():
    return load_shape_model()


# --- data layout ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Segment:
    """One recording segment processed by the per-segment stages."""

    subject_id: str
    name: str  # stimulus id, or rest / restN
    kind: str  # "trial" or "rest"
    traces: dict

    @property
    def label(self) -> str:
        return f"{self.subject_id}/{self.name}"


def rest_names(keys: list) -> dict:
    """Segment name of each distinct resting key, in order of appearance."""
    distinct = []
    for k in keys:
        if k is not None and k not in distinct:
            distinct.append(k)
    if len(distinct) == 1:
        return {distinct[0]: "rest"}
    return {k: f"rest{i + 1}" for i, k in enumerate(distinct)}


def session_segments(session) -> list[Segment]:
    """Trials of a session plus each distinct resting segment once."""
    ids = [id(t.resting) if t.resting else None for t in session.trials]
    names = rest_names(ids)
    out, seen = [], set()
    for trial, rid in zip(session.trials, ids):
        if trial.stimulus_id in names.values():
            raise DataError(f"stimulus id {trial.stimulus_id!r} clashes with a resting segment")
        out.append(Segment(session.subject_id, trial.stimulus_id, "trial", trial.traces))
        if rid is not None and rid not in seen:
            seen.add(rid)
            out.append(Segment(session.subject_id, names[rid], "rest", trial.resting))
    return out


def iter_sessions(data_root):
    """Segments of each session under ``data_root``, one list per session."""
    for path in ingest.session_dirs(data_root):
        try:
            session = ingest.load_session(path)
        except DataError as exc:
            raise StageError("ingest", os.path.basename(path), exc) from exc
        yield session_segments(session)


def trial_index(data_root) -> list[dict]:
    """Trials with their resting-segment name, label and rating target."""
    index = ingest.load_trial_index(data_root)
    by_subject = {}
    for row in index:
        by_subject.setdefault(row["subject_id"], []).append(row)
    for rows in by_subject.values():
        names = rest_names([r["resting_key"] for r in rows])
        ratings = [r["rating"] for r in rows]
        for r in rows:
            r["rest"] = names.get(r["resting_key"])
            r["rating_target"] = infer.prepare_rating_target(r["rating"], ratings)
    return index


def tree_digest(root) -> str:
    """Hash of every file name and byte under ``root``."""
    h = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            h.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                h.update(hashlib.sha256(fh.read()).digest())
    return h.hexdigest()[:16]


# --- per-segment stage work (module level so worker processes can run it) --

def _tag(cfg: PipelineConfig) -> str:
    return f"config_hash: {cfg.hash()}"


def facefit_segment(seg: Segment, cfg: PipelineConfig, out_root: str) -> None:
    out = os.path.join(out_root, seg.subject_id)
    track = features.fit_face(seg.traces["landmarks"], cfg.face, _model())
    ingest.write_trace(track.face, os.path.join(out, f"{seg.name}_face.csv"), _tag(cfg))
    ingest.write_trace(track.head, os.path.join(out, f"{seg.name}_head.csv"), _tag(cfg))
    res = track.residual_px[np.isfinite(track.residual_px)]
    dump_json({
        "config_hash": cfg.hash(), "subject_id": seg.subject_id, "segment": seg.name,
        "frames": int(len(track.residual_px)), "rejected_frames": int(track.rejected.sum()),
        "residual_px_median": _finite(np.median(res)) if res.size else None,
        "residual_px_max": _finite(res.max()) if res.size else None,
    }, os.path.join(out, f"{seg.name}_fit.json"))


def events_json(events: PhysioEvents) -> dict:
    q = events.qrs
    return {
        "qrs": {"r_peaks_s": q.r_peaks_s.tolist(), "q_points_s": q.q_points_s.tolist(),
                "s_points_s": q.s_points_s.tolist(), "qrs_areas": q.qrs_areas.tolist()},
        "scr": [{"start_s": e.start_s, "peak_s": e.peak_s, "amplitude": e.amplitude,
                 "duration_s": e.duration_s, "rise_time_s": e.rise_time_s}
                for e in events.scrs],
    }


def featurize_segment(seg: Segment, cfg: PipelineConfig, face_root: str, out_root: str) -> None:
    out = os.path.join(out_root, seg.subject_id)
    face_dir = os.path.join(face_root, seg.subject_id)
    filtered = features.preprocess(seg.traces, cfg.filters)
    events = features.detect_events(filtered, cfg.windows)
    face = ingest.read_trace(os.path.join(face_dir, f"{seg.name}_face.csv"),
                             seg.traces["landmarks"].sample_rate_hz, FACE_FEATURES)
    head = ingest.read_trace(os.path.join(face_dir, f"{seg.name}_head.csv"),
                             seg.traces["landmarks"].sample_rate_hz, HEAD_FEATURES)
    series = windowize(filtered, face, head, cfg.windows.plan(), events)
    for m, s in series.items():
        write_matrix(os.path.join(out, f"{seg.name}_{m}.csv"), s.feature_names,
                     s.vectors.tolist(), _tag(cfg))
    first = series[MODALITIES[0]]
    dump_json({
        "config_hash": cfg.hash(), "subject_id": seg.subject_id, "segment": seg.name,
        "kind": seg.kind, "hop_s": first.hop_s,
        "window_starts_s": first.window_starts_s.tolist(),
        "window_index": first.window_index.tolist(),
        "window_s": {m: s.window_s for m, s in series.items()},
        "overlap": {m: s.overlap for m, s in series.items()},
    }, os.path.join(out, f"{seg.name}_windows.json"))
    dump_json(dict(events_json(events), config_hash=cfg.hash()),
              os.path.join(out, f"{seg.name}_events.json"))


def read_series(feat_dir: str, name: str) -> dict[str, FeatureWindowSeries]:
    meta = load_json(os.path.join(feat_dir, f"{name}_windows.json"))
    out = {}
    for m in MODALITIES:
        cols, rows = read_matrix(os.path.join(feat_dir, f"{name}_{m}.csv"))
        vectors = np.array(rows, dtype=float).reshape(len(rows), len(cols))
        out[m] = FeatureWindowSeries(m, meta["window_s"][m], meta["hop_s"], vectors,
                                     tuple(cols), np.array(meta["window_starts_s"]),
                                     np.array(meta["window_index"], dtype=int))
    return out


def recur_segment(seg_name: str, cfg: PipelineConfig, feat_dir: str, out: str) -> None:
    plots, joint = features.segment_plots(read_series(feat_dir, seg_name), cfg.embedding)
    e = cfg.embedding
    extra = {"config_hash": cfg.hash(), "m": e.m, "tau": e.tau, "standardize": e.standardize,
             "per_feature": e.per_feature}
    for net in NETWORKS:
        plot = joint if net == "joint" else plots[net]
        stem = os.path.join(out, f"{seg_name}_{net}")
        emit_rp_image(plot, f"{stem}.pgm", cfg.hash())
        recurrence.write_sparse(plot, f"{stem}.txt", extra)


def emit_rp_image(plot, path, config_hash: str | None = None) -> None:
    """Portable graymap of a plot: black where recurrent, row 0 (time 0) on top."""
    recurrence.write_pgm(plot, path, f"config_hash {config_hash}" if config_hash else None)


# --- stage runner ---------------------------------------------------------

class _NoPool:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


class Pipeline:
    """Runs the stages of one config into ``out_dir``.

    ``data_root`` names existing session directories; without it the
    ``synth`` stage generates the study into ``out_dir/data``.
    """

    def __init__(self, config: PipelineConfig, out_dir, data_root=None, jobs: int = 1,
                 log=None):
        self.cfg = config
        self.out = os.fspath(out_dir)
        self.external = data_root is not None
        self.data_root = os.fspath(data_root) if self.external else os.path.join(self.out, DATA_DIR)
        self.jobs = max(1, int(jobs))
        self.log = log or (lambda msg: None)
        self._keys = {}
        self._pool = None

    # keys and cache
    def key(self, stage: str) -> str:
        if stage not in self._keys:
            i = STAGES.index(stage)
            if stage == "synth":
                upstream = f"data:{tree_digest(self.data_root)}" if self.external else ""
            else:
                upstream = self.key(STAGES[i - 1])
            sections = STAGE_SECTIONS[stage] if not (self.external and stage == "synth") else ()
            blob = json.dumps({"stage": stage, "upstream": upstream,
                               "config": self.cfg.hash(*sections) if sections else ""},
                              sort_keys=True)
            self._keys[stage] = hashlib.sha256(blob.encode()).hexdigest()[:16]
        return self._keys[stage]

    def stage_dir(self, stage: str) -> str:
        return self.data_root if stage == "synth" else os.path.join(self.out, stage)

    def cached(self, stage: str) -> bool:
        path = os.path.join(self.stage_dir(stage), STAGE_FILE)
        if self.external and stage == "synth":
            return True
        return os.path.exists(path) and load_json(path).get("key") == self.key(stage)

    def _begin(self, stage: str) -> str:
        d = self.stage_dir(stage)
        if os.path.isdir(d):
            shutil.rmtree(d)
        os.makedirs(d)
        return d

    def _finish(self, stage: str, extra: dict | None = None) -> None:
        sections = STAGE_SECTIONS[stage]
        dump_json(dict({"stage": stage, "key": self.key(stage), "config_hash": self.cfg.hash(),
                        "sections": {s: self.cfg.to_dict()[s] for s in sections}},
                       **(extra or {})),
                  os.path.join(self.stage_dir(stage), STAGE_FILE))

    def run(self, until: str = "report") -> str:
        """Run (or reuse) every stage up to and including ``until``."""
        if until not in STAGES:
            raise ValueError(f"unknown stage {until!r}")
        os.makedirs(self.out, exist_ok=True)
        dump_json(dict(self.cfg.to_dict(), config_hash=self.cfg.hash()),
                  os.path.join(self.out, "config.json"))
        todo = STAGES[:STAGES.index(until) + 1]
        with ProcessPoolExecutor(self.jobs) if self.jobs > 1 else _NoPool() as pool:
            self._pool = pool
            try:
                for stage in todo:
                    if self.cached(stage):
                        self.log(f"{stage}: cached")
                        continue
                    self.log(f"{stage}: running")
                    getattr(self, f"_run_{stage}")()
            finally:
                self._pool = None
        return self.out

    def _map(self, stage: str, fn, items, *args) -> None:
        """Apply ``fn(item, *args)`` to every item, failing with the item label."""
        def label(item):
            return item.label if isinstance(item, Segment) else str(item[1])

        if self._pool is None:
            for item in items:
                try:
                    fn(item, *args)
                except Exception as exc:
                    raise StageError(stage, label(item), exc) from exc
            return
        futures = [(item, self._pool.submit(fn, item, *args)) for item in items]
        for item, fut in futures:
            try:
                fut.result()
            except Exception as exc:
                raise StageError(stage, label(item), exc) from exc

    # stages
    def _run_synth(self) -> None:
        d = self._begin("synth")
        try:
            sessions, truth = study.generate_study(self.cfg.study, self.cfg.seed)
        except Exception as exc:
            raise StageError("synth", "study", exc) from exc
        for s in sessions:
            sdir = os.path.join(d, s.subject_id)
            ingest.write_session(s, sdir, {"config_hash": self.cfg.hash()}, _tag(self.cfg))
            dump_json({"config_hash": self.cfg.hash(), "truth": truth[s.subject_id]},
                      os.path.join(sdir, "ground_truth.json"))
        self._finish("synth", {"subjects": [s.subject_id for s in sessions]})

    def _per_session(self, stage: str, fn, *args) -> None:
        """Run ``fn`` on every segment, loading one session at a time."""
        base = self._begin(stage)
        for segs in iter_sessions(self.data_root):
            os.makedirs(os.path.join(base, segs[0].subject_id))
            self._map(stage, fn, segs, self.cfg, *args, base)
        self._finish(stage)

    def _run_facefit(self) -> None:
        self._per_session("facefit", facefit_segment)

    def _run_featurize(self) -> None:
        self._per_session("featurize", featurize_segment, self.stage_dir("facefit"))

    def _segment_names(self) -> list[tuple[str, str]]:
        """``(subject, segment)`` pairs written by the featurize stage."""
        base = self.stage_dir("featurize")
        out = []
        for sid in sorted(os.listdir(base)):
            if os.path.isdir(os.path.join(base, sid)):
                for f in sorted(os.listdir(os.path.join(base, sid))):
                    if f.endswith("_windows.json"):
                        out.append((sid, f[:-len("_windows.json")]))
        return out

    def _run_recur(self) -> None:
        d = self._begin("recur")
        pairs = self._segment_names()
        for sid in sorted({p[0] for p in pairs}):
            os.makedirs(os.path.join(d, sid))
        self._map("recur", _recur_item, [(sid, f"{sid}/{name}") for sid, name in pairs],
                  self.cfg, self.stage_dir("featurize"), d)
        self._finish("recur")

    def _run_metrics(self) -> None:
        d = self._begin("metrics")
        rows = []
        for sid, name in self._segment_names():
            for net in NETWORKS:
                path = os.path.join(self.stage_dir("recur"), sid, f"{name}_{net}.txt")
                try:
                    a = recurrence.read_sparse(path).astype(np.uint8)
                    np.fill_diagonal(a, 0)  # network = plot minus its diagonal
                    vec = netmetrics.metric_vector(a, self.cfg.metrics.diversity_segments)
                except Exception as exc:
                    raise StageError("metrics", f"{sid}/{name}", exc) from exc
                rows.append([sid, name, net] + vec.tolist())
        write_metric_table(os.path.join(d, "metrics.csv"), rows, self.cfg)
        self._finish("metrics", {"rows": len(rows)})

    def _run_train(self) -> None:
        d = self._begin("train")
        table = read_metric_table(os.path.join(self.stage_dir("metrics"), "metrics.csv"))
        try:
            index = trial_index(self.data_root)
        except Exception as exc:
            raise StageError("train", "ratings", exc) from exc
        summary = {}
        for task in TASKS:
            reports = evaluate(table, index, self.cfg, task)
            for rep in reports:
                dump_json(report_json(rep, self.cfg),
                          os.path.join(d, f"{task}_{rep.name}.json"))
            summary[task] = {rep.name: rep.aggregate for rep in reports}
        dump_json({"config_hash": self.cfg.hash(), "aggregate": summary},
                  os.path.join(d, "summary.json"))
        self._finish("train")

    def _run_report(self) -> None:
        d = self._begin("report")
        for task, title in (("classify", "Classification"), ("regress", "Regression")):
            reports = [load_report(os.path.join(self.stage_dir("train"), f"{task}_{name}.json"))
                       for name in features.FEATURE_SETS + ("Random",)]
            with open(os.path.join(d, f"{task}.txt"), "w") as fh:
                fh.write(f"# {_tag(self.cfg)}\n")
                fh.write(infer.format_table(reports, title) + "\n")
            with open(os.path.join(d, f"{task}.tsv"), "w") as fh:
                fh.write(f"# {_tag(self.cfg)}\n")
                fh.write(infer.delimited_table(reports))
        self._finish("report")


def _recur_item(item, cfg, feat_root, out_root):
    sid, label = item
    name = label.split("/", 1)[1]
    recur_segment(name, cfg, os.path.join(feat_root, sid), os.path.join(out_root, sid))


# --- metric table -----------------------------------------------------------

METRIC_COLUMNS = ("subject_id", "segment", "network") + netmetrics.METRIC_NAMES


def write_metric_table(path, rows, cfg: PipelineConfig) -> None:
    """One row per segment and network; columns in :data:`METRIC_COLUMNS` order."""
    with open(path, "w") as fh:
        fh.write(f"# {_tag(cfg)}\n# schema_version: {netmetrics.SCHEMA_VERSION}\n")
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(r[:3] + [repr(float(v)) for v in r[3:]]) + "\n")


def read_metric_table(path) -> dict[tuple[str, str, str], np.ndarray]:
    cols, rows = read_matrix(path)
    if tuple(cols) != METRIC_COLUMNS:
        raise DataError(f"{path}: unexpected metric columns")
    return {(r[0], r[1], r[2]): np.array(r[3:], dtype=float) for r in rows}


def feature_vector(table, sid: str, segment: str, feature_set: str) -> np.ndarray:
    nets = ("joint",) if feature_set == "Fusion" else features.SET_MODALITIES[feature_set]
    return np.concatenate([table[(sid, segment, n)] for n in nets])


def examples_for(table, index, feature_set: str, correct: bool) -> list[infer.LabeledExample]:
    out = []
    for row in index:
        sid, stim = row["subject_id"], row["stimulus_id"]
        vec = feature_vector(table, sid, stim, feature_set)
        if correct:
            if row["rest"] is None:
                raise infer.InferenceError(f"trial {sid}/{stim} has no resting segment")
            vec, _ = infer.baseline_correct(vec, feature_vector(table, sid, row["rest"],
                                                                feature_set))
        out.append(infer.LabeledExample(vec, row["valence_label"], row["rating_target"],
                                        sid, f"{sid}/{stim}"))
    return out


def evaluate(table, index, cfg: PipelineConfig, task: str) -> list[infer.CvReport]:
    """Cross-validated reports of every feature set plus the random baseline."""
    mo = cfg.model
    C = mo.svm_C if task == "classify" else mo.svr_C
    snapshot = cfg.to_dict()
    reports = []
    for fs in features.FEATURE_SETS:
        ex = examples_for(table, index, fs, cfg.baseline_correction)
        reports.append(infer.loso_cv(ex, task, C, mo.svr_epsilon, mo.n_permutations,
                                     cfg.seed, fs, snapshot))
    ex = examples_for(table, index, features.FEATURE_SETS[0], False)
    reports.append(infer.random_baselines(ex, task, cfg.seed, mo.random_draws,
                                          mo.n_permutations))
    return reports


def report_json(rep: infer.CvReport, cfg: PipelineConfig) -> dict:
    return {
        "config_hash": cfg.hash(), "task": rep.task, "name": rep.name,
        "aggregate": rep.aggregate, "p_value": _finite(rep.p_value), "config": rep.config,
        "folds": [{"subject_id": f.subject_id, "trial_ids": f.trial_ids,
                   "truth": f.truth.tolist(), "predicted": f.predicted.tolist(),
                   "metrics": f.metrics, "param_hash": f.param_hash} for f in rep.folds],
    }


def load_report(path) -> infer.CvReport:
    d = load_json(path)
    folds = [infer.FoldResult(f["subject_id"], f["trial_ids"], np.array(f["truth"]),
                              np.array(f["predicted"]), f["metrics"], f["param_hash"])
             for f in d["folds"]]
    p = np.nan if d["p_value"] is None else d["p_value"]
    return infer.CvReport(d["task"], d["name"], folds, d["aggregate"], p, d["config"])


def run_pipeline(config: PipelineConfig, data_root=None, out_dir="artifacts",
                 until: str = "report", jobs: int = 1, log=None) -> str:
    """Run the pipeline and return the artifact directory."""
    return Pipeline(config, out_dir, data_root, jobs, log).run(until)
