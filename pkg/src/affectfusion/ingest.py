"""Session manifests and delimited channel files.

A session directory holds ``manifest.json`` and one comma-separated file per
trace.  Each file has a header row, a ``time_s`` column and one column per
channel; missing landmark frames are written as ``nan``.  The manifest
declares the sample rate and channel labels of every file::

    {"subject_id": "s01",
     "resting": {"ecg": {"file": "rest_ecg.csv", "sample_rate_hz": 250}, ...},
     "trials": [{"stimulus_id": "v1", "valence_label": "positive",
                 "traces": {"ecg": {...}, "eda": {...}, "resp": {...},
                            "landmarks": {...}},
                 "rating": {"file": "v1_rating.csv", "sample_rate_hz": 10}}]}

A ``resting`` entry inside a trial overrides the session-level one.
Writing is lossless: values are printed as shortest round-trip decimals.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .signals import DataError, Session, SignalTrace, TrialRecord

JITTER_TOL = 1e-6
MANIFEST = "manifest.json"


def write_trace(trace: SignalTrace, path, header_comment: str | None = None) -> None:
    """Write ``time_s`` plus one column per channel, losslessly."""
    rows = np.column_stack([trace.times, trace.samples.T]).tolist()
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(("time_s",) + trace.channel_labels) + "\n")
        # repr gives the shortest round-trip decimal, and "nan" for gaps
        fh.write("".join(",".join(map(repr, row)) + "\n" for row in rows))


def read_trace(path, sample_rate_hz: float, channels=None) -> SignalTrace:
    """Read a channel file and check its timestamps against the declared rate."""
    if not os.path.exists(path):
        raise DataError(f"missing channel file {path}")
    skip = 0
    with open(path) as fh:
        for header in fh:
            skip += 1
            if not header.startswith("#"):
                break
        else:
            raise DataError(f"{path}: empty channel file")
    names = [h.strip() for h in header.strip().split(",")]
    if names[0] != "time_s":
        raise DataError(f"{path}: first column must be time_s")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2, dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: malformed row ({exc})") from None
    if data.size == 0:
        data = np.zeros((0, len(names)))
    if data.shape[1] != len(names):
        raise DataError(f"{path}: {data.shape[1]} columns but {len(names)} header names")
    labels = tuple(names[1:])
    if channels is not None and tuple(channels) != labels:
        raise DataError(f"{path}: channels {labels} differ from manifest {tuple(channels)}")
    t = data[:, 0]
    if len(t) >= 2:
        step = np.diff(t)
        dt = 1.0 / sample_rate_hz
        jitter = np.max(np.abs(step - dt)) / dt
        if jitter > JITTER_TOL:
            raise DataError(
                f"{path}: non-uniform timestamps (relative jitter {jitter:.2g} > {JITTER_TOL:g})")
    start = float(t[0]) if len(t) else 0.0
    return SignalTrace(data[:, 1:].T, sample_rate_hz, labels, start)


def _trace_entry(root, entry) -> SignalTrace:
    try:
        fname, rate = entry["file"], entry["sample_rate_hz"]
    except (KeyError, TypeError):
        raise DataError(f"manifest entry {entry!r} lacks file or sample_rate_hz") from None
    return read_trace(os.path.join(root, fname), float(rate), entry.get("channels"))


def load_session(path, manifest: dict | None = None) -> Session:
    """Load a session directory; ``manifest`` overrides ``manifest.json``."""
    root = path if os.path.isdir(path) else os.path.dirname(path)
    if manifest is None:
        mpath = path if not os.path.isdir(path) else os.path.join(path, MANIFEST)
        if not os.path.exists(mpath):
            raise DataError(f"missing manifest {mpath}")
        with open(mpath) as fh:
            manifest = json.load(fh)
    sid = manifest["subject_id"]
    session_rest = manifest.get("resting")
    trials, rests = [], {}
    for tm in manifest["trials"]:
        traces = {k: _trace_entry(root, v) for k, v in tm["traces"].items()}
        rest_m = tm.get("resting", session_rest)
        resting = None
        if rest_m:
            # trials naming the same files share one resting object
            key = json.dumps(rest_m, sort_keys=True)
            if key not in rests:
                rests[key] = {k: _trace_entry(root, v) for k, v in rest_m.items()}
            resting = rests[key]
        rating = _trace_entry(root, tm["rating"])
        trials.append(TrialRecord(sid, tm["stimulus_id"], tm["valence_label"], traces,
                                  rating, resting))
    return Session(sid, trials)


def _entry(trace: SignalTrace, fname: str) -> dict:
    return {"file": fname, "sample_rate_hz": trace.sample_rate_hz,
            "channels": list(trace.channel_labels)}


def write_session(session: Session, root, extra: dict | None = None,
                  header_comment: str | None = None) -> str:
    """Write a session directory and return the manifest path.

    A resting segment shared (by identity) by all trials is written once at
    session level.  ``header_comment`` heads every channel file and
    ``extra`` is merged into the manifest.
    """
    os.makedirs(root, exist_ok=True)
    manifest = {"subject_id": session.subject_id, "trials": []}
    rests = [t.resting for t in session.trials]
    shared = rests[0] if rests and rests[0] and all(r is rests[0] for r in rests) else None
    if shared:
        manifest["resting"] = {}
        for k, tr in shared.items():
            fname = f"rest_{k}.csv"
            write_trace(tr, os.path.join(root, fname), header_comment)
            manifest["resting"][k] = _entry(tr, fname)
    for trial in session.trials:
        tm = {"stimulus_id": trial.stimulus_id, "valence_label": trial.valence_label,
              "traces": {}}
        for k, tr in trial.traces.items():
            fname = f"{trial.stimulus_id}_{k}.csv"
            write_trace(tr, os.path.join(root, fname), header_comment)
            tm["traces"][k] = _entry(tr, fname)
        fname = f"{trial.stimulus_id}_rating.csv"
        write_trace(trial.rating_trace, os.path.join(root, fname), header_comment)
        tm["rating"] = _entry(trial.rating_trace, fname)
        if trial.resting and not shared:
            tm["resting"] = {}
            for k, tr in trial.resting.items():
                fname = f"{trial.stimulus_id}_rest_{k}.csv"
                write_trace(tr, os.path.join(root, fname), header_comment)
                tm["resting"][k] = _entry(tr, fname)
        manifest["trials"].append(tm)
    if extra:
        manifest.update(extra)
    mpath = os.path.join(root, MANIFEST)
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return mpath


def session_dirs(root) -> list[str]:
    dirs = sorted(d for d in os.listdir(root)
                  if os.path.exists(os.path.join(root, d, MANIFEST)))
    if not dirs:
        raise DataError(f"no sessions under {root}")
    return [os.path.join(root, d) for d in dirs]


def load_trial_index(root) -> list[dict]:
    """Per-trial subject, stimulus, label, resting-segment key and rating
    trace, read from the manifests without loading the other traces."""
    out = []
    for path in session_dirs(root):
        with open(os.path.join(path, MANIFEST)) as fh:
            manifest = json.load(fh)
        session_rest = manifest.get("resting")
        for tm in manifest["trials"]:
            rest_m = tm.get("resting", session_rest)
            out.append({
                "subject_id": manifest["subject_id"],
                "stimulus_id": tm["stimulus_id"],
                "valence_label": tm["valence_label"],
                "resting_key": json.dumps(rest_m, sort_keys=True) if rest_m else None,
                "rating": _trace_entry(path, tm["rating"]),
            })
    return out


def load_dataset(root) -> list[Session]:
    """All session directories under ``root``, sorted by name."""
    return [load_session(path) for path in session_dirs(root)]
