"""In-memory processing of one recording segment, trace to metric vectors.

The stages mirror the command-line pipeline: preprocessing filters, physio
event detection, landmark fitting, aligned windowing, recurrence plots and
network metrics.  Each function takes the relevant config section only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import filters, netmetrics, physio, recurrence
from .config import EmbeddingConfig, FaceConfig, FilterConfig, MetricsConfig, WindowConfig
from .face import CameraRig, FaceTrackResult, ShapeModel, track_landmarks
from .signals import MODALITIES, SignalTrace
from .windowing import FeatureWindowSeries, PhysioEvents, windowize

# feature sets evaluated by the inference stage, in table order
SINGLE_SETS = ("ECG", "EDA", "Resp", "Face", "Head")
FEATURE_SETS = SINGLE_SETS + ("Facial", "Physio", "Fusion")
SET_MODALITIES = {
    "ECG": ("ecg",), "EDA": ("eda",), "Resp": ("resp",), "Face": ("face",),
    "Head": ("head",), "Facial": ("face", "head"), "Physio": ("ecg", "eda", "resp"),
    "Fusion": MODALITIES,
}


def ecg_cascade(cfg: FilterConfig, fs: float) -> filters.BiquadCascade:
    if cfg.ecg_filter == "elliptic":
        return filters.shipped_elliptic(fs)
    return filters.design_butterworth("bandpass", list(cfg.ecg_band_hz), cfg.ecg_order, fs)


def preprocess(traces: dict[str, SignalTrace], cfg: FilterConfig) -> dict[str, SignalTrace]:
    """Zero-phase filtered ECG, EDA and respiration."""
    ecg, eda, resp = traces["ecg"], traces["eda"], traces["resp"]
    return {
        "ecg": filters.filtfilt(ecg_cascade(cfg, ecg.sample_rate_hz), ecg),
        "eda": filters.filtfilt(filters.design_butterworth(
            "lowpass", [cfg.eda_cutoff_hz], cfg.eda_order, eda.sample_rate_hz), eda),
        "resp": filters.filtfilt(filters.design_butterworth(
            "lowpass", [cfg.resp_cutoff_hz], cfg.resp_order, resp.sample_rate_hz), resp),
    }


def detect_events(filtered: dict[str, SignalTrace], cfg: WindowConfig) -> PhysioEvents:
    return PhysioEvents(
        physio.detect_qrs(filtered["ecg"]),
        physio.detect_scr(filtered["eda"], cfg.bartlett_s, cfg.scr_min_amplitude),
    )


def rig_of(cfg: FaceConfig) -> CameraRig:
    return CameraRig(tuple(cfg.principal_point), cfg.focal_px, cfg.ref_depth)


def fit_face(landmarks: SignalTrace, cfg: FaceConfig, model: ShapeModel) -> FaceTrackResult:
    return track_landmarks(landmarks, model, rig_of(cfg), cfg.max_gap_s, cfg.reject_factor,
                           cfg.reject_floor_px, cfg.ridge, cfg.max_iter)


def modality_plot(series: FeatureWindowSeries, cfg: EmbeddingConfig):
    """Recurrence plot of one modality (joint over features in per-feature mode)."""
    kwargs = {"rate": cfg.rate} if cfg.rate is not None else {"epsilon": cfg.epsilon}
    if cfg.per_feature and series.vectors.shape[1] > 1:
        trajs = recurrence.embed_per_feature(series, cfg.m, cfg.tau, cfg.standardize)
        joint = recurrence.joint_recurrence_plot(
            [recurrence.recurrence_plot(t, **kwargs) for t in trajs])
        eps = float(np.mean([p.epsilon for p in joint.members]))
        return recurrence.RecurrencePlot(joint.matrix, eps, series.modality, cfg.rate,
                                         meta={"per_feature_epsilon":
                                               [p.epsilon for p in joint.members]})
    traj = recurrence.embed(series, cfg.m, cfg.tau, cfg.standardize)
    return recurrence.recurrence_plot(traj, **kwargs)


def segment_plots(series: dict[str, FeatureWindowSeries], cfg: EmbeddingConfig):
    """Per-modality plots and the joint plot over all five modalities."""
    plots = {m: modality_plot(series[m], cfg) for m in MODALITIES}
    joint = recurrence.joint_recurrence_plot([plots[m] for m in MODALITIES])
    return plots, joint


def segment_metrics(plots: dict, joint, cfg: MetricsConfig) -> dict[str, np.ndarray]:
    """Metric vector of every feature set.

    Single modalities use their own plot's network, ``Fusion`` the joint
    plot's network, and the ``Facial`` / ``Physio`` sets concatenate the
    single-modality vectors with equal weight.
    """
    seg = cfg.diversity_segments
    single = {m: netmetrics.metric_vector(recurrence.to_network(plots[m]).adjacency, seg)
              for m in MODALITIES}
    out = {}
    for name in FEATURE_SETS:
        if name == "Fusion":
            out[name] = netmetrics.metric_vector(recurrence.to_network(joint).adjacency, seg)
        else:
            out[name] = np.concatenate([single[m] for m in SET_MODALITIES[name]])
    return out


@dataclass(frozen=True, eq=False)
class SegmentResult:
    series: dict[str, FeatureWindowSeries]
    plots: dict
    joint: recurrence.JointRecurrencePlot
    metrics: dict[str, np.ndarray]
    face: FaceTrackResult


def process_segment(traces: dict[str, SignalTrace], cfg, model: ShapeModel) -> SegmentResult:
    """Run every stage on one segment held in memory."""
    filtered = preprocess(traces, cfg.filters)
    events = detect_events(filtered, cfg.windows)
    track = fit_face(traces["landmarks"], cfg.face, model)
    series = windowize(filtered, track.face, track.head, cfg.windows.plan(), events)
    plots, joint = segment_plots(series, cfg.embedding)
    return SegmentResult(series, plots, joint, segment_metrics(plots, joint, cfg.metrics),
                         track)
