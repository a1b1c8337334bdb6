"""Aligned sliding windows over all five modalities.

Every modality uses its own window length but the same start times, so the
per-modality feature series have equal length and can be fused entrywise.
The start grid has one common hop; the overlap of each modality follows
from it (``1 - hop / window``) rather than being prescribed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import physio
from .face import FACE_FEATURES, HEAD_FEATURES
from .signals import MODALITIES, SignalTrace, TrialRecord, common_interval


class TrialTooShort(ValueError):
    pass


def _default_windows() -> dict[str, float]:
    return {"face": 5.0, "head": 5.0, "ecg": 5.0, "eda": 20.0, "resp": 30.0}


@dataclass(frozen=True)
class WindowPlan:
    """Window lengths per modality plus either a hop or a window count."""

    window_s: dict[str, float] = field(default_factory=_default_windows)
    hop_s: float | None = 2.5
    n_windows: int | None = None
    min_windows: int = 10
    ecg_supplementary: bool = True
    bartlett_s: float = 1.0
    scr_min_amplitude: float = 0.01
    resp_prominence_frac: float = 0.1
    resp_min_spacing_s: float = 1.0

    @property
    def longest(self) -> float:
        return max(self.window_s.values())

    def grid(self, t0: float, t1: float) -> tuple[np.ndarray, float]:
        """Common window starts within ``[t0, t1]`` and the hop used."""
        span = t1 - t0
        if span < self.longest:
            raise TrialTooShort(
                f"trial of {span:g} s is shorter than the {self.longest:g} s window")
        if self.n_windows is not None:
            n = int(self.n_windows)
            hop = (span - self.longest) / (n - 1) if n > 1 else 0.0
        else:
            hop = float(self.hop_s)
            n = int(np.floor((span - self.longest) / hop + 1e-9)) + 1
        return t0 + hop * np.arange(n), hop

    def overlap(self, modality: str, hop: float) -> float:
        return 1.0 - hop / self.window_s[modality]


@dataclass(frozen=True, eq=False)
class FeatureWindowSeries:
    modality: str
    window_s: float
    hop_s: float
    vectors: np.ndarray  # (N, d)
    feature_names: tuple[str, ...]
    window_starts_s: np.ndarray  # (N,)
    window_index: np.ndarray  # position of each kept window on the full grid

    @property
    def overlap(self) -> float:
        return 1.0 - self.hop_s / self.window_s

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True, eq=False)
class PhysioEvents:
    qrs: physio.QrsAnnotation
    scrs: list[physio.ScrEvent]


def detect_events(traces: dict[str, SignalTrace], plan: WindowPlan) -> PhysioEvents:
    return PhysioEvents(
        physio.detect_qrs(traces["ecg"]),
        physio.detect_scr(traces["eda"], plan.bartlett_s, plan.scr_min_amplitude),
    )


def _mean_features(trace: SignalTrace, window) -> np.ndarray:
    seg = trace.segment(*window)
    if seg.shape[1] == 0 or not np.all(np.isfinite(seg)):
        raise physio.InvalidWindow("missing frames in window")
    return seg.mean(axis=1)


def feature_names(modality: str, plan: WindowPlan) -> tuple[str, ...]:
    return {
        "face": FACE_FEATURES,
        "head": HEAD_FEATURES,
        "ecg": physio.ECG_FEATURES if plan.ecg_supplementary else physio.ECG_FEATURES[:8],
        "eda": physio.EDA_FEATURES,
        "resp": physio.RESP_FEATURES,
    }[modality]


def windowize(traces: dict[str, SignalTrace], face_feats: SignalTrace,
              head_feats: SignalTrace, plan: WindowPlan = WindowPlan(),
              events: PhysioEvents | None = None) -> dict[str, FeatureWindowSeries]:
    """Aligned feature series for face, head, ecg, eda and resp.

    ``traces`` holds the preprocessed ``ecg``, ``eda`` and ``resp`` traces
    (a :class:`TrialRecord` is accepted too).  A window that is invalid in any
    modality is removed from all of them.
    """
    if isinstance(traces, TrialRecord):
        traces = traces.traces
    physio_traces = {k: traces[k] for k in ("ecg", "eda", "resp")}
    span_traces = dict(physio_traces, face=face_feats, head=head_feats)
    t0, t1 = common_interval(span_traces)
    starts, hop = plan.grid(t0, t1)
    if events is None:
        events = detect_events(physio_traces, plan)

    def extract(modality, window):
        if modality == "face":
            return _mean_features(face_feats, window)
        if modality == "head":
            return _mean_features(head_feats, window)
        if modality == "ecg":
            return physio.ecg_features(events.qrs, window, plan.ecg_supplementary)
        if modality == "eda":
            return physio.eda_features(traces["eda"], events.scrs, window)
        return physio.resp_features(traces["resp"], window, plan.resp_prominence_frac,
                                    plan.resp_min_spacing_s)

    rows = {m: [] for m in MODALITIES}
    kept = []
    for i, s in enumerate(starts):
        try:
            vecs = {m: extract(m, (s, s + plan.window_s[m])) for m in MODALITIES}
        except physio.InvalidWindow:
            continue
        kept.append(i)
        for m in MODALITIES:
            rows[m].append(vecs[m])
    if len(kept) < plan.min_windows:
        raise TrialTooShort(
            f"trial too short: {len(kept)} valid windows, need {plan.min_windows}")
    kept = np.array(kept)
    return {
        m: FeatureWindowSeries(m, plan.window_s[m], hop, np.array(rows[m]),
                               feature_names(m, plan), starts[kept], kept)
        for m in MODALITIES
    }
