"""Core data model: sampled traces, landmark frames, trials and sessions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_LANDMARKS = 68
RATING_RANGE = (0.0, 50.0)
# largest analysis window (respiration); every trace must cover at least this
MIN_TRACE_S = 30.0

MODALITIES = ("face", "head", "ecg", "eda", "resp")
TRACE_KINDS = ("ecg", "eda", "resp", "landmarks")


class DataError(ValueError):
    """Raised when recorded or generated data violates the data model."""


@dataclass(frozen=True, eq=False)
class SignalTrace:
    """Uniformly sampled multi-channel trace.

    ``samples`` has shape ``(n_channels, n_samples)``.
    """

    samples: np.ndarray
    sample_rate_hz: float
    channel_labels: tuple[str, ...]
    start_time_s: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise DataError("samples must be 2-D (channels x time)")
        labels = tuple(self.channel_labels)
        if samples.shape[0] != len(labels):
            raise DataError(
                f"{samples.shape[0]} channels but {len(labels)} channel labels"
            )
        if not self.sample_rate_hz > 0:
            raise DataError("sample_rate_hz must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel_labels", labels)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "start_time_s", float(self.start_time_s))

    @classmethod
    def from_signal(cls, signal, sample_rate_hz, label="signal", start_time_s=0.0):
        return cls(np.asarray(signal, dtype=float)[None, :], sample_rate_hz,
                   (label,), start_time_s)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def signal(self) -> np.ndarray:
        """The single channel of a one-channel trace."""
        if self.n_channels != 1:
            raise DataError("trace has more than one channel")
        return self.samples[0]

    @property
    def times(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.n_samples) / self.sample_rate_hz

    def replace(self, samples) -> SignalTrace:
        return SignalTrace(samples, self.sample_rate_hz, self.channel_labels,
                           self.start_time_s)

    def shifted(self, dt: float) -> SignalTrace:
        return SignalTrace(self.samples, self.sample_rate_hz, self.channel_labels,
                           self.start_time_s + dt)

    def index_of(self, t: float) -> int:
        """Index of the first sample at or after time ``t``."""
        return int(np.ceil((t - self.start_time_s) * self.sample_rate_hz - 1e-9))

    def segment(self, t0: float, t1: float) -> np.ndarray:
        """Samples with ``t0 <= t < t1``, shape (channels, n)."""
        i0 = max(self.index_of(t0), 0)
        i1 = min(self.index_of(t1), self.n_samples)
        return self.samples[:, i0:max(i1, i0)]


@dataclass(frozen=True, eq=False)
class LandmarkFrame:
    points_2d: np.ndarray
    timestamp_s: float
    valid: bool = True

    def __post_init__(self):
        pts = np.asarray(self.points_2d, dtype=float)
        if self.valid and pts.shape != (N_LANDMARKS, 2):
            raise DataError(f"valid frame needs {N_LANDMARKS} points, got {pts.shape}")
        object.__setattr__(self, "points_2d", pts)


def frames_to_trace(frames, fps: float) -> SignalTrace:
    """Pack landmark frames into a 136-channel trace; invalid frames become NaN."""
    data = np.full((len(frames), 2 * N_LANDMARKS), np.nan)
    for i, fr in enumerate(frames):
        if fr.valid:
            data[i] = fr.points_2d.reshape(-1)
    start = frames[0].timestamp_s if frames else 0.0
    return SignalTrace(data.T, fps, landmark_channel_labels(), start)


def trace_to_frames(trace: SignalTrace) -> list[LandmarkFrame]:
    frames = []
    for t, col in zip(trace.times, trace.samples.T):
        ok = bool(np.all(np.isfinite(col)))
        pts = col.reshape(N_LANDMARKS, 2) if ok else np.full((N_LANDMARKS, 2), np.nan)
        frames.append(LandmarkFrame(pts, float(t), ok))
    return frames


def landmark_channel_labels() -> tuple[str, ...]:
    return tuple(f"{ax}{i}" for i in range(N_LANDMARKS) for ax in ("x", "y"))


@dataclass(frozen=True, eq=False)
class TrialRecord:
    subject_id: str
    stimulus_id: str
    valence_label: str
    traces: dict[str, SignalTrace]
    rating_trace: SignalTrace
    resting: dict[str, SignalTrace] | None = None

    def __post_init__(self):
        if self.valence_label not in ("positive", "negative"):
            raise DataError(f"unknown valence label {self.valence_label!r}")
        r = self.rating_trace.samples
        lo, hi = RATING_RANGE
        if r.size and (np.nanmin(r) < lo or np.nanmax(r) > hi):
            raise DataError(
                f"rating out of range [{lo:g}, {hi:g}] in trial {self.stimulus_id}"
            )
        check_coverage(self.traces, f"trial {self.stimulus_id}")
        if self.resting:
            check_coverage(self.resting, f"resting segment of {self.stimulus_id}")

    @property
    def common_interval(self) -> tuple[float, float]:
        return common_interval(self.traces)


def common_interval(traces: dict[str, SignalTrace]) -> tuple[float, float]:
    t0 = max(tr.start_time_s for tr in traces.values())
    t1 = min(tr.start_time_s + tr.duration_s for tr in traces.values())
    return t0, t1


def check_coverage(traces: dict[str, SignalTrace], what: str) -> None:
    if not traces:
        raise DataError(f"{what}: no traces")
    for name, tr in traces.items():
        if tr.duration_s < MIN_TRACE_S:
            raise DataError(
                f"{what}: {name} trace shorter than largest window "
                f"({MIN_TRACE_S:g} s)"
            )
    t0, t1 = common_interval(traces)
    if t1 - t0 < MIN_TRACE_S:
        raise DataError(
            f"{what}: common interval shorter than largest window ({MIN_TRACE_S:g} s)"
        )


@dataclass(frozen=True, eq=False)
class Session:
    subject_id: str
    trials: list[TrialRecord] = field(default_factory=list)

    def __post_init__(self):
        ids = [t.stimulus_id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate trial ids in session {self.subject_id}")
        for t in self.trials:
            if t.subject_id != self.subject_id:
                raise DataError(
                    f"trial {t.stimulus_id} belongs to {t.subject_id}, "
                    f"not {self.subject_id}"
                )

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {"positive": 0, "negative": 0}
        for t in self.trials:
            counts[t.valence_label] += 1
        return counts


def interpolate_gaps(values, sample_rate_hz: float, max_gap_s: float) -> np.ndarray:
    """Linearly fill interior NaN runs of at most ``max_gap_s`` seconds.

    ``values`` is (n_samples,) or (n_samples, n_channels); a sample counts as
    missing when any of its channels is NaN.  Longer runs and runs touching
    either end stay NaN.
    """
    arr = np.array(values, dtype=float)
    flat = arr.ndim == 1
    if flat:
        arr = arr[:, None]
    missing = ~np.all(np.isfinite(arr), axis=1)
    if not missing.any():
        return arr[:, 0] if flat else arr
    arr[missing] = np.nan
    max_run = int(np.floor(max_gap_s * sample_rate_hz + 1e-9))
    edges = np.diff(np.concatenate([[0], missing.astype(int), [0]]))
    starts, stops = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
    for a, b in zip(starts, stops):
        if a == 0 or b == len(arr) or b - a > max_run:
            continue
        w = (np.arange(a, b) - (a - 1)) / (b - (a - 1))
        arr[a:b] = arr[a - 1] + w[:, None] * (arr[b] - arr[a - 1])
    return arr[:, 0] if flat else arr
