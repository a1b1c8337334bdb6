"""Event detection and per-window features for ECG, EDA and respiration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import filters
from .signals import SignalTrace

ECG_FEATURES = ("rr_mean_ms", "rr_sd_ms", "rr_diff_sd_ms", "rmssd_ms",
                "rr_first_exceeds_50ms", "rr_second_exceeds_50ms",
                "qrs_area_mean", "qrs_area_sd", "hr_mean_bpm", "n_beats")
EDA_FEATURES = ("eda_mean", "scr_count", "scr_duration_mean", "scr_amplitude_mean",
                "scr_rise_time_mean")
RESP_FEATURES = ("resp_interval_ms", "resp_peak_height", "resp_inhale_pct",
                 "resp_exhale_pct")


class InvalidWindow(ValueError):
    """A window lacks the events its features need; it is dropped downstream."""


class NoQrsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QrsAnnotation:
    r_peaks_s: np.ndarray
    q_points_s: np.ndarray
    s_points_s: np.ndarray
    qrs_areas: np.ndarray  # integral of |ecg| from Q to S, mV*s


@dataclass(frozen=True)
class ScrEvent:
    start_s: float
    peak_s: float
    amplitude: float
    duration_s: float

    @property
    def rise_time_s(self) -> float:
        return self.peak_s - self.start_s


# --- ECG -------------------------------------------------------------------

def _qrs_energy(x: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Bandpass 5-15 Hz, five-point derivative, square, 150 ms integration."""
    band = filters.design_butterworth("bandpass", [5.0, 15.0], 2, fs)
    bp = scipy.signal.sosfiltfilt(band.as_sos(), x, padtype="odd",
                                  padlen=min(3 * band.order, len(x) - 1))
    deriv = np.convolve(bp, np.array([1.0, 2.0, 0.0, -2.0, -1.0]) * fs / 8.0,
                        mode="same")
    width = max(int(round(0.15 * fs)), 1)
    mwi = np.convolve(deriv ** 2, np.ones(width) / width, mode="same")
    return mwi, np.abs(deriv)


def _pan_tompkins(mwi: np.ndarray, slope: np.ndarray, fs: float) -> list[int]:
    """Adaptive dual-threshold peak classification with search-back."""
    refractory = int(0.2 * fs)
    cand, _ = scipy.signal.find_peaks(mwi, distance=max(refractory, 1))
    if cand.size == 0:
        return []
    learn = mwi[: int(2 * fs)]
    spki = 0.25 * learn.max()
    npki = 0.5 * learn.mean()
    thr1 = npki + 0.25 * (spki - npki)
    qrs: list[int] = []
    noise: list[int] = []
    rr_recent: list[float] = []
    last_slope = 0.0
    half = int(0.075 * fs)

    def peak_slope(i):
        return slope[max(i - half, 0): i + half + 1].max()

    for i in cand:
        if qrs and rr_recent:
            rr_avg = np.mean(rr_recent[-8:])
            if i - qrs[-1] > 1.66 * rr_avg:
                thr2 = 0.5 * thr1
                back = [j for j in noise
                        if qrs[-1] + refractory < j < i and mwi[j] > thr2]
                if back:
                    j = max(back, key=lambda k: mwi[k])
                    rr_recent.append(j - qrs[-1])
                    qrs.append(j)
                    noise = [k for k in noise if k > j]
                    spki = 0.25 * mwi[j] + 0.75 * spki
                    thr1 = npki + 0.25 * (spki - npki)
        pk = mwi[i]
        if pk > thr1:
            s = peak_slope(i)
            if qrs and i - qrs[-1] < int(0.36 * fs) and s < 0.5 * last_slope:
                npki = 0.125 * pk + 0.875 * npki
                noise.append(i)
            else:
                if qrs:
                    rr_recent.append(i - qrs[-1])
                qrs.append(i)
                last_slope = s
                spki = 0.125 * pk + 0.875 * spki
        else:
            npki = 0.125 * pk + 0.875 * npki
            noise.append(i)
        thr1 = npki + 0.25 * (spki - npki)
    return qrs


def _walk_to_minimum(x: np.ndarray, start: int, step: int, limit: int) -> int:
    i = start
    for _ in range(limit):
        j = i + step
        if j < 0 or j >= len(x) or x[j] >= x[i]:
            break
        i = j
    return i


def detect_qrs(ecg: SignalTrace) -> QrsAnnotation:
    """Pan-Tompkins style QRS detection on an already filtered ECG.

    R is the signal maximum within +-75 ms of each accepted energy peak; Q and
    S are the nearest local minima before and after R, at most 60 ms away.
    """
    x = ecg.signal
    fs = ecg.sample_rate_hz
    if ecg.duration_s < 5.0:
        raise ValueError("ECG shorter than the 5 s threshold learning phase")
    if not np.all(np.isfinite(x)) or np.std(x) < 1e-12:
        raise NoQrsError("no QRS found")
    mwi, slope = _qrs_energy(x, fs)
    marks = _pan_tompkins(mwi, slope, fs)
    if not marks:
        raise NoQrsError("no QRS found")
    half = int(round(0.075 * fs))
    r_idx = []
    for m in marks:
        lo, hi = max(m - half, 0), min(m + half + 1, len(x))
        r = lo + int(np.argmax(x[lo:hi]))
        if not r_idx or r - r_idx[-1] > int(0.2 * fs):
            r_idx.append(r)
    r_idx = np.array(r_idx)
    lim = int(round(0.06 * fs))
    q_idx = np.array([_walk_to_minimum(x, r, -1, lim) for r in r_idx])
    s_idx = np.array([_walk_to_minimum(x, r, 1, lim) for r in r_idx])
    areas = np.array([np.trapezoid(np.abs(x[q:s + 1]), dx=1.0 / fs)
                      for q, s in zip(q_idx, s_idx)])
    t0 = ecg.start_time_s
    return QrsAnnotation(t0 + r_idx / fs, t0 + q_idx / fs, t0 + s_idx / fs, areas)


def hrv_features(rr_ms, qrs_areas, n_beats: int | None = None,
                 supplementary: bool = True) -> np.ndarray:
    """Interval statistics for one window (population SDs throughout).

    ``rr_first_exceeds_50ms`` counts adjacent pairs whose first interval is
    more than 50 ms longer than the second; ``rr_second_exceeds_50ms`` the
    reverse.
    """
    rr = np.asarray(rr_ms, dtype=float)
    areas = np.asarray(qrs_areas, dtype=float)
    diff = np.diff(rr)  # second minus first
    feats = [
        rr.mean(),
        rr.std(),
        diff.std() if diff.size else 0.0,
        np.sqrt(np.mean(diff ** 2)) if diff.size else 0.0,
        float(np.sum(-diff > 50.0)),
        float(np.sum(diff > 50.0)),
        areas.mean() if areas.size else 0.0,
        areas.std() if areas.size else 0.0,
    ]
    if supplementary:
        feats += [60000.0 / rr.mean(),
                  float(n_beats if n_beats is not None else len(rr) + 1)]
    return np.array(feats)


def ecg_features(ann: QrsAnnotation, window: tuple[float, float],
                 supplementary: bool = True) -> np.ndarray:
    """Ten features (eight with ``supplementary=False``) from beats in
    ``[start, end)``."""
    t0, t1 = window
    sel = (ann.r_peaks_s >= t0) & (ann.r_peaks_s < t1)
    peaks = ann.r_peaks_s[sel]
    if len(peaks) < 3:
        raise InvalidWindow(f"{len(peaks)} R peaks in window, need 3")
    rr = np.diff(peaks) * 1000.0
    return hrv_features(rr, ann.qrs_areas[sel], len(peaks), supplementary)


# --- EDA -------------------------------------------------------------------

def _bartlett_smooth(x: np.ndarray, length: int) -> np.ndarray:
    if length < 3:
        return x
    if length % 2 == 0:
        length += 1
    win = np.bartlett(length)
    win /= win.sum()
    pad = length // 2
    padded = np.pad(x, pad, mode="edge")
    return scipy.signal.oaconvolve(padded, win, mode="valid")


def detect_scr(eda: SignalTrace, bartlett_s: float = 1.0,
               min_amplitude: float = 0.01) -> list[ScrEvent]:
    """SCRs from zero crossings of the Bartlett-smoothed derivative.

    Each negative-to-positive crossing followed by a positive-to-negative
    crossing bounds one candidate; its peak is the signal maximum up to the
    second crossing and its start the latest signal minimum between the
    first crossing and the peak (the foot of the rise; smoothing moves the
    crossing itself ahead of the true onset).  Responses whose onsets fall inside
    a single rising stretch (no return of the smoothed derivative to <= 0)
    are reported as one merged event.  Candidates below ``min_amplitude`` are
    discarded.  Duration runs from start to half recovery (first sample after
    the peak at or below start + amplitude / 2), searched up to the next
    event's start or the end of the trace.
    """
    x = eda.signal
    fs = eda.sample_rate_hz
    if x.size < 3 or np.ptp(x) == 0:
        return []
    d = _bartlett_smooth(np.gradient(x) * fs, int(round(bartlett_s * fs)))
    pos = d > 0
    up = np.flatnonzero(~pos[:-1] & pos[1:]) + 1
    down = np.flatnonzero(pos[:-1] & ~pos[1:]) + 1
    cands = []
    for u in up:
        k = np.searchsorted(down, u)
        if k == len(down):
            break
        end = down[k]
        peak = u + int(np.argmax(x[u:end + 1]))
        rise = x[u:peak + 1]
        foot = peak - int(np.argmin(rise[::-1]))  # latest minimum
        amp = x[peak] - x[foot]
        if amp >= min_amplitude:
            cands.append((foot, peak, amp))
    events = []
    t0 = eda.start_time_s
    for i, (u, peak, amp) in enumerate(cands):
        stop = cands[i + 1][0] if i + 1 < len(cands) else len(x)
        tail = x[peak:stop]
        below = np.flatnonzero(tail <= x[u] + 0.5 * amp)
        end = peak + int(below[0]) if below.size else stop
        events.append(ScrEvent(t0 + u / fs, t0 + peak / fs, float(amp),
                               (end - u) / fs))
    return events


def eda_features(eda: SignalTrace, events: list[ScrEvent],
                 window: tuple[float, float]) -> np.ndarray:
    """Signal mean, SCR count and mean SCR duration/amplitude/rise time.

    An SCR belongs to the window containing its start (``start <= s < end``);
    the three SCR means are 0 for windows without SCRs.
    """
    t0, t1 = window
    seg = eda.segment(t0, t1)[0]
    if seg.size == 0:
        raise InvalidWindow("window lies outside the EDA trace")
    inside = [e for e in events if t0 <= e.start_s < t1]
    if not inside:
        return np.array([seg.mean(), 0.0, 0.0, 0.0, 0.0])
    return np.array([
        seg.mean(),
        float(len(inside)),
        np.mean([e.duration_s for e in inside]),
        np.mean([e.amplitude for e in inside]),
        np.mean([e.rise_time_s for e in inside]),
    ])


# --- respiration -----------------------------------------------------------

def resp_peaks(x: np.ndarray, fs: float, prominence_frac: float = 0.1,
               min_spacing_s: float = 1.0) -> np.ndarray:
    span = np.ptp(x) if x.size else 0.0
    if span == 0:
        return np.array([], dtype=int)
    peaks, _ = scipy.signal.find_peaks(x, prominence=prominence_frac * span,
                                       distance=max(int(min_spacing_s * fs), 1))
    return peaks


def resp_features(resp: SignalTrace, window: tuple[float, float],
                  prominence_frac: float = 0.1, min_spacing_s: float = 1.0
                  ) -> np.ndarray:
    """Breath interval (ms), peak height and % rising / falling samples.

    Cycles run peak to peak; the height of a cycle is its closing peak above
    the trough inside it, and the rising share is trough-to-peak samples over
    the cycle length.
    """
    t0, t1 = window
    x = resp.segment(t0, t1)[0]
    fs = resp.sample_rate_hz
    peaks = resp_peaks(x, fs, prominence_frac, min_spacing_s)
    if len(peaks) < 2:
        raise InvalidWindow("insufficient peaks")
    heights, rising = [], []
    for a, b in zip(peaks[:-1], peaks[1:]):
        trough = a + int(np.argmin(x[a:b + 1]))
        heights.append(x[b] - x[trough])
        rising.append((b - trough) / (b - a))
    inhale = 100.0 * float(np.mean(rising))
    return np.array([np.mean(np.diff(peaks)) / fs * 1000.0, float(np.mean(heights)),
                     inhale, 100.0 - inhale])
