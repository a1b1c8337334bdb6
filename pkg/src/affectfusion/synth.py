"""Synthetic signal generators with exact ground truth.

They stand in for private recordings: every generator is deterministic for
a given seed and returns the event times or curves it was built from, so
detectors and feature extractors can be scored against construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import face as facemod
from .signals import LandmarkFrame, SignalTrace

DEFAULT_RIG = facemod.CameraRig(principal_point=(960.0, 540.0), focal_px=3000.0,
                                ref_depth=10.0)

# (offset from R in s, amplitude in mV, gaussian width in s)
_ECG_WAVES = (
    ("P", -0.20, 0.15, 0.025),
    ("Q", -0.028, -0.18, 0.010),
    ("R", 0.0, 1.10, 0.011),
    ("S", 0.028, -0.18, 0.010),
    ("T", 0.30, 0.30, 0.050),
)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def synth_rr_intervals(duration_s: float, mean_hr_bpm: float, hrv_sd_ms: float,
                       rng: np.random.Generator) -> np.ndarray:
    """R-R intervals in ms from a normal truncated at +-3 SD."""
    mean_rr = 60000.0 / mean_hr_bpm
    n = int(np.ceil(duration_s * 1000.0 / mean_rr)) + 2
    if hrv_sd_ms <= 0:
        return np.full(n, mean_rr)
    return stats.truncnorm.rvs(-3.0, 3.0, loc=mean_rr, scale=hrv_sd_ms, size=n,
                               random_state=rng)


def add_noise(clean: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    if not np.isfinite(snr_db):
        return clean
    power = np.mean((clean - clean.mean()) ** 2)
    sd = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    return clean + rng.normal(0.0, sd, clean.shape)


def render_ecg(r_peaks_s: np.ndarray, rr_ms: np.ndarray, n_samples: int,
               sample_rate_hz: float, gains=None) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate_hz
    out = np.zeros(n_samples)
    gains = np.ones(len(r_peaks_s)) if gains is None else gains
    for tr, rr, g in zip(r_peaks_s, rr_ms, gains):
        # P/T spacing shrinks with the interval; QRS keeps its shape
        stretch = min(1.0, np.sqrt(rr / 1000.0))
        lo = np.searchsorted(t, tr - 0.45)
        hi = np.searchsorted(t, tr + 0.6)
        seg = t[lo:hi] - tr
        for name, off, amp, width in _ECG_WAVES:
            if name in ("P", "T"):
                off *= stretch
            out[lo:hi] += g * amp * np.exp(-0.5 * ((seg - off) / width) ** 2)
    return out


def synth_ecg(duration_s: float, mean_hr_bpm: float, hrv_sd_ms: float = 0.0,
              noise_snr_db: float = np.inf, seed=0, sample_rate_hz: float = 1000.0,
              hr_program=None, hrv_program=None, amplitude_program=None):
    """Templated P-QRS-T beats at sampled R-R intervals plus white noise.

    The first R peak sits half an interval after the start.  The optional
    programs are callables of the time of the previous beat:
    ``hr_program`` gives a bpm offset added to ``mean_hr_bpm``,
    ``hrv_program`` a factor on each interval's deviation from the mean and
    ``amplitude_program`` a gain on the beat waveform.
    Returns ``(trace, r_peak_times_s)``.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if not 30.0 <= mean_hr_bpm <= 220.0:
        raise ValueError("mean_hr_bpm must lie in [30, 220]")
    rng = _rng(seed)
    rr = synth_rr_intervals(duration_s, mean_hr_bpm, hrv_sd_ms, rng)
    peaks, rrs, gains = [], [], []
    t = None
    i = 0
    while True:
        if i == len(rr):
            rr = np.concatenate([rr, synth_rr_intervals(duration_s, mean_hr_bpm,
                                                        hrv_sd_ms, rng)])
        interval = rr[i]
        t_prev = 0.0 if t is None else t
        if hrv_program is not None:
            mean_rr = 60000.0 / mean_hr_bpm
            interval = mean_rr + float(hrv_program(t_prev)) * (interval - mean_rr)
        if hr_program is not None:
            bpm = 60000.0 / interval + float(hr_program(t_prev))
            interval = 60000.0 / np.clip(bpm, 30.0, 220.0)
        t = interval / 2000.0 if t is None else t + interval / 1000.0
        if t >= duration_s:
            break
        peaks.append(t)
        rrs.append(interval)
        gains.append(1.0 if amplitude_program is None else float(amplitude_program(t_prev)))
        i += 1
    peaks = np.array(peaks)
    n = int(round(duration_s * sample_rate_hz))
    clean = render_ecg(peaks, np.array(rrs), n, sample_rate_hz, np.array(gains))
    noisy = add_noise(clean, noise_snr_db, rng)
    return SignalTrace.from_signal(noisy, sample_rate_hz, "ecg"), peaks


def scr_shape(u: np.ndarray, rise_s: float, half_recovery_s: float) -> np.ndarray:
    """Unit-amplitude response: raised-cosine rise, exponential recovery."""
    out = np.zeros_like(u)
    rising = (u >= 0) & (u < rise_s)
    out[rising] = 0.5 * (1.0 - np.cos(np.pi * u[rising] / rise_s))
    after = u >= rise_s
    out[after] = np.exp(-(u[after] - rise_s) * np.log(2.0) / half_recovery_s)
    return out


def synth_eda(duration_s: float, scr_times, scr_amplitudes, tonic_level: float = 2.0,
              seed=0, sample_rate_hz: float = 1000.0, rise_s: float = 1.0,
              half_recovery_s: float = 3.0, drift_us_per_min: float = -0.03,
              noise_sd_us: float = 0.002) -> SignalTrace:
    """Tonic level with linear drift plus SCRs starting at ``scr_times``.

    Each SCR reaches its amplitude ``rise_s`` after onset and decays to half
    of it ``half_recovery_s`` later.  The default drift is a slow decline, as
    in habituating skin conductance.
    """
    times = np.asarray(scr_times, dtype=float)
    amps = np.asarray(scr_amplitudes, dtype=float)
    if times.shape != amps.shape:
        raise ValueError("scr_times and scr_amplitudes differ in length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("scr_times must be strictly increasing")
    if times.size and (times[0] < 0 or times[-1] >= duration_s):
        raise ValueError("scr_times must lie within the trace")
    rng = _rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    x = tonic_level + drift_us_per_min * t / 60.0
    for t0, a in zip(times, amps):
        lo = np.searchsorted(t, t0)
        x[lo:] += a * scr_shape(t[lo:] - t0, rise_s, half_recovery_s)
    if noise_sd_us > 0:
        x = x + rng.normal(0.0, noise_sd_us, n)
    return SignalTrace.from_signal(x, sample_rate_hz, "eda")


def poisson_times(duration_s: float, rate_per_min: float, rng: np.random.Generator,
                  min_gap_s: float = 0.0, margin_s: float = 0.0) -> np.ndarray:
    """Event onsets from a Poisson process with a dead time ``min_gap_s``."""
    out = []
    t = margin_s
    if rate_per_min <= 0:
        return np.array([])
    while True:
        t += min_gap_s + rng.exponential(60.0 / rate_per_min)
        if t >= duration_s - margin_s:
            return np.array(out)
        out.append(t)


def synth_resp(duration_s: float, rate_bpm: float = 15.0, inhale_fraction: float = 0.4,
               amplitude: float = 1.0, rate_sd: float = 0.0, amplitude_sd: float = 0.0,
               seed=0, sample_rate_hz: float = 1000.0, noise_sd: float = 0.0,
               rate_program=None, amplitude_program=None, inhale_program=None):
    """Breathing cycles: cosine rise over ``inhale_fraction`` of each cycle,
    cosine fall over the rest.

    ``rate_program`` (t -> added breaths/min), ``amplitude_program``
    (t -> amplitude factor) and ``inhale_program`` (t -> added inhale
    fraction) are evaluated at the start of each cycle.
    Returns ``(trace, peak_times_s)``.
    """
    rng = _rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    x = np.zeros(n)
    start = -rng.uniform(0.0, 60.0 / rate_bpm)
    peaks = []
    while start < duration_s:
        rate = rate_bpm + rate_sd * rng.standard_normal()
        gain = 1.0 + amplitude_sd * rng.standard_normal()
        if rate_program is not None:
            rate += float(rate_program(max(start, 0.0)))
        if amplitude_program is not None:
            gain *= float(amplitude_program(max(start, 0.0)))
        frac = inhale_fraction
        if inhale_program is not None:
            frac = float(np.clip(frac + inhale_program(max(start, 0.0)), 0.1, 0.9))
        period = 60.0 / max(rate, 2.0)
        amp = amplitude * max(gain, 0.1)
        rise = frac * period
        lo, mid, hi = np.searchsorted(t, [start, start + rise, start + period])
        x[lo:mid] = amp * 0.5 * (1 - np.cos(np.pi * (t[lo:mid] - start) / rise))
        x[mid:hi] = amp * 0.5 * (1 + np.cos(np.pi * (t[mid:hi] - start - rise)
                                             / (period - rise)))
        if 0 <= start + rise < duration_s:
            peaks.append(start + rise)
        start += period
    if noise_sd > 0:
        x = x + rng.normal(0.0, noise_sd, n)
    return SignalTrace.from_signal(x, sample_rate_hz, "resp"), np.array(peaks)


# --- landmarks -------------------------------------------------------------

def keyframes(times, values):
    """Piecewise-linear schedule through ``(time, value-vector)`` keyframes."""
    tk = np.asarray(times, dtype=float)
    vk = np.atleast_2d(np.asarray(values, dtype=float))
    if len(tk) != len(vk):
        raise ValueError("keyframe times and values differ in length")

    def schedule(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([np.interp(t, tk, vk[:, j]) for j in range(vk.shape[1])])

    return schedule


def _evaluate(program, t: np.ndarray, width: int) -> np.ndarray:
    if program is None:
        return np.zeros((len(t), width))
    if callable(program):
        out = np.asarray(program(t), dtype=float)
    else:
        out = np.asarray(program, dtype=float)
    out = out.reshape(len(t), -1)
    if out.shape[1] != width:
        raise ValueError(f"program yields {out.shape[1]} values, expected {width}")
    return out


@dataclass(frozen=True, eq=False)
class LandmarkTruth:
    times: np.ndarray
    alphas: np.ndarray  # (n, K)
    poses: np.ndarray  # (n, 6): tx ty tz roll pitch yaw (radians)
    face_features: np.ndarray  # (n, 6)
    head_features: np.ndarray  # (n, 6), angles in degrees


def synth_landmarks(duration_s: float, fps: float, au_program=None,
                    head_pose_program=None, shape_model: facemod.ShapeModel | None = None,
                    seed=0, rig: facemod.CameraRig = DEFAULT_RIG, noise_px: float = 0.0,
                    dropout: float = 0.0):
    """Render shape-coefficient and head-pose programs through an affine camera.

    ``au_program`` gives K shape coefficients and ``head_pose_program`` six
    pose values ``(tx, ty, tz, roll, pitch, yaw)`` per frame time; each may
    be a callable of the time array, an array, or ``None`` (all zero).
    Returns ``(frames, LandmarkTruth)``.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    model = shape_model or facemod.load_shape_model()
    rng = _rng(seed)
    n = int(round(duration_s * fps))
    t = np.arange(n) / fps
    alphas = _evaluate(au_program, t, model.n_components)
    poses = _evaluate(head_pose_program, t, 6)
    shapes = facemod.synthesize_shape(model, alphas)
    frames = []
    head = np.empty((n, 6))
    for i in range(n):
        pose = facemod.HeadPose(tuple(poses[i, :3]), tuple(poses[i, 3:]), 1.0)
        cam = facemod.compose_camera(pose, rig)
        pts = cam.project(shapes[i])
        if noise_px > 0:
            pts = pts + rng.normal(0.0, noise_px, pts.shape)
        valid = not (dropout > 0 and rng.uniform() < dropout)
        frames.append(LandmarkFrame(pts if valid else np.full_like(pts, np.nan),
                                    float(t[i]), valid))
        head[i] = pose.as_features()
    truth = LandmarkTruth(t, alphas, poses,
                          facemod.face_features(facemod.frontalize_shapes(shapes)), head)
    return frames, truth
