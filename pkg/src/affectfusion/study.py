"""Synthetic multi-subject study standing in for the private recordings.

Each subject has trait parameters (heart rate, breathing rate, tonic skin
conductance, expressiveness and, above all, an arousal-event rate) that
hold in the resting segment and in every trial.  Arousal events drive all
modalities together: an SCR, a transient heart-rate rise, a deeper and
faster breath, a mouth and brow movement and a small nod.  The negative
condition raises the heart rate by ``hr_shift_bpm``, multiplies the event
rate by ``scr_rate_factor`` and the mouth-coefficient variance by
``mouth_variance_factor``; the positive condition keeps the resting values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import synth
from .config import StudyConfig
from .face import ShapeModel, load_shape_model
from .signals import Session, SignalTrace, TrialRecord, frames_to_trace

REST_EVENT_RATE = 0.75  # events per minute for a subject with multiplier 1
EVENT_SHAPE = 4.0  # gamma shape of inter-event intervals; 1 would be Poisson
EVENT_RISE_S, EVENT_DECAY_S = 2.0, 15.0
HR_GAIN, HRV_DAMP, ECG_AMP_GAIN = 12.0, 2.0, 0.3  # bpm, -, - per unit arousal
EDA_DRIFT = 0.0  # uS per minute
SCL_GAIN = 0.3  # uS of tonic level per unit arousal
INHALE_GAIN = 0.1  # inhale fraction per unit arousal
RATE_SPREAD = float(np.log(4.0 / 3.0))  # subject event-rate factor is log-uniform on +-this
# storage resolution, like an ADC / detector output
QUANTUM = {"ecg": 1e-4, "eda": 1e-4, "resp": 1e-4, "landmarks": 1e-3, "rating": 1e-2}


@dataclass(frozen=True)
class SubjectTraits:
    subject_id: str
    hr_bpm: float
    hrv_sd_ms: float
    resp_rate_bpm: float
    inhale_fraction: float
    tonic_us: float
    mouth_sd: float
    event_rate_factor: float
    rating_offset: float


def draw_traits(subject_id: str, rng: np.random.Generator) -> SubjectTraits:
    return SubjectTraits(
        subject_id,
        hr_bpm=float(rng.uniform(60, 80)),
        hrv_sd_ms=float(rng.uniform(20, 45)),
        resp_rate_bpm=float(rng.uniform(12, 18)),
        inhale_fraction=float(rng.uniform(0.35, 0.45)),
        tonic_us=float(rng.uniform(1.0, 8.0)),
        mouth_sd=float(rng.uniform(0.4, 0.8)),
        event_rate_factor=float(np.exp(rng.uniform(-RATE_SPREAD, RATE_SPREAD))),
        rating_offset=float(rng.uniform(-5, 5)),
    )


def ou_process(n: int, dt: float, tau: float, sd: float,
               rng: np.random.Generator) -> np.ndarray:
    """Stationary Ornstein-Uhlenbeck samples (exact AR(1) discretisation)."""
    a = np.exp(-dt / tau)
    out = np.empty(n)
    out[0] = rng.normal(0.0, sd)
    shocks = rng.normal(0.0, sd * np.sqrt(1 - a * a), n)
    for i in range(1, n):
        out[i] = a * out[i - 1] + shocks[i]
    return out


def _quantize(trace: SignalTrace, q: float) -> SignalTrace:
    return trace.replace(np.round(trace.samples / q) * q)


def renewal_times(duration_s: float, rate_per_min: float, shape: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Event times with gamma-distributed intervals of the given mean rate,
    started at a random phase."""
    mean = 60.0 / rate_per_min
    n = int(duration_s / mean * 2 + 10)
    gaps = rng.gamma(shape, mean / shape, n)
    t = np.cumsum(gaps) - rng.uniform(0.0, mean)
    while t[-1] < duration_s:
        t = np.concatenate([t, t[-1] + np.cumsum(rng.gamma(shape, mean / shape, n))])
    return t[(t >= 0) & (t < duration_s)]


def arousal_kernel(u: np.ndarray, rise_s: float | None = None,
                   decay_s: float | None = None) -> np.ndarray:
    """Unit-peak difference of exponentials, zero before onset."""
    rise_s = EVENT_RISE_S if rise_s is None else rise_s
    decay_s = EVENT_DECAY_S if decay_s is None else decay_s
    u = np.asarray(u, dtype=float)
    pos = u > 0
    out = np.zeros_like(u)
    out[pos] = np.exp(-u[pos] / decay_s) - np.exp(-u[pos] / rise_s)
    t_peak = np.log(decay_s / rise_s) * rise_s * decay_s / (decay_s - rise_s)
    return out / (np.exp(-t_peak / decay_s) - np.exp(-t_peak / rise_s))


def arousal_program(times, gains):
    """Shared arousal level: sum of event responses, callable on times."""
    times = np.asarray(times, dtype=float)
    gains = np.asarray(gains, dtype=float)

    def program(t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = arousal_kernel(t[:, None] - times[None, :]) @ gains if times.size \
            else np.zeros(len(t))
        return float(out[0]) if scalar else out

    return program


def synth_segment(traits: SubjectTraits, condition: str, duration_s: float,
                  cfg: StudyConfig, rng: np.random.Generator, model: ShapeModel):
    """Traces for one segment; ``condition`` is rest, positive or negative."""
    negative = condition == "negative"
    fs, fps = cfg.physio_rate_hz, cfg.landmark_fps
    rate = REST_EVENT_RATE * traits.event_rate_factor
    if negative:
        rate *= cfg.scr_rate_factor
    # events may start before the segment so that it opens mid-response
    lead = 3.0 * EVENT_DECAY_S
    events = renewal_times(duration_s + lead, rate, EVENT_SHAPE, rng) - lead
    n_ev = len(events)
    gains = rng.uniform(0.7, 1.3, n_ev)
    arousal = arousal_program(events, gains)
    seeds = rng.integers(0, 2**31, size=4)
    hr = traits.hr_bpm + (cfg.hr_shift_bpm if negative else 0.0)
    ecg, r_peaks = synth.synth_ecg(duration_s, hr, traits.hrv_sd_ms, 25.0, int(seeds[0]),
                                   fs, hr_program=lambda t: HR_GAIN * arousal(t),
                                   hrv_program=lambda t: 1.0 / (1.0 + HRV_DAMP * max(arousal(t), 0.0)),
                                   amplitude_program=lambda t: 1.0 + ECG_AMP_GAIN * arousal(t))

    inside = events >= 0
    onsets = events[inside] + rng.uniform(1.0, 2.0, int(inside.sum()))
    keep = onsets < duration_s - 1.0
    eda = synth.synth_eda(duration_s, onsets[keep], 0.5 * gains[inside][keep],
                          traits.tonic_us, int(seeds[1]), fs, drift_us_per_min=EDA_DRIFT)
    eda = eda.replace(eda.samples + SCL_GAIN * arousal(eda.times))

    resp, _ = synth.synth_resp(duration_s, traits.resp_rate_bpm, traits.inhale_fraction,
                               1.0, 0.5, 0.05, int(seeds[2]), fs,
                               0.01,
                               rate_program=lambda t: 5.0 * arousal(t),
                               amplitude_program=lambda t: 1.0 + 0.8 * arousal(t),
                               inhale_program=lambda t: INHALE_GAIN * arousal(t))

    n_frames = int(round(duration_s * fps))
    t = np.arange(n_frames) / fps
    dt = 1.0 / fps
    level = arousal(t)
    mouth_scale = np.sqrt(cfg.mouth_variance_factor) if negative else 1.0
    mouth = mouth_scale * traits.mouth_sd * (
        2.0 * level + 0.3 * ou_process(n_frames, dt, 1.0, 1.0, rng))

    def driven(gain, noise_sd, base=level, tau_s=2.0):
        return gain * base + noise_sd * ou_process(n_frames, dt, tau_s, 1.0, rng)

    # every expression mode and pose axis follows its modality's level
    alphas = np.column_stack([
        mouth,
        driven(1.0, 0.2),
        driven(0.8, 0.2),
        driven(-0.8, 0.2),
        np.full(n_frames, 0.2 * rng.standard_normal()),
    ])
    alphas = np.clip(alphas, -3.5, 3.5)
    poses = np.column_stack([
        driven(0.1, 0.02),
        driven(0.2, 0.02),
        driven(-0.5, 0.05),
        np.radians(driven(3.0, 0.5)),
        np.radians(driven(8.0, 1.0)),
        np.radians(driven(-5.0, 1.0)),
    ])
    frames, _ = synth.synth_landmarks(duration_s, fps, alphas, poses, model, int(seeds[3]),
                                      synth.DEFAULT_RIG, noise_px=0.3, dropout=0.01)
    landmarks = frames_to_trace(frames, fps)
    traces = {"ecg": ecg, "eda": eda, "resp": resp, "landmarks": landmarks}
    traces = {k: _quantize(v, QUANTUM[k]) for k, v in traces.items()}
    truth = {"event_times_s": events.tolist(), "r_peaks_s": r_peaks.tolist(),
             "scr_onsets_s": onsets[keep].tolist(), "condition": condition}
    return traces, truth


def synth_rating(traits: SubjectTraits, condition: str, duration_s: float,
                 rng: np.random.Generator, rate_hz: float = 10.0) -> SignalTrace:
    """Dial trace around a condition-dependent level, with an occasional
    end-of-clip swing."""
    level = (34.0 if condition == "positive" else 16.0) + traits.rating_offset \
        + rng.normal(0, 3)
    n = int(round(duration_s * rate_hz))
    x = level + ou_process(n, 1.0 / rate_hz, 10.0, 3.0, rng)
    if rng.uniform() < 0.3:
        tail = int(0.1 * n)
        x[-tail:] += rng.choice([-1, 1]) * 15.0
    x = np.clip(x, 0.0, 50.0)
    return _quantize(SignalTrace.from_signal(x, rate_hz, "rating"), QUANTUM["rating"])


def generate_subject(subject_id: str, cfg: StudyConfig, seed, model: ShapeModel | None = None):
    """One session with ``2 * trials_per_class`` trials and a shared rest."""
    model = model or load_shape_model()
    rng = np.random.default_rng(seed)
    traits = draw_traits(subject_id, rng)
    rest, rest_truth = synth_segment(traits, "rest", cfg.resting_s, cfg, rng, model)
    labels = ["positive", "negative"] * cfg.trials_per_class
    order = rng.permutation(len(labels))
    trials, truth = [], {"traits": traits.__dict__, "rest": rest_truth, "trials": {}}
    for k, idx in enumerate(order):
        label = labels[idx]
        stim = f"v{k + 1}"
        traces, tr_truth = synth_segment(traits, label, cfg.trial_s, cfg, rng, model)
        rating = synth_rating(traits, label, cfg.trial_s, rng)
        trials.append(TrialRecord(subject_id, stim, label, traces, rating, rest))
        truth["trials"][stim] = tr_truth
    return Session(subject_id, trials), truth


def generate_study(cfg: StudyConfig = StudyConfig(), seed=0):
    """Sessions and ground truth for ``cfg.n_subjects`` subjects."""
    model = load_shape_model()
    seeds = np.random.SeedSequence(seed).spawn(cfg.n_subjects)
    sessions, truth = [], {}
    for i, ss in enumerate(seeds):
        sid = f"s{i + 1:02d}"
        sess, tr = generate_subject(sid, cfg, ss, model)
        sessions.append(sess)
        truth[sid] = tr
    return sessions, truth
