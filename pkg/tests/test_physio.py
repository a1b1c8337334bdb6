import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affectfusion import filters, physio, synth
from affectfusion.physio import InvalidWindow, NoQrsError, ScrEvent
from affectfusion.signals import SignalTrace


def ecg_filtered(trace):
    return filters.filtfilt(filters.shipped_elliptic(trace.sample_rate_hz), trace)


def eda_filtered(trace):
    lp = filters.design_butterworth("lowpass", 1.0, 2, trace.sample_rate_hz)
    return filters.filtfilt(lp, trace)


def match_peaks(truth, found, tol_s):
    """Greedy one-to-one matching; returns (true positives, fp, fn)."""
    used = np.zeros(len(found), dtype=bool)
    tp = 0
    for t in truth:
        k = np.searchsorted(found, t)
        best = None
        for j in (k - 1, k):
            if 0 <= j < len(found) and not used[j] and abs(found[j] - t) <= tol_s:
                if best is None or abs(found[j] - t) < abs(found[best] - t):
                    best = j
        if best is not None:
            used[best] = True
            tp += 1
    return tp, int((~used).sum()), len(truth) - tp


# --- ECG -------------------------------------------------------------------

def test_qrs_clean_60bpm_exact():
    ecg, truth = synth.synth_ecg(60.0, 60.0, 0.0, np.inf, seed=0)
    ann = physio.detect_qrs(ecg_filtered(ecg))
    assert len(ann.r_peaks_s) == 60
    assert np.max(np.abs(ann.r_peaks_s - truth)) <= 1.0 / ecg.sample_rate_hz


def test_qrs_noisy_sensitivity():
    ecg, truth = synth.synth_ecg(300.0, 75.0, 40.0, 10.0, seed=1)
    ann = physio.detect_qrs(ecg_filtered(ecg))
    tp, fp, fn = match_peaks(truth, ann.r_peaks_s, 0.05)
    assert tp / (tp + fn) >= 0.95
    assert tp / (tp + fp) >= 0.95


def test_qrs_annotation_ordering():
    ecg, _ = synth.synth_ecg(30.0, 70.0, 30.0, 20.0, seed=2)
    ann = physio.detect_qrs(ecg_filtered(ecg))
    assert np.all(np.diff(ann.r_peaks_s) > 0)
    assert np.all(ann.q_points_s < ann.r_peaks_s)
    assert np.all(ann.r_peaks_s < ann.s_points_s)
    assert np.all(ann.s_points_s - ann.q_points_s <= 0.12 + 1e-9)
    assert np.all(ann.qrs_areas > 0)


def test_qrs_zero_trace():
    with pytest.raises(NoQrsError, match="no QRS found"):
        physio.detect_qrs(SignalTrace.from_signal(np.zeros(10_000), 1000.0))


def test_qrs_needs_learning_phase():
    with pytest.raises(ValueError, match="5 s"):
        physio.detect_qrs(SignalTrace.from_signal(np.zeros(4000), 1000.0))


def test_qrs_respects_start_time():
    ecg, truth = synth.synth_ecg(20.0, 60.0, seed=0)
    shifted = ecg_filtered(ecg).shifted(100.0)
    ann = physio.detect_qrs(shifted)
    assert np.allclose(ann.r_peaks_s, truth + 100.0, atol=1e-3)


@pytest.mark.parametrize("fs", [250.0, 1000.0])
def test_qrs_rr_mean_hrv(fs):
    ecg, _ = synth.synth_ecg(120.0, 75.0, 40.0, np.inf, seed=3, sample_rate_hz=fs)
    ann = physio.detect_qrs(ecg_filtered(ecg))
    feats = physio.ecg_features(ann, (0.0, 120.0))
    assert abs(feats[0] - 800.0) <= 15.0


def test_hrv_constant_intervals():
    f = physio.hrv_features([1000.0, 1000.0, 1000.0], [0.1, 0.1, 0.1, 0.1])
    assert f[0] == 1000.0
    assert f[1] == 0.0
    assert f[3] == 0.0
    assert f[4] == 0.0 and f[5] == 0.0
    assert f[8] == pytest.approx(60.0)
    assert f[9] == 4.0


def test_hrv_pair_counts():
    f = physio.hrv_features([800.0, 900.0], [0.1, 0.1, 0.1])
    assert f[0] == 850.0
    assert f[3] == pytest.approx(100.0)
    assert f[4] == 0.0
    assert f[5] == 1.0


def test_hrv_without_supplementary():
    assert len(physio.hrv_features([800.0, 900.0], [0.1] * 3, supplementary=False)) == 8


def test_ecg_features_window_selection():
    ann = physio.QrsAnnotation(np.arange(10.0), np.arange(10.0) - 0.03,
                               np.arange(10.0) + 0.03, np.full(10, 0.2))
    f = physio.ecg_features(ann, (2.0, 6.0))
    assert f[9] == 4.0
    assert f[0] == 1000.0
    with pytest.raises(InvalidWindow):
        physio.ecg_features(ann, (2.0, 4.0))


@settings(max_examples=60, deadline=None)
@given(rr=st.lists(st.floats(300.0, 2000.0), min_size=1, max_size=40))
def test_hrv_nonnegative(rr):
    f = physio.hrv_features(rr, np.ones(len(rr) + 1))
    assert f[1] >= 0 and f[2] >= 0 and f[3] >= 0 and f[7] >= 0
    assert f[4] + f[5] <= max(len(rr) - 1, 0)


# --- EDA -------------------------------------------------------------------

def test_scr_constant_trace():
    assert physio.detect_scr(SignalTrace.from_signal(np.full(5000, 2.0), 100.0)) == []


def test_scr_three_separated():
    times = [10.0, 25.0, 40.0]
    eda = synth.synth_eda(60.0, times, [0.5, 0.5, 0.5], seed=4)
    events = physio.detect_scr(eda_filtered(eda))
    assert len(events) == 3
    assert np.all(np.abs(np.array([e.start_s for e in events]) - times) <= 0.5)


def test_scr_below_floor():
    eda = synth.synth_eda(30.0, [10.0], [0.005], seed=0, noise_sd_us=0.0)
    assert physio.detect_scr(eda_filtered(eda)) == []


def test_scr_merged_when_overlapping():
    eda = synth.synth_eda(40.0, [10.0, 10.5], [0.5, 0.5], seed=0, noise_sd_us=0.0)
    events = physio.detect_scr(eda_filtered(eda))
    assert len(events) == 1
    assert abs(events[0].start_s - 10.0) <= 0.5
    assert events[0].amplitude > 0.5


def test_scr_event_invariants():
    times = np.arange(5.0, 115.0, 11.0)
    eda = synth.synth_eda(120.0, times, np.linspace(0.1, 1.0, len(times)), seed=5)
    for e in physio.detect_scr(eda_filtered(eda)):
        assert 0 < e.rise_time_s < e.duration_s
        assert e.amplitude > 0


def test_scr_timing_matches_construction():
    eda = synth.synth_eda(60.0, [10.0, 30.0], [0.5, 0.5], seed=0, noise_sd_us=0.0,
                          drift_us_per_min=0.0)
    f = physio.eda_features(eda, physio.detect_scr(eda), (0.0, 60.0))
    assert f[1] == 2.0
    assert f[2] == pytest.approx(4.0, abs=0.06)
    assert f[3] == pytest.approx(0.5, abs=0.002)
    assert f[4] == pytest.approx(1.0, abs=0.002)
    # the 1 Hz lowpass smears the 1 s rise; timings stay within half a second
    g = physio.eda_features(eda, physio.detect_scr(eda_filtered(eda)), (0.0, 60.0))
    assert g[1] == 2.0
    assert np.all(np.abs(g[2:] - [4.0, 0.5, 1.0]) <= [0.5, 0.01, 0.5])


def test_eda_features_empty_window():
    eda = SignalTrace.from_signal(np.full(3000, 2.0), 100.0)
    assert np.array_equal(physio.eda_features(eda, [], (0.0, 20.0)), [2.0, 0, 0, 0, 0])


def test_eda_features_start_convention():
    eda = SignalTrace.from_signal(np.zeros(6000), 100.0)
    ev = [ScrEvent(19.9, 21.0, 0.3, 5.0)]
    assert physio.eda_features(eda, ev, (0.0, 20.0))[1] == 1.0
    assert physio.eda_features(eda, ev, (20.0, 40.0))[1] == 0.0
    edge = [ScrEvent(20.0, 21.0, 0.3, 5.0)]
    assert physio.eda_features(eda, edge, (0.0, 20.0))[1] == 0.0
    assert physio.eda_features(eda, edge, (20.0, 40.0))[1] == 1.0


def test_eda_features_outside_trace():
    eda = SignalTrace.from_signal(np.zeros(100), 10.0)
    with pytest.raises(InvalidWindow):
        physio.eda_features(eda, [], (50.0, 70.0))


# --- respiration -----------------------------------------------------------

def test_resp_sinusoid():
    fs = 100.0
    t = np.arange(int(60 * fs)) / fs
    tr = SignalTrace.from_signal(np.sin(2 * np.pi * 0.25 * t), fs)
    f = physio.resp_features(tr, (0.0, 60.0))
    assert f[0] == pytest.approx(4000.0, abs=1.0)
    assert f[2] == pytest.approx(50.0, abs=0.5)
    assert f[3] == pytest.approx(50.0, abs=0.5)


def test_resp_sawtooth_asymmetry():
    fs = 100.0
    t = np.arange(int(60 * fs)) / fs
    phase = (t / 4.0) % 1.0
    x = np.where(phase < 0.75, phase / 0.75, (1.0 - phase) / 0.25)
    f = physio.resp_features(SignalTrace.from_signal(x, fs), (0.0, 60.0))
    assert f[2] == pytest.approx(75.0, abs=2.0)


def test_resp_constant_trace():
    tr = SignalTrace.from_signal(np.ones(3000), 100.0)
    with pytest.raises(InvalidWindow, match="insufficient peaks"):
        physio.resp_features(tr, (0.0, 30.0))


def test_resp_generator_interval():
    tr, peaks = synth.synth_resp(60.0, 15.0, 0.4, seed=0, sample_rate_hz=250.0)
    f = physio.resp_features(tr, (0.0, 60.0))
    assert f[0] == pytest.approx(4000.0, abs=10.0)
    assert f[2] == pytest.approx(40.0, abs=1.0)
    assert f[1] == pytest.approx(1.0, abs=0.01)


@settings(max_examples=25, deadline=None)
@given(rate=st.floats(8.0, 24.0), frac=st.floats(0.3, 0.7), seed=st.integers(0, 1000))
def test_resp_inhale_share_tracks_construction(rate, frac, seed):
    tr, _ = synth.synth_resp(60.0, rate, frac, seed=seed, sample_rate_hz=100.0)
    f = physio.resp_features(tr, (0.0, 60.0))
    assert f[2] == pytest.approx(100 * frac, abs=2.0)
    assert f[2] + f[3] == pytest.approx(100.0)
