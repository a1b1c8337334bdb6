import numpy as np
import pytest
import scipy.signal
from hypothesis import given, settings, strategies as st

from affectfusion import filters
from affectfusion.filters import BiquadCascade, FilterError
from affectfusion.signals import SignalTrace

FS = 1000.0


def _trace(x, fs=FS):
    return SignalTrace.from_signal(x, fs)


def test_butterworth_lowpass_20hz_cutoff():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    assert abs(lp.gain_db(20.0)[()] + 3.0103) < 0.1


def test_butterworth_lowpass_unit_dc_gain():
    lp = filters.design_butterworth("lowpass", 1.0, 2, FS)
    assert abs(lp.response(0.0)[()]) == pytest.approx(1.0, abs=1e-12)


def test_butterworth_bandpass_shape():
    bp = filters.design_butterworth("bandpass", [5.0, 45.0], 4, FS)
    assert bp.gain_db(0.0)[()] < -40.0
    assert bp.gain_db(15.0)[()] > -1.0
    for f in (5.0, 45.0):
        assert abs(bp.gain_db(f)[()] + 3.0103) < 0.1


@pytest.mark.parametrize("order", [1, 2, 3, 4, 7, 12])
def test_butterworth_matches_scipy(order):
    ours = filters.design_butterworth("lowpass", 20.0, order, FS)
    ref = scipy.signal.butter(order, 20.0, fs=FS, output="sos")
    f = np.linspace(0, 200, 401)
    _, h = scipy.signal.sosfreqz(ref, worN=f, fs=FS)
    assert np.allclose(np.abs(ours.response(f)), np.abs(h), atol=1e-9)


def test_butterworth_passband_monotone():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    mag = np.abs(lp.response(np.linspace(0.0, 20.0, 500)))
    assert np.all(np.diff(mag) <= 1e-12)


@pytest.mark.parametrize("kind, cutoffs, order, msg", [
    ("lowpass", 600.0, 4, "Nyquist"),
    ("bandpass", [45.0, 5.0], 4, "low cutoff"),
    ("bandpass", [5.0, 500.0], 4, "Nyquist"),
    ("lowpass", 20.0, 0, "order"),
    ("lowpass", 20.0, 13, "order"),
    ("highpass", 20.0, 2, "unsupported"),
])
def test_butterworth_rejects(kind, cutoffs, order, msg):
    with pytest.raises(FilterError, match=msg):
        filters.design_butterworth(kind, cutoffs, order, FS)


def test_design_meta_recorded():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    assert lp.design_meta["kind"] == "lowpass"
    assert lp.design_meta["sample_rate_hz"] == FS
    assert lp.order == 4


def test_shipped_elliptic_response():
    ell = filters.shipped_elliptic(1000.0)
    assert ell.gain_db(1.0)[()] < -30.0
    band = ell.gain_db(np.linspace(10.0, 40.0, 301))
    assert band.max() - band.min() <= 1.0


def test_shipped_elliptic_250hz_available():
    ell = filters.shipped_elliptic(250.0)
    assert ell.gain_db(1.0)[()] < -30.0


def test_shipped_elliptic_unknown_rate():
    with pytest.raises(FilterError, match="no shipped"):
        filters.shipped_elliptic(333.0)


def test_unstable_section_rejected(tmp_path):
    path = tmp_path / "bad.sos"
    path.write_text("1 0 0 -2.5 1.6\n")
    with pytest.raises(FilterError, match="unstable section"):
        filters.load_sos_file(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.sos"
    path.write_text("")
    with pytest.raises(FilterError):
        filters.load_sos_file(path)


def test_malformed_row_rejected(tmp_path):
    path = tmp_path / "bad.sos"
    path.write_text("1 0 0 0.1\n")
    with pytest.raises(FilterError, match="expected 5"):
        filters.load_sos_file(path)
    path.write_text("1 0 zero 0.1 0.2\n")
    with pytest.raises(FilterError, match="malformed"):
        filters.load_sos_file(path)


def test_sos_file_round_trip(tmp_path):
    bp = filters.design_butterworth("bandpass", [5.0, 45.0], 4, FS)
    path = tmp_path / "bp.sos"
    filters.write_sos_file(bp, path, {"note": "test"})
    back = filters.load_sos_file(path)
    assert np.array_equal(back.sections, bp.sections)
    assert back.design_meta["sample_rate_hz"] == FS


def test_filtfilt_zero_input():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    out = filters.filtfilt(lp, _trace(np.zeros(500)))
    assert np.all(out.signal == 0.0)


def test_filtfilt_dc_passes():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    out = filters.filtfilt(lp, _trace(np.full(3000, 2.5)))
    assert np.allclose(out.signal, 2.5, atol=1e-9)


def test_filtfilt_stopband():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    t = np.arange(5000) / FS
    x = np.sin(2 * np.pi * 50.0 * t)
    y = filters.filtfilt(lp, _trace(x)).signal
    core = slice(500, -500)
    assert np.sqrt(np.mean(y[core] ** 2)) < 0.05 * np.sqrt(np.mean(x[core] ** 2))


def test_filtfilt_too_short():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    with pytest.raises(FilterError):
        filters.filtfilt(lp, _trace(np.zeros(12)))


def test_filtfilt_keeps_length_and_time():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    tr = SignalTrace(np.random.default_rng(0).normal(size=(2, 700)), FS, ("a", "b"), 3.0)
    out = filters.filtfilt(lp, tr)
    assert out.samples.shape == tr.samples.shape
    assert out.start_time_s == 3.0
    assert out.channel_labels == ("a", "b")


def test_filtfilt_zero_phase():
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    t = np.arange(4000) / FS
    pulse = np.exp(-0.5 * ((t - 2.0) / 0.05) ** 2)
    y = filters.filtfilt(lp, _trace(pulse)).signal
    xc = np.correlate(y, pulse, mode="full")
    assert int(np.argmax(xc)) - (len(pulse) - 1) == 0


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_filtfilt_linear(a, b, seed):
    lp = filters.design_butterworth("lowpass", 20.0, 4, FS)
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 400))
    lhs = filters.filtfilt(lp, _trace(a * x + b * y)).signal
    rhs = a * filters.filtfilt(lp, _trace(x)).signal + b * filters.filtfilt(lp, _trace(y)).signal
    scale = max(np.abs(rhs).max(), 1e-12)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale + 1e-12


@settings(max_examples=40, deadline=None)
@given(order=st.integers(1, 12), cutoff=st.floats(0.5, 200.0))
def test_designed_sections_stable(order, cutoff):
    lp = filters.design_butterworth("lowpass", cutoff, order, FS)
    for _, _, _, a1, a2 in lp.sections:
        assert np.all(np.abs(np.roots([1.0, a1, a2])) < 1.0)
    assert abs(lp.gain_db(cutoff)[()] + 3.0103) < 0.1


def test_cascade_validation():
    with pytest.raises(FilterError):
        BiquadCascade(np.zeros((0, 5)))
    with pytest.raises(FilterError):
        BiquadCascade(np.array([[1.0, 0, 0, np.nan, 0]]))
