"""IIR preprocessing filters held as cascades of second-order sections.

Butterworth designs are computed here (analog prototype, band transform,
bilinear transform with pre-warping).  Elliptic designs are not designed
in-tree; they are read from coefficient files, one section per line::

    b0 b1 b2 a1 a2

with ``a0`` normalised to 1.  ``#`` starts a comment; ``# key: value``
comment lines are kept as design metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.signal

from .signals import SignalTrace


class FilterError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BiquadCascade:
    """Second-order sections as rows ``(b0, b1, b2, a1, a2)``."""

    sections: np.ndarray
    design_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sec = np.atleast_2d(np.asarray(self.sections, dtype=float))
        if sec.ndim != 2 or sec.shape[1] != 5 or sec.shape[0] == 0:
            raise FilterError("sections must be a non-empty (n, 5) array")
        if not np.all(np.isfinite(sec)):
            raise FilterError("non-finite filter coefficient")
        for i, (_, _, _, a1, a2) in enumerate(sec):
            if np.any(np.abs(np.roots([1.0, a1, a2])) >= 1.0):
                raise FilterError(f"unstable section {i}: a1={a1:g}, a2={a2:g}")
        sec.setflags(write=False)
        object.__setattr__(self, "sections", sec)

    @property
    def order(self) -> int:
        """Total filter order (number of poles)."""
        return int(sum(2 if a2 != 0 else (1 if a1 != 0 else 0)
                       for _, _, _, a1, a2 in self.sections))

    def as_sos(self) -> np.ndarray:
        """Six-column ``(b0 b1 b2 1 a1 a2)`` layout used by scipy."""
        b = self.sections[:, :3]
        a = np.column_stack([np.ones(len(self.sections)), self.sections[:, 3:]])
        return np.hstack([b, a])

    def response(self, freqs_hz, sample_rate_hz: float | None = None) -> np.ndarray:
        """Complex frequency response at ``freqs_hz``."""
        fs = sample_rate_hz or self.design_meta.get("sample_rate_hz")
        if fs is None:
            raise FilterError("sample rate unknown; pass sample_rate_hz")
        z1 = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / fs)
        z2 = z1 * z1
        h = np.ones_like(z1)
        for b0, b1, b2, a1, a2 in self.sections:
            h = h * (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
        return h

    def gain_db(self, freqs_hz, sample_rate_hz: float | None = None) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.response(freqs_hz, sample_rate_hz)))


def _bilinear_zpk(z, p, k, fs):
    fs2 = 2.0 * fs
    degree = len(p) - len(z)
    zd = (fs2 + z) / (fs2 - z)
    pd = (fs2 + p) / (fs2 - p)
    zd = np.concatenate([zd, -np.ones(degree)])
    kd = k * np.real(np.prod(fs2 - z) / np.prod(fs2 - p))
    return zd, pd, kd


def _pair_sections(zd, pd):
    """Group conjugate pole pairs with two zeros each."""
    cplx = [p for p in pd if np.imag(p) > 1e-12]
    real = sorted([np.real(p) for p in pd if abs(np.imag(p)) <= 1e-12])
    zeros = sorted(np.real(zd))  # digital zeros of these designs are all real (+-1)
    # conjugate pairs first, farthest from the unit circle first
    cplx.sort(key=lambda p: abs(p))
    rows = []
    for p in cplx:
        za, zb = zeros.pop(0), zeros.pop()
        rows.append([1.0, -(za + zb), za * zb, -2.0 * np.real(p), abs(p) ** 2])
    while len(real) >= 2:
        pa, pb = real.pop(0), real.pop(0)
        za, zb = zeros.pop(0), zeros.pop()
        rows.append([1.0, -(za + zb), za * zb, -(pa + pb), pa * pb])
    if real:
        pa = real.pop()
        za = zeros.pop()
        rows.append([1.0, -za, 0.0, -pa, 0.0])
    return np.array(rows)


def design_butterworth(kind: str, cutoffs_hz, order: int,
                       sample_rate_hz: float) -> BiquadCascade:
    """Butterworth lowpass or bandpass as a biquad cascade.

    ``order`` is the prototype order; a bandpass design has ``2 * order`` poles.
    The passband gain is normalised to exactly 1 at DC (lowpass) or at the
    geometric centre frequency (bandpass).
    """
    cut = np.atleast_1d(np.asarray(cutoffs_hz, dtype=float))
    fs = float(sample_rate_hz)
    nyq = fs / 2.0
    if not 1 <= int(order) <= 12 or int(order) != order:
        raise FilterError(f"order must be an integer in [1, 12], got {order}")
    order = int(order)
    if np.any(cut <= 0):
        raise FilterError("cutoffs must be positive")
    if np.any(cut >= nyq):
        raise FilterError(f"cutoff {cut.max():g} Hz >= Nyquist ({nyq:g} Hz)")

    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    warped = 2.0 * fs * np.tan(np.pi * cut / fs)

    if kind == "lowpass":
        if cut.size != 1:
            raise FilterError("lowpass takes one cutoff")
        p = warped[0] * proto
        z = np.array([])
        gain = warped[0] ** order
        ref_hz = 0.0
    elif kind == "bandpass":
        if cut.size != 2:
            raise FilterError("bandpass takes two cutoffs")
        if cut[0] >= cut[1]:
            raise FilterError("bandpass needs low cutoff < high cutoff")
        bw = warped[1] - warped[0]
        w0 = np.sqrt(warped[0] * warped[1])
        half = proto * bw / 2.0
        root = np.sqrt(half ** 2 - w0 ** 2)
        p = np.concatenate([half + root, half - root])
        z = np.zeros(order)
        gain = bw ** order
        ref_hz = fs / np.pi * np.arctan(w0 / (2.0 * fs))
    else:
        raise FilterError(f"unsupported filter kind {kind!r}")

    zd, pd, _ = _bilinear_zpk(z, p, gain, fs)
    rows = _pair_sections(zd, pd)
    meta = {"kind": kind, "family": "butterworth", "cutoffs_hz": cut.tolist(),
            "order": order, "sample_rate_hz": fs}
    # unit gain per section at the reference frequency; replaces the analytic gain
    z1 = np.exp(-2j * np.pi * ref_hz / fs)
    for i, (b0, b1, b2, a1, a2) in enumerate(rows.copy()):
        g = abs((b0 + b1 * z1 + b2 * z1 ** 2) / (1 + a1 * z1 + a2 * z1 ** 2))
        rows[i, :3] /= g
    return BiquadCascade(rows, meta)


def load_sos_file(path) -> BiquadCascade:
    """Read a cascade from a coefficient text file."""
    meta: dict = {"source": str(path)}
    rows = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        body, _, comment = line.partition("#")
        if comment and ":" in comment and not body.strip():
            key, _, value = comment.partition(":")
            meta[key.strip()] = _parse_meta(value.strip())
        if not body.strip():
            continue
        parts = body.replace(",", " ").split()
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise FilterError(f"{path}:{lineno}: malformed row {line!r}") from None
        if len(vals) != 5:
            raise FilterError(f"{path}:{lineno}: expected 5 numbers, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise FilterError(f"{path}: no second-order sections found")
    return BiquadCascade(np.array(rows), meta)


def _parse_meta(value: str):
    try:
        return float(value)
    except ValueError:
        return value


def write_sos_file(cascade: BiquadCascade, path, comments: dict | None = None) -> None:
    meta = {**cascade.design_meta, **(comments or {})}
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    for row in cascade.sections:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def shipped_elliptic(sample_rate_hz: float = 1000.0) -> BiquadCascade:
    """Reference 5-45 Hz elliptic ECG bandpass shipped with the package."""
    name = f"ecg_elliptic_5_45_fs{int(round(sample_rate_hz))}.sos"
    ref = resources.files("affectfusion") / "data" / name
    if not ref.is_file():
        raise FilterError(f"no shipped elliptic coefficients for {sample_rate_hz:g} Hz")
    with resources.as_file(ref) as p:
        return load_sos_file(p)


def filtfilt(cascade: BiquadCascade, trace: SignalTrace) -> SignalTrace:
    """Zero-phase forward-backward filtering of every channel.

    Edges are extended by odd reflection over ``3 * order`` samples and the
    recursion starts from steady-state conditions.
    """
    fs = cascade.design_meta.get("sample_rate_hz")
    if fs is not None and abs(float(fs) - trace.sample_rate_hz) > 1e-9:
        raise FilterError(
            f"filter designed for {fs:g} Hz applied to {trace.sample_rate_hz:g} Hz trace"
        )
    padlen = 3 * cascade.order
    if trace.n_samples <= padlen:
        raise FilterError(
            f"trace too short: {trace.n_samples} samples, need > {padlen}"
        )
    out = scipy.signal.sosfiltfilt(cascade.as_sos(), trace.samples, axis=1,
                                   padtype="odd", padlen=padlen)
    return trace.replace(out)
