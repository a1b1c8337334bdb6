"""Pipeline configuration.

Nested dataclasses loaded from JSON.  Unknown keys are rejected at every
level, values are validated before any computation, and the canonical JSON
form is hashed so every artifact can name the exact settings behind it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .windowing import WindowPlan, _default_windows


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    ecg_filter: str = "elliptic"  # shipped elliptic SOS, or "butterworth"
    ecg_band_hz: tuple[float, float] = (5.0, 45.0)
    ecg_order: int = 4
    eda_cutoff_hz: float = 1.0
    eda_order: int = 2
    resp_cutoff_hz: float = 20.0
    resp_order: int = 4


@dataclass(frozen=True)
class WindowConfig:
    window_s: dict = field(default_factory=_default_windows)
    hop_s: float | None = 2.5
    n_windows: int | None = None
    min_windows: int = 10
    ecg_supplementary: bool = True
    bartlett_s: float = 1.0
    scr_min_amplitude: float = 0.01
    resp_prominence_frac: float = 0.1
    resp_min_spacing_s: float = 1.0

    def plan(self) -> WindowPlan:
        return WindowPlan(dict(self.window_s), self.hop_s, self.n_windows,
                          self.min_windows, self.ecg_supplementary, self.bartlett_s,
                          self.scr_min_amplitude, self.resp_prominence_frac,
                          self.resp_min_spacing_s)


@dataclass(frozen=True)
class FaceConfig:
    principal_point: tuple[float, float] = (960.0, 540.0)
    focal_px: float | None = 3000.0
    ref_depth: float = 10.0
    max_gap_s: float = 0.5
    reject_factor: float = 3.0
    reject_floor_px: float = 0.5
    ridge: float = 1e-3
    max_iter: int = 10


@dataclass(frozen=True)
class EmbeddingConfig:
    m: int = 3
    tau: int = 1
    rate: float | None = 0.10
    epsilon: float | None = None
    standardize: bool = True
    per_feature: bool = False


@dataclass(frozen=True)
class MetricsConfig:
    schema_version: int = 1
    diversity_segments: int = 4


@dataclass(frozen=True)
class ModelConfig:
    svm_C: float = 1.0
    svr_C: float = 1.0
    svr_epsilon: float = 0.05
    n_permutations: int = 10_000
    random_draws: int = 100


@dataclass(frozen=True)
class StudyConfig:
    """Synthetic study generated by the ``synth`` stage."""

    n_subjects: int = 12
    trials_per_class: int = 2
    trial_s: float = 270.0
    resting_s: float = 270.0
    physio_rate_hz: float = 250.0
    landmark_fps: float = 25.0
    hr_shift_bpm: float = 10.0
    scr_rate_factor: float = 2.0
    mouth_variance_factor: float = 1.5


@dataclass(frozen=True)
class PipelineConfig:
    filters: FilterConfig = field(default_factory=FilterConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    face: FaceConfig = field(default_factory=FaceConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    seed: int = 0
    baseline_correction: bool = True

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def hash(self, *sections: str) -> str:
        """Hash of the whole config, or of the named top-level sections."""
        d = self.to_dict()
        if sections:
            d = {k: d[k] for k in sections}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> PipelineConfig:
        return from_dict(_merge(self.to_dict(), changes))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _merge(base: dict, changes: dict) -> dict:
    out = dict(base)
    for k, v in changes.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "window_s":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config keys at {path or 'top level'}: {unknown}")
    kwargs = {}
    for name, value in data.items():
        sub = _SECTIONS.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{path}{name}.")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTIONS = {
    (PipelineConfig, "filters"): FilterConfig,
    (PipelineConfig, "windows"): WindowConfig,
    (PipelineConfig, "face"): FaceConfig,
    (PipelineConfig, "embedding"): EmbeddingConfig,
    (PipelineConfig, "metrics"): MetricsConfig,
    (PipelineConfig, "model"): ModelConfig,
    (PipelineConfig, "study"): StudyConfig,
}


def from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "")


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return from_dict(data)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(cfg: PipelineConfig) -> None:
    e, w, f, mo, st = cfg.embedding, cfg.windows, cfg.filters, cfg.model, cfg.study
    _require(isinstance(e.m, int) and e.m >= 1, f"embedding.m must be an integer >= 1, got {e.m!r}")
    _require(isinstance(e.tau, int) and e.tau >= 1, f"embedding.tau must be an integer >= 1, got {e.tau!r}")
    _require((e.rate is None) != (e.epsilon is None),
             "embedding needs exactly one of rate and epsilon")
    _require(e.rate is None or 0 < e.rate <= 1, "embedding.rate must lie in (0, 1]")
    _require(e.epsilon is None or e.epsilon >= 0, "embedding.epsilon must be >= 0")
    _require(set(w.window_s) == {"face", "head", "ecg", "eda", "resp"},
             "windows.window_s needs face, head, ecg, eda and resp")
    _require(all(v > 0 for v in w.window_s.values()), "window lengths must be positive")
    _require((w.hop_s is None) != (w.n_windows is None),
             "windows needs exactly one of hop_s and n_windows")
    _require(w.hop_s is None or w.hop_s > 0, "windows.hop_s must be positive")
    _require(w.n_windows is None or w.n_windows >= 2, "windows.n_windows must be >= 2")
    _require(w.min_windows >= e.m + 1, "windows.min_windows must exceed embedding.m")
    _require(f.ecg_filter in ("elliptic", "butterworth"),
             "filters.ecg_filter must be elliptic or butterworth")
    for name in ("ecg_order", "eda_order", "resp_order"):
        v = getattr(f, name)
        _require(isinstance(v, int) and 1 <= v <= 12, f"filters.{name} must be in [1, 12]")
    _require(len(f.ecg_band_hz) == 2 and f.ecg_band_hz[0] < f.ecg_band_hz[1],
             "filters.ecg_band_hz must be (low, high) with low < high")
    fc = cfg.face
    _require(fc.max_gap_s >= 0 and fc.reject_factor > 0 and fc.ridge >= 0,
             "face: max_gap_s >= 0, reject_factor > 0 and ridge >= 0 required")
    _require(mo.svm_C > 0 and mo.svr_C > 0, "model C values must be positive")
    _require(mo.svr_epsilon >= 0, "model.svr_epsilon must be >= 0")
    _require(mo.n_permutations >= 0 and mo.random_draws >= 1,
             "model.n_permutations >= 0 and model.random_draws >= 1")
    _require(cfg.metrics.schema_version == 1, "only metric schema version 1 exists")
    _require(cfg.metrics.diversity_segments >= 2, "metrics.diversity_segments must be >= 2")
    _require(st.n_subjects >= 2 and st.trials_per_class >= 1,
             "study needs >= 2 subjects and >= 1 trial per class")
    _require(st.trial_s >= 30 and st.resting_s >= 30, "study segments must be >= 30 s")
    _require(isinstance(cfg.seed, int), "seed must be an integer")
