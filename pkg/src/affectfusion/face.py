"""Shape-model fitting, head pose, frontalisation and geometric face features.

Coordinates follow image orientation throughout: x to the right, y down,
z away from the camera.  The 68 landmark indices follow the common iBUG
annotation scheme (jaw 0-16, brows 17-26, nose 27-35, eyes 36-47,
outer lip 48-59, inner lip 60-67; "left"/"right" are the subject's).

Fitting alternates two linear least-squares problems per frame: an affine
camera for the current 3D shape (solved on normalised coordinates), then
ridge-regularised shape coefficients for the current camera.  All frames of
a trace are solved together as stacked small systems.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .signals import N_LANDMARKS, LandmarkFrame, SignalTrace, interpolate_gaps

RIGHT_BROW = np.arange(17, 22)
LEFT_BROW = np.arange(22, 27)
RIGHT_EYE = np.arange(36, 42)
LEFT_EYE = np.arange(42, 48)
RIGHT_BROW_INNER, LEFT_BROW_INNER = 21, 22
RIGHT_LIP_CORNER, LEFT_LIP_CORNER = 48, 54
INNER_LIP_TOP, INNER_LIP_BOTTOM = 62, 66

FACE_FEATURES = ("brow_left_height", "brow_right_height", "brow_inner_distance",
                 "lip_corner_distance", "lip_opening", "lip_corner_height")
HEAD_FEATURES = ("head_tx", "head_ty", "head_tz",
                 "head_roll_deg", "head_pitch_deg", "head_yaw_deg")

RIDGE_LAMBDA = 1e-3
MAX_ALTERNATIONS = 10
RESIDUAL_TOL_PX = 1e-6
ALPHA_CLAMP = 4.0


class FitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ShapeModel:
    """Linear 3D shape model ``S = mean + sum_k alpha_k * stddev_k * component_k``."""

    mean_shape: np.ndarray  # (68, 3)
    components: np.ndarray  # (K, 68 * 3), orthonormal rows
    stddevs: np.ndarray  # (K,)
    mode_names: tuple[str, ...] = ()

    def __post_init__(self):
        mean = np.asarray(self.mean_shape, dtype=float).reshape(N_LANDMARKS, 3)
        comps = np.atleast_2d(np.asarray(self.components, dtype=float))
        sd = np.atleast_1d(np.asarray(self.stddevs, dtype=float))
        if comps.shape[1] != 3 * N_LANDMARKS or comps.shape[0] < 1:
            raise ValueError("components must be (K, 204) with K >= 1")
        if sd.shape != (comps.shape[0],) or np.any(sd <= 0):
            raise ValueError("need one positive stddev per component")
        gram = comps @ comps.T
        if not np.allclose(gram, np.eye(len(comps)), atol=1e-8, rtol=0):
            raise ValueError("components are not orthonormal")
        names = tuple(self.mode_names) or tuple(f"mode{k}" for k in range(len(sd)))
        object.__setattr__(self, "mean_shape", mean)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "stddevs", sd)
        object.__setattr__(self, "mode_names", names)

    @property
    def n_components(self) -> int:
        return len(self.stddevs)

    @property
    def scaled_modes(self) -> np.ndarray:
        """``stddev_k * component_k`` as (K, 68, 3)."""
        return (self.stddevs[:, None] * self.components).reshape(-1, N_LANDMARKS, 3)

    def mode_index(self, name: str) -> int:
        return self.mode_names.index(name)


def synthesize_shape(model: ShapeModel, alphas) -> np.ndarray:
    """3D landmark positions (68, 3) for shape coefficients ``alphas``."""
    a = np.asarray(alphas, dtype=float)
    if a.shape[-1] != model.n_components:
        raise ValueError(
            f"expected {model.n_components} coefficients, got {a.shape[-1]}"
        )
    if np.any(np.abs(a) > ALPHA_CLAMP):
        raise ValueError(f"coefficients must satisfy |alpha| <= {ALPHA_CLAMP:g}")
    return model.mean_shape + np.tensordot(a, model.scaled_modes, axes=(-1, 0))


def save_shape_model(model: ShapeModel, path) -> None:
    """Text format: ``K 68`` header, 68 mean rows, stddev row, K component rows."""
    lines = ["# modes: " + " ".join(model.mode_names),
             f"{model.n_components} {N_LANDMARKS}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in model.mean_shape]
    lines.append(" ".join(repr(float(v)) for v in model.stddevs))
    lines += [" ".join(repr(float(v)) for v in row) for row in model.components]
    Path(path).write_text("\n".join(lines) + "\n")


def load_shape_model(path=None) -> ShapeModel:
    """Load a model file; without a path, the shipped five-mode model."""
    if path is None:
        ref = resources.files("affectfusion") / "data" / "shape_model_k5.txt"
        text = ref.read_text()
    else:
        text = Path(path).read_text()
    names: tuple[str, ...] = ()
    rows = []
    for line in text.splitlines():
        if line.startswith("# modes:"):
            names = tuple(line.split(":", 1)[1].split())
            continue
        if line.strip() and not line.startswith("#"):
            rows.append(line.split())
    k, n = int(rows[0][0]), int(rows[0][1])
    if n != N_LANDMARKS:
        raise ValueError(f"model has {n} landmarks, expected {N_LANDMARKS}")
    mean = np.array(rows[1:1 + n], dtype=float)
    sd = np.array(rows[1 + n], dtype=float)
    comps = np.array(rows[2 + n:2 + n + k], dtype=float)
    return ShapeModel(mean, comps, sd, names)


# --- synthetic model -------------------------------------------------------

def _mean_layout() -> np.ndarray:
    """Averaged 68-point face layout; eye centres one unit apart."""
    pts = np.zeros((N_LANDMARKS, 3))
    psi = np.linspace(0.0, np.pi, 17)
    pts[0:17, 0] = -1.0 * np.cos(psi)
    pts[0:17, 1] = 0.05 + 1.35 * np.sin(psi)
    pts[0:17, 2] = 0.55 * np.abs(np.cos(psi)) + 0.1
    bx = np.linspace(-0.85, -0.2, 5)
    pts[17:22, 0] = bx
    pts[17:22, 1] = -0.32 - 0.1 * np.sin(np.linspace(0.2, np.pi - 0.6, 5))
    pts[22:27, 0] = -bx[::-1]
    pts[22:27, 1] = pts[17:22, 1][::-1]
    pts[27:31, 1] = np.linspace(-0.1, 0.45, 4)
    pts[27:31, 2] = np.linspace(-0.15, -0.45, 4)
    pts[31:36, 0] = np.linspace(-0.2, 0.2, 5)
    pts[31:36, 1] = [0.55, 0.58, 0.6, 0.58, 0.55]
    pts[31:36, 2] = [-0.2, -0.27, -0.3, -0.27, -0.2]
    eye = np.array([[-0.22, 0.0], [-0.08, -0.06], [0.08, -0.06],
                    [0.22, 0.0], [0.08, 0.06], [-0.08, 0.06]])
    pts[36:42, :2] = eye + [-0.5, 0.0]
    pts[42:48, :2] = [[-0.22, 0.0], [-0.08, -0.06], [0.08, -0.06],
                      [0.22, 0.0], [0.08, 0.06], [-0.08, 0.06]]
    pts[42:48, 0] += 0.5
    pts[36:48, 2] = -0.05
    pts[48:60, :2] = [[-0.4, 0.9], [-0.25, 0.82], [-0.1, 0.78], [0.0, 0.8],
                      [0.1, 0.78], [0.25, 0.82], [0.4, 0.9], [0.25, 1.0],
                      [0.1, 1.04], [0.0, 1.05], [-0.1, 1.04], [-0.25, 1.0]]
    pts[60:68, :2] = [[-0.33, 0.9], [-0.12, 0.88], [0.0, 0.88], [0.12, 0.88],
                      [0.33, 0.9], [0.12, 0.92], [0.0, 0.92], [-0.12, 0.92]]
    pts[48:68, 2] = -0.2 + 0.3 * pts[48:68, 0] ** 2
    pts[17:27, 2] = -0.1 + 0.2 * pts[17:27, 0] ** 2
    return pts


def _raw_modes(mean: np.ndarray) -> dict[str, np.ndarray]:
    modes = {}
    d = np.zeros_like(mean)
    lower_lip = [55, 56, 57, 58, 59, 65, 66, 67]
    d[lower_lip, 1] = 0.15
    d[[48, 54, 60, 64], 1] = 0.07
    d[5:12, 1] = 0.12 * np.sin(np.linspace(0.3, np.pi - 0.3, 7))
    modes["mouth_open"] = d
    d = np.zeros_like(mean)
    d[17:27, 1] = -0.1
    modes["brow_raise"] = d
    d = np.zeros_like(mean)
    d[[48, 60], 0], d[[54, 64], 0] = -0.08, 0.08
    d[[48, 54, 60, 64], 1] = -0.05
    d[[49, 59], 0], d[[53, 55], 0] = -0.03, 0.03
    modes["smile"] = d
    d = np.zeros_like(mean)
    d[[20, 21], 0], d[[22, 23], 0] = 0.06, -0.06
    d[[20, 21, 22, 23], 1] = 0.03
    modes["brow_furrow"] = d
    d = np.zeros_like(mean)
    d[0:17, 0] = 0.12 * mean[0:17, 0]
    modes["jaw_width"] = d
    return modes


def build_synthetic_model() -> ShapeModel:
    """Five geometric deformation modes on the averaged layout.

    Each mode is made orthogonal to the 12 affine motions of the mean shape
    (so camera and shape parameters do not trade off near the mean) and to
    the preceding modes; its stddev is the norm of what remains.
    """
    mean = _mean_layout()
    affine = []
    for row in range(3):
        for col in range(4):
            field = np.zeros_like(mean)
            field[:, row] = mean[:, col] if col < 3 else 1.0
            affine.append(field.reshape(-1))
    basis = list(np.linalg.qr(np.array(affine).T)[0].T)
    comps, sds, names = [], [], []
    for name, field in _raw_modes(mean).items():
        v = field.reshape(-1).copy()
        for b in basis:
            v -= (v @ b) * b
        for b in basis:  # second pass for numerical orthogonality
            v -= (v @ b) * b
        norm = np.linalg.norm(v)
        comps.append(v / norm)
        basis.append(v / norm)
        sds.append(norm)
        names.append(name)
    return ShapeModel(mean, np.array(comps), np.array(sds), tuple(names))


# --- camera and pose -------------------------------------------------------

@dataclass(frozen=True)
class CameraRig:
    """Weak-perspective intrinsics used to express pose in model units.

    Image point = principal_point + s * (R X + t)[:2] with
    s = focal_px / (ref_depth + t_z).  ``focal_px=None`` disables depth
    recovery (t_z reported as 0).
    """

    principal_point: tuple[float, float] = (0.0, 0.0)
    focal_px: float | None = None
    ref_depth: float = 10.0


@dataclass(frozen=True, eq=False)
class AffineCamera:
    matrix: np.ndarray  # (2, 4)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 4):
            raise ValueError("affine camera must be 2x4")
        object.__setattr__(self, "matrix", m)

    def project(self, points_3d) -> np.ndarray:
        pts = np.asarray(points_3d, dtype=float)
        return pts @ self.matrix[:, :3].T + self.matrix[:, 3]


@dataclass(frozen=True)
class HeadPose:
    translation: tuple[float, float, float]
    rotation: tuple[float, float, float]  # roll, pitch, yaw in radians
    scale: float

    def as_features(self) -> np.ndarray:
        return np.concatenate([self.translation, np.degrees(self.rotation)])


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """``Rz(roll) @ Ry(yaw) @ Rx(pitch)``."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    return rz @ ry @ rx


def euler_angles(r: np.ndarray) -> tuple[float, float, float]:
    roll, pitch, yaw = _euler_batch(np.asarray(r)[None])[0]
    return float(roll), float(pitch), float(yaw)


def _euler_batch(r: np.ndarray) -> np.ndarray:
    """(F, 3, 3) rotations -> (F, 3) roll, pitch, yaw."""
    yaw = np.arcsin(np.clip(-r[:, 2, 0], -1.0, 1.0))
    roll = np.arctan2(r[:, 1, 0], r[:, 0, 0])
    pitch = np.arctan2(r[:, 2, 1], r[:, 2, 2])
    return np.column_stack([roll, pitch, yaw])


def compose_camera(pose: HeadPose, rig: CameraRig = CameraRig()) -> AffineCamera:
    """Affine camera realising ``pose`` under ``rig``.

    With a focal length the scale follows from t_z; otherwise ``pose.scale``
    is used directly.
    """
    r = rotation_matrix(*pose.rotation)
    tx, ty, tz = pose.translation
    if rig.focal_px is not None:
        s = rig.focal_px / (rig.ref_depth + tz)
    else:
        s = pose.scale
    m = np.zeros((2, 4))
    m[:, :3] = s * r[:2]
    m[:, 3] = np.asarray(rig.principal_point) + s * np.array([tx, ty])
    return AffineCamera(m)


def decompose_pose(camera: AffineCamera, rig: CameraRig = CameraRig()) -> HeadPose:
    """Scale, rotation and translation of an affine camera.

    Scale is the mean row norm of the 2x3 block; the two rows are replaced by
    the nearest orthonormal pair and completed by their cross product.
    """
    trans, rot, scale = decompose_cameras(camera.matrix[None], rig)
    return HeadPose(tuple(float(v) for v in trans[0]), tuple(float(v) for v in rot[0]),
                    float(scale[0]))


def decompose_cameras(cameras: np.ndarray, rig: CameraRig = CameraRig()):
    """Batched :func:`decompose_pose`: translations (F, 3), rotations (F, 3)
    as roll/pitch/yaw in radians, and scales (F,)."""
    a = cameras[:, :, :3]
    u, sv, vt = np.linalg.svd(a, full_matrices=False)
    if np.any(sv[:, 0] <= 0) or np.any(sv[:, 1] < 1e-9 * sv[:, 0]):
        raise FitError("camera 2x3 block is not rank 2")
    scale = np.linalg.norm(a, axis=2).mean(axis=1)
    rows = u @ vt
    r = np.concatenate([rows, np.cross(rows[:, 0], rows[:, 1])[:, None]], axis=1)
    txy = (cameras[:, :, 3] - np.asarray(rig.principal_point)) / scale[:, None]
    tz = rig.focal_px / scale - rig.ref_depth if rig.focal_px is not None \
        else np.zeros_like(scale)
    return np.column_stack([txy, tz]), _euler_batch(r), scale


# --- fitting ---------------------------------------------------------------

def _similarity_normalise(pts: np.ndarray):
    """Per-frame centroid and isotropic scale (mean distance -> sqrt(dim))."""
    dim = pts.shape[-1]
    c = pts.mean(axis=-2, keepdims=True)
    d = np.linalg.norm(pts - c, axis=-1).mean(axis=-1)[..., None, None]
    s = np.sqrt(dim) / d
    return (pts - c) * s, c[..., 0, :], s[..., 0, 0]


def _fit_cameras(x2: np.ndarray, x3: np.ndarray) -> np.ndarray:
    """Least-squares affine cameras for stacked 2D-3D pairs, (F, 2, 4)."""
    xn, c2, s2 = _similarity_normalise(x2)
    xn3, c3, s3 = _similarity_normalise(x3)
    design = np.concatenate([xn3, np.ones(xn3.shape[:-1] + (1,))], axis=-1)
    dt = design.transpose(0, 2, 1)
    gram = dt @ design
    rhs = dt @ xn
    pn = np.linalg.solve(gram, rhs).transpose(0, 2, 1)  # (F, 2, 4)
    # undo normalisation: x = c2 + (1/s2) * Pn @ [s3 (X - c3); 1]
    a = pn[:, :, :3] * (s3 / s2)[:, None, None]
    t = c2 + (pn[:, :, 3] - np.einsum("fij,fj->fi", pn[:, :, :3] * s3[:, None, None],
                                      c3)) / s2[:, None]
    return np.concatenate([a, t[:, :, None]], axis=-1)


def _check_configuration(x2: np.ndarray) -> None:
    centred = x2 - x2.mean(axis=-2, keepdims=True)
    sv = np.linalg.svd(centred, compute_uv=False)
    bad = sv[..., 1] <= 1e-6 * np.maximum(sv[..., 0], 1e-300)
    if np.any(bad):
        raise FitError(f"degenerate configuration in {int(bad.sum())} frame(s): "
                       "landmarks are collinear or coincident")


@dataclass(frozen=True, eq=False)
class FitResult:
    cameras: np.ndarray  # (F, 2, 4)
    alphas: np.ndarray  # (F, K)
    residual_px: np.ndarray  # (F,) RMS reprojection error
    history: np.ndarray  # (iterations + 1, F) residuals per alternation
    objective_history: np.ndarray  # (iterations + 1, F) residual^2 * 68 + ridge


def fit_frames(points: np.ndarray, model: ShapeModel, ridge: float = RIDGE_LAMBDA,
               max_iter: int = MAX_ALTERNATIONS, tol_px: float = RESIDUAL_TOL_PX
               ) -> FitResult:
    """Fit cameras and shape coefficients to stacked frames ``(F, 68, 2)``."""
    x2 = np.asarray(points, dtype=float)
    if x2.ndim == 2:
        x2 = x2[None]
    if not np.all(np.isfinite(x2)):
        raise FitError("non-finite landmark coordinates")
    _check_configuration(x2)
    n_frames, k = len(x2), model.n_components
    modes = model.scaled_modes  # (K, 68, 3)
    flat_modes = modes.reshape(k, -1)
    alphas = np.zeros((n_frames, k))
    history, objective = [], []
    prev = None
    for _ in range(max_iter):
        shape = model.mean_shape + (alphas @ flat_modes).reshape(n_frames, -1, 3)
        cams = _fit_cameras(x2, shape)
        a, t = cams[:, :, :3], cams[:, :, 3]
        at = a.transpose(0, 2, 1)
        resid = (x2 - t[:, None, :] - model.mean_shape @ at).reshape(n_frames, -1)
        # projected modes, (F, 136, K)
        basis = (modes[None] @ at[:, None]).transpose(0, 2, 3, 1).reshape(n_frames, -1, k)
        bt = basis.transpose(0, 2, 1)
        lhs = bt @ basis + ridge * np.eye(k)
        alphas = np.linalg.solve(lhs, (bt @ resid[..., None]))[..., 0]
        err = resid - (basis @ alphas[..., None])[..., 0]
        sq = np.sum(err ** 2, axis=1)
        res = np.sqrt(sq / N_LANDMARKS)
        if not history:
            history.append(_initial_residual(x2, model))
            objective.append(history[0] ** 2 * N_LANDMARKS)
        history.append(res)
        objective.append(sq + ridge * np.sum(alphas ** 2, axis=1))
        if prev is not None and np.all(np.abs(prev - res) < tol_px):
            break
        prev = res
    sv = np.linalg.svd(cams[:, :, :3], compute_uv=False)
    if np.any(sv[:, 1] < 1e-9 * sv[:, 0]):
        raise FitError("degenerate configuration: rank-deficient camera")
    return FitResult(cams, alphas, history[-1], np.array(history), np.array(objective))


def _initial_residual(x2, model):
    cams = _fit_cameras(x2, np.broadcast_to(model.mean_shape, x2.shape[:1] + (68, 3)))
    proj = np.einsum("fij,nj->fni", cams[:, :, :3], model.mean_shape) + cams[:, None, :, 3]
    return np.sqrt(np.sum((x2 - proj) ** 2, axis=(1, 2)) / N_LANDMARKS)


def fit_camera_and_shape(landmarks: LandmarkFrame, model: ShapeModel, **kwargs):
    """Single-frame fit: ``(AffineCamera, alphas, rms_residual_px)``."""
    if not landmarks.valid:
        raise FitError("cannot fit an invalid frame")
    res = fit_frames(landmarks.points_2d, model, **kwargs)
    return AffineCamera(res.cameras[0]), res.alphas[0], float(res.residual_px[0])


# --- frontalisation and features -------------------------------------------

def frontalize_shapes(shapes_3d: np.ndarray, interocular: float = 1.0) -> np.ndarray:
    """Frontal projection of 3D shapes, eye midpoint at the origin and eye
    centres ``interocular`` apart."""
    xy = np.asarray(shapes_3d, dtype=float)[..., :2]
    right = xy[..., RIGHT_EYE, :].mean(axis=-2)
    left = xy[..., LEFT_EYE, :].mean(axis=-2)
    mid = 0.5 * (left + right)
    dist = np.linalg.norm(left - right, axis=-1)
    return (xy - mid[..., None, :]) * (interocular / dist)[..., None, None]


def frontalize(landmarks: LandmarkFrame, camera: AffineCamera, alphas,
               model: ShapeModel, interocular: float = 1.0) -> np.ndarray:
    """Fitted shape re-projected through the canonical frontal camera, (68, 2).

    ``landmarks`` and ``camera`` are accepted for interface symmetry; the
    frontal view depends only on the fitted shape.
    """
    if not landmarks.valid:
        raise FitError("cannot frontalize an invalid frame")
    shape = model.mean_shape + np.tensordot(np.asarray(alphas, float),
                                            model.scaled_modes, axes=(-1, 0))
    return frontalize_shapes(shape, interocular)


def face_features(frontal: np.ndarray) -> np.ndarray:
    """Six geometric expression features from frontal landmarks (..., 68, 2).

    Heights are measured upwards from the eye line, so they are the negated
    image y coordinates.
    """
    p = np.asarray(frontal, dtype=float)
    x, y = p[..., 0], p[..., 1]
    return np.stack([
        -y[..., LEFT_BROW].mean(axis=-1),
        -y[..., RIGHT_BROW].mean(axis=-1),
        x[..., LEFT_BROW_INNER] - x[..., RIGHT_BROW_INNER],
        x[..., LEFT_LIP_CORNER] - x[..., RIGHT_LIP_CORNER],
        y[..., INNER_LIP_BOTTOM] - y[..., INNER_LIP_TOP],
        -0.5 * (y[..., LEFT_LIP_CORNER] + y[..., RIGHT_LIP_CORNER]),
    ], axis=-1)


def face_head_features(frontalized: np.ndarray, pose: HeadPose):
    """``(face[6], head[6])``; head is translation then roll/pitch/yaw in degrees."""
    return face_features(frontalized), pose.as_features()


@dataclass(frozen=True, eq=False)
class FaceTrackResult:
    face: SignalTrace  # 6 channels at the landmark frame rate
    head: SignalTrace
    residual_px: np.ndarray
    rejected: np.ndarray  # frames excluded before interpolation


def track_landmarks(trace: SignalTrace, model: ShapeModel,
                    rig: CameraRig = CameraRig(), max_gap_s: float = 0.5,
                    reject_factor: float = 3.0, reject_floor_px: float = 0.5,
                    ridge: float = RIDGE_LAMBDA, max_iter: int = MAX_ALTERNATIONS
                    ) -> FaceTrackResult:
    """Per-frame face and head features for a 136-channel landmark trace.

    Missing frames are linearly interpolated across gaps up to ``max_gap_s``
    before fitting.  Frames whose fit residual exceeds
    ``max(reject_factor * median, reject_floor_px)`` are dropped and their
    features interpolated under the same gap limit; anything left is NaN.
    """
    fps = trace.sample_rate_hz
    pts = interpolate_gaps(trace.samples.T, fps, max_gap_s)
    n = len(pts)
    ok = np.all(np.isfinite(pts), axis=1)
    feats = np.full((n, 12), np.nan)
    residual = np.full(n, np.nan)
    if ok.any():
        fit = fit_frames(pts[ok].reshape(-1, N_LANDMARKS, 2), model, ridge, max_iter)
        residual[ok] = fit.residual_px
        frontal = frontalize_shapes(
            model.mean_shape + np.einsum("fk,knd->fnd", fit.alphas, model.scaled_modes))
        feats[ok, :6] = face_features(frontal)
        trans, rot, _ = decompose_cameras(fit.cameras, rig)
        feats[ok, 6:] = np.column_stack([trans, np.degrees(rot)])
    med = np.nanmedian(residual) if ok.any() else 0.0
    rejected = ok & (residual > max(reject_factor * med, reject_floor_px))
    feats[rejected] = np.nan
    feats = interpolate_gaps(feats, fps, max_gap_s)
    face = SignalTrace(feats[:, :6].T, fps, FACE_FEATURES, trace.start_time_s)
    head = SignalTrace(feats[:, 6:].T, fps, HEAD_FEATURES, trace.start_time_s)
    return FaceTrackResult(face, head, residual, rejected)
