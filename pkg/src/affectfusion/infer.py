"""Linear SVM and SVR trained by SMO, with leave-one-subject-out evaluation.

Both models reduce to the dual problem

    minimize 0.5 b'Qb + p'b   subject to  z'b = 0,  0 <= b <= C,

with ``z`` in {+1, -1}.  :func:`solve_dual` handles it by sequential minimal
optimisation with second-order working-set selection.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .signals import RATING_RANGE, Session, SignalTrace

POSITIVE, NEGATIVE = "positive", "negative"
DUAL_TOL = 1e-9
MAX_SMO_ITER = 200_000


class InferenceError(ValueError):
    pass


# --- dual solver -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DualSolution:
    beta: np.ndarray
    rho: float  # decision offset: f(x) = w.x - rho
    objective: float
    iterations: int
    violation: float  # maximal KKT violation at exit


def solve_dual(q: np.ndarray, p: np.ndarray, z: np.ndarray, c: float,
               tol: float = DUAL_TOL, max_iter: int = MAX_SMO_ITER) -> DualSolution:
    """SMO on the box- and equality-constrained quadratic dual.

    ``tol`` bounds the maximal violating pair gap at exit, which is the
    standard KKT residual for this problem.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    z = np.asarray(z, dtype=float)
    n = len(p)
    beta = np.zeros(n)
    grad = p.copy()
    diag = np.diag(q)
    tau = 1e-12
    it = 0
    gap = np.inf
    while it < max_iter:
        at_upper = beta >= c
        at_lower = beta <= 0
        up = np.where(z > 0, ~at_upper, ~at_lower)
        low = np.where(z > 0, ~at_lower, ~at_upper)
        score = -z * grad
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        g_max = score[i]
        g_min = score[low].min()
        gap = g_max - g_min
        if gap < tol:
            break
        # second-order choice of j among violating partners
        b = g_max - score
        a = diag[i] + diag - 2.0 * z[i] * z * q[i]
        a = np.where(a > 0, a, tau)
        cand = low & (b > 0)
        gain = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(gain))
        old_i, old_j = beta[i], beta[j]
        if z[i] != z[j]:
            quad = max(diag[i] + diag[j] + 2.0 * q[i, j], tau)
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            bi, bj = old_i + delta, old_j + delta
            if diff > 0:
                if bj < 0:
                    bj, bi = 0.0, diff
            elif bi < 0:
                bi, bj = 0.0, -diff
            if diff > 0:
                if bi > c:
                    bi, bj = c, c - diff
            elif bj > c:
                bj, bi = c, c + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * q[i, j], tau)
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            bi, bj = old_i - delta, old_j + delta
            if total > c:
                if bi > c:
                    bi, bj = c, total - c
            elif bj < 0:
                bj, bi = 0.0, total
            if total > c:
                if bj > c:
                    bj, bi = c, total - c
            elif bi < 0:
                bi, bj = 0.0, total
        beta[i], beta[j] = bi, bj
        grad += q[:, i] * (bi - old_i) + q[:, j] * (bj - old_j)
        it += 1
    rho = _offset(beta, grad, z, c)
    obj = float(0.5 * beta @ q @ beta + p @ beta)
    return DualSolution(beta, rho, obj, it, float(gap))


def _offset(beta, grad, z, c) -> float:
    zg = z * grad
    free = (beta > 0) & (beta < c)
    if free.any():
        return float(zg[free].mean())
    at_upper, at_lower = beta >= c, beta <= 0
    ub_set = np.where(z > 0, at_lower, at_upper)
    lb_set = np.where(z > 0, at_upper, at_lower)
    ub = zg[ub_set].min() if ub_set.any() else np.inf
    lb = zg[lb_set].max() if lb_set.any() else -np.inf
    if np.isfinite(ub) and np.isfinite(lb):
        return float((ub + lb) / 2.0)
    return float(ub if np.isfinite(ub) else lb)


# --- models ----------------------------------------------------------------

def encode_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.dtype.kind in "US":
        bad = set(arr.tolist()) - {POSITIVE, NEGATIVE}
        if bad:
            raise InferenceError(f"unknown labels {sorted(bad)}")
        return np.where(arr == POSITIVE, 1.0, -1.0)
    arr = np.asarray(arr, dtype=float)
    if not set(np.unique(arr)) <= {-1.0, 1.0}:
        raise InferenceError("numeric labels must be +1 or -1")
    return arr


def decode_labels(signs) -> np.ndarray:
    return np.where(np.asarray(signs) > 0, POSITIVE, NEGATIVE)


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray
    bias: float
    C: float
    support_indices: np.ndarray
    dual: DualSolution

    def decision(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.weights + self.bias

    def predict(self, x) -> np.ndarray:
        """+1 / -1 per row; a zero margin counts as positive."""
        return np.where(self.decision(x) >= 0, 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class SvrModel:
    weights: np.ndarray
    bias: float
    C: float
    epsilon_tube: float
    dual: DualSolution

    def predict(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.weights + self.bias


def _check_xy(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y)
    if len(x) != len(y):
        raise InferenceError("features and targets differ in length")
    if not np.all(np.isfinite(x)):
        raise InferenceError("non-finite feature values")
    return x, y


def svm_primal_objective(model: SvmModel, x, y) -> float:
    y = encode_labels(y)
    hinge = np.maximum(0.0, 1.0 - y * model.decision(x))
    return float(0.5 * model.weights @ model.weights + model.C * hinge.sum())


def train_svm(x, y, C: float = 1.0, tol: float = DUAL_TOL) -> SvmModel:
    """Soft-margin linear SVM; labels are +1/-1 or positive/negative."""
    x, y = _check_xy(x, y)
    y = encode_labels(y)
    if min(np.sum(y > 0), np.sum(y < 0)) < 1:
        raise InferenceError("training set has a single class")
    k = x @ x.T
    sol = solve_dual(np.outer(y, y) * k, -np.ones(len(y)), y, C, tol)
    w = (sol.beta * y) @ x
    return SvmModel(w, -sol.rho, C, np.flatnonzero(sol.beta > 0), sol)


def svr_primal_objective(model: SvrModel, x, y) -> float:
    r = np.abs(np.asarray(y, dtype=float) - model.predict(x))
    loss = np.maximum(0.0, r - model.epsilon_tube).sum()
    return float(0.5 * model.weights @ model.weights + model.C * loss)


def train_svr(x, y, C: float = 1.0, epsilon: float = 0.05, tol: float = DUAL_TOL) -> SvrModel:
    """Linear epsilon-insensitive regression with an L2 weight penalty."""
    x, y = _check_xy(x, y)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        raise InferenceError("regression needs at least 3 examples")
    k = x @ x.T
    q = np.block([[k, -k], [-k, k]])
    p = np.concatenate([epsilon - y, epsilon + y])
    z = np.concatenate([np.ones(n), -np.ones(n)])
    sol = solve_dual(q, p, z, C, tol)
    coef = sol.beta[:n] - sol.beta[n:]
    return SvrModel(coef @ x, -sol.rho, C, epsilon, sol)


# --- metrics ---------------------------------------------------------------

def classification_metrics(y_true, y_pred) -> dict[str, float]:
    """Accuracy, F1, precision and recall of the positive class."""
    t, p = encode_labels(y_true) > 0, encode_labels(y_pred) > 0
    tp = float(np.sum(t & p))
    fp = float(np.sum(~t & p))
    fn = float(np.sum(t & ~p))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"accuracy": float(np.mean(t == p)), "f1": f1, "precision": precision,
            "recall": recall, "tp": tp, "fp": fp, "fn": fn, "tn": float(np.sum(~t & ~p))}


def regression_metrics(y_true, y_pred) -> dict[str, float]:
    r = np.asarray(y_pred, dtype=float) - np.asarray(y_true, dtype=float)
    return {"rmse": float(np.sqrt(np.mean(r * r))), "mae": float(np.mean(np.abs(r)))}


# --- data preparation ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledExample:
    features: np.ndarray
    label: str
    rating: float
    subject_id: str
    trial_id: str

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        if not np.all(np.isfinite(f)):
            raise InferenceError(f"non-finite features in trial {self.trial_id}")
        object.__setattr__(self, "features", f)


def baseline_correct(trial_metrics, resting_metrics=None, trial_config: str | None = None,
                     resting_config: str | None = None) -> tuple[np.ndarray, bool]:
    """``trial - resting`` and whether a correction happened.

    The config tags, when both are given, must match.
    """
    trial = np.asarray(trial_metrics, dtype=float)
    if resting_metrics is None:
        return trial.copy(), False
    if trial_config is not None and resting_config is not None \
            and trial_config != resting_config:
        raise InferenceError("trial and resting metrics come from different configs")
    rest = np.asarray(resting_metrics, dtype=float)
    if rest.shape != trial.shape:
        raise InferenceError("trial and resting metric vectors differ in shape")
    return trial - rest, True


def prepare_rating_target(rating_trace: SignalTrace, subject_session) -> float:
    """Median of the trial's ratings after min-max scaling over the subject.

    ``subject_session`` is a :class:`Session` or the subject's rating traces.
    """
    if isinstance(subject_session, Session):
        who = subject_session.subject_id
        traces = [t.rating_trace for t in subject_session.trials]
    else:
        who, traces = "subject", list(subject_session)
    all_r = np.concatenate([t.samples.ravel() for t in traces])
    all_r = all_r[np.isfinite(all_r)]
    lo, hi = float(all_r.min()), float(all_r.max())
    if hi <= lo:
        raise InferenceError(f"flat ratings across session {who}")
    r = rating_trace.samples.ravel()
    r = r[np.isfinite(r)]
    return float(np.median((r - lo) / (hi - lo)))


def rating_bounds() -> tuple[float, float]:
    return RATING_RANGE


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x) -> Standardizer:
        x = np.asarray(x, dtype=float)
        sd = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


# --- cross-validation ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoldResult:
    subject_id: str
    trial_ids: list[str]
    truth: np.ndarray
    predicted: np.ndarray
    metrics: dict[str, float]
    param_hash: str


@dataclass(frozen=True, eq=False)
class CvReport:
    task: str
    name: str
    folds: list[FoldResult]
    aggregate: dict[str, float]
    p_value: float
    config: dict = field(default_factory=dict)

    @property
    def truth(self) -> np.ndarray:
        return np.concatenate([f.truth for f in self.folds])

    @property
    def predicted(self) -> np.ndarray:
        return np.concatenate([f.predicted for f in self.folds])


def params_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]


def _group(examples):
    subjects = []
    for ex in examples:
        if ex.subject_id not in subjects:
            subjects.append(ex.subject_id)
    return subjects


def _task_targets(examples, task):
    if task == "classify":
        return encode_labels([e.label for e in examples])
    if task == "regress":
        return np.array([e.rating for e in examples], dtype=float)
    raise InferenceError(f"unknown task {task!r}")


def fit_fold(train, task: str, C: float, epsilon: float):
    """Standardiser and model fitted on the training examples only."""
    x = np.array([e.features for e in train])
    y = _task_targets(train, task)
    scaler = Standardizer.fit(x)
    xs = scaler.transform(x)
    model = train_svm(xs, y, C) if task == "classify" else train_svr(xs, y, C, epsilon)
    return scaler, model


def permutation_p_value(truth, predicted, task: str, n_permutations: int,
                        rng: np.random.Generator) -> float:
    """Share of target permutations scoring at least as well as observed.

    The statistic is accuracy for classification and negative RMSE for
    regression; the pooled predictions stay fixed.
    """
    truth = np.asarray(truth, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if task == "classify":
        def score(t):
            return np.mean(t == predicted, axis=-1)
    else:
        def score(t):
            return -np.sqrt(np.mean((t - predicted) ** 2, axis=-1))
    observed = score(truth)
    perms = rng.permuted(np.tile(truth, (n_permutations, 1)), axis=1)
    better = np.sum(score(perms) >= observed - 1e-12)
    return float((1 + better) / (1 + n_permutations))


def _aggregate(task, truth, pred):
    if task == "classify":
        return classification_metrics(truth, pred)
    return regression_metrics(truth, pred)


def loso_cv(examples: list[LabeledExample], task: str = "classify", C: float = 1.0,
            epsilon: float = 0.05, n_permutations: int = 10_000, seed=0,
            name: str = "", config: dict | None = None) -> CvReport:
    """Leave-one-subject-out evaluation with metrics pooled over folds."""
    subjects = _group(examples)
    if len(subjects) < 2:
        raise InferenceError("cross-validation needs at least 2 subjects")
    folds = []
    for sid in subjects:
        test = [e for e in examples if e.subject_id == sid]
        train = [e for e in examples if e.subject_id != sid]
        scaler, model = fit_fold(train, task, C, epsilon)
        x_test = scaler.transform(np.array([e.features for e in test]))
        pred = model.predict(x_test)
        truth = _task_targets(test, task)
        folds.append(FoldResult(sid, [e.trial_id for e in test], truth, pred,
                                _aggregate(task, truth, pred),
                                params_hash(scaler.mean, scaler.scale, model.weights,
                                            [model.bias])))
    truth = np.concatenate([f.truth for f in folds])
    pred = np.concatenate([f.predicted for f in folds])
    rng = np.random.default_rng(seed)
    p = permutation_p_value(truth, pred, task, n_permutations, rng) if n_permutations else np.nan
    return CvReport(task, name, folds, _aggregate(task, truth, pred), p, dict(config or {}))


def random_baselines(examples: list[LabeledExample], task: str = "classify", seed=0,
                     n_draws: int = 100, n_permutations: int = 10_000) -> CvReport:
    """Chance-level reference under the same folds.

    Classification draws labels uniformly; regression draws from a normal
    fitted to the training-fold targets.  Aggregate metrics average
    ``n_draws`` repetitions; folds and the p-value use the first draw.
    """
    subjects = _group(examples)
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n_draws):
        folds = []
        for sid in subjects:
            test = [e for e in examples if e.subject_id == sid]
            truth = _task_targets(test, task)
            if task == "classify":
                pred = rng.choice([-1.0, 1.0], size=len(test))
            else:
                train_y = _task_targets([e for e in examples if e.subject_id != sid], task)
                pred = rng.normal(train_y.mean(), train_y.std(), size=len(test))
            folds.append(FoldResult(sid, [e.trial_id for e in test], truth, pred,
                                    _aggregate(task, truth, pred), ""))
        draws.append(folds)
    aggs = [_aggregate(task, np.concatenate([f.truth for f in fs]),
                       np.concatenate([f.predicted for f in fs])) for fs in draws]
    aggregate = {k: float(np.mean([a[k] for a in aggs])) for k in aggs[0]}
    first = draws[0]
    truth = np.concatenate([f.truth for f in first])
    pred = np.concatenate([f.predicted for f in first])
    p = permutation_p_value(truth, pred, task, n_permutations, rng) if n_permutations else np.nan
    return CvReport(task, "Random", first, aggregate, p, {"n_draws": n_draws})


# --- tables ----------------------------------------------------------------

CLASSIFY_COLUMNS = ("Modality", "Accuracy", "p-value", "F1", "Precision", "Recall")
REGRESS_COLUMNS = ("Modality", "RMSE", "MAE")


def table_rows(reports: list[CvReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        a = r.aggregate
        if r.task == "classify":
            rows.append([r.name, f"{100 * a['accuracy']:.1f}", f"{r.p_value:.3g}",
                         f"{100 * a['f1']:.1f}", f"{100 * a['precision']:.1f}",
                         f"{100 * a['recall']:.1f}"])
        else:
            rows.append([r.name, f"{a['rmse']:.2f}", f"{a['mae']:.2f}"])
    return rows


def format_table(reports: list[CvReport], title: str = "") -> str:
    """Plain-text table: classification or regression columns."""
    task = reports[0].task
    cols = CLASSIFY_COLUMNS if task == "classify" else REGRESS_COLUMNS
    rows = [list(cols)] + table_rows(reports)
    widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
    lines = [title] if title else []
    for k, r in enumerate(rows):
        lines.append(" | ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def delimited_table(reports: list[CvReport]) -> str:
    task = reports[0].task
    cols = CLASSIFY_COLUMNS if task == "classify" else REGRESS_COLUMNS
    lines = ["\t".join(cols)]
    for r in reports:
        a = r.aggregate
        if task == "classify":
            vals = [a["accuracy"], r.p_value, a["f1"], a["precision"], a["recall"]]
        else:
            vals = [a["rmse"], a["mae"]]
        lines.append("\t".join([r.name] + [repr(float(v)) for v in vals]))
    return "\n".join(lines) + "\n"
