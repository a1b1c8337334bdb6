"""Delay embedding, recurrence plots, joint recurrence plots and networks.

A recurrence plot marks the pairs of states within an L1 distance ``eps``
of each other, ``R[i, j] = H(eps - |x_i - x_j|_1)`` with ``H(0) = 1``.  A
joint plot is the entrywise AND of several plots over the same time axis,
and the recurrence network is the joint plot with its diagonal removed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .windowing import FeatureWindowSeries

NORM = "l1"


class RecurrenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddedTrajectory:
    states: np.ndarray  # (N, m * d)
    embedding_dim: int
    delay: int
    source_modality: str = ""

    @property
    def n_states(self) -> int:
        return len(self.states)


def standardize(vectors: np.ndarray) -> np.ndarray:
    """Per-column z-scores; constant columns become zero."""
    x = np.asarray(vectors, dtype=float)
    sd = x.std(axis=0)
    return (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def embed(series, m: int = 3, tau: int = 1, standardize_features: bool = True,
          modality: str | None = None) -> EmbeddedTrajectory:
    """Delay embedding of a (L, d) series into ``L - (m - 1) tau`` states.

    State ``i`` concatenates the vectors at steps ``i, i + tau, ...,
    i + (m - 1) tau``, so its dimension is ``m * d``.  ``series`` is a
    :class:`FeatureWindowSeries` or an array.
    """
    if isinstance(series, FeatureWindowSeries):
        modality = modality or series.modality
        series = series.vectors
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if m < 1 or tau < 1:
        raise RecurrenceError("embedding needs m >= 1 and tau >= 1")
    n = len(x) - (m - 1) * tau
    if n < 2:
        raise RecurrenceError(
            f"series too short: {len(x)} steps give {n} states for m={m}, tau={tau}")
    if standardize_features:
        x = standardize(x)
    states = np.hstack([x[k * tau:k * tau + n] for k in range(m)])
    return EmbeddedTrajectory(states, m, tau, modality or "")


def embed_per_feature(series, m: int = 3, tau: int = 1,
                      standardize_features: bool = True) -> list[EmbeddedTrajectory]:
    """One scalar embedding per feature column."""
    modality = series.modality if isinstance(series, FeatureWindowSeries) else ""
    x = series.vectors if isinstance(series, FeatureWindowSeries) else np.asarray(series)
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    return [embed(x[:, j], m, tau, standardize_features, modality)
            for j in range(x.shape[1])]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def recurrence_rate(matrix: np.ndarray) -> float:
    """Fraction of off-diagonal entries equal to one."""
    n = len(matrix)
    if n < 2:
        return 0.0
    return float((np.count_nonzero(matrix) - np.count_nonzero(np.diag(matrix)))
                 / (n * (n - 1)))


@dataclass(frozen=True, eq=False)
class RecurrencePlot:
    matrix: np.ndarray  # (N, N) bool
    epsilon: float
    modality: str = ""
    target_rate: float | None = None
    degenerate: bool = False
    norm: str = NORM
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(np.asarray(self.matrix, dtype=bool)))

    @property
    def size(self) -> int:
        return len(self.matrix)

    @property
    def rate(self) -> float:
        return recurrence_rate(self.matrix)


@dataclass(frozen=True, eq=False)
class JointRecurrencePlot:
    matrix: np.ndarray
    member_modalities: tuple[str, ...]
    members: tuple[RecurrencePlot, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(np.asarray(self.matrix, dtype=bool)))
        object.__setattr__(self, "member_modalities", tuple(self.member_modalities))

    @property
    def size(self) -> int:
        return len(self.matrix)

    @property
    def rate(self) -> float:
        return recurrence_rate(self.matrix)


@dataclass(frozen=True, eq=False)
class RecurrenceNetwork:
    adjacency: np.ndarray  # (N, N) uint8, zero diagonal
    derived_from: JointRecurrencePlot | RecurrencePlot

    def __post_init__(self):
        object.__setattr__(self, "adjacency",
                           _readonly(np.asarray(self.adjacency, dtype=np.uint8)))

    @property
    def n_nodes(self) -> int:
        return len(self.adjacency)


def pairwise_l1(states: np.ndarray) -> np.ndarray:
    return squareform(pdist(np.asarray(states, dtype=float), "cityblock"))


def recurrence_plot(traj: EmbeddedTrajectory | np.ndarray, epsilon: float | None = None,
                    rate: float | None = None) -> RecurrencePlot:
    """Recurrence plot at a fixed ``epsilon`` or at a target recurrence ``rate``.

    With a target rate, ``epsilon`` is the ``rate``-quantile (inverted CDF) of
    the off-diagonal pairwise distances, so at least that fraction of pairs
    recurs and ties can only push the achieved rate up.
    """
    if (epsilon is None) == (rate is None):
        raise RecurrenceError("give exactly one of epsilon and rate")
    modality = ""
    if isinstance(traj, EmbeddedTrajectory):
        modality = traj.source_modality
        traj = traj.states
    states = np.asarray(traj, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if len(states) < 2:
        raise RecurrenceError("recurrence plot needs at least 2 states")
    flat = pdist(states, "cityblock")
    if rate is not None:
        if not 0.0 < rate <= 1.0:
            raise RecurrenceError("target rate must lie in (0, 1]")
        epsilon = float(np.quantile(flat, rate, method="inverted_cdf"))
    elif epsilon < 0:
        raise RecurrenceError("epsilon must be non-negative")
    matrix = squareform(flat <= epsilon)
    np.fill_diagonal(matrix, True)
    return RecurrencePlot(matrix, float(epsilon), modality, rate,
                          degenerate=bool(np.all(flat == 0)))


def joint_recurrence_plot(plots) -> JointRecurrencePlot:
    plots = tuple(plots)
    if len(plots) < 2:
        raise RecurrenceError("a joint plot needs at least 2 member plots")
    sizes = {p.size for p in plots}
    if len(sizes) != 1:
        raise RecurrenceError(f"size mismatch between member plots: {sorted(sizes)}")
    matrix = np.logical_and.reduce([p.matrix for p in plots])
    # a joint member contributes its own members
    members = tuple(q for p in plots
                    for q in (p.members if isinstance(p, JointRecurrencePlot) else (p,)))
    return JointRecurrencePlot(matrix, tuple(q.modality for q in members), members)


def to_network(plot: JointRecurrencePlot | RecurrencePlot) -> RecurrenceNetwork:
    a = np.array(plot.matrix, dtype=np.uint8)
    np.fill_diagonal(a, 0)
    return RecurrenceNetwork(a, plot)


# --- export ----------------------------------------------------------------

def pgm_bytes(matrix: np.ndarray, comment: str | None = None) -> bytes:
    """Binary graymap, black where recurrent, row 0 at the top."""
    m = np.asarray(matrix, dtype=bool)
    pixels = np.where(m, 0, 255).astype(np.uint8)
    note = f"# {comment}\n" if comment else ""
    header = f"P5\n{note}{m.shape[1]} {m.shape[0]}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_pgm(plot, path, comment: str | None = None) -> None:
    matrix = plot.matrix if hasattr(plot, "matrix") else plot
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(matrix, comment))


def read_pgm(path) -> np.ndarray:
    """Recurrence matrix of a binary graymap written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise RecurrenceError("truncated graymap header")
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise RecurrenceError("not a binary graymap")
    w, h = int(fields[1]), int(fields[2])
    pixels = data[pos + 1:]
    if len(pixels) != w * h:
        raise RecurrenceError(f"graymap has {len(pixels)} pixels, header says {w * h}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w) == 0


def plot_meta(plot) -> dict:
    if isinstance(plot, RecurrencePlot):
        return {"kind": "rp", "modality": plot.modality, "size": plot.size,
                "norm": plot.norm, "epsilon": plot.epsilon,
                "target_rate": plot.target_rate, "achieved_rate": plot.rate,
                "degenerate": plot.degenerate, **plot.meta}
    return {"kind": "jrp", "members": list(plot.member_modalities), "size": plot.size,
            "achieved_rate": plot.rate,
            "member_epsilon": {p.modality: p.epsilon for p in plot.members}}


def write_sparse(plot, path, extra: dict | None = None) -> None:
    """Upper-triangle recurrent pairs ``i j`` (i < j), one per line, plus a
    JSON sidecar ``<path>.json`` with the plot metadata.  ``extra`` entries
    go to the sidecar and, as comment lines, to the list itself."""
    i, j = np.nonzero(np.triu(plot.matrix, 1))
    with open(path, "w") as fh:
        for key, val in sorted((extra or {}).items()):
            fh.write(f"# {key}: {val}\n")
        fh.write(f"# size: {plot.size}\n")
        for a, b in zip(i, j):
            fh.write(f"{a} {b}\n")
    meta = dict(plot_meta(plot), **(extra or {}))
    with open(f"{path}.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def read_sparse(path) -> np.ndarray:
    size = None
    pairs = []
    for line in open(path):
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            if key.strip() == "size":
                size = int(val)
            continue
        if line.strip():
            pairs.append([int(v) for v in line.split()])
    if size is None:
        raise RecurrenceError("sparse file lacks a size header")
    m = np.eye(size, dtype=bool)
    if pairs:
        p = np.array(pairs)
        m[p[:, 0], p[:, 1]] = True
        m[p[:, 1], p[:, 0]] = True
    return m
