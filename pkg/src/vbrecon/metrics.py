"""Reconstruction quality and community-structure metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .network import WeightedNetwork

__all__ = [
    "DegenerateMetricWarning",
    "LabeledPartition",
    "MetricsReport",
    "average_nmi",
    "cohesion_index",
    "evaluate",
    "mean_cohesion",
    "nmf_communities",
    "nmf_partitions",
    "nmi",
    "strength_error",
    "symmetric_nmf",
    "tpr_tnr",
]


class DegenerateMetricWarning(RuntimeWarning):
    """A metric hit a case where it is undefined and a convention was used."""


def _weights(net):
    return net.weights if isinstance(net, WeightedNetwork) else np.asarray(net, dtype=float)


def _pair(truth, est):
    w, west = _weights(truth), _weights(est)
    if w.shape != west.shape or w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"networks must be square with the same size, got {w.shape} and {west.shape}")
    return w, west


def tpr_tnr(truth, est) -> tuple[float, float]:
    """True positive and true negative rates over all ordered pairs (i, j).

    The diagonal is counted as a negative in both networks. A class with no
    members gives ``nan`` for its rate.
    """
    w, west = _pair(truth, est)
    a, ah = w != 0, west != 0
    pos, neg = a.sum(), (~a).sum()
    tpr = (a & ah).sum() / pos if pos else math.nan
    tnr = (~a & ~ah).sum() / neg if neg else math.nan
    return float(tpr), float(tnr)


def strength_error(truth, est) -> float:
    """``||W_est - W||_F / ||W||_F``; ``nan`` when the truth has no weight."""
    w, west = _pair(truth, est)
    norm = np.linalg.norm(w)
    if norm == 0:
        return math.nan
    return float(np.linalg.norm(west - w) / norm)


@dataclass(frozen=True)
class LabeledPartition:
    """One label per node; labels may be any hashable values."""

    labels: tuple
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(np.asarray(self.labels).tolist()))
        if not self.labels:
            raise ValueError("a partition needs at least one node")

    def __len__(self):
        return len(self.labels)

    def codes(self) -> np.ndarray:
        return np.unique(np.asarray(self.labels), return_inverse=True)[1].ravel()


def _as_partition(x):
    return x if isinstance(x, LabeledPartition) else LabeledPartition(x)


def cohesion_index(est, labels) -> np.ndarray:
    """Per node, same-label over different-label connections (either direction).

    A node with only same-label neighbours gets ``inf``; an isolated node
    gets ``nan``.
    """
    a = (_weights(est) != 0).astype(float)
    np.fill_diagonal(a, 0.0)
    lab = _as_partition(labels).codes()
    if lab.size != a.shape[0]:
        raise ValueError(f"{lab.size} labels for {a.shape[0]} nodes")
    links = a + a.T
    same = lab[:, None] == lab[None, :]
    num = np.sum(links * same, axis=1)
    den = np.sum(links * ~same, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / den


def mean_cohesion(ci) -> tuple[float, int]:
    """Mean over finite entries and the number of entries left out."""
    ci = np.asarray(ci, dtype=float)
    ok = np.isfinite(ci)
    mean = float(ci[ok].mean()) if ok.any() else math.nan
    return mean, int((~ok).sum())


def nmi(a, b) -> float:
    """``2 I(a; b) / (H(a) + H(b))`` from the empirical joint distribution.

    When both partitions have a single label the ratio is 0/0; the result is
    then 1 if the partitions are identical and 0 otherwise, with a warning.
    """
    a, b = _as_partition(a), _as_partition(b)
    if len(a) != len(b):
        raise ValueError(f"partitions have {len(a)} and {len(b)} nodes")
    ca, cb = a.codes(), b.codes()
    n = ca.size
    joint = np.zeros((ca.max() + 1, cb.max() + 1))
    np.add.at(joint, (ca, cb), 1.0)
    joint /= n
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(pa, pb)[nz])))
    ha = float(-np.sum(pa * np.log(pa)))
    hb = float(-np.sum(pb * np.log(pb)))
    if ha + hb == 0.0:
        warnings.warn("NMI of two single-label partitions is undefined", DegenerateMetricWarning,
                      stacklevel=2)
        return 1.0 if np.array_equal(ca, cb) else 0.0
    return float(min(max(2.0 * mi / (ha + hb), 0.0), 1.0))


def symmetric_nmf(S, k, rng, max_iters=500, tol=1e-6):
    """Factor ``S ~ H H^T`` with ``H >= 0`` by multiplicative updates.

    Uses ``H <- H * ((S H) / (H H^T H))^(1/4)``, which never increases
    ``||S - H H^T||_F^2``. Stops when the objective changes by less than
    ``tol`` relative to its previous value. Returns ``(H, objective trace)``.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    H = rng.uniform(0.0, 1.0, size=(n, k)) * math.sqrt(max(S.mean(), 1e-12) / k)
    trace = [float(np.linalg.norm(S - H @ H.T) ** 2)]
    for _ in range(max_iters):
        num = S @ H
        den = H @ (H.T @ H)
        H = H * np.sqrt(np.sqrt(num / np.maximum(den, 1e-300)))
        obj = float(np.linalg.norm(S - H @ H.T) ** 2)
        trace.append(obj)
        if abs(trace[-2] - obj) <= tol * max(trace[-2], 1e-300):
            break
    return H, trace


def _affinity(est):
    w = np.abs(_weights(est))
    S = 0.5 * (w + w.T)
    np.fill_diagonal(S, 0.0)
    return S


def _partition_from(H):
    # argmax returns the first maximum, i.e. the lowest community index
    return LabeledPartition(np.argmax(H, axis=1))


def nmf_partitions(est, k: int, restarts: int = 100, seed: int = 0,
                   max_iters: int = 500, tol: float = 1e-6):
    """One partition per restart; restart ``r`` is seeded by ``(seed, r)``.

    Returns a list of ``(partition, final objective)``.
    """
    if k < 1 or restarts < 1:
        raise ValueError("k and restarts must be positive")
    S = _affinity(est)
    n = S.shape[0]
    if k == 1:
        return [(LabeledPartition(np.zeros(n, dtype=int)), math.nan) for _ in range(restarts)]
    if not S.any():
        warnings.warn("all-zero network; every node put in one community",
                      DegenerateMetricWarning, stacklevel=2)
        single = LabeledPartition(np.zeros(n, dtype=int), degenerate=True)
        return [(single, math.nan) for _ in range(restarts)]
    out = []
    for r in range(restarts):
        H, trace = symmetric_nmf(S, k, np.random.default_rng([seed, r]), max_iters, tol)
        out.append((_partition_from(H), trace[-1]))
    return out


def nmf_communities(est, k: int, restarts: int = 1, seed: int = 0) -> LabeledPartition:
    """Partition with the lowest factorization error over the restarts."""
    runs = nmf_partitions(est, k, restarts, seed)
    best = min(range(len(runs)), key=lambda i: (np.nan_to_num(runs[i][1], nan=0.0), i))
    return runs[best][0]


def average_nmi(est, labels, k: int | None = None, restarts: int = 100, seed: int = 0) -> float:
    """Mean NMI between ``labels`` and each restart's NMF partition."""
    labels = _as_partition(labels)
    k = len(set(labels.labels)) if k is None else k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateMetricWarning)
        runs = nmf_partitions(est, k, restarts, seed)
        return float(np.mean([nmi(p, labels) for p, _ in runs]))


@dataclass
class MetricsReport:
    tpr: float
    tnr: float
    error: float
    runtime_seconds: float = 0.0
    ci_per_node: np.ndarray | None = None
    mean_ci: float | None = None
    nmi: float | None = None

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("ci_per_node")
        return row


def evaluate(truth, est, runtime_seconds: float = 0.0) -> MetricsReport:
    tpr, tnr = tpr_tnr(truth, est)
    return MetricsReport(tpr, tnr, strength_error(truth, est), runtime_seconds)
