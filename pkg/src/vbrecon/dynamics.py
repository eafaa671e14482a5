"""Nodal time series generated on a known network.

Three linear dynamics are supported: electrical current transport (ECT) on a
resistor network, packet communication, and one-shot linear mixing of node
series (the stock-price model). Observation noise is added to the responses
only.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import WeightedNetwork

__all__ = [
    "CommConfig",
    "DynamicsKind",
    "EctConfig",
    "TimeSeriesPanel",
    "add_noise",
    "ect_currents",
    "normalize_incoming",
    "read_panel",
    "simulate",
    "simulate_communication",
    "simulate_ect",
    "simulate_linear_mixing",
    "write_panel",
]


class DynamicsKind(str, enum.Enum):
    ECT = "ECT"
    COMMUNICATION = "Communication"
    LINEAR_MIXING = "LinearMixing"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        table = {"ect": cls.ECT, "communication": cls.COMMUNICATION, "comm": cls.COMMUNICATION,
                 "linearmixing": cls.LINEAR_MIXING, "mixing": cls.LINEAR_MIXING,
                 "stock": cls.LINEAR_MIXING}
        try:
            return table[key]
        except KeyError:
            raise ValueError(f"unknown dynamics {value!r}") from None


@dataclass
class EctConfig:
    """Alternating-voltage drive for the resistor network.

    Without explicit ``sample_times`` the M instants are drawn uniformly from
    ``[0, time_span]`` and sorted. Evenly spaced instants alias: two nodes
    whose frequency offsets differ by a multiple of ``2 pi / dt`` then carry
    nearly identical voltages.
    """

    n_samples: int = 50
    v_bar: float = 1.0
    omega: float = 1e3
    delta_omega_range: tuple[float, float] = (0.0, 20.0)
    time_span: float = 1000.0
    sample_times: np.ndarray | None = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.time_span > 0:
            raise ValueError("time_span must be positive")
        if self.sample_times is not None:
            t = np.asarray(self.sample_times, dtype=float)
            if t.shape != (self.n_samples,) or not np.all(np.isfinite(t)):
                raise ValueError("sample_times must be n_samples finite values")

    def times(self, rng=None) -> np.ndarray:
        """Sampling instants; with no ``rng`` they are the ones the simulator uses."""
        if self.sample_times is not None:
            return np.asarray(self.sample_times, dtype=float)
        if rng is None:
            rng = _time_stream(self.seed)
        return np.sort(rng.uniform(0.0, self.time_span, size=self.n_samples))


@dataclass
class CommConfig:
    n_samples: int = 200
    outflux_range: tuple[float, float] = (0.0, 20.0)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.outflux_range[0] < 0 or self.outflux_range[1] < self.outflux_range[0]:
            raise ValueError(f"invalid outflux_range {self.outflux_range}")


@dataclass
class TimeSeriesPanel:
    """Observed node states (``series``) and responses, both ``M x N``.

    ``truth`` is the network the panel was generated from, after any
    normalization the simulator applied; it is ``None`` for observed data.
    """

    series: np.ndarray
    responses: np.ndarray
    dynamics_kind: DynamicsKind
    truth: WeightedNetwork | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=float)
        self.responses = np.asarray(self.responses, dtype=float)
        self.dynamics_kind = DynamicsKind.parse(self.dynamics_kind)
        if self.series.ndim != 2 or self.series.shape != self.responses.shape:
            raise ValueError(
                f"series and responses must share an M x N shape, got "
                f"{self.series.shape} and {self.responses.shape}")
        if not (np.all(np.isfinite(self.series)) and np.all(np.isfinite(self.responses))):
            raise ValueError("panel contains non-finite values")

    @property
    def n_samples(self) -> int:
        return self.series.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.series.shape[1]


def _streams(seed):
    """Independent generators for the drive signals and the noise."""
    drive, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(drive), np.random.default_rng(noise)


def _time_stream(seed):
    # third child of the same seed sequence; drive and noise are the first two
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])


def add_noise(panel: TimeSeriesPanel, sigma: float, seed=0, rng=None) -> TimeSeriesPanel:
    """Return a copy of ``panel`` with iid N(0, sigma^2) added to the responses."""
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    responses = panel.responses.copy()
    if sigma > 0:
        rng = np.random.default_rng(seed) if rng is None else rng
        responses += rng.normal(0.0, sigma, size=responses.shape)
    meta = dict(panel.metadata, sigma=float(sigma))
    return TimeSeriesPanel(panel.series.copy(), responses, panel.dynamics_kind, panel.truth, meta)


def ect_currents(weights, voltages) -> np.ndarray:
    """Kirchhoff currents ``I_i = sum_j w_ij (V_i - V_j)`` for each row of voltages."""
    w = np.asarray(weights, dtype=float)
    v = np.atleast_2d(np.asarray(voltages, dtype=float))
    return v * w.sum(axis=1) - v @ w.T


def simulate_ect(net: WeightedNetwork, cfg: EctConfig) -> TimeSeriesPanel:
    """Voltages ``V_i(t) = V sin((omega + dw_i) t)`` and Kirchhoff currents.

    Weights are conductances: ``I_i = sum_j w_ij (V_i - V_j)``.
    """
    w = net.weights
    if np.any(w < 0):
        raise ValueError("ECT conductances must be positive")
    drive, noise = _streams(cfg.seed)
    lo, hi = cfg.delta_omega_range
    t = cfg.times()
    dw = drive.uniform(lo, hi, size=net.n_nodes)
    v = cfg.v_bar * np.sin(np.outer(t, cfg.omega + dw))
    current = ect_currents(w, v)
    panel = TimeSeriesPanel(v, current, DynamicsKind.ECT, net,
                            {"dynamics": "ECT", "seed": cfg.seed, "sigma": 0.0})
    return add_noise(panel, cfg.noise_sigma, rng=noise)


def normalize_incoming(net: WeightedNetwork):
    """Scale each column so the incoming weights of every node sum to one.

    Returns the normalized network and the indices of nodes with no incoming
    edge (their columns stay zero).
    """
    w = net.weights
    col = w.sum(axis=0)
    orphan = np.flatnonzero(col == 0)
    scale = np.where(col == 0, 1.0, col)
    return WeightedNetwork(w / scale), orphan


def simulate_communication(net: WeightedNetwork, cfg: CommConfig) -> TimeSeriesPanel:
    """Incoming packet flux ``f_i = sum_j w_ji o_j`` with random outgoing flux."""
    if np.any(net.weights < 0):
        raise ValueError("communication probabilities must be nonnegative")
    truth, orphan = normalize_incoming(net)
    drive, noise = _streams(cfg.seed)
    lo, hi = cfg.outflux_range
    o = drive.uniform(lo, hi, size=(cfg.n_samples, net.n_nodes))
    flux = o @ truth.weights
    meta = {"dynamics": "Communication", "seed": cfg.seed, "sigma": 0.0,
            "zero_in_degree": orphan.tolist()}
    panel = TimeSeriesPanel(o, flux, DynamicsKind.COMMUNICATION, truth, meta)
    return add_noise(panel, cfg.noise_sigma, rng=noise)


def simulate_linear_mixing(net: WeightedNetwork, n_samples: int, sigma: float = 0.0,
                           seed=0) -> TimeSeriesPanel:
    """Responses ``s_i = sum_k w_ik x_k`` over iid U(0, 1) driver series ``x``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    drive, noise = _streams(seed)
    x = drive.uniform(0.0, 1.0, size=(n_samples, net.n_nodes))
    s = x @ net.weights.T
    panel = TimeSeriesPanel(x, s, DynamicsKind.LINEAR_MIXING, net,
                            {"dynamics": "LinearMixing", "seed": seed, "sigma": 0.0})
    return add_noise(panel, sigma, rng=noise)


def simulate(net, kind, n_samples, sigma=0.0, seed=0, **kwargs) -> TimeSeriesPanel:
    """Dispatch to the simulator for ``kind`` with default drive settings."""
    kind = DynamicsKind.parse(kind)
    if kind is DynamicsKind.ECT:
        return simulate_ect(net, EctConfig(n_samples=n_samples, noise_sigma=sigma, seed=seed, **kwargs))
    if kind is DynamicsKind.COMMUNICATION:
        return simulate_communication(net, CommConfig(n_samples=n_samples, noise_sigma=sigma,
                                                      seed=seed, **kwargs))
    return simulate_linear_mixing(net, n_samples, sigma, seed)


# ---------------------------------------------------------------- CSV I/O

def _write_matrix(path, mat):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"node_{k + 1}" for k in range(mat.shape[1])])
        for row in mat:
            wr.writerow([repr(float(x)) for x in row])


def _read_matrix(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    width = len(rows[0])
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        try:
            out.append([float(x) for x in row])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rows[0], np.array(out, dtype=float).reshape(-1, width)


def _sidecars(path):
    path = Path(path)
    stem = path.with_suffix("")
    return Path(f"{stem}.responses.csv"), Path(f"{stem}.meta.json")


def write_panel(panel: TimeSeriesPanel, path) -> None:
    """Write ``path`` (series), ``<stem>.responses.csv`` and ``<stem>.meta.json``."""
    resp_path, meta_path = _sidecars(path)
    _write_matrix(path, panel.series)
    _write_matrix(resp_path, panel.responses)
    meta = dict(panel.metadata)
    meta["dynamics"] = panel.dynamics_kind.value
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_panel(path, dynamics=None) -> TimeSeriesPanel:
    """Read a panel written by :func:`write_panel`.

    Without a responses sidecar the series doubles as the responses (observed
    prices, for instance).
    """
    resp_path, meta_path = _sidecars(path)
    _, series = _read_matrix(path)
    responses = _read_matrix(resp_path)[1] if resp_path.exists() else series.copy()
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    kind = dynamics if dynamics is not None else meta.get("dynamics", "LinearMixing")
    return TimeSeriesPanel(series, responses, kind, None, meta)
