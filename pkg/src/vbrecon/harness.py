"""Seeded experiment runner: generate, simulate, reconstruct, score, persist.

Configurations are flat ``key = value`` text files. Lists are comma
separated, optionally in brackets; ``#`` starts a comment::

    experiment = Exp1_BA_WS
    dynamics = ECT
    sigma_grid = [0.1, 0.4, 0.7, 1.0]
    n_replicates = 20
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dynamics import DynamicsKind, TimeSeriesPanel, simulate
from .lasso import LassoOptions, lasso_reconstruct
from .metrics import average_nmi, cohesion_index, mean_cohesion, tpr_tnr, strength_error
from .network import (GeneratorKind, GeneratorSpec, WeightedNetwork, degree_preserving_shuffle,
                      generate, load_builtin, read_network)
from .vbr import vbr_reconstruct

__all__ = [
    "ConfigError",
    "Experiment",
    "ExperimentConfig",
    "IngestionError",
    "RESULT_COLUMNS",
    "ResultRow",
    "StockReport",
    "load_config",
    "planted_partition_prices",
    "read_labels",
    "read_prices",
    "reconstruct",
    "replicate_seed",
    "run_experiment",
    "run_stock",
    "summarize",
    "write_results",
]


class ConfigError(ValueError):
    pass


class IngestionError(ValueError):
    pass


class Experiment(str, enum.Enum):
    EXP1 = "Exp1_BA_WS"
    EXP2 = "Exp2_SF_gamma"
    EXP3 = "Exp3_scaling"
    EXP4 = "Exp4_real"
    EXP5 = "Exp5_stock"


METHODS = ("VBR", "Lasso")
_DEFAULT_NETWORKS = {
    Experiment.EXP1: ("BA", "WS"),
    Experiment.EXP2: ("PowerLawSF",),
    Experiment.EXP3: ("BA",),
    Experiment.EXP4: ("karate",),
    Experiment.EXP5: (),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment = Experiment.EXP1
    dynamics: DynamicsKind = DynamicsKind.ECT
    n_nodes: int = 50
    n_samples: int = 50
    sigma_grid: tuple = (0.1,)
    gamma_grid: tuple = (-2.5,)
    n_grid: tuple = ()
    networks: tuple = ()
    n_replicates: int = 20
    methods: tuple = METHODS
    seed: int = 0
    output_dir: str = "."
    weight_range: tuple = ()
    threshold: float = 0.5
    lasso_n_lambdas: int = 100
    lasso_min_ratio: float = 1e-3
    lasso_folds: int = 5
    workers: int = 1
    prices: str = ""
    labels: str = ""
    nmf_restarts: int = 100

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("experiment", Experiment(self.experiment))
        set_("dynamics", DynamicsKind.parse(self.dynamics))
        for name in ("sigma_grid", "gamma_grid", "n_grid", "networks", "methods", "weight_range"):
            set_(name, tuple(getattr(self, name)))
        set_("methods", tuple(_method_name(m) for m in self.methods))
        if not self.networks:
            set_("networks", _DEFAULT_NETWORKS[self.experiment])
        if not self.n_grid:
            set_("n_grid", (self.n_nodes,))
        if not self.weight_range:
            # conductances for ECT; probabilities (normalized later) otherwise
            set_("weight_range", (2.0, 3.0) if self.dynamics is DynamicsKind.ECT else (0.0, 1.0))
        if self.n_replicates < 1:
            raise ConfigError("n_replicates must be >= 1")
        if not self.sigma_grid or any(s < 0 for s in self.sigma_grid):
            raise ConfigError("sigma_grid must be nonempty and nonnegative")
        if self.experiment is Experiment.EXP2 and not self.gamma_grid:
            raise ConfigError("gamma_grid must be nonempty")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        if self.n_samples < 1 or any(n < 2 for n in self.n_grid):
            raise ConfigError("n_samples must be >= 1 and every N >= 2")
        if len(self.weight_range) != 2:
            raise ConfigError("weight_range needs two values")

    def resolved(self) -> list[tuple[str, str]]:
        """Every field with its effective value, in declaration order."""
        return [(f.name, _format_value(getattr(self, f.name))) for f in fields(self)]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.resolved())


def _method_name(m):
    for name in METHODS:
        if str(m).lower() == name.lower():
            return name
    raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")


def _format_value(v):
    if isinstance(v, enum.Enum):
        return str(v.value)
    if isinstance(v, tuple):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    return str(v)


_TUPLE_FIELDS = {"sigma_grid": float, "gamma_grid": float, "n_grid": int, "networks": str,
                 "methods": str, "weight_range": float}


def _parse_value(name, raw, ftype):
    raw = raw.strip()
    if name in _TUPLE_FIELDS:
        inner = raw[1:-1] if raw.startswith("[") and raw.endswith("]") else raw
        items = [x.strip() for x in inner.split(",") if x.strip()]
        return tuple(_TUPLE_FIELDS[name](x) for x in items)
    if ftype in ("int", int):
        return int(raw)
    if ftype in ("float", float):
        return float(raw)
    return raw


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw, known[key])
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


# ---------------------------------------------------------------- seeding

_EXP_INDEX = {e: i for i, e in enumerate(Experiment)}


def replicate_seed(master: int, experiment: Experiment, cell: tuple, replicate: int) -> int:
    """Deterministic 63-bit seed for one cell-replicate."""
    key = [int(master), _EXP_INDEX[Experiment(experiment)], *map(int, cell), int(replicate)]
    state = np.random.SeedSequence(key).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def _child_seed(seed, k):
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


# ---------------------------------------------------------------- rows

RESULT_COLUMNS = ["experiment", "method", "dynamics", "N", "M", "sigma", "gamma", "replicate",
                  "seed", "tpr", "tnr", "error", "runtime_seconds", "iterations", "network",
                  "status"]


@dataclass
class ResultRow:
    experiment: str
    method: str
    dynamics: str
    N: int
    M: int
    sigma: float
    gamma: float
    replicate: int
    seed: int
    tpr: float = math.nan
    tnr: float = math.nan
    error: float = math.nan
    runtime_seconds: float = math.nan
    iterations: float = math.nan
    network: str = ""
    status: str = "ok"
    cell: tuple = field(default=(), repr=False, compare=False)

    def as_list(self):
        return [_fmt(getattr(self, c)) for c in RESULT_COLUMNS]


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


# ---------------------------------------------------------------- cells

@dataclass(frozen=True)
class _Cell:
    index: tuple
    network: str
    n_nodes: int
    sigma: float
    gamma: float


def _cells(cfg: ExperimentConfig):
    exp = cfg.experiment
    nan = math.nan
    out = []
    if exp is Experiment.EXP1 or exp is Experiment.EXP4:
        for a, net in enumerate(cfg.networks):
            for b, s in enumerate(cfg.sigma_grid):
                out.append(_Cell((a, b), net, cfg.n_nodes, s, nan))
    elif exp is Experiment.EXP2:
        for a, g in enumerate(cfg.gamma_grid):
            for b, s in enumerate(cfg.sigma_grid):
                out.append(_Cell((a, b), cfg.networks[0], cfg.n_nodes, s, g))
    elif exp is Experiment.EXP3:
        for a, n in enumerate(cfg.n_grid):
            for b, s in enumerate(cfg.sigma_grid):
                out.append(_Cell((a, b), cfg.networks[0], n, s, nan))
    else:
        raise ConfigError(f"{exp.value} is run with run_stock")
    return out


def generator_kind(name):
    try:
        return GeneratorKind(name)
    except ValueError:
        pass
    lowered = {k.value.lower(): k for k in GeneratorKind}
    aliases = {"sf": GeneratorKind.SF, "powerlaw": GeneratorKind.SF}
    return lowered.get(name.lower(), aliases.get(name.lower()))


def _reweight(net: WeightedNetwork, weight_range, seed) -> WeightedNetwork:
    edges = net.undirected_edges() if net.is_symmetric() else list(zip(*np.nonzero(net.weights)))
    rng = np.random.default_rng(seed)
    lo, hi = weight_range
    return WeightedNetwork.from_edges(net.n_nodes, edges, rng.uniform(lo, hi, size=len(edges)),
                                      symmetric=net.is_symmetric())


def _make_network(cfg: ExperimentConfig, cell: _Cell, seed: int) -> WeightedNetwork:
    kind = generator_kind(cell.network)
    if kind is not None:
        extra = {"sf_gamma": cell.gamma} if kind is GeneratorKind.SF else {}
        return generate(GeneratorSpec(kind=kind, n_nodes=cell.n_nodes, seed=seed,
                                      weight_range=tuple(cfg.weight_range), **extra))
    try:
        topo = load_builtin(cell.network)
    except FileNotFoundError:
        topo = read_network(cell.network)
    return _reweight(topo, cfg.weight_range, seed)


def reconstruct(panel: TimeSeriesPanel, method: str, cfg: ExperimentConfig | None = None,
                seed: int = 0):
    cfg = ExperimentConfig() if cfg is None else cfg
    method = _method_name(method)
    if method == "VBR":
        return vbr_reconstruct(panel, threshold=cfg.threshold)
    opts = LassoOptions(n_lambdas=cfg.lasso_n_lambdas, lambda_min_ratio=cfg.lasso_min_ratio,
                        k_folds=cfg.lasso_folds, seed=seed)
    return lasso_reconstruct(panel, opts)


def _run_cell_replicate(args):
    cfg, cell, rep = args
    seed = replicate_seed(cfg.seed, cfg.experiment, cell.index, rep)
    base = dict(experiment=cfg.experiment.value, dynamics=cfg.dynamics.value, M=cfg.n_samples,
                sigma=float(cell.sigma), gamma=float(cell.gamma), replicate=rep, seed=seed,
                network=cell.network, cell=cell.index)
    try:
        net = _make_network(cfg, cell, _child_seed(seed, 0))
        panel = simulate(net, cfg.dynamics, cfg.n_samples, cell.sigma, _child_seed(seed, 1))
        truth = panel.truth
    except Exception as exc:  # noqa: BLE001 - recorded as an error row
        return [ResultRow(method=m, N=cell.n_nodes, status=f"error: {exc}", **base)
                for m in cfg.methods]
    rows = []
    for m in cfg.methods:
        try:
            res = reconstruct(panel, m, cfg, _child_seed(seed, 2))
            tpr, tnr = tpr_tnr(truth, res.weights)
            rows.append(ResultRow(method=m, N=truth.n_nodes, tpr=tpr, tnr=tnr,
                                  error=strength_error(truth, res.weights),
                                  runtime_seconds=float(res.runtime_seconds),
                                  iterations=float(np.mean(res.iterations)), **base))
        except Exception as exc:  # noqa: BLE001
            rows.append(ResultRow(method=m, N=truth.n_nodes, status=f"error: {exc}", **base))
    return rows


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Every (cell, replicate, method) in canonical order.

    Failures become rows with ``status`` starting with ``error:``.
    """
    jobs = [(cfg, cell, rep) for cell in _cells(cfg) for rep in range(cfg.n_replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(_run_cell_replicate, jobs))
    else:
        chunks = [_run_cell_replicate(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


# ---------------------------------------------------------------- output

_SUMMARY_KEYS = ["experiment", "method", "dynamics", "network", "N", "M", "sigma", "gamma"]
_SUMMARY_STATS = ["tpr", "tnr", "error", "runtime_seconds"]


def summarize(rows):
    """Mean and sample standard deviation per cell and method (ok rows only)."""
    groups = {}
    for r in rows:
        key = tuple(_fmt(getattr(r, k)) for k in _SUMMARY_KEYS)
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if r.status == "ok"]
        rec = dict(zip(_SUMMARY_KEYS, key))
        rec["n_ok"] = len(ok)
        rec["n_error"] = len(rs) - len(ok)
        for s in _SUMMARY_STATS:
            vals = np.array([getattr(r, s) for r in ok], dtype=float)
            vals = vals[np.isfinite(vals)]
            rec[f"{s}_mean"] = float(vals.mean()) if vals.size else math.nan
            rec[f"{s}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
        out.append(rec)
    return out


def config_header(cfg):
    return "".join(f"# {k} = {v}\n" for k, v in cfg.resolved())


def results_csv(rows, cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(config_header(cfg))
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(RESULT_COLUMNS)
    for r in rows:
        wr.writerow(r.as_list())
    return buf.getvalue()


def summary_csv(rows, cfg: ExperimentConfig) -> str:
    recs = summarize(rows)
    buf = io.StringIO()
    buf.write(config_header(cfg))
    cols = _SUMMARY_KEYS + ["n_ok", "n_error"] + [f"{s}_{t}" for s in _SUMMARY_STATS
                                                  for t in ("mean", "std")]
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for rec in recs:
        wr.writerow([_fmt(rec[c]) for c in cols])
    return buf.getvalue()


def write_results(rows, cfg: ExperimentConfig, path=None) -> tuple[Path, Path]:
    """Write ``<experiment>_results.csv`` and the matching ``_summary.csv``."""
    if path is None:
        path = Path(cfg.output_dir) / f"{cfg.experiment.value}_results.csv"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    summary = path.with_name(path.stem.replace("_results", "") + "_summary.csv")
    path.write_text(results_csv(rows, cfg), encoding="utf-8")
    summary.write_text(summary_csv(rows, cfg), encoding="utf-8")
    return path, summary


# ---------------------------------------------------------------- stock data

def read_prices(path) -> tuple[list[str], np.ndarray]:
    """Header of tickers, then one row of prices per trading day."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError(f"{path}: empty prices file")
    tickers = [t.strip() for t in rows[0]]
    if len(set(tickers)) != len(tickers) or any(not t for t in tickers):
        raise IngestionError(f"{path}:1: tickers must be unique and nonempty")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(tickers):
            raise IngestionError(f"{path}:{lineno}: expected {len(tickers)} prices, got {len(row)}")
        vals = []
        for col, cellv in enumerate(row, start=1):
            try:
                v = float(cellv)
            except ValueError:
                raise IngestionError(f"{path}:{lineno}:{col}: non-numeric price {cellv!r}") from None
            if not math.isfinite(v):
                raise IngestionError(f"{path}:{lineno}:{col}: non-finite price {cellv!r}")
            vals.append(v)
        data.append(vals)
    if not data:
        raise IngestionError(f"{path}: no price rows")
    return tickers, np.array(data)


def read_labels(path, tickers=None) -> dict:
    """``ticker,industry`` rows; a leading ``ticker,industry`` header is allowed."""
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise IngestionError(f"{path}:{lineno}: expected 'ticker,industry'")
            t, ind = row[0].strip(), row[1].strip()
            if lineno == 1 and (t.lower(), ind.lower()) == ("ticker", "industry"):
                continue
            labels[t] = ind
    if tickers is not None:
        for col, t in enumerate(tickers, start=1):
            if t not in labels:
                raise IngestionError(f"{path}: no label for ticker {t!r} (prices column {col})")
    return labels


def planted_partition_prices(n_blocks=5, block_size=10, n_days=212, market=0.5, idio=1.0,
                             seed=0):
    """Synthetic prices driven by a market factor plus one factor per block.

    All factors are Gaussian random walks. Returns ``(tickers, prices, labels)``.
    """
    rng = np.random.default_rng(seed)
    n = n_blocks * block_size
    walks = np.cumsum(rng.normal(size=(n_days, n_blocks + 1)), axis=0)
    block = np.repeat(np.arange(n_blocks), block_size)
    loading = rng.uniform(0.5, 1.5, size=n)
    prices = (20.0 + walks[:, block] * loading + market * walks[:, [n_blocks]]
              + idio * rng.normal(size=(n_days, n)))
    tickers = [f"S{i + 1:03d}" for i in range(n)]
    labels = {t: f"industry_{b + 1}" for t, b in zip(tickers, block)}
    return tickers, prices, labels


@dataclass
class StockReport:
    method: str
    n_edges: int
    mean_ci: float
    ci_excluded: int
    null_mean_ci: float
    nmi: float
    runtime_seconds: float


def run_stock(prices, labels, methods=METHODS, seed: int = 0, restarts: int = 100,
              tickers=None):
    """Reconstruct a price network with each method and score it against industries.

    ``prices`` and ``labels`` are file paths, or an ``M x N`` array and a
    ticker-to-industry mapping (then ``tickers`` gives the column order).
    Returns ``(results, reports)``, both keyed by method.
    """
    if isinstance(prices, (str, Path)):
        tickers, prices = read_prices(prices)
    elif tickers is None:
        raise IngestionError("tickers are required with an in-memory price array")
    if isinstance(labels, (str, Path)):
        labels = read_labels(labels, tickers)
    missing = [t for t in tickers if t not in labels]
    if missing:
        raise IngestionError(f"no label for tickers {missing}")
    lab = [labels[t] for t in tickers]
    prices = np.asarray(prices, dtype=float)
    panel = TimeSeriesPanel(prices, prices.copy(), DynamicsKind.LINEAR_MIXING, None,
                            {"dynamics": "LinearMixing", "tickers": list(tickers)})
    k = len(set(lab))
    results, reports = {}, {}
    for m in methods:
        m = _method_name(m)
        start = time.perf_counter()
        res = reconstruct(panel, m, seed=seed)
        elapsed = time.perf_counter() - start
        ci = cohesion_index(res.weights, lab)
        mean_ci, excluded = mean_cohesion(ci)
        null = degree_preserving_shuffle(WeightedNetwork(res.weights), seed=seed)
        null_ci, _ = mean_cohesion(cohesion_index(null, lab))
        nmi_avg = average_nmi(res.weights, lab, k, restarts, seed) if k > 1 else math.nan
        results[m] = res
        reports[m] = StockReport(m, int(np.count_nonzero(res.weights)), mean_ci, excluded,
                                 null_ci, nmi_avg, elapsed)
    return results, reports


def stock_csv(reports) -> str:
    buf = io.StringIO()
    cols = [f.name for f in fields(StockReport)]
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for rep in reports.values():
        wr.writerow([_fmt(getattr(rep, c)) for c in cols])
    return buf.getvalue()

