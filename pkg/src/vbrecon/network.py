"""Weighted network types, random topology generators and topology file I/O.

Generated topologies are undirected and stored as symmetric weight matrices.
Solvers never rely on that symmetry; they recover one row (or column) at a
time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "GeneratorKind",
    "GeneratorSpec",
    "NetworkParseError",
    "WeightedNetwork",
    "degree_preserving_shuffle",
    "generate",
    "generate_ba",
    "generate_powerlaw_sf",
    "generate_ws",
    "load_builtin",
    "powerlaw_slope",
    "read_network",
    "write_network",
]


class NetworkParseError(ValueError):
    """Raised when a topology file cannot be parsed."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


@dataclass(frozen=True, eq=False)
class WeightedNetwork:
    """Loop-free weighted network on ``n_nodes`` nodes.

    ``weights[i, j]`` is the strength of the connection from ``i`` to ``j``;
    the adjacency matrix is derived from it so that ``a_ij = 1`` exactly when
    ``w_ij != 0``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        np.fill_diagonal(w, 0.0)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        return (self.weights != 0).astype(np.int8)

    @property
    def n_edges(self) -> int:
        """Number of nonzero ordered pairs (twice the undirected edge count)."""
        return int(np.count_nonzero(self.weights))

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return bool(np.allclose(self.weights, self.weights.T, rtol=0.0, atol=atol))

    def undirected_edges(self) -> list[tuple[int, int]]:
        a = self.adjacency
        a = a | a.T
        i, j = np.nonzero(np.triu(a, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def degrees(self) -> np.ndarray:
        a = self.adjacency
        return (a | a.T).sum(axis=1)

    @classmethod
    def from_edges(cls, n_nodes, edges, weights=None, symmetric=True):
        w = np.zeros((n_nodes, n_nodes))
        if weights is None:
            weights = np.ones(len(edges))
        for (i, j), x in zip(edges, weights):
            w[i, j] = x
            if symmetric:
                w[j, i] = x
        return cls(w)

    def __eq__(self, other):
        if not isinstance(other, WeightedNetwork):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __repr__(self):
        return f"WeightedNetwork(n_nodes={self.n_nodes}, nonzeros={self.n_edges})"


class GeneratorKind(str, enum.Enum):
    BA = "BA"
    WS = "WS"
    SF = "PowerLawSF"


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for the random topology generators.

    ``ba_seed_nodes`` is the size of the initial clique for preferential
    attachment (defaults to ``ba_edges_per_node``).
    """

    kind: GeneratorKind = GeneratorKind.BA
    n_nodes: int = 50
    ba_edges_per_node: int = 2
    ba_seed_nodes: int | None = None
    ws_mean_degree: int = 4
    ws_rewire_prob: float = 0.1
    sf_gamma: float = -2.5
    weight_range: tuple[float, float] = (2.0, 3.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", GeneratorKind(self.kind))
        lo, hi = self.weight_range
        if not 0 <= lo <= hi or hi == 0:
            raise ValueError(f"weight_range must satisfy 0 <= lo <= hi, hi > 0, got {self.weight_range}")
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")


def _rng(seed):
    return np.random.default_rng(seed)


def _weighted_from_edges(n, edges, weight_range, rng):
    # One draw per undirected edge, in sorted edge order.
    edges = sorted((min(i, j), max(i, j)) for i, j in edges)
    lo, hi = weight_range
    return WeightedNetwork.from_edges(n, edges, rng.uniform(lo, hi, size=len(edges)))


def generate_ba(spec: GeneratorSpec) -> WeightedNetwork:
    """Barabasi-Albert preferential attachment grown from a seed clique."""
    n, m = spec.n_nodes, spec.ba_edges_per_node
    m0 = spec.ba_seed_nodes if spec.ba_seed_nodes is not None else m
    if m < 1 or n <= m:
        raise ValueError(f"BA needs n_nodes > ba_edges_per_node >= 1, got n={n}, m={m}")
    if not m <= m0 < n:
        raise ValueError(f"BA seed clique size must be in [m, n), got {m0}")
    rng = _rng(spec.seed)

    edges = [(i, j) for i in range(m0) for j in range(i + 1, m0)]
    # Each node appears once per incident edge end, so uniform picks from
    # this list are degree-proportional.
    ends = [v for e in edges for v in e]
    for new in range(m0, n):
        pool = np.asarray(ends) if ends else np.arange(new)
        targets = set()
        if ends:
            while len(targets) < m:
                targets.add(int(pool[rng.integers(len(pool))]))
        else:
            targets.update(rng.choice(new, size=m, replace=False).tolist())
        for t in sorted(targets):
            edges.append((t, new))
            ends.extend((t, new))
    return _weighted_from_edges(n, edges, spec.weight_range, rng)


def generate_ws(spec: GeneratorSpec) -> WeightedNetwork:
    """Watts-Strogatz ring lattice with random rewiring of the far endpoint."""
    n, k, p = spec.n_nodes, spec.ws_mean_degree, spec.ws_rewire_prob
    if k < 2 or k % 2:
        raise ValueError(f"ws_mean_degree must be a positive even integer, got {k}")
    if k >= n:
        raise ValueError(f"ws_mean_degree must be < n_nodes, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"ws_rewire_prob must be in [0, 1], got {p}")
    rng = _rng(spec.seed)

    nbrs = [set() for _ in range(n)]
    for i in range(n):
        for s in range(1, k // 2 + 1):
            j = (i + s) % n
            nbrs[i].add(j)
            nbrs[j].add(i)
    for s in range(1, k // 2 + 1):
        for i in range(n):
            j = (i + s) % n
            if j not in nbrs[i] or rng.random() >= p:
                continue
            candidates = [v for v in range(n) if v != i and v not in nbrs[i]]
            if not candidates:
                continue
            v = candidates[rng.integers(len(candidates))]
            nbrs[i].discard(j)
            nbrs[j].discard(i)
            nbrs[i].add(v)
            nbrs[v].add(i)
    edges = [(i, j) for i in range(n) for j in nbrs[i] if i < j]
    return _weighted_from_edges(n, edges, spec.weight_range, rng)


def _powerlaw_degrees(n, gamma, rng):
    k = np.arange(1, n)
    pmf = k.astype(float) ** gamma
    cdf = np.cumsum(pmf / pmf.sum())
    cdf[-1] = 1.0
    deg = k[np.searchsorted(cdf, rng.random(n), side="right")]
    if deg.sum() % 2:
        open_nodes = np.flatnonzero(deg < n - 1)
        deg[open_nodes[rng.integers(len(open_nodes))]] += 1
    return deg


def generate_powerlaw_sf(spec: GeneratorSpec) -> WeightedNetwork:
    """Configuration-model graph with degrees drawn from ``p(k) ~ k**gamma``.

    Degrees are sampled on ``{1, ..., N-1}`` by inverse CDF; self-loops and
    repeated stub pairs are dropped after wiring.
    """
    n, gamma = spec.n_nodes, spec.sf_gamma
    if not -3.0 <= gamma <= -2.0:
        raise ValueError(f"sf_gamma must lie in [-3, -2], got {gamma}")
    if n < 20:
        raise ValueError(f"power-law generator needs n_nodes >= 20, got {n}")
    rng = _rng(spec.seed)

    deg = _powerlaw_degrees(n, gamma, rng)
    stubs = np.repeat(np.arange(n), deg)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    edges = {(int(min(a, b)), int(max(a, b))) for a, b in pairs if a != b}
    return _weighted_from_edges(n, edges, spec.weight_range, rng)


_GENERATORS = {
    GeneratorKind.BA: generate_ba,
    GeneratorKind.WS: generate_ws,
    GeneratorKind.SF: generate_powerlaw_sf,
}


def generate(spec: GeneratorSpec) -> WeightedNetwork:
    return _GENERATORS[spec.kind](spec)


def powerlaw_slope(degrees, base: float = 2.0) -> float:
    """Least-squares log-log slope of a logarithmically binned degree density.

    Bins start at the smallest observed degree so the first bin is not
    truncated by the degree floor.
    """
    d = np.asarray(degrees)
    d = d[d > 0]
    kmin = d.min()
    edges = kmin * base ** np.arange(0, math.ceil(math.log(d.max() / kmin, base)) + 2)
    counts, _ = np.histogram(d, bins=edges)
    # bins hold the integers in [lo, hi)
    widths = np.ceil(edges[1:]) - np.ceil(edges[:-1])
    centers = np.sqrt(edges[:-1] * (edges[1:] - 1).clip(min=edges[:-1]))
    keep = counts > 0
    x = np.log(centers[keep])
    y = np.log(counts[keep] / widths[keep] / d.size)
    return float(np.polyfit(x, y, 1)[0])


def degree_preserving_shuffle(net: WeightedNetwork, n_swaps=None, seed=0) -> WeightedNetwork:
    """Randomize an undirected topology by double-edge swaps.

    Every node keeps its degree; each edge keeps its weight.
    """
    rng = _rng(seed)
    w = net.weights
    sym = np.maximum(np.abs(w), np.abs(w.T))
    edges = [list(e) for e in net.undirected_edges()]
    weights = [sym[i, j] for i, j in edges]
    if len(edges) < 2:
        return WeightedNetwork(sym)
    present = {tuple(e) for e in edges}
    n_swaps = 10 * len(edges) if n_swaps is None else n_swaps
    for _ in range(n_swaps):
        x, y = rng.choice(len(edges), size=2, replace=False)
        a, b = edges[x]
        c, d = edges[y]
        if rng.random() < 0.5:
            c, d = d, c
        # (a,b),(c,d) -> (a,d),(c,b)
        if len({a, b, c, d}) < 4:
            continue
        e1, e2 = (min(a, d), max(a, d)), (min(c, b), max(c, b))
        if e1 in present or e2 in present:
            continue
        present -= {(min(a, b), max(a, b)), (min(c, d), max(c, d))}
        present |= {e1, e2}
        edges[x], edges[y] = list(e1), list(e2)
    return WeightedNetwork.from_edges(net.n_nodes, [tuple(e) for e in edges], weights)


# ---------------------------------------------------------------- file I/O

_FORMATS = ("tsv", "mtx")


def _normalize_format(fmt, path):
    if fmt is None:
        fmt = "mtx" if str(path).endswith(".mtx") else "tsv"
    fmt = fmt.lower()
    aliases = {"edgelisttsv": "tsv", "edgelist": "tsv", "matrixmarket": "mtx"}
    fmt = aliases.get(fmt, fmt)
    if fmt not in _FORMATS:
        raise ValueError(f"unknown network format {fmt!r}")
    return fmt


def _read_tsv(path, symmetric):
    n_header = None
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith(("#", "%")):
                words = s.lstrip("#% ").split()
                if words[:1] == ["nodes"] and len(words) == 2:
                    n_header = int(words[1])
                elif words == ["symmetric"] and symmetric is None:
                    symmetric = True
                elif words == ["directed"] and symmetric is None:
                    symmetric = False
                continue
            parts = s.split()
            if len(parts) not in (2, 3):
                raise NetworkParseError(path, lineno, f"expected 'i j [w]', got {s!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                x = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise NetworkParseError(path, lineno, str(exc)) from None
            if i < 1 or j < 1 or (n_header is not None and max(i, j) > n_header):
                raise NetworkParseError(path, lineno, f"node index out of range: {i}, {j}")
            entries.append((lineno, i - 1, j - 1, x))
    n = n_header if n_header is not None else max((max(i, j) + 1 for _, i, j, _ in entries), default=0)
    return n, entries, True if symmetric is None else symmetric


def _read_mtx(path, symmetric):
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise NetworkParseError(path, 1, "missing %%MatrixMarket banner")
    banner = lines[0].lower().split()
    if len(banner) < 5 or banner[1] != "matrix" or banner[2] != "coordinate":
        raise NetworkParseError(path, 1, "only 'matrix coordinate' files are supported")
    field_, sym = banner[3], banner[4]
    if field_ not in ("real", "integer", "pattern"):
        raise NetworkParseError(path, 1, f"unsupported field {field_!r}")
    if sym not in ("general", "symmetric"):
        raise NetworkParseError(path, 1, f"unsupported symmetry {sym!r}")
    size = None
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        if size is None:
            try:
                rows, cols, nnz = (int(v) for v in parts)
            except ValueError:
                raise NetworkParseError(path, lineno, f"bad size line {s!r}") from None
            if rows != cols:
                raise NetworkParseError(path, lineno, "adjacency matrix must be square")
            size = rows
            continue
        want = 2 if field_ == "pattern" else 3
        if len(parts) != want:
            raise NetworkParseError(path, lineno, f"expected {want} fields, got {s!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            x = 1.0 if field_ == "pattern" else float(parts[2])
        except ValueError as exc:
            raise NetworkParseError(path, lineno, str(exc)) from None
        if not (1 <= i <= size and 1 <= j <= size):
            raise NetworkParseError(path, lineno, f"index out of range: {i}, {j}")
        entries.append((lineno, i - 1, j - 1, x))
    if size is None:
        raise NetworkParseError(path, len(lines), "missing size line")
    if symmetric is None:
        symmetric = sym == "symmetric"
    return size, entries, symmetric


def read_network(path, fmt=None, symmetric=None) -> WeightedNetwork:
    """Read a topology from an edge-list TSV or a Matrix Market file.

    Indices in both formats are 1-based. Edge lists without a ``# directed``
    header are taken as undirected. Self-loops are dropped.
    """
    fmt = _normalize_format(fmt, path)
    reader = _read_tsv if fmt == "tsv" else _read_mtx
    n, entries, symmetric = reader(path, symmetric)
    w = np.zeros((n, n))
    seen = {}
    for lineno, i, j, x in entries:
        if i == j:
            continue
        targets = [(i, j), (j, i)] if symmetric else [(i, j)]
        for key in targets:
            if key in seen and w[key] != x:
                raise NetworkParseError(path, lineno, f"conflicting weight for edge {i + 1}-{j + 1}")
            seen[key] = lineno
            w[key] = x
    return WeightedNetwork(w)


def write_network(net: WeightedNetwork, path, fmt=None) -> None:
    """Write ``net``; symmetric networks store each undirected edge once."""
    fmt = _normalize_format(fmt, path)
    w = net.weights
    symmetric = net.is_symmetric()
    if symmetric:
        i, j = np.nonzero(np.tril(w) if fmt == "mtx" else np.triu(w))
    else:
        i, j = np.nonzero(w)
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "mtx":
            kind = "symmetric" if symmetric else "general"
            fh.write(f"%%MatrixMarket matrix coordinate real {kind}\n")
            fh.write(f"{net.n_nodes} {net.n_nodes} {len(i)}\n")
            for a, b in zip(i.tolist(), j.tolist()):
                fh.write(f"{a + 1} {b + 1} {float(w[a, b])!r}\n")
        else:
            fh.write(f"# nodes {net.n_nodes}\n")
            fh.write("# symmetric\n" if symmetric else "# directed\n")
            for a, b in zip(i.tolist(), j.tolist()):
                fh.write(f"{a + 1}\t{b + 1}\t{float(w[a, b])!r}\n")


def load_builtin(name: str) -> WeightedNetwork:
    """Load a topology shipped with the package (``"karate"``)."""
    ref = resources.files("vbrecon") / "data" / f"{name.lower()}.tsv"
    if not ref.is_file():
        raise FileNotFoundError(f"no built-in network named {name!r}")
    with resources.as_file(ref) as p:
        return read_network(Path(p), "tsv")
