"""Per-node regression problems and reassembly of the network estimate."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsKind, TimeSeriesPanel
from .network import WeightedNetwork

__all__ = [
    "AssemblyError",
    "NodeSolution",
    "Orientation",
    "ReconstructionResult",
    "RegressionProblem",
    "assemble_network",
    "build_comm_problem",
    "build_ect_problem",
    "build_mixing_problem",
    "build_problem",
    "build_problems",
]


class Orientation(str, enum.Enum):
    ROW = "RowWise"
    COLUMN = "ColumnWise"


class AssemblyError(ValueError):
    pass


@dataclass
class RegressionProblem:
    """``y ~ X (a * w)`` for one node.

    Column ``k`` of ``X`` belongs to node ``column_nodes[k]``; the target node
    never has a column.
    """

    node: int
    y: np.ndarray
    X: np.ndarray
    column_nodes: np.ndarray
    orientation: Orientation

    def export_csv(self, path) -> None:
        """Dump ``[y | X]`` with a header naming the source nodes (1-based)."""
        header = ",".join(["y"] + [f"node_{j + 1}" for j in self.column_nodes])
        np.savetxt(path, np.column_stack([self.y, self.X]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def _others(n, i):
    if not 0 <= i < n:
        raise IndexError(f"node index {i} out of range for {n} nodes")
    return np.array([j for j in range(n) if j != i], dtype=int)


def _check_kind(panel, kind):
    if panel.dynamics_kind is not kind:
        raise ValueError(f"expected a {kind.value} panel, got {panel.dynamics_kind.value}")


def build_ect_problem(panel: TimeSeriesPanel, i: int) -> RegressionProblem:
    """Current of node ``i`` against voltage differences ``V_i - V_j``."""
    _check_kind(panel, DynamicsKind.ECT)
    cols = _others(panel.n_nodes, i)
    v = panel.series
    X = v[:, [i]] - v[:, cols]
    return RegressionProblem(i, panel.responses[:, i].copy(), X, cols, Orientation.ROW)


def build_comm_problem(panel: TimeSeriesPanel, i: int) -> RegressionProblem:
    """Incoming flux of ``i`` against the outgoing flux of every other node.

    The coefficients are the incoming weights ``w_ji``, i.e. column ``i``.
    """
    _check_kind(panel, DynamicsKind.COMMUNICATION)
    cols = _others(panel.n_nodes, i)
    return RegressionProblem(i, panel.responses[:, i].copy(), panel.series[:, cols].copy(),
                             cols, Orientation.COLUMN)


def build_mixing_problem(panel: TimeSeriesPanel, i: int) -> RegressionProblem:
    _check_kind(panel, DynamicsKind.LINEAR_MIXING)
    cols = _others(panel.n_nodes, i)
    return RegressionProblem(i, panel.responses[:, i].copy(), panel.series[:, cols].copy(),
                             cols, Orientation.ROW)


_BUILDERS = {
    DynamicsKind.ECT: build_ect_problem,
    DynamicsKind.COMMUNICATION: build_comm_problem,
    DynamicsKind.LINEAR_MIXING: build_mixing_problem,
}


def build_problem(panel: TimeSeriesPanel, i: int) -> RegressionProblem:
    return _BUILDERS[panel.dynamics_kind](panel, i)


def build_problems(panel: TimeSeriesPanel) -> list[RegressionProblem]:
    return [build_problem(panel, i) for i in range(panel.n_nodes)]


@dataclass
class NodeSolution:
    """Inclusion probabilities and weight estimates for one node's problem."""

    node: int
    theta: np.ndarray
    mu: np.ndarray
    column_nodes: np.ndarray
    orientation: Orientation
    iterations: int = 0


@dataclass
class ReconstructionResult:
    """Estimated network plus the per-node raw solver output.

    ``theta`` and ``mu`` are placed the same way as the weights; their
    diagonals are zero.
    """

    weights: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    iterations: np.ndarray
    runtime_seconds: float = 0.0
    method: str = ""
    info: dict = field(default_factory=dict)

    @property
    def network(self) -> WeightedNetwork:
        return WeightedNetwork(self.weights)

    @property
    def adjacency(self) -> np.ndarray:
        return (self.weights != 0).astype(np.int8)


def assemble_network(solutions, n_nodes=None, threshold: float = 0.5) -> ReconstructionResult:
    """Keep ``mu`` where ``theta > threshold`` and place it row- or column-wise."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    solutions = list(solutions)
    n = len(solutions) if n_nodes is None else n_nodes
    by_node = {}
    for s in solutions:
        if s.node in by_node:
            raise AssemblyError(f"duplicate solution for node {s.node}")
        by_node[s.node] = s
    missing = sorted(set(range(n)) - set(by_node))
    if missing:
        raise AssemblyError(f"missing solutions for nodes {missing}")

    theta = np.zeros((n, n))
    mu = np.zeros((n, n))
    iters = np.zeros(n, dtype=int)
    for i, s in sorted(by_node.items()):
        cols = np.asarray(s.column_nodes)
        if i in cols:
            raise AssemblyError(f"node {i} lists itself as a predictor")
        if Orientation(s.orientation) is Orientation.ROW:
            theta[i, cols] = s.theta
            mu[i, cols] = s.mu
        else:
            theta[cols, i] = s.theta
            mu[cols, i] = s.mu
        iters[i] = s.iterations
    w = np.where(theta > threshold, mu, 0.0)
    np.fill_diagonal(w, 0.0)
    return ReconstructionResult(w, theta, mu, iters)
