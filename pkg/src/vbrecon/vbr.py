"""Mean-field variational Bayes for the spike-and-slab linear model.

The model is ``y = X diag(a) w + eps`` with

    eps ~ N(0, 1/tau),  w_j ~ N(0, 1/lambda_j),  a_j ~ Bernoulli(rho),
    tau ~ Gamma(c0, d0),  lambda_j ~ Gamma(g0, h0),  rho ~ Beta(e0, f0)

(Gamma in shape/rate form) and the posterior is approximated by
``q(w) q(tau) q(rho) prod_j q(lambda_j) q(a_j)`` with a full-covariance
Gaussian ``q(w)``. Each ``update_*`` function returns the optimal parameters
of one factor given the others; :func:`vbr_solve` cycles through them.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
import scipy.linalg
from scipy.special import betaln, gammaln

from .dynamics import TimeSeriesPanel
from .problems import NodeSolution, ReconstructionResult, assemble_network, build_problem
from .special import digamma

__all__ = [
    "Diagnostics",
    "Gram",
    "Hyperparams",
    "SolverError",
    "SolverOptions",
    "VBRFit",
    "VariationalState",
    "digamma",
    "elbo",
    "expected_sq_residual",
    "init_state",
    "omega_matrix",
    "update_a",
    "update_lambda",
    "update_rho",
    "update_tau",
    "update_w",
    "vbr_reconstruct",
    "vbr_solve",
]

THETA_EPS = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


class SolverError(ArithmeticError):
    """Numerical failure inside a variational update."""


@dataclass(frozen=True)
class Hyperparams:
    c0: float = 1e-2
    d0: float = 1e-4
    e0: float = 1.0
    f0: float = 1.0
    g0: float = 1e-2
    h0: float = 1e-4

    def __post_init__(self):
        bad = {k: v for k, v in asdict(self).items() if not v > 0}
        if bad:
            raise ValueError(f"hyperparameters must be positive: {bad}")


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rule and update variants.

    By default the inclusion-probability update uses ``mu_j mu_k`` in place of
    ``E[w_j w_k]`` for ``j != k``. This finds much sparser fixed points but
    only ascends the bound approximately; ``cross_covariance=True`` gives the
    exact coordinate maximizer.
    """

    max_iters: int = 500
    tol: float = 1e-6
    damping: float = 1.0
    elbo_check: bool = False
    cross_covariance: bool = False
    trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must be in (0, 1]")


@dataclass
class Gram:
    """Data of one regression problem with its cross products cached."""

    X: np.ndarray
    y: np.ndarray
    XtX: np.ndarray
    Xty: np.ndarray
    yty: float

    @classmethod
    def from_data(cls, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X must be M x p with M = len(y), got {X.shape} and {y.shape}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need at least one sample and one predictor")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        return cls(X, y, X.T @ X, X.T @ y, float(y @ y))

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def _as_gram(X, y=None):
    return X if isinstance(X, Gram) else Gram.from_data(X, y)


@dataclass
class VariationalState:
    mu: np.ndarray
    sigma: np.ndarray
    theta: np.ndarray
    c: float
    d: float
    e: float
    f: float
    g: np.ndarray
    h: np.ndarray
    iteration: int = 0

    @property
    def omega(self) -> np.ndarray:
        return omega_matrix(self.theta)

    @property
    def expected_tau(self) -> float:
        return self.c / self.d

    def copy(self) -> "VariationalState":
        return VariationalState(self.mu.copy(), self.sigma.copy(), self.theta.copy(),
                                self.c, self.d, self.e, self.f, self.g.copy(), self.h.copy(),
                                self.iteration)


def omega_matrix(theta) -> np.ndarray:
    """E[a a^T] for independent Bernoulli(theta) entries."""
    theta = np.asarray(theta, dtype=float)
    om = np.outer(theta, theta)
    np.fill_diagonal(om, theta)
    return om


def update_w(state: VariationalState, X, y=None):
    """Gaussian factor: returns ``(mu, Sigma)``."""
    gram = _as_gram(X, y)
    p = gram.n_features
    tau = state.c / state.d
    prec = tau * gram.XtX * omega_matrix(state.theta)
    prec[np.diag_indices(p)] += state.g / state.h
    jitter = 0.0
    base = 1e-10 * np.trace(prec) / p
    for attempt in range(4):
        try:
            a = prec if jitter == 0.0 else prec + jitter * np.eye(p)
            factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            jitter = base if jitter == 0.0 else 10.0 * jitter
    else:
        raise SolverError("posterior precision of w is not positive definite")
    # inverse from the Cholesky factor; LAPACK fills the lower triangle only
    inv, info = scipy.linalg.lapack.dpotri(factor[0], lower=1)
    if info != 0:
        raise SolverError("posterior precision of w is singular")
    sigma = np.tril(inv) + np.tril(inv, -1).T
    mu = tau * sigma @ (state.theta * gram.Xty)
    return mu, sigma


def update_lambda(state: VariationalState, hyper: Hyperparams = Hyperparams()):
    """Gamma factors of the weight precisions: returns ``(g, h)``."""
    g = np.full(state.mu.shape, hyper.g0 + 0.5)
    h = hyper.h0 + 0.5 * (np.diag(state.sigma) + state.mu**2)
    return g, h


def expected_sq_residual(state: VariationalState, X, y=None) -> float:
    """E_q ||y - X diag(a) w||^2.

    Written as a sum of nonnegative pieces to avoid cancellation:
    ``||y - X(theta*mu)||^2 + theta^T (G*Sigma) theta
    + sum_j G_jj theta_j (1 - theta_j) (Sigma_jj + mu_j^2)``.
    """
    gram = _as_gram(X, y)
    th, mu, sg = state.theta, state.mu, state.sigma
    r = gram.y - gram.X @ (th * mu)
    gdiag = np.diag(gram.XtX)
    return float(r @ r + th @ (gram.XtX * sg) @ th
                 + np.sum(gdiag * th * (1.0 - th) * (np.diag(sg) + mu**2)))


def update_tau(state: VariationalState, X, y=None, hyper: Hyperparams = Hyperparams()):
    """Gamma factor of the noise precision: returns ``(c, d)``."""
    gram = _as_gram(X, y)
    c = hyper.c0 + 0.5 * gram.n_samples
    d = hyper.d0 + 0.5 * expected_sq_residual(state, gram)
    if not d > 0 or not math.isfinite(d):
        raise SolverError(f"noise-precision rate became {d}")
    return c, d


@numba.njit(cache=True)
def _theta_sweep(theta, B, lin, prior_logit, half_tau, damping):
    # v = B theta is kept current so each coordinate costs O(p)
    p = theta.size
    v = B @ theta
    for j in range(p):
        off = v[j] - B[j, j] * theta[j]
        u = prior_logit - half_tau * (B[j, j] - lin[j] + 2.0 * off)
        if u >= 0:
            new = 1.0 / (1.0 + math.exp(-u))
        else:
            z = math.exp(u)
            new = z / (1.0 + z)
        new = min(max(new, THETA_EPS), 1.0 - THETA_EPS)
        if damping != 1.0:
            new = damping * new + (1.0 - damping) * theta[j]
        delta = new - theta[j]
        if delta != 0.0:
            for i in range(p):
                v[i] += B[i, j] * delta
            theta[j] = new


def update_a(state: VariationalState, X, y=None, damping: float = 1.0,
             cross_covariance: bool = False) -> np.ndarray:
    """Bernoulli factors, one coordinate at a time with the freshest values.

    For coordinate j,

        u_j = psi(e) - psi(f) - (E tau / 2) [ G_jj E w_j^2 - 2 mu_j (X^T y)_j
                                             + 2 sum_{k != j} G_jk theta_k E[w_j w_k] ]

    and ``theta_j = logistic(u_j)``. ``E[w_j w_k]`` is ``Sigma_jk + mu_j mu_k``
    when ``cross_covariance`` is set and ``mu_j mu_k`` otherwise; the diagonal
    always keeps ``Sigma_jj``.
    """
    gram = _as_gram(X, y)
    G = gram.XtX
    mu = state.mu
    second = state.sigma + np.outer(mu, mu)
    if cross_covariance:
        B = G * second
    else:
        B = G * np.outer(mu, mu)
        B[np.diag_indices_from(B)] = np.diag(G) * np.diag(second)
    theta = state.theta.copy()
    prior_logit = digamma(state.e) - digamma(state.f)
    half_tau = 0.5 * state.c / state.d
    _theta_sweep(theta, B, 2.0 * mu * gram.Xty, prior_logit, half_tau, damping)
    return theta


def update_rho(state: VariationalState, hyper: Hyperparams = Hyperparams()):
    """Beta factor of the inclusion rate: returns ``(e, f)``."""
    s = float(np.sum(state.theta))
    return hyper.e0 + s, hyper.f0 + (state.theta.size - s)


def _gamma_entropy(a, b):
    return a - np.log(b) + gammaln(a) + (1.0 - a) * digamma(a)


def elbo(state: VariationalState, X, y=None, hyper: Hyperparams = Hyperparams()) -> float:
    """Evidence lower bound E_q[log p(y, z) - log q(z)] in closed form."""
    gram = _as_gram(X, y)
    s = state
    M, p = gram.n_samples, gram.n_features
    th = s.theta

    e_tau, e_log_tau = s.c / s.d, digamma(s.c) - math.log(s.d)
    e_lam, e_log_lam = s.g / s.h, digamma(s.g) - np.log(s.h)
    dg_ef = digamma(s.e + s.f)
    e_log_rho, e_log_1mrho = digamma(s.e) - dg_ef, digamma(s.f) - dg_ef
    e_w2 = np.diag(s.sigma) + s.mu**2

    lik = 0.5 * M * (e_log_tau - _LOG_2PI) - 0.5 * e_tau * expected_sq_residual(s, gram)
    prior_w = np.sum(0.5 * (e_log_lam - _LOG_2PI) - 0.5 * e_lam * e_w2)
    prior_a = np.sum(th * e_log_rho + (1.0 - th) * e_log_1mrho)
    prior_lam = np.sum(hyper.g0 * math.log(hyper.h0) - gammaln(hyper.g0)
                       + (hyper.g0 - 1.0) * e_log_lam - hyper.h0 * e_lam)
    prior_tau = (hyper.c0 * math.log(hyper.d0) - gammaln(hyper.c0)
                 + (hyper.c0 - 1.0) * e_log_tau - hyper.d0 * e_tau)
    prior_rho = (-betaln(hyper.e0, hyper.f0) + (hyper.e0 - 1.0) * e_log_rho
                 + (hyper.f0 - 1.0) * e_log_1mrho)

    try:
        chol = np.linalg.cholesky(s.sigma)
    except np.linalg.LinAlgError:
        raise SolverError("Sigma is not positive definite") from None
    ent_w = 0.5 * p * (1.0 + _LOG_2PI) + np.sum(np.log(np.diag(chol)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ent_a = -np.sum(np.where(th > 0, th * np.log(th), 0.0)
                        + np.where(th < 1, (1.0 - th) * np.log1p(-th), 0.0))
    ent_tau = _gamma_entropy(s.c, s.d)
    ent_lam = np.sum(_gamma_entropy(s.g, s.h))
    ent_rho = (betaln(s.e, s.f) - (s.e - 1.0) * digamma(s.e) - (s.f - 1.0) * digamma(s.f)
               + (s.e + s.f - 2.0) * dg_ef)

    total = (lik + prior_w + prior_a + prior_lam + prior_tau + prior_rho
             + ent_w + ent_a + ent_tau + ent_lam + ent_rho)
    total = float(total)
    if not math.isfinite(total):
        raise SolverError("ELBO is not finite")
    return total


def init_state(X, y=None, hyper: Hyperparams = Hyperparams()) -> VariationalState:
    """Start with every predictor included (theta = 1).

    ``c`` and ``g`` take their fixed closed forms and ``q(rho)`` starts at its
    prior. ``E[tau] = M / ||y||^2`` and ``E[lambda_j] = E[tau] G_jj`` make
    the first weight update a ridge fit whose penalty matches each column's
    own scale, so the start does not depend on how the columns are scaled.
    A start with a vague prior instead (large posterior variance along
    poorly determined directions) can switch every predictor off at once.
    """
    gram = _as_gram(X, y)
    M, p = gram.n_samples, gram.n_features
    g = np.full(p, hyper.g0 + 0.5)
    c, d = hyper.c0 + 0.5 * M, hyper.d0 + 0.5 * gram.yty
    # unit-information start: prior variance of w_j equals 1 / (E[tau] G_jj)
    h = g / ((c / d) * np.maximum(np.diag(gram.XtX), 1e-300))
    return VariationalState(mu=np.zeros(p), sigma=np.eye(p), theta=np.ones(p),
                            c=c, d=d, e=hyper.e0, f=hyper.f0, g=g, h=h)


@dataclass
class Diagnostics:
    iterations: int
    converged: bool
    elbo: float
    max_theta_change: float
    max_mu_change: float
    theta_change_trace: list = field(default_factory=list)
    elbo_trace: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


@dataclass
class VBRFit:
    theta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    diagnostics: Diagnostics
    state: VariationalState


def sweep(state: VariationalState, gram: Gram, hyper: Hyperparams, opts: SolverOptions):
    """One pass of the updates in the order w, lambda, tau, a, rho (in place)."""
    state.mu, state.sigma = update_w(state, gram)
    state.g, state.h = update_lambda(state, hyper)
    state.c, state.d = update_tau(state, gram, hyper=hyper)
    state.theta = update_a(state, gram, damping=opts.damping,
                           cross_covariance=opts.cross_covariance)
    state.e, state.f = update_rho(state, hyper)
    state.iteration += 1
    return state


def vbr_solve(X, y=None, hyper: Hyperparams | None = None,
              opts: SolverOptions | None = None) -> VBRFit:
    """Coordinate ascent until theta and mu both move less than ``opts.tol``."""
    hyper = Hyperparams() if hyper is None else hyper
    opts = SolverOptions() if opts is None else opts
    gram = _as_gram(X, y)
    state = init_state(gram, hyper=hyper)

    dtheta = dmu = math.inf
    converged = False
    theta_trace, elbo_trace = [], []
    for _ in range(opts.max_iters):
        old_theta, old_mu = state.theta, state.mu
        sweep(state, gram, hyper, opts)
        dtheta = float(np.max(np.abs(state.theta - old_theta)))
        dmu = float(np.max(np.abs(state.mu - old_mu)))
        if opts.trace:
            theta_trace.append(dtheta)
        if opts.elbo_check or opts.trace:
            elbo_trace.append(elbo(state, gram, hyper=hyper))
        if dtheta < opts.tol and dmu < opts.tol:
            converged = True
            break

    diag = Diagnostics(state.iteration, converged, elbo(state, gram, hyper=hyper),
                       dtheta, dmu, theta_trace, elbo_trace)
    return VBRFit(state.theta.copy(), state.mu.copy(), state.sigma.copy(), diag, state)


def vbr_reconstruct(panel: TimeSeriesPanel, hyper: Hyperparams | None = None,
                    opts: SolverOptions | None = None, threshold: float = 0.5) -> ReconstructionResult:
    """Solve every node's problem and assemble the weight estimate.

    The reported runtime covers problem construction, solving and assembly.
    """
    start = time.perf_counter()
    solutions = []
    converged = 0
    for i in range(panel.n_nodes):
        prob = build_problem(panel, i)
        fit = vbr_solve(prob.X, prob.y, hyper, opts)
        converged += fit.diagnostics.converged
        solutions.append(NodeSolution(i, fit.theta, fit.mu, prob.column_nodes,
                                      prob.orientation, fit.diagnostics.iterations))
    result = assemble_network(solutions, panel.n_nodes, threshold)
    result.runtime_seconds = time.perf_counter() - start
    result.method = "VBR"
    result.info["converged_nodes"] = converged
    return result
