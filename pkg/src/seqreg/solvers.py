"""Penalized least-squares solvers and a-posteriori optimality certificates.

Three Tikhonov functionals over sequence vectors x are minimized:

    l1:           0.5 ||A x - y||^2 + gamma ||x||_1
    elastic net:  0.5 ||A x - y||^2 + beta * (eta ||x||_1 + 0.5 ||x||_2^2)
    l2:           0.5 ||A x - y||^2 + gamma ||x||_2^2

The two nonsmooth functionals are minimized by FISTA with function-value
adaptive restart (an increase of the objective rejects the momentum step
and falls back to a plain proximal-gradient step, which is guaranteed to
descend).  The quadratic functional is solved exactly through its normal
equations; note the un-halved penalty, hence the ``2*gamma`` shift there.

Any returned point can be certified a posteriori: the stationarity
condition determines the l1 subgradient components zeta_k, which must lie
in [-1, 1] and equal sign(x_k) on the support.  ``kkt_residual`` measures
the worst componentwise violation of that condition and doubles as the
solver's stopping criterion.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .seq_core import DiagonalOperator, LinearOperator, norm

__all__ = [
    "PenaltyConfig",
    "SolveResult",
    "OptimalityReport",
    "soft_threshold",
    "prox_elastic_net",
    "objective_value",
    "kkt_residual",
    "solve_l1",
    "solve_elastic_net",
    "solve_l2",
    "solve_penalized",
    "certify_optimality",
    "diagonal_reference_solution",
]

# relative cutoff below which a component counts as zero for support detection
SUPPORT_RTOL = 1e-12

FAMILIES = ("l1", "elastic_net", "l2")


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty family plus its parameters.

    ``reg_param`` is gamma for the l1/l2 families and beta for the elastic
    net; ``eta`` is the elastic-net l1 weight (the penalty is
    ``eta ||x||_1 + 0.5 ||x||_2^2``, multiplied by beta).
    """

    family: str
    reg_param: float
    eta: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not self.reg_param > 0:
            raise ValueError("reg_param must be positive")
        if self.family == "elastic_net":
            if self.eta is None or not self.eta > 0:
                raise ValueError("elastic_net requires eta > 0")

    def penalty_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.family == "l1":
            return self.reg_param * norm(x, 1)
        if self.family == "elastic_net":
            return self.reg_param * (self.eta * norm(x, 1) + 0.5 * float(np.dot(x, x)))
        return self.reg_param * float(np.dot(x, x))

    def with_reg(self, reg_param: float) -> "PenaltyConfig":
        return replace(self, reg_param=float(reg_param))

    def to_json(self) -> dict:
        doc = {"family": self.family, "reg_param": self.reg_param}
        if self.eta is not None:
            doc["eta"] = self.eta
        return doc


@dataclass
class SolveResult:
    """Minimizer plus diagnostics of a single penalized solve."""

    x: np.ndarray
    iterations: int
    objective: float
    discrepancy: float
    optimality_residual: float
    converged: bool
    penalty: PenaltyConfig

    def to_json(self) -> dict:
        return {
            "x": self.x.tolist(),
            "iterations": self.iterations,
            "objective": self.objective,
            "discrepancy": self.discrepancy,
            "optimality_residual": self.optimality_residual,
            "converged": self.converged,
            "penalty": self.penalty.to_json(),
        }


@dataclass
class OptimalityReport:
    """Certified subgradient components and the worst violation."""

    zeta: np.ndarray
    xi: np.ndarray
    max_violation: float


def soft_threshold(z, thresh):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def prox_elastic_net(z, step, eta):
    """prox of step * (eta |.| + 0.5 (.)^2): soft-threshold, then shrink."""
    if step <= 0 or eta <= 0:
        raise ValueError("step and eta must be positive")
    return soft_threshold(z, step * eta) / (1.0 + step)


def objective_value(op: LinearOperator, x, y_delta, penalty: PenaltyConfig) -> float:
    r = op.apply(x) - y_delta
    return 0.5 * float(np.dot(r, r)) + penalty.penalty_value(x)


def _stationarity_parts(op, x, y_delta, penalty):
    """Gradient-side vector s and the l1 threshold for the family."""
    g = op.adjoint(op.apply(x) - y_delta)
    if penalty.family == "l1":
        return g, penalty.reg_param
    if penalty.family == "elastic_net":
        return g + penalty.reg_param * x, penalty.reg_param * penalty.eta
    return g + 2.0 * penalty.reg_param * x, None


def kkt_residual(op, x, y_delta, penalty: PenaltyConfig) -> float:
    """Sup-norm violation of the first-order optimality condition at x."""
    s, thresh = _stationarity_parts(op, x, y_delta, penalty)
    if thresh is None:  # l2: plain gradient
        return float(np.max(np.abs(s)))
    xmax = float(np.max(np.abs(x)))
    on = np.abs(x) > SUPPORT_RTOL * xmax if xmax > 0 else np.zeros(x.shape, bool)
    viol_on = np.abs(s[on] + thresh * np.sign(x[on]))
    viol_off = np.abs(s[~on]) - thresh
    worst = 0.0
    if viol_on.size:
        worst = float(np.max(viol_on))
    if viol_off.size:
        worst = max(worst, float(np.max(viol_off)))
    return max(worst, 0.0)


def _fista(op, y_delta, penalty, x0, tol, max_iter, check_every):
    lip = op.norm_bound() ** 2
    if penalty.family == "l1":
        thresh = penalty.reg_param / lip

        def prox(z):
            return soft_threshold(z, thresh)

    else:
        step = penalty.reg_param / lip
        eta = penalty.eta

        def prox(z):
            return prox_elastic_net(z, step, eta)

    x = np.zeros(op.domain_dim) if x0 is None else np.array(x0, dtype=float)
    res = kkt_residual(op, x, y_delta, penalty)
    if res <= tol:
        return x, 0, res, True

    yv = x.copy()
    t_mom = 1.0
    obj = objective_value(op, x, y_delta, penalty)
    it = 0
    for it in range(1, max_iter + 1):
        grad = op.adjoint(op.apply(yv) - y_delta)
        x_new = prox(yv - grad / lip)
        obj_new = objective_value(op, x_new, y_delta, penalty)
        if obj_new > obj:
            # restart: drop momentum and take a plain descent step from x
            grad = op.adjoint(op.apply(x) - y_delta)
            x_new = prox(x - grad / lip)
            obj_new = objective_value(op, x_new, y_delta, penalty)
            yv = x_new
            t_mom = 1.0
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            yv = x_new + ((t_mom - 1.0) / t_next) * (x_new - x)
            t_mom = t_next
        x, obj = x_new, obj_new
        if it % check_every == 0 or it == max_iter:
            res = kkt_residual(op, x, y_delta, penalty)
            if res <= tol:
                return x, it, res, True
    res = kkt_residual(op, x, y_delta, penalty)
    return x, it, res, res <= tol


def _finish(op, x, y_delta, penalty, iterations, res, converged):
    r = op.apply(x) - y_delta
    disc = float(np.sqrt(np.dot(r, r)))
    obj = 0.5 * disc * disc + penalty.penalty_value(x)
    return SolveResult(
        x=x,
        iterations=iterations,
        objective=obj,
        discrepancy=disc,
        optimality_residual=res,
        converged=converged,
        penalty=penalty,
    )


def _default_tol(op, y_delta, tol):
    if tol is not None:
        return tol
    return 1e-8 * (1.0 + float(np.max(np.abs(op.adjoint(y_delta)))))


def solve_l1(op, y_delta, gamma, *, x0=None, tol=None, max_iter=50000, check_every=5):
    """Minimize 0.5 ||A x - y||^2 + gamma ||x||_1 by FISTA with restart.

    Stops when the stationarity residual drops below
    ``tol`` (default ``1e-8 * (1 + ||A* y||_inf)``) or after ``max_iter``
    iterations; a non-converged result is still returned, flagged through
    ``SolveResult.converged``.
    """
    penalty = PenaltyConfig("l1", float(gamma))
    y_delta = np.asarray(y_delta, dtype=float)
    tol = _default_tol(op, y_delta, tol)
    x, it, res, ok = _fista(op, y_delta, penalty, x0, tol, max_iter, check_every)
    return _finish(op, x, y_delta, penalty, it, res, ok)


def solve_elastic_net(
    op, y_delta, beta, eta, *, x0=None, tol=None, max_iter=50000, check_every=5
):
    """Minimize 0.5 ||A x - y||^2 + beta (eta ||x||_1 + 0.5 ||x||_2^2)."""
    penalty = PenaltyConfig("elastic_net", float(beta), float(eta))
    y_delta = np.asarray(y_delta, dtype=float)
    tol = _default_tol(op, y_delta, tol)
    x, it, res, ok = _fista(op, y_delta, penalty, x0, tol, max_iter, check_every)
    return _finish(op, x, y_delta, penalty, it, res, ok)


def solve_l2(op, y_delta, gamma):
    """Minimize 0.5 ||A x - y||^2 + gamma ||x||_2^2 exactly.

    Stationarity reads (A*A + 2 gamma I) x = A* y; for a diagonal operator
    the componentwise form x_k = sigma_k y_k / (sigma_k^2 + 2 gamma) is used.
    """
    penalty = PenaltyConfig("l2", float(gamma))
    y_delta = np.asarray(y_delta, dtype=float)
    if isinstance(op, DiagonalOperator):
        x = op.sigma * y_delta / (op.sigma**2 + 2.0 * gamma)
    else:
        a = op.as_matrix()
        n = op.domain_dim
        x = np.linalg.solve(a.T @ a + 2.0 * gamma * np.eye(n), a.T @ y_delta)
    res = kkt_residual(op, x, y_delta, penalty)
    return _finish(op, x, y_delta, penalty, 0, res, True)


def solve_penalized(op, y_delta, penalty: PenaltyConfig, **kwargs):
    """Dispatch to the solver of ``penalty.family``."""
    if penalty.family == "l1":
        return solve_l1(op, y_delta, penalty.reg_param, **kwargs)
    if penalty.family == "elastic_net":
        return solve_elastic_net(op, y_delta, penalty.reg_param, penalty.eta, **kwargs)
    return solve_l2(op, y_delta, penalty.reg_param)


def certify_optimality(result, op, y_delta, penalty: PenaltyConfig | None = None):
    """Reconstruct the l1 subgradient implied by stationarity and grade it.

    ``result`` may be a SolveResult or a bare vector.  For the elastic net
    the stationarity condition A*(Ax - y) + beta (eta zeta + x) = 0 yields
    zeta = -(A*(Ax - y) + beta x) / (beta eta) and xi = eta zeta + x; for
    l1 it yields zeta = -A*(Ax - y) / gamma and xi = zeta.  The violation
    is the worst of |zeta_k| - 1 off the support and |zeta_k - sign(x_k)|
    on the support (zero at any exact minimizer).
    """
    if isinstance(result, SolveResult):
        x = result.x
        penalty = penalty or result.penalty
    else:
        x = np.asarray(result, dtype=float)
    if penalty is None or penalty.family not in ("l1", "elastic_net"):
        raise ValueError("certification applies to l1 or elastic_net results")
    y_delta = np.asarray(y_delta, dtype=float)
    s, thresh = _stationarity_parts(op, x, y_delta, penalty)
    zeta = -s / thresh
    xi = penalty.eta * zeta + x if penalty.family == "elastic_net" else zeta.copy()
    xmax = float(np.max(np.abs(x)))
    on = np.abs(x) > SUPPORT_RTOL * xmax if xmax > 0 else np.zeros(x.shape, bool)
    violation = 0.0
    if np.any(on):
        violation = float(np.max(np.abs(zeta[on] - np.sign(x[on]))))
    if np.any(~on):
        violation = max(violation, float(np.max(np.abs(zeta[~on])) - 1.0))
    return OptimalityReport(zeta=zeta, xi=xi, max_violation=max(violation, 0.0))


def diagonal_reference_solution(sigma, y_delta, penalty: PenaltyConfig):
    """Componentwise closed-form minimizer for a diagonal operator.

    Reference formulas (used as the independent oracle for the iterative
    solvers):

        l1:           x_k = soft(sigma_k y_k, gamma) / sigma_k^2
        elastic net:  x_k = soft(sigma_k y_k, beta eta) / (sigma_k^2 + beta)
        l2:           x_k = sigma_k y_k / (sigma_k^2 + 2 gamma)
    """
    sigma = np.asarray(sigma, dtype=float)
    y_delta = np.asarray(y_delta, dtype=float)
    z = sigma * y_delta
    if penalty.family == "l1":
        return soft_threshold(z, penalty.reg_param) / sigma**2
    if penalty.family == "elastic_net":
        thresh = penalty.reg_param * penalty.eta
        return soft_threshold(z, thresh) / (sigma**2 + penalty.reg_param)
    return z / (sigma**2 + 2.0 * penalty.reg_param)
