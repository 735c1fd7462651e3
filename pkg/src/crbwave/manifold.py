"""Sphere geometry and the smoothed exact-penalty Riemannian CG solver.

The waveform lives on ``{X : ||X||_F^2 = M P}``. Per-symbol power caps are
enforced through a linear-quadratic penalty whose weight grows and whose
smoothing shrinks every iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fim import SensingProblem, objective_and_gradient

logger = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """Numerical failure inside the optimizer (e.g. singular FIM at the start point)."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class SphereSpec:
    nT: int
    M: int
    radius_sq: float

    def __post_init__(self):
        if not self.radius_sq > 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True, eq=False)
class PowerConstraints:
    """Average power ``P`` and per-symbol caps ``P_m = alpha * P`` (``alpha`` may be ``inf``)."""

    P: float
    alpha: float
    M: int

    def __post_init__(self):
        if not self.P > 0:
            raise ValueError("P must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive or inf")

    @property
    def caps(self) -> np.ndarray:
        return np.full(self.M, self.alpha * self.P)

    def sphere(self, nT: int) -> SphereSpec:
        return SphereSpec(nT, self.M, self.M * self.P)

    def violation(self, X) -> np.ndarray:
        return np.sum(np.abs(X) ** 2, axis=0) - self.caps


@dataclass(frozen=True)
class OptimizerConfig:
    rho0: float = 1.0
    theta_rho: float = 2.0
    rho_max: float = 2.0**20
    u0: float = 1.0
    theta_u: float = (1e-6) ** (1 / 30)
    u_min: float = 1e-6
    max_iter: int = 500
    # None means 1e-6 * sqrt(M P); 0 disables gradient-norm stopping
    grad_tol: Optional[float] = None
    cg_rule: str = "PR+"
    step0: float = 1.0
    contraction: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 50

    def __post_init__(self):
        if not (self.rho0 > 0 and self.theta_rho > 1 and self.rho_max >= self.rho0):
            raise ValueError("need rho0 > 0, theta_rho > 1, rho_max >= rho0")
        if not (self.u0 > 0 and 0 < self.theta_u < 1 and 0 < self.u_min <= self.u0):
            raise ValueError("need u0 > 0, 0 < theta_u < 1, 0 < u_min <= u0")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if self.cg_rule not in ("PR+", "SD"):
            raise ValueError(f"unknown cg_rule {self.cg_rule!r}")
        if not (self.step0 > 0 and 0 < self.contraction < 1 and 0 < self.armijo < 1):
            raise ValueError("invalid line-search parameters")


def inner(A, B) -> float:
    """Real inner product ``Re tr(A^H B)``."""
    return float(np.real(np.vdot(A, B)))


def project_tangent(X, U, radius_sq: Optional[float] = None) -> np.ndarray:
    if radius_sq is None:
        radius_sq = inner(X, X)
    return U - (inner(X, U) / radius_sq) * X


def retract(X, p, t: float, radius_sq: Optional[float] = None) -> np.ndarray:
    if radius_sq is None:
        radius_sq = inner(X, X)
    Y = X + t * p
    nrm = np.linalg.norm(Y)
    if nrm == 0:
        raise ValueError("degenerate step: cannot retract the origin onto the sphere")
    return (math.sqrt(radius_sq) / nrm) * Y


def penalty_lq(x, u: float):
    """Linear-quadratic smoothing of ``max(0, x)``."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, 0.0, np.where(x <= u, x * x / (2 * u), x - u / 2))


def penalty_lq_derivative(x, u: float):
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, 0.0, np.where(x <= u, x / u, 1.0))


def penalty_term(X, constraints: PowerConstraints, rho: float, u: float):
    """Penalty value and its Euclidean gradient (column m is ``2 rho p_u'(.) x_m``)."""
    v = constraints.violation(X)
    value = rho * float(np.sum(penalty_lq(v, u)))
    grad = X * (2.0 * rho * penalty_lq_derivative(v, u))[None, :]
    return value, grad


def penalized_loss(X, problem: SensingProblem, constraints: PowerConstraints, rho: float, u: float) -> float:
    """``-logdet + rho * sum_m p_u(||x_m||^2 - P_m)``; ``+inf`` when the FIM is singular."""
    obj = problem.objective(X)
    return -obj + penalty_term(X, constraints, rho, u)[0]


def riemannian_gradient(X, problem: SensingProblem, constraints: PowerConstraints, rho: float, u: float):
    _, egrad = objective_and_gradient(
        X, problem.params, problem.grid, problem.num, problem.geom, problem.weights
    )
    pgrad = penalty_term(X, constraints, rho, u)[1]
    return project_tangent(X, pgrad - egrad)


def cg_direction(prev_dir, grad_new, grad_old, X_new, rule: str = "PR+") -> np.ndarray:
    """Next search direction at ``X_new``.

    Previous direction and gradient are moved to the new tangent space by
    projection. Falls back to steepest descent when the result is not a descent
    direction.
    """
    if prev_dir is None or grad_old is None or rule == "SD":
        return -grad_new
    r2 = inner(X_new, X_new)
    d_prev = project_tangent(X_new, prev_dir, r2)
    g_prev = project_tangent(X_new, grad_old, r2)
    denom = inner(grad_old, grad_old)
    beta = max(0.0, inner(grad_new, grad_new - g_prev) / denom) if denom > 0 else 0.0
    direction = -grad_new + beta * d_prev
    if inner(direction, grad_new) >= 0:
        return -grad_new
    return direction


@dataclass
class LineSearchResult:
    step: float
    point: np.ndarray
    loss: float
    stalled: bool
    evaluations: int


def line_search(
    loss_fn: Callable[[np.ndarray], float],
    X,
    direction,
    loss0: float,
    grad0,
    t_init: float = 1.0,
    contraction: float = 0.5,
    armijo: float = 1e-4,
    max_backtracks: int = 50,
    radius_sq: Optional[float] = None,
) -> LineSearchResult:
    """Armijo backtracking along the retraction curve.

    Non-finite trial losses are rejected. If nothing is accepted within
    ``max_backtracks`` contractions the result has ``step == 0`` and ``stalled``.
    """
    slope = inner(grad0, direction)
    t = t_init
    for i in range(max_backtracks + 1):
        Y = retract(X, direction, t, radius_sq)
        val = loss_fn(Y)
        if np.isfinite(val) and val <= loss0 + armijo * t * slope:
            return LineSearchResult(t, Y, val, False, i + 1)
        t *= contraction
    return LineSearchResult(0.0, X, loss0, True, max_backtracks + 1)


@dataclass
class IterationRecord:
    iter: int
    loss: float
    objective: float
    max_violation: float
    grad_norm: float
    rho: float
    u: float
    step: float = 0.0
    # |(||X||^2 - MP)| / MP and |Re<X, grad>| / (||X|| ||grad||)
    sphere_error: float = 0.0
    tangency: float = 0.0
    extra: dict = field(default_factory=dict)


class DeterministicModel:
    """Objective of a single sensing problem, the hook used by the penalty solver."""

    def __init__(self, problem: SensingProblem):
        self.problem = problem

    def value(self, X) -> float:
        return self.problem.objective(X)

    def value_and_grad(self, X):
        p = self.problem
        return objective_and_gradient(X, p.params, p.grid, p.num, p.geom, p.weights)

    def resample(self, X) -> None:
        pass

    def record(self) -> dict:
        return {}


def penalty_cg(model, constraints: PowerConstraints, config: OptimizerConfig, X0, grad_stop: bool = True):
    """Shared driver for the deterministic and stochastic penalty solvers.

    ``model`` supplies ``value``, ``value_and_grad``, ``resample`` and ``record``.
    """
    X = np.array(X0, dtype=complex)
    radius_sq = constraints.M * constraints.P
    if abs(inner(X, X) - radius_sq) > 1e-9 * radius_sq:
        raise ValueError("start point is not on the power sphere")
    grad_tol = config.grad_tol
    if grad_tol is None:
        grad_tol = 1e-6 * math.sqrt(radius_sq)
    if not grad_stop:
        grad_tol = -1.0

    rho, u = config.rho0, config.u0

    def loss_and_grad(Z):
        try:
            obj, egrad = model.value_and_grad(Z)
        except np.linalg.LinAlgError as exc:
            raise OptimizationError(f"singular FIM: {exc}", k) from exc
        pval, pgrad = penalty_term(Z, constraints, rho, u)
        return obj, -obj + pval, project_tangent(Z, pgrad - egrad, radius_sq)

    def loss_only(Z):
        return -model.value(Z) + penalty_term(Z, constraints, rho, u)[0]

    k = 0
    obj, loss, grad = loss_and_grad(X)
    direction = -grad
    t_prev = config.step0 / 2.0
    trace: list[IterationRecord] = []
    step = 0.0
    while True:
        gnorm = math.sqrt(inner(grad, grad))
        xx = inner(X, X)
        tangency = abs(inner(X, grad)) / (math.sqrt(xx) * gnorm) if gnorm > 0 else 0.0
        trace.append(
            IterationRecord(
                k, loss, obj, float(np.max(constraints.violation(X))), gnorm, rho, u, step,
                abs(xx - radius_sq) / radius_sq, tangency, model.record(),
            )
        )
        if gnorm <= grad_tol or k >= config.max_iter:
            break
        ls = line_search(
            loss_only, X, direction, loss, grad,
            t_init=2.0 * t_prev,
            contraction=config.contraction,
            armijo=config.armijo,
            max_backtracks=config.max_backtracks,
            radius_sq=radius_sq,
        )
        step = ls.step
        if ls.stalled:
            if rho >= config.rho_max and u <= config.u_min:
                logger.debug("line search stalled at tight penalty, stopping at iteration %d", k)
                break
            restart = True
        else:
            X = ls.point
            t_prev = ls.step
            restart = False
        model.resample(X)
        rho = min(config.theta_rho * rho, config.rho_max)
        u = max(config.theta_u * u, config.u_min)
        k += 1
        grad_old = grad
        obj, loss, grad = loss_and_grad(X)
        if restart:
            direction = -grad
        else:
            direction = cg_direction(direction, grad, grad_old, X, config.cg_rule)
    return X, trace


def repms(problem: SensingProblem, constraints: PowerConstraints, config: OptimizerConfig, X0):
    """Optimal waveform for a known channel; returns ``(X, trace)``."""
    return penalty_cg(DeterministicModel(problem), constraints, config, X0)


def random_sphere_point(nT: int, M: int, radius_sq: float, rng: np.random.Generator) -> np.ndarray:
    """Complex standard-normal matrix scaled onto the sphere."""
    Z = rng.standard_normal((nT, M)) + 1j * rng.standard_normal((nT, M))
    return Z * math.sqrt(radius_sq) / np.linalg.norm(Z)


def uniform_power_baseline(nT: int, M: int, P: float, rng: np.random.Generator) -> np.ndarray:
    """Equal power ``P`` per RE spread evenly over antennas with random phases."""
    phases = rng.uniform(0.0, 2 * np.pi, size=(nT, M))
    return math.sqrt(P / nT) * np.exp(1j * phases)
