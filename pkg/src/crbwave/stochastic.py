"""Parameter-perturbation sampling and the sample-mean (robust) penalty solver."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import N_TYPES, MultipathParams
from .fim import SensingProblem, SingularFimError, objective_and_gradient
from .manifold import OptimizerConfig, PowerConstraints, penalty_term, penalty_cg

MAX_REDRAWS = 100


@dataclass(frozen=True)
class PerturbationSpec:
    """Per-type standard deviations as multiples of ``sigma_e``, and the range of ``sigma_e``.

    ``sigma_e`` is uniform on ``sigma_e_range``; equal bounds make it fixed.
    """

    scale_gain_re: float = 1e-2
    scale_gain_im: float = 1e-2
    scale_tau: float = 1e-8
    scale_doppler: float = 5.0
    scale_aoa: float = 1e-2
    scale_aod: float = 1e-2
    sigma_e_range: tuple = (0.0, 50.0)

    def __post_init__(self):
        if min(self.scales) < 0:
            raise ValueError("perturbation scales must be non-negative")
        lo, hi = self.sigma_e_range
        if not 0 <= lo <= hi:
            raise ValueError(f"sigma_e range must satisfy 0 <= lo <= hi, got {self.sigma_e_range}")

    @property
    def scales(self) -> tuple:
        return (
            self.scale_gain_re, self.scale_gain_im, self.scale_tau,
            self.scale_doppler, self.scale_aoa, self.scale_aod,
        )

    def with_fixed_sigma(self, sigma_e: float) -> "PerturbationSpec":
        return dataclasses.replace(self, sigma_e_range=(float(sigma_e), float(sigma_e)))

    @classmethod
    def zero(cls) -> "PerturbationSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class StochasticConfig:
    N: int = 10
    seed: int = 0
    max_iter: int = 300

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")


def sample_sigma_e(spec: PerturbationSpec, rng: np.random.Generator) -> float:
    lo, hi = spec.sigma_e_range
    return float(rng.uniform(lo, hi))


def draw_perturbed(center: MultipathParams, spec: PerturbationSpec, rng: np.random.Generator):
    """One Gaussian draw around ``center``; returns ``(params, sigma_e)``.

    Perturbed values are not clamped (delays may become negative).
    """
    sigma_e = sample_sigma_e(spec, rng)
    std = np.repeat(np.asarray(spec.scales) * sigma_e, center.L)
    xi = center.to_vector() + std * rng.standard_normal(N_TYPES * center.L)
    return MultipathParams.from_vector(xi), sigma_e


def sample_params(center: MultipathParams, spec: PerturbationSpec, rng: np.random.Generator) -> MultipathParams:
    return draw_perturbed(center, spec, rng)[0]


def draw_batch(problem: SensingProblem, spec: PerturbationSpec, N: int, rng, X=None):
    """``N`` perturbed problems; a draw whose FIM is singular at ``X`` is redrawn."""
    batch, sigmas = [], []
    for _ in range(N):
        for _attempt in range(MAX_REDRAWS):
            params, sigma_e = draw_perturbed(problem.params, spec, rng)
            candidate = problem.with_params(params)
            if X is None or np.isfinite(candidate.objective(X)):
                break
        else:
            raise SingularFimError(f"no non-singular parameter draw in {MAX_REDRAWS} attempts")
        batch.append(candidate)
        sigmas.append(sigma_e)
    return batch, sigmas


def batch_objective(X, batch) -> float:
    total = 0.0
    for prob in batch:
        total += prob.objective(X)
    return total / len(batch)


def stochastic_loss(X, problem: SensingProblem, spec: PerturbationSpec, N: int, rng,
                    constraints: PowerConstraints, rho: float, u: float) -> float:
    """Penalized negative sample-mean log-det on a freshly drawn batch."""
    batch, _ = draw_batch(problem, spec, N, rng, X)
    return -batch_objective(X, batch) + penalty_term(X, constraints, rho, u)[0]


class StochasticModel:
    """Sample-mean objective over a batch that is refreshed after every retraction."""

    def __init__(self, problem: SensingProblem, spec: PerturbationSpec, N: int, rng, X0):
        self.problem = problem
        self.spec = spec
        self.N = N
        self.rng = rng
        self.batch, self.sigmas = draw_batch(problem, spec, N, rng, X0)

    def value(self, X) -> float:
        return batch_objective(X, self.batch)

    def value_and_grad(self, X):
        total, grad = 0.0, np.zeros_like(X, dtype=complex)
        for prob in self.batch:
            v, g = objective_and_gradient(X, prob.params, prob.grid, prob.num, prob.geom, prob.weights)
            total += v
            grad += g
        return total / self.N, grad / self.N

    def resample(self, X) -> None:
        self.batch, self.sigmas = draw_batch(self.problem, self.spec, self.N, self.rng, X)

    def record(self) -> dict:
        return {"sigma_e": list(self.sigmas)}


def srepms(problem: SensingProblem, spec: PerturbationSpec, stoch: StochasticConfig,
           constraints: PowerConstraints, config: OptimizerConfig, X0,
           rng: Optional[np.random.Generator] = None):
    """Robust waveform for an uncertain channel centred on ``problem.params``.

    Runs a fixed budget of ``stoch.max_iter`` iterations; returns ``(X, trace)``.
    """
    if rng is None:
        rng = np.random.default_rng(stoch.seed)
    model = StochasticModel(problem, spec, stoch.N, rng, X0)
    config = dataclasses.replace(config, max_iter=stoch.max_iter)
    return penalty_cg(model, constraints, config, X0, grad_stop=False)


def evaluate_design(X, problem: SensingProblem, spec: PerturbationSpec, sigma_e: float,
                    n_eval: int, rng) -> float:
    """Mean log-det objective of ``X`` over ``n_eval`` draws at fixed ``sigma_e``."""
    batch, _ = draw_batch(problem, spec.with_fixed_sigma(sigma_e), n_eval, rng, X)
    return batch_objective(X, batch)
