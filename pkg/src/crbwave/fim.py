"""Fisher information of the multipath parameters and the weighted log-det design objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import (
    N_TYPES,
    ArrayGeometry,
    MultipathParams,
    OfdmNumerology,
    ResourceElement,
    channel_derivatives,
    phase_factors,
    steering_derivative,
    steering_vector,
)


class SingularFimError(np.linalg.LinAlgError):
    """Raised where a finite value is required but the (weighted) FIM is not positive definite."""


@dataclass(frozen=True, eq=False)
class ResourceGrid:
    """``M`` resource elements ``(n_m, k_m)`` and their noise variances.

    The element order fixes the column order of the waveform matrix.
    """

    n: np.ndarray
    k: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n, dtype=int)
        k = np.asarray(self.k, dtype=int)
        nv = np.broadcast_to(np.asarray(self.noise_var, dtype=float), n.shape).copy()
        if n.ndim != 1 or n.shape != k.shape or n.size < 1:
            raise ValueError("resource grid needs matching 1-D index arrays with M >= 1")
        if np.any(n < 0) or np.any(k < 0):
            raise ValueError("subcarrier and symbol indices must be non-negative")
        if not np.all(nv > 0):
            raise ValueError("noise variances must be positive")
        for name, arr in (("n", n), ("k", k), ("noise_var", nv)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def M(self) -> int:
        return self.n.size

    @property
    def elements(self) -> list[ResourceElement]:
        return [ResourceElement(int(a), int(b)) for a, b in zip(self.n, self.k)]

    @classmethod
    def from_elements(cls, elements: Sequence[ResourceElement], noise_var) -> "ResourceGrid":
        return cls([e.n for e in elements], [e.k for e in elements], noise_var)

    def subset(self, idx) -> "ResourceGrid":
        return ResourceGrid(self.n[idx], self.k[idx], self.noise_var[idx])


def lambda_matrix(params: MultipathParams, re: ResourceElement, num: OfdmNumerology) -> np.ndarray:
    """Diagonal of the per-RE scaling matrix (length 6L)."""
    return lambda_rows(params, np.array([re.n]), np.array([re.k]), num)[0]


def lambda_rows(params: MultipathParams, n, k, num: OfdmNumerology) -> np.ndarray:
    """Diagonals of the scaling matrices for many REs, shape ``(M, 6L)``."""
    w = phase_factors(params, n, k, num)
    n = np.asarray(n, dtype=float)[:, None]
    k = np.asarray(k, dtype=float)[:, None]
    b = params.gain
    g = -2j * np.pi * n * num.f0 * w
    f = 2j * np.pi * k * num.Ts * w
    return np.concatenate([w, 1j * w, b * g, b * f, b * w, b * w], axis=1)


def tr_matrices(params: MultipathParams, geom: ArrayGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Transmit and receive steering blocks ``T`` (nT x 6L) and ``R`` (nR x 6L)."""
    AT = steering_vector(params.aod, geom.nT)
    DT = steering_derivative(params.aod, geom.nT)
    AR = steering_vector(params.aoa, geom.nR)
    DR = steering_derivative(params.aoa, geom.nR)
    T = np.concatenate([AT, AT, AT, AT, AT, DT], axis=1)
    R = np.concatenate([AR, AR, AR, AR, DR, AR], axis=1)
    return T, R


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product."""
    if A.shape[1] != B.shape[1]:
        raise ValueError("Khatri-Rao product needs equal column counts")
    return (A[:, None, :] * B[None, :, :]).reshape(A.shape[0] * B.shape[0], A.shape[1])


def face_splitting(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product."""
    if A.shape[0] != B.shape[0]:
        raise ValueError("face-splitting product needs equal row counts")
    return (A[:, :, None] * B[:, None, :]).reshape(A.shape[0], A.shape[1] * B.shape[1])


def _check_waveform(X: np.ndarray, grid: ResourceGrid, geom: ArrayGeometry) -> np.ndarray:
    X = np.asarray(X)
    if X.shape != (geom.nT, grid.M):
        raise ValueError(f"waveform shape {X.shape} does not match (nT, M) = {(geom.nT, grid.M)}")
    return X


def fim_closed(X, params: MultipathParams, grid: ResourceGrid, num: OfdmNumerology, geom: ArrayGeometry):
    """FIM via the Hadamard form ``Re{(sum_m c_m L^H T^H x* x^T T L) o (R^H R)}``."""
    X = _check_waveform(X, grid, geom)
    T, R = tr_matrices(params, geom)
    lam = lambda_rows(params, grid.n, grid.k, num)
    # row m is Lambda_m T^T x_m
    V = (T.T @ X).T * lam
    c = 2.0 / grid.noise_var
    S = (V.conj().T * c) @ V
    info = np.real(S * (R.conj().T @ R))
    return 0.5 * (info + info.T)


def fim_elementwise(X, params: MultipathParams, grid: ResourceGrid, num: OfdmNumerology, geom: ArrayGeometry):
    """FIM summed entry by entry from the channel Jacobians (reference path)."""
    X = _check_waveform(X, grid, geom)
    info = np.zeros((params.dim, params.dim))
    eye = np.eye(geom.nR)
    for m, re in enumerate(grid.elements):
        x = X[:, m]
        D = channel_derivatives(params, re, num, geom)
        K = np.kron(np.outer(x.conj(), x), eye)
        info += (2.0 / grid.noise_var[m]) * np.real(D.conj().T @ K @ D)
    return info


def weighted_logdet(info: np.ndarray, weights) -> float:
    """``log det(J^T I J)`` for diagonal ``J``; ``-inf`` if the product is not positive definite."""
    d = np.asarray(weights, dtype=float)
    A = d[:, None] * info * d[None, :]
    try:
        c, _ = cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        return -np.inf
    diag = np.diag(c)
    if np.any(diag <= 0):
        return -np.inf
    return 2.0 * float(np.sum(np.log(diag)))


@dataclass(frozen=True, eq=False)
class SensingProblem:
    """Everything the design objective depends on besides the waveform."""

    params: MultipathParams
    grid: ResourceGrid
    num: OfdmNumerology
    geom: ArrayGeometry
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.params.dim,) or not np.all(w > 0):
            raise ValueError("weights must be a positive vector of length 6L")
        object.__setattr__(self, "weights", w)

    def with_params(self, params: MultipathParams) -> "SensingProblem":
        return SensingProblem(params, self.grid, self.num, self.geom, self.weights)

    def fim(self, X) -> np.ndarray:
        return fim_closed(X, self.params, self.grid, self.num, self.geom)

    def objective(self, X) -> float:
        return objective(X, self.params, self.grid, self.num, self.geom, self.weights)

    def objective_gradient(self, X) -> np.ndarray:
        return objective_gradient(X, self.params, self.grid, self.num, self.geom, self.weights)


def objective(X, params, grid, num, geom, weights) -> float:
    """Weighted log-det of the FIM, ``-inf`` when singular."""
    return weighted_logdet(fim_closed(X, params, grid, num, geom), weights)


def objective_and_gradient(X, params, grid, num, geom, weights) -> tuple[float, np.ndarray]:
    """Objective and its Euclidean gradient w.r.t. ``X`` under ``Re tr(A^H B)``.

    Raises :class:`SingularFimError` if the weighted FIM is not positive definite.
    """
    X = _check_waveform(X, grid, geom)
    T, R = tr_matrices(params, geom)
    lam = lambda_rows(params, grid.n, grid.k, num)
    V = (T.T @ X).T * lam
    c = 2.0 / grid.noise_var
    Q = R.conj().T @ R
    info = np.real(((V.conj().T * c) @ V) * Q)
    info = 0.5 * (info + info.T)

    d = np.asarray(weights, dtype=float)
    A = d[:, None] * info * d[None, :]
    try:
        cf = cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularFimError("weighted FIM is not positive definite") from exc
    diag = np.diag(cf[0])
    if np.any(diag <= 0):
        raise SingularFimError("weighted FIM is not positive definite")
    value = 2.0 * float(np.sum(np.log(diag)))

    # d logdet = tr(G dI) with G = J (J I J)^-1 J; the Hermitian W = G o Q carries it to each v_m
    G = d[:, None] * cho_solve(cf, np.eye(d.size)) * d[None, :]
    W = 0.5 * (G + G.T) * Q
    Z = lam.conj() * (V @ W.T)
    grad = (T.conj() @ Z.T) * (2.0 * c)[None, :]
    return value, grad


def objective_gradient(X, params, grid, num, geom, weights) -> np.ndarray:
    return objective_and_gradient(X, params, grid, num, geom, weights)[1]
