"""Cramér-Rao bounds from the (unweighted) Fisher information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import N_TYPES, PARAM_TYPES
from .fim import SingularFimError

COND_LIMIT = 1e12


def _equilibrate(info: np.ndarray):
    """Scale to unit diagonal; the FIM mixes units spanning many decades."""
    d = np.diag(info).copy()
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise SingularFimError(
            f"FIM has a non-positive diagonal entry; smallest eigenvalue {np.linalg.eigvalsh(info)[0]:.3e}"
        )
    s = 1.0 / np.sqrt(d)
    return s, s[:, None] * info * s[None, :]


def crlb_matrix(info: np.ndarray) -> np.ndarray:
    """Inverse FIM through a Cholesky factorization of the equilibrated matrix."""
    info = np.asarray(info, dtype=float)
    s, C = _equilibrate(info)
    try:
        cf = cho_factor(C, lower=True)
    except np.linalg.LinAlgError:
        raise SingularFimError(
            f"FIM is not positive definite; smallest eigenvalue {np.linalg.eigvalsh(info)[0]:.3e}"
        ) from None
    inv = s[:, None] * cho_solve(cf, np.eye(C.shape[0])) * s[None, :]
    return 0.5 * (inv + inv.T)


@dataclass
class CrlbReport:
    per_index: np.ndarray
    per_type: np.ndarray
    flagged: np.ndarray
    condition: float

    def rows(self):
        """``(param_type, sqrt_crlb)`` pairs, path-averaged."""
        return list(zip(PARAM_TYPES, self.per_type))


def per_parameter_rmse(info: np.ndarray, L: int) -> CrlbReport:
    """Square-root CRLB per parameter and averaged over paths for each type.

    If the equilibrated FIM is worse conditioned than ``COND_LIMIT``, parameters
    loading on its near-null eigenvectors are flagged and their bounds set to NaN.
    """
    info = np.asarray(info, dtype=float)
    if info.shape != (N_TYPES * L, N_TYPES * L):
        raise ValueError(f"FIM shape {info.shape} does not match L={L}")
    s, C = _equilibrate(info)
    evals, evecs = np.linalg.eigh(C)
    cond = evals[-1] / evals[0] if evals[0] > 0 else np.inf
    flagged = np.zeros(info.shape[0], dtype=bool)
    if cond > COND_LIMIT:
        weak = evals < evals[-1] / COND_LIMIT
        loading = np.sum(np.abs(evecs[:, weak]) ** 2, axis=1)
        flagged = loading > 1.0 / info.shape[0]
        if evals[0] <= 0:
            per_index = np.full(info.shape[0], np.nan)
        else:
            per_index = np.sqrt(np.diag(s[:, None] * (evecs / evals) @ evecs.T * s[None, :]))
        per_index = np.where(flagged, np.nan, per_index)
    else:
        per_index = np.sqrt(np.diag(crlb_matrix(info)))
    per_type = per_index.reshape(N_TYPES, L).mean(axis=1)
    return CrlbReport(per_index, per_type, flagged, float(cond))
