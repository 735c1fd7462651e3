"""Beam-space MIMO-OFDM channel and its derivatives w.r.t. the multipath parameters.

Parameter vectors use a type-major layout: all real gain parts, then all
imaginary gain parts, then delays, Dopplers, AoAs and AoDs, each block holding
one entry per path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PARAM_TYPES = ("gain_re", "gain_im", "delay", "doppler", "aoa", "aod")
N_TYPES = len(PARAM_TYPES)


@dataclass(frozen=True)
class OfdmNumerology:
    """Subcarrier spacing ``f0`` [Hz], carrier ``fc`` [Hz]; symbol time is ``1/f0``."""

    f0: float = 15e3
    fc: float = 3e9

    def __post_init__(self):
        if not self.f0 > 0 or not self.fc > 0:
            raise ValueError(f"f0 and fc must be positive, got f0={self.f0}, fc={self.fc}")

    @property
    def Ts(self) -> float:
        return 1.0 / self.f0


@dataclass(frozen=True)
class ArrayGeometry:
    nT: int
    nR: int

    def __post_init__(self):
        if self.nT < 1 or self.nR < 1:
            raise ValueError(f"antenna counts must be >= 1, got nT={self.nT}, nR={self.nR}")


@dataclass(frozen=True)
class PathParams:
    bR: float
    bI: float
    tau: float
    fD: float
    phi: float
    theta: float


@dataclass(frozen=True, eq=False)
class MultipathParams:
    """Parameters of ``L`` propagation paths, stored as per-type arrays."""

    gain: np.ndarray
    tau: np.ndarray
    doppler: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray

    def __post_init__(self):
        arrays = {
            "gain": np.asarray(self.gain, dtype=complex),
            "tau": np.asarray(self.tau, dtype=float),
            "doppler": np.asarray(self.doppler, dtype=float),
            "aoa": np.asarray(self.aoa, dtype=float),
            "aod": np.asarray(self.aod, dtype=float),
        }
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1 or len(next(iter(shapes))) != 1 or arrays["gain"].size < 1:
            raise ValueError("all multipath parameter arrays must be 1-D of equal length L >= 1")
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def L(self) -> int:
        return self.gain.size

    @property
    def dim(self) -> int:
        return N_TYPES * self.L

    @property
    def paths(self) -> list[PathParams]:
        return [
            PathParams(g.real, g.imag, t, f, p, th)
            for g, t, f, p, th in zip(self.gain, self.tau, self.doppler, self.aoa, self.aod)
        ]

    @classmethod
    def from_paths(cls, paths: Sequence[PathParams]) -> "MultipathParams":
        return cls(
            gain=[p.bR + 1j * p.bI for p in paths],
            tau=[p.tau for p in paths],
            doppler=[p.fD for p in paths],
            aoa=[p.phi for p in paths],
            aod=[p.theta for p in paths],
        )

    def to_vector(self) -> np.ndarray:
        """Flatten to the real 6L vector in type-major order."""
        return np.concatenate(
            [self.gain.real, self.gain.imag, self.tau, self.doppler, self.aoa, self.aod]
        )

    @classmethod
    def from_vector(cls, xi: np.ndarray) -> "MultipathParams":
        xi = np.asarray(xi, dtype=float)
        if xi.ndim != 1 or xi.size % N_TYPES or xi.size == 0:
            raise ValueError(f"parameter vector length must be a positive multiple of 6, got {xi.shape}")
        bR, bI, tau, fD, phi, theta = xi.reshape(N_TYPES, -1)
        return cls(gain=bR + 1j * bI, tau=tau, doppler=fD, aoa=phi, aod=theta)


@dataclass(frozen=True)
class ResourceElement:
    n: int
    k: int


def steering_vector(angle, count: int) -> np.ndarray:
    """Half-wavelength ULA response, element ``p`` is ``exp(j*pi*p*sin(angle))``.

    A 1-D ``angle`` array gives a ``count x len(angle)`` matrix, one column per angle.
    """
    p = np.arange(count)
    angle = np.asarray(angle, dtype=float)
    return np.exp(1j * np.pi * np.multiply.outer(p, np.sin(angle)))


def steering_derivative(angle, count: int) -> np.ndarray:
    """Derivative of :func:`steering_vector` with respect to the angle."""
    p = np.arange(count)
    angle = np.asarray(angle, dtype=float)
    return 1j * np.pi * np.multiply.outer(p, np.cos(angle)) * steering_vector(angle, count)


def phase_factor(params, re: ResourceElement, num: OfdmNumerology):
    """Delay/Doppler phase of a path at one resource element.

    Accepts a single :class:`PathParams` (scalar result) or a
    :class:`MultipathParams` (one value per path).
    """
    if isinstance(params, PathParams):
        tau, fD = params.tau, params.fD
    else:
        tau, fD = params.tau, params.doppler
    return np.exp(-2j * np.pi * re.n * num.f0 * tau) * np.exp(2j * np.pi * fD * re.k * num.Ts)


def phase_factors(params: MultipathParams, n, k, num: OfdmNumerology) -> np.ndarray:
    """Phase factors for many REs at once, shape ``(M, L)``."""
    n = np.asarray(n, dtype=float)[:, None]
    k = np.asarray(k, dtype=float)[:, None]
    return np.exp(-2j * np.pi * n * num.f0 * params.tau) * np.exp(
        2j * np.pi * params.doppler * k * num.Ts
    )


def channel_vector(
    params: MultipathParams, re: ResourceElement, num: OfdmNumerology, geom: ArrayGeometry
) -> np.ndarray:
    """``vec(H)`` at one RE, i.e. ``sum_l b_l w_l a_T(theta_l) kron a_R(phi_l)``."""
    aT = steering_vector(params.aod, geom.nT)
    aR = steering_vector(params.aoa, geom.nR)
    coef = params.gain * phase_factor(params, re, num)
    # column-wise kron of the steering matrices
    kr = (aT[:, None, :] * aR[None, :, :]).reshape(geom.nT * geom.nR, params.L)
    return kr @ coef


def channel_derivatives(
    params: MultipathParams, re: ResourceElement, num: OfdmNumerology, geom: ArrayGeometry
) -> np.ndarray:
    """Jacobian of :func:`channel_vector`, shape ``(nT*nR, 6L)``, built column by column."""
    L = params.L
    out = np.empty((geom.nT * geom.nR, N_TYPES * L), dtype=complex)
    for l, path in enumerate(params.paths):
        b = params.gain[l]
        w = phase_factor(path, re, num)
        aT = steering_vector(path.theta, geom.nT)
        aR = steering_vector(path.phi, geom.nR)
        dT = steering_derivative(path.theta, geom.nT)
        dR = steering_derivative(path.phi, geom.nR)
        base = np.kron(aT, aR)
        g = -2j * np.pi * re.n * num.f0 * w
        f = 2j * np.pi * re.k * num.Ts * w
        out[:, 0 * L + l] = w * base
        out[:, 1 * L + l] = 1j * w * base
        out[:, 2 * L + l] = b * g * base
        out[:, 3 * L + l] = b * f * base
        out[:, 4 * L + l] = b * w * np.kron(aT, dR)
        out[:, 5 * L + l] = b * w * np.kron(dT, aR)
    return out
