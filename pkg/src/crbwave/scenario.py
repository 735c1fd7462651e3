"""Random multipath scenarios, resource grids and configuration parsing."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np

from .channel import N_TYPES, ArrayGeometry, MultipathParams, OfdmNumerology
from .fim import ResourceGrid, SensingProblem
from .manifold import PowerConstraints

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def parse_alpha(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() == "inf":
            return math.inf
        raise ValueError(f"alpha must be a number or 'inf', got {value!r}")
    return float(value)


def format_alpha(alpha: float) -> str:
    return "inf" if math.isinf(alpha) else format(alpha, ".17g")


@dataclass(frozen=True)
class ScenarioConfig:
    f0: float = 15e3
    fc: float = 3e9
    nT: int = 8
    nR: int = 8
    nSubcarriers: int = 16
    nSymbols: int = 4
    # explicit [[n, k], ...] list; overrides the rectangular grid when given
    resourceElements: Optional[tuple] = None
    L: int = 3
    pathLength: tuple = (10.0, 800.0)
    velocity: tuple = (0.0, 80.0)
    angleDeg: tuple = (-90.0, 90.0)
    P: float = 10.0
    snrDb: float = -10.0
    alpha: float = 4.0
    seed: int = 0

    def __post_init__(self):
        for key in ("pathLength", "velocity", "angleDeg"):
            lo, hi = getattr(self, key)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ConfigError(key, f"range must be finite and ordered, got {[lo, hi]}")
        if not -90.0 <= self.angleDeg[0] <= self.angleDeg[1] <= 90.0:
            raise ConfigError("angleDeg", "angles must lie within [-90, 90] degrees")
        if self.pathLength[0] < 0:
            raise ConfigError("pathLength", "path lengths must be non-negative")
        if not math.isfinite(self.snrDb):
            raise ConfigError("snrDb", "SNR must be finite")
        for key in ("nT", "nR", "nSubcarriers", "nSymbols", "L"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be >= 1")
        if not self.P > 0:
            raise ConfigError("P", "must be positive")
        if not self.alpha > 0:
            raise ConfigError("alpha", "must be positive or 'inf'")
        if not (self.f0 > 0 and self.fc > 0):
            raise ConfigError("f0" if not self.f0 > 0 else "fc", "must be positive")
        if self.resourceElements is not None:
            if len(self.resourceElements) == 0:
                raise ConfigError("resourceElements", "must be non-empty")
            for pair in self.resourceElements:
                if len(pair) != 2 or min(pair) < 0:
                    raise ConfigError("resourceElements", f"bad entry {pair!r}")

    @property
    def numerology(self) -> OfdmNumerology:
        return OfdmNumerology(self.f0, self.fc)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.nT, self.nR)

    @property
    def M(self) -> int:
        if self.resourceElements is not None:
            return len(self.resourceElements)
        return self.nSubcarriers * self.nSymbols

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], prefix: str = "") -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(prefix + key, "unknown key")
            try:
                kwargs[key] = _coerce(key, value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(prefix + key, str(exc)) from exc
        try:
            return cls(**kwargs)
        except ConfigError as exc:
            raise ConfigError(prefix + exc.key, str(exc).split(": ", 1)[-1]) from None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["alpha"] = format_alpha(self.alpha) if math.isinf(self.alpha) else self.alpha
        for key in ("pathLength", "velocity", "angleDeg"):
            out[key] = list(out[key])
        if self.resourceElements is not None:
            out["resourceElements"] = [list(p) for p in self.resourceElements]
        return out


def _coerce(key, value):
    if key in ("nT", "nR", "nSubcarriers", "nSymbols", "L", "seed"):
        if isinstance(value, bool) or int(value) != value:
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if key == "alpha":
        return parse_alpha(value)
    if key in ("pathLength", "velocity", "angleDeg"):
        lo, hi = value
        return (float(lo), float(hi))
    if key == "resourceElements":
        if value is None:
            return None
        return tuple((int(n), int(k)) for n, k in value)
    return float(value)


def deg2rad(x):
    return np.deg2rad(x)


def rad2deg(x):
    return np.rad2deg(x)


def noise_variance(P: float, snr_db: float) -> float:
    """Per-RE noise variance with SNR defined as ``P / sigma^2``."""
    if not P > 0:
        raise ValueError("P must be positive")
    return P / 10.0 ** (snr_db / 10.0)


def default_weight_matrix(L: int, num: OfdmNumerology) -> np.ndarray:
    """Diagonal of the weighting matrix: ``Ts`` on delays, ``f0`` on Dopplers, 1 elsewhere."""
    w = np.ones(N_TYPES * L)
    w[2 * L:3 * L] = num.Ts
    w[3 * L:4 * L] = num.f0
    return w


def build_grid(cfg: ScenarioConfig) -> ResourceGrid:
    """Rectangular grid enumerated subcarrier-major, or the explicit RE list."""
    sigma2 = noise_variance(cfg.P, cfg.snrDb)
    if cfg.resourceElements is not None:
        n, k = np.array(cfg.resourceElements, dtype=int).T
    else:
        n, k = np.meshgrid(np.arange(cfg.nSubcarriers), np.arange(cfg.nSymbols), indexing="ij")
        n, k = n.ravel(), k.ravel()
    return ResourceGrid(n, k, sigma2)


def generate_scenario(cfg: ScenarioConfig, rng: np.random.Generator):
    """Draw one multipath realization; returns ``(params, grid, constraints)``."""
    L = cfg.L
    bR = rng.standard_normal(L)
    bI = rng.standard_normal(L)
    dist = rng.uniform(*cfg.pathLength, size=L)
    vel = rng.uniform(*cfg.velocity, size=L)
    aoa = deg2rad(rng.uniform(*cfg.angleDeg, size=L))
    aod = deg2rad(rng.uniform(*cfg.angleDeg, size=L))
    params = MultipathParams(
        gain=bR + 1j * bI,
        tau=dist / SPEED_OF_LIGHT,
        doppler=vel * cfg.fc / SPEED_OF_LIGHT,
        aoa=aoa,
        aod=aod,
    )
    grid = build_grid(cfg)
    return params, grid, PowerConstraints(cfg.P, cfg.alpha, grid.M)


def scenario_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for scenario ``index``; ``stream`` separates uses within it."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, stream)))


def make_problem(cfg: ScenarioConfig, params: MultipathParams, grid: ResourceGrid) -> SensingProblem:
    num = cfg.numerology
    return SensingProblem(params, grid, num, cfg.geometry, default_weight_matrix(params.L, num))
