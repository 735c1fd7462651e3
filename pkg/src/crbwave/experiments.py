"""Experiment runners behind the command line: feasibility, alpha sweep, power map,
robustness and CRLB curves. Every runner returns CSV rows in scenario order."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .crlb import per_parameter_rmse
from .channel import PARAM_TYPES
from .fim import SingularFimError, fim_closed
from .manifold import OptimizationError, OptimizerConfig, PowerConstraints, random_sphere_point, repms
from .scenario import (
    ConfigError,
    ScenarioConfig,
    format_alpha,
    generate_scenario,
    make_problem,
    parse_alpha,
    scenario_rng,
)
from .stochastic import PerturbationSpec, StochasticConfig, draw_batch, evaluate_design, srepms

COMMANDS = ("feasibility", "alpha-sweep", "power-map", "robust", "crlb-curves")

# RNG substreams within one scenario
STREAM_SCENARIO, STREAM_START, STREAM_EVAL = 0, 1, 2
STREAM_DESIGN = 100

_OPT_KEYS = {
    "rho0": "rho0", "thetaRho": "theta_rho", "rhoMax": "rho_max", "u0": "u0",
    "thetaU": "theta_u", "uMin": "u_min", "maxIter": "max_iter", "gradTol": "grad_tol",
    "cgRule": "cg_rule", "step0": "step0", "contraction": "contraction",
    "armijo": "armijo", "maxBacktracks": "max_backtracks",
}
_PERT_KEYS = {
    "scaleGainR": "scale_gain_re", "scaleGainI": "scale_gain_im", "scaleTau": "scale_tau",
    "scaleDoppler": "scale_doppler", "scaleAoa": "scale_aoa", "scaleAod": "scale_aod",
    "sigmaERange": "sigma_e_range",
}


class ExperimentFailure(RuntimeError):
    def __init__(self, scenario: int, iteration: int, message: str):
        super().__init__(f"scenario {scenario}, iteration {iteration}: {message}")
        self.scenario = scenario
        self.iteration = iteration


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    nScenarios: int = 20
    alphaList: tuple = (2.0, 4.0, 10.0)
    sigmaEList: tuple = (0.0, 25.0, 50.0)
    nList: tuple = (1, 10, 30)
    nEval: int = 100
    stochasticMaxIter: int = 300
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.nScenarios < 1:
            raise ConfigError("nScenarios", "must be >= 1")
        for key in ("alphaList", "sigmaEList", "nList"):
            if len(getattr(self, key)) == 0:
                raise ConfigError(key, "must be non-empty")
        if any(n < 1 for n in self.nList):
            raise ConfigError("nList", "sample counts must be >= 1")
        if any(s < 0 for s in self.sigmaEList):
            raise ConfigError("sigmaEList", "values must be >= 0")
        if any(not a > 0 for a in self.alphaList):
            raise ConfigError("alphaList", "values must be positive or 'inf'")
        if self.nEval < 1:
            raise ConfigError("nEval", "must be >= 1")
        if self.stochasticMaxIter < 0:
            raise ConfigError("stochasticMaxIter", "must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentSpec":
        if not isinstance(data, Mapping):
            raise ConfigError("<root>", "configuration must be a JSON object")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            try:
                if key == "scenario":
                    kwargs[key] = ScenarioConfig.from_dict(value, prefix="scenario.")
                elif key == "optimizer":
                    kwargs[key] = OptimizerConfig(**_translate(value, _OPT_KEYS, "optimizer."))
                elif key == "perturbation":
                    sub = _translate(value, _PERT_KEYS, "perturbation.")
                    if "sigma_e_range" in sub:
                        lo, hi = sub["sigma_e_range"]
                        sub["sigma_e_range"] = (float(lo), float(hi))
                    kwargs[key] = PerturbationSpec(**sub)
                elif key == "alphaList":
                    kwargs[key] = tuple(parse_alpha(a) for a in value)
                elif key == "sigmaEList":
                    kwargs[key] = tuple(float(s) for s in value)
                elif key == "nList":
                    kwargs[key] = tuple(_as_int(n) for n in value)
                elif key in ("nScenarios", "nEval", "stochasticMaxIter", "seed", "workers"):
                    kwargs[key] = _as_int(value)
                else:
                    raise ConfigError(key, "unknown key")
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, str(exc)) from exc
        return cls(**kwargs)

    def to_dict(self) -> dict:
        opt = {k: getattr(self.optimizer, v) for k, v in _OPT_KEYS.items()}
        pert = {k: getattr(self.perturbation, v) for k, v in _PERT_KEYS.items()}
        pert["sigmaERange"] = list(pert["sigmaERange"])
        return {
            "scenario": self.scenario.to_dict(),
            "nScenarios": self.nScenarios,
            "alphaList": [format_alpha(a) if math.isinf(a) else a for a in self.alphaList],
            "sigmaEList": list(self.sigmaEList),
            "nList": list(self.nList),
            "nEval": self.nEval,
            "stochasticMaxIter": self.stochasticMaxIter,
            "perturbation": pert,
            "optimizer": opt,
            "seed": self.seed,
            "workers": self.workers,
        }


def _as_int(value) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


def _translate(data, mapping: dict, prefix: str) -> dict:
    if not isinstance(data, Mapping):
        raise ConfigError(prefix.rstrip("."), "must be an object")
    out = {}
    for key, value in data.items():
        if key not in mapping:
            raise ConfigError(prefix + key, "unknown key")
        out[mapping[key]] = value
    return out


def load_config(path) -> ExperimentSpec:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return ExperimentSpec.from_dict(data)


def fmt(x) -> str:
    """17 significant digits, ``inf``/``-inf``/``nan`` spelled out."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


TRACE_HEADER = ["iter", "loss", "objective", "maxViolation", "gradNorm", "rho", "u"]


def write_trace_csv(path, trace) -> None:
    """Iteration log as CSV; stochastic runs add the per-sample ``sigmaE`` draws."""
    stochastic = any("sigma_e" in r.extra for r in trace)
    header = TRACE_HEADER + (["sigmaE"] if stochastic else [])
    rows = []
    for r in trace:
        row = [r.iter, r.loss, r.objective, r.max_violation, r.grad_norm, r.rho, r.u]
        if stochastic:
            row.append(";".join(fmt(s) for s in r.extra.get("sigma_e", [])))
        rows.append(row)
    write_csv(path, header, rows)


def _map(fn: Callable, items, workers: int):
    """Ordered map, optionally across processes."""
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _setup(spec: ExperimentSpec, index: int, alpha: float | None = None):
    cfg = spec.scenario if alpha is None else dataclasses.replace(spec.scenario, alpha=alpha)
    params, grid, constraints = generate_scenario(cfg, scenario_rng(spec.seed, index, STREAM_SCENARIO))
    problem = make_problem(cfg, params, grid)
    X0 = random_sphere_point(cfg.nT, grid.M, grid.M * cfg.P, scenario_rng(spec.seed, index, STREAM_START))
    return cfg, problem, constraints, X0


def _guard(index: int, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except OptimizationError as exc:
        raise ExperimentFailure(index, exc.iteration, str(exc)) from exc
    except SingularFimError as exc:
        raise ExperimentFailure(index, -1, str(exc)) from exc


def _run_repms(spec, index, alpha=None):
    cfg, problem, constraints, X0 = _setup(spec, index, alpha)
    t0 = time.perf_counter()
    X, trace = _guard(index, repms, problem, constraints, spec.optimizer, X0)
    return cfg, problem, constraints, X, trace, time.perf_counter() - t0


# -- feasibility ---------------------------------------------------------------

def _feasibility_task(args):
    spec, index = args
    rows = []
    for alpha in spec.alphaList:
        cfg, _, constraints, X, _, _ = _run_repms(spec, index, alpha)
        rows.append((index, format_alpha(alpha), float(np.max(constraints.violation(X)))))
    return rows


def run_feasibility(spec: ExperimentSpec):
    if any(math.isinf(a) for a in spec.alphaList):
        raise ConfigError("alphaList", "feasibility needs finite alpha values")
    header = ["scenarioId", "alpha", "maxViolation"]
    chunks = _map(_feasibility_task, [(spec, i) for i in range(spec.nScenarios)], spec.workers)
    return header, [r for chunk in chunks for r in chunk]


# -- alpha sweep ---------------------------------------------------------------

def _alpha_task(args):
    spec, index = args
    rows = []
    for alpha in spec.alphaList:
        _, problem, _, X, trace, wall = _run_repms(spec, index, alpha)
        rows.append((index, format_alpha(alpha), problem.objective(X), trace[-1].iter, wall))
    return rows


def run_alpha_sweep(spec: ExperimentSpec):
    header = ["scenarioId", "alpha", "finalObjective", "iterations", "wallTime"]
    chunks = _map(_alpha_task, [(spec, i) for i in range(spec.nScenarios)], spec.workers)
    rows = [r for chunk in chunks for r in chunk]
    for j, alpha in enumerate(spec.alphaList):
        sel = [chunk[j] for chunk in chunks]
        rows.append((
            "mean", format_alpha(alpha),
            float(np.mean([r[2] for r in sel])),
            float(np.mean([r[3] for r in sel])),
            float(np.mean([r[4] for r in sel])),
        ))
    return header, rows


# -- power map -----------------------------------------------------------------

def corner_fraction(power_map: np.ndarray) -> float:
    """Share of total power in the four corner blocks, each a quarter of the grid along both axes."""
    ns, nk = power_map.shape
    bs, bk = max(1, math.ceil(ns / 4)), max(1, math.ceil(nk / 4))
    mask = np.zeros(power_map.shape, dtype=bool)
    for rs in (slice(0, bs), slice(ns - bs, ns)):
        for ks in (slice(0, bk), slice(nk - bk, nk)):
            mask[rs, ks] = True
    return float(power_map[mask].sum() / power_map.sum())


def _power_task(args):
    spec, index = args
    cfg, _, _, X, _, _ = _run_repms(spec, index)
    return np.sum(np.abs(X) ** 2, axis=0).reshape(cfg.nSubcarriers, cfg.nSymbols)


def run_power_map(spec: ExperimentSpec):
    cfg = spec.scenario
    if cfg.resourceElements is not None:
        raise ConfigError("scenario.resourceElements", "power-map needs a rectangular grid")
    maps = _map(_power_task, [(spec, i) for i in range(spec.nScenarios)], spec.workers)
    avg = np.mean(maps, axis=0)
    header = ["subcarrier"] + [f"symbol{k}" for k in range(cfg.nSymbols)]
    rows = [[n] + list(avg[n]) for n in range(cfg.nSubcarriers)]
    summary = {
        "cornerFraction": corner_fraction(avg),
        "scenarioTotals": [float(m.sum()) for m in maps],
    }
    return header, rows, summary


# -- robust designs --------------------------------------------------------------

def _designs(spec: ExperimentSpec, index: int):
    """REPMS design plus one SREPMS design per sample size, all from the same start point."""
    _, problem, constraints, X0 = _setup(spec, index)
    X, _ = _guard(index, repms, problem, constraints, spec.optimizer, X0)
    designs = [("REPMS", X)]
    for N in spec.nList:
        stoch = StochasticConfig(N=N, seed=spec.seed, max_iter=spec.stochasticMaxIter)
        rng = scenario_rng(spec.seed, index, STREAM_DESIGN + N)
        Xs, _ = _guard(index, srepms, problem, spec.perturbation, stoch, constraints, spec.optimizer, X0, rng=rng)
        designs.append((f"SREPMS(N={N})", Xs))
    return problem, designs


def _eval_rng(spec, index, j):
    return scenario_rng(spec.seed, index, STREAM_EVAL * 1000 + j)


def _robust_task(args):
    spec, index = args
    problem, designs = _designs(spec, index)
    rows = []
    for name, X in designs:
        for j, sigma_e in enumerate(spec.sigmaEList):
            # same evaluation draws for every design at a given sigma_e
            val = _guard(index, evaluate_design, X, problem, spec.perturbation, sigma_e,
                         spec.nEval, _eval_rng(spec, index, j))
            rows.append((index, name, sigma_e, val))
    return rows


def run_robust(spec: ExperimentSpec):
    header = ["scenarioId", "design", "sigmaE", "meanObjective"]
    chunks = _map(_robust_task, [(spec, i) for i in range(spec.nScenarios)], spec.workers)
    return header, [r for chunk in chunks for r in chunk]


def crlb_rows(index, name, X, problem, spec: ExperimentSpec):
    rows = []
    for j, sigma_e in enumerate(spec.sigmaEList):
        batch, _ = _guard(index, draw_batch, problem, spec.perturbation.with_fixed_sigma(sigma_e),
                          spec.nEval, _eval_rng(spec, index, j), X)
        per_type = []
        for prob in batch:
            info = fim_closed(X, prob.params, prob.grid, prob.num, prob.geom)
            per_type.append(per_parameter_rmse(info, prob.params.L).per_type)
        per_type = np.asarray(per_type)
        for t, ptype in enumerate(PARAM_TYPES):
            col = per_type[:, t]
            value = float(np.mean(col[np.isfinite(col)])) if np.any(np.isfinite(col)) else math.nan
            rows.append((index, name, sigma_e, ptype, value))
    return rows


def _crlb_task(args):
    spec, index = args
    problem, designs = _designs(spec, index)
    rows = []
    for name, X in designs:
        rows.extend(crlb_rows(index, name, X, problem, spec))
    return rows


def run_crlb_curves(spec: ExperimentSpec):
    header = ["scenarioId", "design", "sigmaE", "paramType", "sqrtCrlb"]
    chunks = _map(_crlb_task, [(spec, i) for i in range(spec.nScenarios)], spec.workers)
    return header, [r for chunk in chunks for r in chunk]


RUNNERS = {
    "feasibility": run_feasibility,
    "alpha-sweep": run_alpha_sweep,
    "power-map": run_power_map,
    "robust": run_robust,
    "crlb-curves": run_crlb_curves,
}


def run_command(command: str, spec: ExperimentSpec, out_dir) -> Path:
    """Run one experiment and write ``<command>.csv`` and ``config_resolved.json`` into ``out_dir``."""
    if command not in RUNNERS:
        raise ValueError(f"unknown command {command!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config_resolved.json", "w") as fh:
        json.dump({"command": command, **spec.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    result = RUNNERS[command](spec)
    path = out_dir / f"{command}.csv"
    write_csv(path, result[0], result[1])
    if command == "power-map":
        with open(out_dir / "power-map_summary.json", "w") as fh:
            json.dump(result[2], fh, indent=2)
            fh.write("\n")
    return path
