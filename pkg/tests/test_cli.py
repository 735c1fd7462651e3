import csv
import json
import math

import numpy as np
import pytest

from crbwave.cli import main
from crbwave.experiments import ExperimentSpec, corner_fraction, fmt, write_trace_csv
from crbwave.manifold import OptimizerConfig, repms
from crbwave.scenario import ConfigError

TINY = {
    "scenario": {"nT": 2, "nR": 2, "nSubcarriers": 4, "nSymbols": 2, "L": 1, "alpha": 4},
    "nScenarios": 2,
    "alphaList": [2, 4, "inf"],
    "sigmaEList": [0, 50],
    "nList": [1, 2],
    "nEval": 5,
    "stochasticMaxIter": 15,
    "optimizer": {"maxIter": 40},
    "seed": 3,
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def run(tmp_path, command, data=TINY, out="out", extra=()):
    cfg = write_config(tmp_path, data)
    out_dir = tmp_path / out
    code = main([command, "--config", cfg, "--out-dir", str(out_dir), *extra])
    return code, out_dir


class TestCommands:
    def test_feasibility(self, tmp_path):
        data = dict(TINY, alphaList=[2, 4])
        code, out = run(tmp_path, "feasibility", data)
        assert code == 0
        rows = read_csv(out / "feasibility.csv")
        assert rows[0] == ["scenarioId", "alpha", "maxViolation"]
        assert len(rows) == 1 + 2 * 2
        assert all(float(r[2]) <= 1e-2 * float(r[1]) * 10 for r in rows[1:])
        resolved = json.loads((out / "config_resolved.json").read_text())
        assert resolved["command"] == "feasibility" and resolved["seed"] == 3

    def test_feasibility_rejects_inf(self, tmp_path, capsys):
        code, _ = run(tmp_path, "feasibility")
        assert code == 2
        assert "alphaList" in capsys.readouterr().err

    def test_alpha_sweep(self, tmp_path):
        code, out = run(tmp_path, "alpha-sweep")
        assert code == 0
        rows = read_csv(out / "alpha-sweep.csv")
        assert rows[0] == ["scenarioId", "alpha", "finalObjective", "iterations", "wallTime"]
        means = [r for r in rows[1:] if r[0] == "mean"]
        assert [r[1] for r in means] == ["2", "4", "inf"]
        assert len(rows) == 1 + 2 * 3 + 3

    def test_power_map(self, tmp_path):
        code, out = run(tmp_path, "power-map")
        assert code == 0
        rows = read_csv(out / "power-map.csv")
        assert rows[0] == ["subcarrier", "symbol0", "symbol1"]
        grid = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        assert grid.shape == (4, 2)
        summary = json.loads((out / "power-map_summary.json").read_text())
        np.testing.assert_allclose(summary["scenarioTotals"], 8 * 10.0, rtol=1e-9)
        assert 0 < summary["cornerFraction"] <= 1

    def test_power_map_needs_rectangle(self, tmp_path, capsys):
        data = json.loads(json.dumps(TINY))
        data["scenario"]["resourceElements"] = [[1, 1], [2, 1], [3, 0]]
        code, _ = run(tmp_path, "power-map", data)
        assert code == 2
        assert "scenario.resourceElements" in capsys.readouterr().err

    def test_robust(self, tmp_path):
        code, out = run(tmp_path, "robust")
        assert code == 0
        rows = read_csv(out / "robust.csv")
        assert rows[0] == ["scenarioId", "design", "sigmaE", "meanObjective"]
        designs = sorted({r[1] for r in rows[1:]})
        assert designs == ["REPMS", "SREPMS(N=1)", "SREPMS(N=2)"]
        assert len(rows) == 1 + 2 * 3 * 2

    def test_crlb_curves(self, tmp_path):
        code, out = run(tmp_path, "crlb-curves")
        assert code == 0
        rows = read_csv(out / "crlb-curves.csv")
        assert rows[0] == ["scenarioId", "design", "sigmaE", "paramType", "sqrtCrlb"]
        assert len(rows) == 1 + 2 * 3 * 2 * 6
        assert all(float(r[4]) > 0 for r in rows[1:])

    def test_overrides(self, tmp_path):
        code, out = run(tmp_path, "alpha-sweep", extra=("--scenarios", "1", "--seed", "9"))
        assert code == 0
        assert json.loads((out / "config_resolved.json").read_text())["nScenarios"] == 1
        assert {r[0] for r in read_csv(out / "alpha-sweep.csv")[1:]} == {"0", "mean"}


def strip_wall(rows):
    header = rows[0]
    if "wallTime" in header:
        j = header.index("wallTime")
        return [r[:j] + r[j + 1:] for r in rows]
    return rows


class TestDeterminism:
    @pytest.mark.parametrize("command", ["feasibility", "robust"])
    def test_byte_identical(self, tmp_path, command):
        data = dict(TINY, alphaList=[2, 4])
        _, a = run(tmp_path, command, data, out="a")
        _, b = run(tmp_path, command, data, out="b")
        assert (a / f"{command}.csv").read_bytes() == (b / f"{command}.csv").read_bytes()

    def test_alpha_sweep_excluding_wall_time(self, tmp_path):
        _, a = run(tmp_path, "alpha-sweep", out="a")
        _, b = run(tmp_path, "alpha-sweep", out="b")
        assert strip_wall(read_csv(a / "alpha-sweep.csv")) == strip_wall(read_csv(b / "alpha-sweep.csv"))

    def test_workers_do_not_change_output(self, tmp_path):
        data = dict(TINY, alphaList=[2, 4])
        _, a = run(tmp_path, "feasibility", data, out="a")
        _, b = run(tmp_path, "feasibility", data, out="b", extra=("--workers", "2"))
        assert (a / "feasibility.csv").read_bytes() == (b / "feasibility.csv").read_bytes()


class TestErrors:
    def test_unknown_key(self, tmp_path, capsys):
        code, _ = run(tmp_path, "alpha-sweep", dict(TINY, bogus=1))
        assert code == 2
        assert "bogus" in capsys.readouterr().err

    def test_unknown_nested_key(self, tmp_path, capsys):
        code, _ = run(tmp_path, "alpha-sweep", dict(TINY, optimizer={"maxIters": 3}))
        assert code == 2
        assert "optimizer.maxIters" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["robust", "--config", str(tmp_path / "nope.json")]) == 2

    def test_numerical_failure(self, tmp_path, capsys):
        data = json.loads(json.dumps(TINY))
        data["scenario"].update({"nT": 1, "nR": 1})
        code, _ = run(tmp_path, "alpha-sweep", data)
        assert code == 3
        err = capsys.readouterr().err
        assert "scenario 0" in err and "iteration 0" in err


class TestHelpers:
    def test_fmt(self):
        x = 0.1 + 0.2
        assert float(fmt(x)) == x
        assert fmt(math.inf) == "inf" and fmt(-math.inf) == "-inf"
        assert fmt(3) == "3" and fmt("REPMS") == "REPMS"

    def test_corner_fraction(self):
        m = np.zeros((8, 4))
        m[0, 0] = m[-1, -1] = 1.0
        m[3, 2] = 2.0
        assert corner_fraction(m) == pytest.approx(0.5)

    def test_spec_roundtrip(self):
        spec = ExperimentSpec.from_dict(TINY)
        assert ExperimentSpec.from_dict(spec.to_dict()) == spec

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            ExperimentSpec.from_dict({"nList": []})
        with pytest.raises(ConfigError):
            ExperimentSpec.from_dict({"nScenarios": 0})

    def test_trace_csv(self, tmp_path):
        from crbwave.scenario import ScenarioConfig, generate_scenario, make_problem, scenario_rng
        from crbwave.manifold import random_sphere_point

        cfg = ScenarioConfig(nT=2, nR=2, nSubcarriers=4, nSymbols=2, L=1)
        params, grid, cons = generate_scenario(cfg, scenario_rng(0, 0))
        X0 = random_sphere_point(2, grid.M, grid.M * cfg.P, np.random.default_rng(0))
        _, trace = repms(make_problem(cfg, params, grid), cons, OptimizerConfig(max_iter=5), X0)
        write_trace_csv(tmp_path / "t.csv", trace)
        rows = read_csv(tmp_path / "t.csv")
        assert rows[0] == ["iter", "loss", "objective", "maxViolation", "gradNorm", "rho", "u"]
        assert len(rows) == 1 + len(trace)
