"""End-to-end CLI coverage: schemas, exit codes, determinism."""
import json
import math
import re

import numpy as np
import pytest
from click.testing import CliRunner

from robustutil._errors import ValidationError
from robustutil.cli import _jsonable, main

from helpers import K_CONST, U_STAR, Y_STAR


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def gen_scenario(tmp_path):
    path = tmp_path / "bs.json"
    path.write_text(json.dumps({
        "generator": {"type": "lognormal", "sigma": 0.5, "T": 1.0,
                      "s0": 1.0, "nodes": 64},
        "constraints": [{"observable": "S_T", "kind": "ge", "bound": 1.1}],
    }))
    return str(path)


@pytest.fixture()
def explicit_scenario(tmp_path):
    path = tmp_path / "twostate.json"
    path.write_text(json.dumps({
        "probs": [0.5, 0.5],
        "observables": {"h": [0.8, 1.2]},
        "constraints": [],
        "densities": [[1.2, 0.8], [0.8, 1.2]],
        "vectors": [[1.0, 1.0], [2.0, 0.0]],
    }))
    return str(path)


class TestSolveCommand:
    def test_json_schema_and_values(self, runner, gen_scenario):
        res = runner.invoke(main, ["solve", "--scenario", gen_scenario])
        assert res.exit_code == 0, res.stderr
        doc = json.loads(res.stdout)
        assert set(doc) == {"config", "solution", "diagnostics", "version"}
        sol = doc["solution"]
        assert set(sol) == {"x", "y_hat", "u", "v_at_y_hat", "Z_hat",
                            "X_hat"}
        assert sol["x"] == 1.0
        assert sol["u"] == pytest.approx(U_STAR, rel=1e-3)
        assert sol["y_hat"] == pytest.approx(Y_STAR, rel=1e-3)
        assert len(sol["Z_hat"]) == len(sol["X_hat"]) == 36
        diag = doc["diagnostics"]
        assert set(diag) == {"kkt", "budget_residual", "iterations",
                            "wall_time_ms"}
        assert abs(diag["budget_residual"]) <= 1e-7

    def test_unconstrained_explicit_market(self, runner, explicit_scenario):
        res = runner.invoke(main, ["solve", "--scenario", explicit_scenario])
        assert res.exit_code == 0, res.stderr
        sol = json.loads(res.stdout)["solution"]
        assert sol["u"] == pytest.approx(2.0, rel=1e-8)
        np.testing.assert_allclose(sol["Z_hat"], 1.0, atol=1e-7)

    def test_csv_layout(self, runner, gen_scenario):
        res = runner.invoke(main, ["solve", "--scenario", gen_scenario,
                                   "--format", "csv"])
        assert res.exit_code == 0
        lines = res.stdout.strip().split("\n")
        assert lines[0].startswith("# x=1.0 y_hat=")
        assert lines[1] == "state_index,prob,S_T,Z_hat,X_hat"
        assert len(lines) == 2 + 36
        first = lines[2].split(",")
        assert first[0] == "0" and len(first) == 5
        float(first[3])  # parses

    def test_out_file(self, runner, gen_scenario, tmp_path):
        target = tmp_path / "sol.json"
        res = runner.invoke(main, ["solve", "--scenario", gen_scenario,
                                   "--out", str(target)])
        assert res.exit_code == 0
        assert res.stdout == ""
        doc = json.loads(target.read_text())
        assert doc["solution"]["u"] == pytest.approx(U_STAR, rel=1e-3)

    def test_byte_determinism_modulo_walltime(self, runner, gen_scenario):
        args = ["solve", "--scenario", gen_scenario, "--seed", "7"]
        texts = []
        for _ in range(2):
            res = runner.invoke(main, args)
            assert res.exit_code == 0
            texts.append(re.sub(r'"wall_time_ms": [-+0-9.eE]+',
                                '"wall_time_ms": 0', res.stdout))
        assert texts[0] == texts[1]

    def test_missing_scenario_is_input_error(self, runner):
        res = runner.invoke(main, ["solve"])
        assert res.exit_code == 1
        assert "error:" in res.stderr and "--scenario" in res.stderr

    def test_bad_utility_specs(self, runner, gen_scenario):
        for spec in ("power:abc", "exp:1.0", "power"):
            res = runner.invoke(main, ["solve", "--scenario", gen_scenario,
                                       "--utility", spec])
            assert res.exit_code == 1, spec

    def test_threads_guard(self, runner, gen_scenario):
        res = runner.invoke(main, ["solve", "--scenario", gen_scenario,
                                   "--threads", "0"])
        assert res.exit_code == 1
        assert "threads" in res.stderr

    def test_nonpositive_wealth(self, runner, gen_scenario):
        res = runner.invoke(main, ["solve", "--scenario", gen_scenario,
                                   "--wealth", "0.0"])
        assert res.exit_code == 1

    def test_infeasible_bound_exit_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "generator": {"type": "lognormal", "sigma": 0.5, "T": 1.0,
                          "nodes": 64},
            "constraints": [{"observable": "S_T", "kind": "ge",
                             "bound": 50.0}],
        }))
        res = runner.invoke(main, ["solve", "--scenario", str(path)])
        assert res.exit_code == 2
        assert "infeasible" in res.stderr

    def test_bracket_failure_exit_3(self, runner, gen_scenario):
        res = runner.invoke(main, ["solve", "--scenario", gen_scenario,
                                   "--wealth", "1e20"])
        assert res.exit_code == 3
        assert "numerical failure" in res.stderr

    def test_missing_file_exit_1(self, runner, tmp_path):
        res = runner.invoke(main, ["solve", "--scenario",
                                   str(tmp_path / "nope.json")])
        assert res.exit_code == 1


class TestVerifyBSCommand:
    def test_default_run_passes(self, runner):
        res = runner.invoke(main, ["verify-bs"])
        assert res.exit_code == 0, res.stderr
        doc = json.loads(res.stdout)
        assert doc["pass"] is True
        assert doc["max_rel_err"] <= 1e-3
        names = {c["name"] for c in doc["comparisons"]}
        assert names == {"u", "y_hat", "v_at_y_hat", "Z_hat_sup",
                         "X_hat_sup"}
        assert all(c["pass"] for c in doc["comparisons"])
        assert "PASS" in res.stderr

    def test_both_grids_clear_tight_gate(self, runner):
        # quadrature error is ~1e-8 already at 64 nodes (the closed form
        # depends on the market only through two matched moments), so
        # both grids sit far inside the 1e-4 gate used at 256 nodes
        for nodes in (64, 256):
            res = runner.invoke(main, ["verify-bs", "--nodes", str(nodes),
                                       "--rtol", "1e-4"])
            assert res.exit_code == 0, res.stderr
            assert json.loads(res.stdout)["max_rel_err"] <= 1e-6

    def test_unachievable_rtol_exit_3(self, runner):
        res = runner.invoke(main, ["verify-bs", "--rtol", "1e-15"])
        assert res.exit_code == 3
        doc = json.loads(res.stdout)  # document still emitted
        assert doc["pass"] is False
        assert "FAIL" in res.stderr

    def test_csv_not_supported(self, runner):
        res = runner.invoke(main, ["verify-bs", "--format", "csv"])
        assert res.exit_code == 1
        assert "csv" in res.stderr


class TestMinimaxCommand:
    def test_two_state_family(self, runner, explicit_scenario):
        res = runner.invoke(main, ["minimax", "--scenario",
                                   explicit_scenario])
        assert res.exit_code == 0, res.stderr
        doc = json.loads(res.stdout)
        mm = doc["minimax"]
        assert set(mm) == {"sup_inf", "inf_sup", "gap", "saddle"}
        assert mm["inf_sup"] == pytest.approx(2.0, abs=1e-6)
        assert abs(mm["gap"]) <= 1e-4
        assert len(mm["saddle"]["X"]) == 2
        assert mm["saddle"]["j"] in (0, 1)

    def test_densities_field_required(self, runner, gen_scenario):
        res = runner.invoke(main, ["minimax", "--scenario", gen_scenario])
        assert res.exit_code == 1
        assert "densities" in res.stderr


class TestNormsCommand:
    def test_quadratic_closed_forms(self, runner, explicit_scenario):
        res = runner.invoke(main, ["norms", "--scenario",
                                   explicit_scenario])
        assert res.exit_code == 0, res.stderr
        rows = json.loads(res.stdout)["norms"]
        assert [r["index"] for r in rows] == [0, 1]
        # I(Z) = E[Z^2]: unit density has value 1, norms (1, 2)
        assert rows[0]["modular_value"] == pytest.approx(1.0, rel=1e-12)
        assert rows[0]["luxemburg"] == pytest.approx(1.0, rel=1e-9)
        assert rows[0]["amemiya"] == pytest.approx(2.0, rel=1e-9)
        # Z = (2, 0): I = 2, ||Z||^l = sqrt(2), ||Z||^a = 2 sqrt(2)
        assert rows[1]["modular_value"] == pytest.approx(2.0, rel=1e-12)
        assert rows[1]["luxemburg"] == pytest.approx(math.sqrt(2),
                                                     rel=1e-9)
        assert rows[1]["amemiya"] == pytest.approx(2 * math.sqrt(2),
                                                   rel=1e-9)

    def test_flat_vector_promoted(self, runner, tmp_path):
        path = tmp_path / "flat.json"
        path.write_text(json.dumps({
            "probs": [0.5, 0.5], "constraints": [],
            "vectors": [1.0, 1.0],
        }))
        res = runner.invoke(main, ["norms", "--scenario", str(path)])
        assert res.exit_code == 0
        rows = json.loads(res.stdout)["norms"]
        assert len(rows) == 1
        assert rows[0]["modular_value"] == pytest.approx(1.0)

    def test_vectors_field_required(self, runner, gen_scenario):
        res = runner.invoke(main, ["norms", "--scenario", gen_scenario])
        assert res.exit_code == 1
        assert "vectors" in res.stderr


class TestVcurveCommand:
    def test_values_match_closed_form(self, runner, gen_scenario):
        res = runner.invoke(main, ["vcurve", "--scenario", gen_scenario,
                                   "--y", "0.5,1.0,2.0"])
        assert res.exit_code == 0, res.stderr
        doc = json.loads(res.stdout)["vcurve"]
        assert doc["y"] == [0.5, 1.0, 2.0]
        for y, v in zip(doc["y"], doc["v"]):
            assert v == pytest.approx(K_CONST / y, rel=1e-4)

    def test_csv_layout(self, runner, gen_scenario):
        res = runner.invoke(main, ["vcurve", "--scenario", gen_scenario,
                                   "--y", "1.0,2.0", "--format", "csv"])
        assert res.exit_code == 0
        lines = res.stdout.strip().split("\n")
        assert lines[0].startswith("# version=")
        assert lines[1] == "y,v"
        assert len(lines) == 4
        y0, v0 = lines[2].split(",")
        assert float(y0) == 1.0
        assert float(v0) == pytest.approx(K_CONST, rel=1e-4)

    def test_grid_validation(self, runner, gen_scenario):
        for grid in ("2.0,1.0", "abc", "-1.0,1.0"):
            res = runner.invoke(main, ["vcurve", "--scenario", gen_scenario,
                                       "--y", grid])
            assert res.exit_code == 1, grid


class TestFeasibilityCommand:
    def test_strict_interior(self, runner, gen_scenario):
        res = runner.invoke(main, ["feasibility", "--scenario",
                                   gen_scenario])
        assert res.exit_code == 0, res.stderr
        rep = json.loads(res.stdout)["feasibility"]
        assert rep["feasible"] is True
        assert rep["strictly_feasible"] is True
        # analytic max-min slack (S_max - 1.1)/(S_max + 1.1) on this grid
        assert 0.9 <= rep["max_min_slack"] <= 0.94
        assert len(rep["witness"]) == 36

    def test_infeasible_exit_2(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "probs": [0.5, 0.5],
            "observables": {"h": [0.0, 1.0]},
            "constraints": [{"observable": "h", "kind": "ge",
                             "bound": 2.0}],
        }))
        res = runner.invoke(main, ["feasibility", "--scenario", str(path)])
        assert res.exit_code == 2
        assert json.loads(res.stdout)["feasibility"]["feasible"] is False


class TestGenScenarioCommand:
    def test_roundtrip_through_solve(self, runner, tmp_path):
        path = tmp_path / "generated.json"
        res = runner.invoke(main, ["gen-scenario", "--constraint",
                                   "S_T:ge:1.1", "--out", str(path)])
        assert res.exit_code == 0
        doc = json.loads(path.read_text())
        assert doc["generator"]["type"] == "lognormal"
        assert doc["constraints"] == [{"observable": "S_T", "kind": "ge",
                                       "bound": 1.1}]
        res = runner.invoke(main, ["solve", "--scenario", str(path)])
        assert res.exit_code == 0
        assert json.loads(res.stdout)["solution"]["u"] == pytest.approx(
            U_STAR, rel=1e-3)

    def test_bad_constraint_specs(self, runner):
        for spec in ("S_T:gt:1.1", "X:ge:1.1", "S_T:ge:abc", "S_T:ge"):
            res = runner.invoke(main, ["gen-scenario", "--constraint",
                                       spec])
            assert res.exit_code == 1, spec


class TestJsonSerialization:
    def test_nan_refused(self):
        with pytest.raises(ValidationError, match="NaN"):
            _jsonable(float("nan"))

    def test_infinities_become_strings(self):
        assert _jsonable(math.inf) == "inf"
        assert _jsonable(-math.inf) == "-inf"

    def test_numpy_scalars_and_arrays(self):
        out = _jsonable({"a": np.float64(1.5), "b": np.int32(3),
                         "c": np.bool_(True), "d": np.arange(3.0),
                         "e": (1, 2)})
        assert out == {"a": 1.5, "b": 3, "c": True, "d": [0.0, 1.0, 2.0],
                       "e": [1, 2]}
        assert isinstance(out["a"], float) and isinstance(out["b"], int)
        assert isinstance(out["c"], bool)

    def test_dict_keys_coerced(self):
        assert _jsonable({1: "x"}) == {"1": "x"}


class TestTopLevel:
    def test_version_flag(self, runner):
        res = runner.invoke(main, ["--version"])
        assert res.exit_code == 0

    def test_help_lists_subcommands(self, runner):
        res = runner.invoke(main, ["-h"])
        assert res.exit_code == 0
        for name in ("solve", "verify-bs", "minimax", "norms", "vcurve",
                     "feasibility", "gen-scenario"):
            assert name in res.stdout
