import json

import numpy as np
import pytest

from app.cli import load_config, main
from app.exceptions import ConfigError, DispatchError, NumericalFailureError
from app.models import Method, RunConfig
from app.services import runner
from app.services.recipes import RECIPES, get_recipe
from app.services.runner import check_dispatch, expand_points, run
from tests.conftest import ising, xxz

LAMBDAS = [0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 1.75]


def _write(path, data) -> str:
    path.write_text(json.dumps(data))
    return str(path)


def _sweep_config(**extra) -> RunConfig:
    data = {"model": {"N": 8, "lambda": 0.5, "boundary": "periodic"}, "coupling": {"epsilon": 0.25},
            "time": {"t_max": 5.0, "steps": 51}, "sweep": {"param": "lambda", "values": LAMBDAS}}
    data.update(extra)
    return RunConfig.model_validate(data)


class TestDispatch:
    def test_interacting_chain_points_to_ed(self):
        with pytest.raises(DispatchError, match="method=ed"):
            check_dispatch(Method.DETERMINANT, xxz(6, 0.5))

    def test_central_spin_needs_even_ring(self):
        with pytest.raises(DispatchError, match="method=determinant"):
            check_dispatch(Method.CENTRAL_SPIN, ising(8, 0.5))

    def test_ed_size_cap(self):
        with pytest.raises(DispatchError):
            check_dispatch(Method.ED, ising(13, 0.5))

    def test_supported_pairs_pass(self):
        check_dispatch(Method.DETERMINANT, ising(300, 0.5))
        check_dispatch(Method.ED, xxz(10, 0.5))


class TestExpandPoints:
    def test_single_point_without_sweep(self):
        config = _sweep_config(sweep=None)
        points = expand_points(config)
        assert len(points) == 1
        assert points[0].label == "point"

    def test_lambda_values_applied(self):
        points = expand_points(_sweep_config())
        assert [p.chain.lambda_ for p in points] == LAMBDAS
        assert points[2].label == "002_lambda_0.75"

    def test_link_count_beyond_chain(self):
        config = _sweep_config(sweep={"param": "m", "values": [1, 9]})
        with pytest.raises(ConfigError) as exc:
            expand_points(config)
        assert exc.value.pointer == "/sweep/values/1"


class TestRun:
    def test_sweep_writes_one_file_per_point(self, tmp_path):
        manifest = run(_sweep_config(), "sweep", out=str(tmp_path), threads=2)
        assert len(list(tmp_path.glob("echo_*.csv"))) == 9
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["determinant_exponent"] == 1
        assert doc["schema_version"] == "1"
        assert len(doc["points"]) == 9
        assert manifest.command == "sweep"
        header = (tmp_path / "echo_000_lambda_0.25.csv").read_text().splitlines()[0]
        assert header == "t,L"

    def test_thread_count_does_not_change_output(self, tmp_path):
        config = _sweep_config(sweep=None)
        run(config, "echo", out=str(tmp_path / "one"), threads=1)
        run(config, "echo", out=str(tmp_path / "three"), threads=3)
        assert (tmp_path / "one" / "echo_point.csv").read_bytes() == \
            (tmp_path / "three" / "echo_point.csv").read_bytes()

    def test_sweep_without_sweep_block(self, tmp_path):
        with pytest.raises(ConfigError):
            run(_sweep_config(sweep=None), "sweep", out=str(tmp_path))

    def test_unknown_command(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown command"):
            run(_sweep_config(), "plot", out=str(tmp_path))

    def test_dispatch_checked_before_work(self, tmp_path):
        config = _sweep_config(model={"N": 6, "gamma": 0.0, "delta": 0.5}, sweep=None)
        with pytest.raises(DispatchError):
            run(config, "echo", out=str(tmp_path))
        assert not (tmp_path / "manifest.json").exists()

    def test_alpha_scan_table(self, tmp_path):
        config = _sweep_config(time={"t_max": 1.0, "steps": 201},
                               sweep={"param": "lambda", "values": [0.5, 1.5]})
        manifest = run(config, "alpha-scan", out=str(tmp_path))
        lines = (tmp_path / "alpha_scan.csv").read_text().splitlines()
        assert lines[0] == "param,alpha,alpha_fit"
        assert len(lines) == 3
        assert all(r["alpha"] > 0 for r in manifest.points)

    def test_log_divergence_excludes_rounded_region(self, tmp_path):
        grid = [round(0.9 + 0.01 * i, 6) for i in range(21) if i != 10]
        sweep = {"param": "lambda", "values": grid}
        narrow = run(_sweep_config(time={"t_max": 1.0, "steps": 201}, sweep=sweep, analysis={"exclude": 0.0}),
                     "alpha-scan", out=str(tmp_path / "narrow"))
        assert narrow.summary["log_divergence"]["points"] == 16
        # the default cut of 4/N covers the whole grid for N=8
        wide = run(_sweep_config(time={"t_max": 1.0, "steps": 201}, sweep=sweep),
                   "alpha-scan", out=str(tmp_path / "wide"))
        assert "log_divergence" not in wide.summary

    def test_numerical_failure_is_wrapped(self, tmp_path, monkeypatch):
        def singular(*args):
            raise np.linalg.LinAlgError("singular matrix")

        monkeypatch.setitem(runner.HANDLERS, "echo", singular)
        with pytest.raises(NumericalFailureError):
            run(_sweep_config(sweep=None), "echo", out=str(tmp_path))

    def test_compile_and_verify(self, tmp_path):
        config = RunConfig.model_validate({"model": {"N": 3, "lambda": 0.5}, "coupling": {"epsilon": 0.25},
                                           "compiler": {"t": 1.0, "n_steps": 4, "n_list": [10, 20]}})
        run(config, "compile", out=str(tmp_path))
        assert (tmp_path / "schedule.txt").read_text().startswith("# schedule")
        assert json.loads((tmp_path / "schedule.json").read_text())["n_steps"] == 4
        manifest = run(config, "verify", out=str(tmp_path / "verify"))
        assert len(manifest.summary["distances"]) == 2


class TestCli:
    def test_invalid_config_reports_pointer(self, tmp_path, capsys):
        path = _write(tmp_path / "bad.json", {"model": {"N": 1}})
        assert main(["echo", "--config", path, "--out", str(tmp_path / "out")]) == 2
        assert "/model/N" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path):
        assert main(["echo", "--config", str(tmp_path / "missing.json")]) == 2

    def test_load_config_overrides(self, tmp_path):
        path = _write(tmp_path / "run.json", {"model": {"N": 6}})
        assert load_config(path, {"method": "ed", "threads": None}).method == Method.ED

    def test_method_override(self, tmp_path):
        path = _write(tmp_path / "run.json", {"model": {"N": 6, "gamma": 0.0, "delta": 0.5},
                                              "coupling": {"epsilon": 0.1}, "time": {"t_max": 1.0, "steps": 11}})
        out = tmp_path / "out"
        assert main(["echo", "--config", path, "--out", str(out)]) == 2
        assert main(["echo", "--config", path, "--out", str(out), "--method", "ed"]) == 0
        doc = json.loads((out / "manifest.json").read_text())
        assert doc["method"] == "ed"
        assert (out / "echo_point.csv").exists()

    def test_sweep_command_needs_sweep(self, tmp_path):
        path = _write(tmp_path / "run.json", {"model": {"N": 6}})
        assert main(["sweep", "--config", path, "--out", str(tmp_path / "out")]) == 2

    def test_compile_command(self, tmp_path):
        path = _write(tmp_path / "run.json", {"model": {"N": 3, "lambda": 0.5}, "coupling": {"epsilon": 0.25}})
        assert main(["compile", "--config", path, "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "schedule.txt").exists()

    def test_numerical_failure_exit_code(self, tmp_path, monkeypatch):
        def singular(*args):
            raise np.linalg.LinAlgError("singular matrix")

        monkeypatch.setitem(runner.HANDLERS, "echo", singular)
        path = _write(tmp_path / "run.json", {"model": {"N": 6}})
        assert main(["echo", "--config", path, "--out", str(tmp_path / "out")]) == 3

    def test_recipe_list(self, capsys):
        assert main(["recipe", "--list"]) == 0
        assert "fig2" in capsys.readouterr().out

    def test_unknown_recipe(self, tmp_path):
        assert main(["recipe", "nope", "--out", str(tmp_path)]) == 2


class TestRecipes:
    def test_critical_scaling_lengths(self):
        recipe = get_recipe("fig7")
        assert recipe.command == "critical-scaling"
        assert recipe.configs[0].sweep.values == [50, 100, 200, 300, 400]
        # the largest chain keeps its whole pre-revival window
        assert recipe.configs[0].time.t_max >= 0.8 * 400 / 2

    def test_alpha_scan_couplings(self):
        recipe = get_recipe("fig3")
        assert {c.coupling.epsilon for c in recipe.configs} == {0.05, 0.1, 0.25}
        grid = recipe.configs[0].sweep.values
        assert 1.0 not in grid
        assert min(grid) == pytest.approx(0.9) and max(grid) == pytest.approx(1.1)

    def test_all_recipes_validate_against_dispatch(self):
        for recipe in RECIPES.values():
            for config in recipe.configs:
                if recipe.command in ("compile", "verify", "concurrence-scan"):
                    continue
                for point in expand_points(config):
                    check_dispatch(config.method, point.chain)
