"""Scenario loading, the co-simulation loop, exports, and the CLI."""

import numpy as np
import pytest
import yaml

from sotbt.cli import main as cli_main
from sotbt.errors import ParseError, ScenarioError
from sotbt.scenario import (Outcome, bundled_scenario_names, export,
                            load_bundled_scenario, load_scenario, run,
                            run_batch, run_concurrent, trace_csv)

MINIMAL = """
name: mini
model: seven_dof
initial_q: [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785]
world:
  planes:
    table: {normal: [0.0, 0.0, 1.0], offset: 0.05, margin: 0.02}
  points:
    goal: [0.35, 0.05, 0.45]
tasks:
  avoid_table: {kind: plane_avoid, plane: table, priority: 1, gain: 2.0}
  go:
    kind: point_reach
    goal: goal
    priority: 2
    gain: 3.0
    blocking: {error_threshold: 1.0e-3, time_threshold: 10.0}
tree:
  type: sot_parallel
  threshold: 2
  children:
    - {type: action, task: avoid_table}
    - {type: action, task: go}
run: {control_dt: 0.002, ticks_ratio: 10, max_time: 10.0, seed: 0}
"""


@pytest.fixture
def mini(tmp_path):
    path = tmp_path / "mini.yaml"
    path.write_text(MINIMAL)
    return load_scenario(path)


def _write_variant(tmp_path, mutate):
    doc = yaml.safe_load(MINIMAL)
    mutate(doc)
    path = tmp_path / "variant.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


class TestLoading:
    def test_bundled_names(self):
        names = bundled_scenario_names()
        assert "fig4_reach" in names and "transport" in names

    def test_unknown_top_level_key(self, tmp_path):
        path = _write_variant(tmp_path, lambda d: d.update(surprise=1))
        with pytest.raises(ScenarioError):
            load_scenario(path)

    def test_unknown_task_key(self, tmp_path):
        path = _write_variant(
            tmp_path, lambda d: d["tasks"]["go"].update(extra=2))
        with pytest.raises(ScenarioError):
            load_scenario(path)

    def test_wrong_dof_initial_q(self, tmp_path):
        path = _write_variant(
            tmp_path, lambda d: d.update(initial_q=[0.0, 0.0]))
        with pytest.raises(ScenarioError):
            load_scenario(path)

    def test_nonunit_plane_normal(self, tmp_path):
        def mutate(d):
            d["world"]["planes"]["table"]["normal"] = [0.0, 0.0, 2.0]

        with pytest.raises(ScenarioError):
            load_scenario(_write_variant(tmp_path, mutate))

    def test_unknown_task_reference_in_tree(self, tmp_path):
        def mutate(d):
            d["tree"]["children"][0]["task"] = "nope"

        with pytest.raises(ParseError):
            load_scenario(_write_variant(tmp_path, mutate))

    def test_disturbance_needs_one_trigger(self, tmp_path):
        def mutate(d):
            d["disturbances"] = [{"action": "set_flag", "key": "k",
                                  "value": True}]

        with pytest.raises(ScenarioError):
            load_scenario(_write_variant(tmp_path, mutate))


class TestRun:
    def test_minimal_succeeds(self, mini):
        result = run(mini)
        assert result.outcome is Outcome.ROOT_SUCCESS
        assert result.summary["min_plane_clearance"] >= -1e-6

    def test_tick_every_r_control_rows(self, mini):
        result = run(mini)
        control_ts = [row.t for row in result.control_rows]
        for tick in result.tick_rows:
            assert tick.t in control_ts
        assert len(result.control_rows) == 10 * len(result.tick_rows)

    def test_trace_byte_identical(self, mini):
        a = trace_csv(run(mini, seed=5), mini)
        b = trace_csv(run(mini, seed=5), mini)
        assert a == b

    def test_rates_override(self, mini):
        result = run(mini, rates=(0.004, 5))
        assert result.outcome is Outcome.ROOT_SUCCESS
        assert len(result.control_rows) == 5 * len(result.tick_rows)

    def test_concurrent_mode_succeeds(self, mini):
        result = run_concurrent(mini)
        assert result.outcome is Outcome.ROOT_SUCCESS
        assert result.summary["min_plane_clearance"] >= -1e-6

    def test_batch_report_shape(self, mini):
        report = run_batch(mini, trials=4, seed=1)
        table = report.table()
        assert table.splitlines()[0].startswith("Position")
        assert "Total" in table
        assert report.all_succeeded

    def test_export_files(self, mini, tmp_path):
        result = run(mini)
        written = export(result, mini, tmp_path,
                         formats=("csv", "summary", "plotdata"))
        names = {p.name for p in written}
        assert names >= {"trace.csv", "summary.txt", "plotdata.csv"}
        header = (tmp_path / "trace.csv").read_text().splitlines()[0]
        cols = header.split(",")
        assert cols[0] == "t"
        assert "active_tasks" in cols and "revision" in cols

    def test_timeout_outcome(self, tmp_path):
        def mutate(d):
            d["run"]["max_time"] = 0.05

        sc = load_scenario(_write_variant(tmp_path, mutate))
        assert run(sc).outcome is Outcome.TIMEOUT


class TestCli:
    def test_run_success_exit_zero(self, capsys):
        assert cli_main(["run", "fig4_reach"]) == 0
        out = capsys.readouterr().out
        assert "RootSuccess" in out
        assert "mean control step wall time" in out

    def test_run_failure_exit_one(self):
        assert cli_main(["run", "unreachable"]) == 1

    def test_missing_file_exit_two(self, capsys):
        assert cli_main(["validate", "/no/such/file.yaml"]) == 2

    def test_validate_ok(self, capsys):
        assert cli_main(["validate", "transport"]) == 0
        assert "OK" in capsys.readouterr().out

    def test_list_scenarios(self, capsys):
        assert cli_main(["list-scenarios"]) == 0
        out = capsys.readouterr().out
        assert "fig4_reach" in out

    def test_run_with_export(self, tmp_path, capsys):
        code = cli_main(["run", "local_disturbance", "--seed", "3",
                         "--out", str(tmp_path), "--export", "csv",
                         "--export", "plotdata"])
        assert code == 0
        assert (tmp_path / "trace.csv").exists()
        assert (tmp_path / "plotdata.csv").exists()

    def test_run_trials(self, tmp_path, capsys):
        code = cli_main(["run", "transport", "--trials", "5", "--seed", "2",
                         "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "Attempt 1" in out
        assert (tmp_path / "report.txt").exists()

    def test_bad_rates_exit_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli_main(["run", "fig4_reach", "--rates", "bogus"])
        assert exc.value.code == 2
