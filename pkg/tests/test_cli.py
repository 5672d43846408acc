import shlex

import pytest

from impsched.cli import main, parse_schedule
from impsched.taskgraph import parse_task_graph, validate_graph


def run(cmd: str) -> int:
    return main(shlex.split(cmd))


@pytest.fixture()
def graphs_dir(tmp_path):
    out = tmp_path / "graphs"
    rc = run(f"generate --n 10 --count 2 --regime man_low --seed 3 --out {out}")
    assert rc == 0
    return out


@pytest.fixture()
def graph_file(graphs_dir):
    return graphs_dir / "graph_man_low_s3.tg"


class TestGenerate:
    def test_files_created_and_valid(self, graphs_dir):
        files = sorted(graphs_dir.glob("*.tg"))
        assert len(files) == 2
        for f in files:
            g = parse_task_graph(f.read_text())
            assert validate_graph(g).ok
            assert len(g.tasks) == 10

    def test_deterministic(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert run(f"generate --n 8 --count 1 --seed 11 --out {a}") == 0
        assert run(f"generate --n 8 --count 1 --seed 11 --out {b}") == 0
        (fa,) = a.glob("*.tg")
        (fb,) = b.glob("*.tg")
        assert fa.read_text() == fb.read_text()

    def test_regime_required_valid(self):
        assert run("generate --regime bogus") == 1


class TestLabel:
    def test_label_output(self, graph_file, capsys):
        assert run(f"label {graph_file}") == 0
        out = capsys.readouterr().out
        assert out.startswith("label ")
        assert "precise=" in out and "extended=" in out


class TestScheduleVerify:
    def test_round_trip(self, graph_file, tmp_path, capsys):
        sched_file = tmp_path / "sched.txt"
        rc = run(f"schedule {graph_file} --eps-ratio 0.8 --out {sched_file}")
        assert rc == 0
        assert sched_file.exists()
        rc = run(f"verify {graph_file} {sched_file}")
        out = capsys.readouterr().out
        assert rc == 0, out
        assert "PASS" in out.splitlines()
        assert any(line.startswith("idle_static_energy_J ") for line in out.splitlines())

    def test_verify_catches_tampering(self, graph_file, tmp_path, capsys):
        sched_file = tmp_path / "sched.txt"
        assert run(f"schedule {graph_file} --eps-ratio 0.9 --out {sched_file}") == 0
        text = sched_file.read_text()
        lines = text.splitlines()
        for i, line in enumerate(lines):
            if line.startswith("qos "):
                lines[i] = "qos 0.123"
                break
        sched_file.write_text("\n".join(lines) + "\n")
        rc = run(f"verify {graph_file} {sched_file}")
        out = capsys.readouterr().out
        assert rc == 3
        assert "FAIL" in out and "qos-accounting" in out

    def test_parse_schedule_round_trip(self, graph_file, tmp_path):
        sched_file = tmp_path / "sched.txt"
        assert run(f"schedule {graph_file} --eps-ratio 0.85 --out {sched_file}") == 0
        mode, eps, procs, lab, asg, sched = parse_schedule(sched_file.read_text())
        assert mode == "proposed"
        assert procs == 4
        assert lab is not None
        assert set(asg.proc_of) == set(sched.start)

    def test_infeasible_exit_code(self, graph_file):
        assert run(f"schedule {graph_file} --eps-max 1e-9") == 2

    def test_baseline_and_milp_commands(self, tmp_path, capsys):
        out = tmp_path / "g"
        assert run(f"generate --n 5 --count 1 --regime man_mixed --seed 7 --out {out}") == 0
        (gf,) = out.glob("*.tg")
        assert run(f"baseline {gf} --eps-ratio 0.9") == 0
        sched_file = tmp_path / "m.txt"
        rc = run(f"milp {gf} --eps-ratio 0.9 --procs 2 --time-limit 20 --out {sched_file}")
        assert rc == 0
        assert run(f"verify {gf} {sched_file}") == 0


class TestSweepCommand:
    def test_csv_written(self, graph_file, tmp_path):
        csv = tmp_path / "sweep.csv"
        rc = run(f"sweep {graph_file} --methods proposed,baseline --out {csv}")
        assert rc == 0
        lines = csv.read_text().strip().splitlines()
        assert lines[0].startswith("graph,method,eps_ratio")
        assert len(lines) > 10

    def test_unknown_method_usage_error(self, graph_file, tmp_path):
        assert run(f"sweep {graph_file} --methods wat") == 1


class TestHeftFlags:
    def test_no_insertion_and_lp_comm_accepted(self, graph_file, tmp_path):
        a = tmp_path / "a.txt"
        b = tmp_path / "b.txt"
        assert run(f"schedule {graph_file} --eps-ratio 0.9 --no-insertion --out {a}") == 0
        assert run(f"schedule {graph_file} --eps-ratio 0.9 --lp-comm --out {b}") == 0
        # both are full verified schedules
        assert run(f"verify {graph_file} {a}") == 0
        assert run(f"verify {graph_file} {b}") == 0


class TestEpsilonStar:
    def test_prints_value(self, graph_file, capsys):
        assert run(f"epsilon-star {graph_file}") == 0
        out = capsys.readouterr().out
        assert out.startswith("epsilon_star_J ")
        assert float(out.split()[1]) > 0


class TestFit:
    def test_reference_points(self, tmp_path, capsys):
        pts = tmp_path / "points.txt"
        pts.write_text(
            "1.01 430.9\n1.26 556.8\n1.53 710.7\n1.81 896.5\n2.1 1118.2\n"
        )
        assert run(f"fit {pts} --delta 276") == 0
        out = capsys.readouterr().out
        vals = dict(line.split() for line in out.strip().splitlines())
        assert abs(float(vals["alpha"]) - 23.8729) / 23.8729 < 0.02
        assert abs(float(vals["beta"]) - 3.2941) / 3.2941 < 0.02
        assert abs(float(vals["gamma"]) - 401.6654) / 401.6654 < 0.02


class TestConfig:
    def test_platform_config_respected(self, tmp_path, capsys):
        cfg = tmp_path / "conf.ini"
        cfg.write_text(
            "[platform]\nalpha = 23.8729\nbeta = 3.2941\ngamma = 401.6654\n"
            "delta = 276\nfreqs_ghz = 1.01, 2.1\nprocs = 2\n"
            "[generator]\nn_tasks = 6\nmandatory_regime = man_med\n"
        )
        out = tmp_path / "g"
        assert run(f"generate --config {cfg} --count 1 --seed 1 --out {out}") == 0
        (gf,) = out.glob("*.tg")
        g = parse_task_graph(gf.read_text())
        assert len(g.tasks) == 6
        for t in g.tasks.values():
            assert 0.4 <= t.mandatory / t.initial_workload <= 0.6

    def test_missing_config_is_usage_error(self, graph_file):
        assert run(f"label {graph_file} --config /nonexistent.ini") == 1


class TestUsage:
    def test_no_command(self):
        assert run("") == 1

    def test_bad_graph_path(self):
        assert run("label /does/not/exist.tg") == 1
