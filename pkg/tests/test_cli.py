import csv
import json

import pytest

from main import SEGMENT_COLUMNS, TREE_COLUMNS, build_parser, main

SMALL = {
    "name": "small",
    "road": {"length": 100, "n_lanes": 1},
    "ego": {"s": 0, "v": 10, "lane": 1},
    "goal_speed": 10,
    "grid": {"v_max": 15},
    "planner": {"max_expansions": 5000},
    "sim": {"t_max": 30},
}


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL), encoding="utf-8")
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_plan_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["plan", "--scenario", "empty_road", "--output", str(out)]) == 0
    rows = read_csv(out / "empty_road_dp_plan.csv")
    assert tuple(rows[0]) == SEGMENT_COLUMNS
    assert len(rows) > 1
    assert "horizon_reached" in capsys.readouterr().out


def test_plan_dumps_tree(tmp_path):
    assert main(["plan", "--scenario", "empty_road", "--heuristic", "mb", "--dump-tree", "--output", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "empty_road_mb_tree.csv")
    assert tuple(rows[0]) == TREE_COLUMNS
    assert rows[1][-1] == ""


def test_unknown_scenario_is_an_error(tmp_path):
    assert main(["plan", "--scenario", "no_such_road", "--output", str(tmp_path)]) == 1


def test_usage_errors_exit_with_2():
    with pytest.raises(SystemExit) as info:
        main(["plan", "--scenario", "empty_road", "--heuristic", "greedy"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args([])
    assert info.value.code == 2


def test_simulate_is_reproducible(small, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--scenario", str(small), "--output", str(first)]) == 0
    assert main(["simulate", "--scenario", str(small), "--output", str(second)]) == 0
    a = (first / "small_dp_seed0.json").read_bytes()
    assert a == (second / "small_dp_seed0.json").read_bytes()
    log = json.loads(a)
    assert log["outcome"] == "route_end"
    assert "planning_time_mean" not in log["metrics"]
    ticks = read_csv(first / "small_dp_seed0_ticks.csv")
    assert ticks[0] == ["t", "s", "l", "v", "a", "cum_cost"]


def test_simulate_with_timing_and_lane_keeping(small, tmp_path):
    assert main(["simulate", "--scenario", str(small), "--output", str(tmp_path), "--timing", "--lane-keeping",
                 "--seed", "4"]) == 0
    log = json.loads((tmp_path / "small_dp_seed4_lk.json").read_text(encoding="utf-8"))
    assert "planning_time_mean" in log["metrics"]
    assert log["seed"] == 4


def test_bench_table_and_csv(small, tmp_path, capsys):
    code = main(["bench", "--scenario", str(small), "--output", str(tmp_path), "--repeats", "2",
                 "--heuristic", "dp", "--heuristic", "mb"])
    assert code == 0
    printed = capsys.readouterr().out
    assert printed.startswith("host:")
    assert "±" in printed and "median nodes ratio mb/dp" in printed
    rows = read_csv(tmp_path / "small_bench.csv")
    assert [(r[0], r[1]) for r in rows[1:]] == [("dp", "0"), ("dp", "1"), ("mb", "0"), ("mb", "1")]


def test_bench_needs_a_repeat(small, tmp_path):
    assert main(["bench", "--scenario", str(small), "--output", str(tmp_path), "--repeats", "0"]) == 2


def test_heatmap_csv(tmp_path):
    assert main(["heatmap", "--scenario", "empty_road", "--output", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "empty_road_cost_to_go.csv")
    assert rows[0] == ["s", "v", "J"]
    assert len(rows) == 1 + 51 * 16
    assert ["500", "10", "0"] in rows
    assert ["500", "9", "inf"] in rows
