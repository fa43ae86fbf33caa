import csv
import json

import pytest

from conftest import two_bus_doc
from rppmarket.cli import EXIT_CONFIG, EXIT_NO_RESULT, EXIT_OK, fmt, main


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def two_bus_file(tmp_path):
    path = tmp_path / "two_bus.json"
    path.write_text(json.dumps(two_bus_doc()))
    return path


def test_fmt():
    assert fmt(float("nan")) == ""
    assert fmt([1.5, 2]) == "1.5;2"
    assert fmt(1 / 3) == "0.333333333333"


def test_dispatch_da_and_rt(two_bus_file, tmp_path):
    code = main(["dispatch", "--case", str(two_bus_file), "--commitments", "2", "--realizations", "3",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = _rows(tmp_path / "dispatch.csv")
    lmp = {(r["stage"], r["id"]): float(r["value"]) for r in rows if r["record"] == "lmp"}
    assert lmp[("DA", "0")] == pytest.approx(1.5) and lmp[("DA", "1")] == pytest.approx(5.6)
    assert lmp[("RT", "1")] == pytest.approx(3.36)


@pytest.mark.parametrize("argv", [
    ["dispatch", "--case", "/nonexistent.json"],
    ["dispatch", "--commitments", "1,2,3"],
    ["find-ne", "--patterns", "99+"],
    ["find-ne", "--scenarios", "0"],
    ["sweep", "--which", "x"],
    ["sweep", "--which", "b", "--k-grid", "3"],
])
def test_config_errors_exit_1(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_option_exits_1():
    with pytest.raises(SystemExit) as exc:
        main(["find-ne", "--bogus"])
    assert exc.value.code == EXIT_CONFIG


def test_bad_case_file_exits_1(tmp_path):
    doc = two_bus_doc()
    doc["lines"][0]["to"] = 7
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["dispatch", "--case", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_infeasible_dispatch_exits_2(tmp_path):
    doc = two_bus_doc(capacity=1.0)
    doc["da_generators"].pop(1)
    doc["rt_generators"] = [doc["rt_generators"][0]]
    path = tmp_path / "inf.json"
    path.write_text(json.dumps(doc))
    assert main(["dispatch", "--case", str(path), "--out", str(tmp_path)]) == EXIT_NO_RESULT


def test_empty_pattern_list_writes_header_only(tmp_path):
    assert main(["find-ne", "--patterns", "", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "find_ne.csv").read_text().count("\n") == 1


def test_no_ne_exits_2(tmp_path):
    # the bundled case's NE congests line 19, not line 0
    assert main(["find-ne", "--patterns", "0+", "--scenarios", "50", "--out", str(tmp_path)]) == EXIT_NO_RESULT


def test_find_ne_zero_std_probability_one(tmp_path):
    assert main(["find-ne", "--std-ratio", "0", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "find_ne.csv")
    assert rows and all(float(r["rt_consistency_prob"]) == 1.0 for r in rows)


def test_social_opt(two_bus_file, tmp_path):
    assert main(["social-opt", "--case", str(two_bus_file), "--scenarios", "30", "--out", str(tmp_path)]) == EXIT_OK
    (row,) = _rows(tmp_path / "social_opt.csv")
    assert float(row["expected_cost"]) > 0
    assert len(_rows(tmp_path / "social_opt_scenarios.csv")) == 30


def test_sweep_small_grid(tmp_path):
    code = main(["sweep", "--std-grid", "0,0.1", "--k-grid", "2,6", "--scenarios", "100", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert [r["std_ratio"] for r in _rows(tmp_path / "sweep_a.csv")] == ["0", "0.1"]
    assert [r["k"] for r in _rows(tmp_path / "sweep_b.csv")] == ["2", "6"]
    assert len(_rows(tmp_path / "sweep_c.csv")) == 2 * 14
