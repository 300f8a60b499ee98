import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hydrocal import datasets, io
from hydrocal.calibration import CalibrationOptions, CalibrationProblem, multistart_calibrate
from hydrocal.cli import EXIT_DOMAIN, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main
from hydrocal.steady_state import generate_measurement_sets

NET = str(datasets.path("three_cycle.json"))
LOADS = str(datasets.path("three_cycle_loads.json"))
TABLE = str(datasets.path("three_cycle_reference_heads.json"))


def _doc(path):
    return json.loads(open(path).read())


@pytest.fixture(scope="module")
def simulated_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "meas.json"
    assert main(["simulate", NET, LOADS, "-o", str(out)]) == EXIT_OK
    return out


# -- file formats -------------------------------------------------------------------------

def test_network_round_trip(tmp_path):
    net, sensors = io.read_network(NET)
    path = tmp_path / "net.json"
    io.write_json(path, io.network_to_dict(net, sensors))
    net2, sensors2 = io.read_network(path)
    assert net2 == net and sensors2 == sensors


def test_loads_round_trip():
    net, _ = datasets.three_cycle()
    loads = datasets.three_cycle_loads()
    back = io.loads_from_dict(io.loads_to_dict(loads, net), net)
    for a, b in zip(loads, back):
        np.testing.assert_array_equal(a.demands, b.demands)
        np.testing.assert_array_equal(a.source_heads, b.source_heads)


def test_measurement_round_trip_and_piezometric_conversion():
    net, sensors = datasets.three_cycle()
    sets = generate_measurement_sets(net, datasets.three_cycle_loads(), sensors)
    doc = io.measurements_to_dict(sets, net, sensors)
    for a, b in zip(sets, io.measurements_from_dict(doc, net, sensors)):
        np.testing.assert_array_equal(a.sensed_heads, b.sensed_heads)
        np.testing.assert_array_equal(a.demands, b.demands)
    # flag and header give the same conversion: subtract sensor elevations (10, 5, 0)
    table = io.read_measurements(TABLE, net, sensors)
    np.testing.assert_allclose(table[0].sensed_heads, [80.9743, 85.8720, 90.8339])
    doc = _doc(TABLE)
    del doc["head_convention"]
    flagged = io.measurements_from_dict(doc, net, sensors, piezometric=True)
    np.testing.assert_array_equal(flagged[0].sensed_heads, table[0].sensed_heads)


def test_result_vector_round_trip(tmp_path):
    net, sensors = datasets.three_cycle()
    sets = generate_measurement_sets(net, datasets.three_cycle_loads(), sensors)
    problem = CalibrationProblem(net, sensors, sets)
    result = multistart_calibrate(problem, CalibrationOptions(max_outer=2))
    path = tmp_path / "res.json"
    io.write_json(path, io.result_to_dict(result, problem))
    np.testing.assert_allclose(io.read_result_vector(path, problem), result.x, rtol=1e-15)


@pytest.mark.parametrize("doc, fragment", [
    ({"nodes": []}, "missing field 'pipes'"),
    ({"nodes": [{"id": "1", "type": "pump"}], "pipes": []}, "unknown type"),
    ({"nodes": [{"id": "R", "type": "source"}],
      "pipes": [{"id": "1", "from": "R", "to": "1", "length": "ten", "diameter": 0.04}]}, "length"),
])
def test_network_format_errors(doc, fragment):
    with pytest.raises(io.FormatError, match=fragment):
        io.network_from_dict(doc)


def test_measurement_format_errors():
    net, sensors = datasets.three_cycle()
    good = _doc(TABLE)
    bad = json.loads(json.dumps(good))
    bad["sets"][0]["sensed_heads"]["9"] = 1.0
    with pytest.raises(io.FormatError, match="unknown node ids 9"):
        io.measurements_from_dict(bad, net, sensors)
    bad = json.loads(json.dumps(good))
    del bad["sets"][1]["sensed_heads"]["3"]
    with pytest.raises(io.FormatError, match="set 2 sensed_heads: missing value for node 3"):
        io.measurements_from_dict(bad, net, sensors)
    bad = json.loads(json.dumps(good))
    bad["sets"][0]["demands"] = [1.0, 2.0]
    with pytest.raises(io.FormatError, match="expected 5 values, got 2"):
        io.measurements_from_dict(bad, net, sensors)


# -- validate -----------------------------------------------------------------------------

def test_validate_ok_and_self_loop(tmp_path, capsys):
    assert main(["validate", NET]) == EXIT_OK
    doc = _doc(NET)
    doc["pipes"][3]["to"] = doc["pipes"][3]["from"]
    bad = tmp_path / "loop.json"
    bad.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["validate", str(bad)]) == EXIT_DOMAIN
    assert "pipe 4: self-loop" in capsys.readouterr().err


def test_malformed_json_is_a_usage_error(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text('{"nodes": [\n  {"id": 1,}\n]}')
    assert main(["validate", str(bad)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "line 2" in err and "broken.json" in err


def test_missing_file_and_unknown_command(capsys):
    assert main(["validate", "/nonexistent/net.json"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


# -- simulate -----------------------------------------------------------------------------

def test_simulate_reproduces_published_heads_and_is_deterministic(tmp_path, capsys, simulated_file):
    net, sensors = io.read_network(NET)
    sim = io.read_measurements(simulated_file, net, sensors)
    table = io.read_measurements(TABLE, net, sensors)
    for a, b in zip(sim, table):
        assert np.max(np.abs(a.sensed_heads - b.sensed_heads)) <= 0.02
    again = tmp_path / "again.json"
    assert main(["simulate", NET, LOADS, "-o", str(again)]) == EXIT_OK
    assert again.read_bytes() == simulated_file.read_bytes()
    out = capsys.readouterr().out
    assert out.count("Re min") == 3


def test_simulate_noise_is_seeded(tmp_path):
    paths = [tmp_path / f"{n}.json" for n in "abc"]
    for p, seed in zip(paths, (1, 1, 2)):
        assert main(["simulate", NET, LOADS, "-o", str(p), "--noise", "0.01", "--seed", str(seed)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes() != paths[2].read_bytes()
    assert main(["simulate", NET, LOADS, "-o", str(paths[0]), "--noise", "-1"]) == EXIT_USAGE


def test_simulate_rejects_wrong_demand_length(tmp_path, capsys):
    doc = _doc(LOADS)
    doc["loads"][1]["demands"] = [0.001, 0.002]
    bad = tmp_path / "loads.json"
    bad.write_text(json.dumps(doc))
    assert main(["simulate", NET, str(bad), "-o", str(tmp_path / "o.json")]) == EXIT_USAGE
    assert "load 2 demands: expected 5 values, got 2" in capsys.readouterr().err


def test_simulate_warns_on_slow_flow(tmp_path, capsys):
    doc = _doc(LOADS)
    doc["loads"] = [{"demands": {"2": 1e-5}, "source_heads": {"R": 100.0}}]
    slow = tmp_path / "slow.json"
    slow.write_text(json.dumps(doc))
    assert main(["simulate", NET, str(slow), "-o", str(tmp_path / "o.json")]) == EXIT_OK
    assert "< 4000" in capsys.readouterr().err


# -- calibrate ----------------------------------------------------------------------------

def test_calibrate_on_simulated_data(tmp_path, capsys, simulated_file):
    out = tmp_path / "res.json"
    assert main(["calibrate", NET, str(simulated_file), "-o", str(out)]) == EXIT_OK
    res = _doc(out)
    np.testing.assert_allclose(res["roughness_mm"], [2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25],
                               rtol=1e-2)
    assert res["merit"] <= 1e-7 and res["feasible"]
    rows = list(csv.reader(open(tmp_path / "res.trace.csv")))
    n_launch = len(res["trace"])
    assert rows[0] == ["quantity", "stage", *map(str, range(1, n_launch + 1))]
    # 14 unknowns for x0 and x, plus the merit row
    assert len(rows) == 1 + 2 * 14 + 1
    assert rows[1][:2] == ["eps_1_mm", "x0"] and rows[-1][0] == "v_e5"


def test_calibrate_needs_enough_sets(tmp_path, capsys):
    doc = _doc(TABLE)
    doc["sets"] = doc["sets"][:2]
    short = tmp_path / "short.json"
    short.write_text(json.dumps(doc))
    assert main(["calibrate", NET, str(short), "-o", str(tmp_path / "r.json")]) == EXIT_DOMAIN
    assert "= 3 sets" in capsys.readouterr().err


def test_calibrate_rejects_all_nodes_sensed(tmp_path, capsys, simulated_file):
    code = main(["calibrate", NET, str(simulated_file), "-o", str(tmp_path / "r.json"),
                 "--sensors", "1,2,3,4,5"])
    assert code == EXIT_USAGE
    assert "unmeasured" in capsys.readouterr().err


def test_calibrate_reports_infeasible_result(tmp_path, capsys):
    # node 2 draws the largest demand and its neighbours 1 and 3 are both sensed, so its
    # true head lies below the neighbour range and no converged launch passes the check
    net = {"nodes": [{"id": "1", "elevation": 0.0}, {"id": "2", "elevation": 0.0},
                     {"id": "3", "elevation": 0.0}, {"id": "R", "type": "source"}],
           "pipes": [{"id": "1", "from": "R", "to": "1", "length": 10, "diameter": 0.04, "roughness": 1e-3},
                     {"id": "2", "from": "1", "to": "2", "length": 10, "diameter": 0.04, "roughness": 5e-4},
                     {"id": "3", "from": "1", "to": "3", "length": 10, "diameter": 0.04, "roughness": 1e-3},
                     {"id": "4", "from": "2", "to": "3", "length": 30, "diameter": 0.04, "roughness": 2e-3}],
           "sensors": ["1", "3"]}
    net_path = tmp_path / "net.json"
    net_path.write_text(json.dumps(net))
    loads = {"loads": [{"demands": {"2": 2e-3 + 4e-4 * i, "3": 1e-3 + 3e-4 * i},
                        "source_heads": {"R": 60.0}} for i in range(3)]}
    loads_path = tmp_path / "loads.json"
    loads_path.write_text(json.dumps(loads))
    meas = tmp_path / "meas.json"
    assert main(["simulate", str(net_path), str(loads_path), "-o", str(meas)]) == EXIT_OK
    code = main(["calibrate", str(net_path), str(meas), "-o", str(tmp_path / "r.json")])
    assert code == EXIT_INFEASIBLE, capsys.readouterr()
    assert "outside the physical range" in capsys.readouterr().err
    assert _doc(tmp_path / "r.json")["feasible"] is False


# -- scan ---------------------------------------------------------------------------------

def test_scan_writes_grid(tmp_path, capsys, simulated_file):
    out = tmp_path / "scan.csv"
    assert main(["scan", NET, str(simulated_file), "-o", str(out), "--axis-a", "epsrel:7=0:0.05",
                 "--axis-b", "h:5@3=77:77.6", "--grid", "11x7"]) == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["epsrel_7", "h_5@3", "v_L1", "v_L2", "v_Linf"]
    assert len(rows) == 1 + 11 * 7
    vals = np.array(rows[1:], dtype=float)
    assert np.all(vals[:, 2] >= vals[:, 3]) and np.all(vals[:, 3] >= vals[:, 4])
    assert "L1 minimum" in capsys.readouterr().out


def test_scan_single_point(tmp_path, simulated_file):
    out = tmp_path / "one.csv"
    assert main(["scan", NET, str(simulated_file), "-o", str(out), "--axis-a", "eps:3=0.0015:0.0015",
                 "--grid", "1"]) == EXIT_OK
    rows = list(csv.reader(open(out)))
    assert len(rows) == 2 and rows[0][1] == "b"
    assert float(rows[1][2]) < 1e-9


def test_scan_from_result_base(tmp_path, simulated_file):
    res = tmp_path / "res.json"
    assert main(["calibrate", NET, str(simulated_file), "-o", str(res), "--max-outer", "2"]) == 0
    out = tmp_path / "scan.csv"
    assert main(["scan", NET, str(simulated_file), "-o", str(out), "--axis-a", "eps:1=0.001:0.003",
                 "--grid", "5", "--base", str(res)]) == EXIT_OK


@pytest.mark.parametrize("axis", ["eps:99=0:1", "h:2@1=0:1", "nonsense", "h:5@7=0:1"])
def test_scan_bad_axis_is_usage_error(tmp_path, simulated_file, axis, capsys):
    code = main(["scan", NET, str(simulated_file), "-o", str(tmp_path / "s.csv"), "--axis-a", axis])
    assert code == EXIT_USAGE
    assert "axis" in capsys.readouterr().err


def test_scan_bad_grid_is_usage_error(tmp_path, simulated_file):
    code = main(["scan", NET, str(simulated_file), "-o", str(tmp_path / "s.csv"),
                 "--axis-a", "eps:1=0:0.001", "--grid", "0x3"])
    assert code == EXIT_USAGE


def test_log_level_from_environment(tmp_path):
    env = dict(os.environ, HYDROCAL_LOG="INFO")
    proc = subprocess.run([sys.executable, "-m", "hydrocal.cli", "simulate", NET, LOADS,
                           "-o", str(tmp_path / "m.json")], env=env, capture_output=True, text=True)
    assert proc.returncode == 0
    assert "INFO hydrocal: wrote 3 measurement sets" in proc.stderr
