import csv
import io
import json

import numpy as np
import pytest

from consensus_dispatch.cli import SWEEP_HEADER, main
from consensus_dispatch.consensus import TRACE_HEADER, SolverConfig, run_dispatch
from consensus_dispatch.scenario import (
    ScenarioError,
    dump_scenario,
    generate_scenario,
    load_scenario,
    parse_scenario,
    write_scenario,
)

MINIMAL = {
    "version": 1,
    "generators": [{"id": "DG1", "alpha": 0.01, "beta": 5.0, "gamma": 0.0, "p_max": 200.0}],
    "consumers": [{"id": "L1", "sigma": 0.05, "omega": 10.0, "p_max": 150.0}],
    "graph": {"preset": "line"},
}


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def two_node_file(tmp_path):
    path = tmp_path / "two.json"
    write_scenario(MINIMAL, path)
    return path


@pytest.fixture
def sixteen_file(tmp_path):
    path = tmp_path / "sixteen.json"
    write_scenario(generate_scenario(0, 6, 10), path)
    return path


# scenario files


def test_minimal_file_parses(two_node_file):
    s, g, cfg = load_scenario(two_node_file)
    assert s.node_ids == ("DG1", "L1")
    assert g.edges == ((0, 1),)
    assert cfg == SolverConfig(topology="line")


def test_alpha_zero_names_field():
    doc = json.loads(json.dumps(MINIMAL))
    doc["generators"][0]["alpha"] = 0
    with pytest.raises(ScenarioError, match=r"generators\[0\] \(DG1\): alpha must be > 0"):
        parse_scenario(doc)


def test_unknown_edge_id_rejected():
    doc = dict(MINIMAL, graph={"edges": [["DG1", "L7"]]})
    with pytest.raises(ScenarioError, match=r"graph.edges\[0\]: unknown node id 'L7'"):
        parse_scenario(doc)


def test_unknown_keys_rejected_with_location():
    doc = json.loads(json.dumps(MINIMAL))
    doc["consumers"][0]["colour"] = "red"
    with pytest.raises(ScenarioError, match=r"consumers\[0\]: unknown key\(s\) 'colour'"):
        parse_scenario(doc)
    with pytest.raises(ScenarioError, match="solver: unknown"):
        parse_scenario(dict(MINIMAL, solver={"eps": 1}))
    with pytest.raises(ScenarioError, match="<root>"):
        parse_scenario(dict(MINIMAL, extra=1))


def test_empty_consumers_rejected():
    with pytest.raises(ScenarioError, match="consumers"):
        parse_scenario(dict(MINIMAL, consumers=[]))


def test_explicit_edges_and_solver_overrides():
    doc = dict(MINIMAL, graph={"edges": [["DG1", "L1", 2.0]]},
               solver={"epsilon": 0.01, "drop_prob": 0.1, "seed": 9, "max_iters": 10})
    s, g, cfg = parse_scenario(doc)
    assert g.weights == (2.0,)
    assert cfg.epsilon == 0.01 and cfg.max_iters == 10
    assert cfg.delivery.drop_probability == 0.1 and cfg.delivery.rng_seed == 9
    with pytest.raises(ScenarioError, match="solver.max_iters"):
        parse_scenario(dict(MINIMAL, solver={"max_iters": 2.5}))


def test_json_syntax_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "version": 1,\n  "generators": [,]\n}\n')
    with pytest.raises(ScenarioError, match=r"bad.json:3:"):
        load_scenario(path)


def test_generate_deterministic_and_labelled(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_scenario(generate_scenario(11, 6, 10), a)
    write_scenario(generate_scenario(11, 6, 10), b)
    assert a.read_bytes() == b.read_bytes()
    s, _, _ = load_scenario(a)
    assert s.node_ids == tuple(f"DG{i}" for i in range(1, 7)) + tuple(f"L{j}" for j in range(1, 11))
    assert generate_scenario(12) != generate_scenario(11)


def test_generate_round_trip():
    for seed in range(20):
        doc = generate_scenario(seed, 3, 4, topology="star")
        assert parse_scenario(json.loads(dump_scenario(doc))) == parse_scenario(doc)


def test_generate_rejects_bad_input():
    with pytest.raises(ValueError):
        generate_scenario(0, 0, 3)
    with pytest.raises(ValueError):
        generate_scenario(0, ranges={"alpha": (0.1, 0.01)})
    with pytest.raises(ValueError):
        generate_scenario(0, ranges={"zeta": (1, 2)})


def test_generated_parameters_in_range():
    doc = generate_scenario(5, 6, 10)
    for g in doc["generators"]:
        assert 0.005 <= g["alpha"] <= 0.05 and 80 <= g["p_max"] <= 200
    for c in doc["consumers"]:
        assert 6 <= c["omega"] <= 14 and 30 <= c["p_max"] <= 100


# commands


def test_run_two_node(two_node_file, tmp_path):
    summary = tmp_path / "summary.json"
    trace = tmp_path / "trace.csv"
    code, out, err = cli("run", "--scenario", two_node_file,
                         "--summary-out", summary, "--trace-out", trace)
    assert code == 0, err
    assert "Total Generation (kW) 41.7 | Total Load (kW) 41.7 | Lambda 5.83 | Iterations" in out
    data = json.loads(summary.read_text())
    gen = sum(n["power"] for n in data["nodes"] if n["kind"] == "generator")
    load = sum(n["power"] for n in data["nodes"] if n["kind"] == "consumer")
    assert data["total_generation"] == gen and data["total_load"] == load
    assert abs(gen - load) <= 2 * SolverConfig().tol_power
    rows = list(csv.reader(trace.open()))
    assert tuple(rows[0]) == TRACE_HEADER
    assert len(rows) == 1 + 2 * (data["iterations"] + 1)


def test_run_max_iters_exit_2(sixteen_file):
    code, out, err = cli("run", "--scenario", sixteen_file, "--max-iters", 1)
    assert code == 2
    assert "no consensus" in err


def test_run_divergence_exit_3(sixteen_file):
    code, _, err = cli("run", "--scenario", sixteen_file, "--epsilon", "1e7")
    assert code == 3
    assert "epsilon" in err


def test_run_check_and_event_log(sixteen_file, tmp_path):
    log = tmp_path / "events.csv"
    code, out, _ = cli("run", "--scenario", sixteen_file, "--check",
                       "--drop-prob", 0.1, "--seed", 4, "--event-log", log)
    assert code == 0
    assert "PASS" in out
    lines = log.read_text().splitlines()
    assert lines[0] == "round,event,topic,publisher,subscriber"
    assert any(",drop," in ln for ln in lines)


def test_run_bad_scenario_exit_1(tmp_path):
    path = tmp_path / "bad.json"
    write_scenario(dict(MINIMAL, consumers=[]), path)
    code, _, err = cli("run", "--scenario", path)
    assert code == 1 and "consumers" in err
    code, _, err = cli("run", "--scenario", tmp_path / "missing.json")
    assert code == 1


def test_oracle_two_node(two_node_file, tmp_path):
    summary = tmp_path / "oracle.json"
    code, out, _ = cli("oracle", "--scenario", two_node_file, "--summary-out", summary)
    assert code == 0
    assert "5.8333" in out
    assert "Iterations -" in out
    data = json.loads(summary.read_text())
    assert data["kkt_violations"] == []
    assert data["lambda"] == pytest.approx(5.8333, abs=1e-4)


def test_oracle_check(sixteen_file):
    code, out, _ = cli("oracle", "--scenario", sixteen_file, "--check")
    assert code == 0
    assert "check:" in out and "PASS" in out


def test_oracle_empty_consumers_exit_1(tmp_path):
    path = tmp_path / "empty.json"
    write_scenario(dict(MINIMAL, consumers=[]), path)
    code, out, err = cli("oracle", "--scenario", path)
    assert code == 1 and out == ""


def test_sweep_schema(two_node_file, tmp_path):
    out_path = tmp_path / "sweep.csv"
    code, _, _ = cli("sweep", "--scenario", two_node_file, "--epsilon", "0.01,0.05",
                     "--out", out_path)
    assert code == 0
    rows = list(csv.reader(out_path.open()))
    assert tuple(rows[0]) == SWEEP_HEADER
    assert len(rows) == 3
    for row in rows[1:]:
        assert row[1] in ("0", "1") and int(row[2]) >= 0 and float(row[3]) >= 0
        assert row[4] in ("converged", "max_iters", "diverged")
    assert [float(r[0]) for r in rows[1:]] == [0.01, 0.05]


def test_sweep_records_divergence(sixteen_file):
    code, out, _ = cli("sweep", "--scenario", sixteen_file, "--epsilon", "0.005,1e7")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[1][4] == "converged" and rows[2][4] == "diverged"


def test_sweep_drop_zero_matches_plain_run(sixteen_file):
    code, out, _ = cli("sweep", "--scenario", sixteen_file, "--drop-prob", "0,0.2")
    assert code == 0
    row = list(csv.reader(io.StringIO(out)))[1]
    s, g, cfg = load_scenario(sixteen_file)
    plain = run_dispatch(s, g, cfg)
    assert int(row[1]) == int(plain.converged)
    assert int(row[2]) == plain.iterations
    assert float(row[3]) == plain.lambda_spread


def test_sweep_parallel_matches_serial(two_node_file):
    _, serial, _ = cli("sweep", "--scenario", two_node_file, "--drop-prob", "0,0.3")
    _, parallel, _ = cli("sweep", "--scenario", two_node_file, "--drop-prob", "0,0.3",
                         "--jobs", 2)
    assert serial == parallel


def test_sweep_requires_list(two_node_file):
    with pytest.raises(SystemExit):
        cli("sweep", "--scenario", two_node_file)


def test_generate_command(tmp_path):
    path = tmp_path / "gen.json"
    code, out, _ = cli("generate", "--seed", 3, "--out", path, "--topology", "complete")
    assert code == 0 and "6 generators, 10 consumers" in out
    s, g, _ = load_scenario(path)
    assert s.n_gen == 6 and s.n_load == 10
    assert len(g.edges) == 16 * 15 // 2


def test_topology_override(sixteen_file):
    code, out, _ = cli("run", "--scenario", sixteen_file, "--topology", "complete")
    assert code == 0
    iters = int(out.split("Iterations ")[1].split()[0])
    assert iters <= 500


def test_module_entry_point(two_node_file):
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "consensus_dispatch", "oracle",
                           "--scenario", str(two_node_file)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "5.8333" in proc.stdout
    assert np.isfinite(float(proc.stdout.split("lambda* = ")[1].split()[0]))
