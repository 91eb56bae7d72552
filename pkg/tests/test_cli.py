import json
from pathlib import Path

import pytest

jsonschema = pytest.importorskip("jsonschema")

from ksat.cli import dispatch

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "ksat" / "schemas"


def load_schema(name):
    return json.loads((SCHEMA_DIR / f"{name}.v1.json").read_text())


def run(capsys, *argv):
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def dimacs_file(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def test_gen_deterministic(capsys):
    code1, out1, _ = run(capsys, "gen", "--n", "20", "--m", "30", "--k", "4", "--seed", "7")
    code2, out2, _ = run(capsys, "gen", "--n", "20", "--m", "30", "--k", "4", "--seed", "7")
    assert code1 == code2 == 0
    assert out1 == out2
    assert out1.startswith("p cnf 20 30\n")


def test_gen_usage_error(capsys):
    code, _, err = run(capsys, "gen", "--n", "2", "--m", "1", "--k", "4", "--seed", "0")
    assert code == 2
    assert json.loads(err)["error"] == "usage"


def test_unknown_command(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_verify_exit_codes(capsys, dimacs_file, tmp_path):
    f = dimacs_file("f.cnf", "p cnf 2 1\n1 2 0\n")
    good = dimacs_file("good.txt", "10")
    bad = dimacs_file("bad.txt", "00")
    code, out, _ = run(capsys, "verify", "--dimacs", f, "--assignment", good)
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("verify"))
    assert payload["satisfying"]

    code, out, err = run(capsys, "verify", "--dimacs", f, "--assignment", bad)
    assert code == 1
    assert not json.loads(out)["satisfying"]
    assert "error" in json.loads(err)


def test_classify_schema(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 4 3\n1 2 0\n1 3 0\n1 4 0\n")
    code, out, _ = run(
        capsys, "classify", "--dimacs", f, "--k", "2", "--delta", "3", "--zeta", "0.4"
    )
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("classify"))
    assert payload["n_bad_vars"] == 4


def test_mark_schema(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 3 1\n1 2 3 0\n")
    code, out, _ = run(
        capsys, "mark", "--dimacs", f, "--km", "2", "--ku", "1", "--seed", "5"
    )
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("mark"))
    assert payload["certified"]


def test_sample_lines_schema(capsys, dimacs_file, tmp_path):
    f = dimacs_file("f.cnf", "p cnf 5 2\n1 2 3 0\n-2 4 5 0\n")
    out_path = tmp_path / "samples.jsonl"
    code, _, _ = run(
        capsys,
        "sample", "--dimacs", f, "--theta", "0.5", "--tmax", "3",
        "--seed", "9", "--runs", "4", "--out", str(out_path),
    )
    assert code == 0
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 4
    schema = load_schema("sample")
    for line in lines:
        payload = json.loads(line)
        jsonschema.validate(payload, schema)
        assert len(payload["assignment"]) == 5


def test_path_schema_and_validity(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 4 2\n1 2 0\n3 4 0\n")
    a = dimacs_file("a.txt", "1010")
    b = dimacs_file("b.txt", "0101")
    code, out, _ = run(
        capsys, "path", "--dimacs", f, "--sigma", a, "--sigma2", b, "--k", "2"
    )
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("path"))
    assert payload["valid"]
    assert payload["entries"][0] == "1010"
    assert payload["entries"][-1] == "0101"

    code, out, _ = run(
        capsys, "path", "--dimacs", f, "--mode", "random",
        "--sigma", a, "--sigma2", b, "--k", "2",
    )
    assert code == 0
    jsonschema.validate(json.loads(out), load_schema("path"))


def test_loose_schema(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 3 1\n1 2 3 0\n")
    s = dimacs_file("s.txt", "100")
    code, out, _ = run(capsys, "loose", "--dimacs", f, "--sigma", s)
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("loose"))
    assert payload["n_failures"] == 0


def test_solgraph_schema_and_d0(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 2 1\n1 2 0\n")
    code, out, _ = run(capsys, "solgraph", "--dimacs", f, "--D", "0")
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("solgraph"))
    assert payload["component_sizes"] == [1, 1, 1]


def test_influence_schema(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 2 1\n1 2 0\n")
    code, out, _ = run(
        capsys,
        "influence", "--dimacs", f, "--k", "2", "--v0", "1", "--trials", "50",
    )
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("influence"))
    assert payload["coupling"]["trials"] == 50


def test_flippable_schema(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 2 1\n1 2 0\n")
    code, out, _ = run(capsys, "flippable", "--dimacs", f)
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("flippable"))
    assert payload["all_flippable"]


def test_pipeline_records(capsys, tmp_path):
    spec = {
        "instances": [
            {"n": 12, "m": 6, "k": 3, "seed": 1},
            {"n": 10, "m": 5, "k": 3, "seed": 2},
        ],
        "seeds": [4, 5, 6],
        "zeta": 0.3,
        "sample": {"theta": 0.5, "tmax": 5, "runs": 2},
        "path": {"mode": "bounded"},
        "loose": {},
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    code, out, _ = run(capsys, "pipeline", "--spec", str(spec_path))
    assert code == 0
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("pipeline"))
    assert len(payload["records"]) == 6
    for record in payload["records"]:
        assert "classify" in record or "error" in record


def test_pipeline_empty_sweep(capsys, tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({"instances": [], "seeds": [1]}))
    code, out, _ = run(capsys, "pipeline", "--spec", str(spec_path))
    assert code == 0
    assert json.loads(out)["records"] == []


def test_summary_format(capsys, dimacs_file):
    f = dimacs_file("f.cnf", "p cnf 2 1\n1 2 0\n")
    code, out, _ = run(
        capsys, "solgraph", "--dimacs", f, "--D", "1", "--format", "summary"
    )
    # solgraph has no --format flag parameterization issue: it was added
    assert code == 0
    assert "giant_fraction" in out


def test_inputs_never_modified(capsys, dimacs_file):
    text = "p cnf 2 1\n1 2 0\n"
    f = dimacs_file("f.cnf", text)
    run(capsys, "flippable", "--dimacs", f)
    assert Path(f).read_text() == text


def test_pipeline_parallel_jobs(capsys, tmp_path):
    spec = {
        "instances": [{"n": 10, "m": 5, "k": 3, "seed": s} for s in (1, 2)],
        "seeds": [4, 5],
        "sample": {"theta": 0.5, "tmax": 3, "runs": 1},
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    code, out_serial, _ = run(capsys, "pipeline", "--spec", str(spec_path))
    assert code == 0
    code, out_parallel, _ = run(
        capsys, "pipeline", "--spec", str(spec_path), "--jobs", "2"
    )
    assert code == 0
    assert json.loads(out_serial) == json.loads(out_parallel)
