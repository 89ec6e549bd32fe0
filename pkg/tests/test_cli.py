import csv
import io
import json

import pytest

from bdtwine.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_validate_table_output(capsys):
    code, out, _ = run(capsys, "validate", "--model", "mm_infty", "--lambda", "1", "--nu", "1", "--trunc", "80")
    assert code == 0
    assert out.startswith("command: validate\nok: true")
    assert "ergodicity" in out


def test_json_output_is_canonical_and_deterministic(capsys):
    args = ["gap-report", "--model", "mm1", "--lambda", "1", "--nu", "4", "--trunc", "200", "--format", "json"]
    code1, out1, _ = run(capsys, *args)
    code2, out2, _ = run(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2
    doc = json.loads(out1)
    assert json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n" == out1
    assert doc["result"]["sound"] is True


def test_csv_rows_output(capsys):
    code, out, _ = run(
        capsys, "inequalities", "--model", "mm_infty", "--lambda", "1", "--nu", "1",
        "--trunc", "100", "--format", "csv",
    )
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == sorted(rows[0])
    assert any("spectral_gap" in r for r in rows[1:])


def test_csv_key_value_output(capsys):
    code, out, _ = run(capsys, "curvature", "--model", "mm1", "--lambda", "1", "--nu", "4", "--weight", "geometric:2", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["key", "value"]
    doc = dict((r[0], r[1]) for r in rows[1:])
    assert float(doc["sigma_u"]) == pytest.approx(1.0)


def test_exit_one_on_failed_verification(capsys):
    code, out, _ = run(
        capsys, "order", "--check", "stochastic",
        "--probs-a", "[0.2,0.3,0.5]", "--probs-b", "[0.5,0.3,0.2]",
    )
    assert code == 1
    assert "ok: false" in out


def test_exit_two_on_domain_error(capsys):
    code, _, err = run(capsys, "validate", "--model", "mm_infty", "--lambda", "-1", "--nu", "1")
    assert code == 2
    assert "InvalidParameterError" in err


def test_exit_two_on_bad_flag_value(capsys):
    code, _, err = run(capsys, "validate", "--model", "mm_infty", "--lambda", "soup", "--nu", "1")
    assert code == 2
    assert "--lambda" in err


def test_exit_two_on_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_weight_table_file_roundtrip(tmp_path, capsys):
    wpath = tmp_path / "w.json"
    wpath.write_text(json.dumps({"values": [1.0, 2.0, 4.0], "tail_rule": "hold_ratio"}))
    code, out, _ = run(
        capsys, "curvature", "--model", "mm1", "--lambda", "1", "--nu", "4",
        "--weight", f"table:{wpath}", "--trunc", "150",
    )
    assert code == 0
    assert "sigma_u: 1" in out


def test_out_flag_writes_file(tmp_path, capsys):
    target = tmp_path / "res.json"
    code, out, _ = run(
        capsys, "mehler", "--lambda", "1", "--nu", "1", "--x0", "2", "--t", "0.5",
        "--trunc", "60", "--format", "json", "--out", str(target),
    )
    assert code == 0
    assert out == ""
    doc = json.loads(target.read_text())
    assert doc["ok"] is True


def test_simulate_path_json(capsys):
    code, out, _ = run(
        capsys, "simulate", "--kind", "path", "--model", "mm_infty", "--lambda", "1",
        "--nu", "1", "--x0", "2", "--t", "2.0", "--format", "json",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["states"][0] == 2


def test_table_model_via_json_arrays(capsys):
    code, out, _ = run(
        capsys, "stationary", "--model", "table",
        "--lambda", "[1.0, 0.8, 0.6]", "--nu", "[0.0, 2.0, 3.0]", "--trunc", "60",
    )
    assert code == 0
    assert "ok: true" in out


def test_verify_intertwine_t_grid(capsys):
    code, out, _ = run(
        capsys, "verify-intertwine", "--model", "mm_infty", "--lambda", "1", "--nu", "1",
        "--t", "0.1,0.5", "--trunc", "100", "--format", "json",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["worst_residual"] < 1e-6
