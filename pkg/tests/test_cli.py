import csv
import io
import json

import jsonschema
import numpy as np
import pytest

import cli
from models import STEERABLE, INCONCLUSIVE


def run_report(tmp_path, argv, name="report.json"):
    out = tmp_path / name
    code = cli.main(argv + ["--out", str(out)])
    assert code == cli.EXIT_OK
    return out.read_text(encoding="utf-8")


def test_nst_report(tmp_path, report_schema):
    text = run_report(tmp_path, ["nst", "--mub-pair", "-d", "2"])
    report = json.loads(text)
    jsonschema.validate(report, report_schema)
    assert report['command'] == "nst"
    assert report['result']['nst']['f_plus'] == pytest.approx((1 + 1 / np.sqrt(2)) / 2, abs=1e-10)
    assert report['result']['closed_form']['f_plus'] == pytest.approx(report['result']['nst']['f_plus'])
    assert report['result']['geometric']['r_opt'] == pytest.approx(1 / np.sqrt(2))
    assert report['config']['mc']['seed'] == 0


def test_nst_probabilistic_check(tmp_path, report_schema):
    report = json.loads(run_report(tmp_path, ["nst", "--haar", "3", "-d", "3",
                                              "--check-probabilistic", "2000", "--seed", "5"]))
    jsonschema.validate(report, report_schema)
    assert report['result']['probabilistic_check']['violations'] == 0
    assert report['config']['measurement']['seed'] == 5


def test_reports_are_byte_identical(tmp_path):
    argv = ["steer", "--isotropic", "3", "0.5", "--samples", "4", "--seed", "9"]
    first = run_report(tmp_path, argv)
    second = run_report(tmp_path, argv)
    assert first == second


def test_replay_from_report(tmp_path):
    original = run_report(tmp_path, ["nst", "--continuous", "-d", "3", "--samples", "2000", "--seed", "2"])
    path = tmp_path / "report.json"
    assert cli.main(["--config", str(path)]) == cli.EXIT_OK
    assert path.read_text(encoding="utf-8") == original
    assert json.loads(original)['result']['nst']['method'] == "mc"


def test_steer_t_state(tmp_path, report_schema):
    report = json.loads(run_report(tmp_path, ["steer", "--tstate", "-0.6", "-0.6", "-0.6"]))
    jsonschema.validate(report, report_schema)
    result = report['result']['report']
    assert result['kind'] == "t-state"
    assert result['verdict'] == STEERABLE
    assert result['F_bar'] == pytest.approx(1.2, abs=1e-6)


def test_invalid_t_state_exits_with_invalid_input(tmp_path):
    assert cli.main(["steer", "--tstate", "0.6", "0.6", "0.6", "--out", str(tmp_path / "x.json")]) == cli.EXIT_INVALID
    assert not (tmp_path / "x.json").exists()


def test_enumeration_cap_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("STEERLAB_ENUM_CAP", "100")
    assert cli.main(["nst", "--haar", "8", "-d", "2", "--out", str(tmp_path / "x.json")]) == cli.EXIT_CAP


def test_argument_errors_exit_with_two():
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["steer"])
    assert excinfo.value.code == 2


def test_channel_needs_a_source():
    assert cli.main(["channel", "fidelity"]) == cli.EXIT_INVALID


def test_werner_steer_auto(tmp_path, report_schema):
    report = json.loads(run_report(tmp_path, ["steer", "--werner", "3", "1.0", "--samples", "3"]))
    jsonschema.validate(report, report_schema)
    result = report['result']['report']
    assert result['kind'] == "werner-type"
    assert result['verdict'] == STEERABLE
    assert result['details']['wjd_type']['verdict'] == INCONCLUSIVE


def test_werner_sweep_flips_at_one_half(tmp_path, report_schema):
    report = json.loads(run_report(tmp_path, ["sweep", "--family", "werner", "-d", "2", "--points", "5",
                                              "--start", "0.48", "--stop", "0.52", "--criterion", "werner"]))
    jsonschema.validate(report, report_schema)
    verdicts = [row['verdict'] for row in report['result']['rows']]
    assert verdicts == [INCONCLUSIVE] * 3 + [STEERABLE] * 2


def test_depolarizing_sweep_csv(tmp_path):
    text = run_report(tmp_path, ["sweep", "--family", "depolarizing", "-d", "2", "--points", "5",
                                 "--start", "0.6", "--stop", "0.65", "--format", "csv"], name="sweep.csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert text.splitlines()[0] == ",".join(cli.SWEEP_COLUMNS)
    assert len(rows) == 5
    assert [r['verdict'] for r in rows] == [INCONCLUSIVE] * 3 + [STEERABLE] * 2
    assert {r['ep_verdict'] for r in rows} == {"entanglement-preserving"}
    assert {r['criterion'] for r in rows} == {"entanglement-fidelity"}
    assert float(rows[0]['parameter']) == 0.6


def test_channel_decompose_and_fidelity(tmp_path):
    decomposed = json.loads(run_report(tmp_path, ["channel", "decompose", "--werner", "2", "0.7"]))
    assert decomposed['result']['reconstruction_error'] < 1e-9
    fidelity = json.loads(run_report(tmp_path, ["channel", "fidelity", "--depolarizing", "2", "0.5"]))
    result = fidelity['result']
    assert result['entanglement_fidelity'] == pytest.approx(5 / 8)
    assert result['entanglement_fidelity_direct'] == pytest.approx(5 / 8)
    assert result['report']['verdict'] == INCONCLUSIVE
    assert result['report']['details']['boundary_adjacent']


def test_channel_twirl(tmp_path):
    report = json.loads(run_report(tmp_path, ["channel", "twirl", "--two-qubit-random", "3",
                                              "--samples", "2000"]))
    result = report['result']
    assert result['fidelity_after'] == pytest.approx(result['fidelity_before'], abs=1e-12)
    assert result['trace_distance_to_isotropic'] < 0.15


def test_mc_verify(tmp_path, report_schema):
    report = json.loads(run_report(tmp_path, ["mc-verify", "-d", "2", "--samples", "20000", "--seed", "1"]))
    jsonschema.validate(report, report_schema)
    result = report['result']
    assert result['analytic'] == {'f_plus': 0.75, 'f_minus': 0.25}
    assert result['mc']['details']['northern_hemisphere'] == pytest.approx(0.375, abs=0.01)


def test_ledger_history_and_rerun(tmp_path, capsys):
    ledger = str(tmp_path / "runs.db")
    run_report(tmp_path, ["--ledger", ledger, "nst", "--mub-pair", "-d", "3"])
    run_report(tmp_path, ["--ledger", ledger, "steer", "--tstate", "-0.4", "-0.4", "-0.4"], name="t.json")
    capsys.readouterr()

    assert cli.main(["--ledger", ledger, "history"]) == cli.EXIT_OK
    history = json.loads(capsys.readouterr().out)
    assert [run['command'] for run in history] == ["steer", "nst"]

    assert cli.main(["--ledger", ledger, "rerun", "1"]) == cli.EXIT_OK
    outcome = json.loads(capsys.readouterr().out)
    assert outcome == {'run_id': 1, 'command': "nst", 'identical': True}

    assert cli.main(["--ledger", ledger, "rerun", "42"]) == cli.EXIT_INVALID


def test_ledger_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("STEERLAB_LEDGER", str(tmp_path / "env.db"))
    run_report(tmp_path, ["nst", "--identical-pair", "-d", "2"])
    capsys.readouterr()
    assert cli.main(["history", "--limit", "5"]) == cli.EXIT_OK
    assert len(json.loads(capsys.readouterr().out)) == 1


def test_history_without_ledger():
    assert cli.main(["history"]) == cli.EXIT_INVALID


def test_stdout_output(capsys):
    assert cli.main(["nst", "--continuous", "-d", "4"]) == cli.EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report['result']['nst']['f_plus'] == pytest.approx((25 / 12) / 4)
    assert report['result']['nst']['method'] == "analytic"


def test_fractional_dimension_is_rejected(tmp_path):
    out = tmp_path / "x.json"
    assert cli.main(["steer", "--werner", "2.5", "0.9", "--out", str(out)]) == cli.EXIT_INVALID
    assert cli.main(["channel", "fidelity", "--depolarizing", "2.5", "0.5"]) == cli.EXIT_INVALID
    assert not out.exists()


def test_csv_keeps_list_fields(tmp_path):
    text = run_report(tmp_path, ["nst", "--mub-pair", "-d", "2", "--format", "csv"], name="nst.csv")
    rows = dict(csv.reader(io.StringIO(text)))
    assert rows.pop('field') == 'value'
    assert rows['nst.witnesses.plus.assignment[0]'] == '0'
    assert 'nst.witnesses.plus.assignment[1]' in rows
    assert float(rows['nst.f_plus']) == pytest.approx((1 + 1 / np.sqrt(2)) / 2)
