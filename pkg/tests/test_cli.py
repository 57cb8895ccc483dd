import json

import pytest

import main
from blocktrial.dataio import write_trial_csv
from blocktrial.simulation import Scenario, gen_continuous
from blocktrial.streams import make_streams
from test_dataio import CONTINUOUS

SURVIVAL_NO_B_DEATHS = """patient_id,block,institution,arm,time,event
1,1,1,A,2.0,1
2,1,1,B,3.0,0
3,1,2,A,1.0,1
4,1,2,B,4.0,0
"""

POWER_CELL = """study = power
outcome = continuous
n_total = 40
institutions = 2
block_size = 4
replications = 6
tests = conditional, t_test
"""


@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    for variable in ("BLOCKTRIAL_DEBUG", "BLOCKTRIAL_WORKERS", "BLOCKTRIAL_RESULTS_DIR"):
        monkeypatch.delenv(variable, raising=False)


def _run(capsys, *argv):
    code = main.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _file(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _null_trial(tmp_path, blocks, name):
    scenario = Scenario("continuous", 32, 2, 4, null=True)
    data = gen_continuous(scenario, make_streams(1, scenario.key, 0))
    path = tmp_path / name
    write_trial_csv(data.prefix(blocks), path)
    return str(path)


def test_analyze_prints_a_report(capsys, tmp_path):
    code, out, _ = _run(capsys, "analyze", "--data", _file(tmp_path, "t.csv", CONTINUOUS), "--outcome", "continuous")
    assert code == 0
    report = json.loads(out)
    assert report['mode'] == "conditional"
    assert report['arm_totals'] == [2, 2]
    assert 0 <= report['p_value'] <= 1


def test_analyze_invalid_data_exits_2(capsys, tmp_path):
    path = _file(tmp_path, "t.csv", CONTINUOUS.replace("arm,y", "arm,y,age"))
    code, out, err = _run(capsys, "analyze", "--data", path, "--outcome", "continuous")
    assert code == 2
    assert out == ""
    assert "unexpected columns age" in err


def test_unknown_command_exits_4(capsys):
    code, _, err = _run(capsys, "analyse")
    assert code == 4
    assert "Did you mean 'analyze'" in err


def test_missing_flag_exits_4(capsys, tmp_path):
    code, _, _ = _run(capsys, "simulate", "--config", _file(tmp_path, "cell.cfg", POWER_CELL))
    assert code == 4


def test_no_command_exits_4(capsys):
    assert _run(capsys)[0] == 4


def test_oracle_counts(capsys):
    code, out, _ = _run(capsys, "oracle", "--counts", "2,2;2,2", "--totals", "2,2")
    assert code == 0
    payload = json.loads(out)
    assert payload['sample_space'] == 36
    assert payload['conditional_space'] == 18


def test_oracle_on_data(capsys, tmp_path):
    code, out, _ = _run(capsys, "oracle", "--data", _file(tmp_path, "t.csv", CONTINUOUS), "--outcome", "continuous")
    assert code == 0
    payload = json.loads(out)
    assert (payload['sample_space'], payload['conditional_space']) == (36, 18)
    assert 0 <= payload['p_exact'] <= 1
    assert sum(weight for _, weight in payload['distribution']) == pytest.approx(1.0)


def test_oracle_needs_one_source(capsys):
    assert _run(capsys, "oracle")[0] == 4


def test_monitor_boundaries_and_resume(capsys, tmp_path):
    state = str(tmp_path / "state.json")
    code, out, _ = _run(capsys, "monitor", "--data", _null_trial(tmp_path, 4, "half.csv"), "--outcome", "continuous",
                        "--max-blocks", "8", "--state", state)
    assert code == 0
    payload = json.loads(out)
    assert [round(c, 3) for c in payload['plan']['boundaries']] == [4.048, 2.862, 2.337, 2.024]
    assert len(payload['looks']) == 2
    assert not payload['finished']

    code, out, _ = _run(capsys, "monitor", "--data", _null_trial(tmp_path, 8, "full.csv"), "--outcome", "continuous",
                        "--state", state)
    assert code == 0
    payload = json.loads(out)
    assert payload['finished']
    assert [look['look'] for look in payload['looks']] == list(range(1, len(payload['looks']) + 1))
    assert json.loads((tmp_path / "state.json").read_text())['finished']


def test_simulate_is_identical_for_any_worker_count(capsys, tmp_path):
    config = _file(tmp_path, "cell.cfg", POWER_CELL)
    for workers, out in (("1", "one"), ("2", "two")):
        code, _, _ = _run(capsys, "simulate", "--config", config, "--seed", "5", "--workers", workers,
                          "--out", str(tmp_path / out))
        assert code == 0
    for suffix in (".json", ".csv"):
        first = (tmp_path / "one" / f"scenario{suffix}").read_bytes()
        assert first == (tmp_path / "two" / f"scenario{suffix}").read_bytes()
    manifest = json.loads((tmp_path / "two" / "scenario.manifest.json").read_text())
    assert manifest['workers'] == 2


def test_simulate_rejects_misspelt_key(capsys, tmp_path):
    config = _file(tmp_path, "cell.cfg", POWER_CELL + "replicatons = 10\n")
    code, _, err = _run(capsys, "simulate", "--config", config, "--seed", "1")
    assert code == 4
    assert "replications" in err


def test_ci_without_arm_b_deaths_exits_2(capsys, tmp_path):
    code, out, err = _run(capsys, "ci", "--data", _file(tmp_path, "s.csv", SURVIVAL_NO_B_DEATHS), "--seed", "1")
    assert code == 2
    assert "arm B" in err


def test_ci_is_reproducible(capsys, tmp_path):
    text = SURVIVAL_NO_B_DEATHS.replace("3.0,0", "3.0,1").replace("4.0,0", "4.0,1")
    path = _file(tmp_path, "s.csv", text)
    first = _run(capsys, "ci", "--data", path, "--seed", "3", "--reps", "200")
    second = _run(capsys, "ci", "--data", path, "--seed", "3", "--reps", "200")
    assert first[0] == 0
    assert first[1] == second[1]
