import json

import pytest

from blocktrial.report import AnalysisReport, analyze, run_test
from blocktrial.utils.exceptions import ConfigError
from conftest import make_trial


@pytest.fixture
def single_center_trial():
    return make_trial([1] * 12, "ABBA" "BAAB" "ABAB", y=[2.0, 1.0, 0.5, 3.0, 1.0, 2.5, 4.0, 0.0, 3.5, 1.0, 2.0, 2.0])


def test_report_json_round_trip(two_block_trial):
    report = analyze(two_block_trial, seed=5, config={'pinv_rtol': None})
    again = AnalysisReport.from_json(report.to_json())
    assert again == report
    assert list(json.loads(report.to_json())) == sorted(report.to_dict())


def test_report_fields(two_block_trial):
    report = analyze(two_block_trial)
    assert report.mode == "conditional"
    assert report.score_kind == "identity"
    assert report.arm_totals == [2, 2]
    assert report.institution_totals == [4, 4]
    assert report.design['num_patients'] == 8
    assert report.p_value == report.p_two_sided
    assert report.rejected == (report.p_value < report.alpha)


def test_single_institution_conditions_on_nothing(single_center_trial):
    conditional = run_test(single_center_trial, "conditional", "identity")
    unconditional = run_test(single_center_trial, "unconditional", "identity")
    assert conditional.mean == pytest.approx(unconditional.mean)
    assert conditional.variance == pytest.approx(unconditional.variance)
    assert conditional.z == pytest.approx(unconditional.z)


def test_one_sided_p_value(single_center_trial):
    report = analyze(single_center_trial, mode="unconditional", sided=1)
    assert report.p_value == report.p_one_sided


def test_reference_tests_are_attached(two_block_trial):
    report = analyze(two_block_trial, with_reference=True)
    assert set(report.reference) == {"t_test", "stratified_t"}


@pytest.mark.parametrize("fields", [dict(sided=3), dict(alpha=0.0), dict(mode="bayesian")])
def test_analyze_rejects_bad_settings(two_block_trial, fields):
    with pytest.raises(ConfigError):
        analyze(two_block_trial, **fields)
