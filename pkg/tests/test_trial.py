import itertools as it

import numpy as np
import pytest

from conftest import make_trial

from blocktrial.trial import (ARM_A, Arm, Outcome, PatientRecord, TrialData, TrialDesign, randomize_block,
                              randomize_trial, tabulate_counts, validate)
from blocktrial.utils.exceptions import InvalidDataError, InvalidDesignError


@pytest.mark.parametrize("block_size", [0, 3, -2, 2.5])
def test_design_rejects_bad_block_size(block_size):
    with pytest.raises(InvalidDesignError):
        TrialDesign(block_size, 2, 1)


def test_design_patient_count():
    assert TrialDesign(4, 25, 3).num_patients == 100


@pytest.mark.parametrize("block_size", [2, 4, 8])
def test_randomize_block_is_balanced(block_size, rng):
    for _ in range(50):
        block = randomize_block(block_size, rng)
        assert block.sum() == block_size // 2


def test_randomize_block_patterns_are_equiprobable(rng):
    draws = 60000
    patterns = {}
    for _ in range(draws):
        key = tuple(randomize_block(4, rng))
        patterns[key] = patterns.get(key, 0) + 1
    assert len(patterns) == 6
    for count in patterns.values():
        assert abs(count - 10000) <= 400


def test_indicator_moments(rng):
    reps = 100000
    block_size = 4
    draws = np.array([randomize_block(block_size, rng) for _ in range(reps)], dtype=float)
    assert draws.mean() == pytest.approx(0.5, abs=3 / (2 * np.sqrt(reps * block_size)))
    assert draws[:, 0].var() == pytest.approx(0.25, abs=0.005)
    covariance = np.cov(draws[:, 0], draws[:, 1])[0, 1]
    assert covariance == pytest.approx(-1 / 12, abs=0.005)


def test_single_institution_absorbs_block_balance(rng):
    data = randomize_trial(TrialDesign(2, 1, 1), [1, 1], rng)
    assert tabulate_counts(data).arm_totals.tolist() == [1]


def test_alternating_institutions(rng):
    design = TrialDesign(4, 2, 2)
    for _ in range(100):
        data = randomize_trial(design, [1, 2, 1, 2, 1, 2, 1, 2], rng)
        counts = tabulate_counts(data)
        assert counts.arm_counts.sum(axis=1).tolist() == [2, 2]
        assert 0 <= counts.arm_totals[0] <= 4


@pytest.mark.parametrize("sequence", [[1, 2, 1], [1, 2, 3, 1]])
def test_randomize_trial_rejects_bad_sequences(sequence, rng):
    with pytest.raises(InvalidDataError):
        randomize_trial(TrialDesign(4, 1, 2), sequence, rng)


@pytest.mark.parametrize("arms, expected", [("ABAB", [1, 1]), ("AABB", [2, 0])])
def test_tabulate_counts(arms, expected):
    data = make_trial([1, 1, 2, 2], arms)
    counts = tabulate_counts(data)
    assert counts.block_counts.tolist() == [[2, 2]]
    assert counts.arm_counts.tolist() == [expected]
    assert counts.institution_totals.tolist() == [2, 2]


def test_tabulate_counts_rejects_unbalanced_block():
    data = make_trial([1, 1, 2, 2], "AAAB")
    with pytest.raises(InvalidDataError) as error:
        tabulate_counts(data)
    assert "block 1" in str(error.value)


def test_randomized_trials_never_violate_counts(rng):
    design = TrialDesign(8, 6, 5)
    for _ in range(20):
        institutions = rng.integers(1, 6, size=design.num_patients)
        data = randomize_trial(design, institutions, rng)
        table = tabulate_counts(data)
        assert table.violations(design.block_size) == []


def _records(arms, outcomes, block_size=4):
    return [
        PatientRecord(block=i // block_size + 1, position=i % block_size + 1, institution=1,
                      arm=Arm(arm), outcome=outcome, patient_id=str(i + 1))
        for i, (arm, outcome) in enumerate(zip(arms, outcomes))
    ]


def test_validate_accepts_valid_records():
    records = _records("ABBA", [Outcome.continuous(v) for v in range(4)])
    assert validate(records, TrialDesign(4, 1, 1)) == []


def test_validate_reports_incomplete_final_block():
    records = _records("ABBAABB", [Outcome.continuous(v) for v in range(7)])
    violations = validate(records, TrialDesign(4, 2, 1))
    assert any(v.startswith("incomplete final block") for v in violations)
    assert any("block 2" in v for v in violations)


def test_validate_reports_heterogeneous_outcomes():
    outcomes = [Outcome.continuous(1.0), Outcome.survival(2.0, True), Outcome.continuous(0.5), Outcome.continuous(3.0)]
    violations = validate(_records("ABBA", outcomes), TrialDesign(4, 1, 1))
    assert any(v.startswith("heterogeneous outcomes") for v in violations)


def test_from_records_raises_with_every_violation():
    records = _records("AAAB", [Outcome.continuous(v) for v in range(4)])
    records[0].institution = 9
    with pytest.raises(InvalidDataError) as error:
        TrialData.from_records(records, TrialDesign(4, 1, 1))
    assert len(error.value.violations) == 2


def test_records_round_trip(two_block_trial):
    rebuilt = TrialData.from_records(two_block_trial.records(), two_block_trial.design)
    np.testing.assert_array_equal(rebuilt.arms, two_block_trial.arms)
    np.testing.assert_array_equal(rebuilt.institutions, two_block_trial.institutions)
    np.testing.assert_allclose(rebuilt.y, two_block_trial.y)


def test_prefix_and_concat(two_block_trial):
    first = two_block_trial.prefix(1)
    assert first.num_blocks == 1
    assert first.y.tolist() == [1.0, 2.0, 3.0, 4.0]
    joined = TrialData.concat([first, two_block_trial.prefix(2).swap_arms().swap_arms()])
    assert joined.num_blocks == 3
    assert joined.design.num_patients == 12


def test_swap_arms(two_block_trial):
    swapped = two_block_trial.swap_arms()
    assert np.all((swapped.arms == ARM_A) == (two_block_trial.arms != ARM_A))


def test_indicators_shape(two_block_trial):
    indicators = two_block_trial.indicators()
    assert indicators.shape == (2, 4, 2)
    assert indicators.sum() == 8


@pytest.mark.parametrize("kind, kwargs", [
    ("binary", dict(value=2)),
    ("survival", dict(time=0.0, event=True)),
    ("survival", dict(time=1.0)),
    ("continuous", dict(value=float("nan"))),
])
def test_outcome_validation(kind, kwargs):
    with pytest.raises(InvalidDataError):
        Outcome(kind, **kwargs)


def test_block_patterns_cover_all_balanced_vectors():
    seen = {tuple(randomize_block(4, np.random.default_rng(seed))) for seed in range(200)}
    expected = {tuple(1 if i in chosen else 0 for i in range(4)) for chosen in it.combinations(range(4), 2)}
    assert seen == expected
