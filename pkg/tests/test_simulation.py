import math

import numpy as np
import pytest

from blocktrial.settings import calibration_settings
from blocktrial.simulation import (TESTS, Scenario, assign_institutions, calibrate_censoring, calibrations,
                                   estimate_power, gen_binary, gen_continuous, gen_survival, generate, with_horizon)
from blocktrial.streams import make_rng, make_streams, scenario_key
from blocktrial.trial import tabulate_counts
from blocktrial.utils.exceptions import (CalibrationError, ConfigError, InconsistentConditioningError, InvalidDesignError,
                                        OutcomeKindError)


def test_streams_are_reproducible():
    first = make_streams(7, 123, 4)
    second = make_streams(7, 123, 4)
    assert first.outcome.random() == second.outcome.random()
    assert make_streams(7, 123, 5).outcome.random() != make_streams(7, 123, 4).outcome.random()


def test_substreams_are_independent():
    streams = make_streams(1, 2, 3)
    assert streams.arrival.random() != streams.assignment.random()


def test_scenario_key_is_stable():
    assert scenario_key("abc") == scenario_key("abc")
    assert scenario_key("abc") != scenario_key("abd")


def test_scenario_key_ignores_replication_count():
    assert Scenario("continuous", 120, 10, 4, replications=10).key == Scenario("continuous", 120, 10, 4).key


@pytest.mark.parametrize("fields", [
    dict(outcome="ordinal", n_total=120, institutions=10, block_size=4),
    dict(outcome="continuous", n_total=120, institutions=10, block_size=4, tests=("bogus",)),
    dict(outcome="continuous", n_total=120, institutions=10, block_size=4, alpha=1.5),
])
def test_scenario_rejects_bad_settings(fields):
    with pytest.raises(ConfigError):
        Scenario(**fields)


def test_scenario_rejects_partial_blocks():
    with pytest.raises(InvalidDesignError):
        Scenario("continuous", 122, 10, 4)


def test_assign_institutions_is_nearly_even(rng):
    labels = assign_institutions(122, 10, rng)
    counts = np.bincount(labels)[1:]
    assert counts.sum() == 122
    assert set(counts) <= {12, 13}


@pytest.mark.parametrize("generator, outcome", [(gen_continuous, "continuous"), (gen_binary, "binary")])
def test_generators_produce_valid_trials(generator, outcome):
    scenario = Scenario(outcome, 120, 10, 4)
    data = generator(scenario, make_streams(1, scenario.key, 0))
    assert data.outcome_kind == outcome
    assert data.design.num_patients == 120
    tabulate_counts(data)


def test_binary_outcomes_are_zero_or_one():
    scenario = Scenario("binary", 240, 20, 8)
    data = gen_binary(scenario, make_streams(1, scenario.key, 0))
    assert set(np.unique(data.y)) <= {0.0, 1.0}


def test_continuous_treatment_effect_is_additive():
    scenario = Scenario("continuous", 4000, 1, 4, institution_effects=False)
    data = gen_continuous(scenario, make_streams(2, scenario.key, 0))
    on_a = data.arms == 1
    assert data.y[on_a].mean() - data.y[~on_a].mean() == pytest.approx(1.07, abs=0.25)


def test_block_effects_shift_quarters():
    plain = Scenario("continuous", 160, 1, 4, institution_effects=False)
    shifted = Scenario("continuous", 160, 1, 4, institution_effects=False, block_effects=True)
    streams = lambda: make_streams(3, plain.key, 0)
    difference = gen_continuous(shifted, streams()).y - gen_continuous(plain, streams()).y
    np.testing.assert_allclose(difference[:40], -1.0)
    np.testing.assert_allclose(difference[-40:], 1.0)


def test_censoring_calibration_hits_target():
    scenario = Scenario("survival", 240, 10, 4, censoring=0.19, institution_effects=False)
    horizon = calibrate_censoring(scenario, seed=5, sample=50000)
    assert math.isfinite(horizon) and horizon > 0
    censored = []
    for replication in range(40):
        data = gen_survival(with_horizon(scenario, 5), make_streams(5, scenario.key, replication), seed=5)
        censored.append(1 - data.events.mean())
    assert np.mean(censored) == pytest.approx(0.19, abs=0.03)


def test_no_censoring_means_every_event_observed():
    scenario = Scenario("survival", 120, 10, 4, censoring=0.0)
    data = generate(scenario, make_streams(1, scenario.key, 0))
    assert data.events.all()


def test_calibration_is_cached():
    scenario = Scenario("survival", 120, 10, 4, censoring=0.25)
    first = with_horizon(scenario, 11).censoring_horizon
    assert (scenario.key, 11, *calibration_settings().values()) in calibrations.cache["censoring"]
    assert with_horizon(scenario, 11).censoring_horizon == first


def test_calibration_follows_the_settings():
    scenario = Scenario("survival", 120, 10, 4, censoring=0.25)
    with pytest.raises(CalibrationError):
        with_horizon(scenario, 12, {'calibration_max_iter': 2})
    loose = with_horizon(scenario, 12, {'calibration_sample': 20000}).censoring_horizon
    assert (scenario.key, 12, 20000, 200, 0.005) in calibrations.cache["censoring"]
    assert math.isfinite(loose)


def test_power_uses_the_configured_tolerances():
    scenario = Scenario("continuous", 80, 5, 4, replications=2, tests=("conditional",))
    with pytest.raises(InconsistentConditioningError):
        estimate_power(scenario, seed=1, config={'conditioning_tol': -1.0})
    plain = Scenario("continuous", 80, 5, 4, replications=2, tests=("unconditional",))
    assert estimate_power(plain, seed=1, config={'conditioning_tol': -1.0}).replications == 2


def test_every_registered_test_runs():
    for outcome in ("continuous", "binary", "survival"):
        scenario = Scenario(outcome, 160, 10, 4, alpha=0.025, sided=1)
        data = generate(with_horizon(scenario, 1), make_streams(1, scenario.key, 0))
        for name, rejects in TESTS.items():
            try:
                decision = rejects(data, scenario)
            except OutcomeKindError:
                continue
            assert decision in (True, False)


def test_power_is_identical_for_any_worker_count():
    scenario = Scenario("continuous", 80, 5, 4, replications=24)
    single = estimate_power(scenario, seed=9, workers=1)
    pooled = estimate_power(scenario, seed=9, workers=3)
    assert single.rejection == pooled.rejection
    assert single.to_dict() == pooled.to_dict()


def test_replications_depend_on_seed():
    scenario = Scenario("continuous", 80, 5, 4)
    first = generate(scenario, make_streams(1, scenario.key, 0))
    again = generate(scenario, make_streams(1, scenario.key, 0))
    other = generate(scenario, make_streams(2, scenario.key, 0))
    np.testing.assert_array_equal(first.y, again.y)
    assert not np.array_equal(first.y, other.y)


def test_make_rng_paths_differ():
    assert make_rng(1, 2).random() != make_rng(1, 3).random()


@pytest.mark.slow
@pytest.mark.parametrize("outcome, test", [
    ("continuous", "conditional"),
    ("binary", "conditional"),
    ("survival", "conditional_logrank"),
])
@pytest.mark.parametrize("alpha, low, high", [(0.05, 0.039, 0.061), (0.01, 0.006, 0.016)])
def test_type_one_error(outcome, test, alpha, low, high):
    scenario = Scenario(outcome, 120, 10, 4, null=True, tests=(test,), alpha=alpha, replications=5000)
    result = estimate_power(scenario, seed=2024, workers=4)
    assert low <= result.rejection[test] <= high


@pytest.mark.slow
@pytest.mark.parametrize("institutions, expected", [(10, {"conditional": 0.53, "t_test": 0.43}), (40, {"conditional": 0.35})])
def test_continuous_power_spot_cells(institutions, expected):
    scenario = Scenario("continuous", 120, institutions, 4, tests=tuple(expected), replications=5000)
    result = estimate_power(scenario, seed=1, workers=4)
    for test, power in expected.items():
        assert result.rejection[test] == pytest.approx(power, abs=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("outcome, conditional, reference", [
    ("binary", "conditional", "mantel_haenszel"),
    ("survival", "conditional_gehan", "stratified_gehan"),
])
def test_conditional_beats_stratified_reference(outcome, conditional, reference):
    scenario = Scenario(outcome, 120, 10, 4, tests=(conditional, reference), replications=5000)
    result = estimate_power(scenario, seed=1, workers=4)
    assert result.rejection[conditional] - result.rejection[reference] >= 0.03


@pytest.mark.slow
def test_sequential_type_one_error():
    scenario = Scenario("continuous", 480, 10, 4, null=True, tests=("gst_conditional",), alpha=0.025, sided=1,
                        replications=5000)
    result = estimate_power(scenario, seed=3, workers=4)
    assert 0.015 <= result.rejection["gst_conditional"] <= 0.035


@pytest.mark.slow
def test_sequential_power_spot_cell():
    scenario = Scenario("continuous", 480, 10, 4, tests=("gst_conditional", "gst_unconditional"), alpha=0.025,
                        sided=1, replications=5000)
    result = estimate_power(scenario, seed=4, workers=4)
    assert result.rejection["gst_conditional"] - result.rejection["gst_unconditional"] >= 0.10


@pytest.mark.slow
@pytest.mark.parametrize("outcome", ["continuous", "binary"])
def test_conditional_power_falls_with_more_institutions(outcome):
    rates = []
    for institutions in (10, 20, 40):
        scenario = Scenario(outcome, 120, institutions, 4, tests=("conditional",), replications=5000)
        result = estimate_power(scenario, seed=5, workers=4)
        rates.append((result.rejection["conditional"], result.se["conditional"]))
    for (first, se_first), (second, se_second) in zip(rates, rates[1:]):
        assert second <= first + 3 * math.hypot(se_first, se_second)


@pytest.mark.slow
@pytest.mark.parametrize("outcome", ["continuous", "binary"])
def test_conditioning_never_helps_without_institution_effects(outcome):
    scenario = Scenario(outcome, 120, 10, 4, institution_effects=False, tests=("conditional", "unconditional"),
                        replications=5000)
    result = estimate_power(scenario, seed=6, workers=4)
    assert result.rejection["conditional"] <= result.rejection["unconditional"] + 2 * result.se["unconditional"]
