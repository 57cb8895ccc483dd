import pytest

from blocktrial.settings import (DEFAULTS, calibration_settings, load_config, parse_scenario, read_scenario_file,
                                suggest_key, tolerance_settings)
from blocktrial.utils.exceptions import ConfigError, MissingKeyError, UnknownKeyError

POWER = """
# small lognormal cell
study = power
outcome = continuous
n_total = 120
institutions = 10
block_size = 4
tests = conditional, t_test   # two tests
null = yes
c_final = default
"""


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for variable in ("BLOCKTRIAL_DEBUG", "BLOCKTRIAL_WORKERS", "BLOCKTRIAL_RESULTS_DIR"):
        monkeypatch.delenv(variable, raising=False)


def test_parses_power_scenario():
    values = parse_scenario(POWER)
    assert values['n_total'] == 120
    assert values['tests'] == ("conditional", "t_test")
    assert values['null'] is True
    assert values['c_final'] is None


def test_table_study_needs_no_layout():
    assert parse_scenario("study = power\ntable = 3\nscale = 0.1\n") == {'study': "power", 'table': 3, 'scale': 0.1}


def test_unknown_key_suggests_the_closest():
    with pytest.raises(UnknownKeyError) as error:
        parse_scenario(POWER + "instituions = 20\n")
    assert error.value.suggestion == "institutions"
    assert "Did you mean 'institutions'" in str(error.value)


def test_unknown_key_without_close_match():
    with pytest.raises(UnknownKeyError) as error:
        parse_scenario(POWER + "favourite_colour = blue\n")
    assert error.value.suggestion is None


def test_missing_study():
    with pytest.raises(MissingKeyError) as error:
        parse_scenario("outcome = binary\n")
    assert error.value.key == "study"


def test_missing_layout_key():
    with pytest.raises(MissingKeyError) as error:
        parse_scenario(POWER.replace("block_size = 4\n", ""))
    assert error.value.key == "block_size"


def test_duplicate_key():
    with pytest.raises(ConfigError, match="set twice"):
        parse_scenario(POWER + "n_total = 240\n")


@pytest.mark.parametrize("line", ["replications = many", "block_effects = maybe", "just words"])
def test_bad_lines(line):
    with pytest.raises(ConfigError):
        parse_scenario(POWER + line + "\n")


def test_unknown_study():
    with pytest.raises(ConfigError, match="Unknown study"):
        parse_scenario("study = survey\n")


def test_read_scenario_file(tmp_path):
    path = tmp_path / "cell.cfg"
    path.write_text(POWER, encoding="utf-8")
    assert read_scenario_file(path)['outcome'] == "continuous"
    with pytest.raises(ConfigError):
        read_scenario_file(tmp_path / "missing.cfg")


def test_suggest_key():
    assert suggest_key("repz", ["reps", "level"]) == "reps"
    assert suggest_key("zzzzzz", ["reps", "level"]) is None


def test_load_config_defaults():
    config = load_config()
    assert set(config) == set(DEFAULTS)
    assert config['workers'] >= 1


def test_environment_overrides_defaults(monkeypatch):
    monkeypatch.setenv("BLOCKTRIAL_WORKERS", "3")
    monkeypatch.setenv("BLOCKTRIAL_DEBUG", "true")
    config = load_config()
    assert config['workers'] == 3
    assert config['debug'] is True


def test_explicit_overrides_win(monkeypatch):
    monkeypatch.setenv("BLOCKTRIAL_WORKERS", "3")
    assert load_config({'workers': 2, 'debug': None})['workers'] == 2


def test_invalid_environment_value(monkeypatch):
    monkeypatch.setenv("BLOCKTRIAL_WORKERS", "lots")
    with pytest.raises(ConfigError, match="BLOCKTRIAL_WORKERS"):
        load_config()


def test_unknown_setting_is_rejected():
    with pytest.raises(ConfigError, match="Unknown settings"):
        load_config({'pinv_rtoll': 1e-8})


def test_worker_count_must_be_positive():
    with pytest.raises(ConfigError):
        load_config({'workers': 0})


def test_tolerance_settings_skip_unset_values():
    assert tolerance_settings(DEFAULTS) == {'conditioning_tol': 1e-6, 'clamp_tol': 1e-8}
    assert tolerance_settings({'pinv_rtol': 1e-12})['rtol'] == 1e-12
    assert tolerance_settings() == {}


def test_calibration_settings_fall_back_to_defaults():
    assert calibration_settings() == {'sample': 200000, 'max_iter': 200, 'tol': 0.005}
    assert calibration_settings({'calibration_tol': 0.01, 'calibration_sample': None})['tol'] == 0.01
    assert calibration_settings({'calibration_sample': None})['sample'] == 200000
