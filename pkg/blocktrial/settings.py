import logging
import os
from typing import Optional

import Levenshtein as lev
import psutil
from dotenv import load_dotenv

from blocktrial.utils.exceptions import ConfigError, MissingKeyError, UnknownKeyError

logger = logging.getLogger(__name__)

#Built-in defaults, config.py (see config_example.py) is merged over these
DEFAULTS = {
    'debug': False,
    'workers': None,
    'pinv_rtol': None,
    'conditioning_tol': 1e-6,
    'variance_clamp_tol': 1e-8,
    'enumeration_cap': 10**7,
    'calibration_sample': 200000,
    'calibration_max_iter': 200,
    'calibration_tol': 0.005,
    'results_dir': 'results',
}

#Environment variable -> (setting, converter)
ENV_OVERRIDES = {
    'BLOCKTRIAL_DEBUG': ('debug', lambda value: value.strip().lower() in ('1', 'true', 'yes', 'on')),
    'BLOCKTRIAL_WORKERS': ('workers', int),
    'BLOCKTRIAL_RESULTS_DIR': ('results_dir', str),
}


def default_workers() -> int:
    '''Physical core count, falling back to logical cores and finally to 1.'''
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def load_config(overrides:dict=None) -> dict:
    '''
    Builds the effective settings: defaults, then the optional 'config.py',
    then environment variables (a .env file is honoured), then explicit overrides.
    '''
    config = dict(DEFAULTS)

    try:
        from config import config as user_config
        config.update(user_config)
        logger.debug("Loaded settings from config.py")
    except ImportError:
        logger.debug("No config.py found, using default settings.")

    load_dotenv()
    for variable, (key, convert) in ENV_OVERRIDES.items():
        value = os.getenv(variable)
        if value is None or value == "":
            continue
        try:
            config[key] = convert(value)
        except ValueError:
            raise ConfigError(f"Environment variable {variable} has an invalid value '{value}'.")

    if overrides:
        config.update({key: value for key, value in overrides.items() if value is not None})

    unknown = set(config) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"Unknown settings: {', '.join(sorted(unknown))}")

    if config['workers'] is None:
        config['workers'] = default_workers()
    if config['workers'] < 1:
        raise ConfigError(f"Worker count must be at least 1, got {config['workers']}.")

    return config


def tolerance_settings(config:dict=None) -> dict:
    '''Keyword arguments of conditional_moments taken from settings, unset ones left out.'''
    config = config or {}
    return {
        key: config[name] for key, name in
        (('rtol', 'pinv_rtol'), ('conditioning_tol', 'conditioning_tol'), ('clamp_tol', 'variance_clamp_tol'))
        if config.get(name) is not None
    }


def calibration_settings(config:dict=None) -> dict:
    '''Keyword arguments of the censoring calibration, defaults for anything unset.'''
    config = config or {}
    return {
        key: config.get(name) if config.get(name) is not None else DEFAULTS[name]
        for key, name in (('sample', 'calibration_sample'), ('max_iter', 'calibration_max_iter'), ('tol', 'calibration_tol'))
    }


def _boolean(value:str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(value)


def _names(value:str) -> tuple:
    return tuple(name.strip() for name in value.split(",") if name.strip())


def _optional_float(value:str) -> Optional[float]:
    return None if value.strip().lower() in ('', 'none', 'default') else float(value)


#Scenario file key -> converter
SCENARIO_KEYS = {
    'study': str,
    'table': int,
    'scale': float,
    'name': str,
    'outcome': str,
    'n_total': int,
    'institutions': int,
    'block_size': int,
    'block_effects': _boolean,
    'effect': _optional_float,
    'null': _boolean,
    'institution_sd': _optional_float,
    'institution_effects': _boolean,
    'chi2_df': int,
    'chi2_scale': float,
    'censoring': float,
    'replications': int,
    'tests': _names,
    'alpha': float,
    'looks': int,
    'c_final': _optional_float,
    'sided': int,
    'trials': int,
    'reps': int,
    'level': float,
    'true_ratio': float,
}
STUDIES = ("power", "coverage")
#Keys a power study needs when it does not name a table
SCENARIO_REQUIRED = ("outcome", "n_total", "institutions", "block_size")


def suggest_key(key:str, choices) -> Optional[str]:
    '''Closest known key within two edits, if any.'''
    distance, best = min((lev.distance(key.lower(), choice), choice) for choice in choices)
    return best if distance <= 2 else None


def parse_scenario(text:str, source:str="<scenario>") -> dict:
    '''
    Parses a flat key = value scenario. Lines starting with # are comments,
    unknown or repeated keys and missing required keys are errors.
    '''
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got '{raw.strip()}'.")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCENARIO_KEYS:
            raise UnknownKeyError(key, suggest_key(key, SCENARIO_KEYS))
        if key in values:
            raise ConfigError(f"{source}:{number}: '{key}' is set twice.")
        try:
            values[key] = SCENARIO_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"{source}:{number}: invalid value '{value}' for '{key}'.")

    if 'study' not in values:
        raise MissingKeyError('study')
    if values['study'] not in STUDIES:
        raise ConfigError(f"Unknown study '{values['study']}'. Choose from: {', '.join(STUDIES)}")
    if values['study'] == "power" and 'table' not in values:
        for key in SCENARIO_REQUIRED:
            if key not in values:
                raise MissingKeyError(key)
    return values


def read_scenario_file(path:str) -> dict:
    try:
        with open(path, encoding="utf-8") as file:
            text = file.read()
    except OSError as e:
        raise ConfigError(f"Cannot read scenario file '{path}': {e.strerror}")
    logger.debug(f"Parsing scenario file {path}")
    return parse_scenario(text, str(path))
