'''
Monte Carlo engine: scenario generators, the test registry and power estimation.
Every replication draws from streams keyed by (seed, scenario key, replication index),
so results do not depend on how replications are spread over workers.
'''

import concurrent.futures as cf
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit

from blocktrial.conditional import conditional_test
from blocktrial.moments import unconditional_test
from blocktrial.reference import TEST_FUNCTIONS
from blocktrial.sequential import GstPlan, run_sequential
from blocktrial.settings import DEFAULTS, calibration_settings, tolerance_settings
from blocktrial.streams import ReplicationStreams, make_rng, make_streams, scenario_key
from blocktrial.trial import ARM_A, OUTCOME_KINDS, TrialData, TrialDesign, randomize_trial
from blocktrial.utils.cache import Caching
from blocktrial.utils.exceptions import CalibrationError, ConfigError, InvalidDesignError

logger = logging.getLogger(__name__)

#Effect sizes and institution spreads used when a scenario leaves them unset
DEFAULT_EFFECT = {
    "continuous": 1.07,                 #difference in raw means
    "binary": math.log(0.7 / 0.3),      #log odds ratio, success 0.5 on B and 0.7 on A
    "survival": 1.5,                    #ratio of mean survival times, A over B
}
NULL_EFFECT = {"continuous": 0.0, "binary": 0.0, "survival": 1.0}
DEFAULT_INSTITUTION_SD = {"continuous": 2.0, "binary": 1.73}
#Added to every outcome in each quarter of the blocks when block effects are on
BLOCK_QUARTER_EFFECTS = (-1.0, -0.5, 0.5, 1.0)

DEFAULT_TESTS = {
    "continuous": ("conditional", "unconditional", "stratified_t", "t_test"),
    "binary": ("conditional", "unconditional", "mantel_haenszel", "pooled_2x2_chi2"),
    "survival": ("conditional_gehan", "stratified_gehan", "conditional_logrank",
                 "unconditional_logrank", "stratified_logrank", "logrank_test"),
}

#Stream index reserved for censoring calibration pilots, replications count up from 0
CALIBRATION_STREAM = 2**32 - 1

calibrations = Caching()


@dataclass
class Scenario:
    '''
    One simulation setting. effect and institution_sd fall back to the defaults for
    the outcome kind, null=True forces the no-effect value.
    '''
    outcome:str
    n_total:int
    institutions:int
    block_size:int
    name:str="scenario"
    block_effects:bool=False
    effect:Optional[float]=None
    null:bool=False
    institution_effects:bool=True
    institution_sd:Optional[float]=None
    chi2_df:int=1
    chi2_scale:float=1.0
    censoring:float=0.19
    replications:int=5000
    tests:tuple=()
    alpha:float=0.05
    looks:int=4
    c_final:Optional[float]=None
    sided:int=2
    censoring_horizon:Optional[float]=field(default=None, compare=False)

    def __post_init__(self):
        if self.outcome not in OUTCOME_KINDS:
            raise ConfigError(f"Unknown outcome '{self.outcome}'. Choose from: {', '.join(OUTCOME_KINDS)}")
        self.design #Validates block size and counts
        if self.n_total % self.block_size:
            raise InvalidDesignError(f"Sample size {self.n_total} is not a multiple of the block size {self.block_size}.")
        if self.institutions > self.n_total:
            raise InvalidDesignError(f"Cannot spread {self.n_total} patients over {self.institutions} institutions.")
        if self.replications < 1:
            raise ConfigError(f"Replications must be at least 1, got {self.replications}.")
        if not 0 <= self.censoring < 1:
            raise ConfigError(f"Censoring fraction must lie in [0, 1), got {self.censoring}.")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}.")
        self.tests = tuple(self.tests) or DEFAULT_TESTS[self.outcome]
        unknown = [test for test in self.tests if test not in TESTS]
        if unknown:
            raise ConfigError(f"Unknown tests: {', '.join(unknown)}")

    @property
    def design(self) -> TrialDesign:
        return TrialDesign(self.block_size, self.n_total // self.block_size, self.institutions)

    @property
    def treatment_effect(self) -> float:
        if self.null:
            return NULL_EFFECT[self.outcome]
        return DEFAULT_EFFECT[self.outcome] if self.effect is None else self.effect

    @property
    def spread(self) -> float:
        if not self.institution_effects:
            return 0.0
        return DEFAULT_INSTITUTION_SD.get(self.outcome, 0.0) if self.institution_sd is None else self.institution_sd

    @property
    def key(self) -> int:
        '''Stream key, depends only on what shapes the generated data.'''
        parts = (
            self.outcome, self.n_total, self.institutions, self.block_size, self.block_effects,
            round(self.treatment_effect, 12), self.institution_effects, round(self.spread, 12),
            self.chi2_df, self.chi2_scale, self.censoring,
        )
        return scenario_key(repr(parts))

    def to_dict(self) -> dict:
        values = asdict(self)
        values['tests'] = list(self.tests)
        return values


@dataclass
class PowerResult:
    '''Rejection proportions with Monte Carlo standard errors and mean runtime per test.'''
    scenario:str
    replications:int
    seed:int
    rejection:dict
    se:dict
    runtime:dict=field(default_factory=dict, compare=False)

    def to_dict(self, with_runtime:bool=False) -> dict:
        values = asdict(self)
        if not with_runtime:
            values.pop('runtime')
        return values


def _as_streams(rng:Union[ReplicationStreams, np.random.Generator]) -> ReplicationStreams:
    if isinstance(rng, ReplicationStreams):
        return rng
    return ReplicationStreams(rng, rng, rng, rng)


def assign_institutions(n_total:int, num_institutions:int, rng:np.random.Generator) -> np.ndarray:
    '''
    Arrival sequence of institution labels: every institution contributes floor(n/K)
    or ceil(n/K) patients, in uniformly random order.
    '''
    if num_institutions < 1 or num_institutions > n_total:
        raise InvalidDesignError(f"Cannot spread {n_total} patients over {num_institutions} institutions.")
    counts = np.full(num_institutions, n_total // num_institutions)
    extra = rng.choice(num_institutions, size=n_total % num_institutions, replace=False)
    counts[extra] += 1
    labels = np.repeat(np.arange(1, num_institutions + 1), counts)
    return rng.permutation(labels)


def _randomized(scenario:Scenario, streams:ReplicationStreams) -> TrialData:
    institutions = assign_institutions(scenario.n_total, scenario.institutions, streams.arrival)
    return randomize_trial(scenario.design, institutions, streams.assignment)


def _block_shift(scenario:Scenario) -> np.ndarray:
    '''Per-patient block effect, (-1, -0.5, 0.5, 1) by quarter of the blocks.'''
    design = scenario.design
    if not scenario.block_effects:
        return np.zeros(design.num_patients)
    quarters = (4 * np.arange(design.num_blocks)) // design.num_blocks
    return np.repeat(np.asarray(BLOCK_QUARTER_EFFECTS)[quarters], design.block_size)


def gen_continuous(scenario:Scenario, rng) -> TrialData:
    '''Lognormal outcomes with additive treatment, institution and block effects on the raw scale.'''
    streams = _as_streams(rng)
    data = _randomized(scenario, streams)
    effects = streams.institution.normal(0.0, scenario.spread, size=scenario.institutions) if scenario.spread else np.zeros(scenario.institutions)
    y = (
        np.exp(streams.outcome.standard_normal(data.design.num_patients))
        + effects[data.institutions - 1]
        + scenario.treatment_effect * (data.arms == ARM_A)
        + _block_shift(scenario)
    )
    return data.with_outcomes("continuous", y)


def gen_binary(scenario:Scenario, rng) -> TrialData:
    '''Logistic model: logit P(y=1) = effect * 1[arm A] + institution effect.'''
    streams = _as_streams(rng)
    data = _randomized(scenario, streams)
    effects = streams.institution.normal(0.0, scenario.spread, size=scenario.institutions) if scenario.spread else np.zeros(scenario.institutions)
    logit = scenario.treatment_effect * (data.arms == ARM_A) + effects[data.institutions - 1]
    y = (streams.outcome.random(data.design.num_patients) < expit(logit)).astype(float)
    return data.with_outcomes("binary", y)


def _institution_multipliers(scenario:Scenario, rng:np.random.Generator, size:int) -> np.ndarray:
    if not scenario.institution_effects:
        return np.ones(size)
    return scenario.chi2_scale * rng.chisquare(scenario.chi2_df, size=size)


def _survival_times(scenario:Scenario, on_a:np.ndarray, multipliers:np.ndarray, rng:np.random.Generator) -> np.ndarray:
    means = np.where(on_a, scenario.treatment_effect, 1.0) * multipliers
    return rng.exponential(means)


def calibrate_censoring(scenario:Scenario, seed:int, sample:int=DEFAULTS['calibration_sample'],
                        max_iter:int=DEFAULTS['calibration_max_iter'], tol:float=DEFAULTS['calibration_tol']) -> float:
    '''
    Horizon tau of the uniform censoring law on (0, tau] that censors the target fraction
    of a pilot population, found by bisection. Returns inf when no censoring is wanted.
    '''
    target = scenario.censoring
    if target <= 0:
        return math.inf

    rng = make_rng(seed, scenario.key, CALIBRATION_STREAM)
    on_a = np.arange(sample) % 2 == 0
    times = _survival_times(scenario, on_a, _institution_multipliers(scenario, rng, sample), rng)
    times = times[times > 0]

    def excess(horizon):
        #P(censored | T) = min(T / tau, 1) for censoring uniform on (0, tau]
        return np.mean(np.minimum(times / horizon, 1.0)) - target

    low = times.min() * 1e-3
    high = 2 * max(times.max(), times.mean() / target)
    try:
        horizon, info = bisect(excess, low, high, xtol=1e-12, rtol=1e-10, maxiter=max_iter, full_output=True, disp=False)
    except ValueError as error:
        raise CalibrationError(f"Could not bracket the censoring horizon for {scenario.name}: {error}")

    achieved = excess(horizon) + target
    if not info.converged or abs(achieved - target) > tol:
        raise CalibrationError(f"Censoring calibration for {scenario.name} reached {achieved:.4f} instead of {target:.4f}.")
    logger.info(f"Calibrated censoring horizon {horizon:.4f} for {scenario.name} after {info.iterations} iterations ({achieved:.4f} censored)")
    return float(horizon)


def with_horizon(scenario:Scenario, seed:int, config:dict=None) -> Scenario:
    '''Scenario with its censoring horizon filled in, calibrated once per (scenario, seed, calibration settings).'''
    if scenario.outcome != "survival" or scenario.censoring_horizon is not None:
        return scenario
    settings = calibration_settings(config)
    key = (scenario.key, seed, *settings.values())
    horizon = calibrations.get("censoring", key, lambda: calibrate_censoring(scenario, seed, **settings))
    return replace(scenario, censoring_horizon=horizon)


def gen_survival(scenario:Scenario, rng, seed:int=0, config:dict=None) -> TrialData:
    '''
    Exponential survival with mean ratio effect (A over B), multiplicative chi-square
    institution effects and uniform censoring, identical in both arms.
    '''
    if scenario.censoring_horizon is None:
        scenario = with_horizon(scenario, seed, config)
    streams = _as_streams(rng)
    data = _randomized(scenario, streams)
    multipliers = _institution_multipliers(scenario, streams.institution, scenario.institutions)
    times = _survival_times(scenario, data.arms == ARM_A, multipliers[data.institutions - 1], streams.outcome)

    horizon = scenario.censoring_horizon
    if math.isinf(horizon):
        censor = np.full_like(times, math.inf)
    else:
        censor = horizon * (1.0 - streams.outcome.random(times.size))
    events = times <= censor
    observed = np.minimum(times, censor)
    #Exponential draws can underflow to zero for tiny multipliers
    observed = np.maximum(observed, np.finfo(float).tiny)
    return data.with_outcomes("survival", observed, events)


GENERATORS = {
    "continuous": gen_continuous,
    "binary": gen_binary,
    "survival": gen_survival,
}


def generate(scenario:Scenario, streams:ReplicationStreams) -> TrialData:
    return GENERATORS[scenario.outcome](scenario, streams)


def _fixed(test:Callable[[TrialData, dict], float]) -> Callable[[TrialData, Scenario, dict], bool]:
    '''Wraps a p-value function into a two-sided rejection rule at the scenario's alpha.'''
    def rejects(data:TrialData, scenario:Scenario, tolerances:dict=None) -> bool:
        return test(data, tolerances or {}) < scenario.alpha
    return rejects


def _reference(test:Callable[[TrialData], float]) -> Callable[[TrialData, Scenario, dict], bool]:
    return _fixed(lambda data, tolerances: test(data))


def _sequential(mode:str, score_kind:str=None) -> Callable[[TrialData, Scenario, dict], bool]:
    def rejects(data:TrialData, scenario:Scenario, tolerances:dict=None) -> bool:
        plan = GstPlan.equally_spaced(scenario.looks, data.num_blocks, scenario.c_final, scenario.alpha, scenario.sided)
        return run_sequential(data, plan, score_kind, mode, **(tolerances or {})).rejected
    return rejects


#Each entry takes (data, scenario, tolerances), tolerances go to the conditional moments
TESTS = {
    "conditional": _fixed(lambda data, tolerances: conditional_test(data, **tolerances).p_two_sided),
    "unconditional": _fixed(lambda data, tolerances: unconditional_test(data).p_two_sided),
    "conditional_logrank": _fixed(lambda data, tolerances: conditional_test(data, "logrank", **tolerances).p_two_sided),
    "conditional_gehan": _fixed(lambda data, tolerances: conditional_test(data, "gehan", **tolerances).p_two_sided),
    "unconditional_logrank": _fixed(lambda data, tolerances: unconditional_test(data, "logrank").p_two_sided),
    "unconditional_gehan": _fixed(lambda data, tolerances: unconditional_test(data, "gehan").p_two_sided),
    **{name: _reference(function) for name, function in TEST_FUNCTIONS.items()},
    "gst_conditional": _sequential("conditional"),
    "gst_unconditional": _sequential("unconditional"),
    "gst_stratified_logrank": _sequential("stratified_logrank"),
}


def run_replication(scenario:Scenario, seed:int, replication:int, tolerances:dict=None) -> tuple[np.ndarray, np.ndarray]:
    '''Rejection flags and runtimes (seconds) of every scenario test on one simulated trial.'''
    data = generate(scenario, make_streams(seed, scenario.key, replication))
    flags = np.zeros(len(scenario.tests), dtype=bool)
    seconds = np.zeros(len(scenario.tests))
    for i, name in enumerate(scenario.tests):
        start = time.perf_counter()
        flags[i] = TESTS[name](data, scenario, tolerances)
        seconds[i] = time.perf_counter() - start
    return flags, seconds


def _run_chunk(scenario:Scenario, seed:int, replications:range, tolerances:dict=None) -> tuple[np.ndarray, np.ndarray]:
    counts = np.zeros(len(scenario.tests), dtype=np.int64)
    seconds = np.zeros(len(scenario.tests))
    for replication in replications:
        flags, spent = run_replication(scenario, seed, replication, tolerances)
        counts += flags
        seconds += spent
    return counts, seconds


def _chunks(total:int, workers:int) -> list[range]:
    size = max(1, math.ceil(total / (workers * 4)))
    return [range(start, min(start + size, total)) for start in range(0, total, size)]


def estimate_power(scenario:Scenario, seed:int, workers:int=1, config:dict=None) -> PowerResult:
    '''
    Rejection proportion of every scenario test over its replications.
    Counts are summed, so the result is identical for any worker count.
    config supplies the numeric tolerances and the censoring calibration settings.
    '''
    scenario = with_horizon(scenario, seed, config)
    tolerances = tolerance_settings(config)
    replications = scenario.replications
    counts = np.zeros(len(scenario.tests), dtype=np.int64)
    seconds = np.zeros(len(scenario.tests))
    logger.info(f"Simulating {scenario.name}: {replications} replications of {', '.join(scenario.tests)} on {workers} worker(s)")

    if workers <= 1:
        counts, seconds = _run_chunk(scenario, seed, range(replications), tolerances)
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_chunk, scenario, seed, chunk, tolerances) for chunk in _chunks(replications, workers)]
            for future in cf.as_completed(futures):
                chunk_counts, chunk_seconds = future.result()
                counts += chunk_counts
                seconds += chunk_seconds

    rejection = {}
    se = {}
    runtime = {}
    for name, count, spent in zip(scenario.tests, counts, seconds):
        p = count / replications
        rejection[name] = float(p)
        se[name] = float(math.sqrt(p * (1 - p) / replications))
        runtime[name] = float(spent / replications)

    return PowerResult(scenario.name, replications, seed, rejection, se, runtime)
