'''
Confidence interval for the ratio of two mortality rates (deaths per unit follow-up)
by rerandomizing the ordered observations to the arms with rate-tilted probabilities.
Arm A is treatment 1.
'''

import concurrent.futures as cf
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from blocktrial.simulation import Scenario, gen_survival, with_horizon
from blocktrial.streams import make_rng, make_streams
from blocktrial.trial import ARM_A, TrialData
from blocktrial.utils.exceptions import ConfigError, InvalidDataError, OutcomeKindError, UndefinedRatioError

logger = logging.getLogger(__name__)

MIN_REPS = 100
DEFAULT_REPS = 10000
#Discard share above which the interval carries a warning
DISCARD_WARNING = 0.05
RERANDOMIZATION_STREAM = 1


@dataclass
class MortalitySummary:
    deaths_1:int
    deaths_2:int
    followup_1:float
    followup_2:float
    m_1:float
    m_2:float
    ratio:float


@dataclass
class RerandomizationInterval:
    low:float
    high:float
    level:float
    reps:int
    discarded:int
    summary:MortalitySummary
    warning:Optional[str]=None

    @property
    def discard_fraction(self) -> float:
        return self.discarded / self.reps

    def to_dict(self) -> dict:
        values = asdict(self)
        values['discard_fraction'] = self.discard_fraction
        return values


@dataclass
class CoverageResult:
    trials:int
    evaluated:int
    covered:int
    true_ratio:float
    level:float
    reps:int
    mean_discard_fraction:float

    @property
    def coverage(self) -> float:
        return self.covered / self.evaluated if self.evaluated else math.nan

    @property
    def se(self) -> float:
        p = self.coverage
        return math.sqrt(p * (1 - p) / self.evaluated) if self.evaluated else math.nan

    def to_dict(self) -> dict:
        values = asdict(self)
        values['coverage'] = self.coverage
        values['se'] = self.se
        return values


def _survival_arrays(data:TrialData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if data.outcome_kind != "survival":
        raise OutcomeKindError(f"Mortality ratios need survival outcomes, got {data.outcome_kind}.")
    return data.y, data.events, data.arms == ARM_A


def summarize(times, events, on_1) -> MortalitySummary:
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    on_1 = np.asarray(on_1, dtype=bool)
    deaths_1 = int(np.sum(events & on_1))
    deaths_2 = int(np.sum(events & ~on_1))
    followup_1 = float(np.sum(times[on_1]))
    followup_2 = float(np.sum(times[~on_1]))
    if followup_1 <= 0 or followup_2 <= 0:
        raise UndefinedRatioError("Both arms need positive follow-up time.")
    if deaths_2 == 0:
        raise UndefinedRatioError("No deaths in arm B, the mortality ratio is undefined.")
    m_1 = deaths_1 / followup_1
    m_2 = deaths_2 / followup_2
    return MortalitySummary(deaths_1, deaths_2, followup_1, followup_2, m_1, m_2, m_1 / m_2)


def mortality_ratio(data:TrialData) -> MortalitySummary:
    '''Deaths per unit follow-up on arm A over the same on arm B.'''
    return summarize(*_survival_arrays(data))


def rerandomize(times, events, n1:int, n2:int, ratio:float, reps:int, rng:np.random.Generator) -> np.ndarray:
    '''
    reps rerandomized mortality ratios. Observations are taken in time order, deaths
    before censorings at ties. A death goes to arm 1 with probability
    ratio*n1/(ratio*n1 + n2), a censoring with n1/(n1 + n2), where n1 and n2 are the
    numbers still at risk. Realizations without arm 2 deaths are NaN.
    '''
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if n1 + n2 != times.size or n1 < 0 or n2 < 0:
        raise InvalidDataError(f"Risk sets {n1} + {n2} do not add up to {times.size} observations.")

    order = np.lexsort((~events, times))
    at_risk_1 = np.full(reps, n1, dtype=np.int64)
    at_risk_2 = np.full(reps, n2, dtype=np.int64)
    deaths_1 = np.zeros(reps, dtype=np.int64)
    deaths_2 = np.zeros(reps, dtype=np.int64)
    followup_1 = np.zeros(reps)
    followup_2 = np.zeros(reps)

    for index in order:
        tilt = ratio if events[index] else 1.0
        weight_1 = tilt * at_risk_1
        total = weight_1 + at_risk_2
        #An empty risk set forces the observation to the other arm
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(at_risk_2 == 0, 1.0, np.where(at_risk_1 == 0, 0.0, weight_1 / total))
        to_1 = rng.random(reps) < p
        to_2 = ~to_1

        followup_1 += times[index] * to_1
        followup_2 += times[index] * to_2
        if events[index]:
            deaths_1 += to_1
            deaths_2 += to_2
        at_risk_1 -= to_1
        at_risk_2 -= to_2

    with np.errstate(invalid="ignore", divide="ignore"):
        realized = (deaths_1 / followup_1) / (deaths_2 / followup_2)
    realized[(deaths_2 == 0) | (followup_1 <= 0)] = np.nan
    return realized


def rerandomize_once(times, events, n1:int, n2:int, ratio:float, rng:np.random.Generator) -> float:
    return float(rerandomize(times, events, n1, n2, ratio, 1, rng)[0])


def confidence_interval(data:TrialData, rng:np.random.Generator, reps:int=DEFAULT_REPS, level:float=0.95) -> RerandomizationInterval:
    '''Percentile interval of the rerandomized mortality ratio distribution.'''
    if reps < MIN_REPS:
        raise ConfigError(f"Need at least {MIN_REPS} rerandomizations, got {reps}.")
    if not 0 < level < 1:
        raise ConfigError(f"Level must lie in (0, 1), got {level}.")

    times, events, on_1 = _survival_arrays(data)
    summary = summarize(times, events, on_1)
    n1 = int(np.sum(on_1))
    realized = rerandomize(times, events, n1, times.size - n1, summary.ratio, reps, rng)

    valid = realized[np.isfinite(realized)]
    discarded = reps - valid.size
    if valid.size == 0:
        raise UndefinedRatioError("Every rerandomization lost all arm B deaths.")

    tail = (1 - level) / 2
    low, high = np.quantile(valid, [tail, 1 - tail])

    warning = None
    if discarded / reps > DISCARD_WARNING:
        warning = f"{discarded} of {reps} rerandomizations had no arm B deaths and were discarded."
        logger.warning(warning)

    return RerandomizationInterval(float(low), float(high), level, reps, discarded, summary, warning)


def coverage_scenario(true_ratio:float, n_total:int=240, institutions:int=10, block_size:int=4, censoring:float=0.19) -> Scenario:
    '''Exponential trial without institution effects whose A over B mortality ratio is true_ratio.'''
    return Scenario(
        outcome="survival", n_total=n_total, institutions=institutions, block_size=block_size,
        name=f"coverage_ratio{true_ratio:g}", effect=1 / true_ratio, institution_effects=False,
        censoring=censoring, replications=1,
    )


def _coverage_chunk(scenario:Scenario, seed:int, trials:range, reps:int, level:float, true_ratio:float) -> tuple[int, int, int]:
    evaluated = covered = 0
    discards = 0
    for trial in trials:
        data = gen_survival(scenario, make_streams(seed, scenario.key, trial))
        try:
            interval = confidence_interval(data, make_rng(seed, scenario.key, trial, RERANDOMIZATION_STREAM), reps, level)
        except UndefinedRatioError:
            continue
        evaluated += 1
        covered += interval.low <= true_ratio <= interval.high
        discards += interval.discarded
    return evaluated, covered, discards


def ci_coverage(seed:int, trials:int=500, reps:int=1000, true_ratio:float=1.5, level:float=0.95,
                workers:int=1, scenario:Scenario=None, config:dict=None) -> CoverageResult:
    '''Share of simulated trials whose percentile interval contains the true mortality ratio.'''
    if trials < 1:
        raise ConfigError(f"Need at least one trial, got {trials}.")
    scenario = with_horizon(scenario or coverage_scenario(true_ratio), seed, config)
    logger.info(f"Coverage study: {trials} trials x {reps} rerandomizations, true ratio {true_ratio}")

    size = max(1, math.ceil(trials / (max(workers, 1) * 4)))
    chunks = [range(start, min(start + size, trials)) for start in range(0, trials, size)]
    evaluated = covered = 0
    discards = 0
    if workers <= 1:
        evaluated, covered, discards = _coverage_chunk(scenario, seed, range(trials), reps, level, true_ratio)
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_coverage_chunk, scenario, seed, chunk, reps, level, true_ratio) for chunk in chunks]
            for future in cf.as_completed(futures):
                chunk_evaluated, chunk_covered, chunk_discards = future.result()
                evaluated += chunk_evaluated
                covered += chunk_covered
                discards += chunk_discards

    if evaluated < trials:
        logger.warning(f"{trials - evaluated} simulated trials had no arm B deaths and were skipped")
    #Integer counts keep the result identical for any worker count
    mean_discard = discards / (evaluated * reps) if evaluated else math.nan
    return CoverageResult(trials, evaluated, int(covered), true_ratio, level, reps, mean_discard)
