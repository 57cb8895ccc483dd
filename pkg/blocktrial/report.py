'''
Machine-readable analysis reports. A report serializes to JSON with sorted keys:

    mode, score_kind, statistic (S_A), mean, variance, z, p_one_sided, p_two_sided,
    p_value (for the requested sidedness), effect_D, degenerate, sided, alpha, rejected,
    arm_totals (n_kA per institution), institution_totals (N_.k), design, reference,
    seed, version, config
'''

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

from blocktrial import __version__
from blocktrial.conditional import conditional_test
from blocktrial.moments import TestResult, unconditional_test
from blocktrial.reference import reference_tests
from blocktrial.scores import DEFAULT_SCORES, benefit_sign
from blocktrial.settings import tolerance_settings
from blocktrial.trial import TrialData, tabulate_counts
from blocktrial.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

MODES = ("conditional", "unconditional")


@dataclass
class AnalysisReport:
    mode:str
    score_kind:str
    statistic:float
    mean:float
    variance:float
    z:float
    p_one_sided:float
    p_two_sided:float
    p_value:float
    effect_D:float
    degenerate:bool
    sided:int
    alpha:float
    rejected:bool
    arm_totals:list
    institution_totals:list
    design:dict
    reference:dict=field(default_factory=dict)
    seed:Optional[int]=None
    version:str=__version__
    config:dict=field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, values:dict) -> "AnalysisReport":
        return cls(**values)

    @classmethod
    def from_json(cls, text:str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))


def run_test(data:TrialData, mode:str, score_kind:str, **tolerances) -> TestResult:
    if mode == "conditional":
        return conditional_test(data, score_kind, **tolerances)
    elif mode == "unconditional":
        return unconditional_test(data, score_kind)
    raise ConfigError(f"Unknown analysis mode '{mode}'. Choose from: {', '.join(MODES)}")


def analyze(data:TrialData, mode:str="conditional", score_kind:str=None, sided:int=2, alpha:float=0.05,
            with_reference:bool=False, seed:int=None, config:dict=None) -> AnalysisReport:
    '''Runs one randomization test on a trial and packs everything needed to reproduce it.'''
    if sided not in (1, 2):
        raise ConfigError(f"sided must be 1 or 2, got {sided}.")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}.")
    score_kind = score_kind or DEFAULT_SCORES[data.outcome_kind]
    config = dict(config or {})

    result = run_test(data, mode, score_kind, **tolerance_settings(config))
    counts = tabulate_counts(data)
    orientation = benefit_sign(score_kind)
    p_value = result.p_value(sided, orientation)

    reference = reference_tests(data) if with_reference else {}
    logger.info(f"{mode.capitalize()} {score_kind} test: S_A={result.statistic:.6g}, z={result.z:.4f}, p={p_value:.4g}")

    return AnalysisReport(
        mode=result.mode,
        score_kind=score_kind,
        statistic=result.statistic,
        mean=result.mean,
        variance=result.variance,
        z=result.z,
        p_one_sided=result.p_one_sided,
        p_two_sided=result.p_two_sided,
        p_value=p_value,
        effect_D=result.effect_D,
        degenerate=result.degenerate,
        sided=sided,
        alpha=alpha,
        rejected=p_value < alpha,
        arm_totals=[int(n) for n in counts.arm_totals],
        institution_totals=[int(n) for n in counts.institution_totals],
        design={
            'block_size': data.block_size,
            'num_blocks': data.num_blocks,
            'num_institutions': data.num_institutions,
            'num_patients': data.design.num_patients,
            'outcome': data.outcome_kind,
        },
        reference=reference,
        seed=seed,
        config=config,
    )
