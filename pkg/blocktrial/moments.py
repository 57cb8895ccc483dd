import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from blocktrial.scores import ScoreVector, score_trial
from blocktrial.trial import ARM_A, TrialData, tabulate_counts
from blocktrial.utils.exceptions import ImpossibleStateError, InvalidDataError, InvalidDesignError

logger = logging.getLogger(__name__)

#Variances below this fraction of the unconditional variance count as zero
ZERO_VARIANCE_TOL = 1e-12
#Allowed gap between S_A and its mean when the variance is zero, relative to sqrt(Var(S_A))
DEGENERATE_GAP_TOL = 1e-6
#Rounding allowance on that gap, relative to the summed absolute scores
ROUNDING_TOL = 1e-12


@dataclass
class BlockMoments:
    '''
    Randomization moments of (S_A^j, n_A^j) for one block.
    total is the block's score sum, counts the K-vector N_j.
    '''
    mean_S:float
    var_S:float
    mean_n:np.ndarray
    var_n:np.ndarray
    cov_Sn:np.ndarray
    total:float=0.0
    counts:Optional[np.ndarray]=None


@dataclass
class JointMoments:
    '''Moments summed over independent blocks, plus the blocks themselves when kept.'''
    mean_S:float
    var_S:float
    mean_n:np.ndarray
    var_n:np.ndarray
    cov_Sn:np.ndarray
    total_S:float
    grand_counts:np.ndarray
    blocks:list=field(default_factory=list)

    @property
    def num_institutions(self) -> int:
        return len(self.mean_n)


@dataclass
class TestResult:
    '''
    Outcome of a conditional or unconditional randomization test.
    p_one_sided is the upper tail, P(Z >= z).
    '''
    statistic:float
    mean:float
    variance:float
    z:float
    p_one_sided:float
    p_two_sided:float
    effect_D:float
    mode:str
    degenerate:bool=False

    def p_value(self, sided:int=2, orientation:int=1) -> float:
        '''
        Two-sided p, or the one-sided p in the direction given by orientation
        (+1 tests large statistics, -1 small ones).
        '''
        if sided == 2:
            return self.p_two_sided
        if self.degenerate:
            return 1.0
        return float(norm.sf(orientation * self.z))

    def rejects(self, alpha:float, sided:int=2, orientation:int=1) -> bool:
        return self.p_value(sided, orientation) < alpha

    def to_dict(self) -> dict:
        return asdict(self)


def spread_factor(block_size:int) -> float:
    '''N/(4(N-1)), the common factor of every block moment.'''
    return block_size / (4 * (block_size - 1))


def delta_moments(block_size:int) -> dict:
    '''Mean, variance and pairwise covariance of one assignment indicator inside a block.'''
    if int(block_size) != block_size or block_size < 2 or block_size % 2:
        raise InvalidDesignError(f"Block size must be a positive even integer, got {block_size}.")
    return {
        'mean': 0.5,
        'variance': 0.25,
        'covariance': -1 / (4 * (block_size - 1)),
    }


def block_score_moments(scores) -> dict:
    scores = np.asarray(scores, dtype=float)
    size = scores.size
    if size < 2:
        raise InvalidDesignError(f"A block needs at least 2 patients, got {size}.")
    centered = scores - scores.mean()
    return {
        'mean_S': size * scores.mean() / 2,
        'var_S': spread_factor(size) * float(centered @ centered),
    }


def block_joint_moments(scores, institutions, num_institutions:int) -> BlockMoments:
    '''Moments of (S_A^j, n_A^j) for one block with institution labels 1..K.'''
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(institutions)
    if labels.shape != scores.shape:
        raise InvalidDataError("Scores and institution labels differ in length.")
    if labels.size and (labels.min() < 1 or labels.max() > num_institutions):
        raise InvalidDataError(f"Institution labels must lie in 1..{num_institutions}.")

    size = scores.size
    score_part = block_score_moments(scores)
    c = spread_factor(size)
    indicators = (labels[:, None] == np.arange(1, num_institutions + 1)).astype(float)
    counts = indicators.sum(axis=0)
    centered = scores - scores.mean()

    return BlockMoments(
        mean_S=score_part['mean_S'],
        var_S=score_part['var_S'],
        mean_n=counts / 2,
        var_n=c * (np.diag(counts) - np.outer(counts, counts) / size),
        cov_Sn=c * (centered @ indicators),
        total=float(scores.sum()),
        counts=counts,
    )


def aggregate(blocks:list[BlockMoments]) -> JointMoments:
    '''Sums block moments, blocks are independent so every component adds.'''
    if not blocks:
        raise InvalidDataError("Need at least one block to aggregate.")
    sizes = {len(block.mean_n) for block in blocks}
    if len(sizes) != 1:
        raise InvalidDataError(f"Blocks disagree on the number of institutions: {sorted(sizes)}")

    return JointMoments(
        mean_S=sum(block.mean_S for block in blocks),
        var_S=sum(block.var_S for block in blocks),
        mean_n=np.sum([block.mean_n for block in blocks], axis=0),
        var_n=np.sum([block.var_n for block in blocks], axis=0),
        cov_Sn=np.sum([block.cov_Sn for block in blocks], axis=0),
        total_S=sum(block.total for block in blocks),
        grand_counts=np.sum([block.counts for block in blocks], axis=0),
        blocks=list(blocks),
    )


def joint_moments(scores:ScoreVector, data:TrialData) -> JointMoments:
    '''
    Aggregated moments for the whole trial in one pass over the P x N x K indicator array.
    Gives the same numbers as aggregate() over block_joint_moments(), without keeping the blocks.
    '''
    y = scores.values
    if y.shape != (data.num_blocks, data.block_size):
        raise InvalidDataError("Scores do not match the trial layout.")

    c = spread_factor(data.block_size)
    indicators = data.indicators()
    centered = y - y.mean(axis=1, keepdims=True)
    block_counts = indicators.sum(axis=1)
    grand_counts = block_counts.sum(axis=0)

    return JointMoments(
        mean_S=float(y.sum()) / 2,
        var_S=c * float(np.sum(centered ** 2)),
        mean_n=grand_counts / 2,
        var_n=c * (np.diag(grand_counts) - block_counts.T @ block_counts / data.block_size),
        cov_Sn=c * np.einsum('pn,pnk->k', centered, indicators),
        total_S=float(y.sum()),
        grand_counts=grand_counts,
    )


def arm_a_sum(scores:ScoreVector, data:TrialData) -> float:
    '''S_A, the score total of the patients on arm A.'''
    on_a = data.by_block(data.arms) == ARM_A
    return float(np.sum(scores.values[on_a]))


def build_result(statistic:float, mean:float, variance:float, total:float, num_patients:int, scale:float, mode:str,
                 magnitude:float=0.0) -> TestResult:
    '''
    Turns a statistic and its randomization moments into z and p values.
    scale is the unconditional Var(S_A), magnitude the summed absolute scores.
    A zero variance is legal only when the statistic sits on its mean.
    '''
    effect = (2 / num_patients) * (2 * statistic - total)
    if variance <= ZERO_VARIANCE_TOL * scale:
        gap = abs(statistic - mean)
        if gap > DEGENERATE_GAP_TOL * np.sqrt(scale) + ROUNDING_TOL * magnitude:
            raise ImpossibleStateError(f"Randomization variance is zero but S_A={statistic:.6g} differs from its mean {mean:.6g}.")
        logger.debug(f"Zero randomization variance in {mode} test, reporting p = 1")
        return TestResult(statistic, mean, 0.0, 0.0, 1.0, 1.0, effect, mode, degenerate=True)

    z = (statistic - mean) / np.sqrt(variance)
    return TestResult(
        statistic=statistic,
        mean=mean,
        variance=variance,
        z=float(z),
        p_one_sided=float(norm.sf(z)),
        p_two_sided=float(min(1.0, 2 * norm.sf(abs(z)))),
        effect_D=effect,
        mode=mode,
    )


def unconditional_test(data:TrialData, score_kind:str=None, scores:ScoreVector=None) -> TestResult:
    '''Normal approximation to the permuted block randomization distribution of S_A.'''
    tabulate_counts(data)
    if scores is None:
        scores = score_trial(data, score_kind)
    moments = joint_moments(scores, data)
    statistic = arm_a_sum(scores, data)
    return build_result(
        statistic=statistic,
        mean=moments.mean_S,
        variance=moments.var_S,
        total=moments.total_S,
        num_patients=data.design.num_patients,
        scale=moments.var_S,
        mode="unconditional",
        magnitude=float(np.sum(np.abs(scores.values))),
    )
