'''
Exhaustive enumeration of the permuted block sample space for small designs.
Serves as ground truth for the normal approximations in moments and conditional.
'''

import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from blocktrial.moments import arm_a_sum
from blocktrial.scores import ScoreVector, score_trial
from blocktrial.settings import DEFAULTS
from blocktrial.trial import ARM_A, TrialData, TrialDesign
from blocktrial.utils.exceptions import EnumerationCapError, InconsistentConditioningError, InvalidDataError

logger = logging.getLogger(__name__)

#Distribution keys are rounded to this many decimals of the centred score unit
KEY_DECIMALS = 9
#Tie tolerance for exact p-values, in the same unit
TIE_TOL = 1e-9
#Default cap for product enumeration of joint moments
MOMENTS_CAP = 10**6


@dataclass
class EnumerationResult:
    '''
    Exact randomization distribution of S_A. When unconditional,
    conditional_points equals total_points and the distribution covers every assignment.
    '''
    total_points:int
    conditional_points:int
    distribution:dict
    exact_mean:float
    exact_var:float
    observed:Optional[float]=None
    p_two_sided:Optional[float]=None
    conditioned_on:Optional[list]=None


@dataclass
class ExactMoments:
    '''Exact moments of (S_A, n_A) over every balanced assignment.'''
    mean_S:float
    var_S:float
    mean_n:np.ndarray
    var_n:np.ndarray
    cov_Sn:np.ndarray
    points:int=field(default=0)


def block_assignments(block_size:int) -> np.ndarray:
    '''Every balanced arm pattern of one block, lexicographic in the positions given arm A.'''
    half = block_size // 2
    patterns = []
    for chosen in itertools.combinations(range(block_size), half):
        row = np.zeros(block_size, dtype=np.int8)
        row[list(chosen)] = ARM_A
        patterns.append(row)
    return np.array(patterns)


def full_space_size(design:TrialDesign) -> int:
    return math.comb(design.block_size, design.block_size // 2) ** design.num_blocks


def _check_cap(design:TrialDesign, cap:int):
    size = full_space_size(design)
    if size > cap:
        raise EnumerationCapError(size, cap)
    return size


def enumerate_assignments(design:TrialDesign, cap:int=DEFAULTS['enumeration_cap']) -> Iterator[np.ndarray]:
    '''Yields every balanced arm vector of the design, block 1 varying slowest.'''
    _check_cap(design, cap)
    patterns = block_assignments(design.block_size)
    for choice in itertools.product(range(len(patterns)), repeat=design.num_blocks):
        yield np.concatenate([patterns[i] for i in choice])


def _check_counts(block_counts) -> np.ndarray:
    counts = np.asarray(block_counts, dtype=np.int64)
    if counts.ndim != 2:
        raise InvalidDataError("Block counts must be a P x K table.")
    sizes = set(counts.sum(axis=1).tolist())
    if len(sizes) != 1 or sizes.pop() % 2 or np.any(counts < 0):
        raise InvalidDataError("Every block must hold the same even number of patients.")
    return counts


def _block_options(row:np.ndarray, half:int) -> list[tuple[tuple, int]]:
    '''
    Every arm A split (a_1..a_K) of one block with sum N/2 and its
    number of assignments, the product of C(N_jk, a_k).
    '''
    options = []
    for split in itertools.product(*(range(int(n) + 1) for n in row)):
        if sum(split) != half:
            continue
        weight = 1
        for n, a in zip(row, split):
            weight *= math.comb(int(n), a)
        options.append((split, weight))
    return options


def sample_space_size(block_counts) -> int:
    '''Number of balanced assignments, summed over every arm A split of each block.'''
    counts = _check_counts(block_counts)
    half = int(counts[0].sum()) // 2
    size = 1
    for row in counts:
        size *= sum(weight for _, weight in _block_options(row, half))
    return size


def conditional_space_size(block_counts, totals) -> int:
    '''Number of balanced assignments whose per-institution arm A totals equal totals.'''
    counts = _check_counts(block_counts)
    target = tuple(int(t) for t in totals)
    half = int(counts[0].sum()) // 2
    if len(target) != counts.shape[1]:
        raise InconsistentConditioningError(f"Expected {counts.shape[1]} institution totals, got {len(target)}.")
    if sum(target) != half * counts.shape[0] or any(t < 0 or t > n for t, n in zip(target, counts.sum(axis=0))):
        raise InconsistentConditioningError(f"Institution totals {list(target)} are impossible for this block layout.")

    states = {tuple([0] * len(target)): 1}
    for row in counts:
        options = _block_options(row, half)
        merged = defaultdict(int)
        for partial, ways in states.items():
            for split, weight in options:
                reached = tuple(p + a for p, a in zip(partial, split))
                if all(r <= t for r, t in zip(reached, target)):
                    merged[reached] += ways * weight
        states = merged
    return states.get(target, 0)


def _block_sums(scores:ScoreVector, data:TrialData) -> tuple[np.ndarray, np.ndarray]:
    '''Per block and per pattern: S_A^j (P x C) and n_A^j (P x C x K).'''
    patterns = block_assignments(data.block_size).astype(float)
    indicators = data.indicators()
    sums = scores.values @ patterns.T
    counts = np.einsum('cn,pnk->pck', patterns, indicators)
    return sums, np.rint(counts).astype(np.int64)


def exact_distribution(data:TrialData, score_kind:str=None, scores:ScoreVector=None,
                       condition_on=None, cap:int=DEFAULTS['enumeration_cap']) -> EnumerationResult:
    '''
    Exact distribution of S_A over all balanced assignments, optionally restricted
    to those with per-institution arm A totals equal to condition_on.
    '''
    total_points = _check_cap(data.design, cap)
    if scores is None:
        scores = score_trial(data, score_kind)

    #S_A = total/2 + unit * (A sum of block-centred scores / unit)
    centred = scores.values - scores.block_sums()[:, None] / data.block_size
    peak = float(np.max(np.abs(centred)))
    #Power of two, so dividing by it is exact
    unit = 2.0 ** np.ceil(np.log2(peak)) if peak > 0 else 1.0
    offset = float(scores.values.sum()) / 2
    sums, counts = _block_sums(ScoreVector(centred / unit, scores.kind), data)

    target = None
    if condition_on is not None:
        target = tuple(int(t) for t in condition_on)
        if len(target) != data.num_institutions:
            raise InconsistentConditioningError(f"Expected {data.num_institutions} institution totals, got {len(target)}.")

    #state: (rounded S_A so far, arm A totals so far) -> number of assignments
    states = {(0.0, tuple([0] * data.num_institutions) if target else ()): 1}
    for j in range(data.num_blocks):
        merged = defaultdict(int)
        for (partial_sum, partial_n), ways in states.items():
            for s, n in zip(sums[j], counts[j]):
                if target:
                    reached = tuple(p + int(a) for p, a in zip(partial_n, n))
                    if any(r > t for r, t in zip(reached, target)):
                        continue
                else:
                    reached = ()
                merged[(round(partial_sum + s, KEY_DECIMALS), reached)] += ways
        states = merged
        logger.debug(f"Block {j + 1}: {len(states)} partial states")

    if target:
        states = {key: ways for key, ways in states.items() if key[1] == target}
    conditional_points = sum(states.values())
    if conditional_points == 0:
        raise InconsistentConditioningError(f"No assignment reaches institution totals {list(target)}.")

    distribution = defaultdict(int)
    for (value, _), ways in states.items():
        distribution[value] += ways
    keys = np.array(sorted(distribution))
    weights = np.array([distribution[v] for v in keys], dtype=float) / conditional_points
    centre = float(keys @ weights)
    exact_mean = offset + unit * centre
    exact_var = unit ** 2 * float(((keys - centre) ** 2) @ weights)

    observed = p_value = None
    if data.is_assigned:
        observed = arm_a_sum(scores, data)
        distance = abs((observed - offset) / unit - centre)
        extreme = np.abs(keys - centre) >= distance - TIE_TOL
        p_value = float(min(1.0, weights[extreme].sum()))

    return EnumerationResult(
        total_points=total_points,
        conditional_points=conditional_points,
        distribution={offset + unit * float(v): distribution[v] / conditional_points for v in keys},
        exact_mean=exact_mean,
        exact_var=exact_var,
        observed=observed,
        p_two_sided=p_value,
        conditioned_on=list(target) if target else None,
    )


def exact_joint_moments(scores:ScoreVector, data:TrialData, cap:int=MOMENTS_CAP) -> ExactMoments:
    '''
    Mean and covariance of (S_A, n_A) by enumerating the full product space,
    built up one block at a time by broadcasting.
    '''
    points = _check_cap(data.design, cap)
    sums, counts = _block_sums(scores, data)

    total = sums[0]
    totals_n = counts[0].astype(float)
    for j in range(1, data.num_blocks):
        total = (total[:, None] + sums[j][None, :]).ravel()
        totals_n = (totals_n[:, None, :] + counts[j][None, :, :]).reshape(-1, data.num_institutions)

    joint = np.column_stack([total, totals_n])
    mean = joint.mean(axis=0)
    centered = joint - mean
    covariance = centered.T @ centered / joint.shape[0]

    return ExactMoments(
        mean_S=float(mean[0]),
        var_S=float(covariance[0, 0]),
        mean_n=mean[1:],
        var_n=covariance[1:, 1:],
        cov_Sn=covariance[0, 1:],
        points=points,
    )
