import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from blocktrial.moments import JointMoments, TestResult, arm_a_sum, build_result, joint_moments
from blocktrial.scores import ScoreVector, score_trial
from blocktrial.settings import DEFAULTS
from blocktrial.trial import TrialData, tabulate_counts
from blocktrial.utils.exceptions import InconsistentConditioningError, NumericFailureError

logger = logging.getLogger(__name__)

__all__ = ["ConditionalMoments", "TestResult", "pseudo_inverse", "conditional_moments", "conditional_test"]

SYMMETRY_TOL = 1e-10
#Default relative singular value cutoff, well above rounding noise and well below
#the smallest genuine eigenvalue of any Var(n_A) a real layout produces
PINV_RTOL = 1e-10


@dataclass
class ConditionalMoments:
    cond_mean:float
    cond_var:float
    rank_var_n:int
    deviation_vector:np.ndarray


def _cutoff(rtol:Optional[float]) -> float:
    return rtol if rtol is not None else PINV_RTOL


def pseudo_inverse(matrix, rtol:float=None) -> np.ndarray:
    '''
    Moore-Penrose inverse of a symmetric positive semidefinite matrix.
    Singular values below rtol * largest singular value are treated as zero.
    '''
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NumericFailureError(f"Expected a square matrix, got shape {matrix.shape}.")
    scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise NumericFailureError("Matrix is not symmetric.")
    return np.linalg.pinv(matrix, _cutoff(rtol), hermitian=True)


def _rank(matrix:np.ndarray, rtol:Optional[float]) -> int:
    eigenvalues = np.abs(np.linalg.eigvalsh(matrix))
    if eigenvalues.size == 0 or eigenvalues.max() == 0:
        return 0
    return int(np.sum(eigenvalues > _cutoff(rtol) * eigenvalues.max()))


def conditional_moments(moments:JointMoments, observed_n, rtol:float=None,
                        conditioning_tol:float=DEFAULTS['conditioning_tol'],
                        clamp_tol:float=DEFAULTS['variance_clamp_tol']) -> ConditionalMoments:
    '''
    Mean and variance of S_A given the per-institution arm A totals n_A,
    from multivariate normal conditioning with a generalized inverse of Var(n_A).
    '''
    observed = np.asarray(observed_n, dtype=float)
    grand = np.asarray(moments.grand_counts, dtype=float)
    if observed.shape != grand.shape:
        raise InconsistentConditioningError(f"Expected {grand.size} institution totals, got {observed.size}.")
    if np.any(observed < 0) or np.any(observed > grand):
        raise InconsistentConditioningError("Institution totals must lie between 0 and the institution's patient count.")
    if not np.isclose(observed.sum(), grand.sum() / 2):
        raise InconsistentConditioningError(f"Institution totals add up to {observed.sum():g}, expected {grand.sum() / 2:g}.")

    deviation = observed - moments.mean_n
    inverse = pseudo_inverse(moments.var_n, rtol)

    #n_A outside the column space of Var(n_A) cannot arise from the design
    residual = deviation - moments.var_n @ (inverse @ deviation)
    if np.linalg.norm(residual) > conditioning_tol * max(1.0, np.linalg.norm(deviation)):
        raise InconsistentConditioningError("Observed institution totals are impossible for this block layout.")

    cond_mean = moments.mean_S + moments.cov_Sn @ inverse @ deviation
    cond_var = moments.var_S - moments.cov_Sn @ inverse @ moments.cov_Sn

    if cond_var < 0:
        if cond_var < -clamp_tol * moments.var_S:
            raise NumericFailureError(f"Conditional variance is negative ({cond_var:.3g}).")
        logger.warning(f"Clamped conditional variance {cond_var:.3g} to zero")
        cond_var = 0.0

    return ConditionalMoments(
        cond_mean=float(cond_mean),
        cond_var=float(cond_var),
        rank_var_n=_rank(moments.var_n, rtol),
        deviation_vector=deviation,
    )


def conditional_test(data:TrialData, score_kind:str=None, scores:ScoreVector=None, **tolerances) -> TestResult:
    '''
    Randomization test of S_A conditional on the observed per-institution arm A totals.
    tolerances are passed through to conditional_moments.
    '''
    counts = tabulate_counts(data)
    if scores is None:
        scores = score_trial(data, score_kind)
    moments = joint_moments(scores, data)
    conditioned = conditional_moments(moments, counts.arm_totals, **tolerances)
    return build_result(
        statistic=arm_a_sum(scores, data),
        mean=conditioned.cond_mean,
        variance=conditioned.cond_var,
        total=moments.total_S,
        num_patients=data.design.num_patients,
        scale=moments.var_S,
        mode="conditional",
        magnitude=float(np.sum(np.abs(scores.values))),
    )
