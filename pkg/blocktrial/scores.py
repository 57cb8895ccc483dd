import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from blocktrial.trial import TrialData
from blocktrial.utils.exceptions import InvalidDataError, OutcomeKindError

logger = logging.getLogger(__name__)

SCORE_KINDS = ("identity", "binary", "logrank", "gehan")

#Which outcome kind each score accepts
COMPATIBLE_OUTCOMES = {
    "identity": "continuous",
    "binary": "binary",
    "logrank": "survival",
    "gehan": "survival",
}

DEFAULT_SCORES = {
    "continuous": "identity",
    "binary": "binary",
    "survival": "logrank",
}


@dataclass
class ScoreVector:
    '''Per-patient scores laid out P x N, one row per block.'''
    values:np.ndarray
    kind:str

    @property
    def num_blocks(self) -> int:
        return self.values.shape[0]

    def block_sums(self) -> np.ndarray:
        return self.values.sum(axis=-1)


def _check_kind(outcome_kind:str, score_kind:str):
    wanted = COMPATIBLE_OUTCOMES[score_kind]
    if outcome_kind != wanted:
        raise OutcomeKindError(f"{score_kind} scores need {wanted} outcomes, got {outcome_kind}.")


def _as_blocks(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0 or values.shape[-1] == 0:
        raise InvalidDataError("Cannot score an empty block.")
    return values


def _survival_inputs(times, events) -> tuple[np.ndarray, np.ndarray]:
    times = _as_blocks(times)
    events = np.asarray(events, dtype=bool)
    if events.shape != times.shape:
        raise InvalidDataError("Times and event indicators differ in shape.")
    if np.any(~(times > 0)):
        raise InvalidDataError("Survival times must be positive.")
    return times, events


def identity_scores(values, outcome_kind:str="continuous") -> ScoreVector:
    '''Raw continuous outcomes used as scores. Accepts one block or a P x N array.'''
    _check_kind(outcome_kind, "identity")
    values = _as_blocks(values)
    return ScoreVector(values=np.atleast_2d(values.copy()), kind="identity")


def binary_scores(values, outcome_kind:str="binary") -> ScoreVector:
    _check_kind(outcome_kind, "binary")
    values = _as_blocks(values)
    if not np.all((values == 0) | (values == 1)):
        raise InvalidDataError("Binary outcomes must be 0 or 1.")
    return ScoreVector(values=np.atleast_2d(values.copy()), kind="binary")


def logrank_scores(times, events, outcome_kind:str="survival") -> ScoreVector:
    '''
    Within-block logrank scores e_i - sum of d/n over death times up to t_i.
    Tied deaths share a hazard term, a censoring tied with a death stays in that death's risk set.
    '''
    _check_kind(outcome_kind, "logrank")
    times, events = _survival_inputs(times, events)

    #at_or_after[..., m, j]: t_j >= t_m
    at_or_after = times[..., None, :] >= times[..., :, None]
    at_risk = at_or_after.sum(axis=-1)
    hazard = events / at_risk
    #up_to[..., i, m]: t_m <= t_i
    up_to = times[..., None, :] <= times[..., :, None]
    cumulative = np.einsum('...im,...m->...i', up_to, hazard)

    return ScoreVector(values=np.atleast_2d(events - cumulative), kind="logrank")


def gehan_scores(times, events, outcome_kind:str="survival") -> ScoreVector:
    '''
    Pairwise Gehan scores: patients i definitely outlives minus patients that definitely outlive i.
    i definitely outlives j when j died and i was still alive (or censored) afterwards,
    a censoring tied with a death counts as after it.
    '''
    _check_kind(outcome_kind, "gehan")
    times, events = _survival_inputs(times, events)

    t_i = times[..., :, None]
    t_j = times[..., None, :]
    later = (t_i > t_j) | ((t_i == t_j) & ~events[..., :, None])
    outlives = events[..., None, :] & later
    values = outlives.sum(axis=-1) - outlives.sum(axis=-2)

    return ScoreVector(values=np.atleast_2d(values.astype(float)), kind="gehan")


def score_trial(data:TrialData, score_kind:Optional[str]=None) -> ScoreVector:
    '''Scores every block of a trial. Uses the default score for the outcome kind if none is given.'''
    if data.outcome_kind is None or data.y is None:
        raise InvalidDataError("Trial has no outcomes to score.")
    if score_kind is None:
        score_kind = DEFAULT_SCORES[data.outcome_kind]
    if score_kind not in SCORE_KINDS:
        raise OutcomeKindError(f"Unknown score kind '{score_kind}'. Choose from: {', '.join(SCORE_KINDS)}")

    y = data.by_block(data.y)
    if score_kind == "identity":
        return identity_scores(y, data.outcome_kind)
    elif score_kind == "binary":
        return binary_scores(y, data.outcome_kind)

    events = data.by_block(data.events)
    if score_kind == "logrank":
        return logrank_scores(y, events, data.outcome_kind)
    return gehan_scores(y, events, data.outcome_kind)


def benefit_sign(score_kind:str) -> int:
    '''
    +1 if larger scores favour arm A, -1 if smaller ones do.
    Logrank scores are large for early deaths, so a benefit for A shows as a small S_A.
    '''
    if score_kind not in SCORE_KINDS:
        raise OutcomeKindError(f"Unknown score kind '{score_kind}'.")
    return -1 if score_kind == "logrank" else 1
