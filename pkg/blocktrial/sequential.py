import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from blocktrial.conditional import conditional_test
from blocktrial.moments import unconditional_test
from blocktrial.reference import stratified_logrank_z
from blocktrial.scores import DEFAULT_SCORES, benefit_sign
from blocktrial.trial import TrialData
from blocktrial.utils.exceptions import ConfigError, IncompleteTrialError

logger = logging.getLogger(__name__)

#Final boundary for four equally spaced looks at one-sided alpha = 0.025
DEFAULT_C_FINAL = 2.024
MODES = ("conditional", "unconditional", "stratified_logrank")


def obf_boundary(look:int, num_looks:int, c_final:float) -> float:
    '''O'Brien-Fleming critical value c_final * sqrt(L / l).'''
    if not 1 <= look <= num_looks:
        raise ConfigError(f"Look must lie in 1..{num_looks}, got {look}.")
    if c_final <= 0:
        raise ConfigError(f"Final boundary must be positive, got {c_final}.")
    return c_final * np.sqrt(num_looks / look)


def default_c_final(num_looks:int, alpha:float, sided:int) -> float:
    if num_looks == 4 and np.isclose(alpha, 0.025) and sided == 1:
        return DEFAULT_C_FINAL
    raise ConfigError(f"No built-in final boundary for {num_looks} looks at {sided}-sided alpha = {alpha}, set c_final.")


@dataclass
class GstPlan:
    '''
    Group sequential monitoring plan. look_blocks holds the cumulative number
    of blocks at each look, boundaries the matching critical values.
    '''
    num_looks:int
    max_blocks:int
    look_blocks:list
    boundaries:list
    alpha:float=0.025
    sided:int=1
    c_final:float=DEFAULT_C_FINAL

    def __post_init__(self):
        self.look_blocks = [int(b) for b in self.look_blocks]
        self.boundaries = [float(c) for c in self.boundaries]
        if len(self.look_blocks) != self.num_looks or len(self.boundaries) != self.num_looks:
            raise ConfigError(f"Plan needs {self.num_looks} look sizes and boundaries.")
        if self.look_blocks[0] < 1 or any(a >= b for a, b in zip(self.look_blocks, self.look_blocks[1:])):
            raise ConfigError(f"Look sizes must be strictly increasing positive block counts, got {self.look_blocks}.")
        if self.look_blocks[-1] != self.max_blocks:
            raise ConfigError(f"The last look must use all {self.max_blocks} blocks.")
        if any(c <= 0 for c in self.boundaries) or any(a < b for a, b in zip(self.boundaries, self.boundaries[1:])):
            raise ConfigError("Boundaries must be positive and non-increasing.")
        if self.sided not in (1, 2):
            raise ConfigError(f"sided must be 1 or 2, got {self.sided}.")

    @classmethod
    def equally_spaced(cls, num_looks:int, max_blocks:int, c_final:float=None, alpha:float=0.025, sided:int=1) -> "GstPlan":
        if num_looks < 1 or num_looks > max_blocks:
            raise ConfigError(f"Cannot spread {num_looks} looks over {max_blocks} blocks.")
        if c_final is None:
            c_final = default_c_final(num_looks, alpha, sided)
        look_blocks = [int(round(max_blocks * l / num_looks)) for l in range(1, num_looks + 1)]
        boundaries = [obf_boundary(l, num_looks, c_final) for l in range(1, num_looks + 1)]
        return cls(num_looks, max_blocks, look_blocks, boundaries, alpha, sided, c_final)

    @classmethod
    def from_look_blocks(cls, look_blocks:list, c_final:float, alpha:float=0.025, sided:int=1) -> "GstPlan":
        '''Unequal looks, boundaries c_final / sqrt(t_l).'''
        max_blocks = look_blocks[-1]
        boundaries = [c_final * np.sqrt(max_blocks / b) for b in look_blocks]
        return cls(len(look_blocks), max_blocks, look_blocks, boundaries, alpha, sided, c_final)

    def info_fraction(self, look:int) -> float:
        return self.look_blocks[look - 1] / self.max_blocks

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values:dict) -> "GstPlan":
        return cls(**values)


@dataclass
class GstLook:
    look:int
    info_fraction:float
    blocks:int
    statistic:float
    boundary:float
    decision:str
    mode:str="conditional"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SequentialOutcome:
    looks:list
    stopped_at:Optional[int]=None

    @property
    def rejected(self) -> bool:
        return self.stopped_at is not None


def _look_statistic(data:TrialData, mode:str, score_kind:str, **tolerances) -> tuple[float, int]:
    '''The look's z statistic and the orientation in which it favours arm A.'''
    if mode == "conditional":
        return conditional_test(data, score_kind, **tolerances).z, benefit_sign(score_kind)
    elif mode == "unconditional":
        return unconditional_test(data, score_kind).z, benefit_sign(score_kind)
    elif mode == "stratified_logrank":
        return stratified_logrank_z(data), 1
    raise ConfigError(f"Unknown monitoring mode '{mode}'. Choose from: {', '.join(MODES)}")


def interim_test(data:TrialData, plan:GstPlan, look:int, score_kind:str=None, mode:str="conditional", **tolerances) -> GstLook:
    '''
    Test at look l on the first P_l blocks. The conditional statistic conditions
    on the arm A totals accumulated through those same blocks.
    tolerances are passed through to conditional_moments.
    '''
    if not 1 <= look <= plan.num_looks:
        raise ConfigError(f"Look must lie in 1..{plan.num_looks}, got {look}.")
    blocks = plan.look_blocks[look - 1]
    if data.num_blocks < blocks:
        raise IncompleteTrialError(f"Look {look} needs {blocks} blocks, only {data.num_blocks} available.")
    if score_kind is None:
        score_kind = DEFAULT_SCORES[data.outcome_kind]

    statistic, orientation = _look_statistic(data.prefix(blocks), mode, score_kind, **tolerances)
    boundary = plan.boundaries[look - 1]
    crossed = abs(statistic) > boundary if plan.sided == 2 else orientation * statistic > boundary

    if crossed:
        decision = "reject"
    elif look == plan.num_looks:
        decision = "accept-at-final"
    else:
        decision = "continue"

    logger.debug(f"Look {look}/{plan.num_looks}: T={statistic:.4f}, C={boundary:.4f}, {decision}")
    return GstLook(look, plan.info_fraction(look), blocks, float(statistic), boundary, decision, mode)


def run_sequential(stream:Union[TrialData, Iterable[TrialData]], plan:GstPlan, score_kind:str=None, mode:str="conditional",
                   **tolerances) -> SequentialOutcome:
    '''
    Monitors a stream of whole blocks, looking each time enough blocks have arrived.
    Stops at the first rejection.
    '''
    parts = [stream] if isinstance(stream, TrialData) else stream
    collected = []
    data = None
    looks = []
    look = 1

    for part in parts:
        collected.append(part)
        data = TrialData.concat(collected) if len(collected) > 1 else part
        while look <= plan.num_looks and data.num_blocks >= plan.look_blocks[look - 1]:
            result = interim_test(data, plan, look, score_kind, mode, **tolerances)
            looks.append(result)
            if result.decision == "reject":
                return SequentialOutcome(looks, stopped_at=look)
            look += 1
        if look > plan.num_looks:
            return SequentialOutcome(looks)

    have = 0 if data is None else data.num_blocks
    raise IncompleteTrialError(f"Data ended after {have} blocks, the plan needs {plan.max_blocks}.")


@dataclass
class MonitorState:
    '''Resumable monitoring state: the plan and every look taken so far.'''
    plan:GstPlan
    score_kind:str
    mode:str="conditional"
    looks:list=field(default_factory=list)

    @property
    def finished(self) -> bool:
        return bool(self.looks) and self.looks[-1].decision in ("reject", "accept-at-final")

    @property
    def next_look(self) -> int:
        return len(self.looks) + 1

    def to_dict(self) -> dict:
        return {
            'plan': self.plan.to_dict(),
            'score_kind': self.score_kind,
            'mode': self.mode,
            'looks': [look.to_dict() for look in self.looks],
            'finished': self.finished,
        }

    @classmethod
    def from_dict(cls, values:dict) -> "MonitorState":
        return cls(
            plan=GstPlan.from_dict(values['plan']),
            score_kind=values['score_kind'],
            mode=values.get('mode', "conditional"),
            looks=[GstLook(**look) for look in values.get('looks', [])],
        )


def monitor_available(data:TrialData, plan:GstPlan, state:MonitorState=None, score_kind:str=None, mode:str="conditional",
                      **tolerances) -> MonitorState:
    '''Takes every pending look whose blocks are present in data, resuming from state if given.'''
    if state is None:
        state = MonitorState(plan, score_kind or DEFAULT_SCORES[data.outcome_kind], mode)
    while not state.finished and state.next_look <= state.plan.num_looks:
        if data.num_blocks < state.plan.look_blocks[state.next_look - 1]:
            logger.info(f"Look {state.next_look} waits for {state.plan.look_blocks[state.next_look - 1]} blocks, {data.num_blocks} available")
            break
        state.looks.append(interim_test(data, state.plan, state.next_look, state.score_kind, state.mode, **tolerances))
    return state
