import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from blocktrial.utils.exceptions import InvalidDataError, InvalidDesignError

logger = logging.getLogger(__name__)

OUTCOME_KINDS = ("continuous", "binary", "survival")

#Arm codes used in every array in the package
ARM_A = 1
ARM_B = 0
UNASSIGNED = -1


class Arm(str, Enum):
    A = "A"
    B = "B"

    @property
    def code(self) -> int:
        return ARM_A if self is Arm.A else ARM_B

    @classmethod
    def from_code(cls, code:int) -> Optional["Arm"]:
        if code == ARM_A:
            return cls.A
        elif code == ARM_B:
            return cls.B
        return None


@dataclass(frozen=True)
class TrialDesign:
    '''
    The fixed frame of the randomization distribution:
    P permuted blocks of N patients each, recruited from K institutions.
    '''
    block_size:int
    num_blocks:int
    num_institutions:int

    def __post_init__(self):
        if int(self.block_size) != self.block_size or self.block_size < 2 or self.block_size % 2:
            raise InvalidDesignError(f"Block size must be a positive even integer, got {self.block_size}.")
        if int(self.num_blocks) != self.num_blocks or self.num_blocks < 1:
            raise InvalidDesignError(f"Number of blocks must be a positive integer, got {self.num_blocks}.")
        if int(self.num_institutions) != self.num_institutions or self.num_institutions < 1:
            raise InvalidDesignError(f"Number of institutions must be a positive integer, got {self.num_institutions}.")

    @property
    def num_patients(self) -> int:
        return self.block_size * self.num_blocks

    def with_blocks(self, num_blocks:int) -> "TrialDesign":
        return replace(self, num_blocks=num_blocks)


@dataclass(frozen=True)
class Outcome:
    '''
    A single patient outcome. Use the continuous(), binary() and survival() constructors.
    For survival outcomes event=True means death observed, False means censored.
    '''
    kind:str
    value:float=None
    time:float=None
    event:bool=None

    def __post_init__(self):
        if self.kind not in OUTCOME_KINDS:
            raise InvalidDataError(f"Unknown outcome kind '{self.kind}'.")
        if self.kind == "binary" and self.value not in (0, 1):
            raise InvalidDataError(f"Binary outcome must be 0 or 1, got {self.value}.")
        if self.kind == "survival":
            if self.time is None or not self.time > 0:
                raise InvalidDataError(f"Survival time must be positive, got {self.time}.")
            if self.event is None:
                raise InvalidDataError("Survival outcome is missing its event indicator.")
        if self.kind == "continuous" and (self.value is None or not np.isfinite(self.value)):
            raise InvalidDataError(f"Continuous outcome must be a finite number, got {self.value}.")

    @classmethod
    def continuous(cls, value:float) -> "Outcome":
        return cls("continuous", value=float(value))

    @classmethod
    def binary(cls, value:int) -> "Outcome":
        return cls("binary", value=int(value))

    @classmethod
    def survival(cls, time:float, event:bool) -> "Outcome":
        return cls("survival", time=float(time), event=bool(event))


@dataclass
class PatientRecord:
    '''One enrolled patient. Block and position are 1-based, positions run 1..N inside a block.'''
    block:int
    position:int
    institution:int
    arm:Optional[Arm]=None
    outcome:Optional[Outcome]=None
    patient_id:str=None


@dataclass
class CountTable:
    '''
    Per-block and total institution counts:
    block_counts is N_jk, arm_counts is n_kA^j (both P x K),
    institution_totals is N_.k and arm_totals is n_kA.
    '''
    block_counts:np.ndarray
    institution_totals:np.ndarray
    arm_counts:np.ndarray
    arm_totals:np.ndarray

    def violations(self, block_size:int) -> list[str]:
        '''Returns every broken count relation, empty if the table is consistent.'''
        found = []
        half = block_size // 2
        for j, (row_total, arm_total) in enumerate(zip(self.block_counts.sum(axis=1), self.arm_counts.sum(axis=1)), start=1):
            if row_total != block_size:
                found.append(f"block {j} has {row_total} patients, expected {block_size}")
            if arm_total != half:
                found.append(f"block {j} is unbalanced: {arm_total} of {block_size} patients assigned to A")
        if np.any(self.arm_counts < 0) or np.any(self.arm_counts > self.block_counts):
            found.append("arm counts fall outside 0..N_jk")
        if not np.array_equal(self.block_counts.sum(axis=0), self.institution_totals):
            found.append("institution totals do not match the per-block counts")
        if not np.array_equal(self.arm_counts.sum(axis=0), self.arm_totals):
            found.append("arm totals do not match the per-block arm counts")
        return found


@dataclass
class TrialData:
    '''
    Array-backed trial data in arrival order. Patient i of block j sits at index (j-1)*N + (i-1).

    institutions: labels 1..K
    arms: ARM_A, ARM_B or UNASSIGNED
    y: outcome values for continuous/binary data, observed times for survival data
    events: death indicators, survival data only
    '''
    design:TrialDesign
    institutions:np.ndarray
    arms:np.ndarray
    outcome_kind:Optional[str]=None
    y:Optional[np.ndarray]=None
    events:Optional[np.ndarray]=None
    patient_ids:Optional[list]=None

    def __post_init__(self):
        self.institutions = np.asarray(self.institutions, dtype=np.int64)
        self.arms = np.asarray(self.arms, dtype=np.int8)
        size = self.design.num_patients
        if self.institutions.shape != (size,) or self.arms.shape != (size,):
            raise InvalidDataError(f"Expected {size} patients for {self.design.num_blocks} blocks of {self.design.block_size}.")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != (size,):
                raise InvalidDataError("Outcome vector does not match the number of patients.")
        if self.events is not None:
            self.events = np.asarray(self.events, dtype=bool)

    @property
    def block_size(self) -> int:
        return self.design.block_size

    @property
    def num_blocks(self) -> int:
        return self.design.num_blocks

    @property
    def num_institutions(self) -> int:
        return self.design.num_institutions

    @property
    def is_assigned(self) -> bool:
        return bool(np.all(self.arms != UNASSIGNED))

    def by_block(self, values:np.ndarray) -> np.ndarray:
        '''Reshapes a per-patient vector to P x N.'''
        return np.asarray(values).reshape(self.num_blocks, self.block_size)

    def indicators(self) -> np.ndarray:
        '''The P x N x K institution indicator array I_ijk.'''
        labels = self.by_block(self.institutions) - 1
        return (labels[..., None] == np.arange(self.num_institutions)).astype(float)

    def prefix(self, num_blocks:int) -> "TrialData":
        '''The first num_blocks blocks, as a trial of their own.'''
        if not 1 <= num_blocks <= self.num_blocks:
            raise InvalidDataError(f"Cannot take {num_blocks} blocks from a trial with {self.num_blocks}.")
        cut = num_blocks * self.block_size
        return TrialData(
            design=self.design.with_blocks(num_blocks),
            institutions=self.institutions[:cut],
            arms=self.arms[:cut],
            outcome_kind=self.outcome_kind,
            y=None if self.y is None else self.y[:cut],
            events=None if self.events is None else self.events[:cut],
            patient_ids=None if self.patient_ids is None else self.patient_ids[:cut],
        )

    @classmethod
    def concat(cls, parts:Sequence["TrialData"]) -> "TrialData":
        '''Appends whole blocks, all parts must share block size, institution count and outcome kind.'''
        parts = list(parts)
        if not parts:
            raise InvalidDataError("Nothing to concatenate.")
        first = parts[0]
        for part in parts[1:]:
            if part.block_size != first.block_size or part.num_institutions != first.num_institutions:
                raise InvalidDataError("Cannot concatenate trials with different block sizes or institution counts.")
            if part.outcome_kind != first.outcome_kind:
                raise InvalidDataError("Cannot concatenate trials with different outcome kinds.")

        def joined(name):
            arrays = [getattr(part, name) for part in parts]
            if any(a is None for a in arrays):
                return None
            return np.concatenate(arrays)

        ids = None
        if all(part.patient_ids is not None for part in parts):
            ids = [pid for part in parts for pid in part.patient_ids]

        return cls(
            design=first.design.with_blocks(sum(part.num_blocks for part in parts)),
            institutions=joined("institutions"),
            arms=joined("arms"),
            outcome_kind=first.outcome_kind,
            y=joined("y"),
            events=joined("events"),
            patient_ids=ids,
        )

    def with_outcomes(self, kind:str, y:np.ndarray, events:np.ndarray=None) -> "TrialData":
        if kind not in OUTCOME_KINDS:
            raise InvalidDataError(f"Unknown outcome kind '{kind}'.")
        if kind == "survival" and events is None:
            raise InvalidDataError("Survival outcomes need event indicators.")
        return replace(self, outcome_kind=kind, y=np.asarray(y, dtype=float), events=events)

    def swap_arms(self) -> "TrialData":
        '''Relabels A as B and B as A.'''
        swapped = np.where(self.arms == UNASSIGNED, UNASSIGNED, 1 - self.arms).astype(np.int8)
        return replace(self, arms=swapped)

    def outcome_at(self, index:int) -> Optional[Outcome]:
        if self.outcome_kind is None:
            return None
        if self.outcome_kind == "survival":
            return Outcome.survival(self.y[index], self.events[index])
        if self.outcome_kind == "binary":
            return Outcome.binary(self.y[index])
        return Outcome.continuous(self.y[index])

    def records(self) -> list[PatientRecord]:
        records = []
        for index in range(self.design.num_patients):
            block, position = divmod(index, self.block_size)
            records.append(PatientRecord(
                block=block + 1,
                position=position + 1,
                institution=int(self.institutions[index]),
                arm=Arm.from_code(int(self.arms[index])),
                outcome=self.outcome_at(index),
                patient_id=self.patient_ids[index] if self.patient_ids else str(index + 1),
            ))
        return records

    @classmethod
    def from_records(cls, records:Sequence[PatientRecord], design:TrialDesign) -> "TrialData":
        '''Builds TrialData from ordered records, raising InvalidDataError with every violation found.'''
        violations = validate(records, design)
        if violations:
            raise InvalidDataError(f"Trial data failed validation: {violations[0]}", violations)

        kinds = {r.outcome.kind for r in records if r.outcome is not None}
        kind = kinds.pop() if kinds else None
        y = events = None
        if kind == "survival":
            y = [r.outcome.time for r in records]
            events = [r.outcome.event for r in records]
        elif kind is not None:
            y = [r.outcome.value for r in records]

        return cls(
            design=design,
            institutions=[r.institution for r in records],
            arms=[r.arm.code if r.arm is not None else UNASSIGNED for r in records],
            outcome_kind=kind,
            y=y,
            events=events,
            patient_ids=[r.patient_id for r in records],
        )


def randomize_block(block_size:int, rng:np.random.Generator) -> np.ndarray:
    '''
    Randomizes one permuted block: exactly N/2 patients get A,
    every balanced pattern is equally likely.
    '''
    if int(block_size) != block_size or block_size < 2 or block_size % 2:
        raise InvalidDesignError(f"Block size must be a positive even integer, got {block_size}.")
    half = block_size // 2
    pattern = np.array([ARM_A] * half + [ARM_B] * half, dtype=np.int8)
    return rng.permutation(pattern)


def randomize_trial(design:TrialDesign, institution_sequence:Sequence[int], rng:np.random.Generator) -> TrialData:
    '''Assigns arms block by block to an arrival sequence of institution labels.'''
    institutions = np.asarray(institution_sequence, dtype=np.int64)
    if institutions.shape != (design.num_patients,):
        raise InvalidDataError(f"Institution sequence has {institutions.size} entries, the design needs {design.num_patients}.")
    if institutions.size and (institutions.min() < 1 or institutions.max() > design.num_institutions):
        raise InvalidDataError(f"Institution labels must lie in 1..{design.num_institutions}.")

    arms = np.concatenate([randomize_block(design.block_size, rng) for _ in range(design.num_blocks)])
    return TrialData(design=design, institutions=institutions, arms=arms)


def tabulate_counts(data:TrialData) -> CountTable:
    '''Tabulates N_jk and n_kA^j, verifying every count relation.'''
    if not data.is_assigned:
        raise InvalidDataError("Cannot tabulate counts before every patient has an arm.")
    indicators = data.indicators()
    on_a = (data.by_block(data.arms) == ARM_A)[..., None]
    block_counts = indicators.sum(axis=1).astype(np.int64)
    arm_counts = (indicators * on_a).sum(axis=1).astype(np.int64)
    table = CountTable(
        block_counts=block_counts,
        institution_totals=block_counts.sum(axis=0),
        arm_counts=arm_counts,
        arm_totals=arm_counts.sum(axis=0),
    )
    violations = table.violations(data.block_size)
    if violations:
        raise InvalidDataError(f"Invalid counts: {violations[0]}", violations)
    return table


def validate(data:Union[TrialData, Sequence[PatientRecord]], design:TrialDesign) -> list[str]:
    '''
    Checks ordered records against the design and returns a list of violations,
    an empty list means the data is valid. Even block sizes are enforced by TrialDesign itself.
    '''
    records = data.records() if isinstance(data, TrialData) else list(data)
    n = design.block_size
    violations = []

    full_blocks, leftover = divmod(len(records), n)
    if leftover:
        violations.append(f"incomplete final block: block {full_blocks + 1} has {leftover} of {n} patients")
    if full_blocks != design.num_blocks:
        violations.append(f"expected {design.num_blocks} blocks, found {full_blocks} complete blocks")

    for index, record in enumerate(records):
        expected_block = index // n + 1
        if record.block != expected_block:
            violations.append(f"patient {record.patient_id or index + 1} is labelled block {record.block} but arrives in block {expected_block}")
            break #One misaligned label shifts every following one

    for index, record in enumerate(records):
        if not 1 <= record.institution <= design.num_institutions:
            violations.append(f"patient {record.patient_id or index + 1} has institution {record.institution} outside 1..{design.num_institutions}")

    for j in range(full_blocks):
        block = records[j * n:(j + 1) * n]
        assigned = [r.arm for r in block if r.arm is not None]
        if not assigned:
            continue
        if len(assigned) != n:
            violations.append(f"block {j + 1} has patients without an arm")
            continue
        on_a = sum(1 for arm in assigned if arm == Arm.A)
        if on_a != n // 2:
            violations.append(f"block {j + 1} is unbalanced: {on_a} of {n} patients assigned to A")

    kinds = sorted({r.outcome.kind for r in records if r.outcome is not None})
    if len(kinds) > 1:
        violations.append(f"heterogeneous outcomes: {', '.join(kinds)}")
    elif kinds and any(r.outcome is None for r in records):
        violations.append("some patients have no outcome")

    return violations
