'''
Trial data files. Rows are patients in arrival order, comma-separated, UTF-8:

    patient_id,block,institution,arm,y               continuous or binary outcomes
    patient_id,block,institution,arm,time,event      survival outcomes

arm is A or B, event is 1 for an observed death and 0 for a censored time.
'''

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from blocktrial.trial import OUTCOME_KINDS, Arm, Outcome, PatientRecord, TrialData, TrialDesign
from blocktrial.utils.exceptions import InvalidDataError, OutcomeKindError

logger = logging.getLogger(__name__)

VALUE_COLUMNS = ["patient_id", "block", "institution", "arm", "y"]
SURVIVAL_COLUMNS = ["patient_id", "block", "institution", "arm", "time", "event"]


def expected_columns(outcome_kind:str) -> list[str]:
    if outcome_kind not in OUTCOME_KINDS:
        raise OutcomeKindError(f"Unknown outcome kind '{outcome_kind}'. Choose from: {', '.join(OUTCOME_KINDS)}")
    return SURVIVAL_COLUMNS if outcome_kind == "survival" else VALUE_COLUMNS


def _integers(frame:pd.DataFrame, column:str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = values.isna() | (values != values.round())
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise InvalidDataError(f"Line {row}: '{column}' must be an integer, got '{frame[column].iloc[row - 2]}'.")
    return values.astype(np.int64).to_numpy()


def _numbers(frame:pd.DataFrame, column:str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors="coerce")
    if values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0]) + 2
        raise InvalidDataError(f"Line {row}: '{column}' must be a number, got '{frame[column].iloc[row - 2]}'.")
    return values.astype(float).to_numpy()


def _outcomes(frame:pd.DataFrame, outcome_kind:str) -> list[Outcome]:
    try:
        if outcome_kind == "survival":
            events = _integers(frame, "event")
            if not np.isin(events, (0, 1)).all():
                raise InvalidDataError("'event' must be 0 or 1.")
            return [Outcome.survival(t, e) for t, e in zip(_numbers(frame, "time"), events)]
        values = _numbers(frame, "y")
        if outcome_kind == "binary":
            return [Outcome("binary", value=v) for v in values]
        return [Outcome.continuous(v) for v in values]
    except InvalidDataError as e:
        raise InvalidDataError(f"Invalid {outcome_kind} outcomes: {e}")


def read_records(path:Union[str, Path], outcome_kind:str) -> list[PatientRecord]:
    '''Parses a trial file into ordered records, rejecting any header but the exact schema.'''
    columns = expected_columns(outcome_kind)
    try:
        frame = pd.read_csv(path, dtype=str, encoding="utf-8", skipinitialspace=True, keep_default_na=False)
    except FileNotFoundError:
        raise InvalidDataError(f"Data file '{path}' does not exist.")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InvalidDataError(f"Cannot parse '{path}': {e}")

    header = [str(column).strip() for column in frame.columns]
    if header != columns:
        extra = [column for column in header if column not in columns]
        missing = [column for column in columns if column not in header]
        details = []
        if extra:
            details.append(f"unexpected columns {', '.join(extra)}")
        if missing:
            details.append(f"missing columns {', '.join(missing)}")
        if not details:
            details.append("columns out of order")
        raise InvalidDataError(f"Header must be '{','.join(columns)}' for {outcome_kind} outcomes: {'; '.join(details)}.")
    frame.columns = header
    if frame.empty:
        raise InvalidDataError(f"Data file '{path}' has no patients.")

    arms = frame["arm"].str.strip()
    unknown = ~arms.isin([arm.value for arm in Arm])
    if unknown.any():
        row = int(np.flatnonzero(unknown.to_numpy())[0])
        raise InvalidDataError(f"Line {row + 2}: arm must be A or B, got '{frame['arm'].iloc[row]}'.")

    blocks = _integers(frame, "block")
    institutions = _integers(frame, "institution")
    outcomes = _outcomes(frame, outcome_kind)

    records = []
    position = 0
    for index in range(len(frame)):
        position = position + 1 if index and blocks[index] == blocks[index - 1] else 1
        records.append(PatientRecord(
            block=int(blocks[index]),
            position=position,
            institution=int(institutions[index]),
            arm=Arm(arms.iloc[index]),
            outcome=outcomes[index],
            patient_id=frame["patient_id"].iloc[index].strip(),
        ))
    logger.debug(f"Read {len(records)} patients from {path}")
    return records


def infer_design(records:list[PatientRecord], block_size:Optional[int]=None, num_institutions:Optional[int]=None) -> TrialDesign:
    '''
    Design implied by a file: the block size defaults to the size of the first block,
    the block count to the highest block label and K to the highest institution label.
    '''
    if not records:
        raise InvalidDataError("No patients to infer a design from.")
    if block_size is None:
        block_size = sum(1 for record in records if record.block == records[0].block)
    num_blocks = max(record.block for record in records)
    if num_institutions is None:
        num_institutions = max(record.institution for record in records)
    return TrialDesign(block_size, num_blocks, num_institutions)


def read_trial_csv(path:Union[str, Path], outcome_kind:str, block_size:int=None, num_institutions:int=None) -> TrialData:
    '''Reads and validates a trial file, raising InvalidDataError listing every violation.'''
    records = read_records(path, outcome_kind)
    design = infer_design(records, block_size, num_institutions)
    data = TrialData.from_records(records, design)
    logger.info(f"Loaded {design.num_patients} patients: {design.num_blocks} blocks of {design.block_size}, {design.num_institutions} institutions")
    return data


def write_trial_csv(data:TrialData, path:Union[str, Path]):
    '''Writes assigned trial data in the same schema read_trial_csv accepts.'''
    if data.outcome_kind is None or not data.is_assigned:
        raise InvalidDataError("Only assigned trials with outcomes can be written.")
    rows = {
        "patient_id": data.patient_ids or [str(i + 1) for i in range(data.design.num_patients)],
        "block": np.repeat(np.arange(1, data.num_blocks + 1), data.block_size),
        "institution": data.institutions,
        "arm": [Arm.from_code(int(code)).value for code in data.arms],
    }
    if data.outcome_kind == "survival":
        rows["time"] = data.y
        rows["event"] = data.events.astype(int)
    elif data.outcome_kind == "binary":
        rows["y"] = data.y.astype(int)
    else:
        rows["y"] = data.y
    pd.DataFrame(rows)[expected_columns(data.outcome_kind)].to_csv(path, index=False, lineterminator="\n")
