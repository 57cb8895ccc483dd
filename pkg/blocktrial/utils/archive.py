import datetime
import json
import logging
import os
import platform
from pathlib import Path
from typing import Optional

import pandas as pd
import psutil

logger = logging.getLogger(__name__)


def host_info() -> dict:
    '''CPU and memory of the machine a run was made on, for the manifest only.'''
    memory = psutil.virtual_memory()
    return {
        'system': platform.system(),
        'machine': platform.machine(),
        'python': platform.python_version(),
        'physical_cores': psutil.cpu_count(logical=False),
        'logical_cores': psutil.cpu_count(),
        'memory_total': memory.total,
        'memory_available': memory.available,
    }


def dump_json(payload:dict) -> str:
    '''Stable JSON: sorted keys, fixed indent, trailing newline.'''
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path:os.PathLike, payload:dict):
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(dump_json(payload))


def archive_results(name:str, results_dir:os.PathLike, payload:dict, frame:Optional[pd.DataFrame]=None,
                    manifest:dict=None, float_format:str="%.4f") -> dict[str, Path]:
    '''
    Stores one run under results_dir as <name>.csv (if a frame is given), <name>.json
    and <name>.manifest.json. Only the manifest is stamped with the time and host,
    so the other two files are identical between runs with the same seed.
    '''
    directory = Path(results_dir)
    directory.mkdir(parents=True, exist_ok=True)
    written = {}

    if frame is not None:
        written['csv'] = directory / f"{name}.csv"
        frame.to_csv(written['csv'], index=False, float_format=float_format, lineterminator="\n")

    written['json'] = directory / f"{name}.json"
    write_json(written['json'], payload)

    now = datetime.datetime.now(datetime.timezone.utc)
    stamped = dict(manifest or {})
    stamped['created'] = now.isoformat(timespec="seconds")
    stamped['host'] = host_info()
    stamped['files'] = sorted(path.name for path in written.values())
    written['manifest'] = directory / f"{name}.manifest.json"
    write_json(written['manifest'], stamped)

    logger.info(f"Results written to {directory} ({', '.join(stamped['files'])}, {written['manifest'].name})")
    return written
