import zlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReplicationStreams:
    '''Independent random streams for one simulated trial.'''
    arrival: np.random.Generator
    assignment: np.random.Generator
    institution: np.random.Generator
    outcome: np.random.Generator


def scenario_key(description:str) -> int:
    '''Stable 32-bit key of a scenario's canonical description.'''
    return zlib.crc32(description.encode("utf-8"))


def make_streams(master_seed:int, key:int, replication:int) -> ReplicationStreams:
    '''
    (master seed, scenario key, replication index) fully determines the streams,
    so results never depend on which worker ran the replication.

      replication
        ├── arrival      institution arrival order
        ├── assignment   permuted block randomization
        ├── institution  institution effects
        └── outcome      outcomes and censoring
    '''
    root = np.random.SeedSequence([master_seed, key, replication])
    arrival, assignment, institution, outcome = root.spawn(4)
    return ReplicationStreams(
        arrival=np.random.default_rng(arrival),
        assignment=np.random.default_rng(assignment),
        institution=np.random.default_rng(institution),
        outcome=np.random.default_rng(outcome),
    )


def make_rng(master_seed:int, *path:int) -> np.random.Generator:
    '''A single generator for side tasks (calibration, rerandomization) keyed by path.'''
    return np.random.default_rng(np.random.SeedSequence([master_seed, *path]))
