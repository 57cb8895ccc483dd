import numpy as np
import pytest

from blocktrial.trial import TrialData, TrialDesign


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the Monte Carlo acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_trial(institutions, arms, y=None, events=None, outcome_kind="continuous", block_size=4, num_institutions=None) -> TrialData:
    '''Trial from flat per-patient lists, arms given as "A"/"B" strings or 1/0 codes.'''
    institutions = np.asarray(institutions)
    codes = np.array([1 if a in ("A", 1) else 0 for a in arms], dtype=np.int8)
    design = TrialDesign(block_size, len(institutions) // block_size, num_institutions or int(institutions.max()))
    return TrialData(
        design=design,
        institutions=institutions,
        arms=codes,
        outcome_kind=outcome_kind if y is not None else None,
        y=y,
        events=events,
    )


@pytest.fixture
def two_block_trial() -> TrialData:
    '''N=4, P=2, K=2, each block split 2/2 between the institutions.'''
    return make_trial(
        institutions=[1, 1, 2, 2, 1, 2, 1, 2],
        arms="ABABAABB",
        y=[1.0, 2.0, 3.0, 4.0, 0.5, 1.5, 2.5, 6.0],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
