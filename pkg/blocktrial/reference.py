'''
Classical tests the randomization tests are compared against.
Every function returns a two-sided p-value, degenerate tables give p = 1.
'''

import logging

import numpy as np
from lifelines.statistics import logrank_test as lifelines_logrank
from scipy.stats import chi2_contingency, norm, ttest_1samp, ttest_ind
from statsmodels.stats.contingency_tables import StratifiedTable

from blocktrial.trial import ARM_A, ARM_B, TrialData
from blocktrial.utils.exceptions import OutcomeKindError

logger = logging.getLogger(__name__)

#Outcome kind each reference test accepts
REFERENCE_TESTS = {
    "t_test": "continuous",
    "stratified_t": "continuous",
    "mantel_haenszel": "binary",
    "pooled_2x2_chi2": "binary",
    "logrank_test": "survival",
    "stratified_logrank": "survival",
    "stratified_gehan": "survival",
}


def _require(data:TrialData, kind:str, test:str):
    if data.outcome_kind != kind:
        raise OutcomeKindError(f"{test} needs {kind} outcomes, got {data.outcome_kind}.")


def _finite(p:float) -> float:
    '''Degenerate statistics (zero variance) count as no evidence.'''
    return 1.0 if p is None or not np.isfinite(p) else float(p)


def t_test(data:TrialData) -> float:
    '''Two-sample pooled-variance t test ignoring blocks and institutions.'''
    _require(data, "continuous", "t_test")
    result = ttest_ind(data.y[data.arms == ARM_A], data.y[data.arms == ARM_B])
    return _finite(result.pvalue)


def stratified_t(data:TrialData) -> float:
    '''One-sample t test on the per-block contrasts mean(A) - mean(B), P-1 degrees of freedom.'''
    _require(data, "continuous", "stratified_t")
    y = data.by_block(data.y)
    on_a = data.by_block(data.arms) == ARM_A
    half = data.block_size // 2
    contrasts = (np.sum(y * on_a, axis=1) - np.sum(y * ~on_a, axis=1)) / half
    if contrasts.size < 2:
        return 1.0
    return _finite(ttest_1samp(contrasts, 0.0).pvalue)


def _block_tables(data:TrialData) -> np.ndarray:
    '''2 x 2 x P tables, rows arm A / arm B, columns success / failure.'''
    y = data.by_block(data.y)
    on_a = data.by_block(data.arms) == ARM_A
    half = data.block_size // 2
    success_a = np.sum(y * on_a, axis=1)
    success_b = np.sum(y * ~on_a, axis=1)
    return np.array([
        [success_a, half - success_a],
        [success_b, half - success_b],
    ], dtype=float)


def mantel_haenszel(data:TrialData) -> float:
    '''Mantel-Haenszel test of the P block 2x2 tables, no continuity correction.'''
    _require(data, "binary", "mantel_haenszel")
    tables = _block_tables(data)
    #Blocks with all successes or all failures carry no information
    informative = (tables[:, 0, :].sum(axis=0) > 0) & (tables[:, 1, :].sum(axis=0) > 0)
    if not informative.any():
        return 1.0
    result = StratifiedTable(tables[:, :, informative]).test_null_odds(correction=False)
    return _finite(result.pvalue)


def pooled_2x2_chi2(data:TrialData) -> float:
    '''Pearson chi-square on the single table pooled over blocks, p = 1 for a zero margin.'''
    _require(data, "binary", "pooled_2x2_chi2")
    table = _block_tables(data).sum(axis=2)
    if np.any(table.sum(axis=0) == 0) or np.any(table.sum(axis=1) == 0):
        return 1.0
    return _finite(chi2_contingency(table, correction=False)[1])


def logrank_test(data:TrialData) -> float:
    '''Logrank test ignoring blocks.'''
    _require(data, "survival", "logrank_test")
    on_a = data.arms == ARM_A
    if not data.events.any():
        return 1.0
    result = lifelines_logrank(
        data.y[on_a], data.y[~on_a],
        event_observed_A=data.events[on_a], event_observed_B=data.events[~on_a],
    )
    return _finite(result.p_value)


def _stratified_terms(data:TrialData, weighting:str) -> tuple[float, float]:
    '''
    Sums over blocks and distinct death times of w(O_A - E_A) and w^2 V_A,
    with w = 1 (logrank) or w = number at risk (Gehan).
    '''
    times = data.by_block(data.y)
    events = data.by_block(data.events)
    on_a = data.by_block(data.arms) == ARM_A

    #[p, m, i]: patient i is at risk at patient m's time / dies at it
    at_risk = times[:, None, :] >= times[:, :, None]
    dies_then = (times[:, None, :] == times[:, :, None]) & events[:, None, :]

    n = at_risk.sum(axis=2)
    n_a = (at_risk & on_a[:, None, :]).sum(axis=2)
    d = dies_then.sum(axis=2)
    d_a = (dies_then & on_a[:, None, :]).sum(axis=2)

    #Every death at a tied time carries 1/d of that time's terms
    share = np.where(events, 1.0 / np.maximum(d, 1), 0.0)
    weight = n if weighting == "gehan" else np.ones_like(n)

    expected = d * n_a / n
    with np.errstate(invalid="ignore", divide="ignore"):
        variance = np.where(n > 1, d * (n_a / n) * (1 - n_a / n) * (n - d) / (n - 1), 0.0)

    numerator = np.sum(share * weight * (d_a - expected))
    denominator = np.sum(share * weight ** 2 * variance)
    return float(numerator), float(denominator)


def stratified_logrank_z(data:TrialData) -> float:
    '''Block stratified logrank z, oriented so positive values favour arm A (fewer deaths than expected).'''
    _require(data, "survival", "stratified_logrank")
    numerator, denominator = _stratified_terms(data, "logrank")
    if denominator <= 0:
        return 0.0
    return -numerator / np.sqrt(denominator)


def stratified_logrank(data:TrialData) -> float:
    return float(min(1.0, 2 * norm.sf(abs(stratified_logrank_z(data)))))


def stratified_gehan(data:TrialData) -> float:
    '''Block stratified Gehan (Gehan-Breslow weighted) test.'''
    _require(data, "survival", "stratified_gehan")
    numerator, denominator = _stratified_terms(data, "gehan")
    if denominator <= 0:
        return 1.0
    return float(min(1.0, 2 * norm.sf(abs(numerator) / np.sqrt(denominator))))


TEST_FUNCTIONS = {
    "t_test": t_test,
    "stratified_t": stratified_t,
    "mantel_haenszel": mantel_haenszel,
    "pooled_2x2_chi2": pooled_2x2_chi2,
    "logrank_test": logrank_test,
    "stratified_logrank": stratified_logrank,
    "stratified_gehan": stratified_gehan,
}


def reference_tests(data:TrialData, names:list[str]=None) -> dict[str, float]:
    '''
    Runs the named reference tests (all by default) and returns name -> two-sided p.
    Tests that do not fit the outcome kind are skipped with a warning.
    '''
    results = {}
    for name in names or REFERENCE_TESTS:
        if name not in TEST_FUNCTIONS:
            raise OutcomeKindError(f"Unknown reference test '{name}'.")
        if REFERENCE_TESTS[name] != data.outcome_kind:
            if names:
                logger.warning(f"Skipping {name}: it needs {REFERENCE_TESTS[name]} outcomes, data is {data.outcome_kind}")
            continue
        results[name] = TEST_FUNCTIONS[name](data)
    return results
