'''Power tables 1 to 5: fixed scenario grids run through the simulation engine.'''

import logging
from dataclasses import dataclass, field

import pandas as pd

from blocktrial.simulation import PowerResult, Scenario, estimate_power
from blocktrial.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

FULL_REPLICATIONS = 5000
#(n, K) columns shared by the fixed-sample tables
FIXED_GRID = (
    (120, 10), (120, 20), (120, 40),
    (240, 20), (240, 40), (240, 60), (240, 80),
    (360, 20), (360, 40), (360, 60), (360, 80), (360, 100),
)
FIXED_BLOCK_SIZES = (4, 8)

SEQUENTIAL_N = 480
SEQUENTIAL_INSTITUTIONS = (10, 20, 40, 60)
SEQUENTIAL_BLOCK_SIZES = (4, 8)
#Outcome -> (comparator rows), the conditional procedure always comes first
SEQUENTIAL_ROWS = {
    "continuous": ("gst_conditional", "gst_unconditional"),
    "binary": ("gst_conditional", "gst_unconditional"),
    "survival": ("gst_conditional", "gst_stratified_logrank"),
}

FIXED_TABLES = {
    1: dict(outcome="continuous", block_effects=False),
    2: dict(outcome="continuous", block_effects=True),
    3: dict(outcome="binary"),
    4: dict(outcome="survival", censoring=0.19),
}
TABLE_IDS = (1, 2, 3, 4, 5)


@dataclass
class TableRun:
    table:int
    scale:float
    seed:int
    replications:int
    frame:pd.DataFrame
    results:list=field(default_factory=list)

    def to_dict(self) -> dict:
        '''Everything but runtimes, so the output is identical between runs.'''
        return {
            'table': self.table,
            'scale': self.scale,
            'seed': self.seed,
            'replications': self.replications,
            'results': [result.to_dict() for result in self.results],
        }


def replications_for(scale:float) -> int:
    if not 0 < scale <= 1:
        raise ConfigError(f"Scale must lie in (0, 1], got {scale}.")
    return max(1, round(FULL_REPLICATIONS * scale))


def _column(n_total:int, institutions:int) -> str:
    return f"n={n_total} K={institutions}"


def table_scenarios(table:int, scale:float=1.0) -> list[tuple[dict, Scenario]]:
    '''(row key fields, scenario) for every cell group of a table.'''
    replications = replications_for(scale)
    cells = []
    if table in FIXED_TABLES:
        for block_size in FIXED_BLOCK_SIZES:
            for n_total, institutions in FIXED_GRID:
                scenario = Scenario(
                    n_total=n_total, institutions=institutions, block_size=block_size,
                    name=f"table{table}_N{block_size}_n{n_total}_K{institutions}",
                    replications=replications, **FIXED_TABLES[table],
                )
                cells.append(({'block_size': block_size, 'column': _column(n_total, institutions)}, scenario))
    elif table == 5:
        for outcome, rows in SEQUENTIAL_ROWS.items():
            for block_size in SEQUENTIAL_BLOCK_SIZES:
                for institutions in SEQUENTIAL_INSTITUTIONS:
                    scenario = Scenario(
                        outcome=outcome, n_total=SEQUENTIAL_N, institutions=institutions, block_size=block_size,
                        name=f"table5_{outcome}_N{block_size}_K{institutions}",
                        replications=replications, tests=rows, alpha=0.025, sided=1, looks=4,
                        censoring=0.185, chi2_df=4, chi2_scale=0.25,
                    )
                    cells.append(({'outcome': outcome, 'column': f"N={block_size} K={institutions}"}, scenario))
    else:
        raise ConfigError(f"Unknown table {table}. Choose from: {', '.join(map(str, TABLE_IDS))}")
    return cells


def reproduce_table(table:int, scale:float=1.0, seed:int=0, workers:int=1, config:dict=None) -> TableRun:
    '''
    Runs every scenario of a table and lays the rejection rates out with one row per
    test, adding a standard error column for every power column. config is handed to
    estimate_power.
    '''
    cells = table_scenarios(table, scale)
    group_key = 'block_size' if table in FIXED_TABLES else 'outcome'
    rows = {}
    columns = []
    results = []

    for position, (keys, scenario) in enumerate(cells, start=1):
        logger.info(f"Table {table}: scenario {position}/{len(cells)} ({scenario.name})")
        result = estimate_power(scenario, seed, workers, config)
        results.append(result)
        if keys['column'] not in columns:
            columns.append(keys['column'])
        for test in scenario.tests:
            row = rows.setdefault((keys[group_key], test), {group_key: keys[group_key], 'test': test})
            row[keys['column']] = result.rejection[test]
            row[f"se {keys['column']}"] = result.se[test]

    order = [group_key, 'test'] + columns + [f"se {column}" for column in columns]
    frame = pd.DataFrame(list(rows.values()))[order]
    return TableRun(table, scale, seed, replications_for(scale), frame, results)


def write_table(frame:pd.DataFrame, path:str):
    frame.to_csv(path, index=False, float_format="%.4f", lineterminator="\n")
