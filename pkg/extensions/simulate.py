import logging

import pandas as pd

from blocktrial.rerandomization import ci_coverage, coverage_scenario
from blocktrial.settings import read_scenario_file
from blocktrial.simulation import Scenario, estimate_power
from blocktrial.tables import reproduce_table
from blocktrial.utils.archive import archive_results
from blocktrial.utils.context import ArgParser, Command, RunContext
from blocktrial.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

#Scenario file keys each kind of study accepts besides 'study'
TABLE_KEYS = {'table', 'scale', 'name'}
POWER_KEYS = {
    'name', 'outcome', 'n_total', 'institutions', 'block_size', 'block_effects', 'effect', 'null',
    'institution_sd', 'institution_effects', 'chi2_df', 'chi2_scale', 'censoring', 'replications',
    'tests', 'alpha', 'looks', 'c_final', 'sided',
}
COVERAGE_KEYS = {'name', 'trials', 'reps', 'level', 'true_ratio', 'n_total', 'institutions', 'block_size', 'censoring'}


def _check_keys(values:dict, allowed:set, study:str):
    extra = sorted(set(values) - allowed - {'study'})
    if extra:
        raise ConfigError(f"Keys not used by a {study} study: {', '.join(extra)}")


class Simulate(Command):
    '''
    Monte Carlo studies described by a scenario file: one of the built-in power tables,
    a single power scenario, or the coverage study of the rerandomization interval.
    '''
    name = "simulate"
    help = "Run a simulation study from a key = value scenario file."

    def add_arguments(self, parser:ArgParser):
        parser.add_argument('--config', required=True, help="Scenario file, see etc/ for examples")
        parser.add_argument('--seed', type=int, required=True, help="Master seed, every replication stream derives from it")
        parser.add_argument('--workers', type=int, help="Worker processes, defaults to the physical core count")
        parser.add_argument('--scale', type=float, help="Override the replication scale of a table study")
        parser.add_argument('--out', help="Directory for the results files, defaults to the results_dir setting")

    def table(self, values:dict, args, ctx:RunContext) -> tuple[str, pd.DataFrame, dict, dict]:
        _check_keys(values, TABLE_KEYS, "table")
        scale = args.scale if args.scale is not None else values.get('scale', 1.0)
        run = reproduce_table(values['table'], scale, args.seed, ctx.workers, ctx.config)
        runtimes = {result.scenario: result.runtime for result in run.results}
        return values.get('name', f"table{values['table']}"), run.frame, run.to_dict(), runtimes

    def power(self, values:dict, args, ctx:RunContext) -> tuple[str, pd.DataFrame, dict, dict]:
        _check_keys(values, POWER_KEYS, "power")
        fields = {key: value for key, value in values.items() if key != 'study'}
        scenario = Scenario(**fields)
        result = estimate_power(scenario, args.seed, ctx.workers, ctx.config)
        frame = pd.DataFrame({
            'test': list(result.rejection),
            'rejection': list(result.rejection.values()),
            'se': list(result.se.values()),
        })
        payload = {'scenario': scenario.to_dict(), 'result': result.to_dict()}
        return scenario.name, frame, payload, {scenario.name: result.runtime}

    def coverage(self, values:dict, args, ctx:RunContext) -> tuple[str, pd.DataFrame, dict, dict]:
        _check_keys(values, COVERAGE_KEYS, "coverage")
        true_ratio = values.get('true_ratio', 1.5)
        layout = {key: values[key] for key in ('n_total', 'institutions', 'block_size', 'censoring') if key in values}
        scenario = coverage_scenario(true_ratio, **layout)
        result = ci_coverage(
            args.seed, trials=values.get('trials', 500), reps=values.get('reps', 1000),
            true_ratio=true_ratio, level=values.get('level', 0.95), workers=ctx.workers, scenario=scenario, config=ctx.config,
        )
        frame = pd.DataFrame([{
            'true_ratio': result.true_ratio, 'trials': result.trials, 'evaluated': result.evaluated,
            'coverage': result.coverage, 'se': result.se, 'mean_discard_fraction': result.mean_discard_fraction,
        }])
        payload = {'scenario': scenario.to_dict(), 'result': result.to_dict()}
        return values.get('name', scenario.name), frame, payload, {}

    def run(self, args, ctx:RunContext) -> int:
        values = read_scenario_file(args.config)
        if values['study'] == "coverage":
            name, frame, payload, runtimes = self.coverage(values, args, ctx)
        elif 'table' in values:
            name, frame, payload, runtimes = self.table(values, args, ctx)
        else:
            name, frame, payload, runtimes = self.power(values, args, ctx)

        payload = {'study': values['study'], 'scenario_file': values, **payload, **ctx.describe(portable=True)}
        manifest = {
            'name': name,
            'seed': args.seed,
            'scenario_file': str(args.config),
            'workers': ctx.workers,
            'elapsed_seconds': ctx.elapsed,
            'runtimes': runtimes,
            **ctx.describe(),
        }
        written = archive_results(name, args.out or ctx.config['results_dir'], payload, frame, manifest)
        payload['files'] = {kind: str(path) for kind, path in written.items()}
        ctx.send(payload)
        return 0


def setup(cli):
    logger.info("Adding command: simulate...")
    cli.add_command(Simulate(cli))
