import logging

import numpy as np

from blocktrial.conditional import conditional_test
from blocktrial.dataio import read_trial_csv
from blocktrial.oracle import conditional_space_size, exact_distribution, sample_space_size
from blocktrial.scores import SCORE_KINDS
from blocktrial.settings import tolerance_settings
from blocktrial.trial import OUTCOME_KINDS, tabulate_counts
from blocktrial.utils.context import ArgParser, Command, RunContext
from blocktrial.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)


def parse_counts(value:str) -> np.ndarray:
    '''Block layout "2,2;1,3": blocks separated by semicolons, institutions by commas.'''
    try:
        rows = [[int(cell) for cell in row.split(",")] for row in value.split(";") if row.strip()]
    except ValueError:
        raise ConfigError(f"--counts takes integers, e.g. '2,2;1,3', got '{value}'.")
    if not rows or len({len(row) for row in rows}) != 1:
        raise ConfigError("--counts needs the same number of institutions in every block.")
    return np.array(rows, dtype=np.int64)


def parse_totals(value:str) -> list[int]:
    try:
        return [int(cell) for cell in value.split(",")]
    except ValueError:
        raise ConfigError(f"--totals takes comma separated integers, got '{value}'.")


class Oracle(Command):
    '''Exact enumeration of the permuted block randomization distribution.'''
    name = "oracle"
    help = "Count the sample space or compute the exact distribution of S_A for small trials."

    def add_arguments(self, parser:ArgParser):
        parser.add_argument('--data', help="Trial CSV file")
        parser.add_argument('--outcome', choices=OUTCOME_KINDS, help="Outcome kind of the data file")
        parser.add_argument('--score', choices=SCORE_KINDS, help="Score function, defaults to the natural score of the outcome")
        parser.add_argument('--unconditional', action='store_true', help="Do not condition on the observed arm A totals")
        parser.add_argument('--counts', help="Per block institution counts instead of a data file, e.g. '2,2;1,3'")
        parser.add_argument('--totals', help="Arm A totals per institution to count the conditional space for")
        parser.add_argument('--cap', type=int, help="Largest sample space to enumerate")
        parser.add_argument('--block-size', type=int, help="Block size, defaults to the size of the first block")
        parser.add_argument('--institutions', type=int, help="Number of institutions, defaults to the highest label")
        parser.add_argument('--out', help="Also write the JSON report to this file")

    def count(self, args) -> dict:
        counts = parse_counts(args.counts)
        payload = {'block_counts': counts.tolist(), 'sample_space': sample_space_size(counts)}
        if args.totals:
            totals = parse_totals(args.totals)
            payload['totals'] = totals
            payload['conditional_space'] = conditional_space_size(counts, totals)
        return payload

    def enumerate(self, args, ctx:RunContext) -> dict:
        if not args.outcome:
            raise ConfigError("--outcome is required with --data.")
        data = read_trial_csv(args.data, args.outcome, args.block_size, args.institutions)
        totals = None if args.unconditional else tabulate_counts(data).arm_totals
        result = exact_distribution(data, args.score, condition_on=totals, cap=args.cap or ctx.config['enumeration_cap'])
        payload = {
            'sample_space': result.total_points,
            'conditional_space': result.conditional_points,
            'exact_mean': result.exact_mean,
            'exact_var': result.exact_var,
            'observed': result.observed,
            'p_exact': result.p_two_sided,
            'conditioned_on': result.conditioned_on,
            'distribution': [[value, weight] for value, weight in result.distribution.items()],
        }
        if totals is not None:
            payload['p_normal'] = conditional_test(data, args.score, **tolerance_settings(ctx.config)).p_two_sided
        return payload

    def run(self, args, ctx:RunContext) -> int:
        if bool(args.data) == bool(args.counts):
            raise ConfigError("Give exactly one of --data and --counts.")
        if args.totals and not args.counts:
            raise ConfigError("--totals only applies to --counts, data files are conditioned on their own totals.")
        payload = self.count(args) if args.counts else self.enumerate(args, ctx)
        logger.info(f"Sample space {payload['sample_space']}, conditional space {payload.get('conditional_space')}")
        payload.update(ctx.describe())
        ctx.send(payload, args.out)
        return 0


def setup(cli):
    logger.info("Adding command: oracle...")
    cli.add_command(Oracle(cli))
