import logging

from blocktrial.dataio import read_trial_csv
from blocktrial.rerandomization import DEFAULT_REPS, RERANDOMIZATION_STREAM, confidence_interval
from blocktrial.streams import make_rng
from blocktrial.utils.context import ArgParser, Command, RunContext

logger = logging.getLogger(__name__)


class ConfidenceInterval(Command):
    '''Rerandomization interval for the arm A over arm B mortality ratio.'''
    name = "ci"
    help = "Confidence interval for the ratio of mortality rates by rerandomization."

    def add_arguments(self, parser:ArgParser):
        parser.add_argument('--data', required=True, help="Survival trial CSV file")
        parser.add_argument('--seed', type=int, required=True, help="Master seed of the rerandomizations")
        parser.add_argument('--reps', type=int, default=DEFAULT_REPS, help="Number of rerandomizations")
        parser.add_argument('--level', type=float, default=0.95, help="Confidence level")
        parser.add_argument('--block-size', type=int, help="Block size, defaults to the size of the first block")
        parser.add_argument('--institutions', type=int, help="Number of institutions, defaults to the highest label")
        parser.add_argument('--out', help="Also write the JSON report to this file")

    def run(self, args, ctx:RunContext) -> int:
        data = read_trial_csv(args.data, "survival", args.block_size, args.institutions)
        interval = confidence_interval(data, make_rng(args.seed, RERANDOMIZATION_STREAM), args.reps, args.level)
        logger.info(f"Mortality ratio {interval.summary.ratio:.4g}, {args.level:.0%} interval [{interval.low:.4g}, {interval.high:.4g}]")
        payload = interval.to_dict()
        payload.update(ctx.describe(portable=True))
        ctx.send(payload, args.out)
        return 0


def setup(cli):
    logger.info("Adding command: ci...")
    cli.add_command(ConfidenceInterval(cli))
