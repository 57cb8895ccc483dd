import logging

from blocktrial.dataio import read_trial_csv
from blocktrial.report import MODES, analyze
from blocktrial.scores import SCORE_KINDS
from blocktrial.trial import OUTCOME_KINDS
from blocktrial.utils.context import ArgParser, Command, RunContext

logger = logging.getLogger(__name__)


class Analyze(Command):
    '''Randomization test of a finished trial.'''
    name = "analyze"
    help = "Run the conditional or unconditional randomization test on a trial file."

    def add_arguments(self, parser:ArgParser):
        parser.add_argument('--data', required=True, help="Trial CSV file")
        parser.add_argument('--outcome', required=True, choices=OUTCOME_KINDS, help="Outcome kind, selects the CSV schema")
        parser.add_argument('--score', choices=SCORE_KINDS, help="Score function, defaults to the natural score of the outcome")
        parser.add_argument('--mode', choices=MODES, default="conditional", help="Condition on the per-institution arm A totals or not")
        parser.add_argument('--sided', type=int, choices=(1, 2), default=2, help="One-sided tests look for benefit on arm A")
        parser.add_argument('--alpha', type=float, default=0.05, help="Significance level of the reported decision")
        parser.add_argument('--block-size', type=int, help="Block size, defaults to the size of the first block")
        parser.add_argument('--institutions', type=int, help="Number of institutions, defaults to the highest label")
        parser.add_argument('--reference', action='store_true', help="Also run the classical tests fitting the outcome")
        parser.add_argument('--out', help="Also write the JSON report to this file")

    def run(self, args, ctx:RunContext) -> int:
        data = read_trial_csv(args.data, args.outcome, args.block_size, args.institutions)
        report = analyze(
            data, mode=args.mode, score_kind=args.score, sided=args.sided, alpha=args.alpha,
            with_reference=args.reference, seed=ctx.seed, config=ctx.config,
        )
        ctx.send(report.to_dict(), args.out)
        return 0


def setup(cli):
    logger.info("Adding command: analyze...")
    cli.add_command(Analyze(cli))
