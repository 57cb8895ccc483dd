import json
import logging
import os

from blocktrial.dataio import read_trial_csv
from blocktrial.scores import SCORE_KINDS
from blocktrial.sequential import MODES, GstPlan, MonitorState, default_c_final, monitor_available
from blocktrial.settings import tolerance_settings
from blocktrial.trial import OUTCOME_KINDS
from blocktrial.utils.archive import write_json
from blocktrial.utils.context import ArgParser, Command, RunContext
from blocktrial.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)


def _look_blocks(value:str) -> list[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--look-blocks takes comma separated block counts, got '{value}'.")


class Monitor(Command):
    '''
    Group sequential monitoring with O'Brien-Fleming boundaries. With --state the
    looks already taken are read from, and the updated state written back to, a JSON file.
    '''
    name = "monitor"
    help = "Take every interim look whose blocks are present in a trial file."

    def add_arguments(self, parser:ArgParser):
        parser.add_argument('--data', required=True, help="Trial CSV file with the blocks accrued so far")
        parser.add_argument('--outcome', required=True, choices=OUTCOME_KINDS, help="Outcome kind, selects the CSV schema")
        parser.add_argument('--score', choices=SCORE_KINDS, help="Score function, defaults to the natural score of the outcome")
        parser.add_argument('--mode', choices=MODES, default="conditional", help="Statistic used at each look")
        parser.add_argument('--looks', type=int, default=4, help="Number of equally spaced looks")
        parser.add_argument('--max-blocks', type=int, help="Planned number of blocks, defaults to the blocks in the file")
        parser.add_argument('--look-blocks', help="Cumulative block counts of unequally spaced looks, e.g. 5,12,20")
        parser.add_argument('--c-final', type=float, help="Final critical value, built in only for 4 looks at one-sided 0.025")
        parser.add_argument('--alpha', type=float, default=0.025, help="Overall significance level")
        parser.add_argument('--sided', type=int, choices=(1, 2), default=1, help="One-sided looks test for benefit on arm A")
        parser.add_argument('--block-size', type=int, help="Block size, defaults to the size of the first block")
        parser.add_argument('--institutions', type=int, help="Number of institutions, defaults to the highest label")
        parser.add_argument('--state', help="Monitoring state file, read if it exists and rewritten after the looks")
        parser.add_argument('--out', help="Also write the JSON report to this file")

    def plan(self, args, num_blocks:int) -> GstPlan:
        if args.look_blocks:
            look_blocks = _look_blocks(args.look_blocks)
            c_final = args.c_final if args.c_final is not None else default_c_final(len(look_blocks), args.alpha, args.sided)
            return GstPlan.from_look_blocks(look_blocks, c_final, args.alpha, args.sided)
        max_blocks = args.max_blocks or num_blocks
        return GstPlan.equally_spaced(args.looks, max_blocks, args.c_final, args.alpha, args.sided)

    def run(self, args, ctx:RunContext) -> int:
        data = read_trial_csv(args.data, args.outcome, args.block_size, args.institutions)

        state = None
        if args.state and os.path.isfile(args.state):
            try:
                with open(args.state, encoding="utf-8") as file:
                    state = MonitorState.from_dict(json.load(file))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ConfigError(f"Cannot resume from '{args.state}': {e}")
            logger.info(f"Resuming monitoring at look {state.next_look} of {state.plan.num_looks}")
            plan = state.plan
        else:
            plan = self.plan(args, data.num_blocks)

        state = monitor_available(data, plan, state, args.score, args.mode, **tolerance_settings(ctx.config))
        if args.state:
            write_json(args.state, state.to_dict())

        payload = state.to_dict()
        payload.update(ctx.describe())
        ctx.send(payload, args.out)
        return 0


def setup(cli):
    logger.info("Adding command: monitor...")
    cli.add_command(Monitor(cli))
