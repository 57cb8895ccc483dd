import importlib
import logging
import sys
import traceback
from difflib import get_close_matches

from blocktrial import __version__
from blocktrial.utils.context import ArgParser, Command, RunContext
from blocktrial.utils.exceptions import (BlockTrialError, ConfigError, InvalidDataError, NumericFailureError,
                                         UserInputError)

logger = logging.getLogger(__name__)

'''
All commands that are registered on start-up, change these to alter which commands are available
(Note: These refer to module names under extensions/, not command names)
'''
initial_commands = (
    'extensions.analyze',
    'extensions.simulate',
    'extensions.monitor',
    'extensions.oracle',
    'extensions.ci',
)


class BlockTrialCLI():
    '''The command line application, commands are loaded from extensions like plugins.'''

    def __init__(self):
        self.commands = {}
        self.parser = ArgParser(
            prog="blocktrial",
            description="Randomization inference for multi-center trials with permuted block randomization.",
        )
        self.parser.add_argument('--version', action='version', version=f"blocktrial {__version__}")
        self.parser.add_argument('--debug', action='store_true', help="Verbose logging, overrides the debug setting")
        self.subparsers = self.parser.add_subparsers(dest="command", metavar="command", parser_class=ArgParser)

    def load_extension(self, name:str):
        module = importlib.import_module(name)
        if not hasattr(module, "setup"):
            raise ConfigError(f"Extension {name} has no setup function.")
        module.setup(self)

    def add_command(self, command:Command):
        parser = self.subparsers.add_parser(command.name, help=command.help, description=command.__doc__)
        command.add_arguments(parser)
        self.commands[command.name] = command

    def invoke(self, argv:list) -> int:
        if argv and not argv[0].startswith("-") and argv[0] not in self.commands:
            '''
            Suggests commands that are similar in case of typos.
            '''
            matches = get_close_matches(argv[0], list(self.commands))
            hint = f" Did you mean '{matches[0]}'?" if matches else f" Choose from: {', '.join(self.commands)}"
            raise ConfigError(f"Unknown command '{argv[0]}'.{hint}")

        args = self.parser.parse_args(argv)
        if args.command is None:
            self.parser.print_help(sys.stderr)
            raise ConfigError("No command given.")

        ctx = RunContext.create(
            seed=getattr(args, "seed", None),
            debug=True if args.debug else None,
            workers=getattr(args, "workers", None),
        )
        if ctx.debug:
            logging.getLogger().setLevel(logging.DEBUG)
            logger.debug(f"Effective settings: {ctx.config}")

        logger.info(f"Running command {args.command} (blocktrial {__version__})")
        code = self.commands[args.command].run(args, ctx)
        logger.info(f"Command {args.command} finished in {ctx.elapsed:.1f}s")
        return code

    def on_command_error(self, error:Exception) -> int:
        '''
        Global Command Error Handler

        Prints a diagnostic for every known error and returns its exit code.
        Everything else is logged with its traceback and exits with 1.
        '''

        if isinstance(error, InvalidDataError):
            print(f"Invalid data: {error}", file=sys.stderr)
            for violation in error.violations[1:]:
                print(f"  - {violation}", file=sys.stderr)
            return error.exit_code

        elif isinstance(error, UserInputError):
            print(f"Data error: {error}", file=sys.stderr)
            return error.exit_code

        elif isinstance(error, NumericFailureError):
            print(f"Numeric failure: {error}", file=sys.stderr)
            return error.exit_code

        elif isinstance(error, ConfigError):
            print(f"Configuration error: {error}", file=sys.stderr)
            return error.exit_code

        elif isinstance(error, BlockTrialError):
            print(f"Error: {error}", file=sys.stderr)
            return error.exit_code

        elif isinstance(error, KeyboardInterrupt):
            print("Interrupted.", file=sys.stderr)
            return 1

        else:
            '''If no known error has been passed, we will print the exception to console as usual'''
            logger.error("Unhandled exception:")
            logger.error("".join(traceback.format_exception(type(error), error, error.__traceback__)))
            return 1

    def run(self, argv:list=None) -> int:
        argv = list(sys.argv[1:] if argv is None else argv)
        try:
            return self.invoke(argv)
        except (Exception, KeyboardInterrupt) as error:
            return self.on_command_error(error)


def main(argv:list=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s:%(name)s: %(message)s")
    cli = BlockTrialCLI()
    for extension in initial_commands:
        cli.load_extension(extension)
    return cli.run(argv)


if __name__ == '__main__':
    sys.exit(main())
