import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from blocktrial import __version__
from blocktrial.settings import load_config
from blocktrial.utils.archive import dump_json
from blocktrial.utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

#Settings that affect speed and logging only
MACHINE_SETTINGS = ('workers', 'debug', 'results_dir')


@dataclass
class RunContext:
    '''
    Everything one command invocation needs besides its own flags:
    the effective settings, the replay seed and the output channel.
    '''
    config:dict
    seed:Optional[int]=None
    version:str=__version__
    started:float=field(default_factory=time.perf_counter)

    @classmethod
    def create(cls, seed:int=None, **overrides) -> "RunContext":
        return cls(config=load_config(overrides), seed=seed)

    @property
    def workers(self) -> int:
        return self.config['workers']

    @property
    def debug(self) -> bool:
        return self.config['debug']

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.started

    def describe(self, portable:bool=False) -> dict:
        '''
        Version, seed and effective settings, attached to every report.
        portable leaves out the settings that never change results, so output
        stays byte-identical across machines and worker counts.
        '''
        config = {key: value for key, value in self.config.items() if not (portable and key in MACHINE_SETTINGS)}
        return {'version': self.version, 'seed': self.seed, 'config': config}

    def send(self, payload:dict, out:str=None):
        '''Prints a report as JSON on stdout and optionally writes the same text to out.'''
        text = dump_json(payload)
        sys.stdout.write(text)
        sys.stdout.flush()
        if out:
            path = Path(out)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            logger.info(f"Report written to {path}")


class ArgParser(argparse.ArgumentParser):
    def error(self, message): #So it doesn't throw a SystemExit
        raise ConfigError(message)


class Command():
    '''
    Base class of every CLI command, the extensions subclass it and register
    an instance through their setup() function.
    '''
    name:str = None
    help:str = None

    def __init__(self, cli):
        self.cli = cli

    def add_arguments(self, parser:ArgParser):
        pass

    def run(self, args:argparse.Namespace, ctx:RunContext) -> int:
        raise NotImplementedError
