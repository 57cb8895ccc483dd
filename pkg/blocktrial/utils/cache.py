import logging
from typing import Any, Callable, Hashable

logger = logging.getLogger(__name__)


class Caching():
    '''
    A class aimed squarely at making caching of expensive per-scenario values easier
    to handle, and centralize it. Values live in named tables and are lazy-loaded
    through a loader function whenever they are requested and missing.
    '''

    def __init__(self):
        self.cache = {}

    def get(self, table:str, key:Hashable, loader:Callable[[], Any]=None) -> Any:
        '''
        Returns the value stored under key in table. If it is not present,
        calls loader, stores the result and returns it.

        Example:
        Caching.get(table="censoring", key=scenario_key, loader=lambda: calibrate(...))
        '''
        records = self.cache.setdefault(table, {})
        if key in records:
            logger.debug(f"Loading {table}[{key}] from cache...")
            return records[key]
        if loader is None:
            raise KeyError(f"Nothing cached under {table}[{key}] and no loader given.")
        logger.debug(f"Computing {table}[{key}] and loading into cache...")
        records[key] = loader()
        return records[key]
