'''Some common exceptions used in this project'''


class BlockTrialError(Exception):
    '''Base class, carries the process exit code the CLI should use.'''
    exit_code = 1


class UserInputError(BlockTrialError):
    '''Triggered when a user entered a wrong value.'''
    exit_code = 2


class InvalidDesignError(UserInputError):
    '''Block size, block count or institution count is not usable.'''
    pass


class InvalidDataError(UserInputError):
    '''
    Raised when trial data breaks the permuted block structure.
    Carries every violation found, not just the first one.
    '''

    def __init__(self, message:str, violations:list=None):
        super().__init__(message)
        self.violations = list(violations) if violations else []


class OutcomeKindError(UserInputError):
    '''An outcome kind was passed to a score or test that cannot use it.'''
    pass


class InconsistentConditioningError(UserInputError):
    '''Observed institution counts are impossible under the design.'''
    pass


class UndefinedRatioError(UserInputError):
    '''Mortality ratio has no deaths (or no follow-up) in the denominator arm.'''
    pass


class EnumerationCapError(UserInputError):
    '''Raised when a design is too large to enumerate exhaustively.'''

    def __init__(self, size:int, cap:int):
        super().__init__(f"Sample space has {size} points which exceeds the enumeration cap of {cap}.")
        self.size = size
        self.cap = cap


class IncompleteTrialError(UserInputError):
    '''The data stream ended before the final planned look.'''
    pass


class NumericFailureError(BlockTrialError):
    '''Raised when a computation produced a value that cannot be trusted.'''
    exit_code = 3


class ImpossibleStateError(NumericFailureError):
    '''Zero randomization variance while the statistic is away from its mean.'''
    pass


class CalibrationError(NumericFailureError):
    '''Censoring calibration did not converge.'''
    pass


class ConfigError(BlockTrialError):
    '''Bad command line flags or scenario files.'''
    exit_code = 4


class UnknownKeyError(ConfigError):
    '''
    Raised for keys a strict config parser does not know about,
    suggestion holds the closest valid key, if any.
    '''

    def __init__(self, key:str, suggestion:str=None):
        message = f"Unknown config key '{key}'."
        if suggestion:
            message += f" Did you mean '{suggestion}'?"
        super().__init__(message)
        self.key = key
        self.suggestion = suggestion


class MissingKeyError(ConfigError):
    '''A required config key was not given.'''

    def __init__(self, key:str):
        super().__init__(f"Missing required config key '{key}'.")
        self.key = key
