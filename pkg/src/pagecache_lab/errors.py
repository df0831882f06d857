"""Exception hierarchy shared by every layer of the lab."""


class LabError(Exception):
    pass


class IdentityError(LabError, LookupError):
    """Unknown process, file, or out-of-range page index."""


class MappingError(LabError):
    """The caller does not have the file mapped (or may not map it)."""


class PermissionDenied(LabError, PermissionError):
    """A simulated permission check failed.

    ``policy`` names the rule that blocked the call so callers can tell an
    access-right failure from a countermeasure switch.
    """

    def __init__(self, message, policy):
        super().__init__(message)
        self.policy = policy


class WorkingSetError(LabError):
    pass


class CacheFullError(LabError):
    """Every resident page is pinned; nothing can be replaced."""


class EvictionSetError(LabError):
    pass


class ChannelError(LabError):
    pass


class ChannelTimeout(ChannelError):
    pass


class InvariantViolation(LabError, AssertionError):
    pass


class ConfigError(LabError, ValueError):
    def __init__(self, message, *, field=None, line=None, source=None):
        self.field = field
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
        if field:
            message = f"{field}: {message}"
        super().__init__(f"{where} {message}" if where else message)
