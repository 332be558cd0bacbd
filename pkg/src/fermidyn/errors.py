"""Exception hierarchy shared by the library and the command line tool."""


class FermidynError(Exception):
    """Base class for all errors raised by fermidyn."""


class ScenarioError(FermidynError, ValueError):
    """Invalid user input: bad parameters, malformed scenario files."""


class NumericalError(FermidynError, RuntimeError):
    """A numerical invariant was violated (blow-up, lost positivity, no convergence)."""


class ResourceLimitError(FermidynError, RuntimeError):
    """A problem size exceeds a configured cap."""
