"""Exception hierarchy shared by the library and the CLI."""


class IrsMecError(Exception):
    """Base class for all errors raised by :mod:`irsmec`."""


class DomainError(IrsMecError, ValueError):
    """An argument lies outside the domain of a formula."""


class InfeasibleError(IrsMecError, ValueError):
    """A device cannot meet its deadline with the requested parameters."""


class DegenerateChannelError(IrsMecError, ValueError):
    """A composite channel gain is (numerically) zero."""


class BudgetError(IrsMecError, ValueError):
    """An exhaustive search was asked to exceed its size budget."""


class ValidationError(IrsMecError, ValueError):
    """Invalid configuration, scheme name or table/figure combination."""


class ConvergenceError(IrsMecError, RuntimeError):
    """A scalar search hit its iteration cap without meeting tolerance."""
