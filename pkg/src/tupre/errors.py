"""Exception hierarchy shared by all tupre modules.

The CLI maps these onto process exit codes: input problems (including
degenerate inputs and domain violations) exit with 2, numerical failures
with 3, and I/O errors with 4.
"""


class TupreError(Exception):
    """Base class for all errors raised by this package."""


class InputError(TupreError):
    """An argument violates a documented precondition."""


class DegenerateInputError(InputError):
    """Input is structurally valid but carries no usable information."""


class DomainError(InputError):
    """A formula was evaluated outside its mathematical domain."""


class NumericError(TupreError):
    """A computation produced non-finite or otherwise unusable values."""
