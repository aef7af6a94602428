"""Exception taxonomy.

ValidationError (and subclasses) map to CLI exit code 1, NumericalError to
exit code 2.
"""


class AeganError(Exception):
    pass


class ValidationError(AeganError):
    """Bad configuration, bad arguments, or malformed inputs."""


class ShapeError(ValidationError):
    """Structural mismatch between tensor shapes; message reports both sides."""


class ParseError(ValidationError):
    """Corrupt or truncated file; message includes the byte offset when known."""


class NumericalError(AeganError):
    """Non-finite values or a failed numerical check during a run."""
