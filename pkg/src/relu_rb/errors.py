"""Exception types shared across the package."""


class ReluRbError(Exception):
    """Base class for all library errors."""


class ShapeError(ReluRbError, ValueError):
    """Inconsistent array or layer dimensions."""


class CompositionError(ReluRbError, ValueError):
    """Networks cannot be composed (input/output dimensions disagree)."""


class ParameterError(ReluRbError, ValueError):
    """A construction parameter is outside its admissible range."""


class ParseError(ReluRbError, ValueError):
    """Malformed serialized network.

    ``offset`` is the byte offset of the first defect when known.
    """

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None
                         else f"{message} (at offset {offset})")
        self.offset = offset


class EllipticityError(ReluRbError, ValueError):
    """The diffusion coefficient is not uniformly positive on the box."""


class SolverError(ReluRbError, RuntimeError):
    """A linear solve failed or left an unacceptable residual."""
