"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands or grammar components have incompatible dimensions."""


class ZeroProbabilityError(RuntimeError):
    """A sentence has probability zero under the grammar, so the requested
    quantity (posteriors, training loss) is undefined."""


class TreebankError(ValueError):
    """Malformed bracketed-tree input; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SamplingError(RuntimeError):
    """Ancestral sampling rejected almost every derivation."""
