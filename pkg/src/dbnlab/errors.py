"""Exception types shared across the library."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """An argument is outside its documented domain."""


class NumericOverflowError(ArithmeticError):
    """A computation produced a non-finite value.

    Carries enough context (layer, iteration) to locate the blow-up.
    """

    def __init__(self, message, *, layer=None, iteration=None):
        parts = [message]
        if layer is not None:
            parts.append(f"layer={layer}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        super().__init__(" ".join(parts))
        self.layer = layer
        self.iteration = iteration


class IdxFormatError(ValueError):
    """An IDX file is malformed; ``offset`` is the failing byte position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
