"""Error types raised by the voxseq library."""


class VoxSeqError(Exception):
    """Base class for all voxseq errors."""


class RangeError(VoxSeqError, ValueError):
    """A coordinate, curve index or grid size does not fit the bit budget."""


class ContractError(VoxSeqError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class NumericError(VoxSeqError, ArithmeticError):
    """NaN or Inf showed up where finite values are required."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, step, loss):
        self.step = step
        self.loss = loss
        super().__init__(f"Loss diverged at step {step}: {loss}")


class FormatError(VoxSeqError):
    """A VOXG / VORD file is malformed."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")
