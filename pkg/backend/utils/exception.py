import sys


def error_message_detail(error, error_detail: sys):
    _, _, exc_tb = error_detail.exc_info()

    if exc_tb is None:
        return str(error)

    # Walk to the innermost frame, that is where the failure happened
    while exc_tb.tb_next is not None:
        exc_tb = exc_tb.tb_next

    file_name = exc_tb.tb_frame.f_code.co_filename

    error_message = "Error occurred python script name [{0}] line number [{1}] error message [{2}]".format(
        file_name, exc_tb.tb_lineno, str(error)
    )

    return error_message


class CustomException(Exception):
    def __init__(self, error_message, error_detail: sys):
        """
        :param error_message: error (or message) being wrapped
        :param error_detail: the ``sys`` module, used to read the active traceback
        """
        super().__init__(error_message)

        self.cause = error_message if isinstance(error_message, BaseException) else None
        self.error_message = error_message_detail(
            error_message, error_detail=error_detail
        )

    def __str__(self):
        return self.error_message


# ──────────────────────────────────────────────
# Typed codec errors
# ──────────────────────────────────────────────
class CodecError(Exception):
    """Root of every error raised on purpose by the codec."""


class MalformedInputError(CodecError):
    """Raw input whose size does not match its declared geometry."""


class UnsupportedGeometryError(CodecError):
    """Frame too small for, or not aligned to, the coding grid."""


class ContractViolation(CodecError):
    """A shape/stride precondition of a network operation does not hold."""


class ConfigurationError(CodecError):
    """Inconsistent configuration (slices, model ids, unknown options)."""


class EncodeError(CodecError):
    """The range encoder was asked to code something outside its tables."""


class DecodeError(CodecError):
    """Truncated or inconsistent range-coded payload."""


class FormatError(CodecError):
    """Container magic, version or header field not understood."""


class UndefinedComparisonError(CodecError):
    """BD-rate requested for curves without a common quality range."""


class TrainingDivergedError(CodecError):
    """Non-finite loss during training; ``snapshot`` points at the dump."""

    def __init__(self, message: str, snapshot: str | None = None):
        super().__init__(message)
        self.snapshot = snapshot


def check_same_shape(a, b, what: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ContractViolation(
            f"{what}: shape mismatch, expected {tuple(a.shape)} got {tuple(b.shape)}"
        )


def check_spatial_match(a, b, what: str) -> None:
    if tuple(a.shape[-2:]) != tuple(b.shape[-2:]):
        raise ContractViolation(
            f"{what}: spatial size mismatch, {tuple(a.shape[-2:])} vs {tuple(b.shape[-2:])}"
        )
