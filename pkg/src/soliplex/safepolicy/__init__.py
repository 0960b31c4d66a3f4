#
__version__ = "0.1.0"


class SafePolicyError(Exception):
    """Base class for errors raised by soliplex.safepolicy."""


class ValidationError(SafePolicyError):
    def __init__(self, record, reason: str = "") -> None:
        self.record = record
        self.reason = reason
        msg = f"Invalid record: {record}"
        if reason:
            msg = f"{msg} ({reason})"
        super().__init__(msg)
