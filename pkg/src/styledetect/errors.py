"""Engine error type with machine-readable codes.

Every anticipated failure raises ``EngineError`` with a stable ``code``
string; the CLI maps these to diagnostics on stderr and a nonzero exit.
"""

from __future__ import annotations


class EngineError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


class CorpusError(EngineError):
    pass


class StoreError(EngineError):
    pass


class TrainError(EngineError):
    pass


class MetricError(EngineError):
    pass


class ProtocolError(EngineError):
    pass
