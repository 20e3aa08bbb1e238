"""Exception hierarchy shared by every hmaw module."""

from __future__ import annotations


class HMAWError(Exception):
    """Base class for all hmaw errors."""


# -- configuration -----------------------------------------------------------


class ConfigError(HMAWError):
    """Invalid chain, run or CLI configuration."""


class InvalidLayerCount(ConfigError):
    pass


class AblationUnsupportedForChain(ConfigError):
    pass


class UnknownTheme(ConfigError):
    pass


# -- workflow ----------------------------------------------------------------


class MissingUpstreamInstruction(HMAWError):
    """A non-first layer was rendered without its superior's instruction."""


class EmptyBackendReply(HMAWError):
    """A layer returned only whitespace; the run is aborted."""

    def __init__(self, step_index: int, role: str):
        super().__init__(f"step {step_index} ({role}) returned an empty reply")
        self.step_index = step_index
        self.role = role


# -- backend -----------------------------------------------------------------


class BackendError(HMAWError):
    """Any failure talking to a chat backend.

    ``step_index`` is filled in by the workflow engine when the error
    surfaces from inside a pipeline run, ``attempts`` by the retry loop.
    """

    retry_class: str | None = None

    def __init__(self, message: str = "", *, status: int | None = None):
        super().__init__(message)
        self.status = status
        self.step_index: int | None = None
        self.attempts: int = 1


class AuthError(BackendError):
    pass


class RateLimited(BackendError):
    retry_class = "rate_limited"


class BackendTimeout(BackendError):
    retry_class = "timeout"


class MalformedReply(BackendError):
    pass


class TransportError(BackendError):
    pass


class ServerError(TransportError):
    retry_class = "server_error"


class ScriptExhausted(BackendError):
    pass


# -- datasets ----------------------------------------------------------------


class DatasetError(HMAWError):
    pass


class MalformedLine(DatasetError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class MissingGoldAnswer(DatasetError):
    def __init__(self, line_no: int):
        super().__init__(f"line {line_no}: objective record has no answer")
        self.line_no = line_no


class DuplicateId(DatasetError):
    def __init__(self, query_id: str):
        super().__init__(f"duplicate query id {query_id!r}")
        self.query_id = query_id


class SubsetTooLarge(DatasetError):
    pass


# -- evaluation --------------------------------------------------------------


class EvaluationError(HMAWError):
    pass


class GoldUnparseable(EvaluationError):
    pass


class EmptyInput(EvaluationError):
    pass


class QueryIdMismatch(EvaluationError):
    pass


class MissingTraces(EvaluationError):
    pass
