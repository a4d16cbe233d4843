"""Exception hierarchy for prokex."""


class ProkexError(Exception):
    pass


# stage documents
class MalformedDocument(ProkexError):
    pass


class SchemaViolation(ProkexError):
    pass


class StageMismatch(ProkexError):
    pass


# prompt chain
class MissingAsset(ProkexError):
    def __init__(self, slot: str):
        super().__init__(f"no asset or input for slot {{{slot}}}")
        self.slot = slot


class StageFailed(ProkexError):
    def __init__(self, stage_id: str, last_error: Exception, trace=None):
        super().__init__(f"{stage_id} failed: {type(last_error).__name__}: {last_error}")
        self.stage_id = stage_id
        self.last_error = last_error
        self.trace = trace


class GraphInvalid(StageFailed):
    pass


class EmptyProcedure(StageFailed):
    """No step survived filtering, so there is nothing to put in a graph."""


# backends
class NoPayloadFound(MalformedDocument):
    pass


class BackendError(ProkexError):
    pass


class MissingCredential(BackendError):
    pass


class Timeout(BackendError):
    pass


class AuthFailed(BackendError):
    pass


class RateLimited(BackendError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class TransportError(BackendError):
    pass


# knowledge graph
class UnsluggableKey(ProkexError):
    pass


class TurtleSyntaxError(ProkexError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownPrefix(TurtleSyntaxError):
    pass


# ratings
class RatingsError(ProkexError):
    pass


class BadHeader(RatingsError):
    pass


class DuplicateCell(RatingsError):
    pass


class ScoreOutOfRange(RatingsError):
    pass


class NothingPairable(RatingsError):
    pass


class DegenerateData(RatingsError):
    pass


class EmptyInput(RatingsError):
    pass
