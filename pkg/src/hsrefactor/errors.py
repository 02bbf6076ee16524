"""Exception hierarchy shared across the package."""


class HsRefactorError(Exception):
    """Base class for every error raised by this package."""


class UnreadableInput(HsRefactorError):
    pass


class MalformedGraph(HsRefactorError):
    pass


class MissingSlot(HsRefactorError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name


class PipelineWiring(HsRefactorError):
    """An agent was invoked without the artifacts its role consumes."""


class BackendUnavailable(HsRefactorError):
    pass


class BackendRefusal(HsRefactorError):
    pass


class ContextOverflow(HsRefactorError):
    def __init__(self, tokens, window):
        super().__init__(f"prompt needs ~{tokens} tokens, window is {window}")
        self.tokens = tokens
        self.window = window


class ScriptMiss(HsRefactorError):
    pass


class AuthFailure(HsRefactorError):
    pass


class NoSourcesFound(HsRefactorError):
    pass


class WorkspaceNotWritable(HsRefactorError):
    pass


class MalformedPayload(HsRefactorError):
    pass


class PathEscape(HsRefactorError):
    pass


class ToolMissing(HsRefactorError):
    pass


class ToolchainMissing(ToolMissing):
    pass


class MalformedToolOutput(HsRefactorError):
    pass


class NoExecutableTarget(HsRefactorError):
    pass


class ZeroBaseline(HsRefactorError):
    pass


class EmptyInput(HsRefactorError):
    pass


class SchemaMismatch(HsRefactorError):
    pass


class ApiUnavailable(HsRefactorError):
    pass


class RateLimited(HsRefactorError):
    def __init__(self, retry_after):
        super().__init__(f"rate limited, retry after {retry_after}s")
        self.retry_after = retry_after


class MissingLoc(HsRefactorError):
    pass


class SelectionShortfall(HsRefactorError):
    def __init__(self, deficits):
        detail = ", ".join(f"{cat}: need {need} have {have}" for cat, need, have in deficits)
        super().__init__(f"selection shortfall ({detail})")
        self.deficits = list(deficits)
