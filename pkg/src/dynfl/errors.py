class DynFLError(Exception):
    pass


class InputError(DynFLError, ValueError):
    """Malformed instance, point file, or stream configuration."""


class UnknownIdError(DynFLError, KeyError):
    pass


class DuplicateInsertError(DynFLError, ValueError):
    pass


class InternalInconsistency(DynFLError, RuntimeError):
    """The engine reached a state its own guards rule out."""


class AuditFailure(DynFLError):
    def __init__(self, report, message=None):
        self.report = report
        super().__init__(message or str(report))
