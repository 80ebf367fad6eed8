"""Error hierarchy shared by every service, with stable numeric codes for the RPC gateway."""


class GridHelmError(Exception):
    """Base for all application errors. ``code`` is the wire-level error code."""

    code = 1000

    @property
    def name(self) -> str:
        return type(self).__name__


class IllegalTransition(GridHelmError):
    code = 1001

    def __init__(self, from_state, to_state, reason: str = ""):
        self.from_state = from_state
        self.to_state = to_state
        msg = f"illegal transition {from_state} -> {to_state}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class ZeroActualRuntime(GridHelmError):
    code = 1002


class EmptyList(GridHelmError):
    code = 1003


class SiteDown(GridHelmError):
    code = 1004


class DuplicateTask(GridHelmError):
    code = 1005


class ClockRegression(GridHelmError):
    code = 1006


class UnknownTask(GridHelmError):
    code = 1007


class UnknownSite(GridHelmError):
    code = 1008


class NoLink(GridHelmError):
    code = 1009


class UnreadableSource(GridHelmError):
    code = 1010


class EmptyHistory(GridHelmError):
    code = 1011


class MissingSubmittedEstimate(GridHelmError):
    code = 1012

    def __init__(self, task_id: str):
        self.task_id = task_id
        super().__init__(f"no submitted estimate recorded for task {task_id!r}")


class NoAliveSites(GridHelmError):
    code = 1013


class EstimationFailed(GridHelmError):
    code = 1014

    def __init__(self, site_id: str, cause: Exception):
        self.site_id = site_id
        self.cause = cause
        super().__init__(f"estimation failed at site {site_id!r}: {cause}")


class DuplicateService(GridHelmError):
    code = 1015


class UnknownService(GridHelmError):
    code = 1016


class Unauthorized(GridHelmError):
    code = 1017


class SessionExpired(GridHelmError):
    code = 1018


class BadCredentials(GridHelmError):
    code = 1019


class DuplicatePlan(GridHelmError):
    code = 1020


class SeqExpired(GridHelmError):
    code = 1021


class FabricUnreachable(GridHelmError):
    code = 1022


ERROR_CODES = {
    cls.code: cls.__name__
    for cls in [
        GridHelmError,
        IllegalTransition,
        ZeroActualRuntime,
        EmptyList,
        SiteDown,
        DuplicateTask,
        ClockRegression,
        UnknownTask,
        UnknownSite,
        NoLink,
        UnreadableSource,
        EmptyHistory,
        MissingSubmittedEstimate,
        NoAliveSites,
        EstimationFailed,
        DuplicateService,
        UnknownService,
        Unauthorized,
        SessionExpired,
        BadCredentials,
        DuplicatePlan,
        SeqExpired,
        FabricUnreachable,
    ]
}
