"""Exception hierarchy for the generator."""

from __future__ import annotations


class ItsForgeError(Exception):
    """Base class for every error raised by this package."""


class ParseError(ItsForgeError):
    def __init__(self, row: int, column: str, detail: str = "") -> None:
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: {detail}".rstrip(": "))


class DuplicateId(ItsForgeError):
    pass


class InvalidRegex(ItsForgeError):
    pass


class SchemaError(ItsForgeError):
    def __init__(self, path: str, detail: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {detail}" if detail else path)


class UnknownRoleOrService(ItsForgeError):
    pass


class UnknownAttribute(ItsForgeError):
    pass


class SizeLimitExceeded(ItsForgeError):
    pass


class UnsatisfiableDependency(ItsForgeError):
    def __init__(self, template: str, slot: int) -> None:
        self.template = template
        self.slot = slot
        super().__init__(f"{template}: local dependency slot {slot} matches no template")


class Infeasible(ItsForgeError):
    """Software selection has no solution; ``criterion`` names the culprit."""

    def __init__(self, criterion: str, detail: str = "") -> None:
        self.criterion = criterion
        super().__init__(f"criterion {criterion}: {detail}" if detail else f"criterion {criterion}")


class NoEligibleStore(ItsForgeError):
    pass


class SegmentationInfeasible(ItsForgeError):
    def __init__(self, max_segments: int, conflict: str | None = None) -> None:
        self.max_segments = max_segments
        self.conflict = conflict  # e.g. "rule 0 and rule 2"
        msg = f"no segmentation with at most {max_segments} segments"
        if conflict is not None:
            msg += f"; infeasible: {conflict}"
        super().__init__(msg)


class QuotaImpossible(ItsForgeError):
    def __init__(self, installation: int, needed: int, limit: int) -> None:
        self.installation = installation
        super().__init__(f"installation {installation} needs {needed} HQ, limit is {limit}")


class PhaseError(ItsForgeError):
    """Wraps a failure from a pipeline phase with the phase name attached."""

    def __init__(self, phase: str, cause: ItsForgeError) -> None:
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {cause}")
