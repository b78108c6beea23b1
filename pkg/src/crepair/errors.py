"""Exception types shared across the toolkit.

Every failure mode a caller is expected to handle has its own class so the
CLI can map exceptions to machine-readable error records.
"""

from __future__ import annotations


class CRepairError(Exception):
    """Base class for all toolkit errors."""


# --- program model ---------------------------------------------------------

class LexError(CRepairError):
    def __init__(self, line: int, col: int, reason: str):
        super().__init__(f"line {line}, col {col}: {reason}")
        self.line = line
        self.col = col
        self.reason = reason


class ProgramTooLarge(CRepairError):
    pass


# --- corruption engine -----------------------------------------------------

class DisallowedOp(CRepairError):
    pass


class NoEligibleSite(CRepairError):
    def __init__(self, category, op):
        super().__init__(f"no eligible site for {category} / {op}")
        self.category = category
        self.op = op


class SourceDoesNotCompile(CRepairError):
    def __init__(self, source_id: str, detail: str = ""):
        super().__init__(f"parent program {source_id!r} does not compile: {detail}")
        self.source_id = source_id


class ExhaustedRetries(CRepairError):
    def __init__(self, source_id: str):
        super().__init__(f"retry budget exhausted for every variant of {source_id!r}")
        self.source_id = source_id


# --- compiler diagnostics --------------------------------------------------

class CompilerUnavailable(CRepairError):
    pass


class CompilerTimeout(CRepairError):
    def __init__(self, seconds: float):
        super().__init__(f"compiler exceeded {seconds} s")
        self.seconds = seconds


class UnknownPlaceholder(CRepairError):
    def __init__(self, name: str):
        super().__init__(f"placeholder {name!r} not present in id_map")
        self.name = name


# --- model -----------------------------------------------------------------

class EmptyCorpus(CRepairError):
    pass


class SequenceTooLong(CRepairError):
    pass


class TargetTooLong(CRepairError):
    pass


class NonFiniteLoss(CRepairError):
    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"non-finite loss at step {step}. {detail}")
        self.step = step


class GradientMismatch(CRepairError):
    def __init__(self, tensor_name: str, max_rel_err: float):
        super().__init__(f"gradient mismatch in {tensor_name!r}: max rel err {max_rel_err:.3e}")
        self.tensor_name = tensor_name
        self.max_rel_err = max_rel_err


class ModelMissing(CRepairError):
    pass


# --- datasets / storage ----------------------------------------------------

class MissingGroundTruth(CRepairError):
    pass


class EmptyAfterDedup(CRepairError):
    pass


class FormatVersionError(CRepairError):
    def __init__(self, found, expected):
        super().__init__(f"unsupported format_version {found!r} (expected {expected!r})")
        self.found = found
        self.expected = expected
