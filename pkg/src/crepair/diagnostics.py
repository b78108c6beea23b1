"""External C compiler invocation and diagnostic-message normalization.

The compiler is run syntax-check-only on a single translation unit with
warnings suppressed and a pinned language standard, so diagnostic text is
stable across runs.  Error lines of the shape

    <file>:<line>[:<col>]: error: <message>

are parsed into Diagnostic records; everything else on stderr is kept
verbatim in CompileResult.unparsed rather than dropped.

Identifier normalization replaces program-defined variable, function and
struct/typedef names in a message with "_<varN>_", "_<funcN>_" and
"_<typeN>_" placeholders, numbered by first appearance within that one
diagnostic, and keeps the reverse mapping so repaired output can be
restored to real names.
"""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field

from .errors import CompilerTimeout, CompilerUnavailable, UnknownPlaceholder

_DIAG_RE = re.compile(
    r"^(?P<file>[^:]+):(?P<line>\d+):(?:(?P<col>\d+):)?\s*(?:fatal\s+)?error:\s*(?P<msg>.*)$")
_IDENT_RE = re.compile(r"[A-Za-z_]\w*")
_PLACEHOLDER_RE = re.compile(r"_<(var|func|type)(\d+)>_")

ENV_COMPILER = "CREPAIR_CC"


@dataclass(frozen=True)
class CompilerConfig:
    path: str = ""
    flags: tuple = ("-std=c99", "-fsyntax-only", "-w")
    timeout: float = 10.0
    max_concurrent: int = 0  # 0 = CPU count

    def resolved_path(self) -> str:
        return self.path or os.environ.get(ENV_COMPILER, "") or "gcc"


@dataclass
class Diagnostic:
    reported_line: int
    column: int | None
    raw_message: str
    normalized_message: list = field(default_factory=list)  # list[str]
    id_map: dict = field(default_factory=dict)  # placeholder -> original name

    def to_json(self) -> dict:
        return {
            "reported_line": self.reported_line,
            "column": self.column,
            "raw_message": self.raw_message,
            "normalized_message": list(self.normalized_message),
            "id_map": dict(self.id_map),
        }


@dataclass
class CompileResult:
    success: bool
    diagnostics: list  # list[Diagnostic], compiler emission order
    error_count: int
    unparsed: list = field(default_factory=list)  # stderr lines that matched nothing

    @property
    def first(self) -> Diagnostic | None:
        return self.diagnostics[0] if self.diagnostics else None


_sema_lock = threading.Lock()
_semaphores: dict = {}


def _semaphore(config: CompilerConfig) -> threading.Semaphore:
    limit = config.max_concurrent or os.cpu_count() or 1
    with _sema_lock:
        sem = _semaphores.get(limit)
        if sem is None:
            sem = threading.Semaphore(limit)
            _semaphores[limit] = sem
        return sem


def compile_source(source: str, workdir: str | None = None,
                   config: CompilerConfig = CompilerConfig()) -> CompileResult:
    """Run the configured compiler on `source`; never raises on bad programs."""
    cc = config.resolved_path()
    if shutil.which(cc) is None:
        raise CompilerUnavailable(f"compiler {cc!r} not found on PATH")

    own_dir = None
    if workdir is None:
        own_dir = tempfile.TemporaryDirectory(prefix="crepair-cc-")
        workdir = own_dir.name
    try:
        src_path = os.path.join(workdir, "unit.c")
        with open(src_path, "w", encoding="utf-8") as fh:
            fh.write(source)
        cmd = [cc, *config.flags, src_path]
        env = dict(os.environ, LC_ALL="C", LANG="C")  # stable ASCII diagnostics
        with _semaphore(config):
            try:
                proc = subprocess.run(
                    cmd, capture_output=True, text=True, timeout=config.timeout,
                    env=env)
            except subprocess.TimeoutExpired:
                raise CompilerTimeout(config.timeout)
        return _parse_output(proc.stderr)
    finally:
        if own_dir is not None:
            own_dir.cleanup()


def _parse_output(stderr: str) -> CompileResult:
    diagnostics: list[Diagnostic] = []
    unparsed: list[str] = []
    for line in stderr.splitlines():
        m = _DIAG_RE.match(line)
        if m:
            diagnostics.append(Diagnostic(
                reported_line=int(m.group("line")),
                column=int(m.group("col")) if m.group("col") else None,
                raw_message=m.group("msg"),
            ))
        elif line.strip():
            unparsed.append(line)
    return CompileResult(
        success=not diagnostics,
        diagnostics=diagnostics,
        error_count=len(diagnostics),
        unparsed=unparsed,
    )


def normalize_message(raw: str, symbols) -> tuple[list, dict]:
    """Replace known identifiers with class placeholders.

    `symbols` is (var_set, func_set, type_set); matching is on word
    boundaries, so quoted and bare mentions are both caught.  Repeated
    mentions of one identifier share a placeholder; numbering follows first
    appearance, per class.  Unknown identifiers pass through unchanged.
    """
    var_set, func_set, type_set = symbols
    assigned: dict = {}
    counters = {"var": 0, "func": 0, "type": 0}

    def classify(word: str) -> str | None:
        if word in type_set:
            return "type"
        if word in func_set:
            return "func"
        if word in var_set:
            return "var"
        return None

    def replace(match: re.Match) -> str:
        word = match.group(0)
        if word in assigned:
            return assigned[word]
        cls = classify(word)
        if cls is None:
            return word
        counters[cls] += 1
        placeholder = f"_<{cls}{counters[cls]}>_"
        assigned[word] = placeholder
        return placeholder

    normalized = _IDENT_RE.sub(replace, raw)
    id_map = {ph: word for word, ph in assigned.items()}
    return normalized.split(), id_map


def denormalize(tokens, id_map) -> str:
    """Exact inverse of normalize_message on its own output."""
    def restore(match: re.Match) -> str:
        name = match.group(0)
        if name not in id_map:
            raise UnknownPlaceholder(name)
        return id_map[name]

    return " ".join(_PLACEHOLDER_RE.sub(restore, tok) for tok in tokens)


def substitute_placeholders(texts, id_map) -> list:
    """Lenient per-token placeholder restoration for decoded candidates.

    Unknown placeholders are left verbatim; a candidate carrying one will
    simply fail recompilation instead of aborting the repair loop.
    """
    out = []
    for text in texts:
        out.append(_PLACEHOLDER_RE.sub(
            lambda m: id_map.get(m.group(0), m.group(0)), text))
    return out


def normalize_diagnostics(result: CompileResult, symbols) -> CompileResult:
    """Fill normalized_message/id_map on every diagnostic, per-diagnostic numbering."""
    for diag in result.diagnostics:
        diag.normalized_message, diag.id_map = normalize_message(diag.raw_message, symbols)
    return result
