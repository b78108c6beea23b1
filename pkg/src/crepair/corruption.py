"""Rule-based injection of compilation errors into correct programs.

Five error categories, each tied to an operand class and a set of permitted
single-token operations:

    struct  punctuator            ADD DEL REP
    stmt    keyword/operator/type/name   ADD DEL REP
    decl    type/name at declaration or usage      ADD
    tm      type/name inside call argument lists   ADD DEL
    im      operator/name at declaration           ADD REP

Every mutation touches exactly one token on exactly one line, so ADD grows
the line by one token, DEL shrinks it by one and REP keeps the length.  For
REP the replacement is drawn from same-kind tokens found elsewhere in the
program, never invented.  Synthesized variants are kept only if they
actually fail compilation; a variant that still compiles is retried with a
fresh draw until the retry budget runs out.
"""

from __future__ import annotations

import json
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

from .context import analyzer, declared_positions, _line_vars
from .diagnostics import CompilerConfig, compile_source
from .errors import DisallowedOp, ExhaustedRetries, NoEligibleSite, SourceDoesNotCompile
from .storage import check_header, derive_seed
from .tokens import (PUNCTUATORS, TYPE_KEYWORDS, Token, TokenKind,
                     TokenizedProgram, detokenize)


class ErrorCategory(str, Enum):
    STRUCT = "struct"
    STMT = "stmt"
    DECL = "decl"
    TYPE_MISMATCH = "tm"
    ID_MISUSE = "im"


class MutationOp(str, Enum):
    ADD = "ADD"
    DEL = "DEL"
    REP = "REP"


ALLOWED_OPS = {
    ErrorCategory.STRUCT: frozenset({MutationOp.ADD, MutationOp.DEL, MutationOp.REP}),
    ErrorCategory.STMT: frozenset({MutationOp.ADD, MutationOp.DEL, MutationOp.REP}),
    ErrorCategory.DECL: frozenset({MutationOp.ADD}),
    ErrorCategory.TYPE_MISMATCH: frozenset({MutationOp.ADD, MutationOp.DEL}),
    ErrorCategory.ID_MISUSE: frozenset({MutationOp.ADD, MutationOp.REP}),
}

# Share of each error class in real-world broken-code corpora; renormalized
# wherever it is consumed.
DEFAULT_CATEGORY_MIX = {
    ErrorCategory.STRUCT: 21.28,
    ErrorCategory.STMT: 51.52,
    ErrorCategory.DECL: 21.43,
    ErrorCategory.TYPE_MISMATCH: 2.17,
    ErrorCategory.ID_MISUSE: 3.60,
}

# Statement errors touch any meaningful token of a statement: keywords,
# operators, types, names, and literals (dropping the "1" of "a = a + 1"
# is the canonical statement error).
_STMT_KINDS = (TokenKind.KEYWORD, TokenKind.OPERATOR, TokenKind.IDENTIFIER,
               TokenKind.TYPE_NAME, TokenKind.INT_LITERAL,
               TokenKind.FLOAT_LITERAL, TokenKind.STRING_LITERAL,
               TokenKind.CHAR_LITERAL)
_FALLBACK_OPERATORS = ("&", "*", "+", "=")
_FALLBACK_TYPES = ("char", "double", "float", "int", "long")


@dataclass(frozen=True)
class CorruptionRecord:
    line: int  # 1-based
    category: ErrorCategory
    op: MutationOp
    operand_kind: TokenKind
    original_line: tuple  # tuple[Token, ...]
    mutated_line: tuple

    def __post_init__(self):
        delta = len(self.mutated_line) - len(self.original_line)
        expected = {MutationOp.ADD: 1, MutationOp.DEL: -1, MutationOp.REP: 0}[self.op]
        if delta != expected:
            raise ValueError(f"{self.op.value} changed line length by {delta}")
        if tuple(self.original_line) == tuple(self.mutated_line):
            raise ValueError("mutation did not change the line")

    def to_json(self) -> dict:
        return {
            "line": self.line,
            "category": self.category.value,
            "op": self.op.value,
            "operand_kind": self.operand_kind.value,
            "original_line": [t.to_json() for t in self.original_line],
            "mutated_line": [t.to_json() for t in self.mutated_line],
        }

    @staticmethod
    def from_json(obj: dict) -> "CorruptionRecord":
        return CorruptionRecord(
            line=obj["line"],
            category=ErrorCategory(obj["category"]),
            op=MutationOp(obj["op"]),
            operand_kind=TokenKind(obj["operand_kind"]),
            original_line=tuple(Token.from_json(t) for t in obj["original_line"]),
            mutated_line=tuple(Token.from_json(t) for t in obj["mutated_line"]),
        )


@dataclass(frozen=True)
class BrokenProgram:
    program: TokenizedProgram
    corruptions: tuple  # tuple[CorruptionRecord, ...]
    seed: int
    parent_id: str

    def __post_init__(self):
        if not 1 <= len(self.corruptions) <= 5:
            raise ValueError("a variant carries between 1 and 5 corruptions")
        lines = [r.line for r in self.corruptions]
        if len(set(lines)) != len(lines):
            raise ValueError("corrupted line indices must be distinct")

    def to_json(self) -> dict:
        return {
            "parent_id": self.parent_id,
            "variant_id": self.program.source_id,
            "seed": self.seed,
            "lines": [[t.to_json() for t in line] for line in self.program.lines],
            "corruptions": [r.to_json() for r in self.corruptions],
        }

    @staticmethod
    def from_json(obj: dict) -> "BrokenProgram":
        lines = tuple(tuple(Token.from_json(t) for t in line) for line in obj["lines"])
        return BrokenProgram(
            program=TokenizedProgram(lines, obj["variant_id"]),
            corruptions=tuple(CorruptionRecord.from_json(r) for r in obj["corruptions"]),
            seed=obj["seed"],
            parent_id=obj["parent_id"],
        )


def _is_mutable_line(line) -> bool:
    return bool(line) and not any(t.kind is TokenKind.PREPROCESSOR for t in line)


class _ProgramPools:
    """Token pools mined from the program, the source of REP/ADD material."""

    def __init__(self, program: TokenizedProgram):
        self.program = program
        self.tables = analyzer(program)
        texts: dict[TokenKind, set] = {}
        for line in program.lines:
            for tok in line:
                texts.setdefault(tok.kind, set()).add(tok.text)
        self.by_kind = {kind: sorted(vals) for kind, vals in texts.items()}
        self.var_names = sorted(self.tables.var_set)
        type_texts = set(self.by_kind.get(TokenKind.TYPE_NAME, ()))
        type_texts.update(t for t in self.by_kind.get(TokenKind.KEYWORD, ())
                          if t in TYPE_KEYWORDS)
        self.type_texts = sorted(type_texts) or list(_FALLBACK_TYPES)
        self.operator_texts = self.by_kind.get(TokenKind.OPERATOR, []) or list(_FALLBACK_OPERATORS)

    def same_kind_alternatives(self, tok: Token) -> list:
        return [t for t in self.by_kind.get(tok.kind, []) if t != tok.text]

    def line_vars(self, line):
        return _line_vars(line, self.tables.union())


def _call_spans(line) -> list:
    """(open_index, close_index) for calls whose parens balance on this line."""
    spans = []
    declared = declared_positions(line)
    for j, tok in enumerate(line):
        if tok.kind is not TokenKind.IDENTIFIER or j in declared:
            continue
        if j + 1 >= len(line) or line[j + 1].text != "(":
            continue
        depth = 0
        for k in range(j + 1, len(line)):
            if line[k].kind is TokenKind.PUNCTUATOR:
                if line[k].text == "(":
                    depth += 1
                elif line[k].text == ")":
                    depth -= 1
                    if depth == 0:
                        spans.append((j + 1, k))
                        break
    return spans


def corrupt_once(program: TokenizedProgram, category: ErrorCategory,
                 op: MutationOp, rng: random.Random,
                 exclude_lines: frozenset = frozenset()):
    """Apply one (category, op) mutation; returns (program, record).

    Raises DisallowedOp when the pair is outside the permitted matrix and
    NoEligibleSite when the program offers no location for it.
    """
    if op not in ALLOWED_OPS[category]:
        raise DisallowedOp(f"{category.value} does not permit {op.value}")

    pools = _ProgramPools(program)
    eligible = [
        i for i in range(1, program.line_count + 1)
        if i not in exclude_lines and _is_mutable_line(program.line(i))
    ]

    handler = {
        ErrorCategory.STRUCT: _corrupt_struct,
        ErrorCategory.STMT: _corrupt_stmt,
        ErrorCategory.DECL: _corrupt_decl,
        ErrorCategory.TYPE_MISMATCH: _corrupt_type_mismatch,
        ErrorCategory.ID_MISUSE: _corrupt_id_misuse,
    }[category]
    mutation = handler(program, pools, eligible, op, rng)
    if mutation is None:
        raise NoEligibleSite(category.value, op.value)

    line_idx, new_tokens, operand_kind = mutation
    original = program.line(line_idx)
    record = CorruptionRecord(
        line=line_idx, category=category, op=op, operand_kind=operand_kind,
        original_line=tuple(original), mutated_line=tuple(new_tokens))
    return program.replace_line(line_idx, new_tokens), record


def _positions(program, eligible, predicate) -> list:
    out = []
    for i in eligible:
        line = program.line(i)
        for j, tok in enumerate(line):
            if predicate(line, j, tok):
                out.append((i, j))
    return out


def _insert(line, slot: int, token: Token) -> list:
    new = list(line)
    new.insert(slot, token)
    return new


def _delete(line, j: int) -> list:
    new = list(line)
    del new[j]
    return new


def _replace(line, j: int, token: Token) -> list:
    new = list(line)
    new[j] = token
    return new


def _corrupt_struct(program, pools, eligible, op, rng):
    sites = _positions(program, eligible,
                       lambda line, j, tok: tok.kind is TokenKind.PUNCTUATOR)
    if op is MutationOp.REP:
        sites = [(i, j) for (i, j) in sites
                 if pools.same_kind_alternatives(program.line(i)[j])]
    if not sites:
        return None
    i, j = sites[rng.randrange(len(sites))]
    line = program.line(i)
    if op is MutationOp.ADD:
        text = PUNCTUATORS[rng.randrange(len(PUNCTUATORS))]
        slot = j + rng.randrange(2)
        return i, _insert(line, slot, Token(text, TokenKind.PUNCTUATOR)), TokenKind.PUNCTUATOR
    if op is MutationOp.DEL:
        return i, _delete(line, j), line[j].kind
    alts = pools.same_kind_alternatives(line[j])
    text = alts[rng.randrange(len(alts))]
    return i, _replace(line, j, Token(text, TokenKind.PUNCTUATOR)), line[j].kind


def _corrupt_stmt(program, pools, eligible, op, rng):
    sites = _positions(program, eligible,
                       lambda line, j, tok: tok.kind in _STMT_KINDS)
    if op is MutationOp.REP:
        sites = [(i, j) for (i, j) in sites
                 if pools.same_kind_alternatives(program.line(i)[j])]
    if not sites:
        return None
    i, j = sites[rng.randrange(len(sites))]
    line = program.line(i)
    if op is MutationOp.ADD:
        pool = [(text, kind) for kind in _STMT_KINDS
                for text in pools.by_kind.get(kind, ())]
        text, kind = pool[rng.randrange(len(pool))]
        slot = j + rng.randrange(2)
        return i, _insert(line, slot, Token(text, kind)), kind
    if op is MutationOp.DEL:
        return i, _delete(line, j), line[j].kind
    alts = pools.same_kind_alternatives(line[j])
    text = alts[rng.randrange(len(alts))]
    return i, _replace(line, j, Token(text, line[j].kind)), line[j].kind


def _decl_usage_lines(program, pools, eligible) -> list:
    out = []
    for i in eligible:
        decls, uses = pools.line_vars(program.line(i))
        if decls or uses:
            out.append((i, decls, uses))
    return out


def _corrupt_decl(program, pools, eligible, op, rng):
    lines = _decl_usage_lines(program, pools, eligible)
    if not lines:
        return None
    known = {name for (_, d, u) in lines for name in d + u}
    anchors = []
    for i, decls, uses in lines:
        line = program.line(i)
        for j, tok in enumerate(line):
            if tok.kind in (TokenKind.IDENTIFIER, TokenKind.TYPE_NAME) and tok.text in known:
                anchors.append((i, j))
            elif tok.kind is TokenKind.KEYWORD and tok.text in TYPE_KEYWORDS:
                anchors.append((i, j))
    if not anchors:
        return None
    pool = [(t, TokenKind.KEYWORD if t in TYPE_KEYWORDS else TokenKind.TYPE_NAME)
            for t in pools.type_texts]
    pool += [(v, TokenKind.IDENTIFIER) for v in pools.var_names]
    if not pool:
        return None
    i, j = anchors[rng.randrange(len(anchors))]
    text, kind = pool[rng.randrange(len(pool))]
    slot = j + rng.randrange(2)
    return i, _insert(program.line(i), slot, Token(text, kind)), kind


def _corrupt_type_mismatch(program, pools, eligible, op, rng):
    spans = []
    for i in eligible:
        for (a, b) in _call_spans(program.line(i)):
            spans.append((i, a, b))
    if not spans:
        return None
    if op is MutationOp.ADD:
        i, a, b = spans[rng.randrange(len(spans))]
        pool = [(v, TokenKind.IDENTIFIER) for v in pools.var_names]
        pool += [(t, TokenKind.KEYWORD if t in TYPE_KEYWORDS else TokenKind.TYPE_NAME)
                 for t in pools.type_texts]
        if not pool:
            return None
        text, kind = pool[rng.randrange(len(pool))]
        slot = a + 1 + rng.randrange(b - a)
        return i, _insert(program.line(i), slot, Token(text, kind)), kind
    # DEL: remove one type/name token inside an argument list
    deletable = []
    for i, a, b in spans:
        line = program.line(i)
        for j in range(a + 1, b):
            tok = line[j]
            if tok.kind is TokenKind.IDENTIFIER or tok.kind is TokenKind.TYPE_NAME or (
                    tok.kind is TokenKind.KEYWORD and tok.text in TYPE_KEYWORDS):
                deletable.append((i, j))
    if not deletable:
        return None
    i, j = deletable[rng.randrange(len(deletable))]
    return i, _delete(program.line(i), j), program.line(i)[j].kind


def _corrupt_id_misuse(program, pools, eligible, op, rng):
    decl_lines = [i for i in eligible
                  if pools.line_vars(program.line(i))[0]]
    if not decl_lines:
        return None
    if op is MutationOp.ADD:
        pool = [(t, TokenKind.OPERATOR) for t in pools.operator_texts]
        pool += [(v, TokenKind.IDENTIFIER) for v in pools.var_names]
        if not pool:
            return None
        i = decl_lines[rng.randrange(len(decl_lines))]
        line = program.line(i)
        text, kind = pool[rng.randrange(len(pool))]
        slot = rng.randrange(len(line) + 1)
        return i, _insert(line, slot, Token(text, kind)), kind
    # REP: swap an operator or known variable name on a declaration line
    sites = []
    for i in decl_lines:
        line = program.line(i)
        for j, tok in enumerate(line):
            if tok.kind is TokenKind.OPERATOR and pools.same_kind_alternatives(tok):
                sites.append((i, j))
            elif tok.kind is TokenKind.IDENTIFIER and tok.text in pools.tables.var_set:
                if [v for v in pools.var_names if v != tok.text]:
                    sites.append((i, j))
    if not sites:
        return None
    i, j = sites[rng.randrange(len(sites))]
    line = program.line(i)
    tok = line[j]
    if tok.kind is TokenKind.OPERATOR:
        alts = pools.same_kind_alternatives(tok)
    else:
        alts = [v for v in pools.var_names if v != tok.text]
    text = alts[rng.randrange(len(alts))]
    return i, _replace(line, j, Token(text, tok.kind)), tok.kind


def _weighted_choice(rng: random.Random, items, weights) -> object:
    total = sum(weights)
    x = rng.random() * total
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if x < acc:
            return item
    return items[-1]


@dataclass
class SynthesisReport:
    requested: int = 0
    emitted: int = 0
    still_compiling_retries: int = 0
    unplaceable_retries: int = 0
    exhausted_variants: int = 0
    category_counts: dict = None

    def __post_init__(self):
        if self.category_counts is None:
            self.category_counts = {c.value: 0 for c in ErrorCategory}

    @property
    def retention_rate(self) -> float:
        return self.emitted / self.requested if self.requested else 0.0

    def to_json(self) -> dict:
        return {
            "requested": self.requested,
            "emitted": self.emitted,
            "retention_rate": self.retention_rate,
            "still_compiling_retries": self.still_compiling_retries,
            "unplaceable_retries": self.unplaceable_retries,
            "exhausted_variants": self.exhausted_variants,
            "category_counts": dict(self.category_counts),
        }


def _make_variant(parent: TokenizedProgram, variant_index: int, seed: int,
                  max_errors: int, categories, weights, retry_budget: int,
                  compiler_config: CompilerConfig):
    """One variant attempt loop; returns (BrokenProgram | None, stats)."""
    stream_seed = derive_seed(seed, parent.source_id, variant_index)
    rng = random.Random(stream_seed)
    stats = {"still_compiling": 0, "unplaceable": 0}
    for _attempt in range(retry_budget):
        n_errors = rng.randint(1, max_errors)
        prog = parent
        records = []
        used: set[int] = set()
        for _e in range(n_errors):
            placed = False
            for _try in range(12):
                category = _weighted_choice(rng, categories, weights)
                ops = sorted(ALLOWED_OPS[category], key=lambda o: o.value)
                op = ops[rng.randrange(len(ops))]
                try:
                    prog, rec = corrupt_once(prog, category, op, rng,
                                             exclude_lines=frozenset(used))
                except NoEligibleSite:
                    continue
                records.append(rec)
                used.add(rec.line)
                placed = True
                break
            if not placed:
                break
        if len(records) != n_errors:
            stats["unplaceable"] += 1
            continue
        result = compile_source(detokenize(prog), config=compiler_config)
        if result.success:
            stats["still_compiling"] += 1
            continue
        variant_program = TokenizedProgram(prog.lines, f"{parent.source_id}#v{variant_index}")
        broken = BrokenProgram(program=variant_program, corruptions=tuple(records),
                               seed=stream_seed, parent_id=parent.source_id)
        return broken, stats
    return None, stats


def synthesize_corpus(corpus, variants_per_program: int, max_errors: int = 5,
                      category_mix: dict | None = None, seed: int = 0,
                      compiler_config: CompilerConfig = CompilerConfig(),
                      retry_budget: int = 20, workers: int | None = None):
    """Corrupt every parent program into labeled failing variants.

    Returns (variants, report).  Parents must compile cleanly; every emitted
    variant fails compilation.  Each variant draws its own RNG stream from
    (seed, source_id, variant_index), so parallel and serial runs produce
    identical corpora.
    """
    if max_errors < 1 or max_errors > 5:
        raise ValueError("max_errors must be in 1..5")
    mix = category_mix or DEFAULT_CATEGORY_MIX
    categories = sorted(mix.keys(), key=lambda c: c.value)
    weights = [float(mix[c]) for c in categories]

    report = SynthesisReport(requested=len(corpus) * variants_per_program)

    for parent in corpus:
        result = compile_source(detokenize(parent), config=compiler_config)
        if not result.success:
            first = result.first
            detail = first.raw_message if first else "unknown error"
            raise SourceDoesNotCompile(parent.source_id, detail)

    tasks = [(parent, v) for parent in corpus for v in range(variants_per_program)]

    def run(task):
        parent, v = task
        return _make_variant(parent, v, seed, max_errors, categories, weights,
                             retry_budget, compiler_config)

    max_workers = workers or min(8, max(1, (os.cpu_count() or 1) * 2))
    if max_workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(run, tasks))
    else:
        outcomes = [run(t) for t in tasks]

    variants: list[BrokenProgram] = []
    emitted_per_parent: dict[str, int] = {p.source_id: 0 for p in corpus}
    for (parent, _v), (broken, stats) in zip(tasks, outcomes):
        report.still_compiling_retries += stats["still_compiling"]
        report.unplaceable_retries += stats["unplaceable"]
        if broken is None:
            report.exhausted_variants += 1
            continue
        variants.append(broken)
        emitted_per_parent[parent.source_id] += 1
        report.emitted += 1
        for rec in broken.corruptions:
            report.category_counts[rec.category.value] += 1

    if variants_per_program > 0:
        for parent in corpus:
            if emitted_per_parent[parent.source_id] == 0:
                raise ExhaustedRetries(parent.source_id)
    return variants, report


def write_jsonl(variants, path, report: SynthesisReport | None = None) -> None:
    from .storage import atomic_write

    with atomic_write(path) as fh:
        header = {"format_version": 1, "kind": "broken-programs"}
        if report is not None:
            header["report"] = report.to_json()
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for variant in variants:
            fh.write(json.dumps(variant.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        check_header(header, "broken-programs")
        return [BrokenProgram.from_json(json.loads(line)) for line in fh if line.strip()]
