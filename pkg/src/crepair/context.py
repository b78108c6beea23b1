"""Per-line context extraction: nearest declaration and usage lines.

For every line we collect the identifiers it declares and uses, then build
its context from (a) the nearest line above that declares each used
identifier and (b) the nearest line in either direction that uses each
declared or used identifier.  The merged line set is deduplicated, excludes
the line itself, and is sorted in program order.

Everything here is purely lexical: block scope is ignored on purpose, since
the programs being analyzed are usually broken (often with unbalanced
braces), and "nearest" is measured in absolute line distance with ties
breaking toward the earlier line.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

from .tokens import Token, TokenKind, TokenizedProgram, TYPE_KEYWORDS

_TAG_KEYWORDS = ("struct", "union", "enum", "typedef")
_QUALIFIER_KEYWORDS = ("static", "const", "extern", "register", "volatile", "inline")

DEFAULT_CONTEXT_TOKEN_BUDGET = 160


@dataclass(frozen=True)
class SymbolTables:
    var_set: frozenset
    func_set: frozenset
    type_set: frozenset

    def union(self) -> frozenset:
        return self.var_set | self.func_set | self.type_set

    def as_tuple(self):
        return (self.var_set, self.func_set, self.type_set)


@dataclass
class LineContext:
    line: int
    vars_declare: list = field(default_factory=list)
    vars_use: list = field(default_factory=list)
    context_lines: list = field(default_factory=list)
    context_tokens: list = field(default_factory=list)  # list[Token]

    def to_json(self) -> dict:
        return {
            "line": self.line,
            "vars_declare": list(self.vars_declare),
            "vars_use": list(self.vars_use),
            "context_lines": list(self.context_lines),
        }


def _is_type_token(tok: Token) -> bool:
    return tok.kind is TokenKind.TYPE_NAME or (
        tok.kind is TokenKind.KEYWORD and tok.text in TYPE_KEYWORDS)


def _is_declaration_line(line) -> bool:
    for tok in line:
        if tok.kind is TokenKind.KEYWORD and tok.text in _QUALIFIER_KEYWORDS:
            continue
        return _is_type_token(tok) or (
            tok.kind is TokenKind.KEYWORD and tok.text in _TAG_KEYWORDS)
    return False


def declared_positions(line) -> set:
    """Indices of name tokens in declarator position on this line.

    A name is declared when a type token immediately precedes it (skipping
    pointer stars), when it follows struct/union/enum/typedef, or when it is
    a comma-separated declarator at bracket depth 0 on a declaration line.
    """
    declared: set[int] = set()
    is_decl_line = _is_declaration_line(line)
    depth = 0
    for j, tok in enumerate(line):
        if tok.kind is TokenKind.PUNCTUATOR:
            if tok.text in "([{":
                depth += 1
            elif tok.text in ")]}":
                depth -= 1
            continue
        if tok.kind not in (TokenKind.IDENTIFIER, TokenKind.TYPE_NAME):
            continue
        k = j - 1
        while k >= 0 and line[k].kind is TokenKind.OPERATOR and line[k].text == "*":
            k -= 1
        if k < 0:
            continue
        prev = line[k]
        if _is_type_token(prev):
            declared.add(j)
        elif prev.kind is TokenKind.KEYWORD and prev.text in _TAG_KEYWORDS:
            declared.add(j)
        elif (is_decl_line and depth == 0
              and prev.kind is TokenKind.PUNCTUATOR and prev.text == ","):
            declared.add(j)
    return declared


def classify_occurrence(line, token_text: str) -> str:
    """'declare' or 'use' for one identifier on one line."""
    declared = declared_positions(line)
    for j, tok in enumerate(line):
        if tok.text == token_text and j in declared:
            return "declare"
    return "use"


def analyzer(program: TokenizedProgram) -> SymbolTables:
    """Collect declared variable names, function names and type names."""
    type_set: set[str] = set()
    func_set: set[str] = set()
    var_set: set[str] = set()
    for line in program.lines:
        declared = declared_positions(line)
        for j in sorted(declared):
            tok = line[j]
            if tok.kind is TokenKind.TYPE_NAME:
                type_set.add(tok.text)
                continue
            follows_paren = (j + 1 < len(line)
                             and line[j + 1].kind is TokenKind.PUNCTUATOR
                             and line[j + 1].text == "(")
            if follows_paren:
                func_set.add(tok.text)
            else:
                var_set.add(tok.text)
        for tok in line:
            if tok.kind is TokenKind.TYPE_NAME:
                type_set.add(tok.text)
    func_set -= type_set
    var_set -= type_set | func_set
    return SymbolTables(frozenset(var_set), frozenset(func_set), frozenset(type_set))


def _line_vars(line, known: frozenset) -> tuple[list, list]:
    """Unique known identifiers on the line, split into declare/use lists."""
    declared = declared_positions(line)
    decl_names: list[str] = []
    use_names: list[str] = []
    seen_decl: set[str] = set()
    seen_use: set[str] = set()
    is_declared: dict[str, bool] = {}
    for j, tok in enumerate(line):
        if tok.kind not in (TokenKind.IDENTIFIER, TokenKind.TYPE_NAME):
            continue
        if tok.text not in known:
            continue
        if j in declared:
            is_declared[tok.text] = True
        else:
            is_declared.setdefault(tok.text, False)
    for tok in line:
        name = tok.text
        if name not in is_declared:
            continue
        if is_declared[name] and name not in seen_decl:
            decl_names.append(name)
            seen_decl.add(name)
        elif not is_declared[name] and name not in seen_use:
            use_names.append(name)
            seen_use.add(name)
    return decl_names, use_names


def _nearest_above(sorted_lines, i: int) -> int | None:
    idx = bisect_left(sorted_lines, i) - 1
    return sorted_lines[idx] if idx >= 0 else None


def _nearest_any(sorted_lines, i: int) -> int | None:
    """Nearest line != i by absolute distance; ties break to the earlier line."""
    best = None
    best_key = None
    idx = bisect_left(sorted_lines, i)
    for cand_idx in (idx - 1, idx, idx + 1):
        if 0 <= cand_idx < len(sorted_lines):
            j = sorted_lines[cand_idx]
            if j == i:
                continue
            key = (abs(j - i), j)
            if best_key is None or key < best_key:
                best, best_key = j, key
    return best


def get_context(program: TokenizedProgram, tables: SymbolTables,
                token_budget: int = DEFAULT_CONTEXT_TOKEN_BUDGET) -> list:
    """LineContext for every line of the program (1-based, in order)."""
    known = tables.union()
    per_line = [_line_vars(line, known) for line in program.lines]

    decl_lines: dict[str, list] = {}
    use_lines: dict[str, list] = {}
    for i, (decls, uses) in enumerate(per_line, start=1):
        for name in decls:
            decl_lines.setdefault(name, []).append(i)
        for name in uses:
            use_lines.setdefault(name, []).append(i)

    contexts: list[LineContext] = []
    for i, (decls, uses) in enumerate(per_line, start=1):
        chosen: set[int] = set()
        for name in uses:
            j = _nearest_above(decl_lines.get(name, []), i)
            if j is not None:
                chosen.add(j)
        for name in decls + uses:
            j = _nearest_any(use_lines.get(name, []), i)
            if j is not None:
                chosen.add(j)
        chosen.discard(i)
        lines_sorted = sorted(chosen)
        ctx = LineContext(line=i, vars_declare=decls, vars_use=uses,
                          context_lines=lines_sorted)
        ctx.context_tokens = _materialize(program, lines_sorted, i, token_budget)
        contexts.append(ctx)
    return contexts


def _materialize(program: TokenizedProgram, context_lines, i: int,
                 token_budget: int) -> list:
    """Concatenate context-line tokens, dropping farthest lines beyond budget."""
    by_distance = sorted(context_lines, key=lambda j: (abs(j - i), j))
    kept: list[int] = []
    total = 0
    for j in by_distance:
        n = len(program.line(j))
        if total + n > token_budget:
            continue
        kept.append(j)
        total += n
    return [tok for j in sorted(kept) for tok in program.line(j)]


def contexts_to_jsonl(contexts, path) -> None:
    import json

    from .storage import atomic_write

    with atomic_write(path) as fh:
        fh.write(json.dumps({"format_version": 1, "kind": "line-contexts"}) + "\n")
        for ctx in contexts:
            fh.write(json.dumps(ctx.to_json(), ensure_ascii=False) + "\n")
