"""Line-structured tokenization of a C subset.

The unit of everything downstream is a program as an ordered list of 1-based
lines, each a list of classified tokens.  The subset is the one student
programs live in: no function pointers in casts, no multi-line macros, no
digraphs/trigraphs.  Preprocessor lines are kept as single opaque tokens and
never touched by the mutation machinery.

Whitespace inside string/char literals and preprocessor chunks is stored as
U+2423 (open box) so that no token text contains real whitespace; detokenize
turns it back into a single space.  This keeps the round trip
tokenize(detokenize(tokenize(s))) == tokenize(s) exact while the emitted
source stays compilable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import LexError, ProgramTooLarge

MAX_LINES = 400
MAX_TOKENS_PER_LINE = 120

WS_GLYPH = "␣"

KEYWORDS = frozenset({
    "auto", "break", "case", "char", "const", "continue", "default", "do",
    "double", "else", "enum", "extern", "float", "for", "goto", "if",
    "inline", "int", "long", "register", "restrict", "return", "short",
    "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while", "_Bool", "_Complex",
    "_Imaginary",
})

# Base type keywords that may immediately precede a declared name.
TYPE_KEYWORDS = frozenset({
    "void", "char", "short", "int", "long", "float", "double",
    "signed", "unsigned", "_Bool",
})

# The structure-error alphabet: the only texts a Punctuator may carry.
PUNCTUATORS = (",", ".", ";", "(", ")", "{", "}", "[", "]")
_PUNCT_SET = frozenset(PUNCTUATORS)

# Multi-character operators first so the scanner munches maximally.
_OPERATORS_3 = ("<<=", ">>=")
_OPERATORS_2 = ("->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
                "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=")
_OPERATORS_1 = ("+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^",
                "~", "?", ":")

_ID_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_ID_CONT = _ID_START | frozenset("0123456789")
_DIGITS = frozenset("0123456789")
_HEX = frozenset("0123456789abcdefABCDEF")


class TokenKind(str, Enum):
    KEYWORD = "Keyword"
    IDENTIFIER = "Identifier"
    TYPE_NAME = "TypeName"
    OPERATOR = "Operator"
    PUNCTUATOR = "Punctuator"
    INT_LITERAL = "IntLiteral"
    FLOAT_LITERAL = "FloatLiteral"
    STRING_LITERAL = "StringLiteral"
    CHAR_LITERAL = "CharLiteral"
    PREPROCESSOR = "PreprocessorChunk"


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")

    def to_json(self) -> dict:
        return {"text": self.text, "kind": self.kind.value}

    @staticmethod
    def from_json(obj: dict) -> "Token":
        return Token(obj["text"], TokenKind(obj["kind"]))


Line = tuple  # tuple[Token, ...]


@dataclass(frozen=True)
class TokenizedProgram:
    lines: tuple  # tuple[tuple[Token, ...], ...]
    source_id: str

    @property
    def line_count(self) -> int:
        return len(self.lines)

    def line(self, index: int) -> Line:
        """1-based access, matching compiler diagnostics."""
        return self.lines[index - 1]

    def replace_line(self, index: int, tokens: Sequence[Token]) -> "TokenizedProgram":
        """Return a copy with 1-based line `index` replaced."""
        new_lines = list(self.lines)
        new_lines[index - 1] = tuple(tokens)
        return TokenizedProgram(tuple(new_lines), self.source_id)

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "lines": [[t.to_json() for t in line] for line in self.lines],
        }

    @staticmethod
    def from_json(obj: dict) -> "TokenizedProgram":
        lines = tuple(
            tuple(Token.from_json(t) for t in line) for line in obj["lines"]
        )
        return TokenizedProgram(lines, obj["source_id"])


def _default_source_id(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()[:16]


def _encode_ws(text: str) -> str:
    return "".join(WS_GLYPH if ch.isspace() else ch for ch in text)


class _LineScanner:
    """Scans one physical line; block-comment state is carried by the caller."""

    def __init__(self, text: str, lineno: int):
        self.text = text
        self.n = len(text)
        self.i = 0
        self.lineno = lineno

    def error(self, reason: str, col: int | None = None):
        raise LexError(self.lineno, (self.i if col is None else col) + 1, reason)

    def scan(self, in_block_comment: bool) -> tuple[list[Token], bool]:
        out: list[Token] = []
        t, n = self.text, self.n
        while self.i < n:
            if in_block_comment:
                end = t.find("*/", self.i)
                if end < 0:
                    self.i = n
                    return out, True
                self.i = end + 2
                in_block_comment = False
                continue
            ch = t[self.i]
            if ch.isspace():
                self.i += 1
                continue
            if ch == WS_GLYPH:
                self.error("reserved whitespace glyph U+2423 in source")
            if ch == "/" and t.startswith("//", self.i):
                break
            if ch == "/" and t.startswith("/*", self.i):
                self.i += 2
                in_block_comment = True
                continue
            if ch == "#":
                if out:
                    self.error("'#' outside a preprocessor line")
                chunk = " ".join(t[self.i:].split())
                if chunk.endswith("\\"):
                    self.error("multi-line preprocessor directives are unsupported")
                out.append(Token(_encode_ws(chunk), TokenKind.PREPROCESSOR))
                self.i = n
                break
            if ch == '"':
                out.append(self._string('"', TokenKind.STRING_LITERAL))
                continue
            if ch == "'":
                out.append(self._string("'", TokenKind.CHAR_LITERAL))
                continue
            if ch in _DIGITS or (ch == "." and self.i + 1 < n and t[self.i + 1] in _DIGITS):
                out.append(self._number())
                continue
            if ch in _ID_START:
                out.append(self._identifier())
                continue
            if ch in _PUNCT_SET:
                out.append(Token(ch, TokenKind.PUNCTUATOR))
                self.i += 1
                continue
            op = self._operator()
            if op is not None:
                out.append(op)
                continue
            self.error(f"illegal character {ch!r}")
        return out, in_block_comment

    def _string(self, quote: str, kind: TokenKind) -> Token:
        t, n = self.text, self.n
        start = self.i
        j = self.i + 1
        while j < n:
            c = t[j]
            if c == "\\":
                j += 2
                continue
            if c == quote:
                raw = t[start:j + 1]
                self.i = j + 1
                return Token(_encode_ws(raw), kind)
            j += 1
        name = "string" if quote == '"' else "char"
        self.error(f"unterminated {name} literal", col=start)

    def _number(self) -> Token:
        t, n = self.text, self.n
        start = self.i
        j = self.i
        is_float = False
        if t.startswith(("0x", "0X"), j):
            j += 2
            while j < n and t[j] in _HEX:
                j += 1
        else:
            while j < n and t[j] in _DIGITS:
                j += 1
            if j < n and t[j] == ".":
                is_float = True
                j += 1
                while j < n and t[j] in _DIGITS:
                    j += 1
            if j < n and t[j] in "eE":
                k = j + 1
                if k < n and t[k] in "+-":
                    k += 1
                if k < n and t[k] in _DIGITS:
                    is_float = True
                    j = k
                    while j < n and t[j] in _DIGITS:
                        j += 1
        if is_float:
            while j < n and t[j] in "fFlL":
                j += 1
            kind = TokenKind.FLOAT_LITERAL
        else:
            while j < n and t[j] in "uUlL":
                j += 1
            kind = TokenKind.INT_LITERAL
        self.i = j
        return Token(t[start:j], kind)

    def _identifier(self) -> Token:
        t, n = self.text, self.n
        start = self.i
        j = self.i + 1
        while j < n and t[j] in _ID_CONT:
            j += 1
        self.i = j
        word = t[start:j]
        kind = TokenKind.KEYWORD if word in KEYWORDS else TokenKind.IDENTIFIER
        return Token(word, kind)

    def _operator(self) -> Token | None:
        t = self.text
        for group in (_OPERATORS_3, _OPERATORS_2, _OPERATORS_1):
            for op in group:
                if t.startswith(op, self.i):
                    self.i += len(op)
                    return Token(op, TokenKind.OPERATOR)
        return None


def _collect_type_names(lines: list[list[Token]]) -> set[str]:
    """Names introduced by typedef or struct/union/enum tags."""
    flat: list[Token] = [tok for line in lines for tok in line]
    names: set[str] = set()
    for idx, tok in enumerate(flat):
        if tok.kind is not TokenKind.KEYWORD:
            continue
        if tok.text in ("struct", "union", "enum"):
            if idx + 1 < len(flat) and flat[idx + 1].kind is TokenKind.IDENTIFIER:
                names.add(flat[idx + 1].text)
        elif tok.text == "typedef":
            depth = 0
            last_ident = None
            for t2 in flat[idx + 1:]:
                if t2.kind is TokenKind.PUNCTUATOR:
                    if t2.text == "{":
                        depth += 1
                    elif t2.text == "}":
                        depth -= 1
                    elif t2.text == ";" and depth <= 0:
                        break
                elif t2.kind is TokenKind.IDENTIFIER and depth <= 0:
                    last_ident = t2.text
            if last_ident:
                names.add(last_ident)
    return names


def tokenize(source: str, source_id: str | None = None,
             max_lines: int = MAX_LINES,
             max_tokens_per_line: int = MAX_TOKENS_PER_LINE) -> TokenizedProgram:
    """Tokenize C source into a line-structured program.

    Comments are dropped, preprocessor lines become one opaque token each, and
    a second pass re-classifies typedef/struct names as TypeName.  Raises
    LexError for unterminated literals or illegal bytes and ProgramTooLarge
    beyond the configured bounds.
    """
    raw_lines = source.split("\n")
    if raw_lines and raw_lines[-1] == "":
        raw_lines.pop()
    if len(raw_lines) > max_lines:
        raise ProgramTooLarge(f"{len(raw_lines)} lines exceeds limit of {max_lines}")

    lines: list[list[Token]] = []
    in_block = False
    for lineno, raw in enumerate(raw_lines, start=1):
        scanner = _LineScanner(raw, lineno)
        tokens, in_block = scanner.scan(in_block)
        if len(tokens) > max_tokens_per_line:
            raise ProgramTooLarge(
                f"line {lineno} has {len(tokens)} tokens, limit is {max_tokens_per_line}")
        lines.append(tokens)
    if in_block:
        raise LexError(len(raw_lines), 1, "unterminated block comment")

    type_names = _collect_type_names(lines)
    if type_names:
        lines = [
            [Token(t.text, TokenKind.TYPE_NAME)
             if t.kind is TokenKind.IDENTIFIER and t.text in type_names else t
             for t in line]
            for line in lines
        ]

    sid = source_id if source_id is not None else _default_source_id(source)
    return TokenizedProgram(tuple(tuple(line) for line in lines), sid)


def detokenize_line(tokens: Iterable[Token]) -> str:
    return " ".join(t.text.replace(WS_GLYPH, " ") for t in tokens)


def detokenize(program: TokenizedProgram) -> str:
    """One physical line per token list, single spaces between tokens."""
    if not program.lines:
        return ""
    return "\n".join(detokenize_line(line) for line in program.lines) + "\n"


def write_jsonl(programs: Iterable[TokenizedProgram], path) -> None:
    from .storage import atomic_write

    with atomic_write(path) as fh:
        fh.write(json.dumps({"format_version": 1, "kind": "tokenized-programs"}) + "\n")
        for prog in programs:
            fh.write(json.dumps(prog.to_json(), ensure_ascii=False) + "\n")


def read_jsonl(path) -> list[TokenizedProgram]:
    from .storage import check_header
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        check_header(header, "tokenized-programs")
        return [TokenizedProgram.from_json(json.loads(line)) for line in fh if line.strip()]
