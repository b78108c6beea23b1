import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixture_programs import corpus

from crepair.errors import LexError, ProgramTooLarge
from crepair.tokens import (Token, TokenKind, TokenizedProgram, detokenize,
                            tokenize, WS_GLYPH)


def texts(line):
    return [t.text for t in line]


def kinds(line):
    return [t.kind for t in line]


def test_single_declaration():
    prog = tokenize("int a;")
    assert texts(prog.line(1)) == ["int", "a", ";"]
    assert kinds(prog.line(1)) == [TokenKind.KEYWORD, TokenKind.IDENTIFIER,
                                   TokenKind.PUNCTUATOR]


def test_comment_dropped_and_operators_split():
    prog = tokenize("a = b + 1; // x")
    assert texts(prog.line(1)) == ["a", "=", "b", "+", "1", ";"]
    assert kinds(prog.line(1)) == [
        TokenKind.IDENTIFIER, TokenKind.OPERATOR, TokenKind.IDENTIFIER,
        TokenKind.OPERATOR, TokenKind.INT_LITERAL, TokenKind.PUNCTUATOR]


def test_unterminated_string_is_lex_error():
    with pytest.raises(LexError) as err:
        tokenize('"abc')
    assert err.value.line == 1
    assert err.value.col == 1


def test_unterminated_char_is_lex_error():
    with pytest.raises(LexError):
        tokenize("char c = 'a ;")


def test_illegal_byte():
    with pytest.raises(LexError):
        tokenize("int a @ b ;")


def test_block_comment_spans_lines():
    prog = tokenize("int a ; /* one\ntwo */ int b ;")
    assert texts(prog.line(1)) == ["int", "a", ";"]
    assert texts(prog.line(2)) == ["int", "b", ";"]
    with pytest.raises(LexError):
        tokenize("int a ; /* never closed")


def test_preprocessor_line_is_one_opaque_token():
    prog = tokenize("#include <stdio.h>\nint x ;")
    (chunk,) = prog.line(1)
    assert chunk.kind is TokenKind.PREPROCESSOR
    assert " " not in chunk.text and WS_GLYPH in chunk.text
    with pytest.raises(LexError):
        tokenize("#define M(x) \\")


def test_typedef_and_struct_names_become_type_names():
    prog = tokenize("typedef int myint ;\nmyint x ;\nstruct node { int v ; } ;")
    assert prog.line(2)[0].kind is TokenKind.TYPE_NAME
    tags = [t for t in prog.line(3) if t.text == "node"]
    assert tags and tags[0].kind is TokenKind.TYPE_NAME


def test_float_and_int_literals():
    prog = tokenize("double d = 1.5e+3f ; int h = 0x1F ; float g = .5 ;")
    line = texts(prog.line(1))
    assert "1.5e+3f" in line and "0x1F" in line and ".5" in line
    k = {t.text: t.kind for t in prog.line(1)}
    assert k["1.5e+3f"] is TokenKind.FLOAT_LITERAL
    assert k["0x1F"] is TokenKind.INT_LITERAL
    assert k[".5"] is TokenKind.FLOAT_LITERAL


def test_program_too_large():
    with pytest.raises(ProgramTooLarge):
        tokenize("\n".join(["int a ;"] * 401))
    with pytest.raises(ProgramTooLarge):
        tokenize(" ".join(["a ;"] * 100))  # 200 tokens on one line


def test_line_count_and_1_based_access():
    prog = tokenize("int a ;\n\nint b ;")
    assert prog.line_count == 3
    assert prog.line(2) == ()
    assert texts(prog.line(3)) == ["int", "b", ";"]


def test_detokenize_shapes():
    assert detokenize(TokenizedProgram((), "empty")) == ""
    prog = tokenize("int a ;\nint b ;\nint c ;")
    out = detokenize(prog)
    assert out.count("\n") == 3 and len(out.split("\n")) == 4  # trailing newline
    assert out.split("\n")[:3] == ["int a ;", "int b ;", "int c ;"]


def test_string_whitespace_round_trip():
    src = 'char * s = "hello  world\\n" ;'
    prog = tokenize(src)
    lit = [t for t in prog.line(1) if t.kind is TokenKind.STRING_LITERAL][0]
    assert " " not in lit.text
    out = detokenize(prog)
    assert '"hello  world\\n"' in out
    assert tokenize(out).lines == prog.lines


def fixed_point(source: str) -> bool:
    first = tokenize(source)
    return tokenize(detokenize(first)).lines == first.lines


def test_round_trip_on_fixture_corpus():
    for source in corpus(20) + corpus(10, tiny=True):
        assert fixed_point(source)


# --- independent reference lexer (regex one-pass), used as an oracle --------

_REF = re.compile(r"""
    (?P<str>"(?:\\.|[^"\\\n])*")
  | (?P<chr>'(?:\\.|[^'\\\n])*')
  | (?P<flt>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fFlL]*|\d+[eE][+-]?\d+[fFlL]*)
  | (?P<int>0[xX][0-9a-fA-F]+[uUlL]*|\d+[uUlL]*)
  | (?P<id>[A-Za-z_]\w*)
  | (?P<op><<=|>>=|->|\+\+|--|<<|>>|<=|>=|==|!=|&&|\|\||[+\-*/%&|^]=|[+\-*/%=<>!&|^~?:])
  | (?P<punct>[,.;(){}\[\]])
""", re.VERBOSE)


def reference_token_texts(source: str) -> list:
    no_block = re.sub(r"/\*.*?\*/", " ", source, flags=re.DOTALL)
    out = []
    for line in no_block.split("\n"):
        line = re.sub(r"//.*", "", line)
        if line.lstrip().startswith("#"):
            continue
        out.extend(m.group(0) for m in _REF.finditer(line))
    return out


def test_against_reference_lexer_on_corpus():
    """Token boundaries cross-checked against an independent regex lexer."""
    sources = corpus(40) + corpus(10, tiny=True)
    assert len(sources) == 50
    for source in sources:
        prog = tokenize(source)
        mine = [t.text for line in prog.lines for t in line
                if t.kind is not TokenKind.PREPROCESSOR]
        assert mine == reference_token_texts(source)


@st.composite
def small_programs(draw):
    names = st.sampled_from(["a", "b", "count", "x1"])
    stmts = st.sampled_from([
        "int {n} ;", "{n} = {n} + 1 ;", "if ( {n} > 0 ) {{", "}}",
        "return {n} ;", "{n} = ( {n} * 2 ) - 3 ;", "while ( {n} != 0 ) {{",
        'printf ( "%d" , {n} ) ;',
    ])
    lines = draw(st.lists(stmts, min_size=1, max_size=8))
    return "\n".join(line.format(n=draw(names)) for line in lines)


@settings(max_examples=60, deadline=None)
@given(small_programs())
def test_round_trip_property(source):
    assert fixed_point(source)


@settings(max_examples=60, deadline=None)
@given(small_programs())
def test_kinds_stable_and_no_whitespace(source):
    prog = tokenize(source)
    again = tokenize(detokenize(prog))
    flat_a = [t for line in prog.lines for t in line]
    flat_b = [t for line in again.lines for t in line]
    assert [t.kind for t in flat_a] == [t.kind for t in flat_b]
    for t in flat_a:
        assert not any(ch.isspace() for ch in t.text)


def test_token_text_must_be_non_empty():
    with pytest.raises(ValueError):
        Token("", TokenKind.IDENTIFIER)


def test_json_round_trip():
    prog = tokenize("int a ;\na = 1 ;", "demo")
    again = TokenizedProgram.from_json(prog.to_json())
    assert again == prog
