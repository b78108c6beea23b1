"""Deterministic families of small, compilable C programs for tests."""

from __future__ import annotations

_OPS = ("+", "-", "*")
_NAMES = ("alpha", "beta", "count", "delta", "extra", "first", "gamma", "house")


def make_tiny_parent(i: int) -> str:
    """Eight lines: one helper, one call, declarations and a return."""
    fn = f"fn{i}"
    k1 = 1 + i
    k2 = 2 + (i % 5)
    op = _OPS[i % 3]
    return (
        f"int {fn} ( int p ) {{\n"
        f"return p {op} {k1} ;\n"
        f"}}\n"
        f"int main ( ) {{\n"
        f"int a ;\n"
        f"a = {fn} ( {k2} ) ;\n"
        f"return a ;\n"
        f"}}\n"
    )


def make_parent(i: int) -> str:
    """A dozen-plus lines with two variables, a call, a branch and a loop."""
    fn = f"calc{i}"
    v1 = _NAMES[i % len(_NAMES)]
    v2 = _NAMES[(i + 3) % len(_NAMES)]
    if v2 == v1:
        v2 = v1 + "2"
    op1 = _OPS[i % 3]
    op2 = _OPS[(i + 1) % 3]
    k1 = 1 + i
    k2 = 2 + (i % 4)
    return (
        f"int {fn} ( int x , int y ) {{\n"
        f"int r ;\n"
        f"r = x {op1} y ;\n"
        f"return r ;\n"
        f"}}\n"
        f"int main ( ) {{\n"
        f"int {v1} ;\n"
        f"int {v2} ;\n"
        f"{v1} = {k1} ;\n"
        f"{v2} = {fn} ( {v1} , {k2} ) ;\n"
        f"while ( {v1} < {v2} ) {{\n"
        f"{v1} = {v1} {op2} 1 ;\n"
        f"}}\n"
        f"if ( {v2} > {k2} ) {{\n"
        f"{v2} = {v2} - {v1} ;\n"
        f"}}\n"
        f"return {v2} ;\n"
        f"}}\n"
    )


def corpus(n: int, tiny: bool = False) -> list:
    maker = make_tiny_parent if tiny else make_parent
    return [maker(i) for i in range(n)]
