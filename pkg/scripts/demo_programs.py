"""Small correct C programs used by the demo scripts."""

_OPS = ("+", "-", "*")
_NAMES = ("alpha", "beta", "count", "delta", "extra", "first", "gamma", "house")


def tiny_parent(i: int) -> str:
    fn = f"fn{i}"
    op = _OPS[i % 3]
    return (
        f"int {fn} ( int p ) {{\n"
        f"return p {op} {1 + i} ;\n"
        f"}}\n"
        f"int main ( ) {{\n"
        f"int a ;\n"
        f"a = {fn} ( {2 + i % 5} ) ;\n"
        f"return a ;\n"
        f"}}\n"
    )


def parent(i: int) -> str:
    fn = f"calc{i}"
    v1 = _NAMES[i % len(_NAMES)]
    v2 = _NAMES[(i + 3) % len(_NAMES)]
    if v2 == v1:
        v2 = v1 + "2"
    return (
        f"int {fn} ( int x , int y ) {{\n"
        f"int r ;\n"
        f"r = x {_OPS[i % 3]} y ;\n"
        f"return r ;\n"
        f"}}\n"
        f"int main ( ) {{\n"
        f"int {v1} ;\n"
        f"int {v2} ;\n"
        f"{v1} = {1 + i} ;\n"
        f"{v2} = {fn} ( {v1} , {2 + i % 4} ) ;\n"
        f"while ( {v1} < {v2} ) {{\n"
        f"{v1} = {v1} {_OPS[(i + 1) % 3]} 1 ;\n"
        f"}}\n"
        f"if ( {v2} > {2 + i % 4} ) {{\n"
        f"{v2} = {v2} - {v1} ;\n"
        f"}}\n"
        f"return {v2} ;\n"
        f"}}\n"
    )
