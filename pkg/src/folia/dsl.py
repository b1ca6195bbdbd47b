"""Reader and writer for ``.sfo`` module descriptions.

Example::

    # rotations of the plane
    vars: x y
    ambient: tangent
    generators:
      - -y*dx + x*dy

Headers: ``vars:``, ``ambient:`` (``tangent`` | ``action <name>`` |
``liealgebra <name>``, name one of so2/so3/su2/gl2/custom), an optional
``matrices:`` block (one ``- a b; c d`` row-major matrix per line, needed for
``custom``) and ``generators:`` (one ``- <expr>`` per line). Expressions are
Q-polynomial combinations of the frame symbols: ``d<var>`` for the tangent
frame, ``e1 .. er`` otherwise. Rationals are written ``p/q``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .geometry import NAMED_ALGEBRAS, AlgebraError, AmbientAlgebroid, SingularSubalgebroid
from .polycore import FreeModuleElem, Poly


class DSLError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


_TOKEN = re.compile(r"\s*(?:(\d+(?:/\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|(\S))")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


def _tokenize(text: str, line: int, col0: int):
    pos = 0
    toks = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        start = m.start(m.lastindex) if m.lastindex else m.end()
        num, ident, op = m.groups()
        col = col0 + start + 1
        if num is not None:
            toks.append(("num", num, col))
        elif ident is not None:
            toks.append(("id", ident, col))
        elif op is not None:
            if op not in "+-*^()":
                raise DSLError(f"unexpected character {op!r}", line, col)
            toks.append(("op", op, col))
        pos = m.end()
    toks.append(("end", "", col0 + len(text.rstrip()) + 1))
    return toks


def _rational(text: str, line: int, col: int) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise DSLError(f"malformed rational {text!r}", line, col) from None


class _ExprParser:
    """Recursive descent over ``expr := term (('+'|'-') term)*``."""

    def __init__(self, text: str, line: int, col0: int, ambient: AmbientAlgebroid):
        self.toks = _tokenize(text, line, col0)
        self.i = 0
        self.line = line
        self.amb = ambient
        n = ambient.nvars
        self.vars = {name: Poly.var(i, n) for i, name in enumerate(ambient.names)}
        self.frame = {
            sym: FreeModuleElem.basis(a, ambient.rank, n)
            for a, sym in enumerate(ambient.frame_symbols())
        }

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise DSLError(msg, self.line, tok[2])

    def parse(self):
        val = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected {self.peek()[1]!r}")
        return val

    def expr(self):
        val = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()
            rhs = self.term()
            val = self.combine(val, rhs, op)
        return val

    def combine(self, a, b, op):
        if isinstance(a, Poly) and isinstance(b, Poly):
            return a + b if op[1] == "+" else a - b
        if isinstance(a, FreeModuleElem) and isinstance(b, FreeModuleElem):
            return a + b if op[1] == "+" else a - b
        for v in (a, b):
            if isinstance(v, Poly) and v.is_zero():
                other = b if v is a else a
                return other if (op[1] == "+" or v is b) else -other
        self.error("cannot add a function to a section", op)

    def term(self):
        val = self.unary()
        while self.peek()[:2] == ("op", "*"):
            op = self.take()
            rhs = self.unary()
            if isinstance(val, FreeModuleElem) and isinstance(rhs, FreeModuleElem):
                self.error("product of two sections is not a section", op)
            val = val * rhs
        return val

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            op = self.take()
            tok = self.take()
            if tok[0] != "num" or "/" in tok[1]:
                self.error("exponent must be a non-negative integer", tok)
            if isinstance(base, FreeModuleElem):
                self.error("cannot raise a section to a power", op)
            base = base ** int(tok[1])
        return base

    def atom(self):
        tok = self.take()
        kind, text, col = tok
        n = self.amb.nvars
        if kind == "num":
            return Poly.const(_rational(text, self.line, col), n)
        if kind == "id":
            if text in self.vars:
                return self.vars[text]
            if text in self.frame:
                return self.frame[text]
            raise DSLError(f"unknown variable or frame symbol {text!r}", self.line, col)
        if (kind, text) == ("op", "("):
            val = self.expr()
            if self.peek()[:2] != ("op", ")"):
                self.error("expected ')'")
            self.take()
            return val
        if kind == "end":
            raise DSLError("unexpected end of expression", self.line, col)
        raise DSLError(f"unexpected {text!r}", self.line, col)


def parse_expr(text: str, ambient: AmbientAlgebroid, line: int = 1, col0: int = 0) -> FreeModuleElem:
    val = _ExprParser(text, line, col0, ambient).parse()
    if isinstance(val, Poly):
        if val.is_zero():
            return FreeModuleElem.zero(ambient.rank, ambient.nvars)
        lead = len(text) - len(text.lstrip())
        raise DSLError("expression is a function, not a section (missing frame symbol?)", line, col0 + lead + 1)
    return val


def parse_poly(text: str, names: Sequence[str]) -> Poly:
    """Parse a Q-polynomial in the variables ``names``."""
    amb = AmbientAlgebroid.tangent(list(names))
    val = _ExprParser(text, 1, 0, amb).parse()
    if isinstance(val, FreeModuleElem):
        raise DSLError("expected a polynomial, got a section", 1, 1)
    return val


def _parse_matrix(text: str, line: int, col0: int):
    rows = []
    for chunk in text.split(";"):
        entries = chunk.split()
        if not entries:
            raise DSLError("empty matrix row", line, col0 + 1)
        rows.append([_rational(e, line, col0 + 1) for e in entries])
    if any(len(r) != len(rows) for r in rows):
        raise DSLError("matrix must be square", line, col0 + 1)
    return rows


def parse(source: str, name: str | None = None) -> SingularSubalgebroid:
    """Parse ``.sfo`` text into a singular subalgebroid (involutivity unchecked)."""
    names: list[str] | None = None
    ambient_spec: tuple[str, str | None, int] = ("tangent", None, 0)
    matrices: list = []
    gen_lines: list[tuple[str, int, int]] = []
    section = None
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.lstrip()
        indent = len(line) - len(stripped)
        if stripped.startswith("-") and section in ("generators", "matrices"):
            body = stripped[1:]
            col0 = indent + 1
            if section == "generators":
                gen_lines.append((body, lineno, col0))
            else:
                matrices.append(_parse_matrix(body, lineno, col0))
            continue
        key, sep, rest = stripped.partition(":")
        if not sep:
            raise DSLError(f"expected a 'key:' header, got {stripped!r}", lineno, indent + 1)
        key = key.strip()
        rest_col = indent + len(key) + 2 + (len(rest) - len(rest.lstrip()))
        if key == "vars":
            names = rest.split()
            for v in names:
                if not _IDENT.match(v):
                    raise DSLError(f"bad variable name {v!r}", lineno, rest_col)
            if len(set(names)) != len(names):
                raise DSLError("duplicate variable name", lineno, rest_col)
            section = None
        elif key == "ambient":
            parts = rest.split()
            if not parts or parts[0] not in ("tangent", "action", "liealgebra"):
                raise DSLError("ambient must be tangent, action <name> or liealgebra <name>", lineno, rest_col)
            if parts[0] == "tangent":
                if len(parts) != 1:
                    raise DSLError("tangent ambient takes no algebra name", lineno, rest_col)
                ambient_spec = ("tangent", None, lineno)
            else:
                if len(parts) != 2 or (parts[1] not in NAMED_ALGEBRAS and parts[1] != "custom"):
                    raise DSLError(
                        f"{parts[0]} needs one of {sorted(NAMED_ALGEBRAS)} or custom", lineno, rest_col
                    )
                ambient_spec = (parts[0], parts[1], lineno)
            section = None
        elif key in ("matrices", "generators"):
            if rest.strip():
                raise DSLError(f"'{key}:' starts a block; put entries on following lines", lineno, rest_col)
            section = key
        else:
            raise DSLError(f"unknown header {key!r}", lineno, indent + 1)
    if names is None:
        raise DSLError("missing 'vars:' header", 1, 1)
    kind, alg, aline = ambient_spec
    try:
        if kind == "tangent":
            if not names:
                raise DSLError("tangent ambient needs at least one variable", aline or 1, 1)
            amb = AmbientAlgebroid.tangent(names)
        else:
            if alg == "custom":
                if not matrices:
                    raise DSLError("custom algebra needs a 'matrices:' block", aline, 1)
                realization = matrices
            else:
                if matrices:
                    raise DSLError("'matrices:' is only allowed with a custom algebra", aline, 1)
                realization = alg
            if kind == "action":
                amb = AmbientAlgebroid.action(realization, names)
            else:
                amb = AmbientAlgebroid.lie_algebra(realization)
                if names:
                    raise DSLError("liealgebra ambient takes no variables", aline, 1)
    except AlgebraError as exc:
        raise DSLError(str(exc), aline or 1, 1) from None
    for v in names:
        if v in amb.frame_symbols():
            raise DSLError(f"variable {v!r} clashes with a frame symbol", 1, 1)
    gens = [parse_expr(text, amb, ln, c0) for text, ln, c0 in gen_lines]
    return SingularSubalgebroid(amb, gens, name=name)


def load(path: str | Path) -> SingularSubalgebroid:
    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), name=path.stem)


def _fmt_q(c: Fraction) -> str:
    return str(c)


def section_to_str(s: FreeModuleElem, ambient: AmbientAlgebroid) -> str:
    parts = []
    for coeff, sym in zip(s, ambient.frame_symbols()):
        if not coeff:
            continue
        txt = coeff.to_str(ambient.names)
        if len(coeff.terms) == 1:
            if txt == "1":
                body = sym
            elif txt == "-1":
                body = f"-{sym}"
            else:
                body = f"{txt}*{sym}"
        else:
            body = f"({txt})*{sym}"
        parts.append(body)
    if not parts:
        return "0"
    out = parts[0]
    for p in parts[1:]:
        out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
    return out


def dump(B: SingularSubalgebroid) -> str:
    amb = B.ambient
    lines = [f"vars: {' '.join(amb.names)}".rstrip()]
    if amb.kind == "tangent":
        lines.append("ambient: tangent")
    else:
        lines.append(f"ambient: {amb.kind} {amb.algebra}")
        if amb.algebra == "custom":
            lines.append("matrices:")
            for m in amb.matrices:
                lines.append("  - " + "; ".join(" ".join(_fmt_q(c) for c in row) for row in m))
    lines.append("generators:")
    for g in B.generators:
        lines.append(f"  - {section_to_str(g, amb)}")
    return "\n".join(lines) + "\n"
