"""Parsing, evaluation and Taylor expansion of analytic map expressions.

Grammar (infix, whitespace insignificant, no implicit multiplication)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' exponent)?
    base   := number | 'i' | 'pi' | ident | ident '(' expr ')'
            | '(' expr ')' | '-' base

Numbers are decimal with optional fraction and exponent.  ``i`` and ``pi``
are reserved constants.  Integer exponents give exact powers; fractional
exponents use the principal branch with argument in (-pi, pi].  Known
function names: tan, sin, cos, exp, log, sqrt.

Free identifiers are parameters and must be bound to complex values at
parse time.  The resulting :class:`MapExpr` is immutable and safe to share
across threads.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass

from .series import UniSeries

FUNCTIONS = ("tan", "sin", "cos", "exp", "log", "sqrt")


class ParseError(ValueError):
    """Syntax error with byte offset and an expected-token hint."""

    def __init__(self, message, offset, expected=None):
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at byte {offset}{hint}")
        self.offset = offset
        self.expected = expected


class UnboundParameterError(ValueError):
    def __init__(self, missing):
        super().__init__(
            "unbound parameters: " + ", ".join(sorted(missing))
        )
        self.missing = tuple(sorted(missing))


class EvalDomainError(ValueError):
    """Evaluation hit a pole, branch point or other singularity."""


# -- AST ----------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Const:
    value: complex


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    lhs: object
    rhs: object


@dataclass(frozen=True)
class PowInt:
    base: object
    exponent: int


@dataclass(frozen=True)
class PowReal:
    base: object
    exponent: float


@dataclass(frozen=True)
class Func:
    name: str
    arg: object


# -- tokenizer -----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:]
            if rest.strip() == "":
                break
            off = len(text[: pos + len(rest) - len(rest.lstrip())].encode())
            raise ParseError(
                f"unexpected character {rest.lstrip()[0]!r}", off,
                expected="number, identifier or operator",
            )
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), len(text[: m.start(kind)].encode())))
        pos = m.end()
    tokens.append(("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"unexpected token {val!r}", off, expected=repr(op))
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(
                f"trailing input {val!r}", off, expected="end of expression"
            )
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                node = BinOp(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                node = BinOp(val, node, self.factor())
            else:
                return node

    def factor(self):
        node = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            node = self._power(node)
        return node

    def _power(self, base):
        paren = False
        kind, val, off = self.peek()
        if kind == "op" and val == "(":
            paren = True
            self.advance()
            kind, val, off = self.peek()
        sign = 1.0
        if kind == "op" and val == "-":
            sign = -1.0
            self.advance()
            kind, val, off = self.peek()
        if kind != "num":
            raise ParseError(
                f"unexpected token {val!r}", off, expected="numeric exponent"
            )
        self.advance()
        exponent = sign * float(val)
        if paren:
            self.expect_op(")")
        if exponent == int(exponent):
            return PowInt(base, int(exponent))
        return PowReal(base, exponent)

    def base(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Const(complex(float(val)))
        if kind == "ident":
            if val == "z":
                return Var()
            if val == "i":
                return Const(1j)
            if val == "pi":
                return Const(complex(math.pi))
            kind2, val2, _ = self.peek()
            if kind2 == "op" and val2 == "(":
                if val not in FUNCTIONS:
                    raise ParseError(
                        f"unknown function {val!r}", off,
                        expected="one of " + ", ".join(FUNCTIONS),
                    )
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Func(val, arg)
            return Param(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and val == "-":
            return Neg(self.base())
        raise ParseError(
            f"unexpected token {val or 'end of input'!r}", off,
            expected="number, identifier or '('",
        )


# -- MapExpr --------------------------------------------------------------


def _free_params(node, out):
    if isinstance(node, Param):
        out.add(node.name)
    elif isinstance(node, Neg):
        _free_params(node.arg, out)
    elif isinstance(node, BinOp):
        _free_params(node.lhs, out)
        _free_params(node.rhs, out)
    elif isinstance(node, (PowInt, PowReal)):
        _free_params(node.base, out)
    elif isinstance(node, Func):
        _free_params(node.arg, out)


class MapExpr:
    """A parsed analytic expression with bound parameter values.

    Immutable after construction; evaluation, differentiation and Taylor
    expansion never mutate the tree.
    """

    __slots__ = ("root", "params")

    def __init__(self, root, params=None):
        self.params = {k: complex(v) for k, v in (params or {}).items()}
        free = set()
        _free_params(root, free)
        missing = free - set(self.params)
        if missing:
            raise UnboundParameterError(missing)
        self.root = root

    def free_params(self):
        out = set()
        _free_params(self.root, out)
        return out

    # -- evaluation -----------------------------------------------------
    def __call__(self, z):
        return self.eval(z)

    def eval(self, z):
        val = _eval_node(self.root, complex(z), self.params)
        if not (math.isfinite(val.real) and math.isfinite(val.imag)):
            raise EvalDomainError(f"non-finite value at z={z!r}")
        return val

    def taylor(self, center, order):
        """Taylor coefficients c_0..c_order at ``center`` as a UniSeries.

        The k-th derivative at the center is k! * c_k.  Raises
        :class:`EvalDomainError` if any subexpression is singular there.
        """
        if order < 0:
            raise ValueError("order must be >= 0")
        return _taylor_node(self.root, complex(center), order, self.params)

    def derivative(self):
        """Expression tree of the derivative (same parameter bindings)."""
        return MapExpr(_diff_node(self.root), self.params)

    def jet2(self, z):
        """(f, f', f'') at z in one tree pass; cheaper than three evals."""
        f, df, ddf = _jet2_node(self.root, complex(z), self.params)
        if not (math.isfinite(f.real) and math.isfinite(f.imag)):
            raise EvalDomainError(f"non-finite value at z={z!r}")
        return f, df, ddf

    # -- printing / code generation --------------------------------------
    def to_string(self):
        return _print_node(self.root)

    def __repr__(self):
        return f"MapExpr({self.to_string()!r})"

    def to_python_source(self, name="phi"):
        """Source for a plain ``def name(z)`` using cmath, params inlined."""
        body = _source_node(self.root, self.params)
        return f"def {name}(z):\n    return {body}\n"


def parse(text, params=None):
    """Parse ``text`` into a :class:`MapExpr` with the given bindings."""
    root = _Parser(text).parse()
    return MapExpr(root, params)


# -- evaluation ------------------------------------------------------------


def _eval_node(node, z, params):
    if isinstance(node, Var):
        return z
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Param):
        return params[node.name]
    if isinstance(node, Neg):
        return -_eval_node(node.arg, z, params)
    if isinstance(node, BinOp):
        a = _eval_node(node.lhs, z, params)
        b = _eval_node(node.rhs, z, params)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            raise EvalDomainError(f"division by zero at z={z!r}")
        return a / b
    if isinstance(node, PowInt):
        base = _eval_node(node.base, z, params)
        if base == 0 and node.exponent < 0:
            raise EvalDomainError(f"negative power of zero at z={z!r}")
        return base**node.exponent
    if isinstance(node, PowReal):
        base = _eval_node(node.base, z, params)
        if base == 0:
            raise EvalDomainError(f"fractional power of zero at z={z!r}")
        return cmath.exp(node.exponent * cmath.log(base))
    if isinstance(node, Func):
        arg = _eval_node(node.arg, z, params)
        if node.name == "tan":
            c = cmath.cos(arg)
            if c == 0:
                raise EvalDomainError(f"tan pole at z={z!r}")
            return cmath.sin(arg) / c
        if node.name == "sin":
            return cmath.sin(arg)
        if node.name == "cos":
            return cmath.cos(arg)
        if node.name == "exp":
            return cmath.exp(arg)
        if node.name == "log":
            if arg == 0:
                raise EvalDomainError(f"log branch point at z={z!r}")
            return cmath.log(arg)
        if node.name == "sqrt":
            return cmath.sqrt(arg)
    raise TypeError(f"unknown node {node!r}")


# -- Taylor expansion -------------------------------------------------------


def _taylor_node(node, center, order, params):
    if isinstance(node, Var):
        return UniSeries([center, 1.0], max(order, 1)).truncate(order)
    if isinstance(node, Const):
        return UniSeries.constant(node.value, order)
    if isinstance(node, Param):
        return UniSeries.constant(params[node.name], order)
    if isinstance(node, Neg):
        return -_taylor_node(node.arg, center, order, params)
    if isinstance(node, BinOp):
        a = _taylor_node(node.lhs, center, order, params)
        b = _taylor_node(node.rhs, center, order, params)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        try:
            return a / b
        except ValueError as exc:
            raise EvalDomainError(f"singular at center {center!r}: {exc}") from exc
    try:
        if isinstance(node, PowInt):
            return _taylor_node(node.base, center, order, params).pow_int(
                node.exponent
            )
        if isinstance(node, PowReal):
            return _taylor_node(node.base, center, order, params).pow_real(
                node.exponent
            )
        if isinstance(node, Func):
            arg = _taylor_node(node.arg, center, order, params)
            return getattr(arg, node.name)()
    except ValueError as exc:
        raise EvalDomainError(f"singular at center {center!r}: {exc}") from exc
    raise TypeError(f"unknown node {node!r}")


# -- order-2 jets -------------------------------------------------------------


def _jet2_node(node, z, params):
    if isinstance(node, Var):
        return z, 1.0 + 0j, 0j
    if isinstance(node, Const):
        return node.value, 0j, 0j
    if isinstance(node, Param):
        return params[node.name], 0j, 0j
    if isinstance(node, Neg):
        f, df, ddf = _jet2_node(node.arg, z, params)
        return -f, -df, -ddf
    if isinstance(node, BinOp):
        a, da, dda = _jet2_node(node.lhs, z, params)
        b, db, ddb = _jet2_node(node.rhs, z, params)
        if node.op == "+":
            return a + b, da + db, dda + ddb
        if node.op == "-":
            return a - b, da - db, dda - ddb
        if node.op == "*":
            return a * b, da * b + a * db, dda * b + 2.0 * da * db + a * ddb
        if b == 0:
            raise EvalDomainError(f"division by zero at z={z!r}")
        q = a / b
        dq = (da - q * db) / b
        return q, dq, (dda - 2.0 * dq * db - q * ddb) / b
    if isinstance(node, PowInt):
        u, du, ddu = _jet2_node(node.base, z, params)
        n = node.exponent
        if n == 0:
            return 1.0 + 0j, 0j, 0j
        if u == 0 and n < 2:
            if n == 1:
                return u, du, ddu
            raise EvalDomainError(f"negative power of zero at z={z!r}")
        un2 = u ** (n - 2) if (u != 0 or n >= 2) else 0j
        un1 = un2 * u
        return un1 * u, n * un1 * du, n * (n - 1) * un2 * du * du + n * un1 * ddu
    if isinstance(node, PowReal):
        u, du, ddu = _jet2_node(node.base, z, params)
        if u == 0:
            raise EvalDomainError(f"fractional power of zero at z={z!r}")
        al = node.exponent
        w = cmath.exp(al * cmath.log(u))
        w1 = al * w / u
        return w, w1 * du, (al - 1.0) * w1 / u * du * du + w1 * ddu
    if isinstance(node, Func):
        u, du, ddu = _jet2_node(node.arg, z, params)
        if node.name == "tan":
            c = cmath.cos(u)
            if c == 0:
                raise EvalDomainError(f"tan pole at z={z!r}")
            s = cmath.sin(u) / c
            sec2 = 1.0 + s * s
            return s, sec2 * du, 2.0 * s * sec2 * du * du + sec2 * ddu
        if node.name == "sin":
            s, c = cmath.sin(u), cmath.cos(u)
            return s, c * du, -s * du * du + c * ddu
        if node.name == "cos":
            s, c = cmath.sin(u), cmath.cos(u)
            return c, -s * du, -c * du * du - s * ddu
        if node.name == "exp":
            e = cmath.exp(u)
            return e, e * du, e * (du * du + ddu)
        if node.name == "log":
            if u == 0:
                raise EvalDomainError(f"log branch point at z={z!r}")
            r = du / u
            return cmath.log(u), r, ddu / u - r * r
        if node.name == "sqrt":
            w = cmath.sqrt(u)
            if w == 0:
                raise EvalDomainError(f"sqrt branch point at z={z!r}")
            w1 = du / (2.0 * w)
            return w, w1, (ddu - 2.0 * w1 * w1) / (2.0 * w)
    raise TypeError(f"unknown node {node!r}")


# -- differentiation --------------------------------------------------------


def _diff_node(node):
    if isinstance(node, Var):
        return Const(1.0 + 0j)
    if isinstance(node, (Const, Param)):
        return Const(0j)
    if isinstance(node, Neg):
        return Neg(_diff_node(node.arg))
    if isinstance(node, BinOp):
        du = _diff_node(node.lhs)
        dv = _diff_node(node.rhs)
        if node.op in "+-":
            return BinOp(node.op, du, dv)
        if node.op == "*":
            return BinOp(
                "+", BinOp("*", du, node.rhs), BinOp("*", node.lhs, dv)
            )
        num = BinOp(
            "-", BinOp("*", du, node.rhs), BinOp("*", node.lhs, dv)
        )
        return BinOp("/", num, PowInt(node.rhs, 2))
    if isinstance(node, PowInt):
        du = _diff_node(node.base)
        if node.exponent == 0:
            return Const(0j)
        return BinOp(
            "*",
            BinOp("*", Const(complex(node.exponent)), PowInt(node.base, node.exponent - 1)),
            du,
        )
    if isinstance(node, PowReal):
        du = _diff_node(node.base)
        return BinOp(
            "*",
            BinOp("*", Const(complex(node.exponent)), PowReal(node.base, node.exponent - 1.0)),
            du,
        )
    if isinstance(node, Func):
        u, du = node.arg, _diff_node(node.arg)
        if node.name == "tan":
            outer = BinOp("+", Const(1.0 + 0j), PowInt(Func("tan", u), 2))
        elif node.name == "sin":
            outer = Func("cos", u)
        elif node.name == "cos":
            outer = Neg(Func("sin", u))
        elif node.name == "exp":
            outer = Func("exp", u)
        elif node.name == "log":
            return BinOp("/", du, u)
        elif node.name == "sqrt":
            return BinOp(
                "/", du, BinOp("*", Const(2.0 + 0j), Func("sqrt", u))
            )
        else:
            raise TypeError(f"unknown function {node.name}")
        return BinOp("*", outer, du)
    raise TypeError(f"unknown node {node!r}")


# -- printing ---------------------------------------------------------------


def _fmt_real(x):
    if x == int(x) and abs(x) < 1e15:
        return repr(int(x))
    return repr(x)


def _print_const(c):
    if c == 1j:
        return "i"
    if c.imag == 0:
        if c.real < 0:
            return f"(-{_fmt_real(-c.real)})"
        return _fmt_real(c.real)
    if c.real == 0:
        if c.imag < 0:
            return f"(-{_fmt_real(-c.imag)}*i)"
        return f"({_fmt_real(c.imag)}*i)"
    op = "+" if c.imag >= 0 else "-"
    re = _print_const(complex(c.real))
    return f"({re}{op}{_fmt_real(abs(c.imag))}*i)"


def _print_node(node):
    if isinstance(node, Var):
        return "z"
    if isinstance(node, Const):
        return _print_const(node.value)
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_print_node(node.arg)})"
    if isinstance(node, BinOp):
        return f"({_print_node(node.lhs)}{node.op}{_print_node(node.rhs)})"
    if isinstance(node, PowInt):
        exp = (
            repr(node.exponent)
            if node.exponent >= 0
            else f"({node.exponent!r})"
        )
        return f"({_print_node(node.base)})^{exp}"
    if isinstance(node, PowReal):
        exp = (
            repr(node.exponent)
            if node.exponent >= 0
            else f"({node.exponent!r})"
        )
        return f"({_print_node(node.base)})^{exp}"
    if isinstance(node, Func):
        return f"{node.name}({_print_node(node.arg)})"
    raise TypeError(f"unknown node {node!r}")


# -- source generation -------------------------------------------------------


def _source_node(node, params):
    if isinstance(node, Var):
        return "z"
    if isinstance(node, Const):
        return f"({node.value!r})"
    if isinstance(node, Param):
        return f"({params[node.name]!r})"
    if isinstance(node, Neg):
        return f"(-{_source_node(node.arg, params)})"
    if isinstance(node, BinOp):
        a = _source_node(node.lhs, params)
        b = _source_node(node.rhs, params)
        return f"({a}{node.op}{b})"
    if isinstance(node, PowInt):
        return f"({_source_node(node.base, params)})**({node.exponent})"
    if isinstance(node, PowReal):
        return f"({_source_node(node.base, params)})**({node.exponent!r})"
    if isinstance(node, Func):
        return f"cmath.{node.name}({_source_node(node.arg, params)})"
    raise TypeError(f"unknown node {node!r}")
