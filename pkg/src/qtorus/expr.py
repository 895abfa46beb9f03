"""Hamiltonian input language: parse, differentiate, evaluate phase-space
expressions in the variables q1..qn, p1..pn plus named parameters.

The grammar is plain infix arithmetic with ^ for powers (right associative,
integer or rational constant exponents), the unary functions sin, cos, exp,
log, sqrt, and whitespace insensitivity.  Differentiation is exact and
closed over the expression type; jets are obtained by symbolic
differentiation followed by (vectorized) evaluation, never by finite
differences.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .jets import Jet

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
_VAR_RE = re.compile(r"^[qp]\d+$")


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, msg, offset):
        super().__init__(f"{msg} (at byte {offset})")
        self.offset = offset


class ExprDomainError(ExprError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Node:
    __slots__ = ()

    def __repr__(self):
        return f"{type(self).__name__}({render(self)!r})"


class Const(Node):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)


class Var(Node):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name


class Param(Node):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name


class BinOp(Node):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a
        self.b = b


class Add(BinOp):
    pass


class Sub(BinOp):
    pass


class Mul(BinOp):
    pass


class Div(BinOp):
    pass


class Pow(Node):
    __slots__ = ("a", "k")

    def __init__(self, a, k):
        self.a = a
        self.k = float(k)


class Neg(Node):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a


class Call(Node):
    __slots__ = ("fn", "a")

    def __init__(self, fn, a):
        self.fn = fn
        self.a = a


def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


# smart constructors with constant folding (no deeper simplification)

def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_const(b) and b.value == 0.0:
        raise ExprError("division by constant zero")
    if _is_const(a) and _is_const(b):
        return Const(a.value / b.value)
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def powc(a, k):
    if k == 0:
        return Const(1.0)
    if k == 1:
        return a
    if _is_const(a):
        return Const(a.value ** k)
    return Pow(a, k)


def call(fn, a):
    if _is_const(a):
        return Const(getattr(math, fn)(a.value))
    return Call(fn, a)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup == "num" or (m.group("num") is not None):
            out.append(("num", float(text[m.start():m.end()].strip()), m.start()))
        elif m.group("name") is not None:
            out.append(("name", m.group("name"), m.start("name")))
        else:
            op = m.group("op")
            out.append(("op", "^" if op == "**" else op, m.start("op")))
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op):
        kind, val, off = self.next()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"expected {op!r}", off)

    def parse(self):
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.term()
                e = add(e, rhs) if val == "+" else sub(e, rhs)
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                e = mul(e, rhs) if val == "*" else div(e, rhs)
            else:
                return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return neg(self.unary())
        if kind == "op" and val == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.next()
            expo = self.exponent()
            return powc(base, expo)
        return base

    def exponent(self):
        # right-associative; must fold to a constant (integer or rational)
        kind, val, off = self.peek()
        sign = 1.0
        if kind == "op" and val == "-":
            self.next()
            sign = -1.0
        e = self.power()  # allows 2^3^2 right-assoc and (3/2) groupings
        if not isinstance(e, Const):
            raise ExprSyntaxError("exponent must be an integer or rational constant", off)
        return sign * e.value

    def atom(self):
        kind, val, off = self.next()
        if kind == "num":
            return Const(val)
        if kind == "name":
            nkind, nval, _ = self.peek()
            if nkind == "op" and nval == "(":
                if val not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {val!r}", off)
                self.next()
                arg = self.expr()
                self.expect_op(")")
                return call(val, arg)
            if val in FUNCTIONS:
                raise ExprSyntaxError(f"function {val!r} needs an argument list", off)
            if _VAR_RE.match(val):
                return Var(val)
            return Param(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected token {val!r}", off)


def parse(text: str) -> Node:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def render(e: Node) -> str:
    def prec(n):
        if isinstance(n, (Add, Sub)):
            return 1
        if isinstance(n, (Mul, Div)):
            return 2
        if isinstance(n, Neg):
            return 1.5
        if isinstance(n, Pow):
            return 3
        return 9

    def wrap(child, myprec, strict=False):
        s = render(child)
        p = prec(child)
        if p < myprec or (strict and p == myprec):
            return f"({s})"
        return s

    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Add):
        return f"{wrap(e.a, 1)} + {wrap(e.b, 1)}"
    if isinstance(e, Sub):
        return f"{wrap(e.a, 1)} - {wrap(e.b, 1, strict=True)}"
    if isinstance(e, Mul):
        return f"{wrap(e.a, 2)}*{wrap(e.b, 2)}"
    if isinstance(e, Div):
        return f"{wrap(e.a, 2)}/{wrap(e.b, 2, strict=True)}"
    if isinstance(e, Neg):
        return f"-{wrap(e.a, 2, strict=True)}"
    if isinstance(e, Pow):
        k = e.k
        ks = repr(int(k)) if k == int(k) else f"({repr(k)})"
        return f"{wrap(e.a, 3, strict=True)}^{ks}"
    if isinstance(e, Call):
        return f"{e.fn}({render(e.a)})"
    raise TypeError(f"cannot render {e!r}")


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

_DFUN = {
    "sin": lambda a: call("cos", a),
    "cos": lambda a: neg(call("sin", a)),
    "exp": lambda a: call("exp", a),
    "log": lambda a: div(Const(1.0), a),
    "sqrt": lambda a: div(Const(0.5), call("sqrt", a)),
}


def diff(e: Node, v: str) -> Node:
    """Exact partial derivative with respect to the phase variable v."""
    if isinstance(e, (Const, Param)):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == v else 0.0)
    if isinstance(e, Add):
        return add(diff(e.a, v), diff(e.b, v))
    if isinstance(e, Sub):
        return sub(diff(e.a, v), diff(e.b, v))
    if isinstance(e, Mul):
        return add(mul(diff(e.a, v), e.b), mul(e.a, diff(e.b, v)))
    if isinstance(e, Div):
        return div(sub(mul(diff(e.a, v), e.b), mul(e.a, diff(e.b, v))),
                   powc(e.b, 2))
    if isinstance(e, Neg):
        return neg(diff(e.a, v))
    if isinstance(e, Pow):
        return mul(mul(Const(e.k), powc(e.a, e.k - 1)), diff(e.a, v))
    if isinstance(e, Call):
        return mul(_DFUN[e.fn](e.a), diff(e.a, v))
    raise TypeError(f"cannot differentiate {e!r}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def free_params(e: Node) -> set:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, (Const, Var)):
        return set()
    if isinstance(e, (Add, Sub, Mul, Div)):
        return free_params(e.a) | free_params(e.b)
    if isinstance(e, (Neg, Call)):
        return free_params(e.a)
    if isinstance(e, Pow):
        return free_params(e.a)
    return set()


def free_vars(e: Node) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Const, Param)):
        return set()
    if isinstance(e, (Add, Sub, Mul, Div)):
        return free_vars(e.a) | free_vars(e.b)
    if isinstance(e, (Neg, Call)):
        return free_vars(e.a)
    if isinstance(e, Pow):
        return free_vars(e.a)
    return set()


def bind(e: Node, env: dict) -> Node:
    """Substitute parameter values, returning a parameter-free expression."""
    missing = free_params(e) - set(env)
    if missing:
        raise ExprError(f"unbound parameters: {sorted(missing)}")

    def go(n):
        if isinstance(n, Param):
            return Const(env[n.name])
        if isinstance(n, (Const, Var)):
            return n
        if isinstance(n, Add):
            return add(go(n.a), go(n.b))
        if isinstance(n, Sub):
            return sub(go(n.a), go(n.b))
        if isinstance(n, Mul):
            return mul(go(n.a), go(n.b))
        if isinstance(n, Div):
            return div(go(n.a), go(n.b))
        if isinstance(n, Neg):
            return neg(go(n.a))
        if isinstance(n, Pow):
            return powc(go(n.a), n.k)
        if isinstance(n, Call):
            return call(n.fn, go(n.a))
        raise TypeError(f"cannot bind {n!r}")

    return go(e)


def substitute(e: Node, name: str, value: float) -> Node:
    """Replace a phase variable by a constant, folding where possible."""

    def go(n):
        if isinstance(n, Var):
            return Const(value) if n.name == name else n
        if isinstance(n, (Const, Param)):
            return n
        if isinstance(n, Add):
            return add(go(n.a), go(n.b))
        if isinstance(n, Sub):
            return sub(go(n.a), go(n.b))
        if isinstance(n, Mul):
            return mul(go(n.a), go(n.b))
        if isinstance(n, Div):
            return div(go(n.a), go(n.b))
        if isinstance(n, Neg):
            return neg(go(n.a))
        if isinstance(n, Pow):
            return powc(go(n.a), n.k)
        if isinstance(n, Call):
            return call(n.fn, go(n.a))
        raise TypeError(f"cannot substitute in {n!r}")

    return go(e)


_NPFUN = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log,
          "sqrt": np.sqrt}


def evaluate(e: Node, point: dict, env: dict | None = None):
    """Evaluate at a point; dict values may be scalars or numpy arrays."""
    env = env or {}

    def ev(n):
        if isinstance(n, Const):
            return n.value
        if isinstance(n, Var):
            try:
                return np.asarray(point[n.name], dtype=float)
            except KeyError:
                raise ExprError(f"variable {n.name} not supplied") from None
        if isinstance(n, Param):
            try:
                return float(env[n.name])
            except KeyError:
                raise ExprError(f"unbound parameter {n.name!r}") from None
        if isinstance(n, Add):
            return ev(n.a) + ev(n.b)
        if isinstance(n, Sub):
            return ev(n.a) - ev(n.b)
        if isinstance(n, Mul):
            return ev(n.a) * ev(n.b)
        if isinstance(n, Div):
            den = ev(n.b)
            if np.any(den == 0.0):
                raise ExprDomainError(f"division by zero in {render(n)!r}")
            return ev(n.a) / den
        if isinstance(n, Neg):
            return -ev(n.a)
        if isinstance(n, Pow):
            base = ev(n.a)
            if n.k != int(n.k) and np.any(base < 0.0):
                raise ExprDomainError(
                    f"negative base for fractional power in {render(n)!r}")
            return base ** n.k
        if isinstance(n, Call):
            arg = ev(n.a)
            if n.fn == "log" and np.any(arg <= 0.0):
                raise ExprDomainError(f"log of non-positive value in {render(n)!r}")
            if n.fn == "sqrt" and np.any(arg < 0.0):
                raise ExprDomainError(f"sqrt of negative value in {render(n)!r}")
            return _NPFUN[n.fn](arg)
        raise TypeError(f"cannot evaluate {n!r}")

    out = ev(e)
    if not np.all(np.isfinite(out)):
        raise ExprDomainError(f"non-finite value evaluating {render(e)!r}")
    return out


# ---------------------------------------------------------------------------
# jets: symbolic differentiation then evaluation
# ---------------------------------------------------------------------------

def _deriv_table(e: Node, names, order):
    """All symbolic mixed partials d^alpha e for |alpha| <= order."""
    from .jets import jet_tables
    t = jet_tables(len(names), order)
    table = {}
    for alpha in t["idx"]:
        if sum(alpha) == 0:
            table[alpha] = e
            continue
        # peel one derivative off a previously computed entry
        v = next(i for i, k in enumerate(alpha) if k > 0)
        prev = list(alpha)
        prev[v] -= 1
        table[alpha] = diff(table[tuple(prev)], names[v])
    return table


def jet_of(e: Node, names, point, order: int, env: dict | None = None) -> Jet:
    """Jet (batched) of e at point(s); point shape (..., len(names)).

    Coefficients are the exact mixed partials divided by multi-index
    factorials, each partial computed symbolically and then evaluated.
    """
    e = bind(e, env or {})
    point = np.asarray(point, dtype=float)
    table = _deriv_table(e, names, order)
    from .jets import jet_tables
    t = jet_tables(len(names), order)
    coeffs = np.zeros(point.shape[:-1] + (t["ncoef"],))
    pdict = {nm: point[..., i] for i, nm in enumerate(names)}
    for i, alpha in enumerate(t["idx"]):
        fac = math.prod(math.factorial(a) for a in alpha)
        coeffs[..., i] = evaluate(table[alpha], pdict) / fac
    return Jet(len(names), order, coeffs, point)
