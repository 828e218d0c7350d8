"""Small expression language for coefficient functions.

Expressions are parsed by recursive descent into an immutable tree and can be
evaluated on floats or numpy arrays, differentiated symbolically, or pushed
through second-order forward-mode jets (value, gradient, hessian) that give
exact partial derivatives instead of finite differences.

Grammar, loosest binding first::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := number | name | name '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DomainError, UnboundVariable

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sgn")


class Expr:
    """Base class of expression nodes."""

    prec = 5

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr
    prec = 3


@dataclass(frozen=True, eq=True)
class Add(Expr):
    left: Expr
    right: Expr
    prec = 1
    symbol = "+"


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    left: Expr
    right: Expr
    prec = 1
    symbol = "-"


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    left: Expr
    right: Expr
    prec = 2
    symbol = "*"


@dataclass(frozen=True, eq=True)
class Div(Expr):
    left: Expr
    right: Expr
    prec = 2
    symbol = "/"


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    left: Expr
    right: Expr
    prec = 4
    symbol = "^"


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr


BINARY = (Add, Sub, Mul, Div, Pow)


# --------------------------------------------------------------------- parse

class ExprSyntaxError(SyntaxError):
    """Parse failure; ``column`` is 1-based, ``expected`` lists acceptable tokens."""

    def __init__(self, column: int, expected, found: str, text: str = ""):
        self.column = column
        self.expected = tuple(expected)
        self.found = found
        exp = ", ".join(self.expected) if self.expected else "nothing"
        super().__init__(f"column {column}: unexpected {found!r}, expected {exp}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<pow2>\*\*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(pos + 1, ("number", "name", "operator"), text[pos], text)
        col = m.start(m.lastgroup) + 1
        kind = m.lastgroup
        lexeme = m.group(kind)
        if kind == "pow2":
            raise ExprSyntaxError(col, ("operand",), "**", text)
        tokens.append((kind, lexeme, col))
        pos = m.end()
    tokens.append(("end", "", n + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, lexeme, col = self.peek()
        raise ExprSyntaxError(col, expected, lexeme or "end of input", self.text)

    def expect_op(self, op):
        kind, lexeme, col = self.peek()
        if kind != "op" or lexeme != op:
            self.fail((repr(op),))
        self.take()

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(("operator", "end of input"))
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self) -> Expr:
        kind, lexeme, _ = self.peek()
        if kind == "op" and lexeme == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, lexeme, _ = self.peek()
        if kind == "op" and lexeme == "^":
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, lexeme, col = self.peek()
        if kind == "num":
            self.take()
            return Num(float(lexeme))
        if kind == "name":
            self.take()
            nxt = self.peek()
            if lexeme in FUNCTIONS:
                if nxt[0] != "op" or nxt[1] != "(":
                    self.fail(("'('",))
                self.take()
                arg = self.expr()
                self.expect_op(")")
                return Func(lexeme, arg)
            if nxt[0] == "op" and nxt[1] == "(":
                raise ExprSyntaxError(col, FUNCTIONS, lexeme, self.text)
            return Var(lexeme)
        if kind == "op" and lexeme == "(":
            self.take()
            node = self.expr()
            self.expect_op(")")
            return node
        self.fail(("number", "name", "'('", "'-'"))


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


def as_expr(obj) -> Expr:
    if isinstance(obj, Expr):
        return obj
    if isinstance(obj, (int, float)):
        return Num(float(obj))
    return parse(str(obj))


# --------------------------------------------------------------------- print

def _fmt_num(v: float) -> str:
    if np.isfinite(v) and v == int(v) and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(float(v))
    return f"({s})" if v < 0 else s


def to_text(e: Expr) -> str:
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.operand)
        if e.operand.prec < Neg.prec:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        lhs = to_text(e.left)
        if e.left.prec <= Pow.prec:
            lhs = f"({lhs})"
        rhs = to_text(e.right)
        if e.right.prec < Pow.prec:
            rhs = f"({rhs})"
        return f"{lhs}^{rhs}"
    lhs = to_text(e.left)
    if e.left.prec < e.prec:
        lhs = f"({lhs})"
    rhs = to_text(e.right)
    if e.right.prec < e.prec or (e.right.prec == e.prec and isinstance(e, (Sub, Div))):
        rhs = f"({rhs})"
    return f"{lhs} {e.symbol} {rhs}"


def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, Func):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


# ------------------------------------------------------------------ evaluate

def _scalar_or_array(x):
    return x if isinstance(x, np.ndarray) else float(x)


def _int_exponent(p) -> bool:
    return np.ndim(p) == 0 and float(p) == int(p)


def evaluate(expr: Expr, env: Mapping[str, object]):
    """Evaluate on floats or broadcastable numpy arrays.

    Raises ``UnboundVariable`` for a missing name and ``DomainError`` for
    division by zero, logarithm of a nonpositive number, square root of a
    negative number or a non-integer power of a negative base.
    """
    with np.errstate(all="ignore"):
        return _scalar_or_array(_eval(expr, env))


def _eval(e: Expr, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, Func):
        a = _eval(e.arg, env)
        return _apply_func(e, a)
    a = _eval(e.left, env)
    b = _eval(e.right, env)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if isinstance(e, Div):
        if np.any(np.asarray(b) == 0):
            raise DomainError(e, f"division by zero in {e}")
        return a / b
    return _power(e, a, b)


def _power(e, a, b):
    if _int_exponent(b):
        p = int(b)
        if p < 0 and np.any(np.asarray(a) == 0):
            raise DomainError(e, f"zero to a negative power in {e}")
        if p >= 0:
            return a ** p
        return 1.0 / (np.asarray(a, dtype=float) ** (-p)) if isinstance(a, np.ndarray) else 1.0 / (a ** (-p))
    aa = np.asarray(a)
    if np.any(aa < 0):
        raise DomainError(e, f"non-integer power of a negative base in {e}")
    if np.any((aa == 0) & (np.asarray(b) < 0)):
        raise DomainError(e, f"zero to a negative power in {e}")
    return np.power(a, b)


def _apply_func(e: Func, a):
    name = e.name
    if name == "sin":
        return np.sin(a)
    if name == "cos":
        return np.cos(a)
    if name == "tan":
        return np.tan(a)
    if name == "exp":
        return np.exp(a)
    if name == "log":
        if np.any(np.asarray(a) <= 0):
            raise DomainError(e, f"logarithm of a nonpositive value in {e}")
        return np.log(a)
    if name == "sqrt":
        if np.any(np.asarray(a) < 0):
            raise DomainError(e, f"square root of a negative value in {e}")
        return np.sqrt(a)
    if name == "abs":
        return np.abs(a)
    if name == "sgn":
        return np.sign(a)
    raise ValueError(f"unknown function {name}")


# ------------------------------------------------------------ symbolic diff

ZERO = Num(0.0)
ONE = Num(1.0)


def _is(e, v):
    return isinstance(e, Num) and e.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return Add(a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return Sub(a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    return Neg(a)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return Mul(a, b)


def _div(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return Div(a, b)


def diff(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative. ``sgn`` differentiates to zero."""
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        d = diff(e.operand, var)
        return ZERO if _is(d, 0) else _neg(d)
    if isinstance(e, Add):
        return _add(diff(e.left, var), diff(e.right, var))
    if isinstance(e, Sub):
        return _sub(diff(e.left, var), diff(e.right, var))
    if isinstance(e, Mul):
        return _add(_mul(diff(e.left, var), e.right), _mul(e.left, diff(e.right, var)))
    if isinstance(e, Div):
        du, dv = diff(e.left, var), diff(e.right, var)
        if _is(dv, 0):
            return _div(du, e.right)
        return _div(_sub(_mul(du, e.right), _mul(e.left, dv)), Pow(e.right, Num(2.0)))
    if isinstance(e, Pow):
        u, p = e.left, e.right
        du = diff(u, var)
        if var not in free_vars(p):
            if _is(du, 0):
                return ZERO
            lowered = Num(p.value - 1.0) if isinstance(p, Num) else Sub(p, ONE)
            return _mul(_mul(p, Pow(u, lowered)), du)
        dp = diff(p, var)
        return _mul(e, _add(_mul(dp, Func("log", u)), _div(_mul(p, du), u)))
    if isinstance(e, Func):
        u = e.arg
        du = diff(u, var)
        if _is(du, 0):
            return ZERO
        outer = {
            "sin": lambda: Func("cos", u),
            "cos": lambda: Neg(Func("sin", u)),
            "tan": lambda: Add(ONE, Pow(Func("tan", u), Num(2.0))),
            "exp": lambda: Func("exp", u),
            "log": lambda: Div(ONE, u),
            "sqrt": lambda: Div(ONE, Mul(Num(2.0), Func("sqrt", u))),
            "abs": lambda: Func("sgn", u),
            "sgn": lambda: ZERO,
        }[e.name]()
        return _mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")


def diff_alias(e: Expr, names) -> Expr:
    """Derivative along a coordinate that may appear under several names."""
    out = ZERO
    for name in names:
        out = _add(out, diff(e, name))
    return out


def is_constant(e: Expr) -> bool:
    return isinstance(e, Num)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if isinstance(e, Num):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return Neg(substitute(e.operand, mapping))
    if isinstance(e, Func):
        return Func(e.name, substitute(e.arg, mapping))
    return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))


def quotient(num: Expr, den: Expr) -> Expr:
    """num/den with a few cosmetic rewrites (x/1, sin(u)/cos(u))."""
    if isinstance(num, Func) and isinstance(den, Func) and num.arg == den.arg:
        if (num.name, den.name) == ("sin", "cos"):
            return Func("tan", num.arg)
        if (num.name, den.name) == ("cos", "sin"):
            return Div(ONE, Func("tan", num.arg))
    return _div(num, den)


# ---------------------------------------------------------------- jets

class Jet:
    """Truncated second-order Taylor number over ``n`` seed directions.

    ``grad`` has shape ``(n, *S)`` and ``hess`` ``(n, n, *S)`` where ``S`` is
    the broadcast shape of the value. With ``order=1`` the hessian is None.
    """

    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @classmethod
    def const(cls, c, n, order=2):
        c = np.asarray(c, dtype=float)
        g = np.zeros((n,) + c.shape)
        h = np.zeros((n, n) + c.shape) if order == 2 else None
        return cls(c, g, h)

    @classmethod
    def seed(cls, x, i, n, order=2):
        x = np.asarray(x, dtype=float)
        g = np.zeros((n,) + x.shape)
        g[i] = 1.0
        h = np.zeros((n, n) + x.shape) if order == 2 else None
        return cls(x, g, h)

    @property
    def order(self):
        return 1 if self.hess is None else 2

    def _expand(self, shape):
        """Same jet with the value broadcast to ``shape``."""
        val = np.asarray(self.val)
        if val.shape == tuple(shape):
            return self
        pad = (1,) * (len(shape) - val.ndim)

        def lift(a, lead):
            a = np.asarray(a)
            return np.broadcast_to(a.reshape(a.shape[:lead] + pad + a.shape[lead:]),
                                   a.shape[:lead] + tuple(shape))
        return Jet(lift(val, 0), lift(self.grad, 1),
                   None if self.hess is None else lift(self.hess, 2))

    def _align(self, o):
        shape = np.broadcast_shapes(np.shape(self.val), np.shape(o.val))
        return self._expand(shape), o._expand(shape)

    def _outer(self, other):
        a, b = self.grad, other.grad
        return a[:, None] * b[None, :]

    def __add__(self, o):
        self, o = self._align(o)
        return Jet(self.val + o.val, self.grad + o.grad, None if self.hess is None else self.hess + o.hess)

    def __sub__(self, o):
        self, o = self._align(o)
        return Jet(self.val - o.val, self.grad - o.grad, None if self.hess is None else self.hess - o.hess)

    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __mul__(self, o):
        self, o = self._align(o)
        val = self.val * o.val
        grad = self.grad * o.val + o.grad * self.val
        hess = None
        if self.hess is not None:
            hess = self.hess * o.val + o.hess * self.val + self._outer(o) + o._outer(self)
        return Jet(val, grad, hess)

    def chain(self, f0, f1, f2):
        """Compose with a scalar function whose derivatives at ``val`` are f0, f1, f2."""
        grad = f1 * self.grad
        hess = None
        if self.hess is not None:
            hess = f1 * self.hess + f2 * self._outer(self)
        return Jet(f0, grad, hess)

    def reciprocal(self):
        v = self.val
        return self.chain(1.0 / v, -1.0 / v ** 2, 2.0 / v ** 3)

    def __truediv__(self, o):
        return self * o.reciprocal()

    def scale(self, c):
        return Jet(self.val * c, self.grad * c, None if self.hess is None else self.hess * c)


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and hessian of an expression at a point."""

    value: float
    gradient: dict
    hessian: dict


def jet_eval(expr: Expr, env: Mapping[str, object], seeds: Mapping[str, int], n: int, order: int = 2) -> Jet:
    """Propagate jets through ``expr``.

    ``seeds`` maps variable names to seed directions; several names may share
    a direction (useful for coordinate aliases). Unseeded names in ``env`` are
    treated as constants.
    """
    with np.errstate(all="ignore"):
        return _jet(expr, env, seeds, n, order)


def _jet(e, env, seeds, n, order):
    if isinstance(e, Num):
        return Jet.const(e.value, n, order)
    if isinstance(e, Var):
        if e.name not in env:
            raise UnboundVariable(e.name)
        if e.name in seeds:
            return Jet.seed(env[e.name], seeds[e.name], n, order)
        return Jet.const(env[e.name], n, order)
    if isinstance(e, Neg):
        return -_jet(e.operand, env, seeds, n, order)
    if isinstance(e, Func):
        a = _jet(e.arg, env, seeds, n, order)
        return _jet_func(e, a)
    if isinstance(e, Pow) and not (free_vars(e.right) & set(seeds)):
        a = _jet(e.left, env, seeds, n, order)
        p = _eval(e.right, env)
        return _jet_pow_const(e, a, p)
    a = _jet(e.left, env, seeds, n, order)
    b = _jet(e.right, env, seeds, n, order)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if isinstance(e, Div):
        if np.any(np.asarray(b.val) == 0):
            raise DomainError(e, f"division by zero in {e}")
        return a / b
    # variable exponent: a^b = exp(b log a)
    if np.any(np.asarray(a.val) <= 0):
        raise DomainError(e, f"variable power of a nonpositive base in {e}")
    la = a.chain(np.log(a.val), 1.0 / a.val, -1.0 / a.val ** 2)
    prod = b * la
    ex = np.exp(prod.val)
    return prod.chain(ex, ex, ex)


def _jet_pow_const(e, a, p):
    v = a.val
    if np.ndim(p) == 0 and float(p) == int(p):
        k = int(p)
        if k == 0:
            return Jet.const(np.ones_like(v, dtype=float), a.grad.shape[0], a.order)
        if k < 0 and np.any(np.asarray(v) == 0):
            raise DomainError(e, f"zero to a negative power in {e}")
        if k == 1:
            return a
        if k == 2:
            return a.chain(v * v, 2.0 * v, 2.0 + 0.0 * v)
        if k > 2:
            return a.chain(v ** k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))
        return a.chain(1.0 / v ** (-k), k / v ** (1 - k), k * (k - 1) / v ** (2 - k))
    if np.any(np.asarray(v) <= 0):
        raise DomainError(e, f"non-integer power of a nonpositive base in {e}")
    return a.chain(v ** p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))


def _jet_func(e: Func, a: Jet) -> Jet:
    v = a.val
    name = e.name
    if name == "sin":
        s, c = np.sin(v), np.cos(v)
        return a.chain(s, c, -s)
    if name == "cos":
        s, c = np.sin(v), np.cos(v)
        return a.chain(c, -s, -c)
    if name == "tan":
        t = np.tan(v)
        d1 = 1.0 + t * t
        return a.chain(t, d1, 2.0 * t * d1)
    if name == "exp":
        x = np.exp(v)
        return a.chain(x, x, x)
    if name == "log":
        if np.any(np.asarray(v) <= 0):
            raise DomainError(e, f"logarithm of a nonpositive value in {e}")
        return a.chain(np.log(v), 1.0 / v, -1.0 / v ** 2)
    if name == "sqrt":
        if np.any(np.asarray(v) <= 0):
            raise DomainError(e, f"square root not differentiable at nonpositive value in {e}")
        r = np.sqrt(v)
        return a.chain(r, 0.5 / r, -0.25 / (r * v))
    if name in ("abs", "sgn"):
        if np.any(np.asarray(v) == 0):
            raise DomainError(e, f"{name} is not differentiable at 0 in {e}")
        s = np.sign(v)
        zero = 0.0 * v
        return a.chain(np.abs(v) if name == "abs" else s, s if name == "abs" else zero, zero)
    raise ValueError(f"unknown function {name}")


def eval_jet2(expr: Expr, env: Mapping[str, float], vars) -> Jet2:
    """Exact value, gradient and hessian of ``expr`` at ``env`` w.r.t. ``vars``."""
    vars = list(vars)
    seeds = {v: i for i, v in enumerate(vars)}
    j = jet_eval(expr, env, seeds, len(vars), order=2)
    val = float(j.val)
    grad = {v: float(j.grad[i]) for i, v in enumerate(vars)}
    hess = {(v, w): float(j.hess[i, k]) for i, v in enumerate(vars) for k, w in enumerate(vars)}
    return Jet2(val, grad, hess)


def compile_expr(expr, names):
    """Return ``f(*args)`` evaluating ``expr`` with positional bindings for ``names``."""
    expr = as_expr(expr)
    names = tuple(names)

    def f(*args):
        return evaluate(expr, dict(zip(names, args)))

    f.expr = expr
    return f


__all__ = [
    "Expr", "Num", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Func",
    "ExprSyntaxError", "parse", "as_expr", "to_text", "free_vars", "evaluate",
    "diff", "diff_alias", "is_constant", "substitute", "quotient", "Jet", "Jet2", "jet_eval", "eval_jet2", "compile_expr", "FUNCTIONS",
]
