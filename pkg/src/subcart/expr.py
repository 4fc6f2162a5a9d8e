"""Symbolic scalar expressions over ambient coordinates.

Expressions are immutable trees built from constants, coordinate variables,
sums, products, quotients, integer powers, a fixed set of smooth unary
functions, and a smooth one-sided cutoff family used to build bump functions
with exact zeros.  Differentiation is exact and closed over the node set.
Evaluation is deterministic: identical trees evaluated at identical points
give bit-identical floats, and points outside a function's domain raise
``DomainError`` instead of producing NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence


class ExprError(ValueError):
    """Base class for expression failures."""


class ParseError(ExprError):
    """Raised when expression text does not match the grammar."""


class DomainError(ExprError):
    """Raised when evaluation hits a point outside a node's domain."""


_UNARY_NAMES = ("sin", "cos", "exp", "log", "sqrt", "tanh")


class Expr:
    """Immutable expression node. Subclasses define structure via ``key()``."""

    __slots__ = ("_hash", "_grads", "_compiled")

    def key(self) -> tuple:
        raise NotImplementedError

    def __hash__(self) -> int:
        h = getattr(self, "_hash", None)
        if h is None:
            h = hash(self.key())
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        return self.key() == other.key()

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0.0

    @property
    def is_one(self) -> bool:
        return isinstance(self, Const) and self.value == 1.0

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, k: int):
        return pow_int(self, k)

    def __neg__(self):
        return neg(self)

    def __str__(self) -> str:
        return to_text(self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({to_text(self)!r})"

    def eval(self, point: Sequence[float]) -> float:
        return _eval(self, point)

    def diff(self, var: int) -> "Expr":
        return diff(self, var)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def key(self):
        return ("const", self.value)


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 0:
            raise ExprError(f"variable index must be nonnegative, got {index}")
        object.__setattr__(self, "index", int(index))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def key(self):
        return ("var", self.index)


class _Binary(Expr):
    __slots__ = ("left", "right")
    _tag = ""

    def __init__(self, left: Expr, right: Expr):
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def key(self):
        return (self._tag, self.left.key(), self.right.key())


class Add(_Binary):
    __slots__ = ()
    _tag = "+"


class Mul(_Binary):
    __slots__ = ()
    _tag = "*"


class Div(_Binary):
    __slots__ = ()
    _tag = "/"


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: int):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", int(exponent))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def key(self):
        return ("^", self.base.key(), self.exponent)


class Neg(Expr):
    __slots__ = ("operand",)

    def __init__(self, operand: Expr):
        object.__setattr__(self, "operand", operand)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def key(self):
        return ("neg", self.operand.key())


class Fn(Expr):
    """Unary smooth function application: sin, cos, exp, log, sqrt, tanh."""

    __slots__ = ("name", "operand")

    def __init__(self, name: str, operand: Expr):
        if name not in _UNARY_NAMES:
            raise ExprError(f"unknown function {name!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "operand", operand)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def key(self):
        return (self.name, self.operand.key())


class Cut(Expr):
    """Smooth one-sided cutoff: exp(-1/t)/t^k for t > 0, exactly 0 for t <= 0.

    Every member of the family is C-infinity on the whole line, which is what
    lets bump-built fields vanish identically outside a ball while staying
    smooth.  The exponent shift k keeps the family closed under
    differentiation.
    """

    __slots__ = ("shift", "operand")

    def __init__(self, shift: int, operand: Expr):
        if shift < 0:
            raise ExprError(f"cutoff shift must be nonnegative, got {shift}")
        object.__setattr__(self, "shift", int(shift))
        object.__setattr__(self, "operand", operand)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def key(self):
        return ("cutexp", self.shift, self.operand.key())


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(obj) -> Expr:
    if isinstance(obj, Expr):
        return obj
    if isinstance(obj, (int, float)):
        return Const(float(obj))
    raise ExprError(f"cannot convert {obj!r} to an expression")


# Smart constructors fold constants and absorb exact zeros and ones.  Nothing
# deeper: no reassociation, no cancellation, so trees stay predictable.

def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a.is_zero or b.is_zero:
        return ZERO
    if a.is_one:
        return b
    if b.is_one:
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 0.0:
            raise DomainError("division by constant zero")
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if a.is_zero:
        return ZERO
    return Div(a, b)


def pow_int(base: Expr, k: int) -> Expr:
    k = int(k)
    if k < 0:
        raise ExprError("negative exponents are not in the grammar; use a quotient")
    if k == 0:
        return ONE
    if k == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value**k)
    return Pow(base, k)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def fn(name: str, operand: Expr) -> Expr:
    return Fn(name, operand)


def cut(shift: int, operand: Expr) -> Expr:
    return Cut(shift, operand)


# Evaluation -----------------------------------------------------------------

def _cut_value(shift: int, t: float) -> float:
    if t <= 0.0:
        return 0.0
    if shift == 0:
        return math.exp(-1.0 / t)
    return math.exp(-1.0 / t - shift * math.log(t))


def _eval(e: Expr, x: Sequence[float]) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        if e.index >= len(x):
            raise DomainError(f"point has {len(x)} coordinates, expression uses x{e.index + 1}")
        return float(x[e.index])
    if isinstance(e, Add):
        return _eval(e.left, x) + _eval(e.right, x)
    if isinstance(e, Mul):
        return _eval(e.left, x) * _eval(e.right, x)
    if isinstance(e, Div):
        den = _eval(e.right, x)
        if den == 0.0:
            raise DomainError("quotient denominator is zero")
        return _eval(e.left, x) / den
    if isinstance(e, Pow):
        return _eval(e.base, x) ** e.exponent
    if isinstance(e, Neg):
        return -_eval(e.operand, x)
    if isinstance(e, Fn):
        v = _eval(e.operand, x)
        if e.name == "sin":
            return math.sin(v)
        if e.name == "cos":
            return math.cos(v)
        if e.name == "exp":
            return math.exp(v)
        if e.name == "tanh":
            return math.tanh(v)
        if e.name == "log":
            if v <= 0.0:
                raise DomainError(f"log argument must be positive, got {v!r}")
            return math.log(v)
        if v < 0.0:
            raise DomainError(f"sqrt argument must be nonnegative, got {v!r}")
        return math.sqrt(v)
    if isinstance(e, Cut):
        return _cut_value(e.shift, _eval(e.operand, x))
    raise ExprError(f"unknown node {e!r}")


# Differentiation ------------------------------------------------------------

def diff(e: Expr, var: int) -> Expr:
    """Exact partial derivative with respect to coordinate ``var`` (0-based)."""
    if isinstance(e, (Const,)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == var else ZERO
    if isinstance(e, Add):
        return add(diff(e.left, var), diff(e.right, var))
    if isinstance(e, Mul):
        return add(mul(diff(e.left, var), e.right), mul(e.left, diff(e.right, var)))
    if isinstance(e, Div):
        num = sub(mul(diff(e.left, var), e.right), mul(e.left, diff(e.right, var)))
        return div(num, pow_int(e.right, 2))
    if isinstance(e, Pow):
        inner = diff(e.base, var)
        return mul(mul(Const(e.exponent), pow_int(e.base, e.exponent - 1)), inner)
    if isinstance(e, Neg):
        return neg(diff(e.operand, var))
    if isinstance(e, Fn):
        u = e.operand
        du = diff(u, var)
        if e.name == "sin":
            outer: Expr = fn("cos", u)
        elif e.name == "cos":
            outer = neg(fn("sin", u))
        elif e.name == "exp":
            outer = fn("exp", u)
        elif e.name == "log":
            outer = div(ONE, u)
        elif e.name == "sqrt":
            outer = div(ONE, mul(Const(2.0), fn("sqrt", u)))
        else:  # tanh
            outer = sub(ONE, pow_int(fn("tanh", u), 2))
        return mul(outer, du)
    if isinstance(e, Cut):
        u = e.operand
        du = diff(u, var)
        outer = sub(cut(e.shift + 2, u), mul(Const(e.shift), cut(e.shift + 1, u)))
        return mul(outer, du)
    raise ExprError(f"unknown node {e!r}")


def gradient_exprs(e: Expr, n_vars: int) -> tuple[Expr, ...]:
    """Partial derivatives of ``e`` with respect to x1..xn, cached on the node."""
    cache = getattr(e, "_grads", None)
    if cache is None:
        cache = {}
        object.__setattr__(e, "_grads", cache)
    got = cache.get(n_vars)
    if got is None:
        got = tuple(diff(e, i) for i in range(n_vars))
        cache[n_vars] = got
    return got


def max_var_index(e: Expr) -> int:
    """Largest variable index appearing in ``e``, or -1 for constants."""
    if isinstance(e, Const):
        return -1
    if isinstance(e, Var):
        return e.index
    if isinstance(e, _Binary):
        return max(max_var_index(e.left), max_var_index(e.right))
    if isinstance(e, Pow):
        return max_var_index(e.base)
    if isinstance(e, (Neg, Fn, Cut)):
        return max_var_index(e.operand)
    raise ExprError(f"unknown node {e!r}")


# Jets ------------------------------------------------------------------------

@dataclass(frozen=True)
class Jet:
    """Value with optional first and second derivatives at a point."""

    value: float
    gradient: Optional[tuple[float, ...]] = None
    hessian: Optional[tuple[tuple[float, ...], ...]] = None


def eval_jet(e: Expr, point: Sequence[float], order: int = 1) -> Jet:
    """Evaluate ``e`` and its derivatives up to ``order`` (0, 1 or 2).

    Derivatives are computed by evaluating exact symbolic derivatives, so the
    Hessian is symmetric by construction: entry (i, j) with i <= j is computed
    once and mirrored.
    """
    if order not in (0, 1, 2):
        raise ExprError(f"jet order must be 0, 1 or 2, got {order}")
    n = len(point)
    value = _eval(e, point)
    if order == 0:
        return Jet(value)
    grads = gradient_exprs(e, n)
    gvals = tuple(_eval(g, point) for g in grads)
    if order == 1:
        return Jet(value, gvals)
    hess = [[0.0] * n for _ in range(n)]
    for i in range(n):
        row = gradient_exprs(grads[i], n)
        for j in range(i, n):
            hij = _eval(row[j], point)
            hess[i][j] = hij
            hess[j][i] = hij
    return Jet(value, gvals, tuple(tuple(r) for r in hess))


# Parsing ---------------------------------------------------------------------

class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.items: list[tuple[str, str, int]] = []
        self._scan()
        self.cursor = 0

    def _scan(self) -> None:
        s, i, n = self.text, 0, len(self.text)
        while i < n:
            c = s[i]
            if c.isspace():
                i += 1
                continue
            if c in "+-*/^()":
                self.items.append((c, c, i))
                i += 1
                continue
            if c.isdigit() or (c == "." and i + 1 < n and s[i + 1].isdigit()):
                j = i
                while j < n and (s[j].isdigit() or s[j] == "."):
                    j += 1
                if j < n and s[j] in "eE":
                    k = j + 1
                    if k < n and s[k] in "+-":
                        k += 1
                    if k < n and s[k].isdigit():
                        j = k
                        while j < n and s[j].isdigit():
                            j += 1
                self.items.append(("num", s[i:j], i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (s[j].isalnum() or s[j] == "_"):
                    j += 1
                self.items.append(("ident", s[i:j], i))
                i = j
                continue
            raise ParseError(f"unexpected character {c!r} at position {i}")
        self.items.append(("end", "", n))

    def peek(self) -> tuple[str, str, int]:
        return self.items[self.cursor]

    def take(self, kind: str | None = None) -> tuple[str, str, int]:
        tok = self.items[self.cursor]
        if kind is not None and tok[0] != kind:
            raise ParseError(f"expected {kind} at position {tok[2]}, got {tok[1]!r}")
        self.cursor += 1
        return tok


def parse(text: str, n_vars: int, aliases: Optional[Sequence[str]] = None) -> Expr:
    """Parse expression text over coordinates x1..x{n_vars}.

    Grammar: sums of terms, terms are products or quotients of factors, a
    factor is a base with an optional integer power, and a base is a number,
    a coordinate name, a function call, a parenthesized expression, or a
    negated base.  ``aliases`` optionally names the coordinates positionally,
    e.g. ("x", "y") makes "x" mean x1.  Cutoff nodes print as ``cutexp(u)``
    and ``cutexp2(u)`` (shift suffix on the name) and parse back the same way.
    """
    alias_map = {}
    if aliases is not None:
        if len(aliases) > n_vars:
            raise ParseError(f"{len(aliases)} aliases for {n_vars} coordinates")
        for i, name in enumerate(aliases):
            alias_map[name] = i
    toks = _Tokens(text)

    def parse_expr() -> Expr:
        node = parse_term()
        while toks.peek()[0] in ("+", "-"):
            op = toks.take()[0]
            rhs = parse_term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def parse_term() -> Expr:
        node = parse_factor()
        while toks.peek()[0] in ("*", "/"):
            op = toks.take()[0]
            rhs = parse_factor()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def parse_factor() -> Expr:
        base = parse_base()
        if toks.peek()[0] == "^":
            toks.take()
            tok = toks.take("num")
            if not tok[1].isdigit():
                raise ParseError(f"exponent must be a plain integer, got {tok[1]!r}")
            return pow_int(base, int(tok[1]))
        return base

    def parse_base() -> Expr:
        kind, text_, pos = toks.peek()
        if kind == "-":
            toks.take()
            return neg(parse_base())
        if kind == "num":
            toks.take()
            try:
                return Const(float(text_))
            except ValueError:
                raise ParseError(f"bad number literal {text_!r} at position {pos}") from None
        if kind == "(":
            toks.take()
            node = parse_expr()
            toks.take(")")
            return node
        if kind == "ident":
            toks.take()
            if toks.peek()[0] == "(":
                toks.take()
                arg = parse_expr()
                toks.take(")")
                if text_ in _UNARY_NAMES:
                    return fn(text_, arg)
                if text_ == "cutexp":
                    return cut(0, arg)
                if text_.startswith("cutexp") and text_[6:].isdigit():
                    return cut(int(text_[6:]), arg)
                raise ParseError(f"unknown function {text_!r} at position {pos}")
            if text_ in alias_map:
                return Var(alias_map[text_])
            if text_[0] == "x" and text_[1:].isdigit():
                idx = int(text_[1:])
                if not 1 <= idx <= n_vars:
                    raise ParseError(f"coordinate {text_} out of range for {n_vars} variables")
                return Var(idx - 1)
            raise ParseError(f"unknown identifier {text_!r} at position {pos}")
        raise ParseError(f"unexpected token {text_!r} at position {pos}")

    node = parse_expr()
    toks.take("end")
    return node


# Printing --------------------------------------------------------------------

def _const_text(v: float) -> str:
    out = repr(v)
    return out


def _print(e: Expr) -> tuple[str, int]:
    """Return (text, level) with level 0 atom, 1 power, 2 product, 3 sum, 4 negation."""
    if isinstance(e, Const):
        if e.value < 0.0:
            return "-" + _const_text(-e.value), 4
        return _const_text(e.value), 0
    if isinstance(e, Var):
        return f"x{e.index + 1}", 0
    if isinstance(e, Fn):
        return f"{e.name}({_print(e.operand)[0]})", 0
    if isinstance(e, Cut):
        name = "cutexp" if e.shift == 0 else f"cutexp{e.shift}"
        return f"{name}({_print(e.operand)[0]})", 0
    if isinstance(e, Neg):
        txt, lvl = _print(e.operand)
        if lvl >= 1:
            txt = f"({txt})"
        return "-" + txt, 4
    if isinstance(e, Pow):
        txt, lvl = _print(e.base)
        if lvl > 0:
            txt = f"({txt})"
        return f"{txt}^{e.exponent}", 1
    if isinstance(e, (Mul, Div)):
        lt, ll = _print(e.left)
        if ll > 2:
            lt = f"({lt})"
        # A product or quotient on the right must keep its own parentheses,
        # otherwise reparsing reassociates to the left.
        rt, rl = _print(e.right)
        if rl >= 2:
            rt = f"({rt})"
        op = "*" if isinstance(e, Mul) else "/"
        return f"{lt}{op}{rt}", 2
    if isinstance(e, Add):
        lt, ll = _print(e.left)
        if ll > 3:
            lt = f"({lt})"
        if isinstance(e.right, Neg):
            rt, rl = _print(e.right.operand)
            if rl > 2:
                rt = f"({rt})"
            return f"{lt} - {rt}", 3
        if isinstance(e.right, Const) and e.right.value < 0.0:
            return f"{lt} - {_const_text(-e.right.value)}", 3
        rt, rl = _print(e.right)
        if rl >= 3:
            rt = f"({rt})"
        return f"{lt} + {rt}", 3
    raise ExprError(f"unknown node {e!r}")


def to_text(e: Expr) -> str:
    """Render to text that parses back to a structurally equal tree."""
    return _print(e)[0]


# Compilation -----------------------------------------------------------------

def _guard_div(a: float, b: float) -> float:
    if b == 0.0:
        raise DomainError("quotient denominator is zero")
    return a / b


def _guard_log(v: float) -> float:
    if v <= 0.0:
        raise DomainError(f"log argument must be positive, got {v!r}")
    return math.log(v)


def _guard_sqrt(v: float) -> float:
    if v < 0.0:
        raise DomainError(f"sqrt argument must be nonnegative, got {v!r}")
    return math.sqrt(v)


_COMPILE_ENV = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_tanh": math.tanh,
    "_div": _guard_div,
    "_log": _guard_log,
    "_sqrt": _guard_sqrt,
    "_cut": _cut_value,
}


def _emit(e: Expr, memo: dict[int, str], lines: list[str]) -> str:
    name = memo.get(id(e))
    if name is not None:
        return name
    if isinstance(e, Const):
        name = repr(e.value)
    elif isinstance(e, Var):
        name = f"_x[{e.index}]"
    else:
        if isinstance(e, Add):
            rhs = f"{_emit(e.left, memo, lines)} + {_emit(e.right, memo, lines)}"
        elif isinstance(e, Mul):
            rhs = f"{_emit(e.left, memo, lines)} * {_emit(e.right, memo, lines)}"
        elif isinstance(e, Div):
            rhs = f"_div({_emit(e.left, memo, lines)}, {_emit(e.right, memo, lines)})"
        elif isinstance(e, Pow):
            rhs = f"{_emit(e.base, memo, lines)} ** {e.exponent}"
        elif isinstance(e, Neg):
            rhs = f"-{_emit(e.operand, memo, lines)}"
        elif isinstance(e, Fn):
            rhs = f"_{e.name}({_emit(e.operand, memo, lines)})"
        elif isinstance(e, Cut):
            rhs = f"_cut({e.shift}, {_emit(e.operand, memo, lines)})"
        else:
            raise ExprError(f"unknown node {e!r}")
        name = f"_t{len(lines)}"
        lines.append(f"    {name} = {rhs}")
    memo[id(e)] = name
    return name


def compile_scalar(e: Expr) -> Callable[[Sequence[float]], float]:
    """Compile to a fast callable. Same arithmetic order as ``eval``."""
    cached = getattr(e, "_compiled", None)
    if cached is not None:
        return cached
    memo: dict[int, str] = {}
    lines: list[str] = []
    result = _emit(e, memo, lines)
    src = "def _f(_x):\n" + "\n".join(lines) + f"\n    return {result}\n"
    scope = dict(_COMPILE_ENV)
    exec(compile(src, "<expr>", "exec"), scope)
    f = scope["_f"]
    object.__setattr__(e, "_compiled", f)
    return f


def compile_vector(exprs: Sequence[Expr]) -> Callable[[Sequence[float]], list[float]]:
    """Compile several expressions into one callable returning a list."""
    memo: dict[int, str] = {}
    lines: list[str] = []
    names = [_emit(e, memo, lines) for e in exprs]
    src = "def _f(_x):\n" + "\n".join(lines) + "\n    return [" + ", ".join(names) + "]\n"
    scope = dict(_COMPILE_ENV)
    exec(compile(src, "<exprvec>", "exec"), scope)
    return scope["_f"]
