"""Scalar expression language: parsing, printing, evaluation and subgradient hulls.

Expressions are immutable trees.  Evaluation is vectorised: a point may be an
``(n,)`` array or an ``(n, m)`` batch of ``m`` points.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import product

import numpy as np

ACTIVE_TOL = 1e-9
FUNCTIONS = ("sin", "cos", "exp", "abs", "max", "min", "norm2")
CONSTANTS = {"pi": math.pi}


class DSLError(ValueError):
    pass


class ParseError(DSLError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)
        self.offset = offset


class InexactCompositionError(DSLError):
    """Raised when a kink of a nested nonsmooth composition is hit."""


# ---------------------------------------------------------------- nodes

class Expr:
    __slots__ = ("_grads", "__weakref__")
    prec = 100

    def __init__(self):
        self._grads = {}

    def children(self):
        return ()

    def is_smooth(self):
        return all(c.is_smooth() for c in self.children())

    def max_index(self):
        m = -1
        for c in self.children():
            m = max(m, c.max_index())
        return m

    def __str__(self):
        return to_source(self)

    def __repr__(self):
        return f"Expr({to_source(self)!r})"

    def __add__(self, other):
        return Add(self, _wrap(other))

    def __radd__(self, other):
        return Add(_wrap(other), self)

    def __sub__(self, other):
        return Sub(self, _wrap(other))

    def __rsub__(self, other):
        return Sub(_wrap(other), self)

    def __mul__(self, other):
        return Mul(self, _wrap(other))

    def __rmul__(self, other):
        return Mul(_wrap(other), self)

    def __neg__(self):
        return Neg(self)


def _wrap(v):
    return v if isinstance(v, Expr) else Const(float(v))


class Const(Expr):
    __slots__ = ("value", "text")

    def __init__(self, value, text=None):
        super().__init__()
        self.value = float(value)
        self.text = text


class Var(Expr):
    __slots__ = ("index", "name")

    def __init__(self, index, name=None):
        super().__init__()
        self.index = int(index)
        self.name = name

    def max_index(self):
        return self.index


class Binary(Expr):
    __slots__ = ("left", "right")
    symbol = "?"

    def __init__(self, left, right):
        super().__init__()
        self.left = left
        self.right = right

    def children(self):
        return (self.left, self.right)


class Add(Binary):
    __slots__ = ()
    symbol = "+"
    prec = 1


class Sub(Binary):
    __slots__ = ()
    symbol = "-"
    prec = 1


class Mul(Binary):
    __slots__ = ()
    symbol = "*"
    prec = 2


class Neg(Expr):
    __slots__ = ("arg",)
    prec = 4

    def __init__(self, arg):
        super().__init__()
        self.arg = arg

    def children(self):
        return (self.arg,)


class Pow(Expr):
    __slots__ = ("base", "exponent")
    prec = 3

    def __init__(self, base, exponent):
        super().__init__()
        self.base = base
        self.exponent = int(exponent)

    def children(self):
        return (self.base,)


class Call(Expr):
    """sin, cos, exp or abs of a single argument."""
    __slots__ = ("name", "arg")

    def __init__(self, name, arg):
        super().__init__()
        self.name = name
        self.arg = arg

    def children(self):
        return (self.arg,)

    def is_smooth(self):
        return self.name != "abs" and self.arg.is_smooth()


class Extremum(Expr):
    """max or min over a list of arguments."""
    __slots__ = ("name", "args")

    def __init__(self, name, args):
        super().__init__()
        self.name = name
        self.args = tuple(args)

    def children(self):
        return self.args

    def is_smooth(self):
        return len(self.args) == 1 and self.args[0].is_smooth()


class Norm2(Expr):
    __slots__ = ("args",)

    def __init__(self, args):
        super().__init__()
        self.args = tuple(args)

    def children(self):
        return self.args

    def is_smooth(self):
        return False


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?(?:/\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^(),]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    data = source.encode("utf-8")
    text = source
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            off = len(text[:pos].encode("utf-8"))
            while off < len(data) and data[off:off + 1].isspace():
                off += 1
            raise ParseError(f"unexpected character {text[pos:].lstrip()[:1]!r}", off)
        kind = m.lastgroup
        start = len(text[:m.start(kind)].encode("utf-8"))
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(data)))
    return tokens


class _Parser:
    def __init__(self, source, dim, param):
        self.tokens = _tokenize(source)
        self.i = 0
        self.dim = dim
        self.param = param

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] == "*":
            self.take()
            node = Mul(node, self.factor())
        return node

    def factor(self):
        node = self.atom()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.param is not None and self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, text, off = self.take()
            if kind != "num" or not text.isdigit():
                raise ParseError("exponent must be an integer literal", off)
            k = sign * int(text)
            if k == 0:
                raise ParseError("exponent must be nonzero", off)
            node = Pow(node, k)
        return node

    def atom(self):
        kind, text, off = self.peek()
        if kind == "num":
            self.take()
            return Const(_number(text), text)
        if text == "-":
            self.take()
            return Neg(self.atom())
        if text == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if kind == "name":
            self.take()
            return self.name(text, off)
        raise ParseError(f"unexpected {text or 'end of input'!r}", off)

    def name(self, text, off):
        if text in FUNCTIONS:
            self.take("(")
            args = [self.expr()]
            while self.peek()[1] == ",":
                self.take()
                args.append(self.expr())
            self.take(")")
            if text in ("sin", "cos", "exp", "abs"):
                if len(args) != 1:
                    raise ParseError(f"{text} takes one argument", off)
                return Call(text, args[0])
            if text == "norm2":
                return Norm2(args)
            return Extremum(text, args)
        if text in CONSTANTS:
            return Const(CONSTANTS[text], text)
        if self.param is not None:
            if text == self.param:
                return Var(0, text)
            raise ParseError(f"unknown identifier {text!r}", off)
        m = re.fullmatch(r"x(\d+)", text)
        if m is None:
            raise ParseError(f"unknown identifier {text!r}", off)
        k = int(m.group(1))
        if k < 1 or (self.dim is not None and k > self.dim):
            raise ParseError(f"variable index out of range: {text} (dimension {self.dim})", off)
        return Var(k - 1)


def _number(text):
    if "/" in text:
        num, den = text.split("/")
        if float(den) == 0:
            raise ParseError(f"zero denominator in {text!r}")
        return float(num) / float(den)
    return float(text)


def parse(source, dim=None, param=None):
    """Parse ``source`` into an expression tree.

    Variables are ``x1 .. xn`` (checked against ``dim`` when given).  With
    ``param`` set, the single identifier ``param`` is the only variable and
    negative integer exponents are accepted; this dialect describes probe
    paths evaluated at positive parameters.
    """
    p = _Parser(source, dim, param)
    if p.peek()[0] == "end":
        raise ParseError("empty expression", 0)
    node = p.expr()
    kind, text, off = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected {text!r}", off)
    return node


# ---------------------------------------------------------------- printing

def _fmt_number(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(e):
    if isinstance(e, Const):
        if e.text is not None:
            return e.text
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name if e.name is not None else f"x{e.index + 1}"
    if isinstance(e, Binary):
        left = to_source(e.left)
        right = to_source(e.right)
        if e.left.prec < e.prec:
            left = f"({left})"
        if e.right.prec <= e.prec and not _is_atom(e.right):
            right = f"({right})"
        sep = "*" if isinstance(e, Mul) else f" {e.symbol} "
        return f"{left}{sep}{right}"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if not _is_atom(e.arg):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = to_source(e.base)
        if not _is_atom(e.base):
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, (Call, Extremum)):
        args = e.args if isinstance(e, Extremum) else (e.arg,)
        return f"{e.name}({', '.join(to_source(a) for a in args)})"
    if isinstance(e, Norm2):
        return f"norm2({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(type(e))


def _is_atom(e):
    return isinstance(e, (Const, Var, Neg, Call, Extremum, Norm2))


# ---------------------------------------------------------------- evaluation

def evaluate(e, x):
    """Evaluate at a point ``(n,)`` or a batch ``(n, m)``."""
    x = np.asarray(x, dtype=float)
    if e.max_index() >= x.shape[0]:
        raise DSLError(f"expression uses x{e.max_index() + 1} but point has dimension {x.shape[0]}")
    out = _ev(e, x)
    if x.ndim == 2:
        return np.broadcast_to(np.asarray(out, dtype=float), (x.shape[1],)).copy()
    return float(out)


def _ev(e, x):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x[e.index]
    if isinstance(e, Add):
        return _ev(e.left, x) + _ev(e.right, x)
    if isinstance(e, Sub):
        return _ev(e.left, x) - _ev(e.right, x)
    if isinstance(e, Mul):
        return _ev(e.left, x) * _ev(e.right, x)
    if isinstance(e, Neg):
        return -_ev(e.arg, x)
    if isinstance(e, Pow):
        b = _ev(e.base, x)
        if e.exponent < 0:
            return 1.0 / np.power(b, -e.exponent)
        return b ** e.exponent
    if isinstance(e, Call):
        return getattr(np, e.name)(_ev(e.arg, x))
    if isinstance(e, Extremum):
        vals = [_ev(a, x) for a in e.args]
        red = np.maximum if e.name == "max" else np.minimum
        out = vals[0]
        for v in vals[1:]:
            out = red(out, v)
        return out
    if isinstance(e, Norm2):
        return np.sqrt(sum(_ev(a, x) ** 2 for a in e.args))
    raise TypeError(type(e))


# ---------------------------------------------------------------- symbolic derivative

def _is_zero(e):
    return isinstance(e, Const) and e.value == 0.0


def _is_one(e):
    return isinstance(e, Const) and e.value == 1.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Add(a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return Const(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return Mul(a, b)


def derivative(e, i):
    """Partial derivative with respect to variable ``i`` (smooth trees only)."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.index == i else 0.0)
    if isinstance(e, Add):
        return _add(derivative(e.left, i), derivative(e.right, i))
    if isinstance(e, Sub):
        dl, dr = derivative(e.left, i), derivative(e.right, i)
        if _is_zero(dr):
            return dl
        return Sub(dl, dr) if not _is_zero(dl) else Neg(dr)
    if isinstance(e, Mul):
        return _add(_mul(derivative(e.left, i), e.right), _mul(e.left, derivative(e.right, i)))
    if isinstance(e, Neg):
        d = derivative(e.arg, i)
        return d if _is_zero(d) else Neg(d)
    if isinstance(e, Pow):
        d = derivative(e.base, i)
        if _is_zero(d):
            return Const(0.0)
        k = e.exponent
        inner = e.base if k == 2 else Pow(e.base, k - 1)
        if k == 1:
            return d
        return _mul(_mul(Const(float(k)), inner), d)
    if isinstance(e, Call):
        d = derivative(e.arg, i)
        if _is_zero(d):
            return Const(0.0)
        if e.name == "sin":
            outer = Call("cos", e.arg)
        elif e.name == "cos":
            outer = Neg(Call("sin", e.arg))
        elif e.name == "exp":
            outer = e
        else:
            raise DSLError("abs is not differentiable symbolically")
        return _mul(outer, d)
    if isinstance(e, Extremum) and len(e.args) == 1:
        return derivative(e.args[0], i)
    raise DSLError(f"cannot differentiate nonsmooth node {to_source(e)}")


def gradient_exprs(e, n):
    g = e._grads.get(n)
    if g is None:
        g = tuple(derivative(e, i) for i in range(n))
        e._grads[n] = g
    return g


def gradient(e, x):
    """Gradient of a smooth expression at a point or a batch of points."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    parts = [_ev(d, x) for d in gradient_exprs(e, n)]
    if x.ndim == 2:
        return np.stack([np.broadcast_to(np.asarray(p, dtype=float), (x.shape[1],)) for p in parts])
    return np.array([float(p) for p in parts])


# ---------------------------------------------------------------- subdifferential

@dataclass(frozen=True)
class HullRep:
    """Convex hull of ``generators`` (rows); ``exact`` when it equals the subdifferential."""
    generators: np.ndarray
    exact: bool

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if g.shape[0] == 0 or not np.all(np.isfinite(g)):
            raise DSLError("hull needs finite, nonempty generators")
        object.__setattr__(self, "generators", g)


def ball_generators(m):
    """Generators used for the unit ball of R^m and whether their hull is the ball."""
    eye = np.eye(m)
    gens = [eye, -eye]
    if 2 <= m <= 4:
        signs = np.array(list(product((1.0, -1.0), repeat=m))) / math.sqrt(m)
        gens.append(signs)
    return np.vstack(gens), m == 1


def _unique_rows(g):
    return np.unique(g, axis=0) if len(g) > 1 else g


def _minkowski(a, b):
    out = (a[:, None, :] + b[None, :, :]).reshape(-1, a.shape[1])
    return _unique_rows(out)


def _scaled(h, c):
    """Hull of c*h for a scalar c (h is a (gens, exact, smooth) triple)."""
    gens, exact, smooth = h
    if c == 0.0:
        return np.zeros((1, gens.shape[1])), True, True
    return c * gens, exact and (smooth or c > 0), smooth


def subdiff(e, x, allow_inexact=False):
    """Hull of generators containing the subdifferential of ``e`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DSLError("subdiff expects a single point")
    if e.max_index() >= x.shape[0]:
        raise DSLError(f"expression uses x{e.max_index() + 1} but point has dimension {x.shape[0]}")
    gens, exact, _ = _sd(e, x, allow_inexact)
    return HullRep(_unique_rows(gens), bool(exact))


def _sd(e, x, loose):
    n = x.shape[0]
    if e.is_smooth():
        return gradient(e, x)[None, :], True, True
    if isinstance(e, (Add, Sub)):
        a = _sd(e.left, x, loose)
        b = _sd(e.right, x, loose)
        if isinstance(e, Sub):
            b = _scaled(b, -1.0)
        exact = a[1] and b[1] and (a[2] or b[2])
        return _minkowski(a[0], b[0]), exact, a[2] and b[2]
    if isinstance(e, Neg):
        return _scaled(_sd(e.arg, x, loose), -1.0)
    if isinstance(e, Mul):
        lv, rv = float(_ev(e.left, x)), float(_ev(e.right, x))
        a = _sd(e.left, x, loose)
        b = _sd(e.right, x, loose)
        if a[2] and b[2]:
            return rv * a[0] + lv * b[0], True, True
        if e.left.max_index() < 0:
            return _scaled(b, lv)
        if e.right.max_index() < 0:
            return _scaled(a, rv)
        sa = _scaled(a, rv)
        sb = _scaled(b, lv)
        return _minkowski(sa[0], sb[0]), False, sa[2] and sb[2]
    if isinstance(e, Pow):
        b = float(_ev(e.base, x))
        k = e.exponent
        return _scaled(_sd(e.base, x, loose), k * b ** (k - 1))
    if isinstance(e, Call):
        u = float(_ev(e.arg, x))
        inner = _sd(e.arg, x, loose)
        if e.name == "sin":
            return _scaled(inner, math.cos(u))
        if e.name == "cos":
            return _scaled(inner, -math.sin(u))
        if e.name == "exp":
            return _scaled(inner, math.exp(u))
        if abs(u) > ACTIVE_TOL:
            return _scaled(inner, math.copysign(1.0, u))
        if not inner[2]:
            if not loose:
                raise InexactCompositionError(f"kink of abs over a nonsmooth argument in {to_source(e)}")
            return _unique_rows(np.vstack([inner[0], -inner[0]])), False, False
        return np.vstack([inner[0], -inner[0]]), inner[1], False
    if isinstance(e, Extremum):
        vals = np.array([float(_ev(a, x)) for a in e.args])
        if e.name == "max":
            active = np.flatnonzero(vals >= vals.max() - ACTIVE_TOL)
        else:
            active = np.flatnonzero(vals <= vals.min() + ACTIVE_TOL)
        parts = [_sd(e.args[j], x, loose) for j in active]
        if len(parts) == 1:
            return parts[0]
        if not all(p[2] for p in parts):
            if not loose:
                raise InexactCompositionError(f"kink of {e.name} over nonsmooth arguments in {to_source(e)}")
            return _unique_rows(np.vstack([p[0] for p in parts])), False, False
        return _unique_rows(np.vstack([p[0] for p in parts])), e.name == "max", False
    if isinstance(e, Norm2):
        vals = np.array([float(_ev(a, x)) for a in e.args])
        parts = [_sd(a, x, loose) for a in e.args]
        r = float(np.sqrt(np.sum(vals ** 2)))
        if r > ACTIVE_TOL:
            acc = np.zeros((1, n))
            exact, smooth = True, True
            for v, p in zip(vals, parts):
                s = _scaled(p, v / r)
                acc = _minkowski(acc, s[0])
                exact = exact and s[1] and (s[2] or smooth)
                smooth = smooth and s[2]
            return acc, exact, smooth
        if not all(p[2] for p in parts):
            if not loose:
                raise InexactCompositionError(f"center of norm2 over nonsmooth arguments in {to_source(e)}")
            ball, _ = ball_generators(len(parts))
            rows = []
            for coeffs in ball:
                acc = np.zeros((1, n))
                for c, p in zip(coeffs, parts):
                    acc = _minkowski(acc, c * p[0])
                rows.append(acc)
            return _unique_rows(np.vstack(rows)), False, False
        jac = np.vstack([p[0] for p in parts])
        ball, ball_exact = ball_generators(len(parts))
        return _unique_rows(ball @ jac), ball_exact, False
    raise TypeError(type(e))


def substitute(e, mapping):
    """Replace variables by expressions: ``mapping[index] -> Expr``."""
    if isinstance(e, Var):
        return mapping.get(e.index, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Binary):
        return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Call):
        return Call(e.name, substitute(e.arg, mapping))
    if isinstance(e, Extremum):
        return Extremum(e.name, [substitute(a, mapping) for a in e.args])
    if isinstance(e, Norm2):
        return Norm2([substitute(a, mapping) for a in e.args])
    raise TypeError(type(e))


class VectorObjective:
    """Ordered list of component expressions over a common dimension."""

    def __init__(self, exprs, dim):
        self.exprs = list(exprs)
        self.dim = int(dim)
        if not self.exprs:
            raise DSLError("objective needs at least one component")
        for e in self.exprs:
            if e.max_index() >= self.dim:
                raise DSLError(f"component {e} uses x{e.max_index() + 1} beyond dimension {self.dim}")

    @classmethod
    def parse(cls, sources, dim):
        return cls([parse(s, dim) for s in sources], dim)

    def __len__(self):
        return len(self.exprs)

    def __getitem__(self, i):
        return self.exprs[i]

    def __iter__(self):
        return iter(self.exprs)

    def values(self, x):
        """Component values: shape (s,) for a point, (s, m) for a batch."""
        return np.array([evaluate(e, x) for e in self.exprs])

    def subset(self, indices):
        return VectorObjective([self.exprs[i] for i in indices], self.dim)
