"""Expression parsing and truncated bivariate Taylor-jet arithmetic.

Two things live here because everything else consumes them together:

* a recursive-descent parser for scalar expressions in up to two variables
  (grammar: ``^`` right-associative, then unary minus, then ``* /``, then
  ``+ -``; functions sin cos tan exp ln sqrt atan; constants pi, e), and

* the ``Jet`` class: a truncated Taylor expansion sum c_ij x^i y^j with
  i+j <= order at a base point, with ring arithmetic, elementary-function
  composition via univariate series recurrences, partial derivatives, and
  2D map inversion (used to build Monge charts).

Degree 4 is what the geometry needs (parabolic classification reads 4th-order
surface jets); degree 5 is supported so authored quintic terms survive a chart
change.  All values are immutable in practice: operations return new objects.

An expression is a nested tuple:

    ("num", float) | ("const", "pi"|"e") | ("var", name)
    | ("neg", a) | ("add", a, b) | ("sub", a, b)
    | ("mul", a, b) | ("div", a, b) | ("pow", a, b)
    | ("call", fname, a)
"""

import math

from .errors import (DivisionByZeroConstantTerm, DomainError, ExprSyntaxError,
                     UnknownIdentifier)

MAX_ORDER = 5

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "atan")
CONSTANTS = {"pi": math.pi, "e": math.e}

# Monomial bookkeeping: graded order (0,0),(1,0),(0,1),(2,0),(1,1),(0,2),...
MONOMIALS = []
for _deg in range(MAX_ORDER + 1):
    for _j in range(_deg + 1):
        MONOMIALS.append((_deg - _j, _j))
MONO_INDEX = {m: k for k, m in enumerate(MONOMIALS)}
NTERMS = [(d + 1) * (d + 2) // 2 for d in range(MAX_ORDER + 1)]

# Per-order multiplication tables: list of (k_result, k_a, k_b).
_MUL_TABLES = []
for _o in range(MAX_ORDER + 1):
    _tab = []
    _n = NTERMS[_o]
    for _ka in range(_n):
        ia, ja = MONOMIALS[_ka]
        for _kb in range(_n):
            ib, jb = MONOMIALS[_kb]
            if ia + ib + ja + jb <= _o:
                _tab.append((MONO_INDEX[(ia + ib, ja + jb)], _ka, _kb))
    _MUL_TABLES.append(tuple(_tab))


def _build_mul(order):
    """Code-generate an unrolled truncated product for one order (the jet
    multiply dominates tracing cost; a flat function beats the table loop)."""
    n = NTERMS[order]
    groups = {}
    for kr, ka, kb in _MUL_TABLES[order]:
        groups.setdefault(kr, []).append((ka, kb))
    names_a = ", ".join(f"a{k}" for k in range(n))
    names_b = ", ".join(f"b{k}" for k in range(n))
    body = [f"def _mul(a, b):",
            f"    ({names_a},) = a",
            f"    ({names_b},) = b"]
    out = []
    for kr in range(n):
        expr = " + ".join(f"a{ka}*b{kb}" for ka, kb in groups[kr])
        out.append(expr)
    body.append("    return [" + ", ".join(out) + "]")
    ns = {}
    exec("\n".join(body), ns)
    return ns["_mul"]


_MUL_FUNCS = [_build_mul(_o) for _o in range(MAX_ORDER + 1)]


class Jet:
    """Truncated Taylor expansion of a scalar function at a 2D base point.

    ``c[k]`` is the coefficient of x^i y^j with (i, j) = MONOMIALS[k], where
    (x, y) are offsets from ``base``.  ``order`` is the trusted truncation
    degree; binary operations return min(order) and derivatives lose one.
    """

    __slots__ = ("order", "base", "c")

    def __init__(self, order, base, c):
        self.order = order
        self.base = base
        self.c = c

    # -- constructors ----------------------------------------------------

    @staticmethod
    def const(value, order, base=(0.0, 0.0)):
        c = [0.0] * NTERMS[order]
        c[0] = float(value)
        return Jet(order, base, c)

    @staticmethod
    def variable(index, order, base=(0.0, 0.0)):
        """The coordinate function x (index 0) or y (index 1) about base."""
        c = [0.0] * NTERMS[order]
        c[0] = float(base[index])
        if order >= 1:
            c[1 + index] = 1.0
        return Jet(order, base, c)

    # -- accessors ---------------------------------------------------------

    @property
    def value(self):
        return self.c[0]

    def coeff(self, i, j):
        return self.c[MONO_INDEX[(i, j)]]

    def deriv(self, i, j):
        """Partial derivative d^(i+j) f / dx^i dy^j at the base point."""
        return self.coeff(i, j) * math.factorial(i) * math.factorial(j)

    @property
    def dx(self):
        return self.c[1]

    @property
    def dy(self):
        return self.c[2]

    def gradient(self):
        return (self.c[1], self.c[2])

    # -- ring arithmetic -----------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.const(other, self.order, self.base)

    def __add__(self, other):
        o = self._coerce(other)
        n = min(self.order, o.order)
        m = NTERMS[n]
        a, b = self.c, o.c
        return Jet(n, self.base, [a[k] + b[k] for k in range(m)])

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        n = min(self.order, o.order)
        m = NTERMS[n]
        a, b = self.c, o.c
        return Jet(n, self.base, [a[k] - b[k] for k in range(m)])

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __neg__(self):
        return Jet(self.order, self.base, [-x for x in self.c])

    def __mul__(self, other):
        if not isinstance(other, Jet):
            f = float(other)
            return Jet(self.order, self.base, [x * f for x in self.c])
        n = self.order
        if n == other.order:
            return Jet(n, self.base, _MUL_FUNCS[n](self.c, other.c))
        if n > other.order:
            n = other.order
            return Jet(n, self.base, _MUL_FUNCS[n](self.c[:NTERMS[n]], other.c))
        return Jet(n, self.base, _MUL_FUNCS[n](self.c, other.c[:NTERMS[n]]))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / float(other))
        q = self * other.reciprocal()
        q.c[0] = self.c[0] / other.c[0]  # keep the constant term exact
        return q

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def reciprocal(self):
        c0 = self.c[0]
        if abs(c0) < 1e-300:
            raise DivisionByZeroConstantTerm("reciprocal of jet with zero constant term")
        n = self.order
        series = [(-1.0) ** k / c0 ** (k + 1) for k in range(n + 1)]
        return self.compose_series(series)

    # -- composition with univariate series ------------------------------------

    def compose_series(self, series):
        """Evaluate sum series[n] * (self - const)^n, truncated.

        ``series[n]`` must be f^(n)(c0)/n! for the function being applied.
        """
        n = self.order
        u = Jet(n, self.base, list(self.c))
        u.c[0] = 0.0
        out = Jet.const(series[0], n, self.base)
        power = None
        for k in range(1, n + 1):
            power = u if power is None else power * u
            if series[k] != 0.0:
                out = out + power * series[k]
        return out

    def sqrt(self):
        c0 = self.c[0]
        if c0 <= 0.0:
            raise DomainError("sqrt", c0)
        s = math.sqrt(c0)
        # d^n/dx^n sqrt / n! at c0: s * C(1/2, n) / c0^n
        series = [s]
        binom = 1.0
        for k in range(1, self.order + 1):
            binom *= (0.5 - (k - 1)) / k
            series.append(s * binom / c0 ** k)
        return self.compose_series(series)

    def exp(self):
        e0 = math.exp(self.c[0])
        series = [e0]
        for k in range(1, self.order + 1):
            series.append(series[-1] / k)
        return self.compose_series(series)

    def ln(self):
        c0 = self.c[0]
        if c0 <= 0.0:
            raise DomainError("ln", c0)
        series = [math.log(c0)]
        for k in range(1, self.order + 1):
            series.append((-1.0) ** (k + 1) / (k * c0 ** k))
        return self.compose_series(series)

    def sin(self):
        c0 = self.c[0]
        s, c = math.sin(c0), math.cos(c0)
        cycle = [s, c, -s, -c]
        series = [cycle[k % 4] / math.factorial(k) for k in range(self.order + 1)]
        return self.compose_series(series)

    def cos(self):
        c0 = self.c[0]
        s, c = math.sin(c0), math.cos(c0)
        cycle = [c, -s, -c, s]
        series = [cycle[k % 4] / math.factorial(k) for k in range(self.order + 1)]
        return self.compose_series(series)

    def tan(self):
        return self.sin() / self.cos()

    def atan(self):
        x = self.c[0]
        w = 1.0 + x * x
        # successive derivatives of atan; enough terms for order 5
        ds = [math.atan(x),
              1.0 / w,
              -2.0 * x / w ** 2,
              (6.0 * x * x - 2.0) / w ** 3,
              (24.0 * x - 24.0 * x ** 3) / w ** 4,
              (24.0 * (5.0 * x ** 4 - 10.0 * x * x + 1.0)) / w ** 5]
        series = [ds[k] / math.factorial(k) for k in range(self.order + 1)]
        return self.compose_series(series)

    def powi(self, n):
        """Exact integer power by binary exponentiation."""
        if n == 0:
            return Jet.const(1.0, self.order, self.base)
        if n < 0:
            return self.powi(-n).reciprocal()
        result = None
        square = self
        while n:
            if n & 1:
                result = square if result is None else result * square
            n >>= 1
            if n:
                square = square * square
        return result

    def pow(self, expo):
        """self**expo for a scalar or jet exponent."""
        if isinstance(expo, Jet):
            nonconst = any(abs(x) > 0.0 for x in expo.c[1:])
            if nonconst:
                return (self.ln() * expo).exp()
            expo = expo.c[0]
        expo = float(expo)
        if expo == round(expo) and abs(expo) <= 64:
            return self.powi(int(round(expo)))
        c0 = self.c[0]
        if c0 <= 0.0:
            raise DomainError("pow", c0)
        if expo == 0.5:
            return self.sqrt()
        p0 = c0 ** expo
        series = [p0]
        binom = 1.0
        for k in range(1, self.order + 1):
            binom *= (expo - (k - 1)) / k
            series.append(p0 * binom / c0 ** k)
        return self.compose_series(series)

    # -- calculus ---------------------------------------------------------------

    def d_dx(self):
        n = self.order - 1
        out = [0.0] * NTERMS[n]
        for k in range(NTERMS[n]):
            i, j = MONOMIALS[k]
            out[k] = (i + 1) * self.c[MONO_INDEX[(i + 1, j)]]
        return Jet(n, self.base, out)

    def d_dy(self):
        n = self.order - 1
        out = [0.0] * NTERMS[n]
        for k in range(NTERMS[n]):
            i, j = MONOMIALS[k]
            out[k] = (j + 1) * self.c[MONO_INDEX[(i, j + 1)]]
        return Jet(n, self.base, out)

    def truncate(self, order):
        if order >= self.order:
            return self
        return Jet(order, self.base, self.c[:NTERMS[order]])

    def shift_base(self, dx, dy):
        """Re-expand the same polynomial about (base + (dx, dy)), exactly."""
        n = self.order
        xj = Jet.variable(0, n) + dx
        yj = Jet.variable(1, n) + dy
        out = compose_bivariate(self, xj, yj)
        out.base = (self.base[0] + dx, self.base[1] + dy)
        return out

    def poly_eval(self, x, y):
        """Evaluate the truncated polynomial at offsets (x, y) from base."""
        total = 0.0
        for k, (i, j) in enumerate(MONOMIALS[:NTERMS[self.order]]):
            total += self.c[k] * x ** i * y ** j
        return total

    def __repr__(self):
        return f"Jet(order={self.order}, base={self.base}, value={self.c[0]:.6g})"


def compose_bivariate(f, u, v):
    """Substitute jets (u, v) for the offsets of f.

    Constant terms of u and v are kept, so this doubles as polynomial
    recentering; truncation happens in jet arithmetic.
    """
    n = min(f.order, u.order, v.order)
    du = Jet(n, u.base, list(u.c[:NTERMS[n]]))
    dv = Jet(n, u.base, list(v.c[:NTERMS[n]]))
    upow = [Jet.const(1.0, n, u.base)]
    vpow = [Jet.const(1.0, n, u.base)]
    for _ in range(n):
        upow.append(upow[-1] * du)
        vpow.append(vpow[-1] * dv)
    out = Jet.const(0.0, n, u.base)
    for k, (i, j) in enumerate(MONOMIALS[:NTERMS[f.order]]):
        ck = f.c[k]
        if ck != 0.0 and i + j <= n:
            out = out + (upow[i] * vpow[j]) * ck
    return out


def invert_map_jet(xi, eta):
    """Invert the 2D map (x, y) -> (xi, eta) as jets.

    Both inputs must have zero constant term and an invertible linear part.
    Returns jets (U, V) with xi(U, V) = x and eta(U, V) = y up to truncation.
    """
    n = min(xi.order, eta.order)
    a, b = xi.c[1], xi.c[2]
    c, d = eta.c[1], eta.c[2]
    det = a * d - b * c
    if abs(det) < 1e-300:
        raise DomainError("invert_map_jet", det)
    ia, ib, ic, id_ = d / det, -b / det, -c / det, a / det
    x = Jet.variable(0, n)
    y = Jet.variable(1, n)
    u = x * ia + y * ib
    v = x * ic + y * id_
    for _ in range(4):
        r1 = compose_bivariate(xi, u, v) - x
        r2 = compose_bivariate(eta, u, v) - y
        u = u - (r1 * ia + r2 * ib)
        v = v - (r1 * ic + r2 * id_)
        u.c[0] = 0.0
        v.c[0] = 0.0
    return u, v


# ---------------------------------------------------------------------------
# Expression parsing
# ---------------------------------------------------------------------------

def tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExprSyntaxError(f"bad number {text[i:j]!r}", i)
            tokens.append(("num", value, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        if ch in "+-*/^(),":
            tokens.append((ch, ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse(self):
        e = self.additive()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected trailing {tok[1]!r}", tok[2])
        return e

    def additive(self):
        e = self.multiplicative()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.multiplicative()
            e = ("add" if op == "+" else "sub", e, rhs)
        return e

    def multiplicative(self):
        e = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.unary()
            e = ("mul" if op == "*" else "div", e, rhs)
        return e

    def unary(self):
        if self.peek()[0] == "-":
            self.advance()
            return ("neg", self.unary())
        if self.peek()[0] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.advance()
            return ("pow", base, self.unary())
        return base

    def atom(self):
        tok = self.advance()
        kind, value, pos = tok
        if kind == "num":
            return ("num", value)
        if kind == "(":
            e = self.additive()
            self.expect(")")
            return e
        if kind == "ident":
            if self.peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifier(value)
                self.advance()
                arg = self.additive()
                self.expect(")")
                return ("call", value, arg)
            if value in CONSTANTS:
                return ("const", value)
            return ("var", value)
        raise ExprSyntaxError(f"unexpected token {value!r}", pos)


def parse(text):
    """Parse an expression string into a tuple tree."""
    return _Parser(tokenize(text)).parse()


_PRECEDENCE = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def to_string(e):
    """Print an expression; re-parsing the result gives an identical tree."""

    def render(node, parent_prec, right_side):
        tag = node[0]
        if tag == "num":
            v = node[1]
            s = repr(v) if v != int(v) else str(int(v))
            return f"({s})" if v < 0 else s
        if tag == "const":
            return node[1]
        if tag == "var":
            return node[1]
        if tag == "call":
            return f"{node[1]}({render(node[2], 0, False)})"
        if tag == "neg":
            inner = render(node[1], _PRECEDENCE["neg"], False)
            s = f"-{inner}"
            return f"({s})" if parent_prec > _PRECEDENCE["neg"] or right_side else s
        op = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[tag]
        prec = _PRECEDENCE[tag]
        # pow is right-associative; the others left-associative
        if tag == "pow":
            lhs = render(node[1], prec + 1, False)
            rhs = render(node[2], prec, False)
        else:
            lhs = render(node[1], prec, False)
            rhs = render(node[2], prec + 1, True)
        s = f"{lhs}{op}{rhs}"
        return f"({s})" if parent_prec > prec or (right_side and parent_prec == prec) else s

    return render(e, 0, False)


def variables(e):
    """Set of variable names appearing in the tree."""
    tag = e[0]
    if tag == "var":
        return {e[1]}
    if tag in ("num", "const"):
        return set()
    if tag == "call":
        return variables(e[2])
    if tag == "neg":
        return variables(e[1])
    return variables(e[1]) | variables(e[2])


# -- symbolic derivative (used to push normal perturbations through exprs) ---

_DERIV_RULES = {
    "sin": lambda a: ("call", "cos", a),
    "cos": lambda a: ("neg", ("call", "sin", a)),
    "exp": lambda a: ("call", "exp", a),
    "ln": lambda a: ("div", ("num", 1.0), a),
    "sqrt": lambda a: ("div", ("num", 0.5), ("call", "sqrt", a)),
    "tan": lambda a: ("div", ("num", 1.0), ("pow", ("call", "cos", a), ("num", 2.0))),
    "atan": lambda a: ("div", ("num", 1.0), ("add", ("num", 1.0), ("pow", a, ("num", 2.0)))),
}


def _is_zero(e):
    return e[0] == "num" and e[1] == 0.0


def _is_one(e):
    return e[0] == "num" and e[1] == 1.0


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return ("num", 0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return ("mul", a, b)


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return ("add", a, b)


def differentiate(e, var):
    """Symbolic d(e)/d(var) with light constant folding."""
    tag = e[0]
    if tag in ("num", "const"):
        return ("num", 0.0)
    if tag == "var":
        return ("num", 1.0) if e[1] == var else ("num", 0.0)
    if tag == "neg":
        d = differentiate(e[1], var)
        return ("num", 0.0) if _is_zero(d) else ("neg", d)
    if tag == "add":
        return _add(differentiate(e[1], var), differentiate(e[2], var))
    if tag == "sub":
        da, db = differentiate(e[1], var), differentiate(e[2], var)
        if _is_zero(db):
            return da
        if _is_zero(da):
            return ("neg", db)
        return ("sub", da, db)
    if tag == "mul":
        a, b = e[1], e[2]
        return _add(_mul(differentiate(a, var), b), _mul(a, differentiate(b, var)))
    if tag == "div":
        a, b = e[1], e[2]
        da, db = differentiate(a, var), differentiate(b, var)
        if _is_zero(db):
            return ("div", da, b) if not _is_zero(da) else ("num", 0.0)
        num = ("sub", _mul(da, b), _mul(a, db))
        return ("div", num, ("pow", b, ("num", 2.0)))
    if tag == "pow":
        a, b = e[1], e[2]
        if b[0] == "num":
            da = differentiate(a, var)
            factor = _mul(("num", b[1]), ("pow", a, ("num", b[1] - 1.0)))
            return _mul(factor, da)
        # general a^b = exp(b ln a)
        return differentiate(("call", "exp", _mul(b, ("call", "ln", a))), var)
    if tag == "call":
        fname, arg = e[1], e[2]
        outer = _DERIV_RULES[fname](arg)
        return _mul(outer, differentiate(arg, var))
    raise ValueError(f"unknown expression node {tag!r}")


# -- evaluation ----------------------------------------------------------------

def compile_expr(e):
    """Flatten a tree into a postfix program for fast repeated evaluation."""
    prog = []

    def walk(node):
        tag = node[0]
        if tag in ("num", "const", "var"):
            prog.append(node)
        elif tag == "call":
            walk(node[2])
            prog.append(("call", node[1]))
        elif tag == "neg":
            walk(node[1])
            prog.append(("neg",))
        else:
            walk(node[1])
            walk(node[2])
            prog.append((tag,))

    walk(e)
    return tuple(prog)


def run_program(prog, env):
    """Evaluate a compiled program over an environment of Jets."""
    stack = []
    push = stack.append
    for ins in prog:
        tag = ins[0]
        if tag == "var":
            try:
                push(env[ins[1]])
            except KeyError:
                raise UnknownIdentifier(ins[1])
        elif tag == "num":
            push(ins[1])
        elif tag == "const":
            push(CONSTANTS[ins[1]])
        elif tag == "add":
            b = stack.pop()
            stack[-1] = stack[-1] + b
        elif tag == "sub":
            b = stack.pop()
            stack[-1] = stack[-1] - b
        elif tag == "mul":
            b = stack.pop()
            stack[-1] = stack[-1] * b
        elif tag == "div":
            b = stack.pop()
            a = stack[-1]
            if isinstance(b, Jet):
                if not isinstance(a, Jet):
                    a = Jet.const(a, b.order, b.base)
                stack[-1] = a / b
            else:
                stack[-1] = a * (1.0 / b)
        elif tag == "neg":
            stack[-1] = -stack[-1]
        elif tag == "pow":
            b = stack.pop()
            a = stack[-1]
            if not isinstance(a, Jet):
                order = b.order if isinstance(b, Jet) else MAX_ORDER
                base = b.base if isinstance(b, Jet) else (0.0, 0.0)
                a = Jet.const(a, order, base)
            stack[-1] = a.pow(b)
        elif tag == "call":
            a = stack[-1]
            if not isinstance(a, Jet):
                a = Jet.const(a, MAX_ORDER)
            stack[-1] = getattr(a, ins[1])()
    return stack[0]


def compile_multi(exprs):
    """Compile several trees into one register program with structural
    common-subexpression sharing (components of a surface share most of
    their trig subtrees).  Returns (program, output_registers)."""
    regs = {}
    prog = []

    def walk(node):
        hit = regs.get(node)
        if hit is not None:
            return hit
        tag = node[0]
        if tag in ("num", "const", "var"):
            ins = node
        elif tag == "call":
            ins = ("call", node[1], walk(node[2]))
        elif tag == "neg":
            ins = ("neg", walk(node[1]))
        else:
            ins = (tag, walk(node[1]), walk(node[2]))
        prog.append(ins)
        idx = len(prog) - 1
        regs[node] = idx
        return idx

    outs = [walk(e) for e in exprs]
    return tuple(prog), tuple(outs)


def run_multi(compiled, env):
    """Execute a compile_multi program over an environment of Jets."""
    prog, outs = compiled
    reg = []
    push = reg.append
    for ins in prog:
        tag = ins[0]
        if tag == "var":
            try:
                push(env[ins[1]])
            except KeyError:
                raise UnknownIdentifier(ins[1])
        elif tag == "num":
            push(ins[1])
        elif tag == "const":
            push(CONSTANTS[ins[1]])
        elif tag == "add":
            push(reg[ins[1]] + reg[ins[2]])
        elif tag == "sub":
            push(reg[ins[1]] - reg[ins[2]])
        elif tag == "mul":
            push(reg[ins[1]] * reg[ins[2]])
        elif tag == "div":
            a, b = reg[ins[1]], reg[ins[2]]
            if isinstance(b, Jet):
                if not isinstance(a, Jet):
                    a = Jet.const(a, b.order, b.base)
                push(a / b)
            else:
                push(a * (1.0 / b))
        elif tag == "neg":
            push(-reg[ins[1]])
        elif tag == "pow":
            a, b = reg[ins[1]], reg[ins[2]]
            if not isinstance(a, Jet):
                order = b.order if isinstance(b, Jet) else MAX_ORDER
                base = b.base if isinstance(b, Jet) else (0.0, 0.0)
                a = Jet.const(a, order, base)
            push(a.pow(b))
        elif tag == "call":
            a = reg[ins[2]]
            if not isinstance(a, Jet):
                a = Jet.const(a, MAX_ORDER)
            push(getattr(a, ins[1])())
    return [reg[o] for o in outs]


def eval_jet(e, base, var_names, order=4):
    """Degree-``order`` Taylor expansion of expression ``e`` at ``base``.

    ``var_names`` assigns the two jet variables; any other variable in the
    tree raises UnknownIdentifier.
    """
    prog = e if isinstance(e, tuple) and e and isinstance(e[0], tuple) else compile_expr(e)
    env = {var_names[0]: Jet.variable(0, order, base)}
    if len(var_names) > 1:
        env[var_names[1]] = Jet.variable(1, order, base)
    out = run_program(prog, env)
    if not isinstance(out, Jet):
        out = Jet.const(out, order, base)
    return out


def eval_scalar(e, env):
    """Scalar evaluation; exactly the constant term of the order-0 jet."""
    prog = e if isinstance(e, tuple) and e and isinstance(e[0], tuple) else compile_expr(e)
    jet_env = {name: Jet.const(v, 0) for name, v in env.items()}
    # order-0 variables are just constants
    out = run_program(prog, jet_env)
    return out.value if isinstance(out, Jet) else float(out)
