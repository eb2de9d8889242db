"""Parser and jet arithmetic tests.

The independent oracle for jet coefficients is central finite differencing of
plain scalar evaluation; it is implemented here and never calls into the jet
code being checked.
"""

import math
import random

import pytest

from mcflines import exprjet
from mcflines.errors import (DivisionByZeroConstantTerm, DomainError,
                             ExprSyntaxError, UnknownIdentifier)
from mcflines.exprjet import (Jet, compose_bivariate, differentiate, eval_jet,
                              eval_scalar, invert_map_jet, parse, to_string,
                              variables)

H_FD = 1e-4
FD_TOL = max(1e-6, 1e3 * H_FD ** 2)


def _stencil(order, h):
    if order == 0:
        return [(0.0, 1.0)]
    if order == 1:
        return [(h, 0.5 / h), (-h, -0.5 / h)]
    if order == 2:
        return [(h, 1.0 / h ** 2), (0.0, -2.0 / h ** 2), (-h, 1.0 / h ** 2)]
    if order == 3:
        return [(2 * h, 0.5 / h ** 3), (h, -1.0 / h ** 3),
                (-h, 1.0 / h ** 3), (-2 * h, -0.5 / h ** 3)]
    return [(2 * h, 1.0 / h ** 4), (h, -4.0 / h ** 4), (0.0, 6.0 / h ** 4),
            (-h, -4.0 / h ** 4), (-2 * h, 1.0 / h ** 4)]


def _fd_raw(f, x0, y0, i, j, h):
    total = 0.0
    for dx, wx in _stencil(i, h):
        for dy, wy in _stencil(j, h):
            total += wx * wy * f(x0 + dx, y0 + dy)
    return total / (math.factorial(i) * math.factorial(j))


def fd_coefficient(f, x0, y0, i, j, h=H_FD):
    """Taylor coefficient c_ij = d^(i+j) f / (dx^i dy^j) / (i! j!) by central
    finite differences of the scalar function f.

    The step is widened with total derivative order m = i + j (roundoff in an
    order-m stencil grows like eps/h^m) and the h^2 truncation term removed by
    one Richardson extrapolation, keeping every coefficient well inside the
    declared max(1e-6, 1e3 h^2) tolerance.
    """
    m = i + j
    if m == 0:
        return f(x0, y0)
    eps = 2.2e-16
    hm = max(h, 2.0 * eps ** (1.0 / (m + 4)))
    d1 = _fd_raw(f, x0, y0, i, j, hm)
    d2 = _fd_raw(f, x0, y0, i, j, hm / 2.0)
    return (4.0 * d2 - d1) / 3.0


def check_against_fd(expr_text, x0, y0, order=4, tol=FD_TOL):
    e = parse(expr_text)
    jet = eval_jet(e, (x0, y0), ("x", "y"), order=order)

    def scalar(x, y):
        return eval_scalar(e, {"x": x, "y": y})

    for i in range(order + 1):
        for j in range(order + 1 - i):
            want = fd_coefficient(scalar, x0, y0, i, j)
            got = jet.coeff(i, j)
            scale = max(1.0, abs(want))
            assert got == pytest.approx(want, abs=tol * scale), (i, j, expr_text)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_parse_shapes():
    assert parse("x^2+y") == ("add", ("pow", ("var", "x"), ("num", 2.0)), ("var", "y"))
    assert parse("-2^2") == ("neg", ("pow", ("num", 2.0), ("num", 2.0)))
    assert eval_scalar(parse("-2^2"), {}) == -4.0


def test_parse_precedence_against_reference_evaluator():
    # reference oracle: python's own arithmetic (same precedence for these forms)
    cases = [
        ("2+3*4", 2 + 3 * 4),
        ("2*3^2", 2 * 3 ** 2),
        ("-2^2", -(2 ** 2)),
        ("2^-2", 2.0 ** -2),
        ("2^3^2", 2 ** 3 ** 2),
        ("(2+3)*4", (2 + 3) * 4),
        ("7-4-2", 7 - 4 - 2),
        ("8/4/2", 8 / 4 / 2),
    ]
    for text, want in cases:
        assert eval_scalar(parse(text), {}) == pytest.approx(want, rel=1e-15)


def test_sin_pi_is_zero():
    assert abs(eval_scalar(parse("sin(pi)"), {})) < 1e-15


def test_roundtrip_print_parse():
    texts = [
        "x^2+y", "-2^2", "sin(x)*cos(y)", "exp(x)/(1+y)", "x^-2",
        "1-(2-x)", "x/(y/2)", "-(x+y)^3", "atan(x)+sqrt(y)*tan(x)",
        "2^3^x", "(x^2)^3", "pi*e", "x*-y" if False else "x*(0-y)",
    ]
    for text in texts:
        tree = parse(text)
        printed = to_string(tree)
        assert parse(printed) == tree, (text, printed)


def test_roundtrip_random_trees():
    rng = random.Random(7)

    def gen(depth):
        if depth == 0:
            return rng.choice([("num", float(rng.randint(1, 9))), ("var", "x"),
                               ("var", "y"), ("const", "pi")])
        tag = rng.choice(["add", "sub", "mul", "div", "pow", "neg", "call"])
        if tag == "neg":
            return ("neg", gen(depth - 1))
        if tag == "call":
            return ("call", rng.choice(exprjet.FUNCTIONS), gen(depth - 1))
        return (tag, gen(depth - 1), gen(depth - 1))

    for _ in range(200):
        tree = gen(3)
        assert parse(to_string(tree)) == tree


def test_parse_errors():
    with pytest.raises(ExprSyntaxError):
        parse("x +")
    with pytest.raises(ExprSyntaxError):
        parse("(x")
    with pytest.raises(ExprSyntaxError) as err:
        parse("x + $")
    assert err.value.position == 4
    with pytest.raises(UnknownIdentifier):
        parse("foo(x)")
    with pytest.raises(UnknownIdentifier):
        eval_scalar(parse("x+z"), {"x": 1.0})


def test_variables():
    assert variables(parse("x*sin(y)+pi")) == {"x", "y"}


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------

def test_bilinear_jet():
    jet = eval_jet(parse("x*y"), (2.0, 3.0), ("x", "y"))
    assert jet.value == 6.0
    assert jet.coeff(1, 0) == 3.0
    assert jet.coeff(0, 1) == 2.0
    assert jet.coeff(1, 1) == 1.0
    for i in range(5):
        for j in range(5 - i):
            if (i, j) not in ((0, 0), (1, 0), (0, 1), (1, 1)):
                assert jet.coeff(i, j) == 0.0


def test_sine_series():
    jet = eval_jet(parse("sin(x)"), (0.0, 0.5), ("x", "y"))
    want = [0.0, 1.0, 0.0, -1.0 / 6.0, 0.0]
    for i, w in enumerate(want):
        assert jet.coeff(i, 0) == pytest.approx(w, abs=1e-15)


def test_exp_div_cross_check_fd():
    check_against_fd("exp(x)/(1+y)", 0.0, 0.0)


def test_more_fd_cross_checks():
    check_against_fd("sin(x*y)+cos(x)", 0.3, -0.4)
    check_against_fd("sqrt(1+x^2+y^2)", 0.2, 0.1)
    check_against_fd("atan(x/(2+y))", 0.5, 0.25)
    check_against_fd("ln(2+x)*tan(y)", 0.1, 0.3)
    check_against_fd("x^2.5", 1.5, 0.0)
    check_against_fd("2^x", 0.7, 0.0)
    check_against_fd("x^y", 1.7, 1.2)


def test_polynomial_exact():
    # degree <= 4 polynomials reproduce exactly up to 1e-13 relative
    e = parse("1+2*x-3*y+0.5*x^2*y^2-x^3+y^4/4+x*y")
    jet = eval_jet(e, (0.0, 0.0), ("x", "y"))
    want = {(0, 0): 1.0, (1, 0): 2.0, (0, 1): -3.0, (2, 2): 0.5,
            (3, 0): -1.0, (0, 4): 0.25, (1, 1): 1.0}
    for i in range(5):
        for j in range(5 - i):
            w = want.get((i, j), 0.0)
            assert jet.coeff(i, j) == pytest.approx(w, rel=1e-13, abs=1e-13)
    # recentred polynomial still exact
    jet2 = eval_jet(e, (1.25, -0.75), ("x", "y"))
    direct = eval_scalar(e, {"x": 1.25 + 0.1, "y": -0.75 + 0.2})
    assert jet2.poly_eval(0.1, 0.2) == pytest.approx(direct, rel=1e-13)


def test_constant_subtree_keeps_order():
    jet = eval_jet(parse("sin(2)*x + 2^3*y"), (0.0, 0.0), ("x", "y"))
    assert jet.coeff(1, 0) == pytest.approx(math.sin(2.0), rel=1e-15)
    assert jet.coeff(0, 1) == pytest.approx(8.0, rel=1e-15)


def test_commutativity_associativity():
    rng = random.Random(3)
    for _ in range(50):
        a = Jet(4, (0, 0), [rng.uniform(-2, 2) for _ in range(15)])
        b = Jet(4, (0, 0), [rng.uniform(-2, 2) for _ in range(15)])
        c = Jet(4, (0, 0), [rng.uniform(-2, 2) for _ in range(15)])
        ab = a * b
        ba = b * a
        for x, y in zip(ab.c, ba.c):
            assert x == pytest.approx(y, rel=1e-13, abs=1e-13)
        lhs = (a * b) * c
        rhs = a * (b * c)
        for x, y in zip(lhs.c, rhs.c):
            assert x == pytest.approx(y, rel=1e-12, abs=1e-12)
        s1 = (a + b) + c
        s2 = a + (b + c)
        for x, y in zip(s1.c, s2.c):
            assert x == pytest.approx(y, rel=1e-13, abs=1e-13)


def test_chain_rule_composition():
    # jet of f(g(x,y)) equals series composition of f with the jet of g
    g = parse("x^2+y+0.5")
    f_of_g = parse("exp(x^2+y+0.5)")
    jet_g = eval_jet(g, (0.3, 0.2), ("x", "y"))
    jet_fg = eval_jet(f_of_g, (0.3, 0.2), ("x", "y"))
    composed = jet_g.exp()
    for x, y in zip(jet_fg.c, composed.c):
        assert x == pytest.approx(y, rel=1e-13, abs=1e-13)


def test_scalar_equals_jet_constant_term():
    texts = ["exp(x)/(1+y)", "sin(x*y)-cos(x)^2", "sqrt(2+x)*atan(y)", "x^y"]
    for text in texts:
        e = parse(text)
        s = eval_scalar(e, {"x": 0.37, "y": 0.21})
        jet = eval_jet(e, (0.37, 0.21), ("x", "y"))
        assert s == jet.value  # bitwise


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_jet(parse("sqrt(x)"), (-1.0, 0.0), ("x", "y"))
    with pytest.raises(DomainError):
        eval_jet(parse("ln(x)"), (0.0, 0.0), ("x", "y"))
    with pytest.raises(DivisionByZeroConstantTerm):
        eval_jet(parse("1/x"), (0.0, 0.0), ("x", "y"))


def test_jet_derivative_consistency():
    e = parse("sin(x)*exp(y)+x^3*y")
    jet = eval_jet(e, (0.4, -0.2), ("x", "y"), order=4)
    jx = jet.d_dx()
    ex = differentiate(e, "x")
    jet_ex = eval_jet(ex, (0.4, -0.2), ("x", "y"), order=3)
    for k in range(len(jx.c)):
        assert jx.c[k] == pytest.approx(jet_ex.c[k], rel=1e-12, abs=1e-12)


def test_symbolic_derivative_against_fd():
    rng = random.Random(11)
    exprs = ["sin(x*y)", "exp(x)/(1+y^2)", "sqrt(4+x)*y", "atan(x+y)",
             "tan(x/3)+ln(2+y)", "x^y", "(x+y)^3"]
    for text in exprs:
        e = parse(text)
        for var in ("x", "y"):
            de = differentiate(e, var)
            for _ in range(5):
                x0, y0 = rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)
                h = 1e-6
                if var == "x":
                    fd = (eval_scalar(e, {"x": x0 + h, "y": y0})
                          - eval_scalar(e, {"x": x0 - h, "y": y0})) / (2 * h)
                else:
                    fd = (eval_scalar(e, {"x": x0, "y": y0 + h})
                          - eval_scalar(e, {"x": x0, "y": y0 - h})) / (2 * h)
                got = eval_scalar(de, {"x": x0, "y": y0})
                assert got == pytest.approx(fd, rel=1e-8, abs=1e-8)


def test_map_inversion():
    # invert (xi, eta) = (x + 0.3 y^2 + 0.05 x^3, y - 0.2 x y) near 0
    xi = eval_jet(parse("x+0.3*y^2+0.05*x^3"), (0.0, 0.0), ("x", "y"))
    eta = eval_jet(parse("y-0.2*x*y"), (0.0, 0.0), ("x", "y"))
    u, v = invert_map_jet(xi, eta)
    back_x = compose_bivariate(xi, u, v)
    back_y = compose_bivariate(eta, u, v)
    for k, (i, j) in enumerate(exprjet.MONOMIALS[:15]):
        want_x = 1.0 if (i, j) == (1, 0) else 0.0
        want_y = 1.0 if (i, j) == (0, 1) else 0.0
        assert back_x.c[k] == pytest.approx(want_x, abs=1e-12)
        assert back_y.c[k] == pytest.approx(want_y, abs=1e-12)


def test_shift_base_exact():
    e = parse("1+x^2*y-0.5*y^3+x^4")
    jet = eval_jet(e, (0.0, 0.0), ("x", "y"))
    shifted = jet.shift_base(0.5, -0.25)
    direct = eval_jet(e, (0.5, -0.25), ("x", "y"))
    for a, b in zip(shifted.c, direct.c):
        assert a == pytest.approx(b, rel=1e-13, abs=1e-13)
