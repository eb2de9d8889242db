"""Mean-curvature functions m(H, K): evaluation, axioms, regularity classes.

A mean function takes the arithmetic mean curvature H and Gaussian curvature K
of an immersion and returns a value between the principal curvatures.  Builtin
kinds: arithmetic, geometric, harmonic, holder(r), agm, co(inner) = 2H - inner,
and expr (any expression in the variables H and K).

Regularity vocabulary (all probed at a working H):

* positive regular:  Mbar = m_H + 2 m m_K > 0 over the admissible cone,
* 1-regular case a:  m(H,0) = 0 with dm/dK(H,0) > 1/(2H) (case b mirrors with
  boundary value 2H and slope < -1/(2H)),
* 1/2-regular:       m analytic in sqrt(K) with nonzero first slope.

The value m0 reported by ``regularity`` is the K-slope (1-regular) or the
sqrt(K)-slope (1/2-regular), as a positive number in both a/b cases.
"""

import math
from dataclasses import dataclass, field

from . import exprjet
from .errors import (InconclusiveProbe, NonPositivePrincipalCurvature,
                     OutsideElliptic, UnknownIdentifier)
from .exprjet import Jet

BUILTIN_KINDS = ("arithmetic", "geometric", "harmonic", "holder", "agm", "co", "expr")


@dataclass(frozen=True)
class MeanSpec:
    kind: str
    r: float = 0.0
    inner: "MeanSpec" = None
    formula: str = ""
    _tree: tuple = field(default=None, repr=False, compare=False)

    @staticmethod
    def arithmetic():
        return MeanSpec("arithmetic")

    @staticmethod
    def geometric():
        return MeanSpec("geometric")

    @staticmethod
    def harmonic():
        return MeanSpec("harmonic")

    @staticmethod
    def holder(r):
        return MeanSpec("holder", r=float(r))

    @staticmethod
    def agm():
        return MeanSpec("agm")

    @staticmethod
    def co(inner):
        return MeanSpec("co", inner=inner)

    @staticmethod
    def expr(formula):
        tree = exprjet.parse(formula)
        bad = exprjet.variables(tree) - {"H", "K"}
        if bad:
            raise UnknownIdentifier(sorted(bad)[0])
        return MeanSpec("expr", formula=formula, _tree=tree)

    @staticmethod
    def from_json(obj):
        kind = obj["kind"]
        if kind == "holder":
            return MeanSpec.holder(obj["r"])
        if kind == "co":
            return MeanSpec.co(MeanSpec.from_json(obj["inner"]))
        if kind == "expr":
            return MeanSpec.expr(obj["formula"])
        if kind in ("arithmetic", "geometric", "harmonic", "agm"):
            return MeanSpec(kind)
        raise ValueError(f"unknown mean kind {kind!r}")

    def to_json(self):
        if self.kind == "holder":
            return {"kind": "holder", "r": self.r}
        if self.kind == "co":
            return {"kind": "co", "inner": self.inner.to_json()}
        if self.kind == "expr":
            return {"kind": "expr", "formula": self.formula}
        return {"kind": self.kind}

    def label(self):
        if self.kind == "holder":
            return f"holder({self.r:g})"
        if self.kind == "co":
            return f"co({self.inner.label()})"
        if self.kind == "expr":
            return f"expr({self.formula})"
        return self.kind

    @property
    def tree(self):
        if self.kind != "expr":
            return None
        if self._tree is None:
            object.__setattr__(self, "_tree", exprjet.parse(self.formula))
        return self._tree


@dataclass(frozen=True)
class MeanEval:
    M: float
    m_H: float
    m_K: float
    Mbar: float


@dataclass
class AxiomReport:
    max_betweenness: float
    max_symmetry: float
    max_homogeneity: float
    witness: tuple
    passed: bool


@dataclass
class RegularityReport:
    positive_regular: bool
    min_Mbar: float
    one_regular: str  # "none" | "case_a" | "case_b"
    half_regular: str
    m0: float
    H: float
    boundary_value: float
    notes: str = ""


# ---------------------------------------------------------------------------
# principal-curvature form
# ---------------------------------------------------------------------------

def _split(H, K):
    """(k1, k2) from (H, K); k1 via the cancellation-free quotient form."""
    s = math.sqrt(max(H * H - K, 0.0))
    k2 = H + s
    k1 = K / k2 if k2 > 0 else H - s
    return k1, k2


def _agm(a, g):
    for _ in range(64):
        if abs(a - g) <= 1e-14 * abs(a):
            break
        a, g = 0.5 * (a + g), math.sqrt(a * g)
    return 0.5 * (a + g)


def _holder_value(k1, k2, r):
    if abs(r) < 1e-8:
        return math.sqrt(k1 * k2)
    if r > 0:
        ratio = (k1 / k2) ** r
        return k2 * ((1.0 + ratio) / 2.0) ** (1.0 / r)
    ratio = (k1 / k2) ** (-r)
    return k1 * ((1.0 + ratio) / 2.0) ** (1.0 / r)


def value_from_principal(spec, k1, k2):
    if k1 <= 0.0 or k2 <= 0.0:
        raise NonPositivePrincipalCurvature(f"k1={k1}, k2={k2}")
    if k1 > k2:
        k1, k2 = k2, k1
    kind = spec.kind
    if kind == "arithmetic":
        return 0.5 * (k1 + k2)
    if kind == "geometric":
        return math.sqrt(k1 * k2)
    if kind == "harmonic":
        return 2.0 * k1 * k2 / (k1 + k2)
    if kind == "holder":
        return _holder_value(k1, k2, spec.r)
    if kind == "agm":
        return _agm(k2, k1)
    if kind == "co":
        return (k1 + k2) - value_from_principal(spec.inner, k1, k2)
    if kind == "expr":
        H = 0.5 * (k1 + k2)
        return exprjet.eval_scalar(spec.tree, {"H": H, "K": k1 * k2})
    raise ValueError(f"unknown mean kind {kind!r}")


def from_principal(spec, k1, k2):
    """M(k1, k2); equal to eval(spec, (k1+k2)/2, k1 k2).M."""
    return value_from_principal(spec, k1, k2)


# ---------------------------------------------------------------------------
# evaluation with partials
# ---------------------------------------------------------------------------

def _check_cone(H, K, allow_zero=True):
    lo = 0.0 if allow_zero else 1e-300
    if not (H > 0.0 and lo <= K <= H * H * (1.0 + 1e-12)):
        raise OutsideElliptic(H, K)


def _value(spec, H, K):
    kind = spec.kind
    if kind == "arithmetic":
        return H
    if kind == "geometric":
        return math.sqrt(K)
    if kind == "harmonic":
        return K / H
    if kind == "co":
        return 2.0 * H - _value(spec.inner, H, K)
    if kind == "expr":
        return exprjet.eval_scalar(spec.tree, {"H": H, "K": K})
    # holder / agm via principal curvatures
    k1, k2 = _split(H, K)
    if K == 0.0:
        k1 = 0.0
    if kind == "holder":
        if k1 == 0.0:
            return k2 * 2.0 ** (-1.0 / spec.r) if spec.r > 1e-8 else 0.0
        return _holder_value(k1, k2, spec.r)
    if kind == "agm":
        return 0.0 if k1 == 0.0 else _agm(k2, k1)
    raise ValueError(f"unknown mean kind {kind!r}")


def _fd_partials(spec, H, K):
    """Central differences with Richardson extrapolation (steps 1e-4, 5e-5,
    shrunk when the admissible cone requires it)."""

    def slope(f, x, h):
        d1 = (f(x + h) - f(x - h)) / (2.0 * h)
        d2 = (f(x + h / 2.0) - f(x - h / 2.0)) / h
        return (4.0 * d2 - d1) / 3.0

    hH = min(1e-4, 0.25 * H)
    top = H * H - K
    hK = min(1e-4, 0.25 * K, 0.25 * top) if top > 0 else min(1e-4, 0.25 * K)
    m_H = slope(lambda x: _value(spec, x, K), H, hH)
    m_K = slope(lambda x: _value(spec, H, x), K, hK)
    return m_H, m_K


def eval_mean(spec, H, K):
    """Mean value and partials at (H, K) in the open elliptic cone.

    K = 0 is admitted for kinds whose formula extends continuously; partials
    there may be infinite.
    """
    _check_cone(H, K)
    kind = spec.kind
    if kind == "arithmetic":
        M, m_H, m_K = H, 1.0, 0.0
    elif kind == "geometric":
        M = math.sqrt(K)
        m_H = 0.0
        m_K = 0.5 / M if M > 0 else math.inf
    elif kind == "harmonic":
        M, m_H, m_K = K / H, -K / (H * H), 1.0 / H
    elif kind == "co":
        inner = eval_mean(spec.inner, H, K)
        M, m_H, m_K = 2.0 * H - inner.M, 2.0 - inner.m_H, -inner.m_K
    elif kind == "expr":
        jet = exprjet.eval_jet(spec.tree, (H, K), ("H", "K"), order=1)
        M, m_H, m_K = jet.value, jet.dx, jet.dy
    elif kind == "holder":
        M, m_H, m_K = _holder_eval(spec.r, H, K)
    elif kind == "agm":
        M = _value(spec, H, K)
        if K > 0.0:
            m_H, m_K = _fd_partials(spec, H, K)
        else:
            m_H, m_K = 0.0, math.inf
    else:
        raise ValueError(f"unknown mean kind {kind!r}")
    return MeanEval(M, m_H, m_K, m_H + 2.0 * M * m_K)


def _holder_eval(r, H, K):
    if abs(r) < 1e-8:
        M = math.sqrt(K)
        return M, 0.0, (0.5 / M if M > 0 else math.inf)
    k1, k2 = _split(H, K)
    if k1 <= 0.0:
        M = k2 * 2.0 ** (-1.0 / r) if r > 0 else 0.0
        return M, math.nan, math.inf if r < 0 else math.nan
    M = _holder_value(k1, k2, r)
    # dM/dk_i = (k_i / M)^(r-1) / 2, stable since k1/M <= 1 <= k2/M
    M1 = 0.5 * math.exp((r - 1.0) * (math.log(k1) - math.log(M)))
    M2 = 0.5 * math.exp((r - 1.0) * (math.log(k2) - math.log(M)))
    s = k2 - 0.5 * (k1 + k2)  # = sqrt(H^2 - K)
    if s > 1e-9 * H:
        m_H = (M1 + M2) + (M2 - M1) * H / s
        m_K = (M1 - M2) / (2.0 * s)
    else:
        # near the umbilic diagonal the split is ill-conditioned; fall back to
        # symmetric differences in (H, K)
        m_H, m_K = _fd_partials(MeanSpec.holder(r), H, K)
    return M, m_H, m_K


# ---------------------------------------------------------------------------
# jets of the mean along a chart (used by the direction-field machinery)
# ---------------------------------------------------------------------------

def mean_jet(spec, Hj, Kj):
    """m(H, K) as a jet, given jets of H and K in chart coordinates."""
    kind = spec.kind
    if kind == "arithmetic":
        return Hj
    if kind == "geometric":
        return Kj.sqrt()
    if kind == "harmonic":
        return Kj / Hj
    if kind == "co":
        return Hj * 2.0 - mean_jet(spec.inner, Hj, Kj)
    if kind == "expr":
        prog = exprjet.compile_expr(spec.tree)
        return exprjet.run_program(prog, {"H": Hj, "K": Kj})
    if kind == "holder":
        r = spec.r
        s = (Hj * Hj - Kj).sqrt()
        k2 = Hj + s
        k1 = Kj / k2
        if abs(r) < 1e-8:
            return Kj.sqrt()
        half = 0.5
        return (k1.pow(r) * half + k2.pow(r) * half).pow(1.0 / r)
    if kind == "agm":
        # first-order Taylor rebuilt from the finite-difference partials
        ev = eval_mean(spec, Hj.value, Kj.value)
        order = min(Hj.order, Kj.order)
        out = (Hj - Hj.value) * ev.m_H + (Kj - Kj.value) * ev.m_K + ev.M
        return out.truncate(min(order, 1))
    raise ValueError(f"unknown mean kind {kind!r}")


def half_square_jet(spec, Hj, Kj):
    """Jet of Q = (m - boundary)^2, analytic in K for 1/2-regular means.

    Case a means return m^2, case b means (2H - m)^2.  Only means whose Q is
    jet-evaluable across K = 0 are supported (geometric, co(geometric), and
    scaled variants written as expr trees in K).
    """
    kind = spec.kind
    if kind == "geometric":
        return Kj
    if kind == "co" and spec.inner.kind == "geometric":
        return Kj
    raise InconclusiveProbe(f"no analytic sqrt(K)-square available for {spec.label()}")


# ---------------------------------------------------------------------------
# axioms and regularity
# ---------------------------------------------------------------------------

def axiom_check(spec, samples):
    """Max relative violation of betweenness, symmetry and weighted
    homogeneity over (k1, k2, t) samples.  Report-only."""
    worst_b = worst_s = worst_h = 0.0
    witness = None
    for k1, k2, t in samples:
        lo, hi = min(k1, k2), max(k1, k2)
        m12 = value_from_principal(spec, k1, k2)
        m21 = value_from_principal(spec, k2, k1)
        mt = value_from_principal(spec, t * k1, t * k2)
        scale = hi
        vb = max(lo - m12, m12 - hi, 0.0) / scale
        vs = abs(m12 - m21) / scale
        vh = abs(mt - t * m12) / (t * scale)
        if max(vb, vs, vh) > max(worst_b, worst_s, worst_h):
            witness = (k1, k2, t)
        worst_b = max(worst_b, vb)
        worst_s = max(worst_s, vs)
        worst_h = max(worst_h, vh)
    passed = max(worst_b, worst_s, worst_h) < 1e-10
    return AxiomReport(worst_b, worst_s, worst_h, witness, passed)


def _probe_boundary(spec, H):
    """Limit of m(H, K) as K -> 0+ and the scaling class of the approach."""
    exponents = [4, 5, 6, 7, 8, 9, 10]
    ks = [H * H * 10.0 ** (-j) for j in exponents]
    vals = [_value(spec, H, k) for k in ks]
    return ks, vals


def regularity_class(spec, H_probe=1.0):
    """Boundary classification only (no positive-regularity grid scan):
    (one_regular, half_regular, m0, boundary_value)."""
    one, half, m0, boundary, _notes = _regularity_table(spec, float(H_probe))
    return one, half, m0, boundary


def regularity(spec, H_probe=1.0):
    """Classify positive/1-/1/2-regularity; closed-form kinds by table,
    expr kinds by numeric probes of the K -> 0 boundary."""
    H = float(H_probe)
    if H <= 0:
        raise OutsideElliptic(H, 0.0)
    one, half, m0, boundary, notes = _regularity_table(spec, H)
    pos, min_mbar = _positive_regular_scan(spec)
    return RegularityReport(pos, min_mbar, one, half, m0, H, boundary, notes)


def _regularity_table(spec, H):
    kind = spec.kind
    if kind == "arithmetic":
        return "none", "none", None, H, "boundary value m(H,0) = H"
    if kind == "harmonic":
        return "case_a", "none", 1.0 / H, 0.0, ""
    if kind == "geometric":
        return "none", "case_a", 1.0, 0.0, ""
    if kind == "holder":
        r = spec.r
        if abs(r) <= 1e-8:
            return "none", "case_a", 1.0, 0.0, "holder(0) == geometric"
        if r < 0:
            return "case_a", "none", 2.0 ** (-1.0 / r) / (2.0 * H), 0.0, ""
        return "none", "none", None, H * 2.0 ** (1.0 - 1.0 / r), \
            "boundary value strictly between 0 and 2H"
    if kind == "co":
        one, half, m0, boundary, notes = _regularity_table(spec.inner, H)
        flip = {"case_a": "case_b", "case_b": "case_a", "none": "none"}
        return flip[one], flip[half], m0, 2.0 * H - boundary, notes
    if kind == "agm":
        return "none", "none", None, 0.0, \
            "dm/dK and dm/dS diverge as K -> 0+ (transcendental parabolic class)"
    # expr kinds: numeric probe
    return _probe_regularity(spec, H)


def _probe_regularity(spec, H):
    ks, vals = _probe_boundary(spec, H)
    boundary_candidates = vals[-1]
    tol = 1e-5 * max(H, 1.0)
    if abs(vals[-1] - vals[-2]) > 10 * tol and abs(vals[-1]) > tol \
            and abs(vals[-1] - 2 * H) > tol:
        raise InconclusiveProbe(f"boundary value of {spec.label()} does not stabilize")
    if abs(boundary_candidates) < tol:
        case, shifted = "a", vals
    elif abs(boundary_candidates - 2.0 * H) < tol:
        case, shifted = "b", [2.0 * H - v for v in vals]
    else:
        return "none", "none", None, boundary_candidates, "boundary value not in {0, 2H}"
    slopes_k = [v / k for v, k in zip(shifted, ks)]
    slopes_s = [v / math.sqrt(k) for v, k in zip(shifted, ks)]
    if _stabilizes(slopes_k):
        return f"case_{case}", "none", slopes_k[-1], (0.0 if case == "a" else 2 * H), ""
    if _stabilizes(slopes_s):
        return "none", f"case_{case}", slopes_s[-1], (0.0 if case == "a" else 2 * H), ""
    raise InconclusiveProbe(
        f"{spec.label()}: neither K- nor sqrt(K)-slope stabilizes near K = 0")


def _stabilizes(seq, rel=1e-3):
    a, b = seq[-2], seq[-1]
    if abs(b) < 1e-12:
        return False
    return abs(a - b) <= rel * abs(b)


def _positive_regular_scan(spec, n=32):
    """Min of Mbar over a log-spaced grid in the admissible cone; a single
    negative sample fails the flag."""
    min_mbar = math.inf
    for i in range(n):
        H = 0.1 * (10.0 / 0.1) ** (i / (n - 1.0))
        for j in range(n):
            K = H * H * (1e-4 + (1.0 - 1e-6 - 1e-4) * j / (n - 1.0))
            try:
                ev = eval_mean(spec, H, K)
            except (OutsideElliptic, ValueError, OverflowError):
                continue
            if math.isfinite(ev.Mbar):
                min_mbar = min(min_mbar, ev.Mbar)
    return (min_mbar > 0.0), min_mbar
