"""Immersed-surface specifications, fundamental forms, curvatures, frames.

Every surface kind is reduced to three coordinate expressions (builtins are
generated, Monge jets stay polynomial), so one differentiation pathway (jet
evaluation of the component expressions) produces all derivatives.

Conventions: chart (u, v); N = normal_sign * (a_u ^ a_v)/|a_u ^ a_v|; the sign
defaults to whatever makes H > 0 at the first elliptic reference point, so
means (which need positive principal curvatures) apply on the elliptic region.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import exprjet, means
from .errors import (DegenerateParametrization, DomainError, UmbilicOnCurve,
                     UnsupportedKind)
from .exprjet import Jet

TAU = 2.0 * math.pi


# small tuple-expression builders (components of builtin surfaces)
def _n(x):
    return ("num", float(x))


def _v(name):
    return ("var", name)


def _mul(a, b):
    return ("mul", a, b)


def _add(a, b):
    return ("add", a, b)


def _sub(a, b):
    return ("sub", a, b)


def _div(a, b):
    return ("div", a, b)


def _pow(a, k):
    return ("pow", a, _n(k))


def _call(f, a):
    return ("call", f, a)


def _dot3(a, b):
    return _add(_add(_mul(a[0], b[0]), _mul(a[1], b[1])), _mul(a[2], b[2]))


def _cross3(a, b):
    return (_sub(_mul(a[1], b[2]), _mul(a[2], b[1])),
            _sub(_mul(a[2], b[0]), _mul(a[0], b[2])),
            _sub(_mul(a[0], b[1]), _mul(a[1], b[0])))


class FundamentalForms(NamedTuple):
    E: float
    F: float
    G: float
    e: float
    f: float
    g: float


@dataclass
class CurvatureData:
    H: float
    K: float
    k1: float
    k2: float
    dir_min: tuple  # chart components of the k1 principal direction, or None
    dir_max: tuple

    @property
    def umbilic(self):
        return self.dir_min is None


@dataclass
class ChristoffelAt:
    G111: float
    G211: float
    G112: float
    G212: float
    G122: float
    G222: float


@dataclass
class FrameData:
    T: tuple
    NxT: tuple
    N: tuple
    tau_g: float
    k_g: float
    theta_m: float  # None at umbilic points or when no mean was supplied


@dataclass(frozen=True)
class PerturbationSpec:
    phi: object  # Expr tree or source string in the chart variables
    epsilon: float


class GeometryJets:
    """Jets of the fundamental data at one chart point."""

    __slots__ = ("E", "F", "G", "e", "f", "g", "W", "H", "K",
                 "N", "au", "av", "pos", "order")

    def __init__(self, **kw):
        for k, v in kw.items():
            setattr(self, k, v)

    def forms(self):
        return FundamentalForms(self.E.value, self.F.value, self.G.value,
                                self.e.value, self.f.value, self.g.value)


_BUILTIN_DOMAIN_MARGIN = 0.15


class SurfaceSpec:
    """An immersion given by chart expressions plus domain bookkeeping.

    Treat instances as immutable; evaluation caches are the only mutation.
    """

    def __init__(self, kind, params=None, domain=None, normal_sign=None,
                 periodic=None, exprs=None):
        self.kind = kind
        self.params = dict(params or {})
        self._exprs = exprs
        if exprs is None:
            self._exprs = self._build_exprs()
        self.domain = domain or self._default_domain()
        self.periodic = periodic if periodic is not None else self._default_periodic()
        self._normal_sign = normal_sign
        self._prog = exprjet.compile_multi(self._exprs)
        self.adapted_cycle = None  # set by authored cycle charts

    # -- construction -------------------------------------------------------

    @staticmethod
    def ellipsoid(ax, ay, az, **kw):
        if min(ax, ay, az) <= 0:
            raise UnsupportedKind("ellipsoid semi-axes must be positive")
        return SurfaceSpec("ellipsoid", {"ax": ax, "ay": ay, "az": az}, **kw)

    @staticmethod
    def spheroid(a, c, **kw):
        if min(a, c) <= 0:
            raise UnsupportedKind("spheroid semi-axes must be positive")
        return SurfaceSpec("spheroid", {"a": a, "c": c}, **kw)

    @staticmethod
    def sphere(radius=1.0, **kw):
        return SurfaceSpec.spheroid(radius, radius, **kw)

    @staticmethod
    def torus(R, r, **kw):
        if not 0 < r < R:
            raise UnsupportedKind("torus needs 0 < r < R")
        return SurfaceSpec("torus", {"R": R, "r": r}, **kw)

    @staticmethod
    def graph(z, **kw):
        tree = exprjet.parse(z) if isinstance(z, str) else z
        return SurfaceSpec("graph", {"z": tree}, **kw)

    @staticmethod
    def parametric(x, y, z, **kw):
        comps = tuple(exprjet.parse(c) if isinstance(c, str) else c for c in (x, y, z))
        return SurfaceSpec("parametric", {}, exprs=comps, **kw)

    @staticmethod
    def monge_jet(chart, coeffs, **kw):
        return SurfaceSpec("monge_jet", {"chart": chart, "coeffs": dict(coeffs)}, **kw)

    @staticmethod
    def from_json(obj):
        kind = obj["kind"]
        kw = {}
        if "domain" in obj:
            kw["domain"] = tuple(tuple(float(x) for x in pair) for pair in obj["domain"])
        if "normal_sign" in obj:
            kw["normal_sign"] = int(obj["normal_sign"])
        if "periodic" in obj:
            kw["periodic"] = tuple(bool(b) for b in obj["periodic"])
        if kind == "ellipsoid":
            return SurfaceSpec.ellipsoid(obj["ax"], obj["ay"], obj["az"], **kw)
        if kind == "spheroid":
            return SurfaceSpec.spheroid(obj["a"], obj["c"], **kw)
        if kind == "sphere":
            return SurfaceSpec.sphere(obj.get("radius", 1.0), **kw)
        if kind == "torus":
            return SurfaceSpec.torus(obj["R"], obj["r"], **kw)
        if kind == "graph":
            return SurfaceSpec.graph(obj["z"], **kw)
        if kind == "parametric":
            return SurfaceSpec.parametric(obj["x"], obj["y"], obj["z"], **kw)
        if kind == "monge_jet":
            return SurfaceSpec.monge_jet(obj["chart"], obj["coeffs"], **kw)
        raise UnsupportedKind(f"unknown surface kind {kind!r}")

    def to_json(self):
        out = {"kind": self.kind, "domain": [list(self.domain[0]), list(self.domain[1])],
               "normal_sign": self.normal_sign, "periodic": list(self.periodic)}
        if self.kind in ("ellipsoid", "spheroid", "torus"):
            out.update(self.params)
        elif self.kind == "graph":
            out["z"] = exprjet.to_string(self.params["z"])
        elif self.kind == "parametric":
            out["x"], out["y"], out["z"] = (exprjet.to_string(e) for e in self._exprs)
        elif self.kind == "monge_jet":
            out["chart"] = self.params["chart"]
            out["coeffs"] = self.params["coeffs"]
        return out

    # -- builtin component expressions ---------------------------------------

    def _build_exprs(self):
        kind, p = self.kind, self.params
        u, v = _v("u"), _v("v")
        if kind == "ellipsoid":
            su, cu = _call("sin", u), _call("cos", u)
            sv, cv = _call("sin", v), _call("cos", v)
            return (_mul(_n(p["ax"]), _mul(su, cv)),
                    _mul(_n(p["ay"]), cu),
                    _mul(_n(p["az"]), _mul(su, sv)))
        if kind == "spheroid":
            su, cu = _call("sin", u), _call("cos", u)
            sv, cv = _call("sin", v), _call("cos", v)
            return (_mul(_n(p["a"]), _mul(su, cv)),
                    _mul(_n(p["a"]), _mul(su, sv)),
                    _mul(_n(p["c"]), cu))
        if kind == "torus":
            ring = _add(_n(p["R"]), _mul(_n(p["r"]), _call("cos", u)))
            return (_mul(ring, _call("cos", v)),
                    _mul(ring, _call("sin", v)),
                    _mul(_n(p["r"]), _call("sin", u)))
        if kind == "graph":
            return (u, v, p["z"])
        if kind == "monge_jet":
            return (u, v, _monge_poly_expr(p["chart"], p["coeffs"]))
        raise UnsupportedKind(f"no expressions for kind {self.kind!r}")

    def to_exprs(self):
        return self._exprs

    def _default_domain(self):
        if self.kind in ("ellipsoid", "spheroid"):
            return ((_BUILTIN_DOMAIN_MARGIN, math.pi - _BUILTIN_DOMAIN_MARGIN), (0.0, TAU))
        if self.kind == "torus":
            return ((-math.pi, math.pi), (0.0, TAU))
        if self.kind == "monge_jet":
            return ((-0.5, 0.5), (-0.5, 0.5))
        return ((-1.0, 1.0), (-1.0, 1.0))

    def _default_periodic(self):
        if self.kind in ("ellipsoid", "spheroid"):
            return (False, True)
        if self.kind == "torus":
            return (True, True)
        return (False, False)

    # -- domain handling ------------------------------------------------------

    def wrap(self, u, v):
        (u0, u1), (v0, v1) = self.domain
        if self.periodic[0]:
            u = u0 + (u - u0) % (u1 - u0)
        if self.periodic[1]:
            v = v0 + (v - v0) % (v1 - v0)
        return u, v

    def in_domain(self, u, v, slack=0.0):
        (u0, u1), (v0, v1) = self.domain
        ok_u = self.periodic[0] or (u0 - slack <= u <= u1 + slack)
        ok_v = self.periodic[1] or (v0 - slack <= v <= v1 + slack)
        return ok_u and ok_v

    def center(self):
        (u0, u1), (v0, v1) = self.domain
        return 0.5 * (u0 + u1), 0.5 * (v0 + v1)

    def chart_scale(self):
        (u0, u1), (v0, v1) = self.domain
        return max(u1 - u0, v1 - v0)

    # -- evaluation ------------------------------------------------------------

    def jets(self, u, v, order):
        env = {"u": Jet.variable(0, order, (u, v)), "v": Jet.variable(1, order, (u, v))}
        out = exprjet.run_multi(self._prog, env)
        return tuple(j if isinstance(j, Jet) else Jet.const(j, order, (u, v))
                     for j in out)

    def point(self, u, v):
        return tuple(j.value for j in self.jets(u, v, 0))

    @property
    def normal_sign(self):
        if self._normal_sign is None:
            self._normal_sign = self._auto_normal_sign()
        return self._normal_sign

    def _auto_normal_sign(self):
        candidates = [self.center()]
        (u0, u1), (v0, v1) = self.domain
        for iu in range(5):
            for iv in range(5):
                candidates.append((u0 + (u1 - u0) * (0.1 + 0.2 * iu),
                                   v0 + (v1 - v0) * (0.1 + 0.2 * iv)))
        for (u, v) in candidates:
            try:
                g = geometry(self, u, v, order=0, sign=1)
            except (DegenerateParametrization, DomainError):
                continue
            if g.K.value > 1e-12:
                return 1 if g.H.value > 0 else -1
        return 1

    def scaled(self, t):
        """The surface dilated by factor t (same chart)."""
        exprs = tuple(_mul(_n(t), e) for e in self._exprs)
        out = SurfaceSpec("parametric", {}, domain=self.domain,
                          normal_sign=self._normal_sign, periodic=self.periodic,
                          exprs=exprs)
        return out


def _monge_poly_expr(chart, coeffs):
    """The Monge graph polynomial for the umbilic / parabolic normal forms."""
    c = dict(coeffs)
    terms = []  # (coef, i, j)

    def add(coef, i, j):
        if coef:
            terms.append((float(coef), i, j))

    k = c.get("k", 0.0)
    if chart == "umbilic":
        add(k / 2.0, 2, 0)
        add(k / 2.0, 0, 2)
    elif chart == "parabolic_a":
        add(k / 2.0, 0, 2)
    elif chart == "parabolic_b":
        add(k / 2.0, 2, 0)
    else:
        raise UnsupportedKind(f"unknown monge chart {chart!r}")
    add(c.get("a", 0.0) / 6.0, 3, 0)
    add(c.get("b", 0.0) / 2.0, 1, 2)
    add(c.get("d", 0.0) / 2.0, 2, 1)
    add(c.get("c", 0.0) / 6.0, 0, 3)
    add(c.get("A", 0.0) / 24.0, 4, 0)
    add(c.get("B", 0.0) / 6.0, 3, 1)
    add(c.get("C", 0.0) / 4.0, 2, 2)
    add(c.get("D", 0.0) / 6.0, 1, 3)
    add(c.get("E", 0.0) / 24.0, 0, 4)
    for ij, val in c.get("r", {}).items():
        i, j = int(ij[0]), int(ij[1])
        add(val / (math.factorial(i) * math.factorial(j)), i, j)
    for ij, val in c.get("extra", {}).items():
        add(val, int(ij[0]), int(ij[1]))

    expr = None
    for coef, i, j in terms:
        mono = _n(coef)
        for _ in range(i):
            mono = _mul(mono, _v("u"))
        for _ in range(j):
            mono = _mul(mono, _v("v"))
        expr = mono if expr is None else _add(expr, mono)
    return expr if expr is not None else _n(0.0)


# ---------------------------------------------------------------------------
# geometry at a point
# ---------------------------------------------------------------------------

def geometry(s, u, v, order=1, sign=None):
    """Jets (to the given order) of E,F,G,e,f,g,W,H,K and the unit normal.

    W = EG - F^2 is computed as |a_u ^ a_v|^2 (Lagrange identity), sharing one
    inverse square root with the normal.
    """
    jx, jy, jz = s.jets(u, v, order + 2)
    au_full = (jx.d_dx(), jy.d_dx(), jz.d_dx())
    av_full = (jx.d_dy(), jy.d_dy(), jz.d_dy())
    # second derivatives keep one extra order; first-derivative products are
    # truncated to the requested order before multiplying (big cost saver)
    auu = (au_full[0].d_dx(), au_full[1].d_dx(), au_full[2].d_dx())
    auv = (au_full[0].d_dy(), au_full[1].d_dy(), au_full[2].d_dy())
    avv = (av_full[0].d_dy(), av_full[1].d_dy(), av_full[2].d_dy())
    au = tuple(j.truncate(order) for j in au_full)
    av = tuple(j.truncate(order) for j in av_full)
    E = au[0] * au[0] + au[1] * au[1] + au[2] * au[2]
    F = au[0] * av[0] + au[1] * av[1] + au[2] * av[2]
    G = av[0] * av[0] + av[1] * av[1] + av[2] * av[2]
    cx = au[1] * av[2] - au[2] * av[1]
    cy = au[2] * av[0] - au[0] * av[2]
    cz = au[0] * av[1] - au[1] * av[0]
    W = cx * cx + cy * cy + cz * cz
    if W.value <= 1e-14:
        raise DegenerateParametrization(f"EG - F^2 = {W.value:g} at ({u:g}, {v:g})")
    inv_norm = W.pow(-0.5)
    sg = float(s.normal_sign if sign is None else sign)
    if sg < 0:
        inv_norm = -inv_norm
    N = (cx * inv_norm, cy * inv_norm, cz * inv_norm)
    e = N[0] * auu[0] + N[1] * auu[1] + N[2] * auu[2]
    f = N[0] * auv[0] + N[1] * auv[1] + N[2] * auv[2]
    g = N[0] * avv[0] + N[1] * avv[1] + N[2] * avv[2]
    invW = inv_norm * inv_norm
    H = (E * g + e * G - f * F * 2.0) * invW * 0.5
    K = (e * g - f * f) * invW
    return GeometryJets(E=E, F=F, G=G, e=e, f=f, g=g, W=W, H=H, K=K,
                        N=N, au=au, av=av, pos=(u, v), order=order)


def forms_at(s, u, v):
    return geometry(s, u, v, order=0).forms()


def curvatures_at(s, u, v, umbilic_tol=1e-12):
    geo = geometry(s, u, v, order=0)
    H, K = geo.H.value, geo.K.value
    disc = max(H * H - K, 0.0)
    sroot = math.sqrt(disc)
    k2 = H + sroot
    k1 = H - sroot
    scale2 = max(H * H, abs(K), 1e-300)
    if disc <= umbilic_tol * scale2:
        return CurvatureData(H, K, k1, k2, None, None)
    I = np.array([[geo.E.value, geo.F.value], [geo.F.value, geo.G.value]])
    II = np.array([[geo.e.value, geo.f.value], [geo.f.value, geo.g.value]])
    Smat = np.linalg.solve(I, II)
    evals, evecs = np.linalg.eig(Smat)
    idx = np.argsort(evals.real)
    d1 = tuple(evecs[:, idx[0]].real)
    d2 = tuple(evecs[:, idx[1]].real)
    return CurvatureData(H, K, k1, k2, d1, d2)


def christoffel_at(s, u, v):
    """The six Christoffel symbols from the metric and its first derivatives."""
    geo = geometry(s, u, v, order=1)
    E, F, G = geo.E, geo.F, geo.G
    Eu, Ev = E.dx, E.dy
    Fu, Fv = F.dx, F.dy
    Gu, Gv = G.dx, G.dy
    E0, F0, G0 = E.value, F.value, G.value
    W2 = 2.0 * (E0 * G0 - F0 * F0)
    return ChristoffelAt(
        G111=(G0 * Eu - 2 * F0 * Fu + F0 * Ev) / W2,
        G211=(2 * E0 * Fu - E0 * Ev - F0 * Eu) / W2,
        G112=(G0 * Ev - F0 * Gu) / W2,
        G212=(E0 * Gu - F0 * Ev) / W2,
        G122=(2 * G0 * Fv - G0 * Gu - F0 * Gv) / W2,
        G222=(E0 * Gv - 2 * F0 * Fv + F0 * Gu) / W2,
    )


# ---------------------------------------------------------------------------
# Darboux-frame data along curves
# ---------------------------------------------------------------------------

def _unit3(vec):
    n = math.sqrt(vec[0] ** 2 + vec[1] ** 2 + vec[2] ** 2)
    return (vec[0] / n, vec[1] / n, vec[2] / n)


def _vec_value(jets):
    return tuple(j.value for j in jets)


def frame_at(s, mean, u, v, du, dv, d2=None):
    """Darboux frame and invariants for the direction (du, dv) at (u, v).

    tau_g = -<N', N^T> and k_g = <T', N^T> per the frame equations
    T' = k_g N^T + k_n N, N' = -k_n T - tau_g N^T.

    If ``d2`` (chart second derivatives (u'', v'') w.r.t. arc length) is None
    and ``mean`` is given, the direction field of the mean's equation is
    differentiated exactly through jets; otherwise d2 is taken as (0, 0).
    """
    geo = geometry(s, u, v, order=1)
    E0, F0, G0 = geo.E.value, geo.F.value, geo.G.value
    speed = math.sqrt(E0 * du * du + 2 * F0 * du * dv + G0 * dv * dv)
    du, dv = du / speed, dv / speed  # unit w.r.t. the first form

    T_j = tuple(geo.au[i] * du + geo.av[i] * dv for i in range(3))
    T = _vec_value(T_j)
    Nv = _vec_value(geo.N)
    NxT = (Nv[1] * T[2] - Nv[2] * T[1],
           Nv[2] * T[0] - Nv[0] * T[2],
           Nv[0] * T[1] - Nv[1] * T[0])

    # N' along the curve (the normal is a field; derivative is exact)
    Np = tuple(geo.N[i].dx * du + geo.N[i].dy * dv for i in range(3))
    tau_g = -sum(Np[i] * NxT[i] for i in range(3))

    theta_m = None
    if mean is not None:
        cd = curvatures_at(s, u, v)
        if cd.umbilic:
            raise UmbilicOnCurve(f"umbilic at ({u:g}, {v:g})")
        if d2 is None:
            d2 = _mline_second_derivatives(s, mean, geo, du, dv)
        d1_3d = _unit3(_vec_value(tuple(geo.au[i] * cd.dir_min[0]
                                        + geo.av[i] * cd.dir_min[1] for i in range(3))))
        d2_3d = (Nv[1] * d1_3d[2] - Nv[2] * d1_3d[1],
                 Nv[2] * d1_3d[0] - Nv[0] * d1_3d[2],
                 Nv[0] * d1_3d[1] - Nv[1] * d1_3d[0])
        ct = sum(T[i] * d1_3d[i] for i in range(3))
        st = sum(T[i] * d2_3d[i] for i in range(3))
        theta_m = math.atan2(st, ct)
        if theta_m > math.pi / 2:
            theta_m -= math.pi
        elif theta_m <= -math.pi / 2:
            theta_m += math.pi
    if d2 is None:
        d2 = (0.0, 0.0)

    # T' = sum second-derivative terms + a_u u'' + a_v v''
    auu = (geo.au[0].dx, geo.au[1].dx, geo.au[2].dx)
    auv = (geo.au[0].dy, geo.au[1].dy, geo.au[2].dy)
    avv = (geo.av[0].dy, geo.av[1].dy, geo.av[2].dy)
    au0, av0 = _vec_value(geo.au), _vec_value(geo.av)
    Tp = tuple(auu[i] * du * du + 2 * auv[i] * du * dv + avv[i] * dv * dv
               + au0[i] * d2[0] + av0[i] * d2[1] for i in range(3))
    k_g = sum(Tp[i] * NxT[i] for i in range(3))
    return FrameData(T=T, NxT=NxT, N=Nv, tau_g=tau_g, k_g=k_g, theta_m=theta_m)


def _mline_second_derivatives(s, mean, geo, du, dv):
    """(u'', v'') of the arc-length parametrized mean-curvature line through
    the point with unit direction (du, dv), via jets of the root branch."""
    Mj = means.mean_jet(mean, geo.H, geo.K)
    L = geo.g - Mj * geo.G
    Mc = (geo.f - Mj * geo.F) * 2.0
    Nc = geo.e - Mj * geo.E
    # slope jet: root of L w^2 + Mc w + Nc with w = dv/du (or du/dv swapped)
    swap = abs(du) < abs(dv)
    if swap:
        L, Nc = Nc, L
        w0 = du / dv
    else:
        w0 = dv / du
    disc = Mc * Mc - L * Nc * 4.0
    root = disc.sqrt()
    cand_plus = (-Mc + root) / (L * 2.0)
    cand_minus = (-Mc - root) / (L * 2.0)
    wj = cand_plus if abs(cand_plus.value - w0) <= abs(cand_minus.value - w0) else cand_minus
    # velocity (1, w)/speed in chart, then differentiate along itself
    E, F, G = geo.E, geo.F, geo.G
    if swap:
        num_u, num_v = wj, Jet.const(1.0, wj.order, wj.base)
    else:
        num_u, num_v = Jet.const(1.0, wj.order, wj.base), wj
    speed = (E * num_u * num_u + F * num_u * num_v * 2.0 + G * num_v * num_v).sqrt()
    up = num_u / speed
    vp = num_v / speed
    orient = 1.0 if (up.value * du + vp.value * dv) > 0 else -1.0
    up, vp = up * orient, vp * orient
    upp = up.dx * up.value + up.dy * vp.value
    vpp = vp.dx * up.value + vp.dy * vp.value
    return (upp, vpp)


def geodesic_data(s, samples, mean=None, assume_mline=None):
    """Frame data along a sampled curve.

    ``samples`` is a sequence of (u, v, du, dv).  With a mean supplied the
    curve is assumed to consist of mean-curvature-line arcs and the geodesic
    curvature is computed exactly through the direction-field jets; otherwise
    the chart second derivatives are finite-differenced from the samples.
    """
    use_mline = mean is not None if assume_mline is None else assume_mline
    out = []
    if use_mline:
        for (u, v, du, dv) in samples:
            out.append(frame_at(s, mean, u, v, du, dv))
        return out
    # finite-difference second derivatives of the unit chart velocity
    pts = [(float(u), float(v)) for (u, v, _x, _y) in samples]
    vels = []
    arcs = [0.0]
    for i, (u, v, du, dv) in enumerate(samples):
        geo = geometry(s, u, v, order=0)
        spd = math.sqrt(geo.E.value * du * du + 2 * geo.F.value * du * dv
                        + geo.G.value * dv * dv)
        vels.append((du / spd, dv / spd))
        if i:
            dx = pts[i][0] - pts[i - 1][0]
            dy = pts[i][1] - pts[i - 1][1]
            arcs.append(arcs[-1] + math.hypot(dx, dy))
    n = len(samples)
    for i, (u, v, du, dv) in enumerate(samples):
        if 0 < i < n - 1 and arcs[i + 1] > arcs[i - 1]:
            ds = arcs[i + 1] - arcs[i - 1]
            d2 = ((vels[i + 1][0] - vels[i - 1][0]) / ds,
                  (vels[i + 1][1] - vels[i - 1][1]) / ds)
        else:
            d2 = (0.0, 0.0)
        out.append(frame_at(s, mean, u, v, du, dv, d2=d2))
    return out


# ---------------------------------------------------------------------------
# normal perturbation
# ---------------------------------------------------------------------------

def perturb_normal(s, pert):
    """The immersion alpha + epsilon * phi * N as a new parametric spec.

    The unit normal is composed symbolically from the component expressions,
    so the perturbed surface keeps exact jets of every order.
    """
    phi = exprjet.parse(pert.phi) if isinstance(pert.phi, str) else pert.phi
    ex = s.to_exprs()
    d_u = tuple(exprjet.differentiate(c, "u") for c in ex)
    d_v = tuple(exprjet.differentiate(c, "v") for c in ex)
    cx, cy, cz = _cross3(d_u, d_v)
    norm = _call("sqrt", _dot3((cx, cy, cz), (cx, cy, cz)))
    scale = _div(_n(pert.epsilon * s.normal_sign), norm)
    bump = _mul(scale, phi)
    new = tuple(_add(ex[i], _mul(bump, c)) for i, c in enumerate((cx, cy, cz)))
    out = SurfaceSpec("parametric", {}, domain=s.domain,
                      normal_sign=s.normal_sign, periodic=s.periodic, exprs=new)
    return out
