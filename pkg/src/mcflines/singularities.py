"""Umbilic points, the parabolic curve, and tangential singularities.

Umbilics (k1 = k2) are classified into the Darbouxian types M1/M2/M3 from the
rotated cubic normal form z = k/2 (x^2+y^2) + a/6 x^3 + b/2 x y^2 + c/6 y^3:

    Delta = 4 c^2 (2a-b)^2 - [3 c^2 + (a-5b)^2][3 (a-5b)(a-b) + c^2]
    M1: Delta > 0;  M2: Delta < 0 and a/b > 1;  M3: a/b < 1,

under the transversality condition T = k b (b - a) != 0.  The algebraic
verdict is always cross-checked dynamically: equilibria of the lifted
direction field on the projective line over the umbilic, with their
eigenvalues (M1 = one saddle, M2 = two saddles + one node, M3 = three
saddles).

Parabolic points (K = 0) aligned so the kernel direction is the x-axis give
the tangential normal forms; folded saddle/node/focus verdicts come from the
sign data

    1-regular case a:  sigma = A k - 3 d^2,  delta = d^2 (k m0 - 25) + 8 A k
    1-regular case b:  sigma = (c d - 2 d^2 + k C) k c m0^2,
                       delta = c^2 (k m0 - 1) + 8 k C + 8 d (c - 2 d)
    1/2-regular a:     sigma = d k (A k - 3 d^2) m0^2   (saddle/node only)
    1/2-regular b:     sigma = (c d - 2 d^2 + k C) k c m0^2

with the chart normalized so d >= 0 (case a) / c >= 0 (case b); closed-form
eigenvalues are verified against the numerically linearized lift.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import means as means_mod
from .errors import (ChartAlignmentFailed, DegenerateSingularity, McfError,
                     MeanNotRegularAtParabolic, NonDarbouxian,
                     NonIsolatedUmbilics, RotationNotFound,
                     SingularParabolicPoint)
from .exprjet import Jet, compose_bivariate, invert_map_jet
from .field import EquationField, LiftedPoint, TraceConfig, trace_line
from .means import regularity_class
from .surface import SurfaceSpec, curvatures_at, geometry

DEG4 = 4


# ---------------------------------------------------------------------------
# report types
# ---------------------------------------------------------------------------

@dataclass
class UmbilicJet:
    point: tuple
    k: float
    a: float
    b: float
    c: float
    rotation: float
    kill_residual: float


@dataclass
class Equilibrium:
    chart: str
    w: float
    eigenvalues: tuple  # the two nonzero eigenvalues of the lift Jacobian
    kind: str           # "saddle" | "node" | "focus"


@dataclass
class UmbilicReport:
    point: tuple
    type: str                 # "M1" | "M2" | "M3"
    Delta_m: float
    T_m: float
    conditions: list
    equilibria: list
    ambiguous: bool = False
    jet: UmbilicJet = None


@dataclass
class ParabolicJet:
    point: tuple
    case: str  # "a" | "b"
    k: float
    a: float
    b: float
    c: float
    d: float
    A: float
    B: float
    C: float
    D: float
    E4: float
    r: dict
    m0: float
    m1: float
    m2: float
    frame_note: str = ""


@dataclass
class ParabolicReport:
    point: tuple
    kind: str        # "cuspidal" | "folded_saddle" | "folded_node" | "folded_focus" | "degenerate"
    sigma: float
    delta: float
    lambda1: complex
    lambda2: complex
    regularity: str  # e.g. "1-regular case_a"
    numeric_eigenvalues: tuple = None
    center_cubic_sign: int = None
    jet: ParabolicJet = None


@dataclass
class ParabolicCurve:
    points: list        # (u, v) samples with |K| < corrector tolerance
    grad_norms: list    # |dK| margin per sample
    closed: bool
    tangency_markers: list = None

    def max_abs_K(self, s):
        return max(abs(geometry(s, u, v, order=0).K.value) for (u, v) in self.points)


@dataclass
class TangencyScan:
    points: list          # isolated tangential points (u, v)
    degenerate: bool      # tangency function vanished along the whole curve
    values: list          # sampled tangency values (diagnostics)


# ---------------------------------------------------------------------------
# umbilic location
# ---------------------------------------------------------------------------

def find_umbilics(s, grid=96, merge_tol=1e-6):
    """Grid scan of H^2 - K followed by damped Newton on its gradient."""
    (u0, u1), (v0, v1) = s.domain
    best = []
    vals = {}
    n_flat = 0
    total = 0
    for i in range(grid):
        for j in range(grid):
            u = u0 + (u1 - u0) * (i + 0.5) / grid
            v = v0 + (v1 - v0) * (j + 0.5) / grid
            try:
                geo = geometry(s, u, v, order=0)
            except McfError:
                continue
            H, K = geo.H.value, geo.K.value
            g = H * H - K
            scale = max(H * H, abs(K), 1e-300)
            vals[(i, j)] = g / scale
            total += 1
            if g / scale < 1e-12:
                n_flat += 1
    if total and n_flat > 0.2 * total:
        raise NonIsolatedUmbilics("H^2 - K vanishes on an open set (sphere-like)")
    candidates = sorted(vals, key=vals.get)[:24]
    found = []
    for (i, j) in candidates:
        if vals[(i, j)] > 1e-2:
            continue
        u = u0 + (u1 - u0) * (i + 0.5) / grid
        v = v0 + (v1 - v0) * (j + 0.5) / grid
        sol = _newton_umbilic(s, u, v)
        if sol is None:
            continue
        su, sv = s.wrap(*sol)
        if not s.in_domain(su, sv, slack=1e-9):
            continue
        if all(_chart_dist(s, (su, sv), q) > merge_tol for q in found):
            found.append((su, sv))
    found.sort()
    return found


def _chart_dist(s, p, q):
    du = p[0] - q[0]
    dv = p[1] - q[1]
    if s.periodic[0]:
        per = s.domain[0][1] - s.domain[0][0]
        du = (du + per / 2) % per - per / 2
    if s.periodic[1]:
        per = s.domain[1][1] - s.domain[1][0]
        dv = (dv + per / 2) % per - per / 2
    return math.hypot(du, dv)


def _newton_umbilic(s, u, v, iters=40):
    """Damped Newton on grad(H^2 - K) = 0."""
    def val_grad_hess(uu, vv):
        geo = geometry(s, uu, vv, order=2)
        g = geo.H * geo.H - geo.K
        return (g.value, (g.dx, g.dy),
                ((2 * g.coeff(2, 0), g.coeff(1, 1)),
                 (g.coeff(1, 1), 2 * g.coeff(0, 2))))

    try:
        gval, grad, hess = val_grad_hess(u, v)
    except McfError:
        return None
    for _ in range(iters):
        det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0]
        if abs(det) < 1e-300:
            return None
        du = -(hess[1][1] * grad[0] - hess[0][1] * grad[1]) / det
        dv = -(-hess[1][0] * grad[0] + hess[0][0] * grad[1]) / det
        lam = 1.0
        for _ in range(20):
            try:
                g2, grad2, hess2 = val_grad_hess(u + lam * du, v + lam * dv)
            except McfError:
                lam *= 0.5
                continue
            if g2 <= gval or math.hypot(*grad2) < math.hypot(*grad):
                break
            lam *= 0.5
        u, v = u + lam * du, v + lam * dv
        gval, grad, hess = g2, grad2, hess2
        if math.hypot(*grad) < 1e-13 and gval < 1e-11:
            scale = abs(gval) + abs(hess[0][0]) + abs(hess[1][1])
            if gval <= 1e-10 * max(scale, 1.0):
                return (u, v)
    return (u, v) if (math.hypot(*grad) < 1e-10 and gval < 1e-10) else None


# ---------------------------------------------------------------------------
# Monge charts via jet inversion
# ---------------------------------------------------------------------------

def _monge_jet(s, p, xdir3, order=5):
    """The graph function z(x, y) of the surface over its tangent plane at p,
    with the x-axis along ``xdir3`` (a unit tangent vector)."""
    u, v = p
    jx, jy, jz = s.jets(u, v, order)
    origin = (jx.value, jy.value, jz.value)
    geo = geometry(s, u, v, order=0)
    N = tuple(c.value for c in geo.N)
    X = xdir3
    Y = (N[1] * X[2] - N[2] * X[1], N[2] * X[0] - N[0] * X[2],
         N[0] * X[1] - N[1] * X[0])
    comps = (jx - origin[0], jy - origin[1], jz - origin[2])
    xi = comps[0] * X[0] + comps[1] * X[1] + comps[2] * X[2]
    eta = comps[0] * Y[0] + comps[1] * Y[1] + comps[2] * Y[2]
    zeta = comps[0] * N[0] + comps[1] * N[1] + comps[2] * N[2]
    U, V = invert_map_jet(xi, eta)
    zjet = compose_bivariate(zeta, U, V)
    return zjet


def _tangent_unit(s, p, chart_dir):
    geo = geometry(s, p[0], p[1], order=0)
    vec = tuple(geo.au[i].value * chart_dir[0] + geo.av[i].value * chart_dir[1]
                for i in range(3))
    n = math.sqrt(sum(c * c for c in vec))
    return tuple(c / n for c in vec)


def umbilic_jet(s, p, pick="max_transversality"):
    """Rotated Monge normal form at an isolated umbilic.

    Among the rotation angles killing the x^2 y cubic coefficient the one
    maximizing |b (b - a)| is chosen (numerical robustness); the classification
    is invariant across admissible choices.
    """
    cd = curvatures_at(s, p[0], p[1])
    geo = geometry(s, p[0], p[1], order=0)
    E0, F0 = geo.E.value, geo.F.value
    base = _tangent_unit(s, p, (1.0, 0.0))
    zjet = _monge_jet(s, p, base)
    # cubic coefficients in the unrotated frame
    c30 = zjet.coeff(3, 0)
    c21 = zjet.coeff(2, 1)
    c12 = zjet.coeff(1, 2)
    c03 = zjet.coeff(0, 3)
    if max(abs(c30), abs(c21), abs(c12), abs(c03)) < 1e-14:
        raise RotationNotFound("cubic part of the umbilic jet vanishes")

    def c21_of(theta):
        ct, st = math.cos(theta), math.sin(theta)
        # coefficient of x^2 y after rotating coordinates by theta
        return (3 * c30 * ct * ct * (-st) + c21 * (ct ** 3 - 2 * ct * st * st)
                + c12 * (2 * ct * ct * st - st ** 3) + 3 * c03 * st * st * ct)

    # scan for roots of the trig cubic on [0, pi)
    roots = []
    nscan = 720
    prev = c21_of(0.0)
    for i in range(1, nscan + 1):
        th = math.pi * i / nscan
        cur = c21_of(th)
        if prev == 0.0:
            roots.append(math.pi * (i - 1) / nscan)
        elif prev * cur < 0:
            lo, hi = math.pi * (i - 1) / nscan, th
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if c21_of(lo) * c21_of(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            roots.append(0.5 * (lo + hi))
        prev = cur
    if not roots:
        raise RotationNotFound("no rotation kills the x^2 y coefficient")

    def coeffs_at(theta):
        ct, st = math.cos(theta), math.sin(theta)
        rot_x = Jet.variable(0, zjet.order) * ct - Jet.variable(1, zjet.order) * st
        rot_y = Jet.variable(0, zjet.order) * st + Jet.variable(1, zjet.order) * ct
        return compose_bivariate(zjet, rot_x, rot_y)

    best = None
    for th in roots:
        zr = coeffs_at(th)
        a = 6 * zr.coeff(3, 0)
        b = 2 * zr.coeff(1, 2)
        c = 6 * zr.coeff(0, 3)
        resid = abs(zr.coeff(2, 1))
        score = abs(b * (b - a))
        if best is None or score > best[0]:
            best = (score, th, a, b, c, resid)
    _score, theta, a, b, c, resid = best
    return UmbilicJet(point=p, k=cd.H, a=a, b=b, c=c, rotation=theta,
                      kill_residual=resid)


# ---------------------------------------------------------------------------
# umbilic classification
# ---------------------------------------------------------------------------

def delta_m(a, b, c):
    return (4 * c * c * (2 * a - b) ** 2
            - (3 * c * c + (a - 5 * b) ** 2) * (3 * (a - 5 * b) * (a - b) + c * c))


def _classify_eig_pair(l1, l2, tol=1e-9):
    if isinstance(l1, complex) and abs(l1.imag) > tol * max(1.0, abs(l1)):
        return "focus"
    r1 = l1.real if isinstance(l1, complex) else l1
    r2 = l2.real if isinstance(l2, complex) else l2
    if r1 * r2 < 0:
        return "saddle"
    return "node"


def umbilic_model_equilibria(k, a, b, c, mean=None):
    """Equilibria + eigenvalues of the lifted field over the umbilic of the
    model surface z = k/2(x^2+y^2) + a/6 x^3 + b/2 x y^2 + c/6 y^3.

    This is the independent dynamic route: the equation is built through the
    full jet pipeline for an actual mean (arithmetic by default; the type is
    mean-independent) and the 3D Jacobian of the lift is diagonalized at each
    projective equilibrium, discarding the structural zero eigenvalue.
    """
    mean = mean or means_mod.MeanSpec.arithmetic()
    surf = SurfaceSpec.monge_jet("umbilic", {"k": k, "a": a, "b": b, "c": c})
    fld = EquationField(surf, mean, mode="quad")

    def wprime(chart, w):
        pt = LiftedPoint(0.0, 0.0, w, chart)
        vel, _geo, _h = fld.velocity(pt)
        return vel[2]

    out = []
    for chart in ("p", "q"):
        # scan w in [-1, 1]: together the two charts cover the circle
        n = 400
        ws = [-1.0 + 2.0 * i / n for i in range(n + 1)]
        vals = [wprime(chart, w) for w in ws]
        for i in range(n):
            if vals[i] == 0.0 or vals[i] * vals[i + 1] < 0:
                lo, hi = ws[i], ws[i + 1]
                for _ in range(80):
                    mid = 0.5 * (lo + hi)
                    if wprime(chart, lo) * wprime(chart, mid) <= 0:
                        hi = mid
                    else:
                        lo = mid
                w_star = 0.5 * (lo + hi)
                # skip the chart-duplicated equilibria at |w| = 1
                if abs(abs(w_star) - 1.0) < 1e-7 and chart == "q":
                    continue
                out.append((chart, w_star))
    # deduplicate |w| = 1 equilibria found in both charts
    uniq = []
    for chart, w in out:
        dup = any(ch2 != chart and abs(abs(w) - 1.0) < 1e-7
                  and abs(abs(w2) - 1.0) < 1e-7 and abs(w - 1.0 / w2) < 1e-6
                  for ch2, w2 in uniq)
        if not dup:
            uniq.append((chart, w))

    eqs = []
    for chart, w in uniq:
        jac = _lift_jacobian(fld, LiftedPoint(0.0, 0.0, w, chart))
        eigs = np.linalg.eigvals(jac)
        eigs = sorted(eigs, key=lambda z: abs(z))
        nonzero = eigs[1:]
        kind = _classify_eig_pair(nonzero[0], nonzero[1])
        eqs.append(Equilibrium(chart, w, (complex(nonzero[0]), complex(nonzero[1])), kind))
    return eqs


def _lift_jacobian(fld, pt, h=1e-6):
    """Jacobian of the 3D lift field at a lifted point, by central
    differences (the independent check; exact jets verify elsewhere)."""
    def vel(x, y, w):
        v, _geo, _h = fld.velocity(LiftedPoint(x, y, w, pt.chart))
        return v

    J = np.zeros((3, 3))
    for col, dq in enumerate(((h, 0, 0), (0, h, 0), (0, 0, h))):
        vp = vel(pt.u + dq[0], pt.v + dq[1], pt.w + dq[2])
        vm = vel(pt.u - dq[0], pt.v - dq[1], pt.w - dq[2])
        for row in range(3):
            J[row, col] = (vp[row] - vm[row]) / (2 * h)
    return J


def classify_umbilic(j, cross_check=True):
    """Darbouxian type from (k, a, b, c), with the dynamic cross-check."""
    T = j.k * j.b * (j.b - j.a)
    if abs(T) < 1e-10 * max(1.0, abs(j.k) * (j.a ** 2 + j.b ** 2 + j.c ** 2)):
        raise NonDarbouxian(f"T = k b (b - a) = {T:g}")
    D = delta_m(j.a, j.b, j.c)
    conds = []
    if D > 0:
        conds.append("M1")
    if D < 0 and j.b != 0 and j.a / j.b > 1:
        conds.append("M2")
    if j.b != 0 and j.a / j.b < 1:
        conds.append("M3")
    eqs = []
    verdict = conds[0] if conds else None
    ambiguous = len(conds) != 1
    if cross_check or ambiguous:
        eqs = umbilic_model_equilibria(j.k, j.a, j.b, j.c)
        dyn = _dynamic_type(eqs)
        if ambiguous:
            verdict = dyn if dyn in (conds or [dyn]) else dyn
        elif dyn != verdict:
            # never silently trust an ambiguous algebraic test
            ambiguous = True
            verdict = dyn
    if verdict is None:
        raise NonDarbouxian("no M-condition holds and no dynamic verdict")
    return UmbilicReport(point=j.point, type=verdict, Delta_m=D, T_m=T,
                         conditions=conds, equilibria=eqs, ambiguous=ambiguous,
                         jet=j)


def _dynamic_type(eqs):
    kinds = sorted(e.kind for e in eqs)
    if len(eqs) == 1 and kinds == ["saddle"]:
        return "M1"
    if len(eqs) == 3 and kinds == ["node", "saddle", "saddle"]:
        return "M2"
    if len(eqs) == 3 and kinds == ["saddle", "saddle", "saddle"]:
        return "M3"
    return f"unrecognized({len(eqs)}:{','.join(kinds)})"


# ---------------------------------------------------------------------------
# parabolic curve
# ---------------------------------------------------------------------------

def trace_parabolic(s, grid=64, step=None, corrector_tol=1e-10, margin_tol=1e-8):
    """Predictor-corrector continuation of {K = 0} from grid sign changes."""
    (u0, u1), (v0, v1) = s.domain
    step = step or (max(u1 - u0, v1 - v0) / 200.0)

    def K_and_grad(u, v):
        geo = geometry(s, u, v, order=1)
        return geo.K.value, (geo.K.dx, geo.K.dy)

    # seeds from sign changes along grid edges
    Kgrid = {}
    for i in range(grid + 1):
        for jj in range(grid + 1):
            u = u0 + (u1 - u0) * i / grid
            v = v0 + (v1 - v0) * jj / grid
            try:
                Kgrid[(i, jj)] = geometry(s, u, v, order=0).K.value
            except McfError:
                Kgrid[(i, jj)] = math.nan
    seeds = []
    for (i, jj), Kv in Kgrid.items():
        for (di, dj) in ((1, 0), (0, 1)):
            other = Kgrid.get((i + di, jj + dj))
            if other is None or math.isnan(Kv) or math.isnan(other):
                continue
            if Kv == 0.0 or Kv * other < 0:
                t = Kv / (Kv - other) if Kv != other else 0.0
                seeds.append((u0 + (u1 - u0) * (i + t * di) / grid,
                              v0 + (v1 - v0) * (jj + t * dj) / grid))
    curves = []
    used = []

    def corrector(u, v):
        for _ in range(30):
            Kv, g = K_and_grad(u, v)
            gn2 = g[0] ** 2 + g[1] ** 2
            if gn2 < 1e-16:
                raise SingularParabolicPoint(f"|dK| ~ 0 near ({u:g}, {v:g})")
            if abs(Kv) < corrector_tol:
                return u, v, math.sqrt(gn2)
            u -= Kv * g[0] / gn2
            v -= Kv * g[1] / gn2
        raise SingularParabolicPoint(f"corrector stalled near ({u:g}, {v:g})")

    for seed in seeds:
        if any(_chart_dist(s, seed, q) < 2.0 * step for c in curves for q in c.points):
            continue
        try:
            cu, cv, gn = corrector(*seed)
        except (SingularParabolicPoint, McfError):
            continue
        if gn < margin_tol:
            raise SingularParabolicPoint(
                f"|dK| = {gn:g} below margin at ({cu:g}, {cv:g})")
        pts = [(cu, cv)]
        margins = [gn]
        closed = False
        for direction in (1.0, -1.0):
            u, v = pts[-1] if direction > 0 else pts[0]
            prev_t = None
            for _ in range(4000):
                Kv, g = K_and_grad(u, v)
                gn = math.hypot(*g)
                t = (-g[1] / gn * direction, g[0] / gn * direction)
                if prev_t is not None and t[0] * prev_t[0] + t[1] * prev_t[1] < 0:
                    t = (-t[0], -t[1])
                prev_t = t
                un, vn = u + step * t[0], v + step * t[1]
                try:
                    un, vn, gnn = corrector(un, vn)
                except (SingularParabolicPoint, McfError):
                    break
                if gnn < margin_tol:
                    raise SingularParabolicPoint(
                        f"|dK| = {gnn:g} below margin on curve")
                un, vn = s.wrap(un, vn)
                if not s.in_domain(un, vn, slack=1e-9):
                    break
                if len(pts) > 3 and _chart_dist(s, (un, vn), pts[0]) < 0.8 * step \
                        and direction > 0:
                    closed = True
                    break
                if direction > 0:
                    pts.append((un, vn))
                    margins.append(gnn)
                else:
                    pts.insert(0, (un, vn))
                    margins.insert(0, gnn)
                u, v = un, vn
            if closed:
                break
        curves.append(ParabolicCurve(points=pts, grad_norms=margins, closed=closed))
    return curves


# ---------------------------------------------------------------------------
# tangential singularities
# ---------------------------------------------------------------------------

def _limit_direction(s, u, v, case):
    """Chart direction the mean-curvature field attains on K = 0: the null
    direction of II (case a, boundary value 0) or the other principal
    direction (case b, boundary value 2H)."""
    geo = geometry(s, u, v, order=0)
    e0, f0, g0 = geo.e.value, geo.f.value, geo.g.value
    # null direction of the (rank-1) second form
    if abs(e0) >= abs(g0):
        null_dir = (f0, -e0)
    else:
        null_dir = (g0, -f0)
    if case == "a":
        d = null_dir
    else:
        # I-orthogonal complement of the null direction
        E0, F0, G0 = geo.E.value, geo.F.value, geo.G.value
        x, y = null_dir
        d = (-(F0 * x + G0 * y), E0 * x + F0 * y)
    n = math.hypot(*d)
    return (d[0] / n, d[1] / n)


def find_tangential(s, curve, mean, tol=1e-10):
    """Zeros of <curve tangent ^ limit direction> along a parabolic curve."""
    one, half, m0, boundary = regularity_class(mean)
    if one == "none" and half == "none":
        raise MeanNotRegularAtParabolic(
            f"{mean.label()} has no 1- or 1/2-regular boundary structure")
    case = (one if one != "none" else half)[-1]  # "a" | "b"
    pts = curve.points
    n = len(pts)
    if n < 3:
        return TangencyScan([], False, [])

    def tangency(idx):
        u, v = pts[idx]
        nxt = pts[(idx + 1) % n]
        prv = pts[idx - 1]
        tu, tv = nxt[0] - prv[0], nxt[1] - prv[1]
        if s.periodic[0]:
            per = s.domain[0][1] - s.domain[0][0]
            tu = (tu + per / 2) % per - per / 2
        if s.periodic[1]:
            per = s.domain[1][1] - s.domain[1][0]
            tv = (tv + per / 2) % per - per / 2
        tn = math.hypot(tu, tv)
        d = _limit_direction(s, u, v, case)
        return (tu * d[1] - tv * d[0]) / tn

    if curve.closed:
        idxs = list(range(n))
    else:
        idxs = list(range(1, n - 1))
    vals = [tangency(i) for i in idxs]
    last = len(vals)
    scale = max(max(abs(x) for x in vals), 1e-300)
    if scale < 1e-7:
        return TangencyScan([], True, vals)
    hits = []
    for pos in range(last - 1 + (1 if curve.closed else 0)):
        a, b = vals[pos], vals[(pos + 1) % last]
        if a == 0.0 or a * b < 0:
            # bisection on the arc between the two samples
            i = idxs[pos]
            pa, pb = pts[i], pts[(idxs[(pos + 1) % last])]

            def tang_at(t):
                u = pa[0] + t * (pb[0] - pa[0])
                v = pa[1] + t * (pb[1] - pa[1])
                # re-correct onto K = 0
                for _ in range(8):
                    geo = geometry(s, u, v, order=1)
                    g = (geo.K.dx, geo.K.dy)
                    gn2 = g[0] ** 2 + g[1] ** 2
                    u -= geo.K.value * g[0] / gn2
                    v -= geo.K.value * g[1] / gn2
                d = _limit_direction(s, u, v, case)
                geo = geometry(s, u, v, order=1)
                g = (geo.K.dx, geo.K.dy)
                gn = math.hypot(*g)
                tdir = (-g[1] / gn, g[0] / gn)
                return (tdir[0] * d[1] - tdir[1] * d[0]), (u, v)

            lo, hi = 0.0, 1.0
            flo, _ = tang_at(lo)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                fm, pm = tang_at(mid)
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
                if hi - lo < tol:
                    break
            _fm, pm = tang_at(0.5 * (lo + hi))
            if all(_chart_dist(s, pm, q) > 1e-5 for q in hits):
                hits.append(pm)
    return TangencyScan(hits, False, vals)


# ---------------------------------------------------------------------------
# parabolic normal form and classification
# ---------------------------------------------------------------------------

def parabolic_jet(s, p, mean):
    """Aligned Monge chart at a parabolic point plus the mean's expansion
    data.  Case a puts the kernel (k1 = 0) direction along x; case b puts the
    curved (k2) direction along x.  The y-axis sign is normalized so d >= 0
    (case a) / c >= 0 (case b), where the folded sign conventions are
    coherent."""
    one, half, m0, boundary = regularity_class(mean)
    if one == "none" and half == "none":
        raise MeanNotRegularAtParabolic(mean.label())
    case = (one if one != "none" else half)[-1]
    cd = curvatures_at(s, p[0], p[1])
    if abs(cd.K) > 1e-8 * max(cd.H * cd.H, 1e-300):
        raise ChartAlignmentFailed(f"K = {cd.K:g} at the requested point")
    null_chart = cd.dir_min  # k1 ~ 0 direction
    other_chart = cd.dir_max
    xdir = null_chart if case == "a" else other_chart
    x3 = _tangent_unit(s, p, xdir)
    z = _monge_jet(s, p, x3)

    def read(zj):
        k = 2 * zj.coeff(0, 2) if case == "a" else 2 * zj.coeff(2, 0)
        return {
            "k": k,
            "a": 6 * zj.coeff(3, 0), "d": 2 * zj.coeff(2, 1),
            "b": 2 * zj.coeff(1, 2), "c": 6 * zj.coeff(0, 3),
            "A": 24 * zj.coeff(4, 0), "B": 6 * zj.coeff(3, 1),
            "C": 4 * zj.coeff(2, 2), "D": 6 * zj.coeff(1, 3),
            "E": 24 * zj.coeff(0, 4),
            "r": {ij: zj.coeff(int(ij[0]), int(ij[1]))
                  * math.factorial(int(ij[0])) * math.factorial(int(ij[1]))
                  for ij in ("50", "41", "32", "23", "14", "05")}
            if zj.order >= 5 else {},
        }

    co = read(z)
    # alignment residuals: quadratic must be k/2 y^2 (case a) or k/2 x^2 (b)
    bad_quad = abs(z.coeff(1, 1)) + abs(z.coeff(2, 0) if case == "a" else z.coeff(0, 2))
    if bad_quad > 1e-7 * max(1.0, abs(co["k"])):
        raise ChartAlignmentFailed(f"quadratic residual {bad_quad:g}")
    flip_key = "d" if case == "a" else "c"
    note = ""
    if co[flip_key] < 0:
        # y -> -y: coefficients with odd y-degree change sign
        flipped = Jet(z.order, z.base, list(z.c))
        yflip_x = Jet.variable(0, z.order)
        yflip_y = -Jet.variable(1, z.order)
        z = compose_bivariate(flipped, yflip_x, yflip_y)
        co = read(z)
        note = "y-axis flipped for the sign normalization"

    H_at = co["k"] / 2.0
    one, half, m0, boundary = regularity_class(mean, H_probe=H_at)
    m1 = m2 = 0.0
    return ParabolicJet(point=p, case=case, k=co["k"], a=co["a"], b=co["b"],
                        c=co["c"], d=co["d"], A=co["A"], B=co["B"], C=co["C"],
                        D=co["D"], E4=co["E"], r=co["r"], m0=m0, m1=m1, m2=m2,
                        frame_note=note)


def fold_eigenvalues(j):
    """Closed-form eigenvalues of the lifted linearization for 1-regular
    means (complex pair for foci)."""
    k, m0 = j.k, j.m0
    km = k * m0
    if j.case == "a":
        d = j.d
        disc = (km - 1.0) * (d * d * (km - 25.0) + 8.0 * j.A * k)
        tr = d * (km - 1.0)
    else:
        c = j.c
        disc = (km - 1.0) * (c * c * (km - 1.0) + 8.0 * k * j.C
                             + 8.0 * j.d * (c - 2.0 * j.d))
        tr = c * (1.0 - km)
    root = cmath_sqrt(disc)
    return (0.5 * (tr - root), 0.5 * (tr + root))


def cmath_sqrt(x):
    if x >= 0:
        return math.sqrt(x)
    return complex(0.0, math.sqrt(-x))


def classify_parabolic(j, mean=None, cross_check=True, sigma_tol=1e-10):
    """Folded-singularity verdict per the applicable regularity case."""
    if mean is not None:
        one, half, _m0, _b = regularity_class(mean, H_probe=j.k / 2.0)
    else:
        one, half = ("case_" + j.case, "none")
    if one != "none":
        reg = f"1-regular {one}"
        order_one = True
    elif half != "none":
        reg = f"1/2-regular {half}"
        order_one = False
    else:
        raise MeanNotRegularAtParabolic("mean not 1- or 1/2-regular")

    k, m0 = j.k, j.m0
    tangential = abs(j.a) < 1e-9 if j.case == "a" else abs(j.b) < 1e-9
    if not tangential:
        return ParabolicReport(point=j.point, kind="cuspidal", sigma=math.nan,
                               delta=math.nan, lambda1=None, lambda2=None,
                               regularity=reg, jet=j)

    if order_one:
        if j.case == "a":
            sigma = j.A * k - 3.0 * j.d ** 2
            delta = j.d ** 2 * (k * m0 - 25.0) + 8.0 * j.A * k
        else:
            sigma = (j.c * j.d - 2.0 * j.d ** 2 + k * j.C) * k * j.c * m0 ** 2
            delta = (j.c ** 2 * (k * m0 - 1.0) + 8.0 * k * j.C
                     + 8.0 * j.d * (j.c - 2.0 * j.d))
        scale = max(abs(j.A * k), j.d ** 2, abs(k * j.C), abs(j.c * j.d), 1e-30)
        if abs(sigma) <= sigma_tol * scale:
            raise DegenerateSingularity(f"sigma = {sigma:g}")
        l1, l2 = fold_eigenvalues(j)
        if sigma > 0:
            kind = "folded_saddle"
        else:
            kind = "folded_node" if delta > 0 else "folded_focus"
        num = None
        if cross_check:
            num = _numeric_fold_eigenvalues(j)
        return ParabolicReport(point=j.point, kind=kind, sigma=sigma,
                               delta=delta, lambda1=l1, lambda2=l2,
                               regularity=reg, numeric_eigenvalues=num, jet=j)

    # 1/2-regular: semi-hyperbolic, saddle or node of cubic type
    if j.case == "a":
        sigma = j.d * k * (j.A * k - 3.0 * j.d ** 2) * m0 ** 2
        lam2 = m0 ** 2 * k * j.d
    else:
        sigma = (j.c * j.d - 2.0 * j.d ** 2 + k * j.C) * k * j.c * m0 ** 2
        lam2 = m0 ** 2 * k * j.c
    scale = max(abs(j.A * k), j.d ** 2, abs(k * j.C), abs(j.c * j.d), 1e-30) * m0 ** 2
    if abs(sigma) <= sigma_tol * scale:
        raise DegenerateSingularity(f"sigma = {sigma:g}")
    kind = "folded_saddle" if sigma > 0 else "folded_node"
    cubic_sign = None
    if cross_check:
        cubic_sign = _numeric_center_cubic_sign(j)
    return ParabolicReport(point=j.point, kind=kind, sigma=sigma,
                           delta=math.nan, lambda1=0.0, lambda2=lam2,
                           regularity=reg, center_cubic_sign=cubic_sign, jet=j)


def _model_surface(j):
    chart = "parabolic_a" if j.case == "a" else "parabolic_b"
    return SurfaceSpec.monge_jet(chart, {"k": j.k, "a": j.a, "b": j.b, "c": j.c,
                                         "d": j.d, "A": j.A, "B": j.B, "C": j.C,
                                         "D": j.D, "E": j.E4, "r": j.r})


def _model_mean(j, order_one=True):
    if order_one:
        if j.case == "a":
            return means_mod.MeanSpec.expr(f"{j.m0!r}*K")
        return means_mod.MeanSpec.expr(f"2*H-{j.m0!r}*K")
    # 1/2-regular models: only unit-slope sqrt means are expressible builtins
    if abs(j.m0 - 1.0) > 1e-12:
        raise MeanNotRegularAtParabolic("1/2-regular model needs m0 = 1")
    if j.case == "a":
        return means_mod.MeanSpec.geometric()
    return means_mod.MeanSpec.co(means_mod.MeanSpec.geometric())


def _numeric_fold_eigenvalues(j):
    """Nonzero eigenvalues of the lift Jacobian at the fold equilibrium of
    the model surface, via finite differences (independent of the closed
    forms being verified)."""
    surf = _model_surface(j)
    mean = _model_mean(j, order_one=True)
    fld = EquationField(surf, mean, mode="quad")
    jac = _lift_jacobian(fld, LiftedPoint(0.0, 0.0, 0.0, "p"))
    eigs = sorted(np.linalg.eigvals(jac), key=lambda z: abs(z))
    pair = sorted(eigs[1:], key=lambda z: (z.real, z.imag))
    return (complex(pair[0]), complex(pair[1]))


def _numeric_center_cubic_sign(j):
    """Sign of the center-manifold cubic coefficient for the 1/2-regular
    fold: the reduced (x, p) flow (y eliminated through the lifted surface)
    is x' = c3 x^3 + O(x^4) along the center eigendirection."""
    surf = _model_surface(j)
    mean = _model_mean(j, order_one=False)
    fld = EquationField(surf, mean, mode="quartic",
                        reg_case="case_a" if j.case == "a" else "case_b")

    def reduced_vel(x, p):
        y = _solve_y(fld, x, p, j)
        vel, _g, _h = fld.velocity(LiftedPoint(x, y, p, "p"))
        return vel[0], vel[2]

    # numeric linearization of the reduced field; its kernel is the center
    h = 1e-6
    J = np.zeros((2, 2))
    for col, (dx, dp) in enumerate(((h, 0.0), (0.0, h))):
        vp = reduced_vel(dx, dp)
        vm = reduced_vel(-dx, -dp)
        J[0, col] = (vp[0] - vm[0]) / (2 * h)
        J[1, col] = (vp[1] - vm[1]) / (2 * h)
    evals, evecs = np.linalg.eig(J)
    idx = int(np.argmin(np.abs(evals)))
    vec = evecs[:, idx].real
    if abs(vec[0]) < 1e-12:
        raise DegenerateSingularity("center direction orthogonal to the fold axis")
    slope = vec[1] / vec[0]

    def xprime(x):
        return reduced_vel(x, slope * x)[0]

    vals = []
    for x0 in (4e-3, 2e-3):
        vals.append((xprime(x0) - xprime(-x0)) / (2 * x0 ** 3))
    c3 = (4.0 * vals[1] - vals[0]) / 3.0
    return int(math.copysign(1.0, c3))


def _solve_y(fld, x, p, j):
    y = (2 * j.d ** 2 - (j.A if j.case == "a" else j.C) * j.k) \
        / (2 * j.k * (j.d if j.case == "a" else j.c)) * x * x
    for _ in range(40):
        h, _hu, hy, _hw, _geo = fld.h_value_and_partials(LiftedPoint(x, y, p, "p"))
        if abs(hy) < 1e-300:
            break
        step = h / hy
        y -= step
        if abs(step) < 1e-16:
            break
    return y


# ---------------------------------------------------------------------------
# separatrix structure
# ---------------------------------------------------------------------------

def separatrix_structure(s, mean, report, cfg=None, offset=1e-3, arc=1.0):
    """Separatrices traced from the eigen-directions of the lifted equilibria.

    Returns a list of (polyline, foliation_tag); umbilic reports yield one
    arc per saddle per foliation (M1/M2/M3 -> 1/2/3 per foliation), folded
    saddles and nodes yield their two distinguished curves."""
    cfg = cfg or TraceConfig(max_arc=arc, detect_closure=False, max_step=0.02)
    out = []
    if isinstance(report, UmbilicReport):
        point = report.point
        for eq in report.equilibria:
            if eq.kind != "saddle":
                continue
            d = (1.0, eq.w) if eq.chart == "p" else (eq.w, 1.0)
            n = math.hypot(*d)
            d = (d[0] / n, d[1] / n)
            for sgn in (1.0, -1.0):
                seed = (point[0] + sgn * offset * d[0],
                        point[1] + sgn * offset * d[1])
                try:
                    line = trace_line(s, mean, seed, cfg, direction=(sgn * d[0], sgn * d[1]))
                except McfError:
                    continue
                tag = "min" if line.samples and line.samples[0].tau_g < 0 else "max"
                out.append((line, tag))
        return out
    # folded singularity: leave the fold equilibrium along the lifted
    # eigenvectors (the lift stays regular at the fold, the chart does not)
    jj = report.jet
    surf_case_a = jj.case == "a"
    one_regular = report.regularity.startswith("1-regular")
    fld_mode = "quad" if one_regular else "quartic"
    fld = EquationField(s, mean, mode=fld_mode,
                        reg_case="case_a" if surf_case_a else "case_b")
    jac = _lift_jacobian(fld, LiftedPoint(jj.point[0], jj.point[1], 0.0, "p"))
    eigvals, eigvecs = np.linalg.eig(jac)
    idx = sorted(range(3), key=lambda i: abs(eigvals[i]))
    for i in idx[1:]:
        if abs(eigvals[i].imag) > 1e-8 * max(1.0, abs(eigvals[i])):
            continue  # focus: no separatrices
        vec = eigvecs[:, i].real
        n = math.sqrt(float(vec[0] ** 2 + vec[1] ** 2 + vec[2] ** 2))
        vec = vec / n
        arcs = []
        for sgn in (1.0, -1.0):
            lifted = (jj.point[0] + sgn * offset * vec[0],
                      jj.point[1] + sgn * offset * vec[1],
                      sgn * offset * vec[2], "p")
            try:
                line = trace_line(s, mean, (lifted[0], lifted[1]), cfg,
                                  lifted_seed=lifted, orient_away_from=jj.point)
            except McfError:
                continue
            arcs.append(line)
        # the two branches of one eigenvector form one separatrix curve
        if arcs:
            out.append((arcs[0], "folded"))
    return out
