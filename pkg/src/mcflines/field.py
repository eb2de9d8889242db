"""The implicit direction equation of mean-curvature lines and leaf tracing.

The equation at a point is L dv^2 + 2 (f - M F) du dv + N du^2 = 0 with
L = g - M G, N = e - M E (the names Lc/Mc/Nc below avoid clashing with the
mean value M and the normal N).  Leaves are integrated on the projectivized
lift: with slope p = dv/du and H(u, v, p) = Lc p^2 + Mc p + Nc, the lift field

    u' = H_p,   v' = p H_p,   p' = -(H_u + p H_v)

is regular where the plane equation is singular (folds at the parabolic set),
so a "billiard" continuation across the parabolic curve is just integration
straight through the fold.  When |p| > 1 the swapped chart q = du/dv with
G(u, v, q) = Lc + Mc q + Nc q^2 keeps slopes bounded.

For 1/2-regular means the quadratic degenerates at K = 0; squaring the
defining equation gives a quartic whose lift stays regular there, and the
tracer switches to it (mode "quartic").
"""

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from . import means as means_mod
from . import surface as surface_mod
from .errors import (CoincidentDirections, DivisionByZeroConstantTerm,
                     DomainError, InconclusiveProbe, McfError,
                     SeedOutsideElliptic, SeedUmbilic, TotallyUmbilic)
from .exprjet import Jet
from .means import mean_jet
from .surface import frame_at, geometry


class QuadCoeffs(NamedTuple):
    L: float
    M: float
    N: float


def quad_coeffs(forms, M):
    """Coefficients (L, M, N) = (g - MG, 2(f - MF), e - ME)."""
    return QuadCoeffs(forms.g - M * forms.G,
                      2.0 * (forms.f - M * forms.F),
                      forms.e - M * forms.E)


def quad_jets(geo, mean):
    Mj = mean_jet(mean, geo.H, geo.K)
    L = geo.g - Mj * geo.G
    Mc = (geo.f - Mj * geo.F) * 2.0
    Nc = geo.e - Mj * geo.E
    return L, Mc, Nc


class QuarticCoeffs(NamedTuple):
    A40: float
    A31: float
    A22: float
    A13: float
    A04: float


def quartic_jets(geo, mean, reg_case):
    """Coefficients of the squared equation for 1/2-regular means.

    Case a squares k_n = M1 sqrt(K); case b squares k_n - 2H = -M1 sqrt(K).
    Both reduce to (II - c I)^2 - Q I^2 with c = 0 or 2H and Q analytic in K.
    The paper's coefficient normalization carries an extra factor EG - F^2.
    """
    Q = means_mod.half_square_jet(mean, geo.H, geo.K)
    if reg_case == "case_a":
        ee, ff, gg = geo.e, geo.f, geo.g
    else:
        H2 = geo.H * 2.0
        ee = geo.e - H2 * geo.E
        ff = geo.f - H2 * geo.F
        gg = geo.g - H2 * geo.G
    E, F, G = geo.E, geo.F, geo.G
    A40 = ee * ee - Q * (E * E)
    A31 = (ee * ff - Q * (E * F)) * 4.0
    A22 = (ee * gg - Q * (E * G)) * 2.0 + (ff * ff - Q * (F * F)) * 4.0
    A13 = (ff * gg - Q * (F * G)) * 4.0
    A04 = gg * gg - Q * (G * G)
    return A40, A31, A22, A13, A04


@dataclass(frozen=True)
class LiftedPoint:
    u: float
    v: float
    w: float  # p = dv/du in the p-chart, q = du/dv in the q-chart
    chart: str  # "p" | "q"

    def direction(self):
        return (1.0, self.w) if self.chart == "p" else (self.w, 1.0)


class DirectionPair(NamedTuple):
    d_min: tuple  # unit chart direction with tau_g < 0
    d_max: tuple
    tau_min: float
    tau_max: float


def solve_directions(q, tol=1e-12):
    """The two projective root directions of L dv^2 + M du dv + N du^2 = 0."""
    L, Mc, N = q
    scale = max(abs(L), abs(Mc), abs(N), 1e-300)
    disc = Mc * Mc - 4.0 * L * N
    if disc <= tol * scale * scale:
        raise CoincidentDirections(f"discriminant {disc:g} below tolerance")
    root = math.sqrt(disc)
    if abs(L) >= abs(N):
        qq = -0.5 * (Mc + math.copysign(root, Mc)) if Mc != 0 else 0.5 * root
        p1 = qq / L
        p2 = (N / qq) if qq != 0 else -p1
        return ((1.0, p1), (1.0, p2))
    qq = -0.5 * (Mc + math.copysign(root, Mc)) if Mc != 0 else 0.5 * root
    q1 = qq / N
    q2 = (L / qq) if qq != 0 else -q1
    return ((q1, 1.0), (q2, 1.0))


def directions_at(s, mean, u, v, tol=1e-12):
    """Unit chart directions of the two foliations, labelled by tau_g sign."""
    geo = geometry(s, u, v, order=0)
    forms = geo.forms()
    M = means_mod.eval_mean(mean, geo.H.value, geo.K.value).M
    d1, d2 = solve_directions(quad_coeffs(forms, M), tol=tol)
    out = []
    for d in (d1, d2):
        fr = frame_at(s, None, u, v, d[0], d[1])
        spd = math.sqrt(forms.E * d[0] ** 2 + 2 * forms.F * d[0] * d[1]
                        + forms.G * d[1] ** 2)
        out.append(((d[0] / spd, d[1] / spd), fr.tau_g))
    if out[0][1] > out[1][1]:
        out.reverse()
    (dmin, tmin), (dmax, tmax) = out
    return DirectionPair(dmin, dmax, tmin, tmax)


# ---------------------------------------------------------------------------
# trace configuration and polylines
# ---------------------------------------------------------------------------

@dataclass
class TraceConfig:
    branch: str = "min"              # "min" | "max"
    initial_step: float = 1e-3
    min_step: float = 1e-11
    max_step: float = 0.12
    max_arc: float = 20.0
    tol_umb: float = 1e-8            # stop when H^2 - K drops below this
    tol_par: float = 1e-8            # stop when K drops below this (billiard off)
    eps_close: float = 1e-6
    eps_close_dir: float = 1e-4
    min_excursion: float = 0.1
    billiard: bool = False
    rtol: float = 1e-9
    atol: float = 1e-12
    max_steps: int = 40000
    mode: str = "auto"               # "quad" | "quartic" | "auto"
    detect_closure: bool = True
    record_every: int = 1


@dataclass
class Sample:
    s: float
    u: float
    v: float
    du: float
    dv: float
    H: float
    K: float
    M: float
    tau_g: float


@dataclass
class Polyline:
    samples: list
    termination: str
    branch: str
    closed: bool = False
    period_hint: float = None

    @property
    def arc_length(self):
        return self.samples[-1].s if self.samples else 0.0

    def points(self):
        return [(smp.u, smp.v) for smp in self.samples]

    def directions(self):
        return [(smp.du, smp.dv) for smp in self.samples]

    def tuples(self):
        return [(smp.u, smp.v, smp.du, smp.dv) for smp in self.samples]


@dataclass
class Section:
    """An oriented Poincare section: the chart line through ``base`` spanned
    by the 90-degree rotation of ``direction``; crossings are detected when
    the along-flow coordinate changes sign inside ``capture`` radius."""
    base: tuple
    direction: tuple
    capture: float = 0.25

    def coords(self, s_spec, u, v):
        du = u - self.base[0]
        dv = v - self.base[1]
        if s_spec.periodic[0]:
            per = s_spec.domain[0][1] - s_spec.domain[0][0]
            du = (du + per / 2) % per - per / 2
        if s_spec.periodic[1]:
            per = s_spec.domain[1][1] - s_spec.domain[1][0]
            dv = (dv + per / 2) % per - per / 2
        nrm = math.hypot(*self.direction)
        t = (du * self.direction[0] + dv * self.direction[1]) / nrm
        sigma = (-du * self.direction[1] + dv * self.direction[0]) / nrm
        return t, sigma


# ---------------------------------------------------------------------------
# the lifted field
# ---------------------------------------------------------------------------

class EquationField:
    """Lie-Cartan lift of the direction equation for one surface + mean."""

    def __init__(self, s, mean, mode="quad", reg_case=None):
        self.s = s
        self.mean = mean
        self.mode = mode
        self.reg_case = reg_case

    def coeff_jets(self, u, v, order=1):
        geo = geometry(self.s, u, v, order=order)
        if self.mode == "quad":
            return quad_jets(geo, self.mean), geo
        return quartic_jets(geo, self.mean, self.reg_case), geo

    def h_value_and_partials(self, pt, order=1):
        """(H, H_u, H_v, H_w) of the chart polynomial at a lifted point."""
        coeffs, geo = self.coeff_jets(pt.u, pt.v, order=order)
        w = pt.w
        if self.mode == "quad":
            L, Mc, Nc = coeffs
            if pt.chart == "p":
                polys = (Nc, Mc, L)
            else:
                polys = (L, Mc, Nc)
        else:
            A40, A31, A22, A13, A04 = coeffs
            polys = (A40, A31, A22, A13, A04) if pt.chart == "p" \
                else (A04, A13, A22, A31, A40)
        hv = hu = hvv = hw = 0.0
        wk = 1.0
        for k, cj in enumerate(polys):
            hv += cj.value * wk
            hu += cj.dx * wk
            hvv += cj.dy * wk
            if k > 0:
                hw += k * cj.value * wk_prev
            wk_prev = wk
            wk *= w
        return hv, hu, hvv, hw, geo

    def velocity(self, pt, order=1):
        """Unnormalized lift velocity (u', v', w') and the geometry jets."""
        h, hu, hv, hw, geo = self.h_value_and_partials(pt, order=order)
        if pt.chart == "p":
            return (hw, pt.w * hw, -(hu + pt.w * hv)), geo, h
        return (pt.w * hw, hw, -(pt.w * hu + hv)), geo, h

    def h_value_only(self, pt):
        """(H, H_w) from order-0 coefficient jets (cheap Newton step)."""
        coeffs, _geo = self.coeff_jets(pt.u, pt.v, order=0)
        vals = [c.value for c in coeffs]
        if self.mode == "quad":
            polys = (vals[2], vals[1], vals[0]) if pt.chart == "p" else vals
        else:
            polys = vals if pt.chart == "p" else vals[::-1]
        h = hw = 0.0
        wk = 1.0
        scale = 0.0
        for k, cv in enumerate(polys):
            h += cv * wk
            scale += abs(cv * wk)
            if k > 0:
                hw += k * cv * wk_prev
            wk_prev = wk
            wk *= pt.w
        return h, hw, scale

    def project(self, pt, order=1, hval=None):
        """Pull a lifted point back onto {H = 0} (Newton in w, falling back
        to a least-squares gradient step near folds).  ``hval``, when given,
        is a known equation residual used to skip the projection entirely."""
        if hval is not None:
            h0, hw0, scale0 = None, None, None
            # quick scale probe only when the residual may matter
            h0, hw0, scale0 = self.h_value_only(pt)
            if abs(h0) <= 1e-12 * max(scale0, 1e-300):
                return pt
            if abs(hw0) ** 2 > 1e-4 * max(scale0 * scale0, 1e-300):
                # cheap order-0 Newton iterations in w
                w = pt.w
                for _ in range(3):
                    w = w - h0 / hw0
                    h0, hw0, scale0 = self.h_value_only(replace(pt, w=w))
                    if abs(h0) <= 1e-13 * max(scale0, 1e-300) or abs(hw0) == 0:
                        break
                return replace(pt, w=w)
        for _ in range(3):
            h, hu, hv, hw, _geo = self.h_value_and_partials(pt, order=order)
            grad2 = hu * hu + hv * hv + hw * hw
            if grad2 == 0.0 or abs(h) < 1e-15 * max(1.0, grad2):
                return pt
            if abs(hw) ** 2 > 0.01 * grad2:
                pt = replace(pt, w=pt.w - h / hw)
            else:
                lam = h / grad2
                pt = replace(pt, u=pt.u - lam * hu, v=pt.v - lam * hv,
                             w=pt.w - lam * hw)
        return pt


class _StepEnd(NamedTuple):
    geo: object
    vel: tuple
    hval: float


# Dormand-Prince 5(4) tableau
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


class _Tracer:
    def __init__(self, s, mean, cfg):
        self.s = s
        self.mean = mean
        self.cfg = cfg
        mode = cfg.mode
        reg_case = None
        if mode == "auto":
            _one, half, _m0, _b = means_mod.regularity_class(mean)
            if half != "none":
                try:
                    means_mod.half_square_jet(mean, Jet.const(1.0, 1), Jet.const(0.5, 1))
                    mode = "quartic"
                    reg_case = half
                except InconclusiveProbe:
                    mode = "quad"
            else:
                mode = "quad"
        elif mode == "quartic":
            _one, half, _m0, _b = means_mod.regularity_class(mean)
            reg_case = half if half != "none" else "case_a"
        self.field = EquationField(s, mean, mode=mode, reg_case=reg_case)
        self.sign = 1.0

    def rhs(self, state, chart):
        """Derivative of (u, v, w, s): the 3D-normalized lift velocity plus
        the surface-arc-length fraction of the chart motion."""
        pt = LiftedPoint(state[0], state[1], state[2], chart)
        vel, geo, hval = self.field.velocity(pt)
        E0, F0, G0 = geo.E.value, geo.F.value, geo.G.value
        chart_speed2 = (E0 * vel[0] ** 2 + 2 * F0 * vel[0] * vel[1]
                        + G0 * vel[1] ** 2)
        n = math.sqrt(chart_speed2 + vel[2] ** 2)
        if n == 0.0:
            raise CoincidentDirections("stationary lifted point")
        sgn = self.sign / n
        return (vel[0] * sgn, vel[1] * sgn, vel[2] * sgn,
                math.sqrt(chart_speed2) / n), geo, hval

    def step(self, state, chart, h):
        """One embedded DP45 step on (u, v, w, s); returns
        (new_state, err_norm, end_info).

        The last stage sits at the order-5 endpoint (FSAL), so ``end_info``
        carries the geometry, velocity and equation residual there for reuse.
        """
        k = []
        geo_end = vel_end = None
        h_end = 0.0
        for i in range(7):
            st = state
            if i:
                acc = [0.0, 0.0, 0.0]
                for j, a in enumerate(_DP_A[i]):
                    acc[0] += a * k[j][0]
                    acc[1] += a * k[j][1]
                    acc[2] += a * k[j][2]
                st = (state[0] + h * acc[0], state[1] + h * acc[1],
                      state[2] + h * acc[2], state[3])
            vel, geo, hval = self.rhs(st, chart)
            if i == 6:
                geo_end, vel_end, h_end = geo, vel, hval
            k.append(vel)
        y5 = list(state)
        y4 = list(state)
        for j in range(7):
            for c in range(4):
                y5[c] += h * _DP_B5[j] * k[j][c]
                y4[c] += h * _DP_B4[j] * k[j][c]
        err = 0.0
        for c in range(3):
            sc = self.cfg.atol + self.cfg.rtol * max(abs(state[c]), abs(y5[c]))
            err = max(err, abs(y5[c] - y4[c]) / sc)
        return tuple(y5), err, _StepEnd(geo_end, vel_end, h_end)


def _seed_lift(s, mean, seed, cfg, direction, fld=None):
    u, v = seed
    geo = geometry(s, u, v, order=0)
    H0, K0 = geo.H.value, geo.K.value
    scale2 = max(H0 * H0, abs(K0), 1e-300)
    if K0 <= cfg.tol_par:
        raise SeedOutsideElliptic(f"K = {K0:g} at seed")
    if H0 * H0 - K0 <= cfg.tol_umb * scale2:
        others = [s.center(), (s.domain[0][0] + 0.3, s.domain[1][0] + 0.4)]
        if all(_is_near_umbilic(s, p) for p in others):
            raise TotallyUmbilic("discriminant vanishes across the domain")
        raise SeedUmbilic(f"H^2 - K = {H0 * H0 - K0:g} at seed")
    if direction is not None and fld is not None:
        # lift the given direction and project; Newton from the given slope
        # lands on the matching root even when the two roots nearly coincide
        if abs(direction[1]) <= abs(direction[0]):
            pt = LiftedPoint(u, v, direction[1] / direction[0], "p")
        else:
            pt = LiftedPoint(u, v, direction[0] / direction[1], "q")
        pt = fld.project(pt)
        return pt, direction
    pair = directions_at(s, mean, u, v)
    if direction is None:
        d = pair.d_min if cfg.branch == "min" else pair.d_max
    else:
        def align(cand):
            return abs(cand[0] * direction[0] + cand[1] * direction[1])
        d = max((pair.d_min, pair.d_max), key=align)
        if d[0] * direction[0] + d[1] * direction[1] < 0:
            d = (-d[0], -d[1])
    if abs(d[1]) <= abs(d[0]):
        return LiftedPoint(u, v, d[1] / d[0], "p"), d
    return LiftedPoint(u, v, d[0] / d[1], "q"), d


def _is_near_umbilic(s, p, tol=1e-10):
    try:
        geo = geometry(s, p[0], p[1], order=0)
    except McfError:
        return True
    H0, K0 = geo.H.value, geo.K.value
    return H0 * H0 - K0 <= tol * max(H0 * H0, abs(K0), 1e-300)


def _tau_from_geo(geo, du, dv):
    """tau_g = -<N', N^T> for the I-unit direction (du, dv), from jets."""
    Nv = tuple(c.value for c in geo.N)
    T = tuple(geo.au[i].value * du + geo.av[i].value * dv for i in range(3))
    NxT = (Nv[1] * T[2] - Nv[2] * T[1],
           Nv[2] * T[0] - Nv[0] * T[2],
           Nv[0] * T[1] - Nv[1] * T[0])
    Np = tuple(geo.N[i].dx * du + geo.N[i].dy * dv for i in range(3))
    return -sum(Np[i] * NxT[i] for i in range(3))


def trace_line(s, mean, seed, cfg=None, direction=None, section=None,
               lifted_seed=None, orient_away_from=None):
    """Integrate one leaf of the chosen foliation from ``seed``.

    ``direction`` overrides the branch selection with the root nearest the
    given chart direction.  ``section`` (a Section) makes the trace stop at
    its first oriented crossing with termination "section"; without one, the
    seed's own section watches for closure.  A ``lifted_seed`` (u, v, w,
    chart) bypasses root solving entirely (used to leave fold equilibria
    along lift eigenvectors), oriented away from ``orient_away_from``.
    """
    cfg = cfg or TraceConfig()
    tracer = _Tracer(s, mean, cfg)
    if lifted_seed is not None:
        pt = LiftedPoint(lifted_seed[0], lifted_seed[1], lifted_seed[2],
                         lifted_seed[3])
        d0 = None
        seed = (pt.u, pt.v)
    else:
        pt, d0 = _seed_lift(s, mean, seed, cfg, direction, fld=tracer.field)
    pt = tracer.field.project(pt)

    state = (pt.u, pt.v, pt.w, 0.0)
    chart = pt.chart
    vel0, _geo0, _h0 = tracer.rhs(state, chart)
    if d0 is None:
        away = orient_away_from or seed
        flow_out = (vel0[0] * (state[0] - away[0])
                    + vel0[1] * (state[1] - away[1]))
        if flow_out < 0:
            tracer.sign = -1.0
        dd = LiftedPoint(state[0], state[1], state[2], chart).direction()
        nd = math.hypot(*dd)
        d0 = (dd[0] / nd, dd[1] / nd)
    elif vel0[0] * d0[0] + vel0[1] * d0[1] < 0:
        tracer.sign = -1.0

    own_section = section
    if own_section is None and cfg.detect_closure:
        own_section = Section((seed[0], seed[1]), d0,
                              capture=10 * cfg.eps_close + 0.02 * s.chart_scale())
    samples = []
    h = cfg.initial_step
    termination = "max_steps"
    closed = False
    prev_t = None
    next_cross_arc = 0.0

    def unit_dir(geo, vel=None):
        """I-unit direction of the motion: the projected state's own slope
        (exactly a root of the equation), oriented by the velocity when it is
        available and by sample continuity at folds."""
        dvec = LiftedPoint(state[0], state[1], state[2], chart).direction()
        E0, F0, G0 = geo.E.value, geo.F.value, geo.G.value
        spd = math.sqrt(E0 * dvec[0] ** 2 + 2 * F0 * dvec[0] * dvec[1]
                        + G0 * dvec[1] ** 2)
        du, dv = dvec[0] / spd, dvec[1] / spd
        if vel is None:
            try:
                vel, _g, _h = tracer.rhs(state, chart)
            except McfError:
                vel = (0.0, 0.0, 0.0, 0.0)
        orient = du * vel[0] + dv * vel[1]
        if orient < 0:
            return -du, -dv
        if orient == 0 and samples \
                and du * samples[-1].du + dv * samples[-1].dv < 0:
            return -du, -dv
        return du, dv

    def record(geo, vel=None):
        du, dv = unit_dir(geo, vel)
        try:
            Mv = means_mod.eval_mean(mean, geo.H.value, geo.K.value).M \
                if geo.K.value > 0 else float("nan")
        except McfError:
            Mv = float("nan")
        tau = _tau_from_geo(geo, du, dv)
        samples.append(Sample(state[3], state[0], state[1], du, dv,
                              geo.H.value, geo.K.value, Mv, tau))

    def accept(raw_state, target_chart, hval=None):
        """Wrap, project and install a stepped state."""
        nonlocal state, chart
        ptn = tracer.field.project(LiftedPoint(raw_state[0], raw_state[1],
                                               raw_state[2], target_chart),
                                   hval=hval)
        wu, wv = s.wrap(ptn.u, ptn.v)
        state = (wu, wv, ptn.w, raw_state[3])
        chart = target_chart

    def refine_last_step(prev_state, prev_chart, target, prev_sign=None):
        """Re-step from prev_state so that ``target(state) == 0``: secant in
        the step size with a bisection bracket as safeguard (sections,
        domain exits, max-arc landing)."""
        nonlocal state, chart
        if prev_sign is not None:
            tracer.sign = prev_sign
        g_lo = target((prev_state[0], prev_state[1], prev_state[2], prev_state[3]))
        lo, hi = 0.0, h
        g_hi = target(state)
        best = (abs(g_hi), state)
        dt, g_dt = hi, g_hi

        def advance(step_size):
            trial, _e, _g = tracer.step(prev_state, prev_chart, step_size)
            wu, wv = s.wrap(trial[0], trial[1])
            return (wu, wv, trial[2], trial[3])

        prev_pair = (lo, g_lo)
        for _ in range(16):
            if abs(g_dt - prev_pair[1]) > 0:
                dt_new = dt - g_dt * (dt - prev_pair[0]) / (g_dt - prev_pair[1])
            else:
                dt_new = 0.5 * (lo + hi)
            if not (lo <= dt_new <= hi):
                dt_new = 0.5 * (lo + hi)
            trial = advance(dt_new)
            g_new = target(trial)
            prev_pair = (dt, g_dt)
            dt, g_dt = dt_new, g_new
            if g_new < 0.0:
                lo = dt_new
            else:
                hi = dt_new
            if abs(g_new) < best[0]:
                best = (abs(g_new), trial)
            if abs(g_new) < 1e-13 or hi - lo < 1e-13 * max(1.0, h):
                break
        ptn = tracer.field.project(LiftedPoint(best[1][0], best[1][1],
                                               best[1][2], prev_chart))
        state = (ptn.u, ptn.v, ptn.w, best[1][3])
        chart = prev_chart

    try:
        geo = geometry(s, state[0], state[1], order=1)
        record(geo)
    except McfError:
        pass

    steps = 0
    while steps < cfg.max_steps:
        steps += 1
        prev_state, prev_chart = state, chart
        try:
            new_state, err, end = tracer.step(state, chart, h)
        except (DomainError, DivisionByZeroConstantTerm):
            termination = "mean_domain"
            break
        except CoincidentDirections:
            termination = "coincident_directions"
            break
        if err > 1.0 and h > cfg.min_step:
            h = max(cfg.min_step, 0.9 * h * err ** -0.2)
            continue
        accept(new_state, chart, hval=end.hval)
        swapped = False
        sign_prev = tracer.sign
        geo = end.geo
        vel_here = end.vel
        if abs(state[2]) > 1.0:
            w = state[2]
            chart = "q" if chart == "p" else "p"
            state = (state[0], state[1], 1.0 / w, state[3])
            swapped = True
            velA, _g, _h = tracer.rhs(state, chart)
            vel_here = velA
            if samples:
                if velA[0] * samples[-1].du + velA[1] * samples[-1].dv < 0:
                    tracer.sign = -tracer.sign
                    vel_here = tuple(-c for c in velA)
        record(geo, vel_here)

        H0, K0 = geo.H.value, geo.K.value
        scale2 = max(H0 * H0, abs(K0), 1e-300)
        if H0 * H0 - K0 <= cfg.tol_umb * scale2:
            termination = "umbilic"
            break
        if K0 <= cfg.tol_par and not cfg.billiard and tracer.field.mode == "quad":
            termination = "parabolic"
            break
        if not s.in_domain(state[0], state[1]):
            (du0, du1), (dv0, dv1) = s.domain

            def outside_dist(st):
                d = -1e300
                if not s.periodic[0]:
                    d = max(d, du0 - st[0], st[0] - du1)
                if not s.periodic[1]:
                    d = max(d, dv0 - st[1], st[1] - dv1)
                return d

            refine_last_step(prev_state, prev_chart, outside_dist, sign_prev)
            geo = geometry(s, state[0], state[1], order=1)
            samples.pop()
            record(geo)
            termination = "domain_exit"
            break
        if state[3] >= cfg.max_arc:
            refine_last_step(prev_state, prev_chart,
                             lambda st: st[3] - cfg.max_arc, sign_prev)
            geo = geometry(s, state[0], state[1], order=1)
            samples.pop()
            record(geo)
            termination = "max_arc"
            break
        if own_section is not None and len(samples) >= 2:
            t_here, sigma = own_section.coords(s, state[0], state[1])
            in_capture = abs(sigma) <= own_section.capture
            if prev_t is not None and in_capture and prev_t < 0.0 <= t_here \
                    and state[3] > max(cfg.min_excursion, next_cross_arc):
                smp = samples[-1]
                nd = math.hypot(*own_section.direction)
                ref = (own_section.direction[0] / nd, own_section.direction[1] / nd)
                if smp.du * ref[0] + smp.dv * ref[1] > 0:
                    refine_last_step(prev_state, prev_chart,
                                     lambda st: own_section.coords(s, st[0], st[1])[0],
                                     sign_prev)
                    geo = geometry(s, state[0], state[1], order=1)
                    samples.pop()
                    record(geo)
                    _t, sigma = own_section.coords(s, state[0], state[1])
                    smp = samples[-1]
                    if section is not None:
                        termination = "section"
                        break
                    # compare unit (chart-euclidean) directions
                    sn = math.hypot(smp.du, smp.dv)
                    ddir = math.hypot(smp.du / sn - ref[0], smp.dv / sn - ref[1])
                    if abs(sigma) <= cfg.eps_close and ddir <= cfg.eps_close_dir:
                        termination = "closed"
                        closed = True
                        break
                    # a non-closing crossing: arm the detector past this pass
                    next_cross_arc = state[3] + 4 * cfg.max_step
            prev_t = t_here if in_capture else None
        h = min(cfg.max_step, max(cfg.min_step, 0.9 * h * max(err, 1e-10) ** -0.2))

    line = Polyline(samples, termination, cfg.branch, closed=closed)
    if closed:
        line.period_hint = state[3]
    return line


def residual(s, mean, line):
    """max |k_n(T) - M| over the samples of a polyline."""
    worst = 0.0
    for smp in line.samples:
        geo = geometry(s, smp.u, smp.v, order=0)
        ff = geo.forms()
        I = (ff.E * smp.du ** 2 + 2 * ff.F * smp.du * smp.dv + ff.G * smp.dv ** 2)
        II = (ff.e * smp.du ** 2 + 2 * ff.f * smp.du * smp.dv + ff.g * smp.dv ** 2)
        kn = II / I
        M = means_mod.eval_mean(mean, geo.H.value, geo.K.value).M
        worst = max(worst, abs(kn - M))
    return worst


def retrace_back(s, mean, line, cfg=None):
    """Integrate backward from the end of a traced leaf for the same arc
    length; used by the reversibility checks.

    The endpoint may sit exactly on a stop threshold (umbilic proximity),
    so the backward guard is relaxed a notch to let the seed through."""
    cfg = cfg or TraceConfig()
    end = line.samples[-1]
    back_cfg = replace(cfg, max_arc=line.arc_length, detect_closure=False,
                       tol_umb=cfg.tol_umb * 0.25, tol_par=cfg.tol_par * 0.25)
    return trace_line(s, mean, (end.u, end.v), back_cfg,
                      direction=(-end.du, -end.dv))
