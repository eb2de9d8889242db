"""Mean-function tests: hand oracles, axiom properties, regularity table."""

import math
import random

import pytest
from scipy.integrate import quad

from mcflines import means
from mcflines.errors import (InconclusiveProbe, NonPositivePrincipalCurvature,
                             OutsideElliptic)
from mcflines.means import (MeanSpec, axiom_check, eval_mean, from_principal,
                            mean_jet, regularity)
from mcflines.exprjet import Jet

ALL_BUILTINS = [
    MeanSpec.arithmetic(), MeanSpec.geometric(), MeanSpec.harmonic(),
    MeanSpec.holder(0.7), MeanSpec.holder(-2.0), MeanSpec.agm(),
    MeanSpec.co(MeanSpec.harmonic()), MeanSpec.co(MeanSpec.geometric()),
]


def agm_quadrature_oracle(k1, k2):
    """AG mean via the elliptic integral I(k1,k2) = int dt/sqrt((t^2+k1^2)(t^2+k2^2)),
    with AG(k1,k2) = I(1,1)/I(k1,k2) and I(1,1) = pi/2."""
    val, _err = quad(lambda t: 1.0 / math.sqrt((t * t + k1 * k1) * (t * t + k2 * k2)),
                     0.0, math.inf, epsabs=1e-14, epsrel=1e-14, limit=400)
    return (math.pi / 2.0) / val


# ---------------------------------------------------------------------------
# hand oracles
# ---------------------------------------------------------------------------

def test_arithmetic_eval():
    ev = eval_mean(MeanSpec.arithmetic(), 2.5, 4.0)
    assert (ev.M, ev.m_H, ev.m_K) == (2.5, 1.0, 0.0)


def test_harmonic_hand_oracle():
    # k1=1, k2=4 -> H=2.5, K=4; harmonic mean = 2/(1/1 + 1/4)
    ev = eval_mean(MeanSpec.harmonic(), 2.5, 4.0)
    assert ev.M == pytest.approx(2.0 / (1.0 / 1.0 + 1.0 / 4.0), rel=1e-14)
    assert ev.M == pytest.approx(1.6, rel=1e-14)


def test_holder2_hand_oracle():
    got = from_principal(MeanSpec.holder(2), 1.0, 4.0)
    assert got == pytest.approx(math.sqrt((1.0 + 16.0) / 2.0), rel=1e-13)
    assert got == pytest.approx(2.9154759, rel=1e-7)


def test_holder_minus1_hand_oracle():
    assert from_principal(MeanSpec.holder(-1), 2.0, 6.0) == pytest.approx(
        2.0 / (1.0 / 2.0 + 1.0 / 6.0), rel=1e-13)


def test_agm_against_quadrature():
    got = from_principal(MeanSpec.agm(), 1.0, 2.0)
    assert got == pytest.approx(1.4567910310, abs=1e-9)
    assert got == pytest.approx(agm_quadrature_oracle(1.0, 2.0), abs=1e-9)


def test_from_principal_diagonal_and_geometric():
    for spec in ALL_BUILTINS:
        assert from_principal(spec, 3.0, 3.0) == pytest.approx(3.0, rel=1e-12)
    assert from_principal(MeanSpec.geometric(), 1.0, 4.0) == pytest.approx(2.0, rel=1e-14)


def test_from_principal_matches_eval():
    rng = random.Random(5)
    for spec in ALL_BUILTINS:
        for _ in range(25):
            k1 = rng.uniform(0.05, 5.0)
            k2 = k1 + rng.uniform(0.01, 5.0)
            via_eval = eval_mean(spec, 0.5 * (k1 + k2), k1 * k2).M
            assert from_principal(spec, k1, k2) == pytest.approx(via_eval, rel=1e-11)


def test_from_principal_errors():
    with pytest.raises(NonPositivePrincipalCurvature):
        from_principal(MeanSpec.geometric(), -1.0, 2.0)
    with pytest.raises(OutsideElliptic):
        eval_mean(MeanSpec.geometric(), 1.0, 1.5)
    with pytest.raises(OutsideElliptic):
        eval_mean(MeanSpec.geometric(), -1.0, 0.5)


# ---------------------------------------------------------------------------
# axioms
# ---------------------------------------------------------------------------

def _samples(n, seed=42):
    rng = random.Random(seed)
    return [(rng.uniform(1e-3, 10.0), rng.uniform(1e-3, 10.0), rng.uniform(1e-3, 10.0))
            for _ in range(n)]


def test_axioms_holder07():
    rep = axiom_check(MeanSpec.holder(0.7), _samples(10_000))
    assert rep.passed
    assert max(rep.max_betweenness, rep.max_symmetry, rep.max_homogeneity) < 1e-10


def test_axioms_agm():
    rep = axiom_check(MeanSpec.agm(), _samples(1000, seed=3))
    assert max(rep.max_betweenness, rep.max_symmetry, rep.max_homogeneity) < 1e-9


def test_axioms_probe_expr_kinds():
    # (H*K)^(1/3) satisfies betweenness everywhere ((t^2+t)/2 <= 1 for
    # t = k1/k2 <= 1), so the probe reports a pass; spot value k1=1, k2=8
    # gives M = 36^(1/3), inside [1, 8]
    rep = axiom_check(MeanSpec.expr("(H*K)^(1/3)"), _samples(2000, seed=9))
    assert rep.max_betweenness == 0.0
    assert rep.passed
    m = from_principal(MeanSpec.expr("(H*K)^(1/3)"), 1.0, 8.0)
    assert m == pytest.approx(36.0 ** (1.0 / 3.0), rel=1e-12)
    assert 1.0 <= m <= 8.0
    # a genuinely non-mean expression is flagged through the same probe
    bad = axiom_check(MeanSpec.expr("1.2*H"), _samples(2000, seed=9))
    assert bad.max_betweenness > 1e-10
    assert not bad.passed


def test_holder_monotone_in_r():
    rng = random.Random(8)
    rs = [-3.0, -1.0, -0.3, 0.0, 0.4, 1.0, 2.5]
    for _ in range(200):
        k1 = rng.uniform(0.01, 8.0)
        k2 = k1 + rng.uniform(0.01, 8.0)
        vals = [from_principal(MeanSpec.holder(r), k1, k2) for r in rs]
        for a, b in zip(vals, vals[1:]):
            assert a <= b + 1e-12 * abs(b)


def test_holder_limits():
    rng = random.Random(12)
    for _ in range(50):
        k1 = rng.uniform(0.1, 4.0)
        k2 = k1 + rng.uniform(0.5, 4.0)
        hi = from_principal(MeanSpec.holder(200), k1, k2)
        lo = from_principal(MeanSpec.holder(-200), k1, k2)
        assert abs(hi - k2) / k2 <= 0.005
        assert abs(lo - k1) / k1 <= 0.005


def test_partials_against_fd():
    rng = random.Random(17)
    specs = [MeanSpec.arithmetic(), MeanSpec.geometric(), MeanSpec.harmonic(),
             MeanSpec.holder(0.7), MeanSpec.holder(-2.0), MeanSpec.agm(),
             MeanSpec.co(MeanSpec.harmonic())]
    for spec in specs:
        for _ in range(20):
            H = rng.uniform(0.5, 3.0)
            K = rng.uniform(0.1, 0.9) * H * H
            ev = eval_mean(spec, H, K)
            h = 1e-5 * H
            fd_H = (eval_mean(spec, H + h, K).M - eval_mean(spec, H - h, K).M) / (2 * h)
            hk = 1e-5 * K
            fd_K = (eval_mean(spec, H, K + hk).M - eval_mean(spec, H, K - hk).M) / (2 * hk)
            assert ev.m_H == pytest.approx(fd_H, rel=1e-6, abs=1e-8)
            assert ev.m_K == pytest.approx(fd_K, rel=1e-6, abs=1e-8)


def test_remark_slope_bound():
    # any mean with m(H,0) = 0 has dm/dK(H,0+) >= 1/(2H)
    for spec in [MeanSpec.geometric(), MeanSpec.harmonic(), MeanSpec.holder(-1.5),
                 MeanSpec.agm()]:
        H = 0.8
        K = 1e-7 * H * H
        slope = eval_mean(spec, H, K).M / K
        assert slope >= 1.0 / (2.0 * H) - 1e-6


def test_holder_special_cases_match_classical():
    rng = random.Random(23)
    classical = {-1.0: MeanSpec.harmonic(), 0.0: MeanSpec.geometric(),
                 1.0: MeanSpec.arithmetic()}
    for r, spec in classical.items():
        for _ in range(100):
            k1 = rng.uniform(0.01, 10.0)
            k2 = rng.uniform(0.01, 10.0)
            a = from_principal(MeanSpec.holder(r), k1, k2)
            b = from_principal(spec, k1, k2)
            assert a == pytest.approx(b, rel=1e-12)


def test_co_involution():
    rng = random.Random(31)
    spec = MeanSpec.co(MeanSpec.co(MeanSpec.holder(0.3)))
    for _ in range(50):
        k1 = rng.uniform(0.1, 5.0)
        k2 = rng.uniform(0.1, 5.0)
        assert from_principal(spec, k1, k2) == pytest.approx(
            from_principal(MeanSpec.holder(0.3), k1, k2), rel=1e-12)


def test_betweenness_invariant_of_eval():
    rng = random.Random(40)
    for spec in ALL_BUILTINS:
        for _ in range(50):
            H = rng.uniform(0.2, 4.0)
            K = rng.uniform(0.05, 0.999) * H * H
            ev = eval_mean(spec, H, K)
            s = math.sqrt(H * H - K)
            assert H - s - 1e-12 <= ev.M <= H + s + 1e-12


# ---------------------------------------------------------------------------
# regularity
# ---------------------------------------------------------------------------

def test_regularity_harmonic():
    rep = regularity(MeanSpec.harmonic(), H_probe=0.5)
    assert rep.one_regular == "case_a"
    assert rep.half_regular == "none"
    assert rep.m0 == pytest.approx(2.0, rel=1e-12)  # 1/H at H = 0.5
    assert rep.m0 > 1.0 / (2.0 * 0.5)


def test_regularity_geometric():
    rep = regularity(MeanSpec.geometric(), H_probe=1.7)
    assert rep.half_regular == "case_a"
    assert rep.one_regular == "none"
    assert rep.m0 == pytest.approx(1.0)


def test_regularity_arithmetic():
    rep = regularity(MeanSpec.arithmetic(), H_probe=1.0)
    assert rep.one_regular == "none" and rep.half_regular == "none"
    assert rep.positive_regular
    assert rep.min_Mbar == pytest.approx(1.0, rel=1e-9)
    assert rep.boundary_value == pytest.approx(1.0)


def test_regularity_co_kinds():
    rep = regularity(MeanSpec.co(MeanSpec.harmonic()), H_probe=0.5)
    assert rep.one_regular == "case_b"
    assert rep.boundary_value == pytest.approx(1.0)  # 2H
    rep2 = regularity(MeanSpec.co(MeanSpec.geometric()), H_probe=0.5)
    assert rep2.half_regular == "case_b"


def test_regularity_holder_negative_r_matches_harmonic_at_minus1():
    rep = regularity(MeanSpec.holder(-1.0), H_probe=0.5)
    assert rep.one_regular == "case_a"
    assert rep.m0 == pytest.approx(2.0, rel=1e-9)


def test_regularity_holder_positive_r_neither():
    rep = regularity(MeanSpec.holder(2.0), H_probe=1.0)
    assert rep.one_regular == "none" and rep.half_regular == "none"
    assert rep.boundary_value == pytest.approx(2.0 ** 0.5, rel=1e-12)


def test_regularity_agm_is_transcendental():
    rep = regularity(MeanSpec.agm(), H_probe=1.0)
    assert rep.one_regular == "none" and rep.half_regular == "none"


def test_regularity_expr_probe():
    rep = regularity(MeanSpec.expr("K/H"), H_probe=0.5)
    assert rep.one_regular == "case_a"
    assert rep.m0 == pytest.approx(2.0, rel=1e-3)
    rep2 = regularity(MeanSpec.expr("2*K"), H_probe=0.5)
    assert rep2.one_regular == "case_a"
    assert rep2.m0 == pytest.approx(2.0, rel=1e-3)


def test_positive_regularity_flags():
    assert regularity(MeanSpec.geometric()).positive_regular
    assert regularity(MeanSpec.harmonic()).positive_regular
    assert regularity(MeanSpec.holder(0.5)).positive_regular


def test_mean_jet_matches_partials():
    rng = random.Random(51)
    specs = [MeanSpec.arithmetic(), MeanSpec.geometric(), MeanSpec.harmonic(),
             MeanSpec.holder(0.7), MeanSpec.co(MeanSpec.harmonic()),
             MeanSpec.expr("0.5*K/H + 0.5*H*(K/H^2)^2")]
    for spec in specs:
        for _ in range(10):
            H = rng.uniform(0.5, 2.0)
            K = rng.uniform(0.2, 0.9) * H * H
            # chart jets: H(x,y) = H + x, K(x,y) = K + y to first order
            Hj = Jet.variable(0, 2, (0.0, 0.0)) + H
            Kj = Jet.variable(1, 2, (0.0, 0.0)) + K
            mj = mean_jet(spec, Hj, Kj)
            ev = eval_mean(spec, H, K)
            assert mj.value == pytest.approx(ev.M, rel=1e-12)
            assert mj.dx == pytest.approx(ev.m_H, rel=1e-6, abs=1e-9)
            assert mj.dy == pytest.approx(ev.m_K, rel=1e-6, abs=1e-9)


def test_json_roundtrip():
    spec = MeanSpec.co(MeanSpec.holder(0.5))
    assert MeanSpec.from_json(spec.to_json()) == spec
    spec2 = MeanSpec.from_json({"kind": "expr", "formula": "K/H"})
    assert spec2.formula == "K/H"
