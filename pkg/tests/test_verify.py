import json

import numpy as np
import pytest
from scipy import integrate

from dirtrace import gallery
from dirtrace.fields import ScalarField, constant, from_expression
from dirtrace.geometry import IntervalUnion, RectilinearUnion
from dirtrace.measure import mu_exact, mu_monte_carlo
from dirtrace.verify import (
    BadPartition,
    HypothesisViolated,
    NoSharedSupport,
    VerificationReport,
    check_1d_lemma,
    check_consistency,
    check_diff_bound,
    check_green,
    check_poincare,
    check_sufficiency_partition,
    check_sum_bound,
    check_trace_bound,
    run_jobs,
    sample_fields,
)

# ------------------------------------------------------------------- Green


def test_green_on_square_polynomials(square, rng):
    u, v = sample_fields(rng, 2)
    for theta in [(1, 0), (0.6, 0.8), (-1, 1)]:
        rep = check_green(square, u, v, theta)
        assert rep.passed, rep.summary()
        assert rep.details["lhs_route"] == "reference"


def test_green_routes_agree(l_poly, rng):
    u, v = sample_fields(rng, 2)
    a = check_green(l_poly, u, v, (1, 2), lhs_route="reference")
    b = check_green(l_poly, u, v, (1, 2), lhs_route="fiber")
    assert a.passed and b.passed
    assert a.lhs == pytest.approx(b.lhs, rel=1e-9)


def test_green_detects_a_wrong_gradient(square):
    # against a partner that is affine along the fiber both sides agree for
    # any derivative, so the partner has to be at least quadratic
    good = from_expression("x1^2 + x2")
    bad = ScalarField(good.u, lambda X: 1.1 * good.gradient(X), label="bad")
    v = from_expression("x1^2")
    assert check_green(square, bad, from_expression("x1"), (1, 0)).passed
    assert check_green(square, good, v, (1, 0)).passed
    rep = check_green(square, bad, v, (1, 0))
    assert not rep.passed
    assert rep.residual > 1e-3


def test_green_monte_carlo(l_poly):
    u, v = from_expression("x1*x2"), from_expression("cos(x1)")
    mu = mu_monte_carlo(l_poly, (1, 1), 40_000, seed=2)
    rep = check_green(l_poly, u, v, (1, 1), mu)
    assert rep.passed
    assert rep.details["mode"] == "mc"


def test_green_on_cusp(cusp):
    u, v = from_expression("x1 + x2^2"), from_expression("x2")
    rep = check_green(cusp, u, v, (0.6, 0.8))
    assert rep.residual <= 1e-3


def test_green_is_symmetric_and_odd_in_theta(l_poly, rng):
    u, v = sample_fields(rng, 2)
    a = check_green(l_poly, u, v, (0.6, 0.8))
    b = check_green(l_poly, v, u, (0.6, 0.8))
    c = check_green(l_poly, u, v, (-0.6, -0.8))
    assert b.lhs == pytest.approx(a.lhs, rel=1e-12)
    assert b.rhs == pytest.approx(a.rhs, rel=1e-12)
    assert c.lhs == pytest.approx(-a.lhs, rel=1e-12)
    assert c.rhs == pytest.approx(-a.rhs, rel=1e-10)


@pytest.mark.parametrize("theta", [(1, 0), (0, 1), (0.6, 0.8)])
def test_green_residual_shrinks_under_refinement(cusp, theta):
    u, v = from_expression("x1 + x2^2"), from_expression("x1*x2 + x2^3")
    res = [
        check_green(cusp, u, v, theta, mu_exact(cusp, theta, order=2, max_levels=1, rtol=0, refine=r)).residual
        for r in (0, 1)
    ]
    assert res[0] > 1e-6
    assert res[1] <= res[0] / 2


def test_report_json_round_trip(square):
    rep = check_green(square, from_expression("x1"), constant(1.0), (1, 0))
    back = VerificationReport.from_json(rep.to_json())
    assert back == rep
    assert json.loads(rep.to_json())["check_name"] == "green"


# ------------------------------------------------------------------ bounds


def test_bounds_on_square(square):
    u = from_expression("sin(pi*x1) + x2^2")
    mu = mu_exact(square, (0.6, 0.8))
    for check in (check_trace_bound, check_sum_bound, check_diff_bound):
        rep = check(square, u, (0.6, 0.8), mu)
        assert rep.passed, rep.summary()
        assert rep.lhs <= rep.rhs


def half_square():
    return RectilinearUnion([[[0, 0], [0.5, 0.5]]], name="half_square")


def test_sum_bound_counterexample_on_a_small_square():
    # ]0, 1/2[^2, u = 1 + (x1 - 1/4)^2 / 10 along (1, 0): traces 1 + 1/160 at both ends
    dom = half_square()
    u = from_expression("1 + (x1 - 1/4)^2/10")
    a = 1 + 1 / 160
    lhs = 0.25 * (2 * a) ** 2
    f = lambda x: (1 + (x - 0.25) ** 2 / 10) ** 2 + ((x - 0.25) / 5) ** 2  # noqa: E731
    norm2 = 0.5 * integrate.quad(f, 0, 0.5, epsabs=1e-14)[0]
    assert lhs > 4 * norm2
    rep4 = check_sum_bound(dom, u, (1, 0))
    rep8 = check_sum_bound(dom, u, (1, 0), constant=8.0)
    assert rep4.lhs == pytest.approx(lhs, rel=1e-10)
    assert rep4.rhs == pytest.approx(4 * norm2, rel=1e-10)
    assert not rep4.passed
    assert rep8.passed
    assert rep8.details["constant"] == 8.0


def test_poincare_needs_a_vanishing_trace(square):
    u = from_expression("1 - x1")
    rep = check_poincare(square, u, (1, 0))
    # ||u|| = 1/sqrt(3), diam ||d_1 u|| = sqrt(2)
    assert rep.lhs == pytest.approx(3**-0.5, rel=1e-10)
    assert rep.rhs == pytest.approx(2**0.5, rel=1e-10)
    assert rep.passed
    with pytest.raises(HypothesisViolated):
        check_poincare(square, from_expression("x1"), (1, 0))


# ------------------------------------------------------------- consistency


def test_two_intervals_are_inconsistent():
    entry = gallery.disconnected_1d()
    rep = check_consistency(entry.domain, entry.fields["u"], [(1.0,), (-1.0,)])
    assert rep.verdict == "inconsistent"
    (w,) = [c for c in rep.clusters if abs(c["point"][0] - 1) < 1e-12]
    assert sorted(w["values"].values()) == pytest.approx([0.0, 1.0], abs=1e-9)
    assert rep.max_spread == pytest.approx(1.0, abs=1e-9)


def test_slit_spread_is_twice_the_height():
    entry = gallery.slit_square()
    probes = [(0.5, s) for s in (0.2, 0.5, 0.8)]
    rep = check_consistency(entry.domain, entry.fields["u"], [(1, 0), (-1, 0)], probes=probes)
    assert rep.verdict == "inconsistent"
    for s in (0.2, 0.5, 0.8):
        (c,) = [c for c in rep.clusters if np.allclose(c["point"], (0.5, s))]
        assert c["spread"] == pytest.approx(2 * s, abs=1e-8)


def test_smooth_field_is_consistent(square):
    dirs = [(np.cos(a), np.sin(a)) for a in np.linspace(0, 2 * np.pi, 8, endpoint=False)]
    rep = check_consistency(square, from_expression("exp(x1)*x2"), dirs)
    assert rep.verdict == "consistent"
    assert rep.max_spread <= 1e-8
    assert rep.to_report().passed


def test_disjoint_supports():
    d = IntervalUnion([(0, 1)])
    u = from_expression("x1", dim=1)
    rep = check_consistency(d, u, [(1.0,), (-1.0,)])
    assert rep.verdict == "no-shared-support"
    with pytest.raises(NoSharedSupport):
        check_consistency(d, u, [(1.0,), (-1.0,)], strict=True)


# --------------------------------------------------------------- 1-D lemma


def test_one_dimensional_counterexample_to_constant_four():
    # f = 1 + (t - 1/2)^2 / 10 on ]0, 1[: (a + b)^2 = 4.2025 > 4 ||f||^2
    f = lambda t: (1 + (t - 0.5) ** 2 / 10) ** 2 + ((t - 0.5) / 5) ** 2  # noqa: E731
    n2 = integrate.quad(f, 0, 1, epsabs=1e-15)[0]
    assert (2 * 1.025) ** 2 > 4 * n2
    assert (2 * 1.025) ** 2 <= 8 * n2


def test_lemma_with_constant_eight():
    rep = check_1d_lemma(200, seed=0, sum_constant=8.0)
    assert rep.passed, rep.details
    assert rep.lhs <= 1e-10


def test_lemma_with_constant_four_finds_the_violation():
    rep = check_1d_lemma(200, seed=0)
    assert not rep.passed
    assert rep.details["sum"] < 0
    assert min(rep.details[k] for k in ("max", "diff", "poincare")) >= -1e-10


# -------------------------------------------------------------- partition


def test_bicantor_partition():
    entry = gallery.bicantor()
    rep = check_sufficiency_partition(entry.domain, entry.subdomains, gallery.PARTITION_DIRECTIONS)
    assert rep.passed, rep.details


def test_overlapping_subdomains_are_rejected(square):
    a = RectilinearUnion([[[0, 0], [0.6, 1]]])
    b = RectilinearUnion([[[0.4, 0], [1, 1]]])
    with pytest.raises(BadPartition):
        check_sufficiency_partition(square, [a, b], [(1, 0)])


# ------------------------------------------------------------------- jobs


def test_run_jobs_is_order_independent():
    jobs = [(f"j{i}", (lambda i=i: i * i)) for i in (3, 1, 2)]
    assert run_jobs(jobs) == run_jobs(jobs, workers=3) == [("j1", 1), ("j2", 4), ("j3", 9)]
