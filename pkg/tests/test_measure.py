import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirtrace.geometry import Direction, IntervalUnion, Oracle, Polygon, RectilinearUnion, UnsupportedKind
from dirtrace.measure import (
    DegenerateDomain,
    NonFiniteIntegrand,
    arclength_study,
    build_measure,
    cusp_arclength_l2,
    densities_json,
    integrate_boundary,
    measure_of,
    mu_exact,
    mu_monte_carlo,
    read_nodes_csv,
    rng_for,
    to_csv,
    volume_integral,
)

angles = st.floats(0, 360, exclude_max=True)


def shoelace(V):
    V = np.asarray(V, dtype=float)
    x, y = V[:, 0], V[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ------------------------------------------------------------- total mass


@given(angle=angles)
def test_square_mass_is_area(square, angle):
    mu = mu_exact(square, Direction.from_degrees(angle))
    assert mu.total_mass == pytest.approx(1.0, rel=1e-12)


@given(angle=angles)
def test_l_shape_mass_is_area(l_poly, l_boxes, angle):
    d = Direction.from_degrees(angle)
    area = shoelace(l_poly.vertices)
    assert mu_exact(l_poly, d).total_mass == pytest.approx(area, rel=1e-12)
    assert mu_exact(l_boxes, d).total_mass == pytest.approx(area, rel=1e-12)


@settings(max_examples=15)
@given(angle=angles)
def test_cusp_mass_is_area(cusp, angle):
    # area of -x2^3 < x1 < x2^3, 0 < x2 < 1 is 2 * 1/4
    mu = mu_exact(cusp, Direction.from_degrees(angle))
    assert mu.total_mass == pytest.approx(0.5, rel=1e-9)


def test_random_polygon_mass(rng):
    r = 0.5 + 0.4 * rng.random(24)
    a = 2 * np.pi * (np.arange(24) + rng.uniform(0, 0.9, 24)) / 24
    V = np.c_[r * np.cos(a), r * np.sin(a)]
    P = Polygon(V)
    for ang in rng.uniform(0, 360, 5):
        assert mu_exact(P, Direction.from_degrees(ang)).total_mass == pytest.approx(shoelace(V), rel=1e-11)


def test_mass_is_the_same_for_opposite_directions(l_poly):
    a = mu_exact(l_poly, (0.6, 0.8))
    b = mu_exact(l_poly, (-0.6, -0.8))
    assert a.total_mass == pytest.approx(b.total_mass, rel=1e-13)


def test_monte_carlo_total_within_three_sigma(l_poly):
    mu = mu_monte_carlo(l_poly, (1, 2), 50_000, seed=3)
    assert abs(mu.total_mass - 3.0) <= 3 * mu.mass_error


def test_monte_carlo_is_reproducible(square):
    a = mu_monte_carlo(square, (1, 0), 1000, seed=5)
    b = mu_monte_carlo(square, (1, 0), 1000, seed=5)
    c = mu_monte_carlo(square, (1, 0), 1000, seed=6)
    assert np.array_equal(a.exit_points, b.exit_points)
    assert not np.array_equal(a.exit_points, c.exit_points)


def test_rng_streams_depend_on_job_label():
    assert rng_for(1, "a").random() == rng_for(1, "a").random()
    assert rng_for(1, "a").random() != rng_for(1, "b").random()


def test_empty_oracle_is_degenerate():
    empty = Oracle(lambda X: np.zeros(len(X), dtype=bool), [[0, 0], [1, 1]])
    with pytest.raises(DegenerateDomain):
        mu_monte_carlo(empty, (1, 0), 100, seed=0)


def test_oracle_has_no_exact_sweep():
    disc = Oracle(lambda X: (X**2).sum(1) < 1, [[-1, -1], [1, 1]])
    with pytest.raises(UnsupportedKind):
        mu_exact(disc, (1, 0))
    assert build_measure(disc, (1, 0), n_samples=1000).mode == "mc"


# ---------------------------------------------------------------- 1-D


def test_one_dimensional_atoms_are_chords():
    d = IntervalUnion([(0, 1), (2, 2.5)])
    mu = mu_exact(d, (1.0,))
    assert mu.exit_points[:, 0].tolist() == [1.0, 2.5]
    assert mu.weights.tolist() == [1.0, 0.5]
    back = mu_exact(d, (-1.0,))
    assert sorted(back.exit_points[:, 0].tolist()) == [0.0, 2.0]
    assert [a[2] for a in mu.atoms] == ["fiber-exit"] * 2


# ------------------------------------------------------- boundary integrals


def test_chord_weighting_on_the_square(square):
    mu = mu_exact(square, (1, 0))
    # exits (1, y) with chord 1: int z2 dmu = 1/2
    assert integrate_boundary(mu, lambda z: z[:, 1]).value == pytest.approx(0.5, abs=1e-14)
    assert np.allclose(mu.exit_points[:, 0], 1.0)
    assert np.allclose(mu.partners[:, 0], 0.0)


def test_divided_measure_counts_fibers(l_poly):
    # one fiber per height, so the chord-divided mass is the projected width
    mu = mu_exact(l_poly, (1, 0))
    assert mu.divided().total_mass == pytest.approx(2.0, rel=1e-12)
    assert integrate_boundary(mu, lambda z: np.ones(len(z)), divide_by_chord=True).value == pytest.approx(2.0)


def test_l_shape_exit_masses_by_edge(l_poly):
    # along (1, 0): edge x1 = 2 receives 2 (chord 2, height 1), edge x1 = 1 receives 1
    mu = mu_exact(l_poly, (1, 0))
    assert measure_of(mu, lambda z: np.abs(z[:, 0] - 2) < 1e-9) == pytest.approx(2.0, rel=1e-10)
    assert measure_of(mu, lambda z: np.abs(z[:, 0] - 1) < 1e-9) == pytest.approx(1.0, rel=1e-10)


def test_measure_of_half_edge(square):
    mu = mu_exact(square, (0, 1))
    assert measure_of(mu, lambda z: z[:, 0] < 0.3) == pytest.approx(0.3, abs=1e-12)


def test_non_finite_integrand_is_rejected(cusp):
    mu = mu_exact(cusp, (1, 0))
    with pytest.raises(NonFiniteIntegrand):
        integrate_boundary(mu, lambda z: np.where(z[:, 1] < 0.5, np.nan, 1.0))


def test_volume_integral_on_fibers(l_poly):
    mu = mu_exact(l_poly, (0.6, 0.8))
    vals, err = volume_integral(mu, lambda X: np.array([X[:, 0] ** 2 * X[:, 1], np.ones(len(X))]))
    # int_L x^2 y = int_0^2 x^2 dx int_0^1 y dy + int_0^1 x^2 dx int_1^2 y dy = 4/3 + 1/2
    assert vals == pytest.approx([4 / 3 + 0.5, 3.0], rel=1e-10)
    assert err < 1e-8


def test_cusp_weighted_integral(cusp):
    # mu along (1,0) has density 2 x2^3 in x2, so int x2^(-1.5) dmu = 2/2.5
    mu = mu_exact(cusp, (1, 0))
    res = integrate_boundary(mu, lambda z: z[:, 1] ** -1.5)
    assert res.value == pytest.approx(0.8, rel=1e-10)


def test_refinement_adds_nodes(cusp):
    a = mu_exact(cusp, (0.6, 0.8))
    b = mu_exact(cusp, (0.6, 0.8), refine=1)
    assert len(b.nodes) > len(a.nodes)
    assert b.total_mass == pytest.approx(0.5, rel=1e-9)


# -------------------------------------------------------------- exports


def test_csv_round_trip(l_poly):
    mu = mu_exact(l_poly, (1, 1))
    Z, w = read_nodes_csv(to_csv(mu))
    assert np.array_equal(Z, mu.exit_points)
    assert np.array_equal(w, mu.weights)
    assert math.fsum(w) == pytest.approx(3.0, rel=1e-12)


def test_densities_json_pieces(l_poly):
    doc = json.loads(densities_json(mu_exact(l_poly, (1, 0))))
    assert doc["total_mass"] == pytest.approx(3.0)
    assert doc["pieces"]
    for p in doc["pieces"]:
        assert len(p["eta_nodes"]) == len(p["chord"]) == len(p["arclength_density"])


# ------------------------------------------------------------ arclength


def test_cusp_arclength_cutoff_integral():
    # without the sqrt(1 + 9 t^4) factor the value is 2 (eps^(1-2a) - 1) / (2a - 1); the factor only adds
    a, eps = 0.75, 1e-3
    bare = 2 * (eps ** (1 - 2 * a) - 1) / (2 * a - 1)
    assert cusp_arclength_l2(a, eps) > bare
    assert cusp_arclength_l2(a, eps) < bare * math.sqrt(10)


def test_arclength_study_grows():
    vals = [v for _, v in arclength_study(0.75, [0.5**k for k in range(1, 8)])]
    assert np.all(np.diff(vals) > 0)
