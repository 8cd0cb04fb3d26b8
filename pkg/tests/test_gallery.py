import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from dirtrace import gallery
from dirtrace.fields import check_gradient
from dirtrace.gallery import (
    BadRho,
    cantor_depth_for,
    cantor_gaps,
    cantor_remainder,
    riser_series,
    riser_slope,
    riser_tail,
    serpent_boxes,
    truncated_mass,
)
from dirtrace.geometry import RectilinearUnion

FAST = ["square", "l_shape", "cantor", "cusp", "two_intervals", "slit_square", "bicantor"]


@pytest.mark.parametrize("name", FAST)
def test_golden_values(name):
    entry = gallery.build(name)
    results = entry.check()
    assert results
    for e, got, ok in results:
        assert ok, f"{name}: {e.quantity} expected {e.value} got {got}"


def test_golden_values_cantor_disc():
    for e, got, ok in gallery.build("cantor_disc", depth=6).check():
        assert ok, f"{e.quantity}: expected {e.value} got {got}"


def test_golden_values_serpent():
    for e, got, ok in gallery.build("serpent", k_max=8).check():
        assert ok, f"{e.quantity}: expected {e.value} got {got}"


def test_unknown_entry():
    with pytest.raises(KeyError):
        gallery.build("koch")


# ------------------------------------------------------------------ Cantor


@pytest.mark.parametrize("rho", [0.0, -0.1, 0.34, 0.5, 1.0])
def test_bad_rho(rho):
    with pytest.raises(BadRho):
        cantor_gaps(rho, 3)


@given(rho=st.floats(0.05, 1 / 3), depth=st.integers(0, 9))
def test_cantor_gap_structure(rho, depth):
    gaps = cantor_gaps(rho, depth)
    assert len(gaps) == 2 ** (depth + 1) - 1
    for c, d, k in gaps:
        assert d - c == pytest.approx(rho ** (k + 1), rel=1e-12)
    c = np.array([g[0] for g in gaps])
    d = np.array([g[1] for g in gaps])
    assert np.all(d[:-1] <= c[1:])
    assert 0 < c[0] and d[-1] < 1
    assert math.fsum(d - c) == pytest.approx(truncated_mass(rho, depth), rel=1e-12)


def test_cantor_remainder_complements_the_gaps():
    rem = cantor_remainder(0.25, 4)
    gaps = cantor_gaps(0.25, 4)
    assert len(rem) == len(gaps) + 1
    total = sum(b - a for a, b in rem) + sum(d - c for c, d, _ in gaps)
    assert total == pytest.approx(1.0, abs=1e-15)


def test_cantor_atoms_are_exact_powers():
    entry = gallery.cantor_complement(rho=1 / 3, depth=8)
    assert gallery.atom_weight_error(entry) <= 1e-15


@pytest.mark.parametrize("eps", [1e-2, 3e-3, 1e-3, 2e-4])
def test_cantor_depth_is_the_smallest_sufficient(eps):
    K = cantor_depth_for(eps)
    assert (2 / 3) ** (K + 1) <= eps < (2 / 3) ** K


def test_slit_shadow_mass_closed_form():
    # a single slit ]-1/2, 1/2[ in the disc of radius 2 at depth 0 is ]-1/2,-1/6[ and ]1/6,1/2[
    r = 2.0
    f = lambda x: math.sqrt(r * r - x * x)  # noqa: E731
    want = quad(f, -0.5, -1 / 6)[0] + quad(f, 1 / 6, 0.5)[0]
    assert gallery.slit_shadow_mass(0, r) == pytest.approx(want, rel=1e-12)


# ------------------------------------------------------------------- cusp


def test_cusp_rejects_alpha_outside_the_range():
    with pytest.raises(ValueError):
        gallery.cusp(0.5)


def test_arclength_divergence_flag():
    assert gallery.arclength_diverges(0.75)


# ----------------------------------------------------------------- serpent


def serpent_by_removal(X, k_max):
    """Membership from the set-difference definition, cut at x > 1/(4 k_max + 4)."""
    x, y = X[:, 0], X[:, 1]
    inside = (x > 1 / (4 * k_max + 4)) & (x < 0.3) & (y > 0) & (y < 1)
    for k in range(1, k_max + 2):
        inside &= ~((x >= 1 / (4 * k + 3)) & (x <= 1 / (4 * k + 2)) & (y <= 0.8))
        inside &= ~((x >= 1 / (4 * k + 1)) & (x <= 1 / (4 * k)) & (y >= 0.2))
    return inside


def test_serpent_boxes_match_the_removal_definition(rng):
    k_max = 6
    dom = RectilinearUnion(serpent_boxes(k_max))
    X = np.c_[rng.uniform(0, 0.3, 200_000), rng.uniform(0, 1, 200_000)]
    assert np.array_equal(dom.contains(X), serpent_by_removal(X, k_max))


def test_riser_slope_arithmetic():
    assert riser_slope(2) == pytest.approx(0.315345, abs=5e-7)
    assert riser_slope(1) == pytest.approx(5 / 3)


def test_serpent_field_bounds_per_block(rng):
    k_max = 10
    entry = gallery.serpent(k_max)
    u = entry.fields["u"]
    X = np.c_[rng.uniform(1 / (4 * k_max + 4), 0.25, 50_000), rng.uniform(0, 1, 50_000)]
    X = X[entry.domain.contains(X)]
    k = np.floor(1 / (4 * X[:, 0])).astype(int)
    vals = u(X)
    assert np.all(vals >= (k - 1) ** 0.25 - 1e-12)
    assert np.all(vals <= k**0.25 + 1e-12)


def test_serpent_field_is_continuous_inside(rng):
    entry = gallery.serpent(6)
    u = entry.fields["u"]
    X = np.c_[rng.uniform(1 / 28, 0.3, 40_000), rng.uniform(0, 1, 40_000)]
    for step in ([1e-7, 0.0], [0.0, 1e-7]):
        Y = X + step
        both = entry.domain.contains(X) & entry.domain.contains(Y)
        assert np.max(np.abs(u(Y[both]) - u(X[both]))) < 1e-6


def test_serpent_gradient(rng):
    entry = gallery.serpent(6)
    X = np.c_[rng.uniform(1 / 28, 0.3, 4000), rng.uniform(0, 1, 4000)]
    h = 1e-6
    keep = entry.domain.contains(X)
    for d in ([h, 0], [-h, 0], [0, h], [0, -h]):
        keep &= entry.domain.contains(X + d)
    # kinks at y = 0.2 and 0.8 on the risers
    keep &= (np.abs(X[:, 1] - 0.2) > 1e-5) & (np.abs(X[:, 1] - 0.8) > 1e-5)
    for v in ([1.0, 0.0], [0.0, 1.0]):
        assert check_gradient(entry.fields["u"], X[keep], v, h) < 1e-6


def test_riser_series_converges():
    # terms decay like k^-3.5, so the tail past 64 is tiny and partial sums settle
    assert riser_tail(64) < 1e-3
    assert riser_tail(64) < riser_tail(16) < riser_tail(4)
    total = riser_series(1, 10**6) + riser_tail(10**6, 10**6 + 1)
    assert riser_series(1, 64) == pytest.approx(total, abs=riser_tail(64) + 1e-15)


def test_column_means_grow_without_bound():
    entry = gallery.serpent(32)
    means = []
    for k in (4, 8, 16, 32):
        x = 0.5 * (1 / (4 * k + 4) + 1 / (4 * k + 3))
        means.append(gallery.column_mean(entry, x))
        assert means[-1] >= (k - 1) ** 0.25
    assert np.all(np.diff(means) > 0)
