"""Example domains and fields, each with the quantities it is known to produce."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import ScalarField, constant, from_expression
from .geometry import Cusp, Direction, Domain, IntervalUnion, Polygon, RectilinearUnion, fiber
from .measure import arclength_study, integrate_boundary, measure_of, mu_exact, mu_monte_carlo
from .quadrature import integrate
from .trace import trace_at
from .verify import check_green, check_sufficiency_partition


class BadRho(ValueError):
    pass


@dataclass(frozen=True)
class Expected:
    """A golden value: ``compute(entry)`` must land within ``tolerance`` of ``value``."""

    quantity: str
    value: float
    origin: str
    tolerance: float
    compute: Callable[["GalleryEntry"], float] = field(repr=False, compare=False)


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    domain: Domain
    fields: dict
    expected: tuple = ()
    params: dict = field(default_factory=dict)
    subdomains: tuple = ()

    def check(self) -> list[tuple[Expected, float, bool]]:
        out = []
        for e in self.expected:
            got = float(e.compute(self))
            out.append((e, got, abs(got - e.value) <= e.tolerance))
        return out


# ------------------------------------------------------------------ basics


def unit_square() -> GalleryEntry:
    dom = RectilinearUnion([[[0, 0], [1, 1]]], name="square")
    flds = {"x1": from_expression("x1"), "x1*x2": from_expression("x1*x2"), "sin": from_expression("sin(pi*x1)")}
    exp = (
        Expected("area", 1.0, "trivial", 1e-12, lambda e: e.domain.area()),
        Expected("mu total (1,0)", 1.0, "computed", 1e-12, lambda e: mu_exact(e.domain, (1, 0)).total_mass),
        Expected("trace x1 at (1,0.5)", 1.0, "trivial", 1e-9,
                 lambda e: trace_at(e.fields["x1"], e.domain, (1, 0), (0.3, 0.5)).value),
    )
    return GalleryEntry("square", dom, flds, exp)


L_SHAPE = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]


def l_shape() -> GalleryEntry:
    dom = Polygon(L_SHAPE, name="l_shape")
    exp = (
        Expected("area", 3.0, "computed", 1e-12, lambda e: e.domain.area()),
        Expected("mu total (1,2)", 3.0, "computed", 1e-9, lambda e: mu_exact(e.domain, (1, 2)).total_mass),
    )
    return GalleryEntry("l_shape", dom, {"x1*x2": from_expression("x1*x2")}, exp)


# ------------------------------------------------------------------ Cantor


def cantor_gaps(rho: float, depth: int) -> list[tuple[float, float, int]]:
    """Removed open intervals ``(c, d, level)`` for levels ``0..depth``.

    At level ``k`` every remaining closed interval ``[a, b]`` loses its
    centred open middle of length ``rho**(k+1)``.
    """
    if not 0 < rho <= 1 / 3:
        raise BadRho(f"rho must lie in (0, 1/3], got {rho!r}")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    remain = [(0.0, 1.0)]
    gaps = []
    for k in range(depth + 1):
        w = rho ** (k + 1)
        nxt = []
        for a, b in remain:
            mid = 0.5 * (a + b)
            c, d = mid - 0.5 * w, mid + 0.5 * w
            gaps.append((c, d, k))
            nxt += [(a, c), (d, b)]
        remain = nxt
    gaps.sort()
    return gaps


def cantor_remainder(rho: float, depth: int) -> list[tuple[float, float]]:
    """Closed intervals left after removing levels ``0..depth``."""
    gaps = cantor_gaps(rho, depth)
    pts = [0.0] + [x for c, d, _ in gaps for x in (c, d)] + [1.0]
    return list(zip(pts[0::2], pts[1::2]))


def truncated_mass(rho: float, depth: int) -> float:
    return (rho - rho * (2 * rho) ** (depth + 1)) / (1 - 2 * rho)


def _sawtooth(gaps) -> ScalarField:
    c = np.array([g[0] for g in gaps])
    d = np.array([g[1] for g in gaps])
    mid = 0.5 * (c + d)

    def comp(X):
        return np.searchsorted(c, X[:, 0], side="right") - 1

    return ScalarField(lambda X: X[:, 0] - mid[np.clip(comp(X), 0, len(c) - 1)],
                       lambda X: np.ones_like(X), label="sawtooth", component=comp)


def atom_weight_error(entry: GalleryEntry) -> float:
    """Largest gap between the atom at ``d_m`` and ``rho**(k+1)`` for its level ``k``."""
    rho, depth = entry.params["rho"], entry.params["depth"]
    mu = mu_exact(entry.domain, (1.0,))
    z = mu.exit_points[:, 0]
    worst = 0.0
    for c, d, k in cantor_gaps(rho, depth):
        w = mu.weights[np.abs(z - d) <= 1e-14].sum()
        worst = max(worst, abs(w - rho ** (k + 1)))
    return worst


def cantor_complement(rho: float = 0.25, depth: int = 6) -> GalleryEntry:
    gaps = cantor_gaps(rho, depth)
    dom = IntervalUnion([(c, d) for c, d, _ in gaps], name=f"cantor(rho={rho},K={depth})",
                        meta={"rho": rho, "depth": depth})
    first = next(g for g in gaps if g[2] == 0)
    exp = (
        Expected("atom count", 2 ** (depth + 1) - 1, "computed", 0,
                 lambda e: len(mu_exact(e.domain, (1.0,)).nodes)),
        Expected("truncated total", truncated_mass(rho, depth), "computed", 1e-12,
                 lambda e: mu_exact(e.domain, (1.0,)).total_mass),
        Expected("weight at d_1", rho, "example", 1e-15,
                 lambda e: measure_of(mu_exact(e.domain, (1.0,)), lambda z: np.abs(z[:, 0] - first[1]) < 1e-14)),
        Expected("full-mass limit", rho / (1 - 2 * rho), "example", 1e-12,
                 lambda e: truncated_mass(rho, depth) + (mu_exact(e.domain, (1.0,)).truncation_deficit or 0.0)),
        Expected("cantor set measure", (1 - 3 * rho) / (1 - 2 * rho), "example", 1e-12,
                 lambda e: 1 - e.domain.area() - mu_exact(e.domain, (1.0,)).truncation_deficit),
        Expected("max atom weight error", 0.0, "example", 1e-15, lambda e: atom_weight_error(e)),
    )
    return GalleryEntry("cantor", dom, {"sawtooth": _sawtooth(gaps)}, exp, {"rho": rho, "depth": depth})


# -------------------------------------------------------------------- cusp


def cusp(alpha: float = 0.75) -> GalleryEntry:
    if not 0.5 < alpha < 1:
        raise ValueError("alpha must lie in (1/2, 1)")
    dom = Cusp()
    u = from_expression(f"x2^(-{alpha!r})")

    def l2(e):
        from .trace import trace_field

        mu = mu_exact(e.domain, (1, 0))
        tb = trace_field(e.fields["u"], mu)
        return float(np.dot(mu.weights, tb.values[0] ** 2))

    exp = (
        Expected("mu total (1,0)", 0.5, "computed", 1e-12, lambda e: mu_exact(e.domain, (1, 0)).total_mass),
        Expected("int trace^2 dmu", 1 / (2 - alpha), "computed", 1e-4, l2),
        Expected("int x2^(-2 alpha) dmu", 1 / (2 - alpha), "computed", 1e-9,
                 lambda e: integrate_boundary(mu_exact(e.domain, (1, 0)), lambda z: z[:, 1] ** (-2 * alpha)).value),
        Expected("trace at (0,0.5)", 0.5 ** (-alpha), "computed", 1e-9,
                 lambda e: trace_at(e.fields["u"], e.domain, (1, 0), (0.0, 0.5)).value),
        Expected("arclength L2 diverges", 1.0, "example", 0.0, lambda e: float(arclength_diverges(alpha))),
    )
    return GalleryEntry("cusp", dom, {"u": u}, exp, {"alpha": alpha})


def arclength_diverges(alpha: float, halvings: int = 6) -> bool:
    """Arclength L2 norm of ``x2**-alpha`` grows without bound as the cutoff shrinks.

    Numerically: the cutoff integrals increase strictly, and the growth
    exponent ``1 - 2 alpha`` is non-positive so no finite limit exists.
    """
    vals = [v for _, v in arclength_study(alpha, [0.5 ** (k + 1) for k in range(halvings + 1)])]
    return bool(np.all(np.diff(vals) > 0) and 2 * alpha >= 1)


# ------------------------------------------------------- counterexamples


def disconnected_1d() -> GalleryEntry:
    dom = IntervalUnion([(0, 1), (1, 2)], name="two_intervals")

    def comp(X):
        return (X[:, 0] > 1).astype(int)

    u = ScalarField(lambda X: np.where(X[:, 0] < 1, X[:, 0], X[:, 0] - 1), lambda X: np.ones_like(X),
                    label="two_intervals", component=comp)
    table = {("+", 0.5): 1.0, ("+", 1.5): 1.0, ("-", 0.5): 0.0, ("-", 1.5): 0.0}
    exp = tuple(
        Expected(f"trace {s}1 at {'z=1' if (s, x) in [('+', 0.5), ('-', 1.5)] else ('z=2' if s == '+' else 'z=0')}",
                 val, "example", 1e-9,
                 (lambda e, s=s, x=x: trace_at(e.fields["u"], e.domain, (1.0 if s == "+" else -1.0,), (x,)).value))
        for (s, x), val in table.items()
    )
    return GalleryEntry("two_intervals", dom, {"u": u}, exp)


def slit_square() -> GalleryEntry:
    dom = RectilinearUnion([[[0, -1], [1, 1]]], slits=[[[0.5, 0.0], [0.5, 1.0]]], name="slit_square")

    def comp(X):
        return np.where(X[:, 1] <= 0, 0, np.where(X[:, 0] < 0.5, 1, 2))

    def uf(X):
        c = comp(X)
        return np.where(c == 0, 0.0, np.where(c == 1, -X[:, 1], X[:, 1]))

    def gf(X):
        c = comp(X)
        g = np.zeros_like(X)
        g[:, 1] = np.where(c == 0, 0.0, np.where(c == 1, -1.0, 1.0))
        return g

    u = ScalarField(uf, gf, label="slit_square", component=comp)
    exp = []
    for s in (0.2, 0.5, 0.8):
        exp.append(Expected(f"trace (1,0) at (0.5,{s})", -s, "example", 1e-9,
                            lambda e, s=s: trace_at(e.fields["u"], e.domain, (1, 0), (0.25, s)).value))
        exp.append(Expected(f"trace (-1,0) at (0.5,{s})", s, "example", 1e-9,
                            lambda e, s=s: trace_at(e.fields["u"], e.domain, (-1, 0), (0.75, s)).value))
    exp.append(Expected("slit face mass (1,0)", 0.5, "computed", 1e-12,
                        lambda e: measure_of(mu_exact(e.domain, (1, 0)),
                                             lambda z: (np.abs(z[:, 0] - 0.5) < 1e-12) & (z[:, 1] > 0))))
    return GalleryEntry("slit_square", dom, {"u": u}, tuple(exp))


# ------------------------------------------------------------- Cantor disc


def cantor_disc(depth: int = 8, n_sides: int = 720, radius: float = 2.0) -> GalleryEntry:
    ang = 2 * np.pi * np.arange(n_sides) / n_sides
    verts = radius * np.c_[np.cos(ang), np.sin(ang)]
    slits = [[[a - 0.5, 0.0], [b - 0.5, 0.0]] for a, b in cantor_remainder(1 / 3, depth)]
    dom = Polygon(verts, slits=slits, name=f"cantor_disc(K={depth})")
    poly_area = 0.5 * n_sides * radius**2 * math.sin(2 * math.pi / n_sides)
    shadow = slit_shadow_mass(depth, radius)
    exp = (
        Expected("polygon area", poly_area, "computed", 1e-12, lambda e: e.domain.area()),
        Expected("disc area gap", math.pi * radius**2 - poly_area, "computed", 1e-12,
                 lambda e: math.pi * radius**2 - e.domain.area()),
        # the 720-gon shortens chords near x = +-1/2 by about 1e-6
        Expected("slit mass along (0,1)", shadow, "computed", 1e-5,
                 lambda e: measure_of(mu_exact(e.domain, (0, 1)), lambda z: e.domain.slits.on_slit(z))),
    )
    return GalleryEntry("cantor_disc", dom, {}, exp, {"depth": depth, "n_sides": n_sides})


def slit_shadow_mass(depth: int, radius: float = 2.0) -> float:
    """``int sqrt(r^2 - x^2) dx`` over the slits: their mass along ``(0, 1)`` in the round disc."""

    def F(x):
        return 0.5 * (x * math.sqrt(radius**2 - x**2) + radius**2 * math.asin(x / radius))

    return float(sum(F(b - 0.5) - F(a - 0.5) for a, b in cantor_remainder(1 / 3, depth)))


def cantor_depth_for(eps: float) -> int:
    """Smallest depth whose total remainder length ``(2/3)**(K+1)`` is at most ``eps``.

    The truncated slit set then carries no more than about ``2 eps`` of mass,
    so the tube mass measures the approach to the full Cantor set and not
    the truncation.
    """
    K = max(1, math.ceil(math.log(1 / eps) / math.log(1.5) - 1))
    while K > 1 and (2 / 3) ** K <= eps:
        K -= 1
    return K


def cantor_tube_mass(eps: float, n_samples: int = 1_000_000, seed: int = 0, theta=(0, 1)) -> tuple[float, float]:
    """Monte Carlo measure of the ``eps``-tube around the slit set, with standard error."""
    K = cantor_depth_for(eps)
    entry = cantor_disc(depth=K)
    mu = mu_monte_carlo(entry.domain, theta, n_samples, seed, job="cantor-tube")
    rem = np.array(cantor_remainder(1 / 3, K)) - 0.5
    Z = mu.exit_points
    near_line = np.abs(Z[:, 1]) <= eps
    idx = np.searchsorted(rem[:, 0], Z[:, 0] + eps, side="right") - 1
    ok = idx >= 0
    hit = np.zeros(len(Z), dtype=bool)
    hit[ok] = Z[ok, 0] - eps <= rem[idx[ok], 1]
    sel = near_line & hit
    w = mu.nodes.mass
    n = mu.n_samples
    y = w * sel * n
    mean = y.sum() / n
    se = math.sqrt(max((y**2).sum() / n - mean**2, 0.0) / n)
    return float(w[sel].sum()), se


# ---------------------------------------------------------------- bicantor


PARTITION_DIRECTIONS = ((1, 0), (0, 1), (-1, 0), (0, -1), (0.6, 0.8))


def _partition_flag(entry: GalleryEntry) -> float:
    return float(check_sufficiency_partition(entry.domain, entry.subdomains, PARTITION_DIRECTIONS).passed)


def bicantor(rho: float = 0.25, depth: int = 5) -> GalleryEntry:
    gaps = cantor_gaps(rho, depth)
    boxes = [[[0.0, -1.0], [1.0, 0.0]]] + [[[c, -1.0], [d, 1.0]] for c, d, _ in gaps]
    dom = RectilinearUnion(boxes, name=f"bicantor(rho={rho},K={depth})")
    subs = (RectilinearUnion([[[0.0, -1.0], [1.0, 0.0]]], name="omega_0"),) + tuple(
        RectilinearUnion([[[c, 0.0], [d, 1.0]]], name=f"omega_{m + 1}") for m, (c, d, _) in enumerate(gaps)
    )
    exp = (
        Expected("area", 1 + truncated_mass(rho, depth), "computed", 1e-12, lambda e: e.domain.area()),
        Expected("mu total (0.6,0.8)", 1 + truncated_mass(rho, depth), "computed", 1e-9,
                 lambda e: mu_exact(e.domain, (0.6, 0.8)).total_mass),
        Expected("partition hypotheses pass", 1.0, "example", 0.0, _partition_flag),
    )
    return GalleryEntry("bicantor", dom, {}, exp, {"rho": rho, "depth": depth}, subs)


# ----------------------------------------------------------------- serpent


def riser_slope(k: int) -> float:
    return (5.0 / 3.0) * (k**0.25 - (k - 1) ** 0.25)


def serpent_boxes(k_max: int) -> list:
    boxes = [[[0.25, 0.0], [0.3, 1.0]]]
    for k in range(1, k_max + 1):
        right = 0.3 if k == 1 else 1 / (4 * k - 1)
        boxes += [
            [[1 / (4 * k + 2), 0.0], [1 / (4 * k + 1), 1.0]],  # riser
            [[1 / (4 * k + 2), 0.0], [right, 0.2]],  # passage under the upper wall
            [[1 / (4 * k + 4), 0.8], [1 / (4 * k + 1), 1.0]],  # passage over the lower wall
            [[1 / (4 * k + 4), 0.0], [1 / (4 * k + 3), 1.0]],  # plain column
        ]
    return boxes


def serpent_field(k_max: int | None = None) -> ScalarField:
    """The comb field: constant across columns, linear ramp on each riser."""

    def parts(X):
        x, y = X[:, 0], X[:, 1]
        with np.errstate(divide="ignore"):
            q = 1.0 / x
        k = np.floor(q / 4).astype(int)
        r = q - 4 * k
        km1 = np.maximum(k - 1, 0) ** 0.25
        kk = np.maximum(k, 0) ** 0.25
        slope = (5.0 / 3.0) * (kk - km1)
        riser = (r > 1) & (r < 2)
        ramp = np.clip(y - 0.2, 0.0, 0.6)
        val = np.where(r <= 1, km1, np.where(riser, km1 + slope * ramp, kk))
        val = np.where(x > 0.25, 0.0, val)
        g = np.where(riser & (y > 0.2) & (y < 0.8) & (x <= 0.25), slope, 0.0)
        return val, g

    def u(X):
        return parts(X)[0]

    def grad(X):
        g = np.zeros_like(X)
        g[:, 1] = parts(X)[1]
        return g

    return ScalarField(u, grad, label="serpent")


def column_mean(entry: GalleryEntry, x: float) -> float:
    """``int_0^1 u(x, y) dy`` over the vertical fiber at abscissa ``x``."""
    u = entry.fields["u"]
    fib = fiber(entry.domain, (0, 1), x)
    total = 0.0
    for a, b in fib.intervals:
        val, _ = integrate(lambda t: u(np.c_[np.full(t.size, x), t.ravel()]).reshape(t.shape), a, b, rtol=1e-12)
        total += val
    return total


def riser_series(k_from: int, k_to: int) -> float:
    """``sum ||d_2 u||^2`` over risers ``k_from..k_to`` (closed form per riser)."""
    k = np.arange(k_from, k_to + 1, dtype=float)
    width = 1 / (4 * k + 1) - 1 / (4 * k + 2)
    slope = (5.0 / 3.0) * (k**0.25 - (k - 1) ** 0.25)
    return float(np.sum(slope**2 * 0.6 * width))


def riser_tail(k_max: int, k_far: int = 10**6) -> float:
    """Upper bound on the riser series beyond ``k_max``.

    The sum is explicit up to ``k_far``; past it each term is below
    ``(25/9)(1/16) (k-1)^(-3/2) * 0.6 / (16 k^2)``, and ``k - 1 >= k/2``
    turns that into a power of ``k`` whose integral tail is added.
    """
    explicit = riser_series(k_max + 1, k_far)
    c = (25 / 9) * (1 / 16) * 0.6 / 16 * 2**1.5
    return explicit + c * k_far ** (-2.5) / 2.5


def serpent(k_max: int = 16) -> GalleryEntry:
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    dom = RectilinearUnion(serpent_boxes(k_max), name=f"serpent(k_max={k_max})")
    subs = [RectilinearUnion([[[0.25, 0.0], [0.3, 1.0]]], name="omega_0")]
    for k in range(1, k_max + 1):
        subs.append(RectilinearUnion([
            [[1 / (4 * k + 2), 0.0], [1 / (4 * k + 1), 1.0]],
            [[1 / (4 * k + 2), 0.0], [1 / (4 * k), 0.2]],
            [[1 / (4 * k + 4), 0.8], [1 / (4 * k + 1), 1.0]],
            [[1 / (4 * k + 4), 0.0], [1 / (4 * k + 3), 1.0]],
        ], name=f"omega_{k}"))
    exp = [
        Expected("riser slope k=2", (5 / 3) * (2**0.25 - 1), "computed", 1e-15, lambda e: riser_slope(2)),
        Expected("green lhs v=1 theta=(1,0)", 0.0, "trivial", 1e-12,
                 lambda e: check_green(e.domain, e.fields["u"], constant(1.0), (1, 0)).lhs),
        Expected("partition hypotheses pass", 1.0, "computed", 0.0, _partition_flag),
    ]
    for k in (2, k_max // 2, k_max):
        x = 0.5 * (1 / (4 * k + 4) + 1 / (4 * k + 3))
        exp.append(Expected(f"column mean k={k} (>= (k-1)^1/4)", k**0.25, "computed", 1e-9,
                            lambda e, x=x: column_mean(e, x)))
    return GalleryEntry("serpent", dom, {"u": serpent_field(k_max)}, tuple(exp), {"k_max": k_max}, tuple(subs))


# ------------------------------------------------------------------ lookup

BUILDERS = {
    "square": unit_square,
    "l_shape": l_shape,
    "cantor": cantor_complement,
    "cusp": cusp,
    "two_intervals": disconnected_1d,
    "slit_square": slit_square,
    "cantor_disc": cantor_disc,
    "bicantor": bicantor,
    "serpent": serpent,
}


def build(name: str, **params) -> GalleryEntry:
    try:
        fn = BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown gallery entry {name!r}; choose from {sorted(BUILDERS)}") from None
    return fn(**{k: v for k, v in params.items() if v is not None})
