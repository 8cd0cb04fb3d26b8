"""The directional boundary measure: Lebesgue measure pushed to exit points.

Both constructions end in a table of nodes.  A node is a base point ``b``
and a parameter interval ``(alpha, beta)`` on the line ``b + t theta``; its
exit point is ``b + beta theta``, its partner ``b + alpha theta`` and it
carries a boundary mass ``mass``.

* exact sweep (structured domains): the base points are quadrature nodes
  ``eta e`` on the orthogonal line, ``alpha, beta`` are the fiber ends and
  ``mass = w_eta * (beta - alpha)``; the fiber integral is then done along
  ``[alpha, beta]`` by the caller when needed,
* Monte Carlo: the base points are the accepted samples ``x`` themselves,
  ``alpha = -delta_minus(x)``, ``beta = delta_plus(x)`` and every node carries
  ``vol(bbox) / n``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    Cusp,
    Direction,
    Domain,
    IntervalUnion,
    UnsupportedKind,
    as_direction,
)
from .quadrature import gauss_legendre, graded_rule, integrate, integrate_segments, smoothstep


class DegenerateDomain(RuntimeError):
    """No Monte Carlo sample landed inside the domain."""


class NonFiniteIntegrand(ValueError):
    pass


def rng_for(seed: int, job: str = "") -> np.random.Generator:
    """Counter-based generator whose stream depends only on ``(job, seed)``."""
    digest = hashlib.sha256(f"{job}|{int(seed)}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NodeTable:
    base: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    mass: np.ndarray
    eta_weight: np.ndarray
    piece: np.ndarray

    def __len__(self):
        return len(self.mass)

    @property
    def chord(self) -> np.ndarray:
        return self.beta - self.alpha


def _concat_tables(tables: Sequence[NodeTable], dim: int) -> NodeTable:
    if not tables:
        z = np.zeros(0)
        return NodeTable(np.zeros((0, dim)), z, z, z, z, np.zeros(0, dtype=int))
    return NodeTable(*(np.concatenate([getattr(t, f) for t in tables]) for f in NodeTable.__dataclass_fields__))


@dataclass(frozen=True)
class ExitPiece:
    """A cell of the sweep: one fiber interval, followed over ``eta_lo < eta < eta_hi``."""

    index: int
    eta_lo: float
    eta_hi: float
    exit_support: str
    entry_support: str
    affine: bool
    ends: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] = field(repr=False, compare=False)
    theta: Direction = field(repr=False, compare=False)
    mass: float = 0.0

    def exit_points(self, eta) -> np.ndarray:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        _, beta = self.ends(eta)
        return beta[:, None] * self.theta.vector + eta[:, None] * self.theta.frame[0]

    def chord(self, eta) -> np.ndarray:
        a, b = self.ends(np.atleast_1d(np.asarray(eta, dtype=float)))
        return b - a

    def arclength_density(self, eta) -> np.ndarray:
        """Density of the measure against arclength of the exit curve."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        h = 1e-7 * (self.eta_hi - self.eta_lo)
        lo = np.maximum(eta - h, self.eta_lo)
        hi = np.minimum(eta + h, self.eta_hi)
        dz = (self.exit_points(hi) - self.exit_points(lo)) / (hi - lo)[:, None]
        return self.chord(eta) / np.linalg.norm(dz, axis=1)


@dataclass(frozen=True)
class BoundaryMeasure:
    theta: Direction
    mode: str
    domain: Domain = field(repr=False)
    nodes: NodeTable = field(repr=False)
    coarse: NodeTable | None = field(repr=False, default=None)
    pieces: tuple[ExitPiece, ...] = field(repr=False, default=())
    total_mass: float = 0.0
    mass_error: float = 0.0
    seed: int | None = None
    n_samples: int | None = None
    truncation_deficit: float | None = None

    @property
    def exit_points(self) -> np.ndarray:
        return self.nodes.base + self.nodes.beta[:, None] * self.theta.vector

    @property
    def partners(self) -> np.ndarray:
        return self.nodes.base + self.nodes.alpha[:, None] * self.theta.vector

    @property
    def chords(self) -> np.ndarray:
        return self.nodes.chord

    @property
    def weights(self) -> np.ndarray:
        return self.nodes.mass

    @property
    def atoms(self) -> list[tuple[np.ndarray, float, str]]:
        """Point masses: 1-D exits and Monte Carlo samples.  Empty for planar sweeps."""
        if self.mode == "exact" and self.domain.dim > 1:
            return []
        tag = "mc-sample" if self.mode == "mc" else "fiber-exit"
        return [(z, float(w), tag) for z, w in zip(self.exit_points, self.nodes.mass)]

    @property
    def provenance(self) -> list[str]:
        if self.mode == "mc":
            return ["mc-sample"] * len(self.nodes)
        if self.domain.dim == 1:
            return ["fiber-exit"] * len(self.nodes)
        return [f"piece {p}: {self.pieces[p].exit_support}" for p in self.nodes.piece]

    def divided(self) -> "BoundaryMeasure":
        """The chord-divided measure ``mu / chord``."""
        def div(t):
            return None if t is None else NodeTable(t.base, t.alpha, t.beta, t.mass / t.chord, t.eta_weight, t.piece)
        nodes = div(self.nodes)
        return BoundaryMeasure(
            self.theta, self.mode, self.domain, nodes, div(self.coarse), self.pieces,
            float(nodes.mass.sum()), self.mass_error, self.seed, self.n_samples, None,
        )


# ------------------------------------------------------------------ exact


def _affine_ends(theta: Direction, entry, exit_):
    v = theta.vector
    e = theta.frame[0]

    def solve(sup):
        p, d = sup.point, sup.direction
        den = v[0] * d[1] - v[1] * d[0]
        cp = p[0] * d[1] - p[1] * d[0]
        ce = e[0] * d[1] - e[1] * d[0]
        return lambda eta: (cp - eta * ce) / den

    fa, fb = solve(entry), solve(exit_)
    return lambda eta: (fa(np.asarray(eta, dtype=float)), fb(np.asarray(eta, dtype=float)))


def _grazing_slack(theta: Direction, supports, scale: float) -> float:
    """Rounding bound of a line-edge intersection; large when ``theta`` grazes an edge."""
    v = theta.vector
    den = min(abs(v[0] * s.direction[1] - v[1] * s.direction[0]) for s in supports)
    return 16 * np.finfo(float).eps * scale / max(den, 1e-300)


def _fiber_ends(domain: Domain, theta: Direction, k: int):
    if isinstance(domain, Cusp):
        return lambda eta: _cusp_interval(domain, theta, np.atleast_1d(eta), k)

    def ends(eta):
        eta = np.atleast_1d(eta)
        out = np.array([domain.fiber_structure(theta, x).intervals[k] for x in eta]).reshape(-1, 2)
        return out[:, 0], out[:, 1]

    return ends


def _cusp_interval(domain: Cusp, theta: Direction, eta: np.ndarray, k: int):
    v = theta.vector
    y0 = eta[:, None] * theta.frame[0]
    t, _ = domain.line_roots(y0, v)
    t = np.sort(np.where(np.isnan(t), np.inf, t), axis=1)
    lo, hi = t[:, :-1], t[:, 1:]
    with np.errstate(invalid="ignore"):
        mid = y0[:, None, :] + (0.5 * (lo + hi))[..., None] * v
        g = np.minimum.reduce(domain._constraints(mid[..., 0], mid[..., 1]))
    good = np.isfinite(hi) & (hi > lo) & (g > 0)
    rank = np.cumsum(good, axis=1) - 1
    pick = good & (rank == k)
    j = np.argmax(pick, axis=1)
    ok = pick[np.arange(len(eta)), j]
    a = np.where(ok, lo[np.arange(len(eta)), j], np.nan)
    b = np.where(ok, hi[np.arange(len(eta)), j], np.nan)
    return a, b


def _rule(lo, hi, affine, level, order):
    if affine:
        r, w = gauss_legendre(order)
        return lo + (hi - lo) * r, (hi - lo) * w
    r, w = graded_rule(level, order)
    phi, dphi = smoothstep(r)
    return lo + (hi - lo) * phi, (hi - lo) * dphi * w


def _table(piece_id, eta, w, ends, theta):
    a, b = ends(eta)
    # fibers below root resolution (next to a cusp tip) come back as NaN
    keep = np.isfinite(a) & np.isfinite(b)
    eta, w, a, b = eta[keep], w[keep], a[keep], b[keep]
    base = eta[:, None] * theta.frame[0]
    return NodeTable(base, a, b, w * (b - a), w, np.full(len(eta), piece_id))


def mu_exact(domain: Domain, theta, *, order: int = 16, rtol: float = 1e-14, max_levels: int = 20,
             refine: int = 0) -> BoundaryMeasure:
    """Exact sweep of the measure for a structured domain.

    ``refine`` doubles the Gauss order on every piece ``refine`` times and
    adds as many grading levels to curved pieces, for refinement studies.
    """
    theta = as_direction(theta)
    if not domain.structured:
        raise UnsupportedKind("the exact sweep needs a structured domain")
    if domain.dim != theta.dim:
        raise ValueError("direction and domain dimensions differ")
    if isinstance(domain, IntervalUnion):
        return _mu_exact_1d(domain, theta)

    events = domain.events(theta)
    supports = domain.supports
    pieces, fine, coarse = [], [], []
    for lo, hi in zip(events[:-1], events[1:]):
        if hi - lo <= 1e-13 * domain.diameter:
            continue
        mid = 0.5 * (lo + hi)
        fib = domain.fiber_structure(theta, mid)
        for k, ((a, b), (sa, sb)) in enumerate(zip(fib.intervals, fib.supports)):
            affine = supports[sa].straight and supports[sb].straight
            ends = _affine_ends(theta, supports[sa], supports[sb]) if affine else None
            if affine:
                ea, eb = ends(np.array([mid]))
                slack = _grazing_slack(theta, (supports[sa], supports[sb]),
                                       domain.diameter + float(np.abs(domain.bbox).max()))
                if abs(ea[0] - a) + abs(eb[0] - b) > 1e-9 * domain.diameter + slack:
                    affine = False
            if not affine:
                ends = _fiber_ends(domain, theta, k)
            pid = len(pieces)
            if affine:
                n = order * 2**refine
                ft = _table(pid, *_rule(lo, hi, True, 0, n), ends, theta)
                ct = _table(pid, *_rule(lo, hi, True, 0, max(2, n // 2)), ends, theta)
            else:
                prev = None
                for level in range(1 + refine, max_levels + 1 + refine):
                    ft = _table(pid, *_rule(lo, hi, False, level, order * 2**refine), ends, theta)
                    m = ft.mass.sum()
                    if prev is not None and abs(m - prev.mass.sum()) <= rtol * (1.0 + abs(m)):
                        break
                    prev = ft
                ct = prev
            pieces.append(ExitPiece(pid, float(lo), float(hi), supports[sb].label, supports[sa].label,
                                    affine, ends, theta, float(ft.mass.sum())))
            fine.append(ft)
            coarse.append(ct)
    nodes = _concat_tables(fine, 2)
    ctab = _concat_tables(coarse, 2)
    total = float(nodes.mass.sum())
    return BoundaryMeasure(
        theta, "exact", domain, nodes, ctab, tuple(pieces), total,
        float(abs(total - ctab.mass.sum())), truncation_deficit=_deficit(domain),
    )


def _deficit(domain: Domain):
    meta = getattr(domain, "meta", None) or {}
    if "rho" in meta and "depth" in meta:
        rho, K = meta["rho"], meta["depth"]
        return rho * (2 * rho) ** (K + 1) / (1 - 2 * rho)
    return None


def _mu_exact_1d(domain: IntervalUnion, theta: Direction) -> BoundaryMeasure:
    fib = domain.fiber_structure(theta)
    iv = np.array(fib.intervals, dtype=float)
    a, b = iv[:, 0], iv[:, 1]
    # merge exit points that coincide to rounding
    order = np.argsort(b, kind="stable")
    a, b = a[order], b[order]
    mass = b - a
    keep = np.concatenate(([True], np.diff(b) > 1e-12 * domain.diameter))
    if not keep.all():
        grp = np.cumsum(keep) - 1
        mass = np.bincount(grp, weights=mass)
        a, b = a[keep], b[keep]
    n = len(b)
    nodes = NodeTable(np.zeros((n, 1)), a, b, mass, np.ones(n), np.arange(n))
    return BoundaryMeasure(theta, "exact", domain, nodes, nodes, (), float(mass.sum()), 0.0,
                           truncation_deficit=_deficit(domain))


# ------------------------------------------------------------- Monte Carlo


def mu_monte_carlo(domain: Domain, theta, n_samples: int, seed: int, job: str = "mu") -> BoundaryMeasure:
    """Sample the defining integral: uniform points of the box pushed to their exits."""
    theta = as_direction(theta)
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = rng_for(seed, job)
    lo, hi = domain.bbox
    X = lo + (hi - lo) * rng.random((n_samples, domain.dim))
    inside = domain.contains(X)
    if not inside.any():
        raise DegenerateDomain(f"no sample out of {n_samples} fell inside {domain!r}")
    X = X[inside]
    dp, dm = domain.exits(X, theta)
    vol = domain.volume_bbox
    w = np.full(len(X), vol / n_samples)
    nodes = NodeTable(X, -dm, dp, w, w, np.full(len(X), -1))
    p = inside.mean()
    se = vol * math.sqrt(p * (1 - p) / n_samples)
    return BoundaryMeasure(theta, "mc", domain, nodes, None, (), float(w.sum()), se,
                           seed=int(seed), n_samples=int(n_samples), truncation_deficit=_deficit(domain))


def build_measure(domain: Domain, theta, mode: str = "auto", n_samples: int = 200_000, seed: int = 0,
                  job: str = "mu") -> BoundaryMeasure:
    if mode == "auto":
        mode = "exact" if domain.structured else "mc"
    if mode == "exact":
        return mu_exact(domain, theta)
    if mode == "mc":
        return mu_monte_carlo(domain, theta, n_samples, seed, job)
    raise ValueError(f"unknown mode {mode!r}")


# -------------------------------------------------------------- integration


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error: float


def _eval_boundary(f, Z):
    vals = np.asarray(f(Z), dtype=float)
    vals = np.broadcast_to(vals, (len(Z),))
    if not np.all(np.isfinite(vals)):
        bad = np.nonzero(~np.isfinite(vals))[0][:5]
        raise NonFiniteIntegrand(f"integrand not finite at {Z[bad].tolist()}")
    return vals


def integrate_boundary(mu: BoundaryMeasure, f: Callable[[np.ndarray], np.ndarray],
                       divide_by_chord: bool = False) -> IntegralResult:
    """Integral of a boundary function against the measure, with an error estimate.

    The exact-mode error compares the fine node set with an embedded coarser
    one; the Monte Carlo error is the standard error of the sample mean.
    """
    m = mu.nodes.mass / mu.nodes.chord if divide_by_chord else mu.nodes.mass
    vals = _eval_boundary(f, mu.exit_points)
    value = float(np.dot(m, vals))
    if mu.mode == "mc":
        n = mu.n_samples
        y = m * vals * n  # per-sample contributions, zero for rejected samples
        mean = y.sum() / n
        var = max((y**2).sum() / n - mean**2, 0.0)
        return IntegralResult(value, math.sqrt(var / n))
    c = mu.coarse
    if c is None or c is mu.nodes:
        return IntegralResult(value, 0.0)
    cz = c.base + c.beta[:, None] * mu.theta.vector
    cm = c.mass / c.chord if divide_by_chord else c.mass
    return IntegralResult(value, float(abs(value - np.dot(cm, _eval_boundary(f, cz)))))


def volume_integral(mu: BoundaryMeasure, integrand: Callable[[np.ndarray], np.ndarray], rtol: float = 1e-11,
                    max_levels: int = 20) -> tuple[np.ndarray, float]:
    """Volume integrals of ``integrand(X) -> (K, n)`` computed on the measure's fibers.

    Returns ``(values (K,), error)``.  The exact sweep integrates each fiber
    by graded quadrature (Fubini along ``theta``); Monte Carlo reuses the samples.
    """
    nodes = mu.nodes
    v = mu.theta.vector
    if mu.mode == "mc":
        vals = np.atleast_2d(integrand(nodes.base))
        n = mu.n_samples
        y = vals * nodes.mass[None, :] * n
        mean = y.sum(1) / n
        var = np.maximum((y**2).sum(1) / n - mean**2, 0.0)
        return y.sum(1) / n, float(np.sqrt(var / n).max())
    base = nodes.base

    def g(t, rows):
        P = base[rows][:, None, :] + t[..., None] * v
        shape = t.shape
        out = np.atleast_2d(integrand(P.reshape(-1, P.shape[-1])))
        return out.reshape(out.shape[0], *shape)

    vals, err, _ = integrate_segments(g, nodes.alpha, nodes.beta, rtol=rtol, max_levels=max_levels)
    total = vals @ nodes.eta_weight
    return total, float(err @ nodes.eta_weight)


# -------------------------------------------------------------- measure_of


def measure_of(mu: BoundaryMeasure, region: Callable[[np.ndarray], np.ndarray], grid: int = 64,
               bisect_steps: int = 60) -> float:
    """Measure of ``{z : region(z)}``.

    Atoms and Monte Carlo samples are summed; each sweep piece is scanned
    on a grid, predicate transitions are located by bisection in ``eta`` and
    the chord is integrated over the selected sub-intervals.
    """
    if mu.mode == "mc" or mu.domain.dim == 1:
        sel = np.asarray(region(mu.exit_points), dtype=bool).reshape(-1)
        return float(mu.nodes.mass[sel].sum())
    total = 0.0
    for piece in mu.pieces:
        lo, hi = piece.eta_lo, piece.eta_hi
        r = np.linspace(0.0, 1.0, grid + 1)
        r[0], r[-1] = 1e-12, 1 - 1e-12
        eta = lo + (hi - lo) * smoothstep(r)[0]
        inside = np.asarray(region(piece.exit_points(eta)), dtype=bool).reshape(-1)
        if inside.all():
            total += piece.mass
            continue
        if not inside.any():
            continue
        cuts = [lo]
        for i in np.nonzero(inside[1:] != inside[:-1])[0]:
            a, b = eta[i], eta[i + 1]
            state = inside[i]
            for _ in range(bisect_steps):
                m = 0.5 * (a + b)
                if bool(np.asarray(region(piece.exit_points([m]))).reshape(-1)[0]) == state:
                    a = m
                else:
                    b = m
            cuts.append(0.5 * (a + b))
        cuts.append(hi)
        state = inside[0]
        for a, b in zip(cuts[:-1], cuts[1:]):
            if state and b > a:
                total += _chord_integral(piece, a, b)
            state = not state
    return float(total)


def _chord_integral(piece: ExitPiece, a: float, b: float) -> float:
    if piece.affine:
        r, w = gauss_legendre(4)
        return float(np.dot(w, piece.chord(a + (b - a) * r)) * (b - a))
    eta, w = _rule(a, b, False, 12, 16)
    return float(np.dot(w, piece.chord(eta)))


# ------------------------------------------------------------------ export


def _fmt(x: float) -> str:
    return repr(float(x))


def to_csv(mu: BoundaryMeasure) -> str:
    """Node table as CSV: exit coordinates, mass, chord, provenance."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = mu.domain.dim
    w.writerow([f"x{i + 1}" for i in range(d)] + ["weight", "chord", "provenance"])
    for z, m, c, p in zip(mu.exit_points, mu.nodes.mass, mu.nodes.chord, mu.provenance):
        w.writerow([_fmt(v) for v in z] + [_fmt(m), _fmt(c), p])
    return buf.getvalue()


def read_nodes_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Exit points and weights from :func:`to_csv` output."""
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    d = sum(1 for h in header if h.startswith("x"))
    data = np.array([[float(v) for v in r[: d + 1]] for r in rows[1:]]).reshape(-1, d + 1)
    return data[:, :d], data[:, d]


def densities_json(mu: BoundaryMeasure) -> str:
    """Per-piece density samples at the quadrature nodes."""
    out = []
    for piece in mu.pieces:
        sel = mu.nodes.piece == piece.index
        eta = (mu.nodes.base[sel] @ mu.theta.frame[0]).tolist()
        out.append({
            "piece": piece.index,
            "edge": piece.exit_support,
            "eta_range": [piece.eta_lo, piece.eta_hi],
            "eta_nodes": eta,
            "exit_points": piece.exit_points(eta).tolist(),
            "chord": piece.chord(eta).tolist(),
            "arclength_density": piece.arclength_density(eta).tolist(),
        })
    return json.dumps({"theta": mu.theta.vector.tolist(), "total_mass": mu.total_mass, "pieces": out},
                      sort_keys=True, indent=1)


# ------------------------------------------------------ arclength comparison


def cusp_arclength_l2(alpha: float, eps: float) -> float:
    """``int g^2 dH^1`` over both cusp curves above ``x2 = eps`` for ``g = x2**-alpha``.

    Arclength on ``x1 = +-x2**3`` is ``sqrt(1 + 9 x2**4) dx2``.  The integral
    diverges as ``eps -> 0`` once ``alpha >= 1/2``.
    """
    val, _ = integrate(lambda t: 2.0 * t ** (-2 * alpha) * np.sqrt(1 + 9 * t**4), eps, 1.0, rtol=1e-13)
    return val


def arclength_study(alpha: float, cutoffs: Sequence[float]) -> list[tuple[float, float]]:
    return [(float(e), cusp_arclength_l2(alpha, e)) for e in cutoffs]
