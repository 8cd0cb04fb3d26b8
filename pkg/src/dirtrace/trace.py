"""Directional traces computed fiber by fiber.

On a fiber interval ``]alpha, beta[`` the value at ``beta`` of an H^1
function ``f`` is the average

    T_beta(f) = 1/(beta - alpha) * int_alpha^beta f(t) + f'(t) (t - alpha) dt,

which integrates by parts to ``f(beta)`` for smooth ``f`` but only needs
``f`` and ``f'`` to be square integrable.  ``T_alpha`` is the mirror image
with ``(t - beta)``.  The trace along ``theta`` at an exit point is
``T_beta`` of the restriction of ``u`` to the fiber through it; ``T_alpha``
of the same fiber gives the trace along ``-theta`` at the partner point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .fields import ScalarField
from .geometry import Direction, Domain, as_direction, exit_record
from .measure import BoundaryMeasure
from .quadrature import MAX_LEVELS, QuadratureNoConverge, integrate_segments

TRACE_RTOL = 1e-9
# fibers shorter than this (relative to the diameter) sit inside the interior
# margin of ``contains`` and cannot be anchored; they use the sweep's fiber
CHORD_FLOOR = 1e-9
# same for sweep pieces thinner than this: a direction grazing an edge leaves
# slivers whose exit distances are too ill-conditioned to re-derive
SLIVER_WIDTH = 1e-7


class AnchorFailure(RuntimeError):
    def __init__(self, indices, message=""):
        self.indices = list(map(int, indices))
        super().__init__(message or f"no interior anchor found for nodes {self.indices[:20]}")


class ZeroChord(ValueError):
    pass


class EndpointValues(NamedTuple):
    at_beta: float
    at_alpha: float
    error: float


def trace_1d(f, df, alpha: float, beta: float, *, rtol: float = TRACE_RTOL,
             max_levels: int = MAX_LEVELS) -> EndpointValues:
    """Endpoint values of an H^1 function on ``]alpha, beta[`` from ``f`` and ``f'``."""
    if not beta > alpha:
        raise ValueError("need alpha < beta")
    ell = beta - alpha

    def g(t, rows):
        ft = np.asarray(f(t), dtype=float)
        dft = np.asarray(df(t), dtype=float)
        return np.stack([ft + dft * (t - alpha), ft + dft * (t - beta)]) / ell

    vals, err, _ = integrate_segments(g, np.array([alpha]), np.array([beta]), rtol=rtol, max_levels=max_levels)
    return EndpointValues(float(vals[0, 0]), float(vals[1, 0]), float(err[0]))


def fiber_traces(fields: Sequence[ScalarField], theta: Direction, base: np.ndarray, alpha: np.ndarray,
                 beta: np.ndarray, *, rtol: float = TRACE_RTOL, max_levels: int = MAX_LEVELS):
    """Vectorized ``T_beta`` and ``T_alpha`` of several fields along many fibers.

    The fiber of node ``i`` is ``base[i] + t theta`` for ``alpha[i] < t < beta[i]``.
    Returns ``(a, b, err)`` with ``a, b`` of shape ``(len(fields), n)``.
    """
    v = theta.vector
    K = len(fields)
    ell = beta - alpha

    def g(t, rows):
        P = base[rows][:, None, :] + t[..., None] * v
        flat = P.reshape(-1, P.shape[-1])
        out = np.empty((2 * K,) + t.shape)
        ta = t - alpha[rows][:, None]
        tb = t - beta[rows][:, None]
        inv = 1.0 / ell[rows][:, None]
        for k, fld in enumerate(fields):
            u = fld(flat).reshape(t.shape)
            du = fld.directional(flat, v).reshape(t.shape)
            out[2 * k] = (u + du * ta) * inv
            out[2 * k + 1] = (u + du * tb) * inv
        return out

    vals, err, _ = integrate_segments(g, alpha, beta, rtol=rtol, max_levels=max_levels)
    return vals[0::2], vals[1::2], err


@dataclass(frozen=True)
class TraceSample:
    z: np.ndarray
    theta: Direction
    value: float
    quadrature_error: float
    chord: float
    partner: np.ndarray
    partner_value: float


def trace_at(field: ScalarField, domain: Domain, theta, x) -> TraceSample:
    """Trace along ``theta`` at the exit point of the interior point ``x``."""
    theta = as_direction(theta)
    rec = exit_record(domain, theta, x)
    a, b, err = fiber_traces([field], theta, rec.point[None, :], np.array([-rec.delta_minus]),
                             np.array([rec.delta_plus]))
    return TraceSample(rec.exit_point, theta, float(a[0, 0]), float(err[0]), rec.chord, rec.partner,
                       float(b[0, 0]))


@dataclass(frozen=True)
class TraceBatch:
    """Traces of one or more fields at every node of a measure.

    ``values[k, i]`` is the trace of field ``k`` along ``theta`` at exit point
    ``z[i]``; ``partner_values[k, i]`` the trace along ``-theta`` at
    ``partner[i]``.  ``failed`` lists nodes without a valid anchor.
    """

    theta: Direction
    z: np.ndarray
    partner: np.ndarray
    chord: np.ndarray
    values: np.ndarray
    partner_values: np.ndarray
    error: np.ndarray
    anchors: np.ndarray
    failed: np.ndarray
    fallback: np.ndarray

    def samples(self, k: int = 0) -> list[TraceSample]:
        return [
            TraceSample(self.z[i], self.theta, float(self.values[k, i]), float(self.error[i]),
                        float(self.chord[i]), self.partner[i], float(self.partner_values[k, i]))
            for i in range(len(self.chord))
        ]


def anchor_points(domain: Domain, theta: Direction, Z: np.ndarray, scale: np.ndarray, *,
                  fraction: float = 1e-3, halvings: int = 40):
    """Interior points ``x = z - t theta`` whose forward exit is ``z``.

    Starts at ``t = fraction * scale`` and halves ``t`` on failure.  Returns
    ``(x, delta_plus, delta_minus, ok)``.
    """
    v = theta.vector
    n = len(Z)
    t = fraction * np.asarray(scale, dtype=float)
    X = np.empty_like(Z)
    dp = np.full(n, np.nan)
    dm = np.full(n, np.nan)
    ok = np.zeros(n, dtype=bool)
    todo = np.arange(n)
    tol_abs = 1e-14 * domain.diameter
    rounding = 64 * np.finfo(float).eps * (domain.diameter + float(np.abs(domain.bbox).max()))
    side = theta.frame[0] if domain.dim == 2 else None
    for _ in range(halvings + 1):
        if todo.size == 0:
            break
        x = Z[todo] - t[todo, None] * v
        p, m = domain.exits(x, theta)
        tol = 1e-9 * t[todo] + tol_abs
        if side is not None:
            # a ray grazing its exit edge has an ill-conditioned exit distance
            h = 1e-6 * t[todo]
            slope = np.zeros(len(todo))
            for sgn in (1.0, -1.0):
                p2, _ = domain.exits(x + sgn * h[:, None] * side, theta)
                with np.errstate(invalid="ignore"):
                    slope = np.maximum(slope, np.where(np.isfinite(p2), np.abs(p2 - p) / h, 0.0))
            tol = np.minimum(tol + rounding * slope, 1e-6 * t[todo] + tol_abs)
        good = np.isfinite(p) & np.isfinite(m) & (np.abs(p - t[todo]) <= tol) & (m > 0)
        if good.any():
            good[good] = domain.contains(x[good])
        idx = todo[good]
        X[idx], dp[idx], dm[idx], ok[idx] = x[good], p[good], m[good], True
        todo = todo[~good]
        t[todo] *= 0.5
    return X, dp, dm, ok


def trace_field(fields, mu: BoundaryMeasure, *, rtol: float = TRACE_RTOL, strict: bool = True) -> TraceBatch:
    """Traces at every node of ``mu``.

    Exact-sweep nodes are re-anchored independently of the sweep: the anchor
    ``z - t theta``, first tried at the middle of the chord, must exit at
    ``z``, and the fiber used is the one found by ray casting from it.
    Nodes that cannot be anchored keep the sweep's fiber and are listed in
    ``fallback`` when their chord is below ``CHORD_FLOOR * diam`` or their
    piece is narrower than ``SLIVER_WIDTH * diam``; any other such node is a
    failure.  Monte Carlo nodes are anchored at their own samples.
    """
    single = isinstance(fields, ScalarField)
    fields = [fields] if single else list(fields)
    theta = mu.theta
    nodes = mu.nodes
    Z = mu.exit_points
    fallback = np.zeros(0, dtype=int)
    if mu.mode == "mc":
        X, dp, dm = nodes.base, nodes.beta, -nodes.alpha
        ok = np.ones(len(Z), dtype=bool)
    else:
        X, dp, dm, ok = anchor_points(mu.domain, theta, Z, nodes.chord, fraction=0.5)
    tiny = ~ok & (nodes.chord <= CHORD_FLOOR * mu.domain.diameter)
    if mu.pieces:
        width = np.array([p.eta_hi - p.eta_lo for p in mu.pieces])
        tiny |= ~ok & (width[nodes.piece] <= SLIVER_WIDTH * mu.domain.diameter)
    if tiny.any():
        X[tiny], dp[tiny], dm[tiny] = nodes.base[tiny], nodes.beta[tiny], -nodes.alpha[tiny]
        ok = ok | tiny
    fallback = np.nonzero(tiny)[0]
    failed = np.nonzero(~ok)[0]
    if strict and failed.size:
        raise AnchorFailure(failed)
    K = len(fields)
    vals = np.full((K, len(Z)), np.nan)
    pvals = np.full((K, len(Z)), np.nan)
    err = np.full(len(Z), np.nan)
    if ok.any():
        a, b, e = fiber_traces(fields, theta, X[ok], -dm[ok], dp[ok], rtol=rtol)
        vals[:, ok], pvals[:, ok], err[ok] = a, b, e
    v = theta.vector
    return TraceBatch(theta, Z, X - dm[:, None] * v, dp + dm, vals, pvals, err, X, failed, fallback)


def g_plus_minus(a, b, ell, c: float = 0.5):
    """Symmetric and difference-quotient parts of a trace pair.

    ``g_plus = c (a + b + (a - b)/ell)``, ``g_minus = c (a + b - (a - b)/ell)``.
    With ``c = 1/2`` these satisfy
    ``G+u G+v - G-u G-v = (a a' - b b') / ell``.
    """
    a, b, ell = (np.asarray(x, dtype=float) for x in (a, b, ell))
    if np.any(ell <= 0):
        raise ZeroChord("chord must be positive")
    s, d = a + b, (a - b) / ell
    return c * (s + d), c * (s - d)
