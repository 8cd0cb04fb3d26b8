"""Volume quadrature that never looks at fibers.

Used as the independent side of the integration-by-parts check: the domain
is cut into cells (rectangles, triangles, or the cusp's own coordinates) and
each cell gets a tensor rule, adaptive in one variable.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .geometry import Cusp, Domain, IntervalUnion, Polygon, RectilinearUnion, UnsupportedKind, _cross
from .quadrature import gauss_legendre, integrate_segments


def rectangle_cells(domain: RectilinearUnion) -> np.ndarray:
    """Disjoint covered cells of the coordinate-compressed grid, shape (m, 2, 2)."""
    xs = np.unique(np.concatenate([domain.lo[:, 0], domain.hi[:, 0]]))
    ys = np.unique(np.concatenate([domain.lo[:, 1], domain.hi[:, 1]]))
    cover = np.zeros((len(xs) - 1, len(ys) - 1), dtype=bool)
    for a, b, c, d in zip(np.searchsorted(xs, domain.lo[:, 0]), np.searchsorted(xs, domain.hi[:, 0]),
                          np.searchsorted(ys, domain.lo[:, 1]), np.searchsorted(ys, domain.hi[:, 1])):
        cover[a:b, c:d] = True
    i, j = np.nonzero(cover)
    return np.stack([np.c_[xs[i], ys[j]], np.c_[xs[i + 1], ys[j + 1]]], axis=1)


def ear_clip(vertices: np.ndarray) -> np.ndarray:
    """Triangulate a simple counter-clockwise polygon; returns (n-2, 3, 2)."""
    V = np.asarray(vertices, dtype=float)
    idx = list(range(len(V)))
    tris = []
    guard = 0
    while len(idx) > 3:
        n = len(idx)
        for k in range(n):
            a, b, c = V[idx[k - 1]], V[idx[k]], V[idx[(k + 1) % n]]
            if _cross(b - a, c - b) <= 0:
                continue
            others = [V[j] for j in idx if j not in (idx[k - 1], idx[k], idx[(k + 1) % n])]
            if others:
                P = np.array(others)
                d1 = _cross(b - a, P - a)
                d2 = _cross(c - b, P - b)
                d3 = _cross(a - c, P - c)
                if np.any((d1 >= 0) & (d2 >= 0) & (d3 >= 0)):
                    continue
            tris.append((a, b, c))
            del idx[k]
            break
        else:
            raise ValueError("polygon is not simple")
        guard += 1
        if guard > len(V):
            raise ValueError("ear clipping did not terminate")
    tris.append(tuple(V[j] for j in idx))
    return np.array(tris)


def reference_volume_integral(domain: Domain, integrand: Callable[[np.ndarray], np.ndarray], *,
                              order: int = 16, rtol: float = 1e-11) -> tuple[np.ndarray, float]:
    """``int_domain integrand`` for ``integrand(X) -> (K, n)``; returns ``(values (K,), error)``.

    Unconverged cells do not raise; their last level difference is part of
    the returned error.
    """
    x, w = gauss_legendre(order)

    if isinstance(domain, IntervalUnion):
        iv = np.array(domain.intervals, dtype=float)

        def g(t, rows):
            return np.atleast_2d(integrand(t.reshape(-1, 1))).reshape(-1, *t.shape)

        vals, err, _ = integrate_segments(g, iv[:, 0], iv[:, 1], rtol=rtol, raise_on_fail=False)
        return vals.sum(1), float(err.sum())

    if isinstance(domain, RectilinearUnion):
        cells = rectangle_cells(domain)
        x0, x1 = cells[:, 0, 0], cells[:, 1, 0]

        def g(t, rows):
            # t: y values (r, M); inner x rule of ``order`` points
            X = x0[rows, None, None] + (x1 - x0)[rows, None, None] * x[None, None, :]
            P = np.stack(np.broadcast_arrays(X, t[..., None]), axis=-1)
            out = np.atleast_2d(integrand(P.reshape(-1, 2)))
            out = out.reshape(out.shape[0], *t.shape, order)
            return (out @ w) * (x1 - x0)[rows, None]

        vals, err, _ = integrate_segments(g, cells[:, 0, 1], cells[:, 1, 1], rtol=rtol, raise_on_fail=False)
        return vals.sum(1), float(err.sum())

    if isinstance(domain, Polygon):
        T = ear_clip(domain.vertices)
        p0, e1, e2 = T[:, 0], T[:, 1] - T[:, 0], T[:, 2] - T[:, 1]
        jac = np.abs(_cross(e1, e2))

        def g(u, rows):
            # collapsed square: p0 + u e1 + u v e2, Jacobian u |e1 x e2|
            P = (p0[rows, None, None, :] + u[..., None, None] * e1[rows, None, None, :]
                 + (u[..., None] * x[None, None, :])[..., None] * e2[rows, None, None, :])
            out = np.atleast_2d(integrand(P.reshape(-1, 2)))
            out = out.reshape(out.shape[0], *u.shape, order)
            return (out @ w) * u * jac[rows, None]

        vals, err, _ = integrate_segments(g, np.zeros(len(T)), np.ones(len(T)), rtol=rtol, raise_on_fail=False)
        return vals.sum(1), float(err.sum())

    if isinstance(domain, Cusp):
        s = 2 * x - 1

        def g(t, rows):
            # x1 = s x2^3 with s in (-1, 1); Jacobian x2^3
            P = np.stack(np.broadcast_arrays(s[None, None, :] * t[..., None] ** 3, t[..., None]), axis=-1)
            out = np.atleast_2d(integrand(P.reshape(-1, 2)))
            out = out.reshape(out.shape[0], *t.shape, order)
            return (out @ (2 * w)) * t**3

        vals, err, _ = integrate_segments(g, np.array([0.0]), np.array([1.0]), rtol=rtol, ends="left",
                                          raise_on_fail=False)
        return vals.sum(1), float(err.sum())

    raise UnsupportedKind(f"no reference quadrature for {domain.kind} domains")
