"""Composite Gauss-Legendre rules on dyadically graded meshes.

All rules live on the reference interval [0, 1]; weights sum to one.  The
graded mesh splits [0, 1] at its midpoint and refines each half toward its
outer endpoint with ratio 1/2, so a rule with ``levels = L`` has ``2 (L + 1)``
panels.  This is what keeps integrable endpoint singularities (``t**-0.75``
and friends) under control.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

DEFAULT_ORDER = 16
MAX_LEVELS = 20


class QuadratureNoConverge(RuntimeError):
    """Raised when the level-to-level difference never drops below tolerance."""


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n``-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def graded_breakpoints(levels: int, ends: str = "both") -> np.ndarray:
    if ends == "none":
        return np.array([0.0, 1.0])
    scale = 0.5 ** np.arange(levels, -1, -1)  # 2^-L ... 1
    if ends == "left":
        return np.concatenate(([0.0], scale))
    if ends == "right":
        return np.concatenate(([0.0], 1.0 - scale[::-1][1:], [1.0]))
    half = 0.5 * scale
    return np.concatenate(([0.0], half, 1.0 - half[::-1][1:], [1.0]))


@lru_cache(maxsize=None)
def graded_rule(levels: int, n: int = DEFAULT_ORDER, ends: str = "both") -> tuple[np.ndarray, np.ndarray]:
    """Composite rule on the graded mesh of [0, 1]."""
    br = graded_breakpoints(levels, ends)
    x, w = gauss_legendre(n)
    h = np.diff(br)
    nodes = (br[:-1, None] + h[:, None] * x[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def smoothstep(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map r -> 3r^2 - 2r^3 and its derivative; clusters nodes at both ends.

    Under this change of variable a square-root endpoint behaviour in the
    original variable becomes smooth in ``r``.
    """
    r = np.asarray(r, dtype=float)
    return r * r * (3.0 - 2.0 * r), 6.0 * r * (1.0 - r)


def integrate_segments(
    integrand,
    lo: np.ndarray,
    hi: np.ndarray,
    *,
    n: int = DEFAULT_ORDER,
    rtol: float = 1e-9,
    min_levels: int = 1,
    max_levels: int = MAX_LEVELS,
    ends: str = "both",
    raise_on_fail: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate several integrands over many segments at once.

    ``integrand(t, rows)`` receives parameters ``t`` of shape ``(len(rows), M)``
    lying in ``[lo[rows], hi[rows]]`` and must return an array of shape
    ``(K, len(rows), M)``.  Each segment is refined independently until the
    difference between two successive grading levels is at most
    ``rtol * (1 + |value|)`` for all ``K`` integrands.

    Returns ``(values, errors, levels)`` with ``values`` of shape ``(K, N)``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    count = lo.shape[0]
    length = hi - lo

    def level_values(level, rows):
        r, w = graded_rule(level, n, ends)
        t = lo[rows, None] + length[rows, None] * r[None, :]
        vals = np.asarray(integrand(t, rows), dtype=float)
        return np.einsum("knm,m->kn", vals, w) * length[rows][None, :]

    rows = np.arange(count)
    prev = level_values(min_levels - 1 if min_levels > 0 else 0, rows)
    values = np.empty_like(prev)
    errors = np.full(count, np.inf)
    levels = np.full(count, max_levels, dtype=int)
    start = min_levels if min_levels > 0 else 1
    for level in range(start, max_levels + 1):
        cur = level_values(level, rows)
        diff = np.max(np.abs(cur - prev), axis=0)
        scale = 1.0 + np.max(np.abs(cur), axis=0)
        done = diff <= rtol * scale
        values[:, rows] = cur
        errors[rows] = diff
        levels[rows[done]] = level
        keep = ~done
        if not keep.any():
            return values, errors, levels
        rows = rows[keep]
        prev = cur[:, keep]
    if raise_on_fail:
        raise QuadratureNoConverge(
            f"{rows.size} segment(s) unresolved after {max_levels} levels "
            f"(worst difference {errors[rows].max():.3e})"
        )
    return values, errors, levels


def integrate(f, a: float, b: float, **kwargs) -> tuple[float, float]:
    """Scalar convenience wrapper around :func:`integrate_segments`."""
    vals, err, _ = integrate_segments(
        lambda t, rows: f(t)[None, ...], np.array([a]), np.array([b]), **kwargs
    )
    return float(vals[0, 0]), float(err[0])
