"""Domains, directions and ray-exit geometry.

A domain is a bounded open set in R^1 or R^2 given by one of a few structured
descriptions (interval unions, unions of open boxes, simple polygons, the cusp)
or by a black-box membership predicate.  Every kind answers three questions
for a direction ``theta``:

* ``contains(X)``: vectorized membership,
* ``exits(X, theta)``: forward and backward exit distances of many points,
* ``fiber_structure(theta, eta)``: the open intervals cut out of a line
  parallel to ``theta``, together with the boundary pieces that bound them.

The last two are computed by independent code paths, so they cross-check each
other in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

_CHUNK = 4096


class GeometryError(ValueError):
    pass


class PointNotInterior(GeometryError):
    """The query point is not inside the domain."""


class RayUnresolved(GeometryError):
    """A predicate domain kept reporting membership past its bounding box."""


class UnsupportedKind(GeometryError):
    """The requested operation needs a structured domain description."""


# ---------------------------------------------------------------- directions


class Direction:
    """A unit vector.  ``negate`` flips the sign exactly, without renormalizing."""

    __slots__ = ("_v", "_frame")

    def __init__(self, components):
        v = np.atleast_1d(np.asarray(components, dtype=float)).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError(f"invalid direction {components!r}")
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise ValueError("direction must be non-zero")
        self._v = v / n
        self._v.flags.writeable = False
        self._frame = None

    @classmethod
    def _raw(cls, v: np.ndarray) -> "Direction":
        obj = cls.__new__(cls)
        obj._v = v
        obj._v.flags.writeable = False
        obj._frame = None
        return obj

    @classmethod
    def from_degrees(cls, degrees: float) -> "Direction":
        q, r = divmod(float(degrees), 90.0)
        if r == 0.0:
            return cls([(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(q) % 4])
        rad = math.radians(degrees)
        return cls((math.cos(rad), math.sin(rad)))

    @property
    def vector(self) -> np.ndarray:
        return self._v

    @property
    def dim(self) -> int:
        return self._v.size

    @property
    def frame(self) -> np.ndarray:
        if self._frame is None:
            self._frame = hyperplane_frame(self)
        return self._frame

    def negate(self) -> "Direction":
        return Direction._raw(-self._v)

    __neg__ = negate

    def degrees(self) -> float:
        if self.dim != 2:
            raise ValueError("angle only defined in the plane")
        return math.degrees(math.atan2(self._v[1], self._v[0]))

    def __eq__(self, other):
        return isinstance(other, Direction) and np.array_equal(self._v, other._v)

    def __hash__(self):
        return hash(self._v.tobytes())

    def __repr__(self):
        return f"Direction({self._v.tolist()!r})"


def as_direction(theta) -> Direction:
    return theta if isinstance(theta, Direction) else Direction(theta)


def hyperplane_frame(theta) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to ``theta``, shape (d-1, d).

    Gram-Schmidt seeded with the canonical vectors sorted by increasing
    alignment with ``theta`` (ties to the lower index).  The sort key and every
    projection coefficient only depend on ``theta`` up to sign, so ``theta``
    and ``-theta`` get bitwise identical frames.
    """
    v = as_direction(theta).vector
    d = v.size
    order = sorted(range(d), key=lambda i: (abs(v[i]), i))
    basis: list[np.ndarray] = []
    for i in order:
        if len(basis) == d - 1:
            break
        w = np.zeros(d)
        w[i] = 1.0
        w = w - (w @ v) * v
        for b in basis:
            w = w - (w @ b) * b
        n = np.linalg.norm(w)
        if n > 1e-8:
            basis.append(w / n)
    frame = np.array(basis, dtype=float).reshape(d - 1, d)
    frame.flags.writeable = False
    return frame


def project(x, theta) -> np.ndarray:
    """Coordinates of the orthogonal projection onto the hyperplane of ``theta``."""
    x = np.asarray(x, dtype=float)
    return x @ as_direction(theta).frame.T


# -------------------------------------------------------------- small helpers


def _points(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if dim == 1 and X.ndim == 1:
        return X.reshape(-1, 1)
    return np.atleast_2d(X).reshape(-1, dim)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _diameter(points: np.ndarray) -> float:
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) > 3:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def segment_intersections(A: np.ndarray, B: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Intersection points of non-parallel segment pairs (endpoints included)."""
    A = np.asarray(A, dtype=float).reshape(-1, 2, 2)
    B = np.asarray(B, dtype=float).reshape(-1, 2, 2)
    out = []
    if len(A) == 0 or len(B) == 0:
        return np.zeros((0, 2))
    q = B[:, 0]
    s = B[:, 1] - B[:, 0]
    for i in range(0, len(A), chunk):
        p = A[i : i + chunk, 0][:, None, :]
        r = (A[i : i + chunk, 1] - A[i : i + chunk, 0])[:, None, :]
        den = _cross(r, s[None])
        with np.errstate(divide="ignore", invalid="ignore"):
            t = _cross(q[None] - p, s[None]) / den
            u = _cross(q[None] - p, r) / den
        eps = 1e-12
        hit = (np.abs(den) > 1e-15) & (t >= -eps) & (t <= 1 + eps) & (u >= -eps) & (u <= 1 + eps)
        ii, jj = np.nonzero(hit)
        out.append(p[ii, 0] + t[ii, jj, None] * r[ii, 0])
    return np.concatenate(out) if out else np.zeros((0, 2))


@dataclass(frozen=True)
class Support:
    """A boundary piece that can bound a fiber interval.

    Straight pieces carry a point and a unit direction of their line; curved
    pieces only a label.
    """

    label: str
    point: np.ndarray | None = None
    direction: np.ndarray | None = None

    @property
    def straight(self) -> bool:
        return self.point is not None


@dataclass(frozen=True)
class FiberDecomposition:
    """Open intervals ``(alpha, beta)`` of the fiber ``{s : s theta + y in domain}``."""

    theta: Direction
    y: np.ndarray
    intervals: tuple[tuple[float, float], ...]
    supports: tuple[tuple[int, int], ...] = ()

    @property
    def length(self) -> float:
        return float(sum(b - a for a, b in self.intervals))


@dataclass(frozen=True)
class ExitRecord:
    point: np.ndarray
    theta: Direction
    exit_point: np.ndarray
    delta_plus: float
    delta_minus: float
    chord: float
    partner: np.ndarray


# -------------------------------------------------------------------- slits


class SlitSet:
    """Closed segments removed from a planar domain, grouped by supporting line.

    Grouping lets thousands of collinear slits (Cantor remainders) be tested
    with a binary search instead of one test per segment.
    """

    def __init__(self, segments, tol: float):
        seg = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
        self.segments = seg
        self.tol = tol
        self.groups: list[dict] = []
        if len(seg) == 0:
            return
        d = seg[:, 1] - seg[:, 0]
        length = np.linalg.norm(d, axis=1)
        if np.any(length == 0):
            raise GeometryError("degenerate slit")
        v = d / length[:, None]
        flip = (v[:, 0] < 0) | ((v[:, 0] == 0) & (v[:, 1] < 0))
        v[flip] *= -1
        nrm = np.stack([-v[:, 1], v[:, 0]], axis=1)
        c = (nrm * seg[:, 0]).sum(1)
        key = np.round(np.column_stack([v, c]), 11)
        _, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        for g in range(inv.max() + 1):
            idx = np.nonzero(inv == g)[0]
            vg, ng, cg = v[idx[0]], nrm[idx[0]], float(c[idx[0]])
            a = seg[idx, 0] @ vg
            b = seg[idx, 1] @ vg
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            order = np.argsort(lo)
            lo, hi = lo[order], hi[order]
            mlo, mhi = [lo[0]], [hi[0]]
            for x0, x1 in zip(lo[1:], hi[1:]):
                if x0 <= mhi[-1]:
                    mhi[-1] = max(mhi[-1], x1)
                else:
                    mlo.append(x0)
                    mhi.append(x1)
            self.groups.append(
                dict(v=vg, n=ng, c=cg, origin=cg * ng, lo=np.array(mlo), hi=np.array(mhi))
            )

    def __len__(self):
        return len(self.segments)

    @staticmethod
    def _in_closed(g, w):
        idx = np.searchsorted(g["lo"], w, side="right") - 1
        ok = idx >= 0
        res = np.zeros(w.shape, dtype=bool)
        res[ok] = w[ok] <= g["hi"][idx[ok]]
        return res

    def on_slit(self, X: np.ndarray) -> np.ndarray:
        res = np.zeros(len(X), dtype=bool)
        for g in self.groups:
            near = np.abs(X @ g["n"] - g["c"]) <= self.tol
            if near.any():
                w = X[near] @ g["v"]
                idx = np.searchsorted(g["lo"], w + self.tol, side="right") - 1
                ok = idx >= 0
                hit = np.zeros(w.shape, dtype=bool)
                hit[ok] = w[ok] <= g["hi"][idx[ok]] + self.tol
                res[np.nonzero(near)[0][hit]] |= True
        return res

    def ray_hit(self, X: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Smallest ``t > 0`` with ``X + t v`` on a slit (``inf`` if none)."""
        best = np.full(len(X), np.inf)
        for g in self.groups:
            dn = float(g["n"] @ v)
            dv = float(g["v"] @ v)
            w0 = X @ g["v"]
            if abs(dn) > 1e-14:
                t = (g["c"] - X @ g["n"]) / dn
                hit = (t > 0) & self._in_closed(g, w0 + t * dv)
                best = np.where(hit, np.minimum(best, t), best)
            else:
                on = np.abs(X @ g["n"] - g["c"]) <= self.tol
                if not on.any():
                    continue
                w = w0[on]
                if dv > 0:
                    idx = np.searchsorted(g["lo"], w, side="right")
                    ok = idx < len(g["lo"])
                    t = np.full(w.shape, np.inf)
                    t[ok] = g["lo"][idx[ok]] - w[ok]
                else:
                    idx = np.searchsorted(g["hi"], w, side="left") - 1
                    ok = idx >= 0
                    t = np.full(w.shape, np.inf)
                    t[ok] = w[ok] - g["hi"][idx[ok]]
                best[on] = np.minimum(best[on], t)
        return best

    def line_cuts(self, v: np.ndarray, y0: np.ndarray) -> list[tuple[float, float, int]]:
        """Closed parameter ranges ``[s0, s1]`` of the line ``y0 + s v`` lying on slits."""
        cuts = []
        for gi, g in enumerate(self.groups):
            dn = float(g["n"] @ v)
            dv = float(g["v"] @ v)
            w0 = float(y0 @ g["v"])
            if abs(dn) > 1e-14:
                s = (g["c"] - float(y0 @ g["n"])) / dn
                if self._in_closed(g, np.array([w0 + s * dv]))[0]:
                    cuts.append((s, s, gi))
            elif abs(float(y0 @ g["n"]) - g["c"]) <= self.tol:
                for lo, hi in zip(g["lo"], g["hi"]):
                    a, b = (lo - w0) / dv, (hi - w0) / dv
                    cuts.append((min(a, b), max(a, b), gi))
        return sorted(cuts)

    def key_points(self) -> np.ndarray:
        return self.segments.reshape(-1, 2)

    def group_support(self, gi: int) -> Support:
        g = self.groups[gi]
        return Support(f"slit-line {gi}", g["origin"], g["v"])

    def to_spec(self):
        return self.segments.tolist()


def _split_by_cuts(intervals, supports, cuts, slit_offset):
    """Remove closed cut ranges from a sorted list of open intervals."""
    if not cuts:
        return intervals, supports
    out_i, out_s = [], []
    for (a, b), (sa, sb) in zip(intervals, supports):
        cur_a, cur_sa = a, sa
        for c0, c1, gi in cuts:
            if c1 <= cur_a or c0 >= b:
                continue
            if c0 > cur_a:
                out_i.append((cur_a, c0))
                out_s.append((cur_sa, slit_offset + gi))
            cur_a, cur_sa = max(cur_a, c1), slit_offset + gi
        if b > cur_a:
            out_i.append((cur_a, b))
            out_s.append((cur_sa, sb))
    return out_i, out_s


# ------------------------------------------------------------------ domains


class Domain:
    """Base class.  Subclasses set ``dim``, ``bbox``, ``diameter`` and ``tol``."""

    kind = "abstract"
    dim: int
    bbox: np.ndarray
    diameter: float
    tol: float
    name: str | None = None
    meta: dict | None = None
    structured = True

    def contains(self, X) -> np.ndarray:
        raise NotImplementedError

    def exits(self, X, theta) -> tuple[np.ndarray, np.ndarray]:
        """Forward and backward exit distances ``(delta_plus, delta_minus)``.

        Points are assumed to be interior; no membership check is done.
        """
        X = _points(X, self.dim)
        v = as_direction(theta).vector
        return self._forward(X, v), self._forward(X, -v)

    def _forward(self, X, v) -> np.ndarray:
        raise NotImplementedError

    def fiber_structure(self, theta, eta) -> FiberDecomposition:
        raise NotImplementedError

    def events(self, theta) -> np.ndarray:
        raise UnsupportedKind(f"{self.kind} domains have no exact sweep")

    @property
    def supports(self) -> list[Support]:
        return []

    def area(self) -> float:
        raise NotImplementedError

    @property
    def volume_bbox(self) -> float:
        return float(np.prod(self.bbox[1] - self.bbox[0]))

    def to_spec(self) -> dict:
        raise UnsupportedKind(f"{self.kind} domains are not serializable")

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r})"


class IntervalUnion(Domain):
    """Finite union of disjoint open intervals of the line."""

    kind = "intervals"
    dim = 1

    def __init__(self, intervals: Sequence[tuple[float, float]], name: str | None = None, meta: dict | None = None):
        iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
        if len(iv) == 0 or np.any(iv[:, 1] <= iv[:, 0]):
            raise GeometryError("intervals must be non-empty with a < b")
        iv = iv[np.argsort(iv[:, 0])]
        if np.any(iv[1:, 0] < iv[:-1, 1]):
            raise GeometryError("intervals must be disjoint")
        self.a, self.b = iv[:, 0].copy(), iv[:, 1].copy()
        self.name = name
        self.meta = dict(meta or {})
        self.bbox = np.array([[self.a[0]], [self.b[-1]]])
        self.diameter = float(self.b[-1] - self.a[0])
        self.tol = 1e-12 * self.diameter

    @property
    def intervals(self):
        return list(zip(self.a.tolist(), self.b.tolist()))

    def _locate(self, x):
        idx = np.searchsorted(self.a, x, side="right") - 1
        return np.clip(idx, 0, len(self.a) - 1), idx

    def contains(self, X):
        x = _points(X, 1)[:, 0]
        idx, raw = self._locate(x)
        return (raw >= 0) & (x > self.a[idx] + self.tol) & (x < self.b[idx] - self.tol)

    def _forward(self, X, v):
        x = X[:, 0]
        idx, _ = self._locate(x)
        return self.b[idx] - x if v[0] > 0 else x - self.a[idx]

    def fiber_structure(self, theta, eta=None):
        theta = as_direction(theta)
        if theta.vector[0] > 0:
            iv = self.intervals
        else:
            iv = [(-b, -a) for a, b in reversed(self.intervals)]
        return FiberDecomposition(theta, np.zeros(0), tuple(iv), tuple((i, i) for i in range(len(iv))))

    def area(self):
        return float((self.b - self.a).sum())

    def to_spec(self):
        return {"kind": self.kind, "intervals": self.intervals, "name": self.name, "meta": self.meta}


class RectilinearUnion(Domain):
    """Union of open axis-aligned boxes, minus closed slit segments.

    ``boxes[i] = [[x0, y0], [x1, y1]]``.  The union is open, so two boxes that
    only share a face leave that face outside the domain.
    """

    kind = "rectilinear"
    dim = 2

    def __init__(self, boxes, slits=(), name: str | None = None):
        b = np.asarray(boxes, dtype=float).reshape(-1, 2, 2)
        if len(b) == 0 or np.any(b[:, 1] <= b[:, 0]):
            raise GeometryError("boxes need lo < hi in both coordinates")
        self.lo, self.hi = b[:, 0].copy(), b[:, 1].copy()
        self.name = name
        self.bbox = np.array([self.lo.min(0), self.hi.max(0)])
        corners = np.concatenate([self.lo, self.hi, np.c_[self.lo[:, 0], self.hi[:, 1]], np.c_[self.hi[:, 0], self.lo[:, 1]]])
        self.diameter = _diameter(corners)
        self.tol = 1e-12 * self.diameter
        self.slits = SlitSet(slits, self.tol)
        self._supports = None

    @property
    def boxes(self) -> np.ndarray:
        return np.stack([self.lo, self.hi], axis=1)

    @property
    def supports(self):
        if self._supports is None:
            sup = []
            ex, ey = np.array([1.0, 0.0]), np.array([0.0, 1.0])
            for i, (lo, hi) in enumerate(zip(self.lo, self.hi)):
                sup += [
                    Support(f"box {i} bottom", lo.copy(), ex),
                    Support(f"box {i} top", np.array([lo[0], hi[1]]), ex),
                    Support(f"box {i} left", lo.copy(), ey),
                    Support(f"box {i} right", np.array([hi[0], lo[1]]), ey),
                ]
            sup += [self.slits.group_support(g) for g in range(len(self.slits.groups))]
            self._supports = sup
        return self._supports

    def contains(self, X):
        X = _points(X, 2)
        out = np.zeros(len(X), dtype=bool)
        t = self.tol
        for i in range(0, len(X), _CHUNK):
            x = X[i : i + _CHUNK]
            inside = (
                (x[:, None, 0] > self.lo[None, :, 0] + t)
                & (x[:, None, 0] < self.hi[None, :, 0] - t)
                & (x[:, None, 1] > self.lo[None, :, 1] + t)
                & (x[:, None, 1] < self.hi[None, :, 1] - t)
            )
            out[i : i + _CHUNK] = inside.any(1)
        if len(self.slits) and out.any():
            idx = np.nonzero(out)[0]
            out[idx[self.slits.on_slit(X[idx])]] = False
        return out

    def _slabs(self, X, v):
        """Per-box parameter intervals of the rays ``X + t v``; shape (n, B)."""
        n = len(X)
        t_lo = np.full((n, len(self.lo)), -np.inf)
        t_hi = np.full((n, len(self.lo)), np.inf)
        for ax in range(2):
            lo = self.lo[None, :, ax] - X[:, None, ax]
            hi = self.hi[None, :, ax] - X[:, None, ax]
            if abs(v[ax]) < 1e-15:
                bad = ~((lo < 0) & (hi > 0))
                t_lo[bad] = np.inf
            else:
                a, b = lo / v[ax], hi / v[ax]
                t_lo = np.maximum(t_lo, np.minimum(a, b))
                t_hi = np.minimum(t_hi, np.maximum(a, b))
        return t_lo, t_hi

    def _forward(self, X, v):
        out = np.empty(len(X))
        for i in range(0, len(X), _CHUNK):
            x = X[i : i + _CHUNK]
            t_lo, t_hi = self._slabs(x, v)
            valid = t_lo < t_hi
            start = valid & (t_lo < 0) & (t_hi > 0)
            end = np.where(start, t_hi, -np.inf).max(1)
            end = np.where(np.isfinite(end), end, 0.0)
            while True:
                cand = valid & (t_lo < end[:, None]) & (t_hi > end[:, None])
                if not cand.any():
                    break
                end = np.maximum(end, np.where(cand, t_hi, -np.inf).max(1))
            out[i : i + _CHUNK] = end
        if len(self.slits):
            out = np.minimum(out, self.slits.ray_hit(X, v))
        return out

    def fiber_structure(self, theta, eta):
        theta = as_direction(theta)
        v = theta.vector
        e = theta.frame[0]
        y0 = float(np.ravel(eta)[0]) * e
        t_lo, t_hi = self._slabs(y0[None, :], v)
        t_lo, t_hi = t_lo[0], t_hi[0]
        keep = np.nonzero(t_lo < t_hi)[0]
        # which face realises each end
        ent, ext = [], []
        for i in keep:
            cand_lo, cand_hi = [], []
            for ax in range(2):
                if abs(v[ax]) < 1e-15:
                    continue
                a = (self.lo[i, ax] - y0[ax]) / v[ax]
                b = (self.hi[i, ax] - y0[ax]) / v[ax]
                lo_face = 4 * i + (2 if ax == 0 else 0)
                hi_face = 4 * i + (3 if ax == 0 else 1)
                if v[ax] > 0:
                    cand_lo.append((a, lo_face))
                    cand_hi.append((b, hi_face))
                else:
                    cand_lo.append((b, hi_face))
                    cand_hi.append((a, lo_face))
            ent.append(max(cand_lo)[1])
            ext.append(min(cand_hi)[1])
        order = np.argsort(t_lo[keep], kind="stable")
        intervals, supports = [], []
        for j in order:
            a, b = t_lo[keep[j]], t_hi[keep[j]]
            if intervals and a < intervals[-1][1]:
                if b > intervals[-1][1]:
                    intervals[-1] = (intervals[-1][0], b)
                    supports[-1] = (supports[-1][0], ext[j])
            else:
                intervals.append((a, b))
                supports.append((ent[j], ext[j]))
        intervals = [(float(a), float(b)) for a, b in intervals]
        cuts = self.slits.line_cuts(v, y0) if len(self.slits) else []
        intervals, supports = _split_by_cuts(intervals, supports, cuts, 4 * len(self.lo))
        return FiberDecomposition(theta, np.array([float(np.ravel(eta)[0])]), tuple(intervals), tuple(supports))

    def _key_points(self):
        lo, hi = self.lo, self.hi
        pts = [lo, hi, np.c_[lo[:, 0], hi[:, 1]], np.c_[hi[:, 0], lo[:, 1]]]
        # horizontal edges (y, x0, x1) against vertical edges (x, y0, y1)
        H = np.concatenate([np.c_[lo[:, 1], lo[:, 0], hi[:, 0]], np.c_[hi[:, 1], lo[:, 0], hi[:, 0]]])
        V = np.concatenate([np.c_[lo[:, 0], lo[:, 1], hi[:, 1]], np.c_[hi[:, 0], lo[:, 1], hi[:, 1]]])
        V = V[np.argsort(V[:, 0])]
        for y, x0, x1 in H:
            j0 = np.searchsorted(V[:, 0], x0, side="left")
            j1 = np.searchsorted(V[:, 0], x1, side="right")
            cand = V[j0:j1]
            cand = cand[(cand[:, 1] <= y) & (cand[:, 2] >= y)]
            if len(cand):
                pts.append(np.c_[cand[:, 0], np.full(len(cand), y)])
        if len(self.slits):
            segs = np.concatenate(
                [np.stack([np.c_[H[:, 1], H[:, 0]], np.c_[H[:, 2], H[:, 0]]], 1),
                 np.stack([np.c_[V[:, 0], V[:, 1]], np.c_[V[:, 0], V[:, 2]]], 1)]
            )
            pts.append(self.slits.key_points())
            pts.append(segment_intersections(self.slits.segments, segs))
            pts.append(segment_intersections(self.slits.segments, self.slits.segments))
        return np.concatenate(pts)

    def events(self, theta):
        return _events_from_points(self._key_points(), as_direction(theta), self.diameter)

    def area(self):
        xs = np.unique(np.concatenate([self.lo[:, 0], self.hi[:, 0]]))
        ys = np.unique(np.concatenate([self.lo[:, 1], self.hi[:, 1]]))
        cover = np.zeros((len(xs) - 1, len(ys) - 1), dtype=bool)
        i0 = np.searchsorted(xs, self.lo[:, 0])
        i1 = np.searchsorted(xs, self.hi[:, 0])
        j0 = np.searchsorted(ys, self.lo[:, 1])
        j1 = np.searchsorted(ys, self.hi[:, 1])
        for a, b, c, d in zip(i0, i1, j0, j1):
            cover[a:b, c:d] = True
        return float((np.diff(xs)[:, None] * np.diff(ys)[None, :])[cover].sum())

    def to_spec(self):
        return {"kind": self.kind, "boxes": self.boxes.tolist(), "slits": self.slits.to_spec(), "name": self.name}


class _EdgeIndex:
    """Buckets of polygon edges by their range in one coordinate ``h``.

    ``candidates(h)`` returns, per query, the padded list of edges whose
    (tolerance-widened) range contains ``h``, plus a validity mask.
    """

    def __init__(self, hp, hq, tol):
        lo, hi = np.minimum(hp, hq) - tol, np.maximum(hp, hq) + tol
        n = len(hp)
        self.h0, h1 = lo.min(), hi.max()
        self.nb = max(1, n)
        self.width = (h1 - self.h0) / self.nb or 1.0
        b0 = np.clip(((lo - self.h0) / self.width).astype(int), 0, self.nb - 1)
        b1 = np.clip(((hi - self.h0) / self.width).astype(int), 0, self.nb - 1)
        span = b1 - b0 + 1
        edge = np.repeat(np.arange(n), span)
        bucket = np.repeat(b0, span) + (np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span))
        counts = np.bincount(bucket, minlength=self.nb)
        order = np.argsort(bucket, kind="stable")
        slot = np.arange(len(bucket)) - np.repeat(np.cumsum(counts) - counts, counts)
        self.table = np.zeros((self.nb, max(1, counts.max())), dtype=int)
        self.mask = np.zeros(self.table.shape, dtype=bool)
        self.table[bucket[order], slot] = edge[order]
        self.mask[bucket[order], slot] = True

    def candidates(self, h):
        b = np.clip(np.floor((h - self.h0) / self.width), 0, self.nb - 1).astype(int)
        return self.table[b], self.mask[b]


class Polygon(Domain):
    """Interior of a simple closed polygon, minus closed slit segments."""

    kind = "polygon"
    dim = 2

    def __init__(self, vertices, slits=(), name: str | None = None):
        V = np.asarray(vertices, dtype=float).reshape(-1, 2)
        if len(V) < 3:
            raise GeometryError("a polygon needs at least three vertices")
        if not _is_simple(V, 1e-12 * _diameter(V)):
            raise GeometryError("the polygon loop is not simple")
        if _shoelace(V) < 0:
            V = V[::-1].copy()
        self.vertices = V
        self.name = name
        self.p = V
        self.q = np.roll(V, -1, axis=0)
        self.bbox = np.array([V.min(0), V.max(0)])
        self.diameter = _diameter(V)
        self.tol = 1e-12 * self.diameter
        self.slits = SlitSet(slits, self.tol)
        self._supports = None
        self._indices = {}

    @property
    def supports(self):
        if self._supports is None:
            d = self.q - self.p
            d = d / np.linalg.norm(d, axis=1)[:, None]
            sup = [Support(f"edge {i}", self.p[i].copy(), d[i]) for i in range(len(self.p))]
            sup += [self.slits.group_support(g) for g in range(len(self.slits.groups))]
            self._supports = sup
        return self._supports

    def _index(self, v):
        key = tuple(np.round(v, 15))
        idx = self._indices.get(key)
        if idx is None:
            e = np.array([-v[1], v[0]])
            idx = _EdgeIndex(self.p @ e, self.q @ e, self.tol)
            self._indices[key] = idx
        return idx

    def contains(self, X):
        X = _points(X, 2)
        cand, valid = self._index(np.array([1.0, 0.0])).candidates(X[:, 1])
        p, q = self.p[cand], self.q[cand]
        d = q - p
        py, qy = p[..., 1], q[..., 1]
        y = X[:, None, 1]
        straddle = ((py > y) != (qy > y)) & valid
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = p[..., 0] + (y - py) * d[..., 0] / d[..., 1]
        out = (straddle & (X[:, None, 0] < xc)).sum(1) % 2 == 1
        if out.any():
            k = np.nonzero(out)[0]
            rel = X[k, None, :] - p[k]
            dd = (d[k] ** 2).sum(-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.clip(np.where(dd > 0, (rel * d[k]).sum(-1) / dd, 0.0), 0.0, 1.0)
            dist2 = np.where(valid[k], ((rel - t[..., None] * d[k]) ** 2).sum(-1), np.inf).min(1)
            out[k] = dist2 > self.tol**2
        if len(self.slits) and out.any():
            idx = np.nonzero(out)[0]
            out[idx[self.slits.on_slit(X[idx])]] = False
        return out

    def _forward(self, X, v):
        e = np.array([-v[1], v[0]])
        cand, valid = self._index(v).candidates(X @ e)
        p, q = self.p[cand], self.q[cand]
        xe = (X @ e)[:, None]
        xv = (X @ v)[:, None]
        hp, hq = p @ e - xe, q @ e - xe
        sp, sq = p @ v - xv, q @ v - xv
        cross = ((hp > 0) != (hq > 0)) & valid
        with np.errstate(divide="ignore", invalid="ignore"):
            s = sp + (sq - sp) * hp / (hp - hq)
        s = np.where(cross & (s > 0), s, np.inf)
        out = s.min(1) if s.shape[1] else np.full(len(X), np.inf)
        if len(self.slits):
            out = np.minimum(out, self.slits.ray_hit(X, v))
        return out

    def fiber_structure(self, theta, eta):
        theta = as_direction(theta)
        v = theta.vector
        e = theta.frame[0]
        eta = float(np.ravel(eta)[0])
        hp = self.p @ e - eta
        hq = self.q @ e - eta
        sp, sq = self.p @ v, self.q @ v
        cross = np.nonzero((hp > 0) != (hq > 0))[0]
        s = sp[cross] + (sq[cross] - sp[cross]) * hp[cross] / (hp[cross] - hq[cross])
        order = np.argsort(s, kind="stable")
        s, cross = s[order], cross[order]
        intervals, supports = [], []
        for k in range(0, len(s) - 1, 2):
            if s[k + 1] > s[k]:
                intervals.append((float(s[k]), float(s[k + 1])))
                supports.append((int(cross[k]), int(cross[k + 1])))
        y0 = eta * e
        cuts = self.slits.line_cuts(v, y0) if len(self.slits) else []
        intervals, supports = _split_by_cuts(intervals, supports, cuts, len(self.p))
        return FiberDecomposition(theta, np.array([eta]), tuple(intervals), tuple(supports))

    def _key_points(self):
        pts = [self.vertices]
        if len(self.slits):
            edges = np.stack([self.p, self.q], axis=1)
            pts.append(self.slits.key_points())
            pts.append(segment_intersections(self.slits.segments, edges))
            pts.append(segment_intersections(self.slits.segments, self.slits.segments))
        return np.concatenate(pts)

    def events(self, theta):
        return _events_from_points(self._key_points(), as_direction(theta), self.diameter)

    def area(self):
        return float(_shoelace(self.vertices))

    def to_spec(self):
        return {"kind": self.kind, "vertices": self.vertices.tolist(), "slits": self.slits.to_spec(), "name": self.name}


def _shoelace(V):
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _touches(x, o, w, tol):
    """Points ``x`` within ``tol`` of the segments ``o + [0, 1] w``."""
    t = np.clip(np.einsum("ij,ij->i", x - o, w) / np.einsum("ij,ij->i", w, w), 0.0, 1.0)
    return np.linalg.norm(x - o - t[:, None] * w, axis=1) <= tol


def _is_simple(V: np.ndarray, tol: float) -> bool:
    """No repeated vertex and no two non-adjacent edges touching."""
    n = len(V)
    P, Q = V, np.roll(V, -1, axis=0)
    if np.any(np.linalg.norm(Q - P, axis=1) <= tol):
        return False
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    for s in range(0, len(i), 1 << 16):
        a, b = i[s : s + (1 << 16)], j[s : s + (1 << 16)]
        p, r = P[a], Q[a] - P[a]
        q, u = P[b], Q[b] - P[b]
        d1 = _cross(r, q - p)
        d2 = _cross(r, q + u - p)
        d3 = _cross(u, p - q)
        d4 = _cross(u, p + r - q)
        lr, lu = np.linalg.norm(r, axis=1), np.linalg.norm(u, axis=1)
        # signed distances of each segment's ends from the other's line
        d1, d2, d3, d4 = d1 / lr, d2 / lr, d3 / lu, d4 / lu
        cross = (d1 * d2 < 0) & (d3 * d4 < 0)
        near = (_touches(q, p, r, tol) | _touches(q + u, p, r, tol) | _touches(p, q, u, tol)
                | _touches(p + r, q, u, tol))
        if np.any(cross | near):
            return False
    return True


def _events_from_points(points, theta: Direction, diameter: float) -> np.ndarray:
    eta = np.sort(points @ theta.frame[0])
    keep = np.concatenate(([True], np.diff(eta) > 1e-13 * diameter))
    return eta[keep]


class Cusp(Domain):
    """``{ |x1| < x2**3, 0 < x2 < 1 }``: an outward cusp at the origin."""

    kind = "cusp"
    dim = 2
    _rel = 1e-12

    def __init__(self, name: str | None = "cusp"):
        self.name = name
        self.bbox = np.array([[-1.0, 0.0], [1.0, 1.0]])
        self.diameter = 2.0
        self.tol = 1e-12 * self.diameter

    @property
    def supports(self):
        return [
            Support("right curve x1 = x2^3"),
            Support("left curve x1 = -x2^3"),
            Support("top edge", np.array([0.0, 1.0]), np.array([1.0, 0.0])),
        ]

    def contains(self, X):
        X = _points(X, 2)
        x1, x2 = X[:, 0], X[:, 1]
        return (x2 > 0) & (x2 < 1.0 - self._rel) & (np.abs(x1) < x2**3 * (1.0 - self._rel))

    @staticmethod
    def _constraints(x1, x2):
        return x2**3 - x1, x2**3 + x1, 1.0 - x2

    @staticmethod
    def line_roots(X: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Real roots ``t`` of the three boundary constraints along ``X + t v``.

        Returns ``(t, which)`` with shape (n, 7); missing roots are NaN and
        ``which`` is 0 (right curve), 1 (left curve) or 2 (top edge).
        """
        n = len(X)
        x1, a = X[:, 0], X[:, 1]
        v1, b = float(v[0]), float(v[1])
        roots = np.full((n, 7), np.nan)
        which = np.tile(np.array([0, 0, 0, 1, 1, 1, 2]), (n, 1))
        if abs(b) < 1e-14:
            roots[:, 0] = (a**3 - x1) / v1
            roots[:, 3] = -(a**3 + x1) / v1
            return roots, which
        for k, sgn in enumerate((-1.0, 1.0)):
            # u = a + b t turns the constraint into u^3 + p u + q = 0
            p = np.full(n, sgn * v1 / b)
            q = sgn * x1 - sgn * v1 * a / b
            comp = np.zeros((n, 3, 3))
            comp[:, 0, 1] = -p
            comp[:, 0, 2] = -q
            comp[:, 1, 0] = 1.0
            comp[:, 2, 1] = 1.0
            u = np.linalg.eigvals(comp)
            real = np.abs(u.imag) <= 1e-6 * (1.0 + np.abs(u.real))
            t = (u.real - a[:, None]) / b
            # polish in t, where the constraint is well conditioned for small b
            for _ in range(4):
                xx2 = a[:, None] + b * t
                g = xx2**3 + sgn * (x1[:, None] + v1 * t)
                dg = 3.0 * b * xx2**2 + sgn * v1
                with np.errstate(divide="ignore", invalid="ignore"):
                    step = np.where(dg != 0, g / dg, 0.0)
                t = t - step
            xx2 = a[:, None] + b * t
            g = xx2**3 + sgn * (x1[:, None] + v1 * t)
            scale = 1.0 + np.abs(x1)[:, None] + np.abs(t) + np.abs(xx2) ** 3
            real &= np.abs(g) <= 1e-12 * scale
            roots[:, 3 * k : 3 * k + 3] = np.where(real, t, np.nan)
        roots[:, 6] = (1.0 - a) / b
        return roots, which

    def _forward(self, X, v):
        out = np.empty(len(X))
        for i in range(0, len(X), 65536):
            t, _ = self.line_roots(X[i : i + 65536], v)
            t = np.where(t > 0, t, np.inf)
            out[i : i + 65536] = t.min(1)
        return out

    def fiber_structure(self, theta, eta):
        theta = as_direction(theta)
        v = theta.vector
        eta = float(np.ravel(eta)[0])
        y0 = eta * theta.frame[0]
        t, which = self.line_roots(y0[None, :], v)
        ok = ~np.isnan(t[0])
        t, which = t[0][ok], which[0][ok]
        order = np.argsort(t, kind="stable")
        t, which = t[order], which[order]
        intervals, supports = [], []
        for k in range(len(t) - 1):
            if t[k + 1] <= t[k]:
                continue
            mid = y0 + 0.5 * (t[k] + t[k + 1]) * v
            g = self._constraints(mid[0], mid[1])
            if min(g) > 0:
                intervals.append((float(t[k]), float(t[k + 1])))
                supports.append((int(which[k]), int(which[k + 1])))
        return FiberDecomposition(theta, np.array([eta]), tuple(intervals), tuple(supports))

    def events(self, theta):
        theta = as_direction(theta)
        v1, v2 = theta.vector
        pts = [(0.0, 0.0), (1.0, 1.0), (-1.0, 1.0)]
        if abs(v2) > 1e-15:
            for sgn in (1.0, -1.0):
                s2 = sgn * v1 / (3.0 * v2)
                if 0.0 < s2 < 1.0:
                    s = math.sqrt(s2)
                    pts.append((sgn * s**3, s))
        return _events_from_points(np.array(pts), theta, self.diameter)

    def area(self):
        return 0.5

    def to_spec(self):
        return {"kind": self.kind, "name": self.name}


class Oracle(Domain):
    """A domain known only through a vectorized membership predicate.

    Exits are found by marching with step ``h`` and then bisecting, so a
    boundary feature thinner than ``h`` can be missed.
    """

    kind = "oracle"
    structured = False

    def __init__(self, predicate: Callable[[np.ndarray], np.ndarray], bbox, h: float | None = None,
                 name: str | None = None, bisect_steps: int = 60):
        self.predicate = predicate
        self.bbox = np.asarray(bbox, dtype=float).reshape(2, -1)
        self.dim = self.bbox.shape[1]
        self.diameter = float(np.linalg.norm(self.bbox[1] - self.bbox[0]))
        self.h = h if h is not None else self.diameter / 2048.0
        self.tol = 1e-12 * self.diameter
        self.name = name
        self.bisect_steps = bisect_steps

    def contains(self, X):
        X = _points(X, self.dim)
        return np.asarray(self.predicate(X), dtype=bool).reshape(len(X))

    def _forward(self, X, v):
        n = len(X)
        lo = np.zeros(n)
        hi = np.full(n, np.nan)
        active = np.arange(n)
        steps = int(math.ceil(2.0 * self.diameter / self.h)) + 1
        for k in range(1, steps + 1):
            if active.size == 0:
                break
            inside = self.contains(X[active] + k * self.h * v)
            hi[active[~inside]] = k * self.h
            lo[active[inside]] = k * self.h
            active = active[inside]
        if active.size:
            raise RayUnresolved(f"{active.size} ray(s) did not leave the bounding box")
        for _ in range(self.bisect_steps):
            mid = 0.5 * (lo + hi)
            inside = self.contains(X + mid[:, None] * v)
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return hi

    def fiber_structure(self, theta, eta):
        theta = as_direction(theta)
        v = theta.vector
        y0 = np.atleast_1d(np.asarray(eta, dtype=float)) @ theta.frame
        corners = np.array(np.meshgrid(*self.bbox.T)).reshape(self.dim, -1).T
        s_proj = corners @ v
        s = np.arange(s_proj.min() - self.h, s_proj.max() + 2 * self.h, self.h)
        inside = self.contains(y0[None, :] + s[:, None] * v)
        intervals = []
        k = 0
        while k < len(s):
            if not inside[k]:
                k += 1
                continue
            j = k
            while j + 1 < len(s) and inside[j + 1]:
                j += 1
            a = self._bisect(y0, v, s[k - 1], s[k], entering=True)
            b = self._bisect(y0, v, s[j], s[j + 1], entering=False)
            intervals.append((a, b))
            k = j + 1
        return FiberDecomposition(theta, np.atleast_1d(np.asarray(eta, dtype=float)), tuple(intervals))

    def _bisect(self, y0, v, lo, hi, entering):
        for _ in range(self.bisect_steps):
            mid = 0.5 * (lo + hi)
            inside = bool(self.contains((y0 + mid * v)[None, :])[0])
            if inside != entering:
                lo = mid
            else:
                hi = mid
        return float(hi if entering else lo)

    def area(self):
        raise UnsupportedKind("no exact area for predicate domains")


def domain_from_spec(spec: dict) -> Domain:
    kind = spec.get("kind")
    name = spec.get("name")
    if kind == "intervals":
        return IntervalUnion(spec["intervals"], name=name, meta=spec.get("meta"))
    if kind == "rectilinear":
        return RectilinearUnion(spec["boxes"], spec.get("slits", ()), name=name)
    if kind == "polygon":
        return Polygon(spec["vertices"], spec.get("slits", ()), name=name)
    if kind == "cusp":
        return Cusp(name=name or "cusp")
    raise GeometryError(f"unknown domain kind {kind!r}")


# ------------------------------------------------------------- point queries


def _single_point(domain: Domain, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if x.size != domain.dim:
        raise GeometryError(f"expected a point of dimension {domain.dim}")
    if not domain.contains(x[None, :])[0]:
        raise PointNotInterior(f"{x.tolist()} is not an interior point of {domain!r}")
    return x


def delta_theta(domain: Domain, theta, x) -> float:
    """Distance from ``x`` to the first boundary point along ``theta``."""
    x = _single_point(domain, x)
    return float(domain.exits(x[None, :], theta)[0][0])


def exit_record(domain: Domain, theta, x) -> ExitRecord:
    theta = as_direction(theta)
    x = _single_point(domain, x)
    dp, dm = domain.exits(x[None, :], theta)
    dp, dm = float(dp[0]), float(dm[0])
    v = theta.vector
    return ExitRecord(x, theta, x + dp * v, dp, dm, dp + dm, x - dm * v)


def fiber(domain: Domain, theta, y) -> FiberDecomposition:
    """Open intervals of ``{s : s theta + y in domain}``.

    ``y`` is given by its coordinates in the hyperplane frame of ``theta``
    (a scalar in the plane, nothing on the line).
    """
    theta = as_direction(theta)
    if domain.dim == 1:
        return domain.fiber_structure(theta)
    return domain.fiber_structure(theta, np.atleast_1d(np.asarray(y, dtype=float)))
