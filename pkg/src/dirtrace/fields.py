"""Scalar fields with analytic directional derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

Array = np.ndarray


@dataclass(frozen=True)
class ScalarField:
    """A field ``u`` with gradient, both vectorized over points of shape (n, d).

    ``component`` optionally labels the smooth piece a point belongs to; the
    finite-difference check never mixes values from different pieces.
    """

    u: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    label: str = ""
    component: Callable[[Array], Array] | None = None

    def __call__(self, X) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.broadcast_to(np.asarray(self.u(X), dtype=float), (len(X),)).copy()

    def gradient(self, X) -> Array:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.broadcast_to(np.asarray(self.grad(X), dtype=float), X.shape).copy()

    def directional(self, X, theta_vec) -> Array:
        return self.gradient(X) @ np.asarray(theta_vec, dtype=float)


def check_gradient(field: ScalarField, X, theta_vec, h: float = 1e-6) -> float:
    """Largest mismatch between the analytic and central-difference derivative."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    v = np.asarray(theta_vec, dtype=float)
    fp, fm = X + h * v, X - h * v
    ok = np.ones(len(X), dtype=bool)
    if field.component is not None:
        c = field.component(X)
        ok = (field.component(fp) == c) & (field.component(fm) == c)
    if not ok.any():
        return 0.0
    fd = (field(fp[ok]) - field(fm[ok])) / (2 * h)
    return float(np.max(np.abs(fd - field.directional(X[ok], v))))


def constant(c: float, dim: int = 2) -> ScalarField:
    return ScalarField(
        lambda X: np.full(len(X), float(c)),
        lambda X: np.zeros_like(X),
        label=repr(float(c)),
    )


def polynomial(coeffs, label: str | None = None) -> ScalarField:
    """Planar polynomial ``sum c[i, j] x1^i x2^j``."""
    C = np.asarray(coeffs, dtype=float)
    ni, nj = C.shape
    Cx = C[1:, :] * np.arange(1, ni)[:, None]
    Cy = C[:, 1:] * np.arange(1, nj)[None, :]

    def ev(M, X):
        if M.size == 0:
            return np.zeros(len(X))
        return np.polynomial.polynomial.polyval2d(X[:, 0], X[:, 1], M)

    return ScalarField(
        lambda X: ev(C, X),
        lambda X: np.stack([ev(Cx, X), ev(Cy, X)], axis=1),
        label=label or f"poly{C.shape}",
    )


def random_polynomial(rng: np.random.Generator, degree: int = 3, scale: float = 1.0) -> ScalarField:
    C = np.zeros((degree + 1, degree + 1))
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            C[i, j] = scale * rng.normal()
    return polynomial(C)


_FUNCS = {
    name: getattr(sympy, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "atan", "Abs")
}
_FUNCS["abs"] = sympy.Abs


def from_expression(expr: str, dim: int = 2) -> ScalarField:
    """Parse an expression in ``x1 .. xd`` (``x`` and ``y`` also accepted in the plane)."""
    syms = sympy.symbols(" ".join(f"x{i + 1}" for i in range(dim)))
    syms = (syms,) if dim == 1 else tuple(syms)
    local = dict(_FUNCS)
    local.update({f"x{i + 1}": s for i, s in enumerate(syms)})
    local["pi"] = sympy.pi
    local["x"] = syms[0]
    if dim == 2:
        local["y"] = syms[1]
    try:
        e = parse_expr(expr, local_dict=local, transformations=standard_transformations + (convert_xor,))
    except Exception as exc:  # sympy raises several unrelated types
        raise ValueError(f"cannot parse field expression {expr!r}: {exc}") from None
    extra = e.free_symbols - set(syms)
    if extra:
        raise ValueError(f"unknown symbols in {expr!r}: {sorted(map(str, extra))}")
    undefined = e.atoms(AppliedUndef)
    if undefined:
        raise ValueError(f"unknown functions in {expr!r}: {sorted(str(f.func) for f in undefined)}")
    f = sympy.lambdify(syms, e, "numpy")
    grads = [sympy.lambdify(syms, sympy.diff(e, s), "numpy") for s in syms]

    def u(X):
        return np.broadcast_to(np.asarray(f(*X.T), dtype=float), (len(X),))

    def grad(X):
        return np.stack([np.broadcast_to(np.asarray(g(*X.T), dtype=float), (len(X),)) for g in grads], axis=1)

    return ScalarField(u, grad, label=expr)
