"""Numerical checks of the trace identities and inequalities.

Every check returns a :class:`VerificationReport`.  ``passed`` is true iff
``residual <= tolerance + error_budget``; the budget carries the quadrature
error estimate on exact paths and three standard errors on Monte Carlo
paths.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import ScalarField, polynomial
from .geometry import Direction, Domain, UnsupportedKind, as_direction
from .measure import BoundaryMeasure, build_measure, mu_monte_carlo, rng_for, volume_integral
from .quadrature import integrate
from .reference import reference_volume_integral
from .trace import anchor_points, fiber_traces, trace_1d, trace_field

EXACT_RTOL = 1e-6
BOUND_SLACK = 1e-9
SUM_CONSTANT = 4.0


class HypothesisViolated(RuntimeError):
    """The Poincare check was asked for a field whose trace is not zero."""


class NoSharedSupport(RuntimeError):
    pass


class BadPartition(ValueError):
    pass


@dataclass
class VerificationReport:
    check_name: str
    domain_id: str
    field_id: str
    theta: list | None
    lhs: float
    rhs: float
    residual: float
    tolerance: float
    passed: bool
    error_budget: float = 0.0
    seed: int | None = None
    details: dict = field(default_factory=dict)

    @classmethod
    def build(cls, check_name, domain_id, field_id, theta, lhs, rhs, residual, tolerance, error_budget=0.0,
              seed=None, details=None):
        residual = float(residual)
        budget = float(error_budget)
        return cls(check_name, str(domain_id), str(field_id), theta, float(lhs), float(rhs), residual,
                   float(tolerance), bool(residual <= tolerance + budget), budget, seed, details or {})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        return cls.from_dict(json.loads(text))

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.check_name} domain={self.domain_id} field={self.field_id} "
                f"theta={self.theta} lhs={self.lhs:.6g} rhs={self.rhs:.6g} residual={self.residual:.3e} "
                f"tol={self.tolerance:.1e}")


def _domain_id(domain: Domain) -> str:
    return domain.name or domain.kind


def _theta_list(theta: Direction):
    return [float(x) for x in theta.vector]


def _measure(domain, theta, mu, n_samples, seed):
    if mu is not None:
        return mu
    return build_measure(domain, theta, n_samples=n_samples, seed=seed)


def theta_norms(mu: BoundaryMeasure, fields: Sequence[ScalarField]) -> tuple[np.ndarray, np.ndarray, float]:
    """``(||u||^2_L2, ||d_theta u||^2_L2)`` per field, integrated on the measure's fibers."""
    v = mu.theta.vector

    def h(X):
        rows = []
        for f in fields:
            rows += [f(X) ** 2, f.directional(X, v) ** 2]
        return np.array(rows)

    vals, err = volume_integral(mu, h)
    return vals[0::2], vals[1::2], err


# ------------------------------------------------------------------- Green


def check_green(domain: Domain, u: ScalarField, v: ScalarField, theta, mu: BoundaryMeasure | None = None, *,
                tol: float | None = None, n_samples: int = 200_000, seed: int = 0,
                lhs_route: str = "auto") -> VerificationReport:
    """Integration by parts along ``theta`` with the chord-divided trace product.

    ``lhs_route`` picks how the volume side is integrated: ``"reference"``
    uses the cell quadrature of :mod:`dirtrace.reference`, which shares
    nothing with the sweep; ``"fiber"`` integrates along the measure's own
    fibers.  ``"auto"`` takes the reference route for exact sweeps whenever
    the domain supports it.  Monte Carlo always uses its own samples.
    """
    theta = as_direction(theta)
    mu = _measure(domain, theta, mu, n_samples, seed)
    vec = theta.vector
    tb = trace_field([u, v], mu)
    au, av = tb.values
    bu, bv = tb.partner_values
    term = (au * av - bu * bv) / tb.chord
    m = mu.nodes.mass
    rhs = float(np.dot(m, term))

    def h(X):
        uu, vv = u(X), v(X)
        du, dv = u.directional(X, vec), v.directional(X, vec)
        return np.array([uu * dv + vv * du, uu**2 + du**2, vv**2 + dv**2])

    route = "fiber"
    if mu.mode == "exact" and lhs_route in ("auto", "reference"):
        try:
            vols, verr = reference_volume_integral(domain, h)
            route = "reference"
        except UnsupportedKind:
            if lhs_route == "reference":
                raise
    if route == "fiber":
        vols, verr = volume_integral(mu, h)
    lhs = float(vols[0])
    scale = max(abs(lhs), abs(rhs), math.sqrt(max(vols[1], 0) * max(vols[2], 0)), 1e-300)
    if mu.mode == "mc":
        n = mu.n_samples
        X = mu.nodes.base
        d = n * m * (h(X)[0] - term)
        mean = d.sum() / n
        se = math.sqrt(max((d**2).sum() / n - mean**2, 0.0) / n)
        budget = 3 * se / scale
        tol = 0.0 if tol is None else tol
    else:
        amp = (np.abs(au) + np.abs(av) + np.abs(bu) + np.abs(bv)) / tb.chord
        budget = (float(np.dot(m, tb.error * amp)) + verr) / scale
        tol = EXACT_RTOL if tol is None else tol
    return VerificationReport.build(
        "green", _domain_id(domain), f"{u.label}|{v.label}", _theta_list(theta), lhs, rhs,
        abs(lhs - rhs) / scale, tol, budget, mu.seed,
        {"scale": scale, "mode": mu.mode, "nodes": len(m), "lhs_route": route if mu.mode == "exact" else "mc"},
    )


# ------------------------------------------------------------------ bounds


def _bound_report(name, domain, u, theta, lhs, rhs, budget_abs, mu):
    denom = rhs if rhs > 0 else 1.0
    return VerificationReport.build(
        name, _domain_id(domain), u.label, _theta_list(theta), lhs, rhs, (lhs - rhs) / denom,
        BOUND_SLACK, budget_abs / denom, mu.seed, {"mode": mu.mode},
    )


def _bound_data(domain, u, theta, mu, n_samples, seed):
    theta = as_direction(theta)
    mu = _measure(domain, theta, mu, n_samples, seed)
    tb = trace_field(u, mu)
    l2, d2, verr = theta_norms(mu, [u])
    return theta, mu, tb.values[0], tb.partner_values[0], tb.chord, float(l2[0] + d2[0]), tb


def _mc_se(mu, contrib):
    n = mu.n_samples
    y = contrib * n
    mean = y.sum() / n
    return math.sqrt(max((y**2).sum() / n - mean**2, 0.0) / n)


def _bound_budget(mu, contrib):
    return 3 * _mc_se(mu, contrib) if mu.mode == "mc" else 0.0


def check_trace_bound(domain, u, theta, mu=None, *, n_samples=200_000, seed=0) -> VerificationReport:
    theta, mu, a, b, ell, norm2, _ = _bound_data(domain, u, theta, mu, n_samples, seed)
    c = mu.nodes.mass * a**2
    rhs = 2 * max(1.0, domain.diameter**2) * norm2
    return _bound_report("trace_bound", domain, u, theta, c.sum(), rhs, _bound_budget(mu, c), mu)


def check_sum_bound(domain, u, theta, mu=None, *, constant: float = SUM_CONSTANT, n_samples=200_000,
                    seed=0) -> VerificationReport:
    """``int (a + b)^2 dmu <= constant * max(1, diam^2) * ||u||^2``.

    The default constant 4 is not valid in general: on a square of side 1/2
    ``u = 1 + (x1 - 1/4)^2 / 10`` violates it along ``(1, 0)``.  The constant 8
    follows from ``(a + b)^2 <= 2 (a^2 + b^2)`` and the trace bound.
    """
    theta, mu, a, b, ell, norm2, _ = _bound_data(domain, u, theta, mu, n_samples, seed)
    c = mu.nodes.mass * (a + b) ** 2
    rhs = constant * max(1.0, domain.diameter**2) * norm2
    rep = _bound_report("sum_bound", domain, u, theta, c.sum(), rhs, _bound_budget(mu, c), mu)
    rep.details["constant"] = constant
    return rep


def check_diff_bound(domain, u, theta, mu=None, *, n_samples=200_000, seed=0) -> VerificationReport:
    theta, mu, a, b, ell, norm2, _ = _bound_data(domain, u, theta, mu, n_samples, seed)
    c = mu.nodes.mass * ((a - b) / ell) ** 2
    return _bound_report("diff_bound", domain, u, theta, c.sum(), norm2, _bound_budget(mu, c), mu)


def check_poincare(domain, u, theta, mu=None, *, trace_tol: float = 1e-8, n_samples=200_000,
                   seed=0) -> VerificationReport:
    """``||u|| <= diam ||d_theta u||`` for a field whose trace along ``theta`` vanishes."""
    theta = as_direction(theta)
    mu = _measure(domain, theta, mu, n_samples, seed)
    tb = trace_field(u, mu)
    worst = float(np.max(np.abs(tb.values[0])))
    if worst > trace_tol:
        raise HypothesisViolated(f"trace reaches {worst:.3e} > {trace_tol:.1e}")
    l2, d2, _ = theta_norms(mu, [u])
    lhs = math.sqrt(max(l2[0], 0.0))
    rhs = domain.diameter * math.sqrt(max(d2[0], 0.0))
    budget = 0.0
    if mu.mode == "mc":
        X = mu.nodes.base
        budget = 3 * _mc_se(mu, mu.nodes.mass * u(X) ** 2) / max(2 * lhs, 1e-300)
    rep = _bound_report("poincare", domain, u, theta, lhs, rhs, budget, mu)
    rep.details["max_trace"] = worst
    return rep


# ------------------------------------------------------------- consistency


@dataclass
class ConsistencyReport:
    verdict: str
    max_spread: float
    tolerance: float
    directions: list
    clusters: list
    witnesses: list
    domain_id: str = ""
    field_id: str = ""

    def to_report(self) -> VerificationReport:
        return VerificationReport.build(
            "consistency", self.domain_id, self.field_id, None, self.max_spread, 0.0, self.max_spread,
            self.tolerance, 0.0, None,
            {"verdict": self.verdict, "clusters": len(self.clusters), "witnesses": self.witnesses[:50]},
        ) if self.verdict != "no-shared-support" else VerificationReport(
            "consistency", self.domain_id, self.field_id, None, 0.0, 0.0, 0.0, self.tolerance, True, 0.0, None,
            {"verdict": self.verdict},
        )


def check_consistency(domain: Domain, u: ScalarField, directions, mus=None, tol: float = 1e-8, *,
                      probes=None, radius: float | None = None, strict: bool = False, n_samples: int = 20_000,
                      seed: int = 0) -> ConsistencyReport:
    """Compare traces of ``u`` along different directions where their supports meet.

    Candidate points are the nodes of every direction's measure plus optional
    ``probes``.  A candidate belongs to the support of a direction when an
    interior anchor ``z - t theta`` exits exactly at it.  Candidates reached
    by two or more directions form clusters; the spread of the trace values
    over a cluster is the reported quantity.
    """
    dirs = [as_direction(t) for t in directions]
    if len(dirs) < 2:
        raise ValueError("need at least two directions")
    if mus is None:
        mus = [build_measure(domain, t, n_samples=n_samples, seed=seed, job=f"consistency-{i}")
               for i, t in enumerate(dirs)]
    radius = 1e-9 * domain.diameter if radius is None else radius
    cand = [mu.exit_points for mu in mus]
    if probes is not None:
        cand.append(np.asarray(probes, dtype=float).reshape(-1, domain.dim))
    P = np.concatenate(cand)
    key = np.round(P / radius).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    P = P[np.sort(first)]
    values = np.full((len(dirs), len(P)), np.nan)
    for i, t in enumerate(dirs):
        X, dp, dm, ok = anchor_points(domain, t, P, np.full(len(P), domain.diameter))
        if ok.any():
            a, _, _ = fiber_traces([u], t, X[ok], -dm[ok], dp[ok])
            values[i, ok] = a[0]
    shared = np.sum(~np.isnan(values), axis=0) >= 2
    clusters, witnesses = [], []
    max_spread = 0.0
    for j in np.nonzero(shared)[0]:
        col = values[:, j]
        have = ~np.isnan(col)
        spread = float(col[have].max() - col[have].min())
        entry = {
            "point": P[j].tolist(),
            "values": {json.dumps(_theta_list(dirs[i])): float(col[i]) for i in np.nonzero(have)[0]},
            "spread": spread,
        }
        clusters.append(entry)
        if spread > tol:
            witnesses.append(entry)
        max_spread = max(max_spread, spread)
    if not clusters:
        if strict:
            raise NoSharedSupport("the supports of the given directions do not meet")
        verdict = "no-shared-support"
    else:
        verdict = "consistent" if max_spread <= tol else "inconsistent"
    return ConsistencyReport(verdict, max_spread, tol, [_theta_list(t) for t in dirs], clusters, witnesses,
                             _domain_id(domain), u.label)


# ------------------------------------------------------------- 1-D lemma


def _random_1d_function(rng):
    if rng.random() < 0.6:
        c = rng.normal(size=rng.integers(1, 7))
        p = np.polynomial.Polynomial(c)
        dp = p.deriv()
        return p, dp, f"poly{len(c) - 1}"
    amp, om, ph, off = rng.normal(), rng.uniform(0.5, 6), rng.uniform(0, 2 * np.pi), rng.normal()
    return (lambda t: amp * np.sin(om * t + ph) + off), (lambda t: amp * om * np.cos(om * t + ph)), "trig"


def check_1d_lemma(n_random: int = 200, seed: int = 0, *, sum_constant: float = SUM_CONSTANT) -> VerificationReport:
    """Endpoint identity and the four one-dimensional inequalities on random data.

    ``lhs`` is the worst endpoint-identity error, ``rhs`` the smallest relative
    slack over the inequalities.  The residual is the larger of the identity
    error and the worst relative violation.
    """
    rng = rng_for(seed, "1d-lemma")
    worst_id = 0.0
    slacks = {"max": np.inf, "sum": np.inf, "diff": np.inf, "poincare": np.inf}
    for _ in range(n_random):
        f, df, _ = _random_1d_function(rng)
        alpha = rng.uniform(-2, 2)
        ell = rng.uniform(0.05, 3.0)
        beta = alpha + ell
        ev = trace_1d(f, df, alpha, beta)
        fb, fa = float(f(beta)), float(f(alpha))
        worst_id = max(worst_id, abs(ev.at_beta - fb) / (1 + abs(fb)), abs(ev.at_alpha - fa) / (1 + abs(fa)))
        n2 = integrate(lambda t: f(t) ** 2 + df(t) ** 2, alpha, beta, rtol=1e-13)[0]
        c = max(1.0, ell**2)
        b, a = ev.at_beta, ev.at_alpha

        def rel(lhs, rhs):
            return (rhs - lhs) / rhs if rhs > 0 else -lhs

        slacks["max"] = min(slacks["max"], rel(max(a * a, b * b), n2 * 2 * c / ell))
        slacks["sum"] = min(slacks["sum"], rel((a + b) ** 2, n2 * sum_constant * c / ell))
        slacks["diff"] = min(slacks["diff"], rel(((b - a) / ell) ** 2, n2 / ell))
        g2 = integrate(lambda t: (f(t) - b) ** 2, alpha, beta, rtol=1e-13)[0]
        dg2 = integrate(lambda t: df(t) ** 2, alpha, beta, rtol=1e-13)[0]
        slacks["poincare"] = min(slacks["poincare"], rel(math.sqrt(g2), ell * math.sqrt(dg2)) if dg2 > 0 else 0.0)
    min_slack = float(min(slacks.values()))
    residual = max(worst_id, -min_slack)
    return VerificationReport.build("1d_lemma", "interval", "random", None, worst_id, min_slack, residual, 1e-10,
                                    0.0, seed, {k: float(v) for k, v in slacks.items()} | {"n": n_random, "sum_constant": sum_constant})


# ------------------------------------------------------------ partitions


def check_sufficiency_partition(domain: Domain, subdomains: Sequence[Domain], directions, *,
                                n_samples: int = 20_000, seed: int = 0, eps: float | None = None,
                                tol: float | None = None, probe_directions: int = 16) -> VerificationReport:
    """Probe the hypotheses of the partition lemma by sampling.

    (a) exits of the domain that no subdomain reaches along ``theta``;
    (b) exits reachable, within ``eps``, from two different subdomains.
    Both masses must stay below ``tol``.  Raises :class:`BadPartition` when a
    sample lies in two subdomains or in a subdomain but not the domain.
    """
    rng = rng_for(seed, "partition")
    lo, hi = domain.bbox
    X = lo + (hi - lo) * rng.random((n_samples, domain.dim))
    member = np.stack([s.contains(X) for s in subdomains], axis=1)
    if np.any(member.sum(1) > 1):
        raise BadPartition("subdomains overlap")
    if np.any(member.any(1) & ~domain.contains(X)):
        raise BadPartition("a subdomain leaves the domain")
    eps = 1e-6 * domain.diameter if eps is None else eps
    tol = 1e-3 * domain.volume_bbox if tol is None else tol
    t_back = 1e-7 * domain.diameter
    ang = 2 * np.pi * (np.arange(probe_directions) + 0.5) / probe_directions
    uncovered_worst = shared_worst = 0.0
    budget = 0.0
    per_dir = []
    for k, theta in enumerate(directions):
        theta = as_direction(theta)
        mu = mu_monte_carlo(domain, theta, n_samples, seed, job=f"partition-{k}")
        Z = mu.exit_points
        back = Z - t_back * theta.vector
        covered = np.zeros(len(Z), dtype=bool)
        if domain.dim == 2:
            dirs = np.concatenate([theta.vector[None], np.c_[np.cos(ang), np.sin(ang)]])
        else:
            dirs = np.array([[1.0], [-1.0]])
        reach = np.zeros(len(Z), dtype=int)
        for s in subdomains:
            covered |= s.contains(back)
            near = np.zeros(len(Z), dtype=bool)
            for dvec in dirs:
                near |= s.contains(Z - eps * dvec)
            reach += near
        w = mu.nodes.mass
        unc = float(w[~covered].sum())
        sh = float(w[reach >= 2].sum())
        per_dir.append({"theta": _theta_list(theta), "uncovered": unc, "shared": sh})
        uncovered_worst = max(uncovered_worst, unc)
        shared_worst = max(shared_worst, sh)
        budget = max(budget, 3 * _mc_se(mu, w * (~covered)), 3 * _mc_se(mu, w * (reach >= 2)))
    worst = max(uncovered_worst, shared_worst)
    return VerificationReport.build(
        "partition", _domain_id(domain), f"{len(subdomains)} subdomains", None, worst, tol, worst, tol, 0.0,
        seed, {"uncovered": uncovered_worst, "shared": shared_worst, "eps": eps, "directions": per_dir,
               "mc_3se": budget},
    )


# ------------------------------------------------------------------- jobs


def run_jobs(jobs: Sequence[tuple[str, Callable[[], object]]], workers: int = 1) -> list[tuple[str, object]]:
    """Run ``(job_id, thunk)`` pairs, returning results sorted by job id."""
    if workers <= 1:
        results = [(jid, fn()) for jid, fn in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [(jid, pool.submit(fn)) for jid, fn in jobs]
            results = [(jid, f.result()) for jid, f in futs]
    return sorted(results, key=lambda r: r[0])


def sample_fields(rng: np.random.Generator, n: int, degree: int = 3) -> list[ScalarField]:
    """Random planar polynomials with normal coefficients."""
    out = []
    for i in range(n):
        C = np.zeros((degree + 1, degree + 1))
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                C[a, b] = rng.normal()
        out.append(polynomial(C, label=f"poly#{i}"))
    return out
