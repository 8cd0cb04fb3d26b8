"""Command-line front end: ``dirtrace {gallery,measure,trace,verify}``.

Direction grammar
-----------------
``--theta`` takes one direction, ``--thetas`` a list:

* ``30deg``          an angle in degrees (planar domains),
* ``+1`` / ``-1``    the two directions on the line,
* ``0.6,0.8``        raw components in any dimension, normalized internally,
* ``0,45,90deg``     several angles sharing one ``deg`` suffix,
* ``1,0;0,1``        several component vectors separated by ``;``.

``--domain`` is a gallery name or a JSON file written by ``gallery --emit``
(or holding a bare domain spec).  ``--field`` is an expression in
``x1, x2`` such as ``"sin(pi*x1)"``, or ``@name`` for a gallery field.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 i/o error.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import gallery
from .fields import ScalarField, constant, from_expression
from .geometry import Direction, Domain, GeometryError, as_direction, domain_from_spec
from .measure import build_measure, densities_json, to_csv
from .trace import AnchorFailure, trace_at, trace_field
from .verify import (
    SUM_CONSTANT,
    HypothesisViolated,
    VerificationReport,
    check_1d_lemma,
    check_consistency,
    check_diff_bound,
    check_green,
    check_poincare,
    check_sufficiency_partition,
    check_sum_bound,
    check_trace_bound,
    run_jobs,
)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
SUITES = ("green", "bounds", "consistency", "lemma", "partition", "gallery")


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ thetas


def _vector(text: str) -> tuple[float, ...]:
    try:
        comps = tuple(float(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad direction {text!r}") from None
    if not all(math.isfinite(c) for c in comps) or not any(comps):
        raise argparse.ArgumentTypeError(f"direction {text!r} must be finite and non-zero")
    return comps


def parse_theta(text: str) -> tuple[float, ...]:
    text = text.strip()
    if text.endswith("deg"):
        try:
            return tuple(float(c) for c in Direction.from_degrees(float(text[:-3])).vector)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad angle {text!r}") from None
    return _vector(text)


def parse_thetas(text: str) -> tuple[tuple[float, ...], ...]:
    text = text.strip()
    if ";" in text:
        return tuple(_vector(t) for t in text.split(";") if t.strip())
    if text.endswith("deg"):
        return tuple(parse_theta(a + "deg") for a in text[:-3].split(","))
    return (parse_theta(text),)


def format_thetas(thetas) -> str:
    return ";".join(",".join(repr(float(c)) for c in t) for t in thetas)


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class RunConfig:
    command: str
    name: str | None = None
    domain: str | None = None
    fields: tuple[str, ...] = ()
    thetas: tuple[tuple[float, ...], ...] = ()
    suite: str | None = None
    mode: str = "auto"
    samples: int = 200_000
    seed: int = 0
    tol: float | None = None
    sum_constant: float = SUM_CONSTANT
    n_random: int = 200
    points: str | None = None
    rho: float | None = None
    depth: int | None = None
    alpha: float | None = None
    k_max: int | None = None
    n_sides: int | None = None
    workers: int = 1
    out: str | None = None
    emit: str | None = None
    report: str | None = None
    densities: str | None = None

    def to_argv(self) -> list[str]:
        argv = [self.command]
        if self.command == "gallery":
            argv.append(self.name)
        defaults = RunConfig(self.command)
        for f in fields(self):
            if f.name in ("command", "name"):
                continue
            val = getattr(self, f.name)
            if val == getattr(defaults, f.name):
                continue
            flag = "--" + f.name.replace("_", "-")
            if f.name == "fields":
                for expr in val:
                    argv += ["--field", expr]
            elif f.name == "thetas":
                # joined form, so a leading minus is not read as an option
                argv.append("--thetas=" + format_thetas(val))
            else:
                argv.append(f"{flag}={repr(val) if isinstance(val, float) else val}")
        return argv

    def to_dict(self) -> dict:
        d = asdict(self)
        d["thetas"] = [list(t) for t in self.thetas]
        d["fields"] = list(self.fields)
        return d

    def gallery_params(self) -> dict:
        return {k: getattr(self, k) for k in ("rho", "depth", "alpha", "k_max", "n_sides")
                if getattr(self, k) is not None}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dirtrace", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    gal = argparse.ArgumentParser(add_help=False)
    gal.add_argument("--rho", type=float)
    gal.add_argument("--depth", type=int)
    gal.add_argument("--alpha", type=float)
    gal.add_argument("--k-max", type=int)
    gal.add_argument("--n-sides", type=int)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--domain", required=True, help="gallery name or JSON spec path")
    common.add_argument("--field", dest="fields", action="append", default=[],
                        help="expression in x1, x2 or @name of a gallery field (repeatable)")
    common.add_argument("--theta", dest="theta_one", action="append", type=parse_theta, default=[],
                        help="one direction (repeatable)")
    common.add_argument("--thetas", type=parse_thetas, help="several directions")
    common.add_argument("--mode", choices=("auto", "exact", "mc"), default="auto")
    common.add_argument("--samples", type=int, default=200_000, help="Monte Carlo sample count")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)

    g = sub.add_parser("gallery", parents=[gal], help="build a gallery entry, optionally export it")
    g.add_argument("name", choices=sorted(gallery.BUILDERS))
    g.add_argument("--emit", help="write domain and field spec JSON here")

    m = sub.add_parser("measure", parents=[common, gal], help="boundary measure node table")
    m.add_argument("--out", help="CSV output path (stdout if omitted)")
    m.add_argument("--densities", help="per-piece density JSON output path")

    t = sub.add_parser("trace", parents=[common, gal], help="directional traces")
    t.add_argument("--points", help="interior points 'x1,x2;x1,x2'; all measure nodes if omitted")
    t.add_argument("--out", help="CSV output path (stdout if omitted)")

    v = sub.add_parser("verify", parents=[common, gal], help="run a verification suite")
    v.add_argument("--suite", choices=SUITES, required=True)
    v.add_argument("--tol", type=float)
    v.add_argument("--sum-constant", type=float, default=SUM_CONSTANT)
    v.add_argument("--n-random", type=int, default=200)
    v.add_argument("--report", help="JSON report path")
    return p


def parse_config(argv) -> RunConfig:
    ns = _parser().parse_args(list(argv))
    d = vars(ns)
    thetas = tuple(d.pop("theta_one", []) or ()) + tuple(d.pop("thetas", None) or ())
    d["thetas"] = thetas
    d["fields"] = tuple(d.get("fields") or ())
    names = {f.name for f in fields(RunConfig)}
    return RunConfig(**{k: v for k, v in d.items() if k in names})


# ------------------------------------------------------------- resolution


def load_target(cfg: RunConfig) -> tuple[Domain, gallery.GalleryEntry | None]:
    ref = cfg.domain
    if ref in gallery.BUILDERS:
        entry = _build_entry(ref, cfg.gallery_params())
        return entry.domain, entry
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"{ref!r} is neither a gallery name nor a file")
    spec = json.loads(path.read_text())
    if "gallery" in spec:
        entry = _build_entry(spec["gallery"]["name"], spec["gallery"].get("params", {}))
        return entry.domain, entry
    return domain_from_spec(spec.get("domain", spec)), None


def _build_entry(name: str, params: dict) -> gallery.GalleryEntry:
    fn = gallery.BUILDERS[name]
    accepted = inspect.signature(fn).parameters
    unknown = sorted(set(params) - set(accepted))
    if unknown:
        raise UsageError(f"gallery entry {name!r} takes no parameter(s) {unknown}")
    return fn(**params)


def resolve_field(expr: str, domain: Domain, entry) -> ScalarField:
    if expr.startswith("@"):
        if entry is None or expr[1:] not in entry.fields:
            known = sorted(entry.fields) if entry else []
            raise UsageError(f"unknown field {expr!r}; available: {known}")
        return entry.fields[expr[1:]]
    return from_expression(expr, dim=domain.dim)


def _directions(cfg: RunConfig, domain: Domain, need: int = 1) -> list[Direction]:
    if len(cfg.thetas) < need:
        raise UsageError(f"need at least {need} direction(s)")
    out = []
    for t in cfg.thetas:
        if len(t) != domain.dim:
            raise UsageError(f"direction {t} does not match the domain dimension {domain.dim}")
        out.append(as_direction(t))
    return out


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- commands


def cmd_gallery(cfg: RunConfig) -> int:
    entry = _build_entry(cfg.name, cfg.gallery_params())
    try:
        dom_spec = entry.domain.to_spec()
    except GeometryError:
        dom_spec = {"kind": entry.domain.kind}
    spec = {
        "gallery": {"name": cfg.name, "params": cfg.gallery_params()},
        "domain": dom_spec,
        "fields": sorted(entry.fields),
        "expected": [{"quantity": e.quantity, "value": e.value, "origin": e.origin,
                      "tolerance": e.tolerance} for e in entry.expected],
    }
    if cfg.emit:
        Path(cfg.emit).write_text(json.dumps(spec, sort_keys=True, indent=1) + "\n")
    print(f"OK gallery {entry.name} domain={entry.domain!r} fields={sorted(entry.fields)} "
          f"expected={len(entry.expected)}" + (f" -> {cfg.emit}" if cfg.emit else ""),
          file=sys.stderr if cfg.emit is None else sys.stdout)
    if cfg.emit is None:
        sys.stdout.write(json.dumps(spec, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def cmd_measure(cfg: RunConfig) -> int:
    domain, _ = load_target(cfg)
    dirs = _directions(cfg, domain)
    if len(dirs) != 1:
        raise UsageError("measure takes exactly one direction")
    theta = dirs[0]
    mu = build_measure(domain, theta, cfg.mode, cfg.samples, cfg.seed)
    _write(cfg.out, to_csv(mu))
    if cfg.densities:
        Path(cfg.densities).write_text(densities_json(mu) + "\n")
    if cfg.out is not None:
        print(f"OK measure mode={mu.mode} theta={[float(c) for c in theta.vector]} nodes={len(mu.weights)} "
              f"total_mass={mu.total_mass!r} mass_error={mu.mass_error:.3e} -> {cfg.out}")
    return EXIT_OK


def _trace_rows(domain, theta, fld, cfg):
    if cfg.points:
        pts = [tuple(float(c) for c in p.split(",")) for p in cfg.points.split(";") if p.strip()]
        rows = []
        for x in pts:
            s = trace_at(fld, domain, theta, x)
            rows.append((s.z, s.value, s.partner, s.partner_value, s.chord, s.quadrature_error))
        return rows
    mu = build_measure(domain, theta, cfg.mode, cfg.samples, cfg.seed)
    tb = trace_field(fld, mu)
    return [(tb.z[i], tb.values[0, i], tb.partner[i], tb.partner_values[0, i], tb.chord[i], tb.error[i])
            for i in range(len(tb.chord))]


def cmd_trace(cfg: RunConfig) -> int:
    domain, entry = load_target(cfg)
    thetas = _directions(cfg, domain)
    if len(cfg.fields) != 1:
        raise UsageError("trace needs exactly one --field")
    fld = resolve_field(cfg.fields[0], domain, entry)
    d = domain.dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta"] + [f"z{i + 1}" for i in range(d)] + ["trace"] + [f"p{i + 1}" for i in range(d)]
               + ["partner_trace", "chord", "error"])
    n = 0
    for theta in thetas:
        tag = ",".join(_fmt(c) for c in theta.vector)
        for z, val, p, pv, ell, err in _trace_rows(domain, theta, fld, cfg):
            w.writerow([tag] + [_fmt(c) for c in z] + [_fmt(val)] + [_fmt(c) for c in p]
                       + [_fmt(pv), _fmt(ell), _fmt(err)])
            n += 1
    _write(cfg.out, buf.getvalue())
    if cfg.out is not None:
        print(f"OK trace field={cfg.fields[0]} rows={n} -> {cfg.out}")
    return EXIT_OK


def _verify_jobs(cfg: RunConfig, domain: Domain, entry) -> list:
    suite = cfg.suite
    seed, ns = cfg.seed, cfg.samples
    if suite == "lemma":
        return [("lemma", lambda: [check_1d_lemma(cfg.n_random, seed, sum_constant=cfg.sum_constant)])]
    if suite == "gallery":
        if entry is None:
            raise UsageError("the gallery suite needs a gallery domain")
        return [("gallery", lambda: [_golden_report(entry, e, got, ok) for e, got, ok in entry.check()])]
    if suite == "partition":
        if entry is None or not entry.subdomains:
            raise UsageError("the partition suite needs a gallery domain with subdomains")
        dirs = _directions(cfg, domain)
        return [("partition", lambda: [check_sufficiency_partition(domain, entry.subdomains, dirs, seed=seed)])]

    flds = [resolve_field(f, domain, entry) for f in cfg.fields]
    if not flds:
        raise UsageError(f"the {suite} suite needs at least one --field")
    if suite == "consistency":
        dirs = _directions(cfg, domain, need=2)
        tol = 1e-8 if cfg.tol is None else cfg.tol
        return [(f"consistency/{i:03d}", lambda u=u: [check_consistency(domain, u, dirs, tol=tol, seed=seed,
                                                                          n_samples=min(ns, 20_000)).to_report()])
                for i, u in enumerate(flds)]
    dirs = _directions(cfg, domain)
    jobs = []
    for j, theta in enumerate(dirs):
        def measure(theta=theta, j=j):
            return build_measure(domain, theta, cfg.mode, ns, seed, job=f"verify-{j}")

        if suite == "green":
            u = flds[0]
            partners = flds[1:] or [constant(1.0)]
            jobs.append((f"green/{j:03d}", lambda u=u, partners=partners, theta=theta, measure=measure: [
                check_green(domain, u, v, theta, measure(), tol=cfg.tol) for v in partners]))
        elif suite == "bounds":
            def run(theta=theta, measure=measure):
                mu = measure()
                out = []
                for u in flds:
                    out.append(check_trace_bound(domain, u, theta, mu))
                    out.append(check_sum_bound(domain, u, theta, mu, constant=cfg.sum_constant))
                    out.append(check_diff_bound(domain, u, theta, mu))
                    try:
                        out.append(check_poincare(domain, u, theta, mu))
                    except HypothesisViolated as exc:
                        out.append(VerificationReport("poincare", domain.name or domain.kind, u.label,
                                                      [float(c) for c in theta.vector], 0.0, 0.0, 0.0, 0.0, True,
                                                      0.0, seed, {"skipped": str(exc)}))
                return out
            jobs.append((f"bounds/{j:03d}", run))
    return jobs


def _golden_report(entry, e, got, ok) -> VerificationReport:
    return VerificationReport(f"golden:{e.quantity}", entry.name, ",".join(sorted(entry.fields)), None,
                              float(got), float(e.value), abs(float(got) - e.value), e.tolerance, bool(ok), 0.0,
                              None, {"origin": e.origin})


def cmd_verify(cfg: RunConfig) -> int:
    domain, entry = load_target(cfg)
    jobs = _verify_jobs(cfg, domain, entry)
    reports = [r for _, batch in run_jobs(jobs, cfg.workers) for r in batch]
    for r in reports:
        line = r.summary()
        if "skipped" in r.details:
            line = f"SKIP {r.check_name} theta={r.theta}: {r.details['skipped']}"
        print(line)
    if cfg.report:
        doc = {"config": cfg.to_dict(), "reports": [r.to_dict() for r in reports],
               "passed": all(r.passed for r in reports)}
        Path(cfg.report).write_text(json.dumps(doc, sort_keys=True, indent=1, default=_json_default) + "\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


COMMANDS = {"gallery": cmd_gallery, "measure": cmd_measure, "trace": cmd_trace, "verify": cmd_verify}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[cfg.command](cfg)
    except AnchorFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (UsageError, GeometryError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())
