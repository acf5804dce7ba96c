"""Command-line interface: ``specq <subcommand> [options]``.

Every command that writes files also writes a manifest next to its main
output (``<output>.manifest.json``, or the ``--manifest`` path) holding the
package version, the full configuration, its SHA-256 hash and the seed.
Commands without file outputs print the configuration hash instead unless
``--manifest`` is given.  Outputs contain no timestamps, so a rerun with
the same manifest reproduces them bit for bit; ``specq --replay
MANIFEST`` reruns the recorded command line.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Malformed input file or flag value; the message carries the location."""


# ---------------------------------------------------------------------------
# helpers


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("SPECQ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"SPECQ_THREADS: expected an integer, got {env!r}") from exc
    return 1


def _config(args) -> dict:
    skip = {"func", "manifest", "replay", "argv"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    cfg["config_version"] = CONFIG_VERSION
    return json.loads(json.dumps(cfg, default=str))


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(args, primary: str | None) -> None:
    cfg = _config(args)
    digest = _config_hash(cfg)
    target = args.manifest or (f"{primary}.manifest.json" if primary else None)
    if target is None:
        print(f"config_hash {digest}")
        return
    manifest = {
        "tool": "specq",
        "version": __version__,
        "command": args.command,
        "config": cfg,
        "config_hash": digest,
        "seed": getattr(args, "seed", 0),
        "threads": _threads(args),
        "argv": getattr(args, "argv", None),
    }
    _dump_json(manifest, target)


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _read_json(path, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read {what}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _parse_json_flag(text: str, flag: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{flag}: column {exc.colno}: {exc.msg}") from exc


def _float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc


def _check_embedding(args, Q: int = 2, n: int = 1) -> None:
    from .embedret import UnsupportedEmbedding, get_embedding

    try:
        get_embedding(Q, n, args.embedding)
    except (KeyError, UnsupportedEmbedding) as exc:
        raise ConfigError(f"--embedding: {exc}") from exc


# ---------------------------------------------------------------------------
# boundary configuration


def load_boundary(path, h=None):
    """Build the initial field for ``minimize`` from a JSON file.

    Accepts either a saved field (``"format": "specq-field"``) or a boundary
    config::

        {"format": "specq-boundary", "version": 1,
         "domain": {"kind": "disk", "radius": 1.0, "center": [0, 0]},
         "data": {"type": "example1", "rule": "quadrant"}}

    with ``data.type`` one of ``example1`` (``rule``), ``linear`` (``a``,
    ``b``, ``Q``), ``constant`` (``atoms``, ``sign``) or ``sheets``
    (``spec``: a sheet specification, see :class:`specq.graphs.SheetSpec`).
    """
    from .fields import GridDomain, GridField, example1_field, linear_field, parse_h
    from .graphs import SheetSpec, SheetSpecError

    data = _read_json(path, "boundary file")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    fmt = data.get("format")
    if fmt == "specq-field":
        try:
            u = GridField.from_json(data)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if h is not None and not math.isclose(parse_h(h), u.domain.h, rel_tol=1e-12):
            raise ConfigError(f"{path}: field has h = {u.domain.h}, but --h {h} was requested")
        return u
    if fmt != "specq-boundary":
        raise ConfigError(f"{path}: 'format' must be 'specq-boundary' or 'specq-field'")
    if data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"{path}: unsupported config version {data.get('version')!r}")
    dspec = data.get("domain", {})
    if not isinstance(dspec, dict):
        raise ConfigError(f"{path}: 'domain' must be an object")
    if h is None:
        if "h" not in data:
            raise ConfigError(f"{path}: no grid spacing; pass --h or set 'h'")
        h = data["h"]
    try:
        dom = GridDomain(
            dspec.get("kind", "disk"),
            parse_h(h),
            int(dspec.get("m", 2)),
            float(dspec.get("radius", 1.0)),
            tuple(dspec["center"]) if "center" in dspec else None,
        )
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(f"{path}: domain: {exc}") from exc
    src = data.get("data")
    if not isinstance(src, dict) or "type" not in src:
        raise ConfigError(f"{path}: 'data' must be an object with a 'type'")
    kind = src["type"]
    try:
        if kind == "example1":
            return example1_field(dom, src.get("rule", "diagonal"))
        if kind == "linear":
            return linear_field(dom, src["a"], int(src.get("Q", 2)), float(src.get("b", 0.0)))
        if kind == "constant":
            atoms = np.asarray(src["atoms"], dtype=float)
            if atoms.ndim == 1:
                atoms = atoms[:, None]
            full = np.broadcast_to(atoms, dom.shape + atoms.shape).copy()
            return GridField(dom, full, int(src.get("sign", 1)))
        if kind == "sheets":
            spec = SheetSpec.from_json(src["spec"])
            pts = dom.coords().reshape(-1, dom.m)
            vals, _, lab = spec.evaluate(pts)
            atoms = vals.reshape(dom.shape + (spec.Q, spec.n))
            return GridField(dom, atoms, lab.reshape(dom.shape))
    except KeyError as exc:
        raise ConfigError(f"{path}: data: missing key {exc}") from exc
    except (SheetSpecError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: data: {exc}") from exc
    raise ConfigError(f"{path}: data.type {kind!r} is not one of example1, linear, constant, sheets")


def _load_spec(args):
    from .graphs import SheetSpec, SheetSpecError, example1_spec

    if args.spec:
        try:
            spec = SheetSpec.from_json(_read_json(args.spec, "sheet spec"))
        except SheetSpecError as exc:
            raise ConfigError(f"{args.spec}: {exc}") from exc
    else:
        spec = example1_spec(args.rule)
    return spec.scaled(args.scale) if args.scale != 1.0 else spec


def _graph_domain(args):
    from .graphs import Disk, Rect

    if args.domain == "disk":
        return Disk(args.radius)
    return Rect(0.0, args.radius, 0.0, args.radius)


# ---------------------------------------------------------------------------
# commands


def cmd_metric(args) -> int:
    from .qpoints import QPoint, metric_G
    from .specpoints import SpecPoint, metric_Gs

    try:
        A = QPoint(_parse_json_flag(args.a, "--a"))
        B = QPoint(_parse_json_flag(args.b, "--b"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"G = {metric_G(A, B, args.method):.12g}")
    if args.sign_a is not None or args.sign_b is not None:
        P = SpecPoint(A, args.sign_a or 1)
        R = SpecPoint(B, args.sign_b or 1)
        print(f"Gs = {metric_Gs(P, R):.12g}")
    _write_manifest(args, None)
    return 0


def cmd_minimize(args) -> int:
    from .fields import regions, save_field
    from .minimize import BumpScalarField, BumpVectorField, solve_dirichlet, solve_two_sheet, variation_residuals
    from .specpoints import RegionLabel

    _check_embedding(args)
    u0 = load_boundary(args.boundary, args.h)
    if args.strategy == "embedded":
        u, rep = solve_dirichlet(u0, tol=args.tol, max_iters=args.max_iters, seed=args.seed, init=args.init)
    else:
        u, rep = solve_two_sheet(u0, seed=args.seed, init=args.init)
    save_field(u, args.out)
    labels, interface = regions(u)
    report = {"solve": rep.to_json()}
    report["regions"] = {
        "positive": int(np.sum(labels == RegionLabel.Positive)),
        "negative": int(np.sum(labels == RegionLabel.Negative)),
        "collapsed": int(np.sum(labels == RegionLabel.Collapsed)),
        "interface": int(np.sum(interface)),
    }
    dom = u.domain
    if dom.m == 2:
        c = np.asarray(dom.center)
        rad = 0.5 * dom.dist_to_boundary(c)
        try:
            inner, outer = variation_residuals(u, BumpVectorField(c, rad), BumpScalarField(c, rad))
            report["residuals"] = {"inner": inner, "outer": outer, "center": c.tolist(), "radius": rad}
        except ValueError as exc:
            report["residuals"] = {"error": str(exc)}
    target = args.report or f"{args.out}.report.json"
    _dump_json(report, target)
    print(f"energy {rep.energy:.12g} (initial {rep.initial_energy:.12g}), sweeps {rep.sweeps}, converged {rep.converged}")
    _write_manifest(args, args.out)
    return 0


def cmd_frequency(args) -> int:
    from .fields import load_field
    from .frequency import frequency_profiles

    try:
        u = load_field(args.field)
    except OSError as exc:
        raise ConfigError(f"{args.field}: cannot read field: {exc.strerror}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    center = _float_list(args.center, "--center")
    radii = None
    if args.radii:
        lo, hi, k = _float_list(args.radii, "--radii")
        radii = np.geomspace(lo, hi, int(k))
    (prof,) = frequency_profiles(u, [center], radii, threads=_threads(args))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "D", "H", "I"])
        for r, d, hh, i in prof.rows():
            w.writerow([f"{r:.12g}", f"{d:.12g}", f"{hh:.12g}", "" if not math.isfinite(i) else f"{i:.12g}"])
    if prof.flagged:
        print(f"warning: H vanishes at {len(prof.flagged)} radii", file=sys.stderr)
    print(f"wrote {len(prof.radii)} radii to {args.out}")
    _write_manifest(args, args.out)
    return 0


def cmd_graphs(args) -> int:
    from . import graphs as G

    spec = _load_spec(args)
    dom = _graph_domain(args)
    eps = _float_list(args.eps, "--eps")
    if args.action == "mass":
        out = {"mass": G.graph_mass(spec, dom, args.order, args.panels), "Q_area": spec.Q * dom.area}
    elif args.action == "taylor":
        rep = G.taylor_mass_check(spec, eps, dom, args.order, args.panels)
        out = {"eps": rep.eps, "remainder": rep.remainder, "slope": rep.slope, "constant": rep.bound_constant}
    elif args.action == "excess":
        rem, slope = G.excess_scaling_check(spec, eps, args.radius, args.order, args.panels)
        base = G.cylindrical_excess(spec, args.radius, order=args.order, panels=args.panels)
        out = {"lhs": base.lhs, "rhs": base.rhs, "L": base.L, "eps": eps, "remainder": rem, "slope": slope}
    elif args.action == "variation":
        c = _float_list(args.center, "--center")
        zeta = G.VerticalField(tuple(c), args.support, args.c0, args.c1)
        res, slope = G.variation_scaling_check(spec, zeta, eps, dom, order=args.order, panels=args.panels)
        out = {
            "eps": eps,
            "numeric": [r.numeric for r in res],
            "formula": [r.formula for r in res],
            "error": [r.error for r in res],
            "constant": [r.constant for r in res],
            "slope": slope,
        }
    else:
        try:
            rep = G.reparametrize_tilted(spec, args.theta, args.s, args.h)
        except G.ReparametrizationError as exc:
            print(f"specq graphs reparam: {exc} (node {exc.node})", file=sys.stderr)
            return 1
        out = {
            "theta": args.theta,
            "s": args.s,
            "nodes": rep.nodes,
            "values": rep.values,
            "sign": rep.sign,
            "mass_tilted": rep.graph.mass(args.s),
            "mass_cylinder": G.cylinder_mass(spec, args.theta, args.s),
            "sup_constant": rep.sup_constant,
            "lip_constant": rep.lip_constant,
        }
    if args.out:
        _dump_json(out, args.out)
    summary = {k: v for k, v in out.items() if k not in ("nodes", "values", "sign")}
    print(json.dumps(summary, default=_json_default, sort_keys=True))
    _write_manifest(args, args.out)
    return 0


def cmd_luckhaus(args) -> int:
    from .embedret import luckhaus_constant_fit, luckhaus_interpolate, luckhaus_ratio, random_circle_trace

    rng = np.random.default_rng(args.seed)
    lams = _float_list(args.lam, "--lam")
    ratios = np.zeros((args.pairs, len(lams)))
    for p in range(args.pairs):
        F, Gv = (random_circle_trace(rng, args.samples, args.Q) for _ in range(2))
        for j, lam in enumerate(lams):
            ratios[p, j] = luckhaus_ratio(luckhaus_interpolate(F, Gv, lam), F, Gv)
    C, spread = luckhaus_constant_fit(ratios)
    out = {"lam": lams, "ratios": ratios, "C_fit": C, "max_relative_spread": spread}
    if args.out:
        _dump_json(out, args.out)
    print(f"C_fit {C:.6g}, max relative spread {spread:.3f}")
    _write_manifest(args, args.out)
    return 0


def cmd_extend(args) -> int:
    from .embedret import lipschitz_extend, sampled_lipschitz
    from .specpoints import SpecPoint, spec_norm

    data = _read_json(args.input, "extension input")
    try:
        sites = np.asarray(data["sites"], dtype=float)
        values = [SpecPoint.from_json(v) for v in data["values"]]
        points = np.asarray(data["points"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.input}: {exc}") from exc
    if sites.ndim == 1:
        sites = sites[:, None]
    if points.ndim == 1:
        points = points[:, None]
    ext = lipschitz_extend(sites, values, points)
    lip_in = sampled_lipschitz(sites, values)
    lip_out = sampled_lipschitz(np.concatenate([sites, points]), values + ext)
    out = {
        "values": [p.to_json() for p in ext],
        "lip_data": lip_in,
        "lip_extension": lip_out,
        "ratio": lip_out / lip_in if lip_in > 0 else None,
        "sup_data": max(spec_norm(v) for v in values),
        "sup_extension": max(spec_norm(v) for v in ext),
    }
    _dump_json(out, args.out)
    print(f"Lip ratio {out['ratio']}")
    _write_manifest(args, args.out)
    return 0


def cmd_verify(args) -> int:
    from .checks import run_suite

    try:
        rows = run_suite(args.suite, args.seed)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    width = max(len(r[1]) for r in rows)
    for suite, label, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {suite:<10} {label:<{width}}  {detail}")
    failed = sum(not r[2] for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    _write_manifest(args, None)
    return 0 if failed == 0 else 1


def cmd_enneper(args) -> int:
    from .enneper import run_enneper

    _check_embedding(args)
    rep = run_enneper(args.h, args.rule, args.tol, args.max_iters, seed=args.seed)
    # wall-clock times would break bit-identical reruns of the report
    seconds = rep.pop("seconds")
    _dump_json(rep, args.out)
    ref = rep["E_reference"]
    print(f"E_special        {rep['E_special']:.6f}  ({rep['E_special'] / ref:.4f} x 18 pi)")
    print(f"E_two_sheet      {rep['E_two_sheet']:.6f}")
    print(f"E_classical_pair {rep['E_classical_pair']:.6f}")
    print(f"E_competitor     {rep['E_competitor']:.6f}")
    print(f"interface Hausdorff distance {rep['interface']['hausdorff_embedded']:.4f}")
    print(f"solver seconds: embedded {seconds['embedded']:.1f}, two-sheet {seconds['two_sheet']:.1f}")
    _write_manifest(args, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker cap (default: SPECQ_THREADS or 1)")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--manifest", default=None, help="manifest path (default: next to the main output)")
    common.add_argument("--embedding", default="sorted-n1", help="registered embedding name")

    p = argparse.ArgumentParser(prog="specq", description="Special multiple-valued maps: metrics, solvers, diagnostics.")
    p.add_argument("--version", action="version", version=f"specq {__version__}")
    p.add_argument("--replay", metavar="MANIFEST", default=None, help="rerun the command recorded in a manifest")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    s = sub.add_parser("metric", parents=[common], help="distance between two Q-points")
    s.add_argument("--a", required=True, help="JSON list of Q atoms, e.g. '[[0],[2]]'")
    s.add_argument("--b", required=True)
    s.add_argument("--sign-a", type=int, choices=[-1, 1], default=None)
    s.add_argument("--sign-b", type=int, choices=[-1, 1], default=None)
    s.add_argument("--method", choices=["auto", "assignment", "permutations"], default="auto")
    s.set_defaults(func=cmd_metric)

    s = sub.add_parser("minimize", parents=[common], help="minimize the Dirichlet energy")
    s.add_argument("--boundary", required=True, help="boundary config or saved field (JSON)")
    s.add_argument("--h", default=None, help="grid spacing, e.g. 1/64")
    s.add_argument("--strategy", choices=["embedded", "two-sheet"], default="embedded")
    s.add_argument("--init", choices=["harmonic", "given"], default="harmonic")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iters", type=int, default=100_000)
    s.add_argument("--out", required=True, help="output field (JSON)")
    s.add_argument("--report", default=None, help="report path (default <out>.report.json)")
    s.set_defaults(func=cmd_minimize)

    s = sub.add_parser("frequency", parents=[common], help="frequency profile of a field")
    s.add_argument("--field", required=True)
    s.add_argument("--center", default="0,0")
    s.add_argument("--radii", default=None, help="lo,hi,count (geometric); default 24 radii in [4h, dist - 4h]")
    s.add_argument("--out", required=True, help="CSV with columns r, D, H, I")
    s.set_defaults(func=cmd_frequency)

    s = sub.add_parser("graphs", parents=[common], help="graph current diagnostics")
    s.add_argument("action", choices=["mass", "taylor", "excess", "variation", "reparam"])
    s.add_argument("--spec", default=None, help="sheet spec (JSON); default: the two-sheet example")
    s.add_argument("--rule", choices=["quadrant", "diagonal"], default="quadrant")
    s.add_argument("--scale", type=float, default=1.0, help="multiply every sheet by this factor")
    s.add_argument("--domain", choices=["disk", "square"], default="disk")
    s.add_argument("--radius", type=float, default=1.0, help="disk radius or square side")
    s.add_argument("--order", type=int, default=6)
    s.add_argument("--panels", type=int, default=8)
    s.add_argument("--eps", default="0.1,0.05,0.025")
    s.add_argument("--center", default="0.1,0.05", help="variation: bump center")
    s.add_argument("--support", type=float, default=0.5, help="variation: bump radius")
    s.add_argument("--c0", type=float, default=1.0)
    s.add_argument("--c1", type=float, default=0.5)
    s.add_argument("--theta", type=float, default=0.05, help="reparam: tilt angle")
    s.add_argument("--s", type=float, default=0.5, help="reparam: radius in the tilted plane")
    s.add_argument("--h", type=float, default=1 / 32, help="reparam: node spacing")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_graphs)

    s = sub.add_parser("luckhaus", parents=[common], help="fit the annulus interpolation constant")
    s.add_argument("--lam", default="0.1,0.2,0.4")
    s.add_argument("--pairs", type=int, default=5)
    s.add_argument("--samples", type=int, default=128, help="angular samples")
    s.add_argument("--Q", type=int, default=2)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_luckhaus)

    s = sub.add_parser("extend", parents=[common], help="Lipschitz extension of finitely many values")
    s.add_argument("--input", required=True, help='JSON {"sites", "values", "points"}')
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extend)

    s = sub.add_parser("verify", parents=[common], help="run a property suite and print a table")
    s.add_argument("--suite", default="all")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("enneper", parents=[common], help="full pipeline on the two-sheet example")
    s.add_argument("--h", default="1/64")
    s.add_argument("--rule", choices=["diagonal", "quadrant"], default="diagonal")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iters", type=int, default=100_000)
    s.add_argument("--out", default="report.json")
    s.set_defaults(func=cmd_enneper)
    return p


def _replay_argv(path) -> list[str]:
    data = _read_json(path, "manifest")
    argv = data.get("argv") if isinstance(data, dict) else None
    if not isinstance(argv, list) or not all(isinstance(a, str) for a in argv):
        raise ConfigError(f"{path}: manifest has no recorded command line")
    if data.get("version") != __version__:
        print(f"warning: manifest written by specq {data.get('version')}, running {__version__}", file=sys.stderr)
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.replay:
        try:
            argv = _replay_argv(args.replay)
        except ConfigError as exc:
            print(f"specq: error: {exc}", file=sys.stderr)
            return 2
        args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    args.argv = argv
    try:
        _threads(args)
        return int(args.func(args))
    except ConfigError as exc:
        print(f"specq {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
