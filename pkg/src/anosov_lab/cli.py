"""Command-line front end: one experiment per invocation, JSON and CSV reports."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from anosov_lab import __version__
from anosov_lab.actions import AbelianLinearAction, ActionValidationError, ergodic_lattice_check, is_anosov_linear
from anosov_lab.serialize import SCHEMA, config_hash, csv_text, dumps, write_grid_binary

log = logging.getLogger("anosov_lab")


class ReportError(ValueError):
    pass


# argument parsing helpers

def parse_elements(text, k):
    """Element lists: "1..20" (rank one), "1..8*11,3" (multiples of a vector), or "1,0;0,1;2,1"."""
    text = text.strip()
    if ".." in text:
        span, _, vec = text.partition("*")
        lo, hi = (int(v) for v in span.split(".."))
        if vec:
            base = [int(v) for v in vec.split(",")]
        elif k == 1:
            base = [1]
        else:
            raise ValueError("ranges for rank > 1 need a direction, e.g. 1..8*11,3")
        if len(base) != k:
            raise ValueError(f"direction {base} does not have {k} entries")
        return [tuple(t * b for b in base) for t in range(lo, hi + 1)]
    out = []
    for part in text.split(";"):
        a = tuple(int(v) for v in part.split(","))
        if len(a) != k:
            raise ValueError(f"element {a} does not have {k} entries")
        out.append(a)
    return out


def parse_levels(text):
    if ".." in text:
        lo, hi = (int(v) for v in text.split(".."))
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",")]


def positive(kind):
    def check(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return check


def power_of_two(text):
    v = int(text)
    if v < 2 or v & (v - 1):
        raise argparse.ArgumentTypeError(f"grid resolution must be a power of two, got {text}")
    return v


def build_observable(text, resolution, n):
    """sawtooth:w1,...,wn | triangle:i,... | character:m1,...,mn | series:{"m1,m2": c, ...}"""
    from anosov_lab import mixing
    kind, _, arg = text.partition(":")
    if kind == "sawtooth":
        peaks = [None if v in ("", "none") else float(v) for v in arg.split(",")] if arg else [0.5] * n
        if len(peaks) != n:
            raise ValueError(f"sawtooth needs {n} peaks")
        return mixing.sawtooth(resolution, peaks)
    if kind == "triangle":
        axes = tuple(int(v) for v in arg.split(",")) if arg else (0,)
        return mixing.triangle(resolution, n, axes)
    if kind == "character":
        return mixing.character([int(v) for v in arg.split(",")], resolution)
    if kind == "series":
        terms = {tuple(int(v) for v in m.split(",")): complex(c) if not isinstance(c, list) else complex(*c)
                 for m, c in json.loads(arg).items()}
        return mixing.fourier_series(resolution, n, terms)
    raise ValueError(f"unknown observable family {kind!r}")


# commands

def cmd_spectrum(args, action, raw):
    from anosov_lab.spectrum import anosov_elements_per_chamber, compute_spectrum, sigma, sigma_by_sampling
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec = compute_spectrum(action, prop_tol=args.prop_tol)
        sig = sigma(spec)
        sampled = sigma_by_sampling(spec, samples=args.samples, seed=args.seed)
    witnesses = anosov_elements_per_chamber(spec, args.radius)
    chambers = []
    for signs in spec.chambers:
        found = witnesses[signs]
        first = found[0] if found else None
        chambers.append({"signs": list(signs), "witnesses": [list(a) for a in found],
                         "first_anosov": list(first) if first is not None else None,
                         "first_anosov_certified": bool(is_anosov_linear(action.element(first))) if first else None})
    lattice = ergodic_lattice_check(action, args.radius)
    result = {
        "functionals": [{"coefficients": f.coefficients, "multiplicity": f.multiplicity, "jordan": f.jordan}
                        for f in spec.functionals],
        "hyperplanes": spec.hyperplanes,
        "chamber_count": len(spec.chambers),
        "chambers": chambers,
        "coarse_classes": [{"members": list(c.members), "dimension": c.dim, "conditioning": c.conditioning}
                           for c in spec.coarse_classes],
        "sigma": sig,
        "sigma_sampled": sampled,
        "degenerate": spec.degenerate,
        "ergodic_box": {"box": args.radius, "ok": lattice.ok,
                        "failing": list(lattice.failing) if lattice.failing else None},
        "warnings": [str(w.message) for w in caught],
    }
    conventions = {"sigma": "half the minimum of S over the unit sphere, exact via polytope vertices"}
    return result, conventions, {}


def _class_subspace(action, index):
    from anosov_lab.spectrum import compute_spectrum
    spec = compute_spectrum(action)
    if not 0 <= index < len(spec.coarse_classes):
        raise ValueError(f"class index {index} out of range (0..{len(spec.coarse_classes) - 1})")
    return spec, spec.coarse_classes[index]


def cmd_katznelson(args, action, raw):
    from anosov_lab.diophantine import katznelson_probe
    _, cls = _class_subspace(action, args.class_index)
    res = katznelson_probe(cls.basis, args.radius)
    result = {"radius": res.radius, "worst_z": list(res.worst_z), "min_product": res.min_product,
              "exponent": res.exponent, "points_checked": res.points_checked,
              "class_index": args.class_index, "trend": [list(t) for t in res.trend]}
    csvs = {"trend": csv_text(["radius", "min_product"], res.trend)}
    return result, {"distance": "orthogonal projection via QR"}, csvs


def cmd_separation(args, action, raw):
    from anosov_lab.diophantine import admissible_r_bound, annulus_elements, separation_check
    from anosov_lab.spectrum import compute_spectrum, sigma
    sig = sigma(compute_spectrum(action))
    r = args.r if args.r is not None else 0.5 * (1 + admissible_r_bound(sig, action.n))
    levels = parse_levels(args.levels)
    rows = []
    for l in levels:
        elements = parse_elements(args.elements, action.k) if args.elements else \
            annulus_elements(action.k, l, args.factor * l)
        for a in elements:
            res = separation_check(action, r, l, a, sigma_value=sig)
            rows.append([l, ",".join(map(str, a)), res.bound, res.separated, res.hypothesis_met,
                         ",".join(map(str, res.witness)) if res.witness else ""])
    failures = [row for row in rows if not row[3] and row[4]]
    result = {"r": r, "sigma": sig, "r_upper": admissible_r_bound(sig, action.n), "levels": levels,
              "checked": len(rows), "separated_all": not failures,
              "failures": [{"l": row[0], "a": row[1], "witness": row[5]} for row in failures]}
    csvs = {"separation": csv_text(["l", "a", "bound", "separated", "hypothesis_met", "witness"], rows)}
    return result, {"r": "user value" if args.r is not None else "midpoint of (1, e^(sigma/(n+2)))"}, csvs


def cmd_mixing(args, action, raw):
    from anosov_lab.mixing import decay_experiment
    R, n = args.grid, action.n
    f = build_observable(args.f or "sawtooth:" + ",".join(["0.3", "0.6", "0.45"][i % 3] for i in range(n)), R, n)
    g = build_observable(args.g or "sawtooth:" + ",".join(["0.5"] * n), R, n)
    if args.elements:
        elements = parse_elements(args.elements, action.k)
    elif action.k == 1:
        elements = parse_elements("1..20", 1)
    else:
        raise ValueError("--elements is required for rank > 1")
    rep = decay_experiment(action, f, g, args.theta, elements, calibration=args.calibration,
                           pairs=args.pairs, threads=args.threads)
    rows = [[row.norm, ",".join(map(str, row.a)), row.coefficient, row.envelope, row.ergodic, row.resolved]
            for row in rep.rows]
    result = {"beta": rep.beta, "r_squared": rep.r_squared, "beta_resolved": rep.beta_resolved,
              "r_squared_resolved": rep.r_squared_resolved, "constant": rep.constant,
              "calibration": rep.calibration, "envelope_factor": rep.factor, "envelope_holds": rep.envelope_holds,
              "nonergodic": [list(a) for a in rep.nonergodic],
              "rows": [{"norm": row[0], "a": row[1], "coefficient": row[2], "envelope": row[3]} for row in rows]}
    conventions = {"r": rep.r, "sigma": rep.sigma, "r_rule": "midpoint of (1, e^(sigma/(n+2)))",
                   "theta": rep.theta, "quadrature": "uniform grid (Haar)"}
    csvs = {"decay": csv_text(["norm", "a", "coefficient", "envelope", "ergodic", "resolved"], rows)}
    return result, conventions, csvs


def nonlinear_action_from(raw, action, rank1=None):
    from anosov_lab.conjugacy.maps import NonlinearAction, TrigPolynomial, conjugated_action, perturbed_action
    if "conjugated_by" in raw:
        psi = TrigPolynomial.from_spec(action.n, raw["conjugated_by"])
        nl = conjugated_action(action, psi)
    else:
        perts = raw.get("perturbations") or [[] for _ in range(action.k)]
        if len(perts) != action.k:
            raise ActionValidationError("schema", f"{len(perts)} perturbation lists for {action.k} generators")
        polys = [TrigPolynomial.from_spec(action.n, p) for p in perts]
        if rank1 is not None:
            from anosov_lab.conjugacy.maps import NonlinearMap
            return NonlinearAction.rank_one(NonlinearMap(action.generators[rank1], polys[rank1]))
        nl = perturbed_action(action, polys)
    return nl.restrict(rank1) if rank1 is not None else nl


def cmd_conjugacy(args, action, raw):
    from anosov_lab.conjugacy.probes import expansion_probe, fourier_decay_fit
    from anosov_lab.conjugacy.solver import solve_conjugacy
    nl = nonlinear_action_from(raw, action, args.rank1)
    rep = solve_conjugacy(nl, args.grid, tol=args.tol, residual_tol=args.residual_tol, radius=args.radius,
                          threads=args.threads, check=False)
    fit = fourier_decay_fit(rep.h, floor=args.tol)
    result = {
        "success": rep.success,
        "per_generator_residual": rep.per_generator_residual,
        "series_terms": [{"class_index": s.class_index, "element": list(s.element), "terms": s.terms,
                          "last_term_norm": s.last_term_norm, "contraction": s.contraction,
                          "last_ratio": s.ratios[-1] if s.ratios else None} for s in rep.components],
        "h_at_zero": rep.h_at_zero, "h_mean": rep.h_mean, "h_sup": rep.h.sup_norm(),
        "fourier_decay": {"poly_exponent": fit.poly_exponent, "poly_r_squared": fit.poly_r_squared,
                          "exp_rate": fit.exp_rate, "exp_r_squared": fit.exp_r_squared, "floor": fit.floor,
                          "shells_used": fit.used, "degenerate": fit.degenerate, "reaches_floor": fit.reaches_floor},
    }
    if args.probe:
        b = parse_elements(args.probe, nl.k)[0]
        from anosov_lab.spectrum import compute_spectrum
        spec = compute_spectrum(nl.linear_action)
        result["expansion_probe"] = []
        for i in range(len(spec.coarse_classes)):
            pr = expansion_probe(nl, spec, i, b, args.n_max, args.probe_grid, h=rep.h)
            result["expansion_probe"].append({"class_index": i, "element": list(b), "rate_max": pr.final_max,
                                              "rate_min": pr.final_min, "band": list(pr.band),
                                              "within_band": pr.within_band})
    if args.dump_h:
        write_grid_binary(args.dump_h, rep.h.samples, nl.n)
    conventions = {"normalization": "series fixed point; h(0) reported", "tol": args.tol,
                   "residual_tol": args.residual_tol, "quadrature": "uniform grid (Haar)",
                   "subspace_transport": "D(I+h)^-1 applied to linear V and W"}
    if not rep.success:
        bad = next(i for i, r in enumerate(rep.per_generator_residual) if r > args.residual_tol)
        raise ResidualFailure(result, conventions, bad)
    return result, conventions, {}


class ResidualFailure(RuntimeError):
    def __init__(self, result, conventions, generator):
        self.result, self.conventions, self.generator = result, conventions, generator
        super().__init__(f"residual exceeds tol for generator {generator}")


def cmd_report(args):
    rows, summaries = [], []
    for path in args.paths:
        data = json.loads(Path(path).read_text())
        if data.get("schema") != SCHEMA:
            raise ReportError(f"schema mismatch in {path}: {data.get('schema')!r} != {SCHEMA}")
        summaries.append({"source": str(path), "command": data.get("command"),
                          "config_hash": data.get("config_hash")})
        res = data.get("result", {})
        if isinstance(res.get("rows"), list):
            for row in res["rows"]:
                rows.append({"source": str(path), "command": data.get("command"), **row})
        else:
            flat = {k: v for k, v in res.items() if not isinstance(v, (dict, list))}
            rows.append({"source": str(path), "command": data.get("command"), **flat})
    columns = ["source", "command"] + sorted({k for r in rows for k in r} - {"source", "command"})
    table = [[r.get(c, "") for c in columns] for r in rows]
    return {"inputs": summaries, "columns": columns, "rows": table}, csv_text(columns, table)


# plumbing

def build_parser():
    p = argparse.ArgumentParser(prog="anosov-lab", description="Experiments on commuting toral automorphisms.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grid=False):
        sp.add_argument("--action", required=True, help="action JSON file")
        sp.add_argument("--out", default=None, help="output path prefix (default: the command name)")
        sp.add_argument("--threads", type=positive(int), default=1)
        sp.add_argument("--seed", type=int, default=0)
        if grid:
            sp.add_argument("--grid", type=power_of_two, default=64)

    sp = sub.add_parser("spectrum", help="Lyapunov functionals, chambers, sigma")
    common(sp)
    sp.add_argument("--radius", type=int, default=2)
    sp.add_argument("--prop-tol", type=positive(float), default=1e-9)
    sp.add_argument("--samples", type=positive(int), default=10_000)

    sp = sub.add_parser("katznelson", help="distance of lattice points to a coarse subspace")
    common(sp)
    sp.add_argument("--radius", type=positive(int), default=100)
    sp.add_argument("--class", dest="class_index", type=int, default=0)

    sp = sub.add_parser("separation", help="box separation tau(a)(H_l) vs H_l")
    common(sp)
    sp.add_argument("--r", type=positive(float), default=None)
    sp.add_argument("--levels", default="6..12")
    sp.add_argument("--factor", type=positive(float), default=3.0)
    sp.add_argument("--elements", default=None)

    sp = sub.add_parser("mixing", help="matrix-coefficient decay experiment")
    common(sp, grid=True)
    sp.add_argument("--theta", type=positive(float), default=1.0)
    sp.add_argument("--elements", default=None)
    sp.add_argument("--f", default=None, help="observable, e.g. sawtooth:0.3,0.6")
    sp.add_argument("--g", default=None)
    sp.add_argument("--calibration", choices=("first", "fejer"), default="first")
    sp.add_argument("--pairs", type=positive(int), default=None, help="Holder offset budget")

    sp = sub.add_parser("conjugacy", help="solve for the conjugacy correction h")
    common(sp, grid=True)
    sp.add_argument("--tol", type=positive(float), default=1e-9)
    sp.add_argument("--residual-tol", type=positive(float), default=1e-6)
    sp.add_argument("--radius", type=positive(int), default=1)
    sp.add_argument("--rank1", type=int, default=None, help="solve for a single generator only")
    sp.add_argument("--probe", default=None, help="element b for the expansion probe")
    sp.add_argument("--n-max", type=positive(int), default=40)
    sp.add_argument("--probe-grid", type=power_of_two, default=8)
    sp.add_argument("--dump-h", default=None, help="binary dump of h samples")

    sp = sub.add_parser("report", help="merge experiment reports")
    sp.add_argument("paths", nargs="*")
    sp.add_argument("--out", default="report")
    return p


COMMANDS = {"spectrum": cmd_spectrum, "katznelson": cmd_katznelson, "separation": cmd_separation,
            "mixing": cmd_mixing, "conjugacy": cmd_conjugacy}


def _config(args, raw):
    params = {k: v for k, v in vars(args).items() if k not in ("threads", "out", "command", "action")}
    return {"command": args.command, "action": raw, "parameters": params}


def _envelope(args, config, result, conventions):
    return {"schema": SCHEMA, "version": __version__, "command": args.command, "config": config,
            "config_hash": config_hash(config), "conventions": conventions, "result": result}


def _write(prefix, payload, csvs):
    prefix = Path(prefix)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.json").write_text(dumps(payload) + "\n")
    for name, text in csvs.items():
        Path(f"{prefix}.{name}.csv").write_text(text)


def _fail(prefix, kind, message, code, **extra):
    payload = {"schema": SCHEMA, "version": __version__, "error": {"type": kind, "message": message, **extra}}
    text = dumps(payload)
    sys.stderr.write(text + "\n")
    if prefix:
        try:
            Path(f"{prefix}.error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None):
    logging.basicConfig(level=os.environ.get("ANOSOV_LAB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    prefix = args.out or args.command
    if args.command == "report":
        try:
            summary, text = cmd_report(args)
        except (ReportError, OSError, json.JSONDecodeError) as exc:
            return _fail(prefix, type(exc).__name__, str(exc), 2)
        _write(prefix, {"schema": SCHEMA, "version": __version__, "command": "report", "result": summary},
               {"table": text})
        return 0
    try:
        raw = json.loads(Path(args.action).read_text())
        action = AbelianLinearAction.from_dict(raw)
    except json.JSONDecodeError as exc:
        return _fail(prefix, "parse", f"{args.action}: {exc.msg}", 2, line=exc.lineno, column=exc.colno)
    except OSError as exc:
        return _fail(prefix, "io", str(exc), 2)
    except ActionValidationError as exc:
        return _fail(prefix, "validation", str(exc), 2, invariant=exc.invariant)
    config = _config(args, raw)
    try:
        result, conventions, csvs = COMMANDS[args.command](args, action, raw)
    except ResidualFailure as exc:
        _write(prefix, _envelope(args, config, exc.result, exc.conventions), {})
        return _fail(prefix, "residual exceeds tol", str(exc), 3, generator=exc.generator)
    except ActionValidationError as exc:
        return _fail(prefix, "validation", str(exc), 2, invariant=exc.invariant)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return _fail(prefix, type(exc).__name__, str(exc), 2)
    _write(prefix, _envelope(args, config, result, conventions), csvs)
    log.info("wrote %s.json", prefix)
    return 0


if __name__ == "__main__":
    sys.exit(main())
