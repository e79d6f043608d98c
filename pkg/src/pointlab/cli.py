"""Command-line front end.

Every subcommand writes its data files under an output prefix together with
``<prefix>.manifest.json``; ``pointlab rerun MANIFEST`` replays a run.

Exit codes: 0 success, 2 usage or input error, 3 percolation bracketing
failure, 4 spectral solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import bands as bd
from . import config as cf
from . import percolation as pc
from . import spectrum as sp

OUTPUT_DIR_ENV = "POINTLAB_OUTPUT_DIR"

EXIT_USAGE = 2
EXIT_BRACKET = 3
EXIT_SOLVER = 4


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(doc) -> str:
    return json.dumps(doc, indent=1, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def resolve_prefix(out: str | None, default: str) -> Path:
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    p = Path(out) if out else Path(default)
    return p if p.is_absolute() else base / p


class Run:
    """Collects output files of one subcommand and writes its manifest last."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.prefix = resolve_prefix(args.out, args.command)
        self.outputs: list[str] = []

    def path(self, suffix: str) -> Path:
        return self.prefix.with_name(self.prefix.name + suffix)

    def write(self, suffix: str, text: str) -> Path:
        p = self.path(suffix)
        write_atomic(p, text)
        self.outputs.append(str(p))
        return p

    def finish(self) -> None:
        params = {
            k: v for k, v in vars(self.args).items() if k not in ("command", "func", "out")
        }
        manifest = {
            "subcommand": self.args.command,
            "parameters": params,
            "seed": getattr(self.args, "seed", None),
            "argv": self.argv,
            "outputs": self.outputs,
            "version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        write_atomic(self.path(".manifest.json"), json_text(manifest))


# -- sample -----------------------------------------------------------------

def cmd_sample(args, run: Run) -> int:
    window = tuple(args.window)
    try:
        if args.model == "poisson":
            if args.intensity is None:
                raise UsageError("--intensity is required for --model poisson")
            conf = cf.sample_poisson(args.intensity, window, args.seed, args.dim)
        else:
            if args.bound is None:
                raise UsageError("--bound is required for --model displaced")
            conf = cf.sample_displaced_lattice(args.bound, window, args.seed, args.dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.alpha is not None:
        conf = conf.with_couplings(args.alpha)
    run.write(".json", cf.dumps(conf))
    dmin = cf.min_pairwise_distance(conf)
    bound = cf.local_count_bound(conf, args.count_radius) if len(conf) else 0
    print(f"points: {len(conf)}")
    print(f"min_pairwise_distance: {'none' if dmin is None else fmt(dmin)}")
    print(f"local_count_bound(r={fmt(args.count_radius)}): {bound}")
    return 0


# -- clusters ---------------------------------------------------------------

def _load_config(path) -> cf.PointConfiguration:
    try:
        return cf.load(path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"--in: cannot read configuration {path}: {exc}") from exc


def cmd_clusters(args, run: Run) -> int:
    conf = _load_config(args.input)
    if not args.radius > 0:
        raise UsageError("--radius must be positive")
    rep = cf.clusters(conf, args.radius)
    run.write(".json", json_text(rep.to_dict()))
    labels = rep.labels(len(conf))
    run.write(".csv", csv_text(("point_index", "component_id"), enumerate(labels.tolist())))
    print(f"components: {len(rep.components)}")
    print(f"max_component_size: {rep.max_component_size}")
    print(f"boundary_contacts: {sum(rep.touches_boundary)}")
    return 0


# -- percolation ------------------------------------------------------------

def cmd_percolation(args, run: Run) -> int:
    radii = args.radius
    if any(r <= 0 for r in radii) or args.trials < 1 or args.box <= 0:
        raise UsageError("--radius, --box and --trials must be positive")

    def box_for(r):
        return args.box * r if args.box_scaling == "per-radius" else args.box

    rows = []
    try:
        if args.mode == "sweep":
            if not args.lambdas:
                raise UsageError("--lambdas is required for --mode sweep")
            lam_max = max(args.lambdas)
            for r in radii:
                for lam in args.lambdas:
                    est = pc.crossing_probability(
                        lam, r, box_for(r), args.trials, args.seed, args.dim,
                        coupling_intensity=lam_max, workers=args.workers,
                    )
                    rows.append(est.csv_row())
            run.write(".csv", csv_text(pc.CSV_COLUMNS, rows))
        elif args.mode == "critical":
            ests = []
            for r in radii:
                tol = args.tol * r ** (-args.dim)
                est = pc.estimate_critical_density(
                    r, box_for(r), args.trials, tol, args.seed, args.dim, args.workers
                )
                ests.append(est)
                rows.extend(p.csv_row() for p in est.probes)
                print(f"R={fmt(r)} lambda_c_hat={fmt(est.lambda_c_hat)} "
                      f"bracket=[{fmt(est.bracket[0])}, {fmt(est.bracket[1])}]")
            run.write(".csv", csv_text(pc.CSV_COLUMNS, rows))
            run.write(".critical.json", json_text([e.to_dict() for e in ests]))
        else:
            if args.box_scaling == "per-radius":
                ests = [
                    pc.estimate_critical_density(
                        r, box_for(r), args.trials, args.tol * r ** (-args.dim),
                        args.seed, args.dim, args.workers,
                    )
                    for r in radii
                ]
                scaled = [e.lambda_c_hat * e.radius**args.dim for e in ests]
                mean = sum(scaled) / len(scaled)
                report = pc.ScalingReport(
                    args.dim, tuple(radii), tuple(e.lambda_c_hat for e in ests), tuple(scaled),
                    max(abs(s - mean) for s in scaled),
                    max((abs(a - b) / min(a, b) for i, a in enumerate(scaled)
                         for b in scaled[i + 1:]), default=0.0),
                    tuple(ests),
                )
            else:
                report = pc.verify_scaling(
                    radii, args.box, args.trials, args.tol, args.seed, args.dim, args.workers
                )
            for est in report.estimates:
                rows.extend(p.csv_row() for p in est.probes)
            run.write(".csv", csv_text(pc.CSV_COLUMNS, rows))
            run.write(".scaling.json", json_text(report.to_dict()))
            for r, s in zip(report.radii, report.scaled):
                print(f"R={fmt(r)} lambda_c_hat*R^d={fmt(s)}")
            print(f"max_deviation: {fmt(report.max_deviation)}")
            print(f"max_pairwise_rel_diff: {fmt(report.max_pairwise_rel_diff)}")
    except pc.BracketingError as exc:
        print(f"bracketing failed: {exc}", file=sys.stderr)
        if args.dim == 1:
            print("d=1: lambda_c(R) = inf, the expected degeneration", file=sys.stderr)
        return EXIT_BRACKET
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return 0


# -- spectrum ---------------------------------------------------------------

def cmd_spectrum(args, run: Run) -> int:
    try:
        if args.branch:
            if args.dim is None or args.alpha is None:
                raise UsageError("--branch needs --dim and --alpha")
            grid = np.geomspace(args.l_min, args.l_max, args.l_points)
            base = None
            if args.input:
                conf = _load_config(args.input)
                if conf.dimension != args.dim:
                    raise UsageError("--dim does not match the configuration")
                base = conf.points
            branches, failures = sp.branch_curve(
                args.dim, args.alpha, grid, base, args.tol, args.grid_per_decade
            )
            rows = sorted(
                (row for b in branches for row in b.rows()), key=lambda t: (t[0], t[1])
            )
            run.write(".csv", csv_text(("L", "branch_index", "E"), rows))
            summary = {
                "branches": [
                    {"index": b.index, "monotonicity": b.monotonicity} for b in branches
                ],
                "failures": failures,
            }
            run.write(".json", json_text(summary))
            for b in branches:
                print(f"branch {b.index}: {b.monotonicity}")
            if failures:
                print(f"solver failures at {len(failures)} grid points", file=sys.stderr)
                return EXIT_SOLVER
            return 0
        if args.input:
            conf = _load_config(args.input)
            problem = sp.SpectralProblem.from_config(conf)
        else:
            if args.dim is None or args.alpha is None or args.distance is None:
                raise UsageError("give --in, or all of --dim --alpha --distance")
            problem = sp.SpectralProblem.two_point(args.dim, args.alpha, args.distance)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        res = sp.negative_spectrum(problem, args.tol, args.grid_per_decade)
    except sp.SolverError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        for step in exc.trace:
            print(f"  {step}", file=sys.stderr)
        return EXIT_SOLVER
    run.write(".json", json_text(res.to_dict()))
    print(f"negative eigenvalues: {len(res.eigenvalues)}")
    for e in res.eigenvalues:
        print(f"  E = {fmt(e)}")
    return 0


# -- bands ------------------------------------------------------------------

def cmd_bands(args, run: Run) -> int:
    if not args.emin < args.emax:
        raise UsageError("--emin must be below --emax")
    if args.resolution < 2:
        raise UsageError("--resolution must be >= 2")
    try:
        prob = bd.BandProblem(args.spacing, args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    intervals = bd.band_intervals(prob, (args.emin, args.emax), args.resolution)
    grid = np.linspace(args.emin, args.emax, args.resolution)
    f = bd.dispersion(grid, prob)
    rows = zip(grid.tolist(), f.tolist(), (np.abs(f) <= 1.0).tolist())
    run.write(".csv", csv_text(("E", "f", "in_band"), rows))
    run.write(".json", json_text([iv.to_dict() for iv in intervals]))
    for iv in intervals:
        print(f"band [{fmt(iv.lo)}, {fmt(iv.hi)}]")
    return 0


# -- sweep-sigma ------------------------------------------------------------

def parse_nu(text: str):
    """``"a,b,c"`` is a finite support; ``"lo:hi"`` an interval."""
    text = text.strip()
    if not text:
        raise UsageError("--nu: empty coupling support")
    if ":" in text:
        lo, hi = (float(x) for x in text.split(":"))
        if not lo <= hi:
            raise UsageError("--nu: empty coupling interval")
        return ("interval", lo, hi)
    vals = [float(x) for x in text.split(",") if x.strip()]
    if not vals:
        raise UsageError("--nu: empty coupling support")
    return ("finite", vals)


def _draw_alpha(nu, rng, n):
    if nu[0] == "interval":
        return rng.uniform(nu[1], nu[2], size=n)
    return rng.choice(np.asarray(nu[1]), size=n)


def cmd_sweep_sigma(args, run: Run) -> int:
    nu = parse_nu(args.nu)
    if not (1 <= args.n_min <= args.n_max):
        raise UsageError("--n-min/--n-max must satisfy 1 <= n_min <= n_max")
    if not (0 < args.l_min <= args.l_max):
        raise UsageError("--l-min/--l-max must satisfy 0 < l_min <= l_max")
    rng = np.random.default_rng(args.seed)
    found = []
    for _ in range(args.samples):
        n = int(rng.integers(args.n_min, args.n_max + 1))
        L = float(math.exp(rng.uniform(math.log(args.l_min), math.log(args.l_max))))
        pts = np.zeros((n, args.dim))
        pts[:, 0] = L * np.arange(n)
        alpha = _draw_alpha(nu, rng, n)
        try:
            res = sp.negative_spectrum(sp.SpectralProblem(args.dim, pts, alpha))
        except sp.SolverError as exc:
            print(f"solver did not converge: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        found.extend(res.eigenvalues)
    found = np.sort(np.asarray(found))
    run.write(".eigenvalues.csv", csv_text(("E",), ((e,) for e in found.tolist())))
    rows = []
    if len(found):
        edges = np.linspace(found[0], 0.0, args.bins + 1)
        counts, _ = np.histogram(found, bins=edges)
        rows = zip(edges[:-1].tolist(), edges[1:].tolist(), counts.tolist())
    run.write(".csv", csv_text(("E_lo", "E_hi", "count"), rows))
    print("lower-bound illustration: sampled negative eigenvalues, not the closure")
    print(f"eigenvalues found: {len(found)}")
    if len(found):
        print(f"range: [{fmt(found[0])}, {fmt(found[-1])}]")
    return 0


# -- rerun ------------------------------------------------------------------

def cmd_rerun(args) -> int:
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        argv = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot read manifest {args.manifest}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        if "--out" in argv:
            i = argv.index("--out")
            argv[i + 1] = args.out
        else:
            argv += ["--out", args.out]
    return main(argv)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pointlab", description="Point interactions: sampling, percolation, spectra."
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", help=f"output prefix (relative paths resolve under ${OUTPUT_DIR_ENV})")
        return p

    p = add("sample", cmd_sample, "sample a Poisson or displaced-lattice configuration")
    p.add_argument("--model", choices=("poisson", "displaced"), required=True)
    p.add_argument("--dim", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--intensity", type=float)
    p.add_argument("--bound", type=float)
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--alpha", type=float, help="attach this constant coupling to every point")
    p.add_argument("--count-radius", type=float, default=1.0)

    p = add("clusters", cmd_clusters, "connected components of the R-neighbourhood")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--radius", type=float, required=True)

    p = add("percolation", cmd_percolation, "crossing probabilities and critical density")
    p.add_argument("--mode", choices=("sweep", "critical", "scaling"), default="sweep")
    p.add_argument("--dim", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--radius", type=float, nargs="+", default=[1.0])
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--box", type=float, default=40.0)
    p.add_argument("--box-scaling", choices=("absolute", "per-radius"), default="absolute",
                   help="per-radius: the box side is BOX*R")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--tol", type=float, default=0.01,
                   help="bisection width in units of R^-d")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)

    p = add("spectrum", cmd_spectrum, "negative spectrum of a finite point interaction")
    p.add_argument("--in", dest="input")
    p.add_argument("--dim", type=int, choices=(1, 2, 3))
    p.add_argument("--alpha", type=float)
    p.add_argument("--distance", type=float)
    p.add_argument("--branch", action="store_true", help="sweep the scale L of the geometry")
    p.add_argument("--l-min", type=float, default=0.1)
    p.add_argument("--l-max", type=float, default=50.0)
    p.add_argument("--l-points", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--grid-per-decade", type=int, default=64)

    p = add("bands", cmd_bands, "Kronig-Penney band scan")
    p.add_argument("--spacing", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--emin", type=float, required=True)
    p.add_argument("--emax", type=float, required=True)
    p.add_argument("--resolution", type=int, default=bd.DEFAULT_RESOLUTION)

    p = add("sweep-sigma", cmd_sweep_sigma,
            "lower-bound illustration of the random spectrum from sampled finite families")
    p.add_argument("--dim", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--nu", required=True,
                   help="coupling support: 'a,b,...' or 'lo:hi' (use --nu=-2:-1 for a leading minus)")
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--l-min", type=float, default=0.01)
    p.add_argument("--l-max", type=float, default=100.0)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="override the output prefix")
    p.set_defaults(func=None)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rerun":
        return cmd_rerun(args)
    run = Run(args, argv)
    try:
        code = args.func(args, run)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if code == 0 or run.outputs:
        run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
