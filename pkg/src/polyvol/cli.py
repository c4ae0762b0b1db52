"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import estim2d, estim3d, harness
from .errors import InvalidParamsError, NumericalError, ValidationError
from .sampler import DistanceSample, draw_sample
from .shapes import FIXTURES, Shape, shape_from_dict

SHAPE_HELP = (
    "fixture name ({}) or a JSON file {{\"variant\": NAME, \"params\": {{...}}}}. "
    "Variants and params: Disk(center, radius, solid), DiskUnion(centers, radii, solid), "
    "Rectangle(lo, hi), ConvexPolygon(vertices), Polyline(vertices), WedgeCutDisk(rho), "
    "Ball(center, radius), BallUnion(centers, radii), Cone(height, aperture), "
    "SegmentPointDilation()."
).format(", ".join(FIXTURES))


def load_shape(name_or_path: str) -> Shape:
    if name_or_path in FIXTURES:
        return FIXTURES[name_or_path]()
    path = Path(name_or_path)
    if not path.exists():
        raise InvalidParamsError(f"{name_or_path!r} is neither a fixture ({', '.join(FIXTURES)}) nor a file")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidParamsError(f"{name_or_path}: invalid JSON ({exc})") from exc
    return shape_from_dict(doc)


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_sample(args) -> None:
    shape = load_shape(args.shape)
    sample = draw_sample(shape, args.R, args.n, args.seed)
    if args.out:
        sample.to_csv(args.out)
    else:
        print(f"# R={sample.R!r} model={sample.model} seed={sample.seed}")
        for v in sample.values:
            print(repr(float(v)))


def cmd_estimate(args) -> None:
    sample = DistanceSample.from_csv(args.input)
    method = args.method.lower()
    if method == "em":
        res = estim2d.lambda_em(sample, args.tol)
        est = res.estimate
        print(f"method=EM lambda={est.value!r} iterations={res.iterations}")
        return
    runners = {
        "mom": lambda: estim2d.mom_l0(sample, args.phi0),
        "mle": lambda: estim2d.mle_l0(sample, args.phi0),
        "tmom": lambda: estim2d.tmom_l0(sample, args.K, args.phi0),
        "tmle": lambda: estim2d.tmle_l0(sample, args.K, args.phi0, args.tol),
        "mom3d": lambda: estim3d.mom3d(sample, args.phi0),
        "mle3d": lambda: estim3d.mle3d(sample, args.phi0),
        "tmom3d": lambda: estim3d.tmom3d(sample, args.K, args.phi0),
    }
    est = runners[method]()
    flags = ",".join(est.flags) or "none"
    if method.endswith("3d"):
        print(
            f"method={est.method} n={est.n} l0={est.l0!r} m={est.m!r} "
            f"var_l0={est.asymp_var_l0!r} var_m={est.asymp_var_m!r} flags={flags}"
        )
    else:
        print(f"method={est.method} n={est.n} value={est.value!r} variance={est.asymp_variance!r} flags={flags}")


def cmd_replicate(args) -> None:
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidParamsError(f"cannot read config {args.config}: {exc}") from exc
    if args.seed is not None:
        doc["master_seed"] = args.seed
    config = harness.ReplicationConfig.from_dict(doc)
    summary = harness.replicate(config, workers=args.workers)
    _write(summary.to_csv(), args.out)
    sys.stderr.write(summary.summary_csv())
    for w in summary.warnings:
        sys.stderr.write(f"warning: {w}\n")


def cmd_varcurve(args) -> None:
    grid = np.linspace(args.rmin, args.rmax, args.steps)
    curve = harness.var_curve(args.l0, grid, args.dim, args.m, args.phi0)
    _write(curve.to_csv(), args.out)
    if args.svg:
        Path(args.svg).write_text(curve.to_svg())


def cmd_volfit(args) -> None:
    shape = load_shape(args.shape)
    if args.rmax is not None:
        top = args.rmax
    else:
        r_max = shape.analytic_volume().r_max
        top = 1.0 if r_max == float("inf") else r_max
    grid = np.linspace(top / args.points, top, args.points)
    fit = harness.vol_fit(shape, grid, args.nmc, args.degree, args.seed)
    _write(fit.to_csv(), args.out)
    sys.stderr.write(f"max whitened residual {fit.max_residual:.3f}\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyvol", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw a distance sample")
    s.add_argument("--shape", required=True, help=SHAPE_HELP)
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("estimate", help="estimate from a sample CSV")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--method", required=True, choices=["mom", "mle", "tmom", "tmle", "em", "mom3d", "mle3d", "tmom3d"])
    e.add_argument("--phi0", type=float, default=1.0)
    e.add_argument("--K", type=int, default=5)
    e.add_argument("--tol", type=float, default=1e-5, help="EM tolerance")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser(
        "replicate",
        help="Monte Carlo study from a JSON config",
        description="Config keys: shape (fixture name or variant document), R, n, B, methods, "
        "K, em_tolerance, master_seed, phi0, targets.",
    )
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int, help="overrides master_seed")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_replicate)

    v = sub.add_parser("varcurve", help="asymptotic standard deviations over R")
    v.add_argument("--dim", type=int, choices=[2, 3], default=2)
    v.add_argument("--l0", type=float, required=True)
    v.add_argument("--m", type=float)
    v.add_argument("--phi0", type=float, default=1.0)
    v.add_argument("--rmin", type=float, required=True)
    v.add_argument("--rmax", type=float, required=True)
    v.add_argument("--steps", type=int, default=31)
    v.add_argument("--out")
    v.add_argument("--svg")
    v.set_defaults(func=cmd_varcurve)

    f = sub.add_parser("volfit", help="polynomial fit to Monte Carlo volumes")
    f.add_argument("--shape", required=True, help=SHAPE_HELP)
    f.add_argument("--degree", type=int, required=True, choices=[2, 3])
    f.add_argument("--nmc", type=int, default=1_000_000)
    f.add_argument("--rmax", type=float, help="top of the radius grid (default: validity radius, or 1)")
    f.add_argument("--points", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.set_defaults(func=cmd_volfit)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 3
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
