"""Command line front end: generate datasets, fit surfaces, compare methods.

Defaults follow the reference experiment settings: initial 2x2 tensor mesh,
classes up to L = 10, smoothing mu = 1e-6, minimum local point count m = 5,
condition ceiling 1e5, anisotropic insertions from the minimal class on.
``--config FILE`` presets flags from ``key=value`` lines; explicit flags win.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import datasets, reports
from .adaptive import AdaptiveConfig, run_fault_driven_fit, run_jump_driven_fit
from .faults import DetectionConfig, detect_fault_points, label_alignment
from .jumps import JumpConfig, classify_jumps, estimate_all
from .quasi import QIConfig, surface_from_text, surface_to_text

_FN = {"f1": (datasets.eval_f1, (0.0, 1.0, 0.0, 1.0)),
       "f2": (datasets.eval_f2, (-4.0, 4.0, -4.0, 4.0))}
_MODES = {"iso": "isotropic", "aniso": "anisotropic", "fault": "fault_driven"}


class _CliError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lrfit", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p):
        p.add_argument("--fn", choices=sorted(_FN), help="synthetic test surface")
        p.add_argument("--n", type=int, default=1_000_000, help="synthetic point count")
        p.add_argument("--data", help="XYZ point cloud file")
        p.add_argument("--noise-sigma", type=float, default=0.0)
        p.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate", help="write a synthetic cloud as XYZ")
    add_dataset_flags(g)
    g.add_argument("--out", required=True, help="output XYZ path")

    def add_fit_flags(p):
        add_dataset_flags(p)
        p.add_argument("--degree", type=int, choices=(2, 3), default=3)
        p.add_argument("--lbar", type=int, default=1, help="minimal jump class")
        p.add_argument("--lmax", type=int, default=10, help="maximal jump class")
        p.add_argument("--laniso", type=int, default=None,
                       help="iteration starting one-directional splits (default lbar)")
        p.add_argument("--mode", choices=sorted(_MODES), default="aniso")
        p.add_argument("--mu", type=float, default=1e-6)
        p.add_argument("--m", type=int, default=5, help="minimum local point count")
        p.add_argument("--kappa-max", type=float, default=1e5)
        p.add_argument("--grid-res", type=int, default=128, help="detection grid")
        p.add_argument("--out", default=".", help="output directory")

    add_fit_flags(sub.add_parser("fit", help="adaptive fit, write reports"))
    add_fit_flags(sub.add_parser("compare", help="jump-driven vs fault-driven"))

    e = sub.add_parser("export", help="re-export artifacts from a saved surface")
    e.add_argument("--surface", required=True, help="surface text file")
    e.add_argument("--grid-res", type=int, default=128)
    e.add_argument("--out", default=".")
    return ap


def _inject_config(argv: list[str]) -> list[str]:
    """Expand ``--config FILE`` into flags placed before the explicit ones."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise _CliError("--config needs a file argument")
    path = argv[i + 1]
    argv = argv[:i] + argv[i + 2:]
    extras: list[str] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _CliError(f"{path}: bad config line {raw.strip()!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            extras.extend([f"--{k}", v])
    if not argv:
        raise _CliError("--config requires a command")
    return argv[:1] + extras + argv[1:]


def _load_cloud(args) -> datasets.PointCloud:
    if args.data:
        cloud = datasets.load_xyz(args.data)
    elif args.fn:
        fn, domain = _FN[args.fn]
        cloud = datasets.generate_halton_cloud(args.n, domain, fn)
    else:
        raise _CliError("one of --data or --fn is required")
    if args.noise_sigma > 0:
        cloud = datasets.add_gaussian_noise(cloud, args.noise_sigma, args.seed)
    return cloud


def _adaptive_config(args, mode: str) -> AdaptiveConfig:
    return AdaptiveConfig(
        qi=QIConfig(bidegree=(args.degree, args.degree), mu=args.mu,
                    min_points=args.m, kappa_max=args.kappa_max),
        jump=JumpConfig(max_class=args.lmax, min_class=args.lbar),
        detection=DetectionConfig(resolution=(args.grid_res, args.grid_res)),
        l_aniso=args.laniso,
        mode=mode,
    )


def _classified_points(cloud, args):
    cfg = _adaptive_config(args, "isotropic")
    points = label_alignment(detect_fault_points(cloud, cfg.detection),
                             cfg.detection.theta_tol)
    x0, x1, y0, y1 = cloud.domain
    cell = ((x1 - x0) / args.grid_res, (y1 - y0) / args.grid_res)
    return classify_jumps(estimate_all(points, cloud, cfg.jump, cell), cfg.jump)


def _cmd_generate(args) -> int:
    cloud = _load_cloud(args)
    datasets.save_xyz(cloud, args.out)
    print(f"wrote {len(cloud)} points to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    cloud = _load_cloud(args)
    mode = _MODES[args.mode]
    cfg = _adaptive_config(args, mode)
    t0 = time.perf_counter()
    if mode == "fault_driven":
        surface, report = run_fault_driven_fit(cloud, cfg)
    else:
        surface, report = run_jump_driven_fit(cloud, cfg)
    total = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    reports.report_to_csv(report, os.path.join(args.out, "report.csv"))
    reports.results_csv([{"lbar": args.lbar, "mode": report.mode,
                          "ndofs": report.ndofs, "rmse": report.rmse}],
                        os.path.join(args.out, "results.csv"))
    reports.mesh_svg(surface.basis.mesh, os.path.join(args.out, "mesh.svg"))
    reports.surface_grid_csv(surface, os.path.join(args.out, "surface_grid.csv"),
                             args.grid_res)
    with open(os.path.join(args.out, "surface.txt"), "w") as fh:
        fh.write(surface_to_text(surface))
    print(f"ndofs={report.ndofs} rmse={report.rmse:.6e} total={total:.1f}s")
    return 0


def _cmd_compare(args) -> int:
    cloud = _load_cloud(args)
    mode = _MODES[args.mode]
    if mode == "fault_driven":
        raise _CliError("compare needs --mode iso or aniso for the jump-driven run")
    t0 = time.perf_counter()
    jd_surface, jd = run_jump_driven_fit(cloud, _adaptive_config(args, mode))
    _, fd = run_fault_driven_fit(cloud, _adaptive_config(args, "fault_driven"))
    total = time.perf_counter() - t0
    points = _classified_points(cloud, args)
    reports.write_reports(jd, fd, args.out, surface=jd_surface, points=points,
                          lbar=args.lbar, grid_res=args.grid_res)
    reports.fault_points_csv(points, os.path.join(args.out, "fault_points.csv"))
    print(f"jump: ndofs={jd.ndofs} rmse={jd.rmse:.6e} | "
          f"fault: ndofs={fd.ndofs} rmse={fd.rmse:.6e} | total={total:.1f}s")
    return 0


def _cmd_export(args) -> int:
    with open(args.surface) as fh:
        surface = surface_from_text(fh.read())
    os.makedirs(args.out, exist_ok=True)
    reports.mesh_svg(surface.basis.mesh, os.path.join(args.out, "mesh.svg"))
    reports.surface_grid_csv(surface, os.path.join(args.out, "surface_grid.csv"),
                             args.grid_res)
    print(f"exported ndofs={surface.ndofs} to {args.out}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = _build_parser()
    try:
        argv = _inject_config(argv)
    except (_CliError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    args = ap.parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_export(args)
    except (_CliError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
