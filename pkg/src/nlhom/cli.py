"""Command line entry point: run, sweep-eps, sweep-delta, eigen, validate, report.

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import export
from .config import RunConfig, build_problem, build_setup, load_config
from .errors import ConfigurationError, CoverageError
from .evolution import build_system, integrate_system
from .geometry import MaskedField, check_coverage, default_coverage_floor
from .harness import SweepConfig, run_sweep
from .nonlinearity import appendix_gradient_check
from .spectral import ConvergenceError, lambda1, quadratic_form_offsets, rayleigh_quotient

log = logging.getLogger("nlhom")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out if args.out else cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    setup = build_setup(cfg)
    spec = build_problem(cfg, setup)
    system = build_system(spec)
    traj = integrate_system(system, spec.T, spec.dt, spec.scheme, spec.sample_stride)
    out = _out_dir(args, cfg)
    files = []
    if cfg.output.export_fields:
        for k, s in enumerate(traj.states):
            name = f"u_{k:04d}.csv"
            export.write_field_csv(out / name, s)
            files.append(name)
    export.write_pgm(out / "mask.pgm", setup.chi_eps, setup.omega)
    export.write_mask_csv(out / "mask.csv", setup.chi_eps)
    export.write_kernel_csv(out / "kernel.csv", setup.kernel)
    export.plot_field_svg(out / "u_final.svg", traj.final, f"u at t = {traj.times[-1]:g}")
    files += ["mask.pgm", "mask.csv", "kernel.csv", "u_final.svg"]
    export.write_manifest(out / "manifest.json", traj, cfg.hash, files,
                          {"equation": spec.equation, "bc": spec.bc, "scheme": spec.scheme})
    print(f"{spec.equation} ({spec.effective_bc}): {len(traj.times) - 1} samples, "
          f"||u(T)|| = {traj.final.l2_norm():.6g}; wrote {out}")
    return 0


def _sweep(args, kind: str) -> int:
    cfg = load_config(args.config)
    cfg.sweep.sweep_kind = kind
    sweep = SweepConfig.from_run_config(cfg, threads=args.threads)
    report = run_sweep(sweep)
    out = _out_dir(args, cfg)
    export.write_report_json(out / "report.json", report)
    export.write_report_csv(out / "report.csv", report, timing=cfg.output.timing)
    export.plot_sweep_svg(out / f"error_vs_{kind}.svg", report)
    errs = report.max_weak_errors()
    for v, e, d in zip(report.values, errs, report.l2_at_T()):
        print(f"{kind} = {v:<10g} max weak error = {e:.4e}   L2 at T = {d:.4e}")
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    print(f"monotone decrease: {'yes' if decreasing else 'no'} (soft check)")
    return 0


def cmd_sweep_eps(args) -> int:
    return _sweep(args, "eps")


def cmd_sweep_delta(args) -> int:
    return _sweep(args, "delta")


def cmd_eigen(args) -> int:
    cfg = load_config(args.config)
    spec = build_problem(cfg)
    system = build_system(spec)
    a = None if np.all(system.a[system.support] == 1.0) else system.a
    res = lambda1(spec.kernel, system.h, system.support, tol=args.tol, max_iter=args.max_iter, a=a)
    print(f"lambda1 = {res.lambda1:.12g}  iterations = {res.iterations}  residual = {res.residual:.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        export.write_json(out / "eigen.json", {**res.to_dict(), "config_hash": cfg.hash})
        export.write_field_csv(out / "eigenfield.csv", res.eigenfield)
    return 0


def validation_checks(cfg: RunConfig) -> list:
    """(name, value, threshold, passed) rows for the validate command."""
    setup = build_setup(cfg, check_coverage=False)
    J, grid = setup.kernel, setup.grid
    rows = []
    mass_err = abs(J.mass - 1.0)
    rows.append(("kernel_mass", mass_err, 1e-12, mass_err <= 1e-12))
    rows.append(("kernel_symmetry", 0.0 if J.is_symmetric() else 1.0, 0.0, J.is_symmetric()))
    rows.append(("kernel_j0_positive", J.j0, 0.0, J.j0 > 0))
    delta = setup.averaging.delta
    floor = setup.averaging.denominator_floor or default_coverage_floor(grid, delta)
    try:
        worst = check_coverage(grid, setup.omega, setup.chi_eps, delta, floor)
        rows.append(("mask_coverage", worst, floor, True))
    except CoverageError as exc:
        rows.append(("mask_coverage", exc.worst_value, floor, False))

    # derivative of a ball integral of the initial bump, radius delta
    u0 = cfg.problem.u0
    c = setup.domain.resolved_center(grid) if u0.center is None else tuple(u0.center)
    s2 = u0.width ** 2
    x = np.array(c) + 0.25 * u0.width
    if grid.dim == 1:
        fn = lambda y: np.exp(-0.5 * (y - c[0]) ** 2 / s2)
    else:
        fn = lambda y1, y2: np.exp(-0.5 * ((y1 - c[0]) ** 2 + (y2 - c[1]) ** 2) / s2)
    _, _, rel = appendix_gradient_check(fn, x, delta, n_boundary=512, grid=grid)
    rows.append(("ball_derivative_identity", rel, 1e-4, rel <= 1e-4))

    # quadratic form: convolution route vs offset-pair sum
    rng = np.random.default_rng(0)
    D = setup.chi_eps.mask
    u = MaskedField(grid, rng.standard_normal(grid.shape), D)
    direct = quadratic_form_offsets(J, u, D)
    via_conv = rayleigh_quotient(J, u, admissible=D) * float((u.values ** 2).sum()) * grid.cell_volume
    rel = abs(direct - via_conv) / max(abs(direct), 1e-300)
    rows.append(("quadratic_form_identity", rel, 1e-10, rel <= 1e-10))
    return rows


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    rows = validation_checks(cfg)
    print(f"{'check':<28}{'value':>14}{'threshold':>14}  status")
    for name, val, thr, ok in rows:
        print(f"{name:<28}{val:>14.4e}{thr:>14.4e}  {'ok' if ok else 'FAIL'}")
    return 0 if all(r[3] for r in rows) else 1


def cmd_report(args) -> int:
    src = Path(args.input)
    if not src.is_file():
        raise ConfigurationError(f"report file not found: {src}")
    report = export.report_from_json(src)
    out = Path(args.out) if args.out else src.parent
    out.mkdir(parents=True, exist_ok=True)
    export.write_report_csv(out / "report.csv", report, timing=args.timing)
    export.plot_sweep_svg(out / f"error_vs_{report.sweep_kind}.svg", report)
    print(f"wrote {out / 'report.csv'} and {out / f'error_vs_{report.sweep_kind}.svg'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlhom", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default: output.dir)")
        sp.set_defaults(func=fn)
        return sp

    with_config("run", cmd_run, "integrate one problem and export the trajectory")
    for name, fn in (("sweep-eps", cmd_sweep_eps), ("sweep-delta", cmd_sweep_delta)):
        sp = with_config(name, fn, f"{name.split('-')[1]} sweep against the limit problem")
        sp.add_argument("--threads", type=int, help="worker threads (default NLHOM_THREADS or cores)")
    sp = with_config("eigen", cmd_eigen, "first eigenvalue of the linear operator")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--max-iter", type=int, default=10000)
    sp = sub.add_parser("validate", help="kernel, coverage, derivative and form-identity checks")
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_validate)
    sp = sub.add_parser("report", help="render report.json to CSV and SVG")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out")
    sp.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"eigenvalue iteration failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
