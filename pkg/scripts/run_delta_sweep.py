"""Delta sweep towards the local-reaction limit, with the rho-form residual per member.

    python3 scripts/run_delta_sweep.py --config configs/delta_sweep.json
"""

import argparse
from pathlib import Path

from nlhom import export
from nlhom.config import load_config
from nlhom.harness import SweepConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/delta_sweep.json")
    ap.add_argument("--out", default="results/delta_sweep")
    ap.add_argument("--bc", nargs="+", default=["dirichlet", "neumann"])
    ap.add_argument("--values", type=float, nargs="+", help="override the delta values")
    args = ap.parse_args()

    for bc in args.bc:
        cfg = load_config(args.config)
        cfg.problem.bc = bc
        cfg.sweep.sweep_kind = "delta"
        if args.values:
            cfg.sweep.values = list(args.values)
        rep = run_sweep(SweepConfig.from_run_config(cfg))
        out = Path(args.out) / bc
        out.mkdir(parents=True, exist_ok=True)
        export.write_report_json(out / "report.json", rep)
        export.write_report_csv(out / "report.csv", rep)
        export.plot_sweep_svg(out / "error_vs_delta.svg", rep)
        print(f"[{bc}]  reference: {rep.reference['equation']}")
        for s in rep.summary:
            rho = s.get("rho_residual")
            extra = "" if rho is None else f"  rho-form residual {rho:.1e}"
            print(f"  delta = {s['sweep_value']:<6g} L2(T) {s['l2_distance_T']:.4e}  "
                  f"max weak error {s['max_weak_error']:.4e}{extra}")


if __name__ == "__main__":
    main()
