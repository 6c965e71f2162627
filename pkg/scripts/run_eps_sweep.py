"""Run the eps sweep for both boundary conditions and write reports per flavour.

    python3 scripts/run_eps_sweep.py --config configs/eps_sweep.json --out results/eps
"""

import argparse
from pathlib import Path

from nlhom import export
from nlhom.config import load_config
from nlhom.harness import SweepConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/eps_sweep.json")
    ap.add_argument("--out", default="results/eps_sweep")
    ap.add_argument("--bc", nargs="+", default=["dirichlet", "neumann"])
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()

    for bc in args.bc:
        cfg = load_config(args.config)
        cfg.problem.bc = bc
        cfg.sweep.sweep_kind = "eps"
        rep = run_sweep(SweepConfig.from_run_config(cfg, threads=args.threads))
        out = Path(args.out) / bc
        out.mkdir(parents=True, exist_ok=True)
        export.write_report_json(out / "report.json", rep)
        export.write_report_csv(out / "report.csv", rep)
        export.plot_sweep_svg(out / "error_vs_eps.svg", rep)
        print(f"[{bc}]")
        prev = None
        for s in rep.summary:
            e = s["max_weak_error"]
            rate = "" if prev is None else f"  ratio {prev / e:6.2f}"
            arg = s["argmax"]
            print(f"  eps = {s['sweep_value']:<9g} max weak error {e:.4e} "
                  f"({arg['test_function']}, t = {arg['sample_time']:g})  "
                  f"L2(T) {s['l2_distance_T']:.4e}  bound violations {s['bound']['violations']}{rate}")
            prev = e


if __name__ == "__main__":
    main()
