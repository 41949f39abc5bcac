"""Sweep the bandwidth constant c0 on a rate config.

Reports the fitted slope and the paired comparison against naive k-means at
the largest n for each c0. Use a reduced replication count for quick sweeps.

    python scripts/bandwidth_calibration.py configs/acceptance_rate.toml --c0 0.4 0.5 0.75 1.0 -R 30
"""
import argparse
from pathlib import Path

from deconvkm.config import load_config
from deconvkm.experiments import paired_sign_test, run_rate_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", type=Path)
    p.add_argument("--c0", type=float, nargs="+", default=[0.5, 0.75, 1.0])
    p.add_argument("-R", "--replications", type=int, default=30)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    print(f"{'c0':>5} {'slope':>14} {'excess[0]':>10} {'excess[-1]':>10} {'naive[-1]':>10} "
          f"{'wins':>7} {'p':>9}")
    for c0 in args.c0:
        cfg = load_config(args.config)
        cfg.bandwidth.c0 = c0
        cfg.experiment.replications = args.replications
        fit = run_rate_experiment(cfg, workers=args.workers)
        rows = [r for r in fit.rows if r["n"] == fit.sample_sizes[-1]]
        wins, trials, pval = paired_sign_test([r["excess_deconv"] for r in rows],
                                              [r["excess_naive"] for r in rows])
        print(f"{c0:5.2f} {fit.slope:7.3f}+-{fit.slope_stderr:5.3f} {fit.mean_excess[0]:10.3e} "
              f"{fit.mean_excess[-1]:10.3e} {fit.mean_excess_naive[-1]:10.3e} "
              f"{wins:>3}/{trials:<3} {pval:9.2e}")


if __name__ == "__main__":
    main()
