"""Run the Monte Carlo rate experiment and print a per-n table.

    python scripts/run_rate_experiment.py configs/acceptance_rate.toml --workers 4 --out results/rate
"""
import argparse
import sys
from pathlib import Path

from deconvkm import cli
from deconvkm.config import load_config
from deconvkm.experiments import paired_sign_test, run_rate_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--replications", type=int, default=None, help="override experiment.replications")
    p.add_argument("--out", type=Path, default=None, help="also write rate.csv and summary.json here")
    args = p.parse_args()

    cfg = load_config(args.config)
    if args.replications:
        cfg.experiment.replications = args.replications

    def progress(row):
        print(f"  n={row['n']:>6} rep={row['rep']:>3} excess={row['excess_deconv']:.3e}",
              file=sys.stderr)

    fit = run_rate_experiment(cfg, workers=args.workers, progress=progress)
    print(f"{'n':>6} {'mean excess':>12} {'se':>10} {'naive':>12}")
    for i, n in enumerate(fit.sample_sizes):
        naive = fit.mean_excess_naive[i] if fit.mean_excess_naive is not None else float("nan")
        print(f"{n:>6} {fit.mean_excess[i]:12.4e} {fit.std_error[i]:10.2e} {naive:12.4e}")
    print(f"slope {fit.slope:.3f} +- {fit.slope_stderr:.3f}, "
          f"theoretical {-fit.theoretical_exponent:.4f}")
    if cfg.experiment.naive_baseline:
        n_max = fit.sample_sizes[-1]
        rows = [r for r in fit.rows if r["n"] == n_max]
        wins, trials, pval = paired_sign_test([r["excess_deconv"] for r in rows],
                                              [r["excess_naive"] for r in rows])
        print(f"n={n_max}: deconvolution better in {wins}/{trials} replications, p={pval:.2e}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        cli._write_json(args.out / "effective_config.json", cfg.to_dict())
        cli._write_csv(args.out / "rate.csv",
                       ["n", "rep", "excess_deconv", "excess_naive", "lambda", "seed"],
                       [(r["n"], r["rep"], cli._fmt(r["excess_deconv"]),
                         cli._fmt(r["excess_naive"]), cli._fmt(r["lambda"]), r["seed"])
                        for r in fit.rows])
        cli._write_json(args.out / "summary.json", fit.summary())


if __name__ == "__main__":
    main()
