"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical / ill-posedness
error, 4 oracle inconsistency.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import Config, load_config
from .deconv_risk import deconv_density
from .errors import (ConfigError, NumericalError, OracleInconsistencyError, ParameterError,
                     ReplicationError)
from .kernels import build_kernel_table

log = logging.getLogger("deconvkm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ORACLE = 0, 2, 3, 4


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_sample(path) -> np.ndarray:
    """Plain text, one point per line, axes separated by whitespace."""
    try:
        return np.loadtxt(path, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read sample file {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed sample file {path}: {exc}") from exc


def _sample(cfg: Config) -> np.ndarray:
    if cfg.experiment.sample_file:
        z = read_sample(cfg.experiment.sample_file)
        if z.shape[1] != cfg.source.dim:
            raise ConfigError(f"sample file has {z.shape[1]} columns, source.dim={cfg.source.dim}")
        return z
    s_x, s_eps = ex._sub_seeds(cfg.master_seed, 2)
    x = ex.sample_source(ex.source_from_config(cfg), cfg.experiment.n, s_x)
    return ex.contaminate(x, ex.noise_from_config(cfg), s_eps)


def cmd_kernel_dump(cfg: Config, out: Path, **_):
    source = ex.source_from_config(cfg)
    lam = ex.choose_bandwidth(cfg, cfg.experiment.n, seed=cfg.master_seed)
    grid = ex.estimation_grid(source, lam, cfg.grid.nodes_per_axis, cfg.grid.margin_factor)
    table = build_kernel_table(ex.kernel_from_config(cfg), ex.noise_from_config(cfg), lam, grid,
                               n_freq=cfg.kernel.freq_nodes, cf_floor=cfg.kernel.cf_floor)
    for j in range(table.dim):
        name = "kernel.csv" if j == 0 else f"kernel_axis{j}.csv"
        _write_csv(out / name, ["offset", "value"],
                   [(_fmt(o), _fmt(v)) for o, v in zip(table.offsets(j), table.axis_tables[j])])
    log.info("kernel table: lambda=%g, %d offsets per axis", lam, table.axis_tables[0].size)


def cmd_density(cfg: Config, out: Path, **_):
    z = _sample(cfg)
    source = ex.source_from_config(cfg)
    lam = ex.choose_bandwidth(cfg, z.shape[0], z, seed=cfg.master_seed)
    grid = ex.estimation_grid(source, lam, cfg.grid.nodes_per_axis, cfg.grid.margin_factor)
    table = build_kernel_table(ex.kernel_from_config(cfg), ex.noise_from_config(cfg), lam, grid,
                               sample_box=ex._box_around(z, grid),
                               n_freq=cfg.kernel.freq_nodes, cf_floor=cfg.kernel.cf_floor)
    dens = deconv_density(z, table, grid)
    header = [f"x{j + 1}" for j in range(grid.dim)] + ["fhat"]
    rows = [[_fmt(v) for v in p] + [_fmt(f)] for p, f in zip(grid.points, dens.values.ravel())]
    _write_csv(out / "density.csv", header, rows)


def cmd_cluster(cfg: Config, out: Path, **_):
    z = _sample(cfg)
    s_fit, s_bw = ex._sub_seeds(cfg.master_seed + 1, 2)
    lam = ex.choose_bandwidth(cfg, z.shape[0], z, seed=s_bw)
    rep, _ = ex.fit_deconvolved(z, cfg, lam, s_fit)
    doc = {
        "centers": rep.final_codebook.tolist(),
        "risk": rep.final_risk,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "reseed_events": rep.reseed_events,
        "lambda": lam,
        "n": int(z.shape[0]),
    }
    _write_json(out / "cluster.json", doc)
    print(json.dumps(doc, sort_keys=True))


def cmd_rate(cfg: Config, out: Path, threads: int = 1, **_):
    fit = ex.run_rate_experiment(cfg, workers=threads)
    _write_csv(out / "rate.csv", ["n", "rep", "excess_deconv", "excess_naive", "lambda", "seed"],
               [(r["n"], r["rep"], _fmt(r["excess_deconv"]), _fmt(r["excess_naive"]),
                 _fmt(r["lambda"]), r["seed"]) for r in fit.rows])
    summary = fit.summary()
    _write_json(out / "summary.json", summary)
    print(f"fitted slope {fit.slope:.3f} +- {fit.slope_stderr:.3f}; "
          f"theoretical exponent {fit.theoretical_exponent:.4f}")


def cmd_bias(cfg: Config, out: Path, **_):
    res = ex.run_bias_experiment(cfg)
    _write_csv(out / "bias.csv", ["lambda", "bias"],
               [(_fmt(l), _fmt(b)) for l, b in zip(res.lambdas, res.biases)])
    _write_json(out / "summary.json", res.summary())
    print(f"bias slope {res.slope:.3f}")


COMMANDS = {
    "kernel-dump": cmd_kernel_dump,
    "density": cmd_density,
    "cluster": cmd_cluster,
    "rate-experiment": cmd_rate,
    "bias-experiment": cmd_bias,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deconvkm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="TOML config (defaults used if omitted)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")
        sp.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else Config()
        if args.seed is not None:
            cfg.master_seed = args.seed
        args.out.mkdir(parents=True, exist_ok=True)
        _write_json(args.out / "effective_config.json", cfg.to_dict())
        COMMANDS[args.command](cfg, args.out, threads=args.threads)
    except ReplicationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.__cause__
        if isinstance(cause, OracleInconsistencyError):
            return EXIT_ORACLE
        return EXIT_NUMERICAL if isinstance(cause, NumericalError) else EXIT_CONFIG
    except OracleInconsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
