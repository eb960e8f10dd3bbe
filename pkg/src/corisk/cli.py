"""Command-line front end.

Subcommands: omega, estimate, mes, simulate bias, simulate outlier,
rolling, network, index.  Exit codes: 0 success, 1 usage or malformed
input, 2 solver/numeric failure, 3 insufficient data.  All floating-point
output is printed with 7 significant digits, and simulation commands are
byte-deterministic for a fixed seed regardless of --jobs.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .copulas import (
    ComonotoneCopula,
    CountermonotoneCopula,
    GumbelCopula,
    IndependenceCopula,
    fit_beta_copula,
    pseudo_observations,
)
from .exceptions import (
    InfiniteTailError,
    InsufficientDataError,
    PanelFormatError,
    SolverError,
)
from .measures import (
    RiskLevelPair,
    estimate_from_losses,
    hist_mes,
    solve_omega,
)
from .panel import (
    MIN_SAMPLE_FLOOR,
    RollingConfig,
    load_panel,
    network_grid,
    rolling_estimate,
    system_loss_index,
    weekly_aggregate,
)
from .simlab import (
    BiasExperimentConfig,
    OutlierSweepConfig,
    run_bias_experiment,
    run_outlier_sweep,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_DATA = 3

_SEED_ENV = "CORISK_SEED"


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if not math.isfinite(v) else f"{v:.7g}"
    return str(value)


def _json_value(value):
    if value is None:
        return None
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if not math.isfinite(v) else float(f"{v:.7g}")
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (dt.date, dt.datetime)):
        return str(value)[:10]
    return value


def _emit_rows(rows: list[dict], fmt: str, out: str | None) -> None:
    if fmt == "json":
        text = (
            json.dumps([{k: _json_value(v) for k, v in r.items()} for r in rows],
                       indent=2)
            + "\n"
        )
    else:
        if rows:
            cols = list(rows[0].keys())
            lines = [",".join(cols)]
            lines += [",".join(_fmt(r.get(c)) for c in cols) for r in rows]
        else:
            lines = []
        text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_pairs(path: str, delimiter: str | None) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.strip():
        raise ValueError(f"{path}: empty input")
    delim = delimiter if delimiter else ("," if "," in first else None)
    probe = first.replace(",", " ").split()
    skip = 0
    try:
        for field in probe:
            float(field)
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=delim, skiprows=skip, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least two numeric columns")
    return data[:, 0], data[:, 1]


def _resolve_seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(_SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"{_SEED_ENV} must be an integer, got {env!r}")
    return None


def _require_seed(args) -> int:
    seed = _resolve_seed(args)
    if seed is None:
        raise ValueError(
            f"simulation needs a seed: pass --seed or set {_SEED_ENV}"
        )
    return seed


def _levels(args, beta: float | None = None) -> RiskLevelPair:
    b = beta if beta is not None else getattr(args, "beta", 0.95)
    return RiskLevelPair(args.alpha, b)


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _build_copula(args):
    kind = args.copula
    if kind == "gumbel":
        if (args.theta is None) == (args.tau is None):
            raise ValueError("gumbel copula needs exactly one of --theta / --tau")
        if args.theta is not None:
            return GumbelCopula(args.theta)
        return GumbelCopula.from_kendall_tau(args.tau)
    if kind == "empirical":
        if args.pobs is None:
            raise ValueError("empirical copula needs --pobs FILE")
        x, y = _read_pairs(args.pobs, args.delimiter)
        return fit_beta_copula(pseudo_observations(x, y))
    return {
        "independence": IndependenceCopula,
        "comonotone": ComonotoneCopula,
        "countermonotone": CountermonotoneCopula,
    }[kind]()


def cmd_omega(args) -> int:
    model = _build_copula(args)
    levels = _levels(args)
    sol = solve_omega(levels, model)
    _emit_rows(
        [
            {
                "alpha": levels.alpha,
                "beta": levels.beta,
                "omega": sol.omega,
                "residual": sol.residual,
                "bracket_lo": sol.bracket[0],
                "bracket_hi": sol.bracket[1],
            }
        ],
        args.format,
        args.out,
    )
    return EXIT_OK


def _paired_losses(args) -> tuple[np.ndarray, np.ndarray]:
    if (args.input is None) == (args.panel is None):
        raise ValueError("pass exactly one of --input FILE or --panel FILE")
    if args.input is not None:
        return _read_pairs(args.input, args.delimiter)
    if not args.x or not args.y:
        raise ValueError("--panel needs --x and --y entity names")
    panel = load_panel(args.panel, delimiter=args.delimiter or ",")
    x_loss = panel.losses(args.x)
    y_loss = panel.losses(args.y)
    common = x_loss.index.intersection(y_loss.index)
    return x_loss.loc[common].to_numpy(), y_loss.loc[common].to_numpy()


def _check_floor(n: int, min_obs: int) -> None:
    if min_obs < MIN_SAMPLE_FLOOR:
        _warn(
            f"sample floor lowered to {min_obs} (< {MIN_SAMPLE_FLOOR}); "
            "tail estimates this short are noisy"
        )
    if n < min_obs:
        raise InsufficientDataError(
            f"{n} paired observations, below the floor of {min_obs}"
        )


def cmd_estimate(args) -> int:
    x, y = _paired_losses(args)
    _check_floor(x.size, args.min_obs)
    levels = _levels(args)
    est = estimate_from_losses(x, y, levels, include_mes=args.mes)
    row = {
        "alpha": levels.alpha,
        "beta": levels.beta,
        "n": x.size,
        "omega": est.omega,
        "covar": est.covar,
        "coes": est.coes,
        "dcov": est.dcov,
        "dcoes": est.dcoes,
        "ratio": est.ratio,
        "xi_hat": est.xi_hat,
    }
    if args.mes:
        row["mes"] = est.mes
    _emit_rows([row], args.format, args.out)
    return EXIT_OK


def cmd_mes(args) -> int:
    x, y = _paired_losses(args)
    _check_floor(x.size, args.min_obs)
    value = hist_mes(x, y, args.alpha)
    _emit_rows(
        [{"alpha": args.alpha, "beta": 0.0, "n": x.size, "mes": value}],
        args.format,
        args.out,
    )
    return EXIT_OK


def cmd_simulate_bias(args) -> int:
    seed = _require_seed(args)
    overrides = {}
    if args.m is not None:
        overrides["replications"] = args.m
    if args.sizes is not None:
        overrides["sizes"] = tuple(int(s) for s in args.sizes.split(","))
    if args.theta is not None:
        overrides["theta"] = args.theta
    builder = (
        BiasExperimentConfig.desk if args.profile == "desk" else BiasExperimentConfig.full
    )
    cfg = builder(seed=seed, **overrides)
    summary = run_bias_experiment(cfg, jobs=args.jobs)
    if summary.failures:
        _warn(f"{len(summary.failures)} replications failed and were dropped")
    _emit_rows(summary.frame.to_dict("records"), args.format, args.out)
    return EXIT_OK


def cmd_simulate_outlier(args) -> int:
    seed = _require_seed(args)
    overrides = {}
    if args.step is not None:
        overrides["step"] = args.step
    if args.n is not None:
        overrides["base_n"] = args.n
    if args.theta is not None:
        overrides["theta"] = args.theta
    builder = (
        OutlierSweepConfig.desk if args.profile == "desk" else OutlierSweepConfig.full
    )
    cfg = builder(seed=seed, **overrides)
    result = run_outlier_sweep(cfg, jobs=args.jobs)
    _emit_rows(result.frame.to_dict("records"), args.format, args.out)
    return EXIT_OK


def cmd_rolling(args) -> int:
    panel = load_panel(args.panel, delimiter=args.delimiter or ",")
    cfg = RollingConfig(
        y=args.y,
        x=tuple(args.x.split(",")),
        window=args.window,
        levels=_levels(args),
        start=dt.date.fromisoformat(args.start) if args.start else None,
        end=dt.date.fromisoformat(args.end) if args.end else None,
        min_obs=args.min_obs,
    )
    frame = rolling_estimate(cfg, panel, jobs=args.jobs, per_pair=args.per_pair)
    if frame.empty:
        raise InsufficientDataError(
            "no evaluation date had enough aligned history to estimate"
        )
    _emit_rows(frame.to_dict("records"), args.format, args.out)
    return EXIT_OK


def cmd_network(args) -> int:
    panel = load_panel(args.panel, delimiter=args.delimiter or ",")
    roster = tuple(args.roster.split(",")) if args.roster else None
    grid = network_grid(
        panel,
        _levels(args),
        roster,
        min_obs=args.min_obs,
        jobs=args.jobs,
    )
    if not np.isfinite(grid.matrices["omega"].to_numpy()).any():
        raise InsufficientDataError("no entity pair had enough aligned history")
    for path in grid.to_csv(args.out):
        print(path)
    if grid.skipped:
        _warn(f"{len(grid.skipped)} pairs skipped for insufficient history")
    return EXIT_OK


def cmd_index(args) -> int:
    panel = load_panel(args.panel, delimiter=args.delimiter or ",")
    exclude = tuple(args.exclude.split(",")) if args.exclude else ()
    series = system_loss_index(panel, exclude=exclude)
    if args.weekly:
        # weekly_aggregate compounds returns; the index is in loss space.
        series = -weekly_aggregate(-series)
    rows = [{"date": d, "loss": float(v)} for d, v in series.items()]
    _emit_rows(rows, args.format, args.out)
    return EXIT_OK


def _add_output_options(sp) -> None:
    sp.add_argument("--format", choices=("csv", "json"), default="csv",
                    help="output format (default csv)")
    sp.add_argument("--out", metavar="PATH", help="write output here instead of stdout")


def _add_level_options(sp, with_beta: bool = True) -> None:
    sp.add_argument("--alpha", type=float, default=0.95,
                    help="distress level of the conditioning loss (default 0.95)")
    if with_beta:
        sp.add_argument("--beta", type=float, default=0.95,
                        help="baseline level of the target loss (default 0.95)")


def _add_jobs_option(sp) -> None:
    sp.add_argument("--jobs", type=int, default=max(1, os.cpu_count() or 1),
                    help="worker processes (results do not depend on this)")


def _add_input_options(sp) -> None:
    sp.add_argument("--input", metavar="FILE",
                    help="two-column file of paired losses (x then y)")
    sp.add_argument("--panel", metavar="FILE", help="returns panel file")
    sp.add_argument("--x", help="conditioning entity (with --panel)")
    sp.add_argument("--y", help="target entity (with --panel)")
    sp.add_argument("--delimiter", help="field delimiter (default: sniffed)")
    sp.add_argument("--min-obs", type=int, default=MIN_SAMPLE_FLOOR,
                    help=f"sample floor (default {MIN_SAMPLE_FLOOR}; lowering warns)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="corisk",
        description="Conditional co-risk measures (CoVaR, CoES, MES) via copulas.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sp = sub.add_parser("omega", help="solve the crossing level omega for a copula")
    sp.add_argument("--copula", required=True,
                    choices=("gumbel", "independence", "comonotone",
                             "countermonotone", "empirical"))
    sp.add_argument("--theta", type=float, help="Gumbel parameter (>= 1)")
    sp.add_argument("--tau", type=float, help="Kendall tau instead of --theta")
    sp.add_argument("--pobs", metavar="FILE",
                    help="paired sample for the empirical copula")
    sp.add_argument("--delimiter", help="field delimiter for --pobs")
    _add_level_options(sp)
    _add_output_options(sp)
    sp.set_defaults(func=cmd_omega)

    sp = sub.add_parser("estimate", help="estimate the co-risk bundle from data")
    _add_input_options(sp)
    _add_level_options(sp)
    sp.add_argument("--mes", action="store_true",
                    help="append the historical MES at alpha")
    _add_output_options(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("mes", help="historical marginal expected shortfall")
    _add_input_options(sp)
    _add_level_options(sp, with_beta=False)
    _add_output_options(sp)
    sp.set_defaults(func=cmd_mes)

    sp = sub.add_parser("simulate", help="run a packaged simulation study")
    sim_sub = sp.add_subparsers(dest="experiment", required=True, metavar="experiment")

    bias = sim_sub.add_parser("bias", help="finite-sample bias experiment")
    bias.add_argument("--profile", choices=("desk", "full"), default="desk")
    bias.add_argument("--m", type=int, help="override replication count")
    bias.add_argument("--sizes", help="override sizes, comma separated")
    bias.add_argument("--theta", type=float, help="override the Gumbel parameter")
    bias.add_argument("--seed", type=int, help=f"RNG seed (or ${_SEED_ENV})")
    _add_jobs_option(bias)
    _add_output_options(bias)
    bias.set_defaults(func=cmd_simulate_bias)

    outlier = sim_sub.add_parser("outlier", help="planted-outlier sensitivity sweep")
    outlier.add_argument("--profile", choices=("desk", "full"), default="desk")
    outlier.add_argument("--step", type=float, help="override the quantile grid step")
    outlier.add_argument("--n", type=int, help="override the base sample size")
    outlier.add_argument("--theta", type=float, help="override the Gumbel parameter")
    outlier.add_argument("--seed", type=int, help=f"RNG seed (or ${_SEED_ENV})")
    _add_jobs_option(outlier)
    _add_output_options(outlier)
    outlier.set_defaults(func=cmd_simulate_outlier)

    sp = sub.add_parser("rolling", help="rolling-window co-risk estimates")
    sp.add_argument("--panel", required=True, metavar="FILE")
    sp.add_argument("--y", required=True, help="target entity")
    sp.add_argument("--x", required=True, help="conditioning entities, comma separated")
    sp.add_argument("--window", type=int, default=2000)
    sp.add_argument("--start", help="first evaluation date (ISO)")
    sp.add_argument("--end", help="last evaluation date (ISO)")
    sp.add_argument("--min-obs", type=int, default=MIN_SAMPLE_FLOOR)
    sp.add_argument("--per-pair", action="store_true",
                    help="emit one row per (date, entity) instead of date averages")
    sp.add_argument("--delimiter")
    _add_level_options(sp)
    _add_jobs_option(sp)
    _add_output_options(sp)
    sp.set_defaults(func=cmd_rolling)

    sp = sub.add_parser("network", help="ordered-pair co-risk matrices")
    sp.add_argument("--panel", required=True, metavar="FILE")
    sp.add_argument("--roster", help="entities to include, comma separated (default all)")
    sp.add_argument("--min-obs", type=int, default=MIN_SAMPLE_FLOOR)
    sp.add_argument("--out", required=True, metavar="PREFIX",
                    help="prefix for the emitted matrix CSVs")
    sp.add_argument("--delimiter")
    _add_level_options(sp)
    _add_jobs_option(sp)
    sp.set_defaults(func=cmd_network)

    sp = sub.add_parser("index", help="value-weighted system loss index")
    sp.add_argument("--panel", required=True, metavar="FILE")
    sp.add_argument("--exclude", help="entities to leave out, comma separated")
    sp.add_argument("--weekly", action="store_true",
                    help="compound to non-overlapping weekly losses")
    sp.add_argument("--delimiter")
    _add_output_options(sp)
    sp.set_defaults(func=cmd_index)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        with warnings.catch_warnings():
            # library warnings (sample-floor overrides etc.) belong on stderr
            # in the same format as the CLI's own notes
            warnings.simplefilter("always")
            warnings.showwarning = lambda message, *rest, **kw: _warn(str(message))
            return args.func(args)
    except (SolverError, InfiniteTailError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PanelFormatError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
