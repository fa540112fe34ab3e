"""Command-line front end.

    drbandit run <config.yaml>
    drbandit sweep <config.yaml> --horizons 4096,8192,16384
    drbandit verify {barrier,estimators,reductions,distributions,all}
    drbandit plot [--loglog] <csv...> -o <file.svg>

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
``DRBANDIT_OUTPUT_DIR`` overrides the output directory of a config.
"""
from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError
from .experiments import (
    RUN_HEADER,
    SUMMARY_HEADER,
    loglog_slope,
    mean_final_regret,
    read_csv,
    run_one,
    run_seeds,
    write_run_csv,
    write_summary_csv,
)
from .verification import SUITES, run_suite

OUTPUT_ENV = "DRBANDIT_OUTPUT_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("drbandit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def output_dir(cfg: ExperimentConfig, override: str | None = None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def _run_task(args):
    cfg_text, seed, T = args
    cfg = ExperimentConfig.from_yaml(cfg_text)
    return run_one(cfg, seed, T)


def _execute(cfg: ExperimentConfig, T: int, jobs: int):
    if jobs <= 1:
        return run_seeds(cfg, T)
    text = cfg.dump()
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, [(text, s, T) for s in cfg.seeds]))


# ----------------------------------------------------------------- commands


def cmd_run(config_path, out: str | None = None, jobs: int = 1) -> int:
    cfg = ExperimentConfig.load(config_path)
    dest = output_dir(cfg, out)
    results = _execute(cfg, cfg.horizon, jobs)
    for r in results:
        write_run_csv(r, dest / f"{cfg.name}_seed{r.seed}.csv")
    summary = write_summary_csv(results, dest / f"{cfg.name}_summary.csv")
    for r in results:
        print(f"seed {r.seed}: final cumulative alpha-regret {r.final_regret:.6g}, mean reward {r.mean_reward:.6g}")
    print(f"wrote {len(results)} run CSVs and {summary}")
    return EXIT_OK


def cmd_sweep(config_path, horizons, out: str | None = None, jobs: int = 1) -> int:
    cfg = ExperimentConfig.load(config_path)
    dest = output_dir(cfg, out)
    results = []
    for T in horizons:
        batch = _execute(cfg.with_horizon(T), T, jobs)
        for r in batch:
            write_run_csv(r, dest / f"{cfg.name}_T{T}_seed{r.seed}.csv")
        results.extend(batch)
    summary = write_summary_csv(results, dest / f"{cfg.name}_sweep_summary.csv")
    means = mean_final_regret(results)
    for T, reg in means.items():
        print(f"T={T}: mean final cumulative alpha-regret {reg:.6g}")
    if len(means) >= 2 and all(v > 0 for v in means.values()):
        print(f"log-log slope: {loglog_slope(list(means), list(means.values())):.4f}")
    print(f"wrote {summary}")
    return EXIT_OK


def cmd_verify(suite: str) -> int:
    if suite not in SUITES and suite != "all":
        print(f"error: unknown suite {suite!r}; choose from {', '.join(list(SUITES) + ['all'])}", file=sys.stderr)
        return EXIT_USAGE
    checks = run_suite(suite)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} properties passed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def cmd_plot(csv_paths, output, loglog: bool = False) -> int:
    if not csv_paths:
        print("error: no CSV files given", file=sys.stderr)
        return EXIT_USAGE
    tables = [(Path(p), *read_csv(p)) for p in csv_paths]

    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    notes = []
    slope = None
    runs = [(p, d) for p, h, d in tables if h == RUN_HEADER]
    sums = [(p, d) for p, h, d in tables if h == SUMMARY_HEADER]
    if runs and sums:
        print("error: cannot mix run CSVs and summary CSVs in one chart", file=sys.stderr)
        return EXIT_USAGE
    if runs:
        for p, d in runs:
            t = d[:, 0] + 1.0
            reg = d[:, 5]
            if loglog:
                keep = reg > 0
                ax.loglog(t[keep], reg[keep], lw=1, label=p.stem)
            else:
                ax.plot(t, reg, lw=1, label=p.stem)
            notes.append(f"{p.name}: T={d.shape[0]} final={float(reg[-1])!r}")
        ax.set_xlabel("round")
    else:
        rows = np.vstack([d for _, d in sums])
        Ts = np.unique(rows[:, 1])
        means = np.array([rows[rows[:, 1] == T, 2].mean() for T in Ts])
        for T, m in zip(Ts, means):
            notes.append(f"T={int(T)} mean_final={float(m)!r}")
        if loglog:
            if np.any(means <= 0):
                print("error: log-log mode needs positive mean regret at every horizon", file=sys.stderr)
                return EXIT_USAGE
            ax.loglog(Ts, means, "o-", label="mean over seeds")
            if Ts.size >= 2:
                slope = loglog_slope(Ts, means)
                fit = np.exp(np.polyval(np.polyfit(np.log(Ts), np.log(means), 1), np.log(Ts)))
                ax.loglog(Ts, fit, "--", lw=1, label=f"fit, slope {slope:.3f}")
        else:
            ax.plot(Ts, means, "o-", label="mean over seeds")
        ax.set_xlabel("horizon T")
    ax.set_ylabel("cumulative (1-1/e)-regret")
    ax.legend(fontsize=7)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    svg = buf.getvalue()
    if slope is not None:
        notes.append(f"loglog_slope={slope!r}")
        print(f"log-log slope: {slope:.4f}")
    comment = "<!-- drbandit data\n" + "\n".join(n.replace("--", "- -") for n in notes) + "\n-->\n"
    head, sep, rest = svg.partition("?>\n")
    svg = head + sep + comment + rest if sep else comment + svg
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------- main


def _horizons(text: str) -> list[int]:
    try:
        hs = [int(float(h)) for h in text.replace(" ", "").split(",") if h]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {text!r}") from None
    if not hs or any(h < 1 for h in hs):
        raise argparse.ArgumentTypeError("horizons must be positive integers")
    return hs


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="drbandit", description="Bandit DR-submodular maximization experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run every seed of a config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides config and environment)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    s = sub.add_parser("sweep", help="run a config at several horizons")
    s.add_argument("config")
    s.add_argument("--horizons", type=_horizons, required=True, help="comma-separated list of T")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("suite", help=f"one of {', '.join(list(SUITES) + ['all'])}")

    pl = sub.add_parser("plot", help="chart cumulative regret as SVG")
    pl.add_argument("csv", nargs="*")
    pl.add_argument("-o", "--output", required=True)
    pl.add_argument("--loglog", action="store_true")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.jobs)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.horizons, args.out, args.jobs)
        if args.command == "verify":
            return cmd_verify(args.suite)
        return cmd_plot(args.csv, args.output, args.loglog)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure: report and exit 1
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
