"""Benchmark ESQM_e against ESQM_b on random compressed sensing instances.

Usage::

    esqm-bench --model quad --q 144 --n 512 --k 32 --eps 1e-4 --trials 20
    esqm-bench --model lorentz --scale-i 2 --format markdown --out table.md

Set ``ESQM_BENCH_THREADS`` to change the default number of worker threads.
Exit status is 0 on success, 1 if any trial failed and 2 on a bad
configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cs import (
    compute_M,
    gen_cauchy_instance,
    gen_gaussian_instance,
    least_norm_from_qr,
    make_cs_problem,
    metrics,
    reference_scale,
    qr_of_transpose,
    spectral_norm_sq,
)
from .solver import SolverConfig, run

log = logging.getLogger(__name__)

ALGORITHMS = ("esqm_e", "esqm_b")
TIMING_COLUMNS = ("t_QR", "t_Adagb", "t_normA", "time")
COLUMNS = ("trial", "seed", "algorithm", *TIMING_COLUMNS,
           "iter", "RecErr", "Residual", "status")
THREADS_ENV = "ESQM_BENCH_THREADS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One benchmark configuration.

    ``theta0`` and ``d`` default per model: ``(1, 1)`` for ``quad`` and
    ``(1.1 gamma, gamma^2 / (150 ||A||^2))`` for ``lorentz``, the latter
    evaluated on each instance. ``restart_K`` defaults to 200 and 48.
    """

    model: str = "quad"
    q: int = 144
    n: int = 512
    k: int = 32
    mu: float = 0.95
    epsilon: float = 1e-4
    trials: int = 20
    seed: int = 0
    algorithms: tuple = ALGORITHMS
    gamma: float = 0.08
    restart_K: Optional[int] = None
    theta0: Optional[float] = None
    d: Optional[float] = None
    max_iters: int = 50_000
    threads: int = 1

    def __post_init__(self):
        if self.model not in ("quad", "lorentz"):
            raise ConfigError(f"unknown model {self.model!r}")
        if not (0 < self.k <= self.n and 0 < self.q <= self.n):
            raise ConfigError("need 0 < k <= n and 0 < q <= n")
        if self.trials < 1 or self.threads < 1:
            raise ConfigError("trials and threads must be positive")
        if not 0.0 <= self.mu < 1.0:
            raise ConfigError("mu must lie in [0, 1)")
        if not self.epsilon > 0 or not self.gamma > 0:
            raise ConfigError("epsilon and gamma must be positive")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad or not self.algorithms:
            raise ConfigError(f"unknown algorithms {sorted(bad)}")

    @property
    def K(self):
        if self.restart_K is not None:
            return self.restart_K
        return 200 if self.model == "quad" else 48


def trial_seed(base, trial):
    """Seed of one trial, derived from the base seed and the trial index."""
    return int(np.random.SeedSequence([base, trial]).generate_state(1)[0])


def _run_trial(config, trial):
    seed = trial_seed(config.seed, trial)
    if config.model == "quad":
        inst = gen_gaussian_instance(config.q, config.n, config.k, seed,
                                     mu=config.mu)
    else:
        inst = gen_cauchy_instance(config.q, config.n, config.k, seed,
                                   gamma=config.gamma, mu=config.mu)
    t0 = time.perf_counter()
    Q, R = qr_of_transpose(inst.A)
    t_qr = time.perf_counter() - t0
    t0 = time.perf_counter()
    adagb = least_norm_from_qr(Q, R, inst.b)
    t_adagb = time.perf_counter() - t0
    t0 = time.perf_counter()
    norm_sq = spectral_norm_sq(inst.A)
    t_norm = time.perf_counter() - t0

    problem = make_cs_problem(inst, norm_sq=norm_sq, adagb=adagb)
    if config.model == "quad":
        theta0, d = 1.0, 1.0
    else:
        g2 = inst.gamma ** 2
        theta0, d = 1.1 * inst.gamma, g2 / (150.0 * norm_sq)
    theta0 = config.theta0 if config.theta0 is not None else theta0
    d = config.d if config.d is not None else d

    rows = []
    for algo in config.algorithms:
        row = dict(trial=trial, seed=seed, algorithm=algo, t_QR=t_qr,
                   t_Adagb=t_adagb, t_normA=t_norm)
        cfg = SolverConfig(theta0=theta0, d=d, epsilon=config.epsilon,
                           restart_period_K=config.K,
                           max_iters=config.max_iters,
                           extrapolate=(algo == "esqm_e"))
        try:
            t0 = time.perf_counter()
            res = run(problem, cfg)
            row["time"] = time.perf_counter() - t0
            rec, resid = metrics(res.x_star, inst)
            row.update(iter=res.iterations, RecErr=rec, Residual=resid,
                       status=("ok" if res.termination == "tolerance_met"
                               else res.termination))
        except Exception as exc:  # recorded per trial; the run goes on
            log.warning("trial %d %s failed: %s", trial, algo, exc)
            row.update(time=np.nan, iter=-1, RecErr=np.nan, Residual=np.nan,
                       status=f"error: {type(exc).__name__}")
        rows.append(row)
    return rows


def run_benchmark(config):
    """Run every trial of ``config`` and return per-trial plus AVG rows."""
    trials = range(config.trials)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(pool.map(lambda t: _run_trial(config, t), trials))
    else:
        chunks = [_run_trial(config, t) for t in trials]
    rows = [r for chunk in chunks for r in chunk]
    rows.sort(key=lambda r: (r["trial"], config.algorithms.index(r["algorithm"])))
    return rows + average_rows(rows, config.algorithms)


def average_rows(rows, algorithms):
    out = []
    for algo in algorithms:
        good = [r for r in rows if r["algorithm"] == algo and r["status"] == "ok"]
        if not good:
            continue
        avg = dict(trial="AVG", seed="", algorithm=algo, status="ok")
        for col in (*TIMING_COLUMNS, "iter", "RecErr", "Residual"):
            avg[col] = float(np.mean([r[col] for r in good]))
        out.append(avg)
    return out


def _fmt(col, val):
    if isinstance(val, str):
        return val
    if col in ("trial", "seed"):
        return str(val)
    if col == "iter" and float(val).is_integer():
        return str(int(val))
    if col == "Residual":
        return f"{val:.5e}"
    return f"{val:.6g}"


def to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(c, r[c]) for c in COLUMNS])
    return buf.getvalue()


_LABELS = {"t_QR": "t_QR", "t_Adagb": "t_A†b", "t_normA": "t_‖A‖"}
_NAMES = {"esqm_e": "ESQM_e", "esqm_b": "ESQM_b"}


def to_markdown(rows):
    """Method-by-metric table of the AVG rows."""
    avgs = [r for r in rows if r["trial"] == "AVG"]
    lines = ["| | Method | mean |", "|---|---|---|"]
    if avgs:
        first = avgs[0]
        for col in ("t_QR", "t_Adagb", "t_normA"):
            lines.append(f"| CPU time (sec) | {_LABELS[col]} | "
                         f"{_fmt(col, first[col])} |")
    for col, label in (("time", "CPU time (sec)"), ("iter", "Iter"),
                       ("RecErr", "RecErr"), ("Residual", "Residual")):
        for r in avgs:
            lines.append(f"| {label} | {_NAMES[r['algorithm']]} | "
                         f"{_fmt(col, r[col])} |")
    return "\n".join(lines) + "\n"


def emit(rows, fmt="csv", path="-"):
    """Write ``rows`` as CSV or markdown to ``path`` (``-`` for stdout)."""
    text = to_csv(rows) if fmt == "csv" else to_markdown(rows)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def build_parser():
    p = argparse.ArgumentParser(prog="esqm-bench", description=__doc__.split("\n")[0])
    p.add_argument("--model", choices=("quad", "lorentz"), default="quad")
    p.add_argument("--q", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--scale-i", type=int, dest="scale_i",
                   help="use the published sizes (720i, 2560i, 160i or 80i)")
    p.add_argument("--mu", type=float, default=0.95)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algos", default="esqm_e,esqm_b")
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--theta0", type=float, default=None)
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--gamma", type=float, default=0.08)
    p.add_argument("--max-iters", type=int, default=50_000, dest="max_iters")
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get(THREADS_ENV, os.cpu_count() or 1)))
    return p


def config_from_args(args):
    explicit = (args.q, args.n, args.k)
    if args.scale_i is not None:
        if any(v is not None for v in explicit):
            raise ConfigError("give either --scale-i or --q/--n/--k")
        q, n, k = reference_scale(args.scale_i, args.model)
    elif all(v is not None for v in explicit):
        q, n, k = explicit
    elif any(v is not None for v in explicit):
        raise ConfigError("--q, --n and --k must be given together")
    else:
        q, n, k = 144, 512, 32 if args.model == "quad" else 16
    return RunConfig(model=args.model, q=q, n=n, k=k, mu=args.mu,
                     epsilon=args.eps, trials=args.trials, seed=args.seed,
                     algorithms=tuple(a.strip() for a in args.algos.split(",")
                                      if a.strip()),
                     gamma=args.gamma, restart_K=args.K, theta0=args.theta0,
                     d=args.d, max_iters=args.max_iters, threads=args.threads)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        print(f"esqm-bench: configuration error: {exc}", file=sys.stderr)
        return 2
    rows = run_benchmark(config)
    try:
        emit(rows, args.format, args.out)
    except OSError as exc:
        print(f"esqm-bench: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    failed = [r for r in rows if r["trial"] != "AVG" and r["status"] != "ok"]
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
