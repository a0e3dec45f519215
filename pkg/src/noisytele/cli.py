"""Command-line experiment runner.

Every command writes CSV (to ``--out`` or stdout) with a header row and a
trailing ``# config: {...}`` line. Exit codes: 0 success, 1 failed check,
2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .checks import SuiteConfig, run_suite
from .core import GAMMA_BV, GAMMA_C, Channel, Protocol, analytic_F, is_complete, optimal_protocol
from .errors import ConfigError, DimensionError
from .montecarlo import DeteriorationRow, MCConfig, NoiseModel, analytic_FD, deterioration_experiment, mc_estimate_FD
from .stabilizer import DEConfig, recover_experiment, stabilization_repeats

NAMED_GAMMAS = {"c": GAMMA_C, "bv": GAMMA_BV, "one": 1.0}
RUN_HEADER = ("run_id", "iteration", "best_F", "best_D", "shock_flag", "gamma", "seed")
SHOCK_PERIODS = (10, 50)


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a command's output; thread count is deliberately absent."""

    command: str
    d: int = 2
    gamma: float | None = None
    eta: float | None = None
    eta_grid: tuple[float, ...] | None = None
    n_pop: int = 100
    weight: float = 0.5
    crossover: float = 0.1
    iterations: int = 1000
    trials: int = 1000
    repeats: int | None = None
    cycles: int = 20
    burn_in: int = 2
    mc_samples: int = 100_000
    shock_period: int = 50
    seed: int = 0
    protocol: str | None = None
    tol_scale: float = 1.0
    output_path: str | None = None

    def to_json(self) -> str:
        # the destination does not affect the content
        fields = asdict(self)
        del fields["output_path"]
        return json.dumps(fields, sort_keys=True)

    def de_config(self) -> DEConfig:
        return DEConfig(self.n_pop, self.weight, self.crossover, self.iterations, self.seed)


def parse_eta_grid(text: str) -> tuple[float, ...]:
    """``a:b:n`` -> ``n`` evenly spaced values from ``a`` to ``b`` inclusive."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError as exc:
        raise ConfigError(f"--eta-grid expects a:b:n, got {text!r}") from exc
    if n < 1:
        raise ConfigError("--eta-grid needs at least one point")
    return tuple(float(x) for x in np.linspace(a, b, n))


def _fmt(x: object) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(header: Sequence[str], rows: Sequence[Sequence], cfg: RunConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    buf.write(f"# config: {cfg.to_json()}\n")
    return buf.getvalue()


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.output_path:
        with open(cfg.output_path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_verify(cfg: RunConfig, workers: int = 1) -> tuple[int, str]:
    suite = SuiteConfig(seed=cfg.seed, mc_samples=cfg.mc_samples, tol_scale=cfg.tol_scale, workers=workers)
    results = run_suite(suite)
    text = write_csv(("check_name", "status", "value", "bound"), [r.as_row() for r in results], cfg)
    return (0 if all(r.passed for r in results) else 1), text


def cmd_deteriorate(cfg: RunConfig, workers: int = 1) -> tuple[int, str]:
    if cfg.eta_grid is None and cfg.eta is None:
        raise ConfigError("deteriorate needs --eta or --eta-grid")
    grid = cfg.eta_grid if cfg.eta_grid is not None else (cfg.eta,)
    for eta in grid:
        NoiseModel(eta)
    mc = MCConfig(cfg.mc_samples, cfg.seed) if cfg.d > 2 else None
    rows = deterioration_experiment(
        Channel(cfg.d, _gamma_or(cfg, 1.0)), grid, cfg.trials, seed=cfg.seed, cfg=mc, workers=workers
    )
    return 0, write_csv(DeteriorationRow.HEADER, [r.as_row() for r in rows], cfg)


def _gamma_or(cfg: RunConfig, default: float) -> float:
    return default if cfg.gamma is None else cfg.gamma


def cmd_recover(cfg: RunConfig, workers: int = 1) -> tuple[int, str]:
    gammas = (GAMMA_C, GAMMA_BV, 1.0) if cfg.gamma is None else (cfg.gamma,)
    repeats = 50 if cfg.repeats is None else cfg.repeats
    mc = MCConfig(cfg.mc_samples, cfg.seed) if cfg.d > 2 else None
    results = recover_experiment(gammas, cfg.de_config(), repeats, d=cfg.d, workers=workers, mc=mc)
    rows = []
    for k, res in enumerate(results):
        for r in range(repeats):
            run_id = k * repeats + r
            for it, (F, D) in enumerate(zip(res.best_F[r], res.best_D[r])):
                rows.append((run_id, it, F, D, 0, res.gamma, cfg.seed))
    return 0, write_csv(RUN_HEADER, rows, cfg)


def cmd_stabilize(cfg: RunConfig, workers: int = 1) -> tuple[int, str]:
    if cfg.shock_period not in SHOCK_PERIODS:
        raise ConfigError(f"--shock-period must be one of {SHOCK_PERIODS}, got {cfg.shock_period}")
    repeats = 20 if cfg.repeats is None else cfg.repeats
    eta = 1.0 if cfg.eta is None else cfg.eta
    gamma = _gamma_or(cfg, 1.0)
    traces = stabilization_repeats(
        Channel(cfg.d, gamma),
        cfg.de_config(),
        cfg.shock_period,
        NoiseModel(eta),
        cfg.cycles,
        repeats,
        burn_in=cfg.burn_in,
        workers=workers,
    )
    rows = []
    for run_id, tr in enumerate(traces):
        for it, F, D, s in zip(tr.iteration, tr.best_F, tr.best_D, tr.shock):
            rows.append((run_id, it, F, D, int(s), gamma, cfg.seed))
    return 0, write_csv(RUN_HEADER, rows, cfg)


def cmd_evaluate(cfg: RunConfig, workers: int = 1) -> tuple[int, str]:
    """Replay a saved protocol (or the optimal one) and report F and D."""
    proto = Protocol.load(cfg.protocol) if cfg.protocol else optimal_protocol(cfg.d)
    ch = Channel(proto.dim, _gamma_or(cfg, 1.0))
    if proto.dim == 2:
        rep = analytic_FD(proto, ch)
        mc = mc_estimate_FD(proto, ch, MCConfig(cfg.mc_samples, cfg.seed))
        rows = [("analytic", rep.F, rep.D, 0.0, 0.0), ("monte_carlo", mc.F, mc.D, mc.stderr_F, mc.stderr_D)]
    else:
        mc = mc_estimate_FD(proto, ch, MCConfig(cfg.mc_samples, cfg.seed))
        rows = [
            ("analytic", analytic_F(proto, ch), math.nan, 0.0, 0.0),
            ("monte_carlo", mc.F, mc.D, mc.stderr_F, mc.stderr_D),
        ]
    complete = int(is_complete(proto))
    rows = [(proto.dim, ch.gamma, *r, complete) for r in rows]
    return 0, write_csv(("d", "gamma", "method", "F", "D", "stderr_F", "stderr_D", "complete"), rows, cfg)


def cmd_export(cfg: RunConfig, workers: int = 1) -> tuple[int, str]:
    """Write the optimal protocol in replay format."""
    text = optimal_protocol(cfg.d).to_text()
    return 0, text


COMMANDS = {
    "verify": cmd_verify,
    "deteriorate": cmd_deteriorate,
    "recover": cmd_recover,
    "stabilize": cmd_stabilize,
    "evaluate": cmd_evaluate,
    "export-optimal": cmd_export,
}

HELP = {
    "verify": "run the invariant and bound suites",
    "deteriorate": "perturb the optimal protocol over a noise grid",
    "recover": "evolve controls from random populations",
    "stabilize": "evolve controls under periodic shocks",
    "evaluate": "report F and D of a saved or optimal protocol",
    "export-optimal": "print the optimal protocol in replay format",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--d", type=int, default=2, help="qudit dimension")
    g = common.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float, help="channel strength in [0, 1]")
    g.add_argument("--gamma-name", choices=sorted(NAMED_GAMMAS), help="c = 1/3, bv = 1/sqrt(2), one = 1")
    e = common.add_mutually_exclusive_group()
    e.add_argument("--eta", type=float, help="control noise strength in [0, 1]")
    e.add_argument("--eta-grid", help="a:b:n evenly spaced noise strengths")
    common.add_argument("--npop", type=int, default=100)
    common.add_argument("--weight", type=float, default=0.5, help="differential weight")
    common.add_argument("--crossover", type=float, default=0.1, help="crossover rate")
    common.add_argument("--iters", type=int, default=1000, help="generations")
    common.add_argument("--trials", type=int, default=None, help="perturbation trials per noise level")
    common.add_argument("--repeats", type=int, default=None, help="independent evolutions")
    common.add_argument("--cycles", type=int, default=20, help="counted shock cycles")
    common.add_argument("--burn-in", type=int, default=2, help="uncounted shock cycles")
    common.add_argument("--mc-samples", type=int, default=100_000)
    common.add_argument("--shock-period", type=int, default=50)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--paper-scale", action="store_true", help="10^4 trials/repeats instead of desk scale")
    common.add_argument("--protocol", help="protocol file to replay (evaluate)")
    common.add_argument("--tol-scale", type=float, default=1.0, help="multiply verify tolerances")

    parser = argparse.ArgumentParser(prog="noisytele", description="Noisy qudit teleportation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    gamma = NAMED_GAMMAS[ns.gamma_name] if ns.gamma_name else ns.gamma
    if gamma is not None and not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
    if ns.eta is not None and not 0.0 <= ns.eta <= 1.0:
        raise ConfigError(f"eta must lie in [0, 1], got {ns.eta}")
    if ns.d < 2:
        raise ConfigError(f"--d must be at least 2, got {ns.d}")
    for name in ("npop", "iters", "mc_samples", "cycles", "burn_in", "threads"):
        if getattr(ns, name) < (1 if name in ("threads",) else 0):
            raise ConfigError(f"--{name.replace('_', '-')} out of range")
    trials = ns.trials if ns.trials is not None else (10_000 if ns.paper_scale else 1000)
    repeats = ns.repeats if ns.repeats is not None else (10_000 if ns.paper_scale else None)
    cfg = RunConfig(
        command=ns.command,
        d=ns.d,
        gamma=gamma,
        eta=ns.eta,
        eta_grid=parse_eta_grid(ns.eta_grid) if ns.eta_grid else None,
        n_pop=ns.npop,
        weight=ns.weight,
        crossover=ns.crossover,
        iterations=ns.iters,
        trials=trials,
        repeats=repeats,
        cycles=ns.cycles,
        burn_in=ns.burn_in,
        mc_samples=ns.mc_samples,
        shock_period=ns.shock_period,
        seed=ns.seed,
        protocol=ns.protocol,
        tol_scale=ns.tol_scale,
        output_path=ns.out,
    )
    cfg.de_config()
    if cfg.eta_grid is not None:
        for eta in cfg.eta_grid:
            NoiseModel(eta)
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = config_from_args(ns)
        code, text = COMMANDS[cfg.command](cfg, workers=ns.threads)
    except (ConfigError, DimensionError, ValueError, OSError) as exc:
        print(f"noisytele: error: {exc}", file=sys.stderr)
        return 2
    _emit(text, cfg)
    return code
