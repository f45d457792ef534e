"""Command-line entry point: ``dmnls <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 1 a run or validation check failed, 2 bad config,
130 interrupted.  Every run that gets past config validation leaves a
``manifest.json`` in the output directory, which can be fed back through
``--config`` to reproduce the run.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    CheckpointDatum,
    ConfigError,
    GaussianDatum,
    GroundStateDatum,
    PseudoConformalDatum,
    RunConfig,
    load_config,
)
from .groundstate import GroundStateError, exact_q_1d, gn_ratio, petviashvili
from .lab import (
    HorizonError,
    empirical_slope,
    epsilon_sweep,
    load_checkpoint,
    save_checkpoint,
    splitting_order_study,
    threshold_datum,
    threshold_study,
    write_csv,
    write_manifest,
    zero_mean_validation,
)
from .linear import kernel_solution, propagate_linear
from .reference import BlowupProfile, gaussian_linear, pseudoconformal_field
from .solver import DIAGNOSTICS_COLUMNS, evolve
from .spectral import Field, l2_norm

__all__ = ["run", "main", "RunFailure"]

log = logging.getLogger("dmnls")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INTERRUPTED = 0, 1, 2, 130


class RunFailure(RuntimeError):
    """The computation finished but did not meet its contract (exit code 1)."""


@dataclass
class Context:
    config: RunConfig
    out: Path
    seed: int
    threads: int
    # rows completed so far, flushed on interrupt: (filename, header, rows)
    partial: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def checkpoints(self) -> Path:
        path = self.out / "checkpoints"
        path.mkdir(parents=True, exist_ok=True)
        return path


def _relative(a: Field, b: Field) -> float:
    diff = Field(a.grid, a.physical().values - b.physical().values)
    return l2_norm(diff) / l2_norm(b)


def _ground_state(cfg: RunConfig):
    gs = cfg.groundstate
    try:
        return petviashvili(cfg.build_grid(), tol=gs.tol, max_iter=gs.max_iter,
                            seed_amplitude=gs.seed_amplitude, seed_width=gs.seed_width)
    except GroundStateError as exc:
        raise RunFailure(str(exc)) from None


def _require_critical(cfg: RunConfig, what: str):
    if not cfg.critical:
        d = cfg.model.d
        raise ConfigError(f"model.p: {what} needs the mass-critical exponent p={1 + 4 / d:g} "
                          f"for d={d}, got {cfg.model.p:g}")


def initial_datum(cfg: RunConfig) -> Field:
    grid = cfg.build_grid()
    datum = cfg.initial_datum
    if isinstance(datum, GaussianDatum):
        r2 = grid.radius_sq
        phase = -datum.chirp * r2 / 4 + datum.velocity * grid.mesh()[0]
        values = datum.amplitude * np.exp(-r2 / (2 * datum.width ** 2)) * np.exp(1j * phase)
        return Field(grid, values)
    if isinstance(datum, GroundStateDatum):
        _require_critical(cfg, "a ground-state datum")
        return threshold_datum(_ground_state(cfg), grid, cfg.map.gamma_plus, datum.mass_ratio,
                               datum.chirp)
    if isinstance(datum, PseudoConformalDatum):
        _require_critical(cfg, "a pseudo-conformal datum")
        profile = BlowupProfile(datum.a, cfg.map.gamma_plus, _ground_state(cfg))
        return pseudoconformal_field(profile, 0.0, grid)
    if isinstance(datum, CheckpointDatum):
        try:
            f = load_checkpoint(datum.path).physical()
        except (OSError, ValueError) as exc:
            raise ConfigError(f"initial_datum.path: {exc}") from None
        if f.grid != grid:
            raise ConfigError(f"initial_datum.path: checkpoint grid {f.grid} differs from "
                              f"the configured grid {grid}")
        return f
    raise ConfigError(f"initial_datum.kind: unsupported {datum!r}")


def _need(value, key: str):
    if value is None:
        raise ConfigError(f"experiment.{key}: required by this subcommand")
    return value


def _ordered_map(ctx: Context, func, items, name, header, to_row):
    """Run ``func`` over ``items`` in order, recording finished rows for interrupts."""
    rows = []
    ctx.partial[name] = (header, rows)
    results = []
    if ctx.threads <= 1:
        for item in items:
            res = func(item)
            results.append(res)
            rows.append(to_row(res))
    else:
        with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
            for res in pool.map(func, items):
                results.append(res)
                rows.append(to_row(res))
    write_csv(ctx.out / name, header, rows)
    del ctx.partial[name]
    return results


# subcommands -------------------------------------------------------------------

def cmd_simulate(ctx: Context) -> int:
    cfg = ctx.config
    exp = cfg.experiment
    t0, t1 = exp.t0, _need(exp.horizon, "horizon")
    phi = initial_datum(cfg)
    save_checkpoint(phi, ctx.checkpoints / "initial.ckpt", time=t0)
    u, records, report = evolve(phi, cfg.map.build(), t0, t1, cfg.build_solver())
    write_csv(ctx.out / "diagnostics.csv", DIAGNOSTICS_COLUMNS, [r.as_row() for r in records])
    last = records[-1]
    blew_up = report is not None
    write_csv(ctx.out / "results.csv",
              ("t_final", "mass", "grad_sq", "linf", "blew_up", "detection_time"),
              [(last.time, last.mass, last.grad_sq, last.linf, blew_up,
                report.detection_time if blew_up else math.nan)])
    if blew_up:
        log.warning("blow-up detected at t=%.6g (%s); run stopped early",
                    report.detection_time, report.trigger.value)
        ctx.extra["blowup"] = {"time": report.detection_time, "trigger": report.trigger.value}
    save_checkpoint(u, ctx.checkpoints / "final.ckpt", time=last.time)
    return EXIT_OK


def cmd_sweep(ctx: Context) -> int:
    cfg = ctx.config
    exp = cfg.experiment
    epsilons = _need(exp.epsilons, "epsilons")
    horizon = _need(exp.horizon, "horizon")
    phi = initial_datum(cfg)
    solver = cfg.build_solver()
    template = cfg.map.build()
    if exp.zero_mean:
        if abs(template.mean) > 1e-12 * max(template.gamma_plus, template.gamma_minus):
            raise ConfigError(f"experiment.zero_mean: map has mean {template.mean:g}; "
                              "set gamma_plus * t_plus = gamma_minus * (1 - t_plus)")

        def one(eps):
            return zero_mean_validation(phi, template, [eps], horizon, solver, t0=exp.t0,
                                        sample_count=exp.sample_count)[0]

        results = _ordered_map(ctx, one, epsilons, "results.csv",
                               ("epsilon", "error_h2", "defect"),
                               lambda r: (r.epsilon, r.error_h2, r.defect))
        ok = all(b.defect < a.defect for a, b in zip(results, results[1:]))
        if not ok:
            raise RunFailure("non-dispersion defect does not decrease along the epsilons")
        return EXIT_OK

    def one(eps):
        return epsilon_sweep(phi, template, [eps], exp.t0, horizon, solver,
                             sample_count=exp.sample_count, sigma=exp.sigma)[0]

    try:
        results = _ordered_map(ctx, one, epsilons, "results.csv",
                               ("epsilon", "error_h2", "error_l2"),
                               lambda r: (r.epsilon, r.error_h2, r.error_l2))
    except HorizonError as exc:
        raise RunFailure(f"{exc}. Reduce experiment.horizon.") from None
    if len(results) > 1:
        ctx.extra["empirical_slope"] = empirical_slope(results)
    return EXIT_OK


def cmd_groundstate(ctx: Context) -> int:
    cfg = ctx.config
    _require_critical(cfg, "the ground state")
    gs = _ground_state(cfg)
    save_checkpoint(gs.q_field, ctx.checkpoints / "ground_state.ckpt")
    summary = gs.summary()
    (ctx.out / "groundstate.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    write_csv(ctx.out / "results.csv",
              ("d", "p", "mass", "mass_squared", "residual", "iterations"),
              [(gs.dimension, gs.p, gs.mass, gs.mass_squared, gs.residual_l2, gs.iterations)])
    return EXIT_OK


def cmd_blowup(ctx: Context) -> int:
    cfg = ctx.config
    exp = cfg.experiment
    _require_critical(cfg, "the threshold study")
    ratios = _need(exp.mass_ratios, "mass_ratios")
    periods = _need(exp.periods, "periods")
    gs = _ground_state(cfg)
    grid = cfg.build_grid()
    dmap = cfg.map.build()
    solver = cfg.build_solver()

    def one(ratio):
        return threshold_study([ratio], dmap, periods, solver, gs, grid, chirp=exp.chirp,
                               t0=exp.t0, min_resolved_spacings=exp.min_resolved_spacings)[0]

    results = _ordered_map(ctx, one, ratios, "results.csv",
                           ("mass_ratio", "blew_up", "detection_time", "inconclusive",
                            "max_growth"),
                           lambda r: (r.mass_ratio, r.blew_up,
                                      math.nan if r.detection_time is None else r.detection_time,
                                      r.inconclusive, r.max_growth))
    bad = [r.mass_ratio for r in results if r.blew_up and r.mass_ratio <= 0.95]
    if bad:
        raise RunFailure(f"sub-threshold data blew up at mass ratios {bad}")
    return EXIT_OK


@dataclass
class Check:
    name: str
    value: float
    low: float
    high: float

    @property
    def passed(self) -> bool:
        return self.low <= self.value <= self.high


def validation_checks(cfg: RunConfig, seed: int) -> list[Check]:
    """Oracle suite on the configured grid."""
    grid = cfg.build_grid()
    d = grid.dimension
    checks = []
    gauss = gaussian_linear(1.0, 0.0, grid)
    for Gamma in (-1.0, -0.3, -0.1, 0.1, 0.3, 1.0):
        exact = gaussian_linear(1.0, Gamma, grid)
        checks.append(Check(f"gaussian_closed_form[Gamma={Gamma:g}]",
                            _relative(propagate_linear(gauss, Gamma), exact), 0.0, 1e-10))
        try:
            kern = kernel_solution(gauss, Gamma)
        except ValueError as exc:
            log.info("kernel check skipped: %s", exc)
            continue
        checks.append(Check(f"kernel_vs_fourier[Gamma={Gamma:g}]",
                            _relative(kern, propagate_linear(gauss, Gamma)), 0.0, 1e-6))
    if cfg.critical:
        gs = _ground_state(cfg)
        checks.append(Check("ground_state_residual", gs.residual_l2, 0.0, 1e-8))
        if d == 1:
            exact = math.sqrt(3) * math.pi / 2
            checks.append(Check("ground_state_mass_sq_error", abs(gs.mass_squared - exact),
                                0.0, 1e-6))
            q_exact = Field(grid, exact_q_1d(grid.x))
            checks.append(Check("ground_state_profile_error", _relative(gs.q_field, q_exact),
                                0.0, 1e-6))
        checks.append(Check("gn_ratio_of_Q", gn_ratio(gs.q_field, gs.mass), 0.999, 1.001))
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(20):
            f = _random_field(grid, rng)
            worst = max(worst, gn_ratio(f, gs.mass))
        checks.append(Check("gn_ratio_random_max", worst, 0.0, 1.0))
    else:
        log.info("model.p is not mass-critical; ground-state checks skipped")
    solver = cfg.build_solver()
    levels = cfg.experiment.order_levels
    dts = [solver.dt_max / 2 ** k for k in range(levels)]
    horizon = cfg.experiment.horizon or cfg.map.epsilon
    rng = np.random.default_rng(seed + 1)
    phi = _random_field(grid, rng, scale=0.5)
    order = splitting_order_study(phi, cfg.map.build(), dts, cfg.experiment.t0 + horizon, solver,
                                  t0=cfg.experiment.t0)
    if order.exact:
        checks.append(Check("splitting_order_exact", 0.0, 0.0, 0.0))
    else:
        checks.append(Check("splitting_order", order.order, 1.8, 2.2))
    return checks


def _random_field(grid, rng, modes: int = 6, scale: float = 1.0) -> Field:
    coeffs = np.zeros(grid.shape, dtype=complex)
    keep = np.flatnonzero(np.abs(grid.mode_index) <= modes)
    sel = np.ix_(*([keep] * grid.dimension))
    shape = coeffs[sel].shape
    coeffs[sel] = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    u = np.fft.ifftn(coeffs, norm="ortho") * np.exp(-grid.radius_sq / 8)
    u *= scale / np.max(np.abs(u))
    return Field(grid, u)


def cmd_validate(ctx: Context) -> int:
    checks = validation_checks(ctx.config, ctx.seed)
    write_csv(ctx.out / "results.csv", ("check", "value", "low", "high", "passed"),
              [(c.name, c.value, c.low, c.high, c.passed) for c in checks])
    failed = [c for c in checks if not c.passed]
    for c in checks:
        log.info("%-40s %.3e in [%g, %g]: %s", c.name, c.value, c.low, c.high,
                 "ok" if c.passed else "FAIL")
    if failed:
        raise RunFailure("validation failed: " + ", ".join(c.name for c in failed))
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "single evolution run"),
    "sweep": (cmd_sweep, "period-scale sweep against the averaged equation"),
    "groundstate": (cmd_groundstate, "ground state by Petviashvili iteration"),
    "blowup": (cmd_blowup, "blow-up threshold study"),
    "validate": (cmd_validate, "oracle suite"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmnls", description="Dispersion-managed NLS experiments driven by a config file.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path,
                       help="YAML config, or a manifest.json from an earlier run")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="parallel runs for sweeps")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed for randomized checks (default 0, or the manifest's)")
        p.add_argument("--quiet", action="store_true", help="only warnings and errors")
    return parser


def _flush_partial(ctx: Context):
    for name, (header, rows) in ctx.partial.items():
        write_csv(ctx.out / name, header, rows)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config, meta = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if meta.get("command") not in (None, args.command):
        log.warning("manifest was written by '%s', running '%s'", meta["command"], args.command)
    seed = args.seed if args.seed is not None else int(meta.get("seed", 0))
    args.out.mkdir(parents=True, exist_ok=True)
    ctx = Context(config, args.out, seed, args.threads)
    handler = COMMANDS[args.command][0]
    config_dict = config.model_dump(mode="json")
    start = time.perf_counter()

    def manifest(status: str, **extra):
        write_manifest(args.out / "manifest.json", config_dict, time.perf_counter() - start,
                       status, command=args.command, seed=seed, threads=args.threads,
                       version=__version__, **ctx.extra, **extra)

    try:
        code = handler(ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        manifest("failed", error=str(exc))
        return EXIT_FAILED
    except KeyboardInterrupt:
        _flush_partial(ctx)
        manifest("aborted")
        print("interrupted; partial results and an aborted manifest were written",
              file=sys.stderr)
        return EXIT_INTERRUPTED
    manifest("completed")
    return code


def main() -> None:
    sys.exit(run())
