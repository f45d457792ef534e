"""Experiment orchestration and persistence.

Each study here wraps repeated calls to ``evolve``.  The file formats
shared with the CLI live at the bottom of the module.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dispersion import AnyMap, ConstantDispersion, DispersionMap
from .groundstate import GroundState, critical_mass
from .reference import zero_mean_averaged
from .solver import BlowupTrigger, SolverConfig, evolve
from .spectral import Field, Grid, Representation, gradient_norm_sq, l2_norm, sobolev_norm

__all__ = [
    "SweepResult",
    "ZeroMeanResult",
    "ThresholdStudyResult",
    "OrderStudyResult",
    "HorizonError",
    "CheckpointError",
    "sample_times",
    "trajectory",
    "epsilon_sweep",
    "empirical_slope",
    "zero_mean_validation",
    "threshold_datum",
    "threshold_study",
    "splitting_order_study",
    "save_checkpoint",
    "load_checkpoint",
    "write_csv",
    "read_csv",
    "config_hash",
    "write_manifest",
]

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = int.from_bytes(b"DMNLSCK\x01", "little")
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<QQqqdqd")


class HorizonError(RuntimeError):
    """The averaged reference run did not survive to the requested horizon."""


class CheckpointError(ValueError):
    pass


@dataclass
class SweepResult:
    epsilon: float
    error_h2: float
    error_l2: float
    sample_times: list[float] = field(repr=False)
    wall_time: float = 0.0


@dataclass
class ZeroMeanResult:
    epsilon: float
    error_h2: float
    defect: float


@dataclass
class ThresholdStudyResult:
    mass_ratio: float
    blew_up: bool
    horizon: float
    detection_time: float | None = None
    inconclusive: bool = False
    max_growth: float = 1.0


@dataclass
class OrderStudyResult:
    order: float
    errors: list[float]
    exact: bool = False


def sample_times(map: AnyMap, t0: float, T: float, count: int = 32) -> list[float]:
    """``count`` uniform samples in (t0, T] merged with every breakpoint."""
    if count < 1:
        raise ValueError("sample count must be >= 1")
    uniform = [t0 + (T - t0) * k / count for k in range(1, count + 1)]
    uniform[-1] = T
    times = sorted(set(uniform) | {b.time for b in map.breakpoints(t0, T)})
    return times


def trajectory(phi: Field, map: AnyMap, t0: float, times: list[float], cfg: SolverConfig):
    """States at each of ``times`` (increasing, > t0) and the first blow-up report."""
    states = []
    u, t = phi, t0
    grad0 = gradient_norm_sq(phi)
    for target in times:
        if target <= t:
            states.append(u)
            continue
        u, _, report = evolve(u, map, t, target, cfg, grad_reference=grad0)
        if report is not None:
            return states, report
        states.append(u)
        t = target
    return states, None


def _diff(a: Field, b: Field) -> Field:
    return Field(a.grid, a.physical().values - b.physical().values)


def _parallel_map(func, items, workers: int):
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _check_h2_hypotheses(cfg: SolverConfig, d: int):
    if cfg.nonlinear and (cfg.p < 2 or d > 3):
        log.warning("p=%g, d=%d lies outside the H^2 averaging hypotheses (p >= 2, d <= 3)",
                    cfg.p, d)


def epsilon_sweep(phi: Field, map_template: AnyMap, epsilons: list[float], t0: float,
                  T: float, cfg: SolverConfig, *, sample_count: int = 32, sigma: float = 2.0,
                  workers: int = 1, out_csv: Path | None = None) -> list[SweepResult]:
    """Distance between the period-eps solution and the averaged one.

    For every eps the sup over samples (uniform plus breakpoints) of the H^2
    and L2 distances is recorded.  The averaged run uses the constant
    dispersion <gamma> and is integrated along the same sample times.
    """
    if any(e <= 0 for e in epsilons):
        raise ValueError("epsilons must be positive")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    _check_h2_hypotheses(cfg, phi.grid.dimension)
    averaged = ConstantDispersion(map_template.mean)

    def run(eps):
        start = time.perf_counter()
        scaled = map_template.with_epsilon(eps)
        times = sample_times(scaled, t0, T, sample_count)
        reference, report = trajectory(phi, averaged, t0, times, cfg)
        if report is not None:
            raise HorizonError(
                f"averaged run blew up at t={report.detection_time:.6g} before T={T}; "
                f"choose a horizon T < {report.detection_time:.6g}")
        states, report = trajectory(phi, scaled, t0, times, cfg)
        if report is not None:
            raise HorizonError(
                f"eps={eps} run blew up at t={report.detection_time:.6g} before T={T}; "
                "shorten the horizon or reduce eps")
        err_h2 = max(sobolev_norm(_diff(u, v), sigma) for u, v in zip(states, reference))
        err_l2 = max(l2_norm(_diff(u, v)) for u, v in zip(states, reference))
        return SweepResult(eps, err_h2, err_l2, times, time.perf_counter() - start)

    results = _parallel_map(run, epsilons, workers)
    if out_csv is not None:
        write_csv(out_csv, ("epsilon", "error_h2", "error_l2"),
                  [(r.epsilon, r.error_h2, r.error_l2) for r in results])
    return results


def empirical_slope(results: list[SweepResult]) -> float:
    """Least-squares slope of log(error_h2) against log(eps); reported, never asserted."""
    eps = np.log([r.epsilon for r in results])
    err = np.log([max(r.error_h2, 1e-300) for r in results])
    return float(np.polyfit(eps, err, 1)[0])


def zero_mean_validation(phi: Field, map: DispersionMap, epsilons: list[float], T: float,
                         cfg: SolverConfig, *, t0: float = 0.0, sample_count: int = 32,
                         workers: int = 1, out_csv: Path | None = None) -> list[ZeroMeanResult]:
    """Compare the period-eps solutions with phi exp(i (t - t0) |phi|^(p-1))."""
    if abs(map.mean) > 1e-12 * max(map.gamma_plus, map.gamma_minus):
        raise ValueError(f"zero_mean_validation needs a zero-mean map, <gamma>={map.mean}")
    _check_h2_hypotheses(cfg, phi.grid.dimension)
    p = cfg.p if cfg.nonlinear else 1.0
    modulus = np.abs(phi.physical().values)

    def run(eps):
        scaled = map.with_epsilon(eps)
        times = sample_times(scaled, t0, T, sample_count)
        states, report = trajectory(phi, scaled, t0, times, cfg)
        if report is not None:
            raise HorizonError(f"eps={eps} run blew up at t={report.detection_time:.6g}")
        err = 0.0
        defect = 0.0
        for t, u in zip(times, states):
            exact = zero_mean_averaged(phi, t, t0, p) if cfg.nonlinear else phi
            err = max(err, sobolev_norm(_diff(u, exact), 2.0))
            gap = np.abs(u.physical().values) - modulus
            defect = max(defect, float(np.sqrt(np.sum(gap ** 2) * phi.grid.cell_volume)))
        return ZeroMeanResult(eps, err, defect)

    results = _parallel_map(run, epsilons, workers)
    if out_csv is not None:
        write_csv(out_csv, ("epsilon", "error_h2", "defect"),
                  [(r.epsilon, r.error_h2, r.defect) for r in results])
    return results


def threshold_datum(ground_state: GroundState, grid: Grid, gamma_plus: float,
                    mass_ratio: float, chirp: float = 0.0) -> Field:
    """c Q(|x| / sqrt(gamma_+)) exp(-i a |x|^2 / (4 gamma_+)) with mass ratio * critical mass."""
    d = grid.dimension
    r2 = grid.radius_sq
    base = ground_state.profile(np.sqrt(r2 / gamma_plus)) * np.exp(-1j * chirp * r2 / (4 * gamma_plus))
    base_field = Field(grid, base)
    target = mass_ratio * critical_mass(gamma_plus, ground_state.mass, d)
    if mass_ratio == 0:
        return Field(grid, np.zeros(grid.shape))
    return Field(grid, base * (target / l2_norm(base_field)))


def _focusing_width(mass: float, linf: float, d: int) -> float:
    return (mass / linf ** 2) ** (1.0 / d) if linf > 0 else math.inf


def threshold_study(mass_ratios: list[float], map: DispersionMap, periods: int, cfg: SolverConfig,
                    ground_state: GroundState, grid: Grid, *, chirp: float = 0.0, t0: float = 0.0,
                    min_resolved_spacings: float = 8.0, workers: int = 1,
                    out_csv: Path | None = None) -> list[ThresholdStudyResult]:
    """Run data at given fractions of the critical mass for ``periods`` periods.

    A gradient-growth detection counts as blow-up only while the focusing
    width (mass / peak^2)^(1/d) spans at least ``min_resolved_spacings`` grid
    cells; spectral-tail detections and under-resolved growth are reported
    as inconclusive.
    """
    d = grid.dimension
    if abs(cfg.p - (1 + 4 / d)) > 1e-12:
        raise ValueError(f"threshold study needs the mass-critical p={1 + 4 / d}, got {cfg.p}")
    if any(not 0 <= r <= 2 for r in mass_ratios):
        raise ValueError("mass ratios must lie in [0, 2]")
    horizon = t0 + periods * map.epsilon

    def run(ratio):
        datum = threshold_datum(ground_state, grid, map.gamma_plus, ratio, chirp)
        _, records, report = evolve(datum, map, t0, horizon, cfg)
        g0 = records[0].grad_sq
        growth = max(r.grad_sq for r in records) / g0 if g0 > 0 else 1.0
        if report is None:
            return ThresholdStudyResult(ratio, False, horizon, None, False, growth)
        last = records[-1]
        resolved = (report.trigger is BlowupTrigger.GradientGrowth and
                    _focusing_width(last.mass, last.linf, d) >= min_resolved_spacings * grid.spacing)
        if not resolved:
            log.warning("ratio %.3g: %s at t=%.6g is under-resolved; marked inconclusive",
                        ratio, report.trigger.value, report.detection_time)
        return ThresholdStudyResult(ratio, resolved, horizon, report.detection_time,
                                    not resolved, growth)

    results = _parallel_map(run, mass_ratios, workers)
    if out_csv is not None:
        write_csv(out_csv, ("mass_ratio", "blew_up", "detection_time"),
                  [(r.mass_ratio, int(r.blew_up),
                    math.nan if r.detection_time is None else r.detection_time) for r in results])
    return results


def splitting_order_study(phi: Field, map: AnyMap, dts: list[float], T: float, cfg: SolverConfig,
                          *, t0: float = 0.0, align_breakpoints: bool = True,
                          floor: float = 1e-12) -> OrderStudyResult:
    """Richardson estimate log2(|u_h - u_h/2| / |u_h/2 - u_h/4|) from a halving sequence."""
    if len(dts) < 3:
        raise ValueError("need at least three step sizes")
    if any(not math.isclose(b, a / 2) for a, b in zip(dts, dts[1:])):
        raise ValueError("dts must form a halving sequence")
    finals = []
    for dt in dts:
        run_cfg = cfg.replace(dt_max=dt, blowup_gradient_factor=math.inf,
                              blowup_tail_threshold=1 - 1e-12)
        u, _, _ = evolve(phi, map, t0, T, run_cfg, align_breakpoints=align_breakpoints)
        finals.append(u)
    scale = l2_norm(phi) or 1.0
    diffs = [l2_norm(_diff(a, b)) / scale for a, b in zip(finals, finals[1:])]
    if max(diffs) < floor:
        return OrderStudyResult(math.inf, diffs, exact=True)
    orders = [math.log2(a / b) for a, b in zip(diffs, diffs[1:])]
    return OrderStudyResult(orders[-1], diffs)


def save_checkpoint(f: Field, path, time: float = 0.0) -> None:
    grid = f.grid
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, grid.dimension, grid.n,
                          grid.half_length, int(f.representation), float(time))
    payload = np.ascontiguousarray(f.values, dtype="<c16").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def load_checkpoint(path, *, with_time: bool = False):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, d, n, L, rep, t = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic:#018x} (wrong file type or byte order)")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    grid = Grid(int(d), int(n), float(L))
    expected = _HEADER.size + 16 * n ** d
    if len(data) != expected:
        raise CheckpointError(f"{path}: payload has {len(data) - _HEADER.size} bytes, "
                              f"expected {expected - _HEADER.size}")
    values = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(grid.shape)
    f = Field(grid, values, Representation(rep))
    return (f, t) if with_time else f


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _parse(value: str):
    try:
        return float(value)
    except ValueError:
        return value


def read_csv(path) -> tuple[list[str], list[list]]:
    """Header and rows; numeric cells come back as floats, others as strings."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [[_parse(v) for v in row] for row in reader]


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def write_manifest(path, config: dict, wall_time: float, status: str = "completed", **extra) -> dict:
    manifest = {"config": config, "config_hash": config_hash(config),
                "git_describe": _git_describe(), "wall_time": wall_time, "status": status}
    manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def result_rows(results) -> list[dict]:
    return [asdict(r) for r in results]
