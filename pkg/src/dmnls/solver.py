"""Breakpoint-aware Strang split-step integrator.

Each step is ``L(dt/2) N(dt) L(dt/2)`` where ``L`` is the exact Fourier
multiplier flow for the current dispersion value and ``N`` the exact
pointwise phase rotation ``u -> u exp(i tau |u|^(p-1))``.  Steps never
straddle a jump of the dispersion map.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .dispersion import AnyMap
from .spectral import Field, Grid, dealias_mask, gradient_norm_sq

__all__ = [
    "SolverConfig",
    "DiagnosticsRecord",
    "BlowupTrigger",
    "BlowupReport",
    "Segment",
    "schedule",
    "nonlinear_phase",
    "strang_step",
    "piecewise_energy",
    "diagnostics",
    "evolve",
    "evolve_backward",
    "DIAGNOSTICS_COLUMNS",
]

log = logging.getLogger(__name__)

DIAGNOSTICS_COLUMNS = ("time", "mass", "grad_sq", "linf", "piecewise_energy",
                       "current_gamma", "tail_fraction")


@dataclass(frozen=True)
class SolverConfig:
    dt_max: float
    p: float = 3.0
    dealias: bool | None = None  # None: on for p >= 3
    output_stride: int = 1
    blowup_gradient_factor: float = 1e3
    blowup_tail_threshold: float = 0.05
    nonlinear: bool = True
    # opt-in step control: cap the per-step phase rotation (nonlinear and mean linear)
    phase_step: float | None = None

    def __post_init__(self):
        if not self.dt_max > 0 or not math.isfinite(self.dt_max):
            raise ValueError(f"dt_max must be a positive finite number, got {self.dt_max}")
        if not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if self.output_stride < 1:
            raise ValueError(f"output_stride must be >= 1, got {self.output_stride}")
        if not self.blowup_gradient_factor > 0:
            raise ValueError("blowup_gradient_factor must be > 0")
        if not 0 < self.blowup_tail_threshold < 1:
            raise ValueError("blowup_tail_threshold must lie in (0, 1)")
        if self.phase_step is not None and not self.phase_step > 0:
            raise ValueError(f"phase_step must be > 0, got {self.phase_step}")

    @property
    def use_dealias(self) -> bool:
        return self.p >= 3 if self.dealias is None else bool(self.dealias)

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    mass: float
    grad_sq: float
    linf: float
    piecewise_energy: float
    current_gamma: float
    tail_fraction: float

    def as_row(self) -> tuple[float, ...]:
        return tuple(getattr(self, c) for c in DIAGNOSTICS_COLUMNS)


class BlowupTrigger(enum.Enum):
    GradientGrowth = "gradient_growth"
    SpectralTail = "spectral_tail"
    NonFinite = "non_finite"


@dataclass(frozen=True)
class BlowupReport:
    detected: bool
    detection_time: float
    trigger: BlowupTrigger
    last_grad_sq: float


@dataclass(frozen=True)
class Segment:
    """``steps`` uniform steps on [start, end] with constant dispersion ``gamma``."""

    start: float
    end: float
    steps: int
    gamma: float

    @property
    def dt(self) -> float:
        return (self.end - self.start) / self.steps

    def step_times(self) -> np.ndarray:
        times = self.start + self.dt * np.arange(self.steps + 1)
        times[-1] = self.end
        return times


def schedule(map: AnyMap, t0: float, t1: float, dt_max: float, *, align: bool = True) -> list[Segment]:
    """Split [t0, t1] at breakpoints, then uniformly with dt <= dt_max.

    ``align=False`` ignores the breakpoints and freezes the dispersion value
    found at the start of each step; it exists only as a negative control.
    """
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got t0={t0}, t1={t1}")
    if not align:
        n = math.ceil((t1 - t0) / dt_max)
        dt = (t1 - t0) / n
        return [Segment(t0 + i * dt, t0 + (i + 1) * dt if i < n - 1 else t1, 1,
                        map.value(t0 + (i + 1e-9) * dt)) for i in range(n)]
    cuts = [t0] + [b.time for b in map.breakpoints(t0, t1)] + [t1]
    segments = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(1, math.ceil((b - a) / dt_max * (1 - 1e-12)))
        segments.append(Segment(a, b, n, map.value(0.5 * (a + b))))
    return segments


def nonlinear_phase(f: Field, tau: float, p: float) -> Field:
    """Exact flow of i u_t + |u|^(p-1) u = 0 over a time ``tau``."""
    u = f.physical().values
    return Field(f.grid, _phase_rotate(u, tau, p))


def _phase_rotate(u: np.ndarray, tau: float, p: float) -> np.ndarray:
    return u * np.exp(1j * tau * np.abs(u) ** (p - 1))


class _Stepper:
    """Strang steps with the state held in spectral space between steps."""

    def __init__(self, grid: Grid, cfg: SolverConfig):
        self.grid = grid
        self.cfg = cfg
        self.mask = dealias_mask(grid) if cfg.use_dealias and cfg.nonlinear else None
        self._key = None
        self._half = None

    def half_multiplier(self, gamma: float, dt: float) -> np.ndarray:
        key = (gamma, dt)
        if key != self._key:
            self._key = key
            self._half = np.exp(-1j * (0.5 * gamma * dt) * self.grid.xi_sq)
        return self._half

    def step(self, uh: np.ndarray, gamma: float, dt: float) -> np.ndarray:
        half = self.half_multiplier(gamma, dt)
        uh = uh * half
        if self.cfg.nonlinear:
            u = np.fft.ifftn(uh, norm="ortho")
            u = _phase_rotate(u, dt, self.cfg.p)
            uh = np.fft.fftn(u, norm="ortho")
            if self.mask is not None:
                uh = uh * self.mask
            uh = uh * half
        else:
            uh = uh * half
        return uh


def _adaptive_dt(uh: np.ndarray, grid: Grid, gamma: float, cfg: SolverConfig,
                 grad_sq: float, mass_sq: float) -> float:
    """Largest dt <= dt_max keeping both per-step phases below ``phase_step``."""
    peak = float(np.max(np.abs(np.fft.ifftn(uh, norm="ortho"))))
    rate = max(peak ** (cfg.p - 1.0), abs(gamma) * grad_sq / mass_sq if mass_sq > 0 else 0.0)
    if rate <= 0:
        return cfg.dt_max
    return min(cfg.dt_max, cfg.phase_step / rate)


def strang_step(f: Field, gamma: float, dt: float, cfg: SolverConfig) -> Field:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    stepper = _Stepper(f.grid, cfg)
    uh = stepper.step(f.spectral().values, gamma, dt)
    return Field(f.grid, np.fft.ifftn(uh, norm="ortho"))


def piecewise_energy(f: Field, gamma: float, p: float) -> float:
    """(gamma/2) ||grad u||^2 - 1/(p+1) ||u||_{p+1}^{p+1}; conserved while gamma is frozen."""
    u = f.physical().values
    potential = np.sum(np.abs(u) ** (p + 1)) * f.grid.cell_volume
    return float(0.5 * gamma * gradient_norm_sq(f) - potential / (p + 1))


def _record(grid: Grid, uh: np.ndarray, t: float, gamma: float, p: float) -> DiagnosticsRecord:
    w = grid.cell_volume
    u = np.fft.ifftn(uh, norm="ortho")
    power = np.abs(uh) ** 2
    total = power.sum()
    grad_sq = float(np.sum(grid.xi_sq * power) * w)
    return DiagnosticsRecord(
        time=float(t),
        mass=float(total * w),
        grad_sq=grad_sq,
        linf=float(np.max(np.abs(u))) if u.size else 0.0,
        piecewise_energy=float(0.5 * gamma * grad_sq - np.sum(np.abs(u) ** (p + 1)) * w / (p + 1)),
        current_gamma=float(gamma),
        tail_fraction=float(power[grid.tail_mask].sum() / total) if total > 0 else 0.0,
    )


def diagnostics(f: Field, t: float, gamma: float, p: float) -> DiagnosticsRecord:
    return _record(f.grid, f.spectral().values, t, gamma, p)


def evolve(phi: Field, map: AnyMap, t0: float, t1: float, cfg: SolverConfig, *,
           align_breakpoints: bool = True, audit: list | None = None,
           grad_reference: float | None = None
           ) -> tuple[Field, list[DiagnosticsRecord], BlowupReport | None]:
    """Integrate from ``phi`` at t0 to t1 under the dispersion ``map``.

    Diagnostics are emitted at t0, every ``output_stride`` steps, at every
    breakpoint and at the final time.  The run halts early with a
    :class:`BlowupReport` when a trigger fires (see :class:`BlowupTrigger`);
    gradient growth is judged against ``blowup_gradient_factor``.
    ``audit``, if given, receives every executed segment.  Growth is measured
    against ``grad_reference`` when given (for runs resumed mid-trajectory),
    otherwise against the gradient at t0.
    """
    if not t0 < t1:
        raise ValueError(f"evolve needs t0 < t1, got t0={t0}, t1={t1}")
    if align_breakpoints and not cfg.dt_max < map.min_piece_length:
        raise ValueError(
            f"dt_max={cfg.dt_max} must be smaller than the shortest dispersion piece "
            f"({map.min_piece_length})")
    grid = phi.grid
    p = cfg.p
    segments = schedule(map, t0, t1, cfg.dt_max, align=align_breakpoints)
    stepper = _Stepper(grid, cfg)
    uh = np.array(phi.spectral().values)

    first = _record(grid, uh, t0, segments[0].gamma, p)
    records = [first]
    grad0 = first.grad_sq if grad_reference is None else grad_reference
    grad_limit = cfg.blowup_gradient_factor * grad0
    count = 0
    grad_sq, mass_sq = first.grad_sq, first.mass
    for seg in segments:
        steps = 0
        t = seg.start
        last = False
        while not last:
            if cfg.phase_step is None:
                dt = seg.dt
                last = steps == seg.steps - 1
                t = seg.start + (steps + 1) * seg.dt if not last else seg.end
            else:
                dt = _adaptive_dt(uh, grid, seg.gamma, cfg, grad_sq, mass_sq)
                if t + dt >= seg.end - 1e-14 * max(1.0, abs(seg.end)):
                    dt, last = seg.end - t, True
                t = seg.end if last else t + dt
            uh = stepper.step(uh, seg.gamma, dt)
            count += 1
            steps += 1
            if not np.all(np.isfinite(uh)):
                log.warning("non-finite state at t=%.6g, aborting", t)
                report = BlowupReport(True, float(t), BlowupTrigger.NonFinite, math.inf)
                return Field(grid, np.zeros(grid.shape)), records, report
            power = np.abs(uh) ** 2
            total = power.sum()
            mass_sq = float(total * grid.cell_volume)
            grad_sq = float(np.sum(grid.xi_sq * power) * grid.cell_volume)
            tail = float(power[grid.tail_mask].sum() / total) if total > 0 else 0.0
            trigger = None
            if grad_sq > grad_limit:
                trigger = BlowupTrigger.GradientGrowth
            elif tail > cfg.blowup_tail_threshold:
                trigger = BlowupTrigger.SpectralTail
            if trigger is not None:
                records.append(_record(grid, uh, t, seg.gamma, p))
                log.info("blow-up detected at t=%.6g (%s)", t, trigger.value)
                report = BlowupReport(True, float(t), trigger, grad_sq)
                if audit is not None:
                    audit.append(Segment(seg.start, t, steps, seg.gamma))
                return Field(grid, np.fft.ifftn(uh, norm="ortho")), records, report
            if count % cfg.output_stride == 0 or last:
                records.append(_record(grid, uh, t, seg.gamma, p))
        if audit is not None:
            audit.append(Segment(seg.start, seg.end, steps, seg.gamma))
    return Field(grid, np.fft.ifftn(uh, norm="ortho")), records, None


def evolve_backward(psi: Field, map: AnyMap, t1: float, t0: float, cfg: SolverConfig
                    ) -> tuple[Field, list[DiagnosticsRecord], BlowupReport | None]:
    """Recover the state at t0 < t1 from ``psi`` given at t1.

    If u solves the equation on [t0, t1] then conj(u(t0 + t1 - tau)) solves
    it for the mirrored map, so the backward problem is a forward run on
    conjugated data.  Record times refer to the mirrored clock.
    """
    mirrored = map.reversed(pivot=0.5 * (t0 + t1))
    out, records, report = evolve(Field(psi.grid, np.conj(psi.physical().values)),
                                  mirrored, t0, t1, cfg)
    return Field(out.grid, np.conj(out.values)), records, report
