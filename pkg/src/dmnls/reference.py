"""Closed-form reference solutions used as oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dispersion import DispersionMap
from .groundstate import GroundState
from .solver import SolverConfig, evolve_backward
from .spectral import Field, Grid

__all__ = [
    "BlowupProfile",
    "pseudoconformal_field",
    "zero_mean_averaged",
    "gaussian_linear",
    "next_period_start",
    "blowup_seed_after_defocusing",
]


@dataclass(frozen=True)
class BlowupProfile:
    """Pseudo-conformal blow-up of i v_t + gamma_+ Laplacian v + |v|^(4/d) v = 0.

    v(t, x) = s^(-d/2) Q(|x| / (sqrt(gamma_+) s)) exp(-i a |x|^2 / (4 gamma_+ s)) exp(i t / s)
    with s = 1 - a t, so the solution concentrates at t = 1/a.
    """

    a: float
    gamma_plus: float
    ground_state: GroundState

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"blow-up rate a must be > 0, got {self.a}")
        if not self.gamma_plus > 0:
            raise ValueError(f"gamma_plus must be > 0, got {self.gamma_plus}")

    @property
    def blowup_time(self) -> float:
        return 1.0 / self.a

    @property
    def mass(self) -> float:
        d = self.ground_state.dimension
        return self.gamma_plus ** (d / 4) * self.ground_state.mass


def pseudoconformal_field(profile: BlowupProfile, t: float, grid: Grid) -> Field:
    if t >= profile.blowup_time:
        raise ValueError(f"t={t} is at or past the blow-up time {profile.blowup_time}")
    d = grid.dimension
    if d != profile.ground_state.dimension:
        raise ValueError("grid and ground state dimensions differ")
    s = 1.0 - profile.a * t
    g = profile.gamma_plus
    r2 = grid.radius_sq
    amplitude = s ** (-d / 2) * profile.ground_state.profile(np.sqrt(r2) / (math.sqrt(g) * s))
    phase = -profile.a * r2 / (4.0 * g * s) + t / s
    return Field(grid, amplitude * np.exp(1j * phase))


def zero_mean_averaged(phi: Field, t: float, t0: float, p: float) -> Field:
    """phi * exp(i (t - t0) |phi|^(p-1)): the non-dispersing averaged solution."""
    u = phi.physical().values
    return Field(phi.grid, u * np.exp(1j * (t - t0) * np.abs(u) ** (p - 1)))


def gaussian_linear(sigma0: float, Gamma: float, grid: Grid) -> Field:
    """exp(i Gamma Laplacian) applied to exp(-|x|^2 / (2 sigma0^2)).

    Completing the square in the Fourier integral gives
    (sigma0^2 / (sigma0^2 + 2 i Gamma))^(d/2) exp(-|x|^2 / (2 (sigma0^2 + 2 i Gamma))).
    """
    if not sigma0 > 0:
        raise ValueError(f"sigma0 must be > 0, got {sigma0}")
    width = sigma0 ** 2 + 2j * Gamma
    prefactor = np.sqrt(sigma0 ** 2 / width) ** grid.dimension
    return Field(grid, prefactor * np.exp(-grid.radius_sq / (2.0 * width)))


def next_period_start(map: DispersionMap, t: float) -> float:
    eps = map.epsilon
    n = math.floor(t / eps)
    start = eps * (n + 1)
    if math.isclose(start - eps, t, rel_tol=0, abs_tol=1e-12 * eps):
        return t
    return start


def blowup_seed_after_defocusing(profile: BlowupProfile, map: DispersionMap, t0: float,
                                 cfg: SolverConfig, grid: Grid | None = None) -> Field:
    """Initial datum at t0 (inside a defocusing piece) that becomes v_a(0) at
    the next period start, obtained by integrating backwards in time."""
    if map.value(t0) > 0:
        raise ValueError(f"t0={t0} lies in a focusing piece; a defocusing start is required")
    if not profile.blowup_time < map.epsilon * map.t_plus:
        raise ValueError(
            f"rate condition violated: 1/a={profile.blowup_time} must be < "
            f"epsilon*t_plus={map.epsilon * map.t_plus}")
    if not math.isclose(profile.gamma_plus, map.gamma_plus):
        raise ValueError("profile gamma_plus differs from the dispersion map")
    grid = profile.ground_state.q_field.grid if grid is None else grid
    target = next_period_start(map, t0)
    datum = pseudoconformal_field(profile, 0.0, grid)
    if target == t0:
        return datum
    quiet = cfg.replace(blowup_gradient_factor=math.inf, blowup_tail_threshold=1 - 1e-12)
    seed, _, _ = evolve_backward(datum, map, target, t0, quiet)
    return seed
