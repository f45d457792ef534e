"""Mass-critical ground state Q: Laplacian Q - Q + Q^(1+4/d) = 0.

Q is computed by Petviashvili iteration in Fourier space.  The 1D state has
the closed form 3^(1/4) sech(2x)^(1/2), used as an oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .spectral import Field, Grid, gradient_norm_sq, l2_norm

__all__ = [
    "GroundState",
    "GroundStateError",
    "critical_exponent",
    "exact_q_1d",
    "petviashvili",
    "ground_state_residual",
    "gn_ratio",
    "critical_mass",
    "is_radially_nonincreasing",
]

log = logging.getLogger(__name__)


class GroundStateError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def critical_exponent(d: int) -> float:
    return 1.0 + 4.0 / d


@dataclass(frozen=True)
class GroundState:
    dimension: int
    p: float
    q_field: Field
    residual_l2: float
    mass: float
    iterations: int
    stabilizing_factor: float = 1.0

    @property
    def mass_squared(self) -> float:
        return self.mass ** 2

    @property
    def peak(self) -> float:
        return float(np.max(self.q_field.values.real))

    def profile(self, r: np.ndarray) -> np.ndarray:
        """Q at radii ``r`` (1D closed form, otherwise spectral interpolation
        along the first grid axis)."""
        if self.dimension == 1:
            return exact_q_1d(r)
        return _radial_interpolant(self)(np.abs(r))

    def summary(self) -> dict:
        return {"d": self.dimension, "p": self.p, "mass": self.mass,
                "mass_squared": self.mass_squared, "residual": self.residual_l2,
                "iterations": self.iterations}


def exact_q_1d(x):
    return 3.0 ** 0.25 / np.sqrt(np.cosh(2.0 * np.asarray(x, dtype=float)))


def ground_state_residual(q: Field, p: float) -> float:
    """L2 norm of Laplacian Q - Q + |Q|^(p-1) Q evaluated spectrally."""
    grid = q.grid
    qv = q.physical().values
    lap = np.fft.ifftn(-grid.xi_sq * np.fft.fftn(qv, norm="ortho"), norm="ortho")
    res = lap - qv + np.abs(qv) ** (p - 1) * qv
    return float(np.sqrt(np.sum(np.abs(res) ** 2) * grid.cell_volume))


def petviashvili(grid: Grid, d: int | None = None, tol: float = 1e-10, max_iter: int = 500,
                 seed_amplitude: float = 2.0, seed_width: float = 1.0) -> GroundState:
    d = grid.dimension if d is None else d
    if d != grid.dimension:
        raise ValueError(f"grid dimension {grid.dimension} does not match d={d}")
    p = critical_exponent(d)
    nu = p / (p - 1.0)
    symbol = 1.0 + grid.xi_sq
    q = seed_amplitude * np.exp(-grid.radius_sq / (2.0 * seed_width ** 2))
    qh = np.fft.fftn(q, norm="ortho")
    residual = math.inf
    s = math.nan
    for it in range(1, max_iter + 1):
        nl = np.abs(q) ** (p - 1) * q
        nlh = np.fft.fftn(nl, norm="ortho")
        s = float(np.sum(symbol * np.abs(qh) ** 2) / np.real(np.vdot(qh, nlh)))
        qh = s ** nu * nlh / symbol
        q = np.fft.ifftn(qh, norm="ortho").real
        qh = np.fft.fftn(q, norm="ortho")
        residual = ground_state_residual(Field(grid, q), p)
        if residual <= tol:
            field = Field(grid, q)
            log.debug("petviashvili converged in %d iterations, residual %.3e", it, residual)
            return GroundState(d, p, field, residual, l2_norm(field), it, s)
    raise GroundStateError(
        f"Petviashvili iteration did not reach tol={tol} in {max_iter} iterations "
        f"(last residual {residual:.3e})", residual)


def gn_ratio(f: Field, q_mass: float, d: int | None = None) -> float:
    """Left side over right side of the sharp Gagliardo-Nirenberg inequality.

    Values <= 1 are consistent with the inequality; Q attains 1.
    """
    d = f.grid.dimension if d is None else d
    if not q_mass > 0:
        raise ValueError("q_mass must be > 0")
    u = f.physical().values
    w = f.grid.cell_volume
    mass = np.sum(np.abs(u) ** 2) * w
    grad = gradient_norm_sq(f)
    if mass == 0.0 or grad == 0.0:
        raise ValueError("gn_ratio is undefined for a field with zero mass or gradient")
    lhs = np.sum(np.abs(u) ** (2 + 4 / d)) * w
    rhs = (1 + 2 / d) * q_mass ** (-4 / d) * mass ** (2 / d) * grad
    return float(lhs / rhs)


def critical_mass(gamma_plus: float, q_mass: float, d: int) -> float:
    """L2 threshold gamma_+^(d/4) ||Q|| for global existence.

    The focusing energy (gamma_+/2)||grad u||^2 - d/(2d+4)||u||^(2+4/d) is
    coercive exactly when ||u||^(4/d) < gamma_+ ||Q||^(4/d).
    """
    if not gamma_plus > 0:
        raise ValueError("gamma_plus must be > 0")
    return gamma_plus ** (d / 4) * q_mass


def is_radially_nonincreasing(gs: GroundState, slack: float = 1e-12) -> bool:
    """Post hoc symmetry check: profile along each axis through the origin
    is positive and nonincreasing in |x|."""
    q = gs.q_field.values.real
    n = gs.q_field.grid.n
    centre = (n // 2,) * gs.dimension
    if np.any(q <= 0):
        return False
    for axis in range(gs.dimension):
        idx = list(centre)
        idx[axis] = slice(None)
        line = q[tuple(idx)]
        right = line[n // 2:]
        left = line[n // 2::-1]
        if np.any(np.diff(right) > slack) or np.any(np.diff(left) > slack):
            return False
    return True


def _radial_interpolant(gs: GroundState):
    # trigonometric interpolation along the first axis through the origin
    grid = gs.q_field.grid
    n = grid.n
    idx = (slice(None),) + (n // 2,) * (gs.dimension - 1)
    line = gs.q_field.values.real[idx]
    coeffs = np.fft.fft(line) / n
    k = grid.wavenumbers
    L = grid.half_length

    def evaluate(r):
        r = np.asarray(r, dtype=float)
        flat = r.reshape(-1)
        out = np.zeros_like(flat)
        inside = flat <= L
        # series in (x + L) since samples start at -L
        phase = np.exp(1j * np.outer(flat[inside] + L, k))
        out[inside] = np.real(phase @ coeffs)
        return out.reshape(r.shape)

    return evaluate
