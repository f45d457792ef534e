"""Periodic box discretization, unitary FFTs and discrete Sobolev norms.

The box is ``[-L, L)^d`` sampled at ``N`` points per axis.  Transforms use
``norm="ortho"`` so that sums of ``|values|**2`` agree in both
representations; multiplying by the cell volume ``(2L/N)**d`` turns such
sums into integral approximations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Representation",
    "Grid",
    "Field",
    "to_spectral",
    "to_physical",
    "l2_norm",
    "sobolev_norm",
    "gradient_norm_sq",
    "spectral_tail_fraction",
    "dealias_mask",
]


class Representation(enum.IntEnum):
    Physical = 0
    Spectral = 1


@dataclass(frozen=True)
class Grid:
    dimension: int
    n: int
    half_length: float

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if self.n <= 0 or self.n % 2:
            raise ValueError(f"points per axis must be a positive even integer, got {self.n}")
        if not self.half_length > 0:
            raise ValueError(f"half_length must be > 0, got {self.half_length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dimension

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    @cached_property
    def x(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """pi*k/L in FFT order, k = 0..N/2-1, -N/2..-1."""
        return np.pi * np.fft.fftfreq(self.n, d=1.0 / self.n) / self.half_length

    @cached_property
    def mode_index(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*([self.x] * self.dimension), indexing="ij")

    @cached_property
    def radius_sq(self) -> np.ndarray:
        return sum(c ** 2 for c in self.mesh())

    @cached_property
    def xi_sq(self) -> np.ndarray:
        """|xi|^2 on the full spectral mesh."""
        axes = np.meshgrid(*([self.wavenumbers] * self.dimension), indexing="ij")
        return sum(a ** 2 for a in axes)

    @cached_property
    def tail_mask(self) -> np.ndarray:
        # modes with |k| > N/3 on any axis
        high = np.abs(self.mode_index) > self.n / 3
        axes = np.meshgrid(*([high] * self.dimension), indexing="ij")
        return np.logical_or.reduce(axes)


def dealias_mask(grid: Grid) -> np.ndarray:
    """2/3 rule: keep |k| <= N/3 on every axis."""
    return ~grid.tail_mask


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray
    representation: Representation = Representation.Physical

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "representation", Representation(self.representation))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Field":
        return cls(grid, func(*grid.mesh()))

    def physical(self) -> "Field":
        return self if self.representation is Representation.Physical else to_physical(self)

    def spectral(self) -> "Field":
        return self if self.representation is Representation.Spectral else to_spectral(self)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def to_spectral(f: Field) -> Field:
    if f.representation is not Representation.Physical:
        raise ValueError("to_spectral expects a field in physical representation")
    return Field(f.grid, np.fft.fftn(f.values, norm="ortho"), Representation.Spectral)


def to_physical(f: Field) -> Field:
    if f.representation is not Representation.Spectral:
        raise ValueError("to_physical expects a field in spectral representation")
    return Field(f.grid, np.fft.ifftn(f.values, norm="ortho"), Representation.Physical)


def l2_norm(f: Field) -> float:
    # identical in both representations for the unitary transform
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.cell_volume))


def sobolev_norm(f: Field, sigma: float) -> float:
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    fh = f.spectral().values
    weight = (1.0 + f.grid.xi_sq) ** sigma
    return float(np.sqrt(np.sum(weight * np.abs(fh) ** 2) * f.grid.cell_volume))


def gradient_norm_sq(f: Field) -> float:
    fh = f.spectral().values
    return float(np.sum(f.grid.xi_sq * np.abs(fh) ** 2) * f.grid.cell_volume)


def spectral_tail_fraction(f: Field) -> float:
    """Share of the spectral L2 mass carried by modes with |k| > N/3 on some axis."""
    power = np.abs(f.spectral().values) ** 2
    total = power.sum()
    if total == 0.0:
        return 0.0
    return float(power[f.grid.tail_mask].sum() / total)
