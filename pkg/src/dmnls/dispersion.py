"""Piecewise-constant periodic dispersion maps.

A map alternates between a focusing piece ``(n*eps, (n + t_plus)*eps]`` with
value ``gamma_plus`` and a defocusing piece ``((n + t_plus)*eps, (n+1)*eps]``
with value ``-gamma_minus``.  All integrals are evaluated in closed form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

__all__ = [
    "SwitchKind",
    "Breakpoint",
    "DispersionMap",
    "ConstantDispersion",
    "gamma_at",
    "average_dispersion",
    "cumulative_dispersion",
    "mean_zero_integral",
    "breakpoints_between",
]

# breakpoints closer than this (relative to the period) to an interval end are dropped
_EDGE_TOL = 1e-12


class SwitchKind(enum.Enum):
    ToDefocusing = "to_defocusing"
    ToFocusing = "to_focusing"


@dataclass(frozen=True)
class Breakpoint:
    time: float
    switch_kind: SwitchKind


@dataclass(frozen=True)
class DispersionMap:
    """gamma(t / epsilon) with a unit-period piecewise-constant profile."""

    gamma_plus: float
    gamma_minus: float
    t_plus: float
    epsilon: float = 1.0

    def __post_init__(self):
        for name in ("gamma_plus", "gamma_minus", "t_plus", "epsilon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.gamma_plus <= 0:
            raise ValueError(f"gamma_plus must be > 0, got {self.gamma_plus}")
        if self.gamma_minus <= 0:
            raise ValueError(f"gamma_minus must be > 0, got {self.gamma_minus}")
        if not 0.0 < self.t_plus < 1.0:
            raise ValueError(f"t_plus must lie in (0, 1), got {self.t_plus}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")

    @property
    def period(self) -> float:
        return self.epsilon

    @property
    def mean(self) -> float:
        return self.gamma_plus * self.t_plus - self.gamma_minus * (1.0 - self.t_plus)

    @property
    def min_piece_length(self) -> float:
        return self.epsilon * min(self.t_plus, 1.0 - self.t_plus)

    def with_epsilon(self, epsilon: float) -> "DispersionMap":
        return DispersionMap(self.gamma_plus, self.gamma_minus, self.t_plus, epsilon)

    def reversed(self, pivot: float = 0.0) -> "ReversedMap":
        return ReversedMap(self, pivot)

    def _phase(self, t: float) -> tuple[int, float]:
        # position inside the period with left-piece continuity: frac in (0, 1]
        u = t / self.epsilon
        n = math.floor(u)
        r = u - n
        if r == 0.0:
            return n - 1, 1.0
        return n, r

    def value(self, t: float) -> float:
        _, r = self._phase(t)
        return self.gamma_plus if r <= self.t_plus else -self.gamma_minus

    def _profile_integral(self, r: float) -> float:
        # int_0^r gamma(tau) dtau for r in [0, 1]
        if r <= self.t_plus:
            return self.gamma_plus * r
        return self.gamma_plus * self.t_plus - self.gamma_minus * (r - self.t_plus)

    def antiderivative(self, t: float) -> float:
        n, r = self._phase(t)
        return self.epsilon * (n * self.mean + self._profile_integral(r))

    def oscillatory_antiderivative(self, t: float) -> float:
        # periodic antiderivative of gamma_0 = gamma - <gamma>
        _, r = self._phase(t)
        return self.epsilon * (self._profile_integral(r) - self.mean * r)

    def cumulative(self, s: float, t: float) -> float:
        return self.antiderivative(t) - self.antiderivative(s)

    def oscillatory(self, s: float, t: float) -> float:
        return self.oscillatory_antiderivative(t) - self.oscillatory_antiderivative(s)

    def oscillation_bounds(self) -> tuple[float, float]:
        """Range of the mean-zero integral started at a period boundary."""
        return (-self.epsilon * (self.gamma_minus + self.mean),
                self.epsilon * (self.gamma_plus - self.mean))

    def breakpoints(self, s: float, t: float) -> list[Breakpoint]:
        if t < s:
            raise ValueError(f"breakpoints_between needs s <= t, got s={s}, t={t}")
        eps = self.epsilon
        tol = _EDGE_TOL * eps
        out = []
        for n in range(math.floor(s / eps) - 1, math.ceil(t / eps) + 1):
            for time, kind in ((eps * n, SwitchKind.ToFocusing),
                               (eps * (n + self.t_plus), SwitchKind.ToDefocusing)):
                if s + tol < time < t - tol:
                    out.append(Breakpoint(time, kind))
        out.sort(key=lambda b: b.time)
        return out


@dataclass(frozen=True)
class ConstantDispersion:
    """Degenerate map gamma(t) = value; used for averaged and reference runs."""

    constant: float

    def __post_init__(self):
        if not math.isfinite(self.constant):
            raise ValueError(f"constant dispersion must be finite, got {self.constant!r}")

    @property
    def mean(self) -> float:
        return self.constant

    @property
    def min_piece_length(self) -> float:
        return math.inf

    def reversed(self, pivot: float = 0.0) -> "ConstantDispersion":
        return self

    def with_epsilon(self, epsilon: float) -> "ConstantDispersion":
        """No period to rescale; kept so sweeps accept the degenerate map."""
        return self

    def value(self, t: float) -> float:
        return self.constant

    def antiderivative(self, t: float) -> float:
        return self.constant * t

    def oscillatory_antiderivative(self, t: float) -> float:
        return 0.0

    def cumulative(self, s: float, t: float) -> float:
        return self.constant * (t - s)

    def oscillatory(self, s: float, t: float) -> float:
        return 0.0

    def breakpoints(self, s: float, t: float) -> list[Breakpoint]:
        if t < s:
            raise ValueError(f"breakpoints_between needs s <= t, got s={s}, t={t}")
        return []


@dataclass(frozen=True)
class ReversedMap:
    """t -> base(2*pivot - t); the map seen by a time-reversed run."""

    base: DispersionMap
    pivot: float = 0.0

    @property
    def mean(self) -> float:
        return self.base.mean

    @property
    def min_piece_length(self) -> float:
        return self.base.min_piece_length

    def reversed(self, pivot: float = 0.0):
        if pivot != self.pivot:
            raise ValueError("double reversal must use the same pivot")
        return self.base

    def value(self, t: float) -> float:
        # right-continuous mirror; only used away from breakpoints
        return self.base.value(2 * self.pivot - t)

    def cumulative(self, s: float, t: float) -> float:
        return self.base.cumulative(2 * self.pivot - t, 2 * self.pivot - s)

    def oscillatory(self, s: float, t: float) -> float:
        return self.base.oscillatory(2 * self.pivot - t, 2 * self.pivot - s)

    def breakpoints(self, s: float, t: float) -> list[Breakpoint]:
        flipped = {SwitchKind.ToFocusing: SwitchKind.ToDefocusing,
                   SwitchKind.ToDefocusing: SwitchKind.ToFocusing}
        inner = self.base.breakpoints(2 * self.pivot - t, 2 * self.pivot - s)
        return [Breakpoint(2 * self.pivot - b.time, flipped[b.switch_kind])
                for b in reversed(inner)]


AnyMap = DispersionMap | ConstantDispersion | ReversedMap


def gamma_at(map: AnyMap, t: float) -> float:
    return map.value(t)


def average_dispersion(map: AnyMap) -> float:
    return map.mean


def cumulative_dispersion(map: AnyMap, s: float, t: float) -> float:
    """Gamma(t, s) = int_s^t gamma(tau / eps) dtau, in closed form."""
    return map.cumulative(s, t)


def mean_zero_integral(map: AnyMap, s: float, t: float) -> float:
    """int_s^t gamma_0(tau / eps) dtau = Gamma(t, s) - <gamma> (t - s)."""
    return map.oscillatory(s, t)


def breakpoints_between(map: AnyMap, s: float, t: float) -> list[Breakpoint]:
    return map.breakpoints(s, t)
