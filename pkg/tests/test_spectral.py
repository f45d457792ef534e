import math

import numpy as np
import pytest
from scipy import integrate

from dmnls.spectral import (
    Field,
    Grid,
    Representation,
    gradient_norm_sq,
    l2_norm,
    sobolev_norm,
    spectral_tail_fraction,
    to_physical,
    to_spectral,
)

from .conftest import random_smooth_field


def test_grid_layout():
    g = Grid(1, 8, 2.0)
    assert g.spacing * g.n == pytest.approx(4.0)
    k = np.sort(g.wavenumbers)
    assert k[0] == pytest.approx(-np.pi * 4 / 2.0)
    assert np.allclose(k[1:], -k[1:][::-1])  # symmetric apart from the Nyquist mode


@pytest.mark.parametrize("kwargs", [dict(dimension=4, n=8, half_length=1.0),
                                    dict(dimension=1, n=7, half_length=1.0),
                                    dict(dimension=1, n=8, half_length=0.0)])
def test_bad_grid(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


def test_field_rejects_nonfinite():
    g = Grid(1, 8, 1.0)
    with pytest.raises(ValueError):
        Field(g, np.full(8, np.nan))


def test_field_is_read_only():
    g = Grid(1, 8, 1.0)
    f = Field(g, np.ones(8))
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_constant_concentrates_at_zero_mode():
    g = Grid(1, 8, 1.0)
    fh = to_spectral(Field(g, np.ones(8))).values
    assert abs(fh[0]) == pytest.approx(math.sqrt(8))
    assert np.allclose(fh[1:], 0.0, atol=1e-15)


@pytest.mark.parametrize("d, n", [(1, 64), (2, 16), (3, 8)])
def test_round_trip_and_parseval(rng, d, n):
    g = Grid(d, n, 3.0)
    for _ in range(10):
        f = Field(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
        fh = to_spectral(f)
        back = to_physical(fh)
        assert np.linalg.norm(back.values - f.values) <= 1e-12 * np.linalg.norm(f.values)
        assert abs(l2_norm(fh) - l2_norm(f)) <= 1e-12 * l2_norm(f)


def test_wrong_representation():
    g = Grid(1, 8, 1.0)
    f = Field(g, np.ones(8))
    with pytest.raises(ValueError):
        to_physical(f)
    with pytest.raises(ValueError):
        to_spectral(to_spectral(f))
    assert to_spectral(f).representation is Representation.Spectral


class TestSobolev:
    def test_sigma_zero_is_l2(self, gaussian1d):
        assert sobolev_norm(gaussian1d, 0) == pytest.approx(l2_norm(gaussian1d), rel=1e-13)

    def test_gaussian_l2(self, gaussian1d):
        # int exp(-x^2) dx = sqrt(pi)
        assert sobolev_norm(gaussian1d, 0) == pytest.approx(np.pi ** 0.25, abs=1e-6)

    def test_gaussian_h1_and_h2(self, gaussian1d):
        # Plancherel with |phi_hat|^2 = exp(-xi^2) / (2 pi) (unit-free normalisation)
        for sigma in (1, 2):
            val, _ = integrate.quad(lambda s: (1 + s * s) ** sigma * np.exp(-s * s), -np.inf, np.inf)
            assert sobolev_norm(gaussian1d, sigma) ** 2 == pytest.approx(val, rel=1e-9)

    def test_negative_sigma(self, gaussian1d):
        with pytest.raises(ValueError):
            sobolev_norm(gaussian1d, -1)

    def test_monotone_in_sigma(self, rng):
        g = Grid(1, 128, 10.0)
        for _ in range(20):
            f = random_smooth_field(g, rng)
            f = Field(g, f.values / l2_norm(f))
            vals = [sobolev_norm(f, s) for s in (0, 0.5, 1, 1.5, 2, 3)]
            assert all(b >= a for a, b in zip(vals, vals[1:]))


class TestGradient:
    def test_constant(self):
        g = Grid(2, 16, 1.0)
        assert gradient_norm_sq(Field(g, np.ones(g.shape))) == pytest.approx(0.0, abs=1e-25)

    @pytest.mark.parametrize("d", [1, 2])
    def test_single_mode(self, d):
        g = Grid(d, 16, 3.0)
        xi1 = g.wavenumbers[3]
        amp = 0.7 - 0.2j
        f = Field(g, amp * np.exp(1j * xi1 * g.mesh()[0]))
        assert gradient_norm_sq(f) == pytest.approx(xi1 ** 2 * (2 * g.half_length) ** d * abs(amp) ** 2)

    def test_gaussian(self, gaussian1d):
        # int |d/dx exp(-x^2/2)|^2 = int x^2 exp(-x^2) = sqrt(pi)/2
        assert gradient_norm_sq(gaussian1d) == pytest.approx(np.sqrt(np.pi) / 2, rel=1e-10)

    def test_sobolev_identity(self, rng):
        g = Grid(2, 32, 4.0)
        f = random_smooth_field(g, rng, modes=6)
        lhs = gradient_norm_sq(f)
        rhs = sobolev_norm(f, 1) ** 2 - sobolev_norm(f, 0) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-11)


class TestTail:
    def test_low_modes(self, gaussian1d):
        assert spectral_tail_fraction(gaussian1d) == pytest.approx(0.0, abs=1e-20)

    def test_nyquist(self):
        g = Grid(1, 32, 1.0)
        f = Field(g, np.cos(np.pi * np.arange(32)))
        assert spectral_tail_fraction(f) == pytest.approx(1.0)

    def test_white_noise(self, rng):
        g = Grid(1, 1024, 1.0)
        f = Field(g, rng.normal(size=1024) + 1j * rng.normal(size=1024))
        assert spectral_tail_fraction(f) == pytest.approx(1 / 3, abs=0.1)

    def test_zero_field(self):
        g = Grid(1, 8, 1.0)
        assert spectral_tail_fraction(Field(g, np.zeros(8))) == 0.0
