"""Initial data: regularised point singularities, solitons and file input.

Fields built from a continuum Fourier transform ``u_hat(xi) = int u e^{-i x xi} dx``
use the conversion ``c_k = (-1)^k u_hat(xi_k) / (dx sqrt(N))`` to the unitary
coefficients of a grid that starts at ``x = -L/2``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import GridMismatchError
from .fieldio import read_fields
from .spectral import Field, SpectralGrid, to_spectral


def from_transform(grid: SpectralGrid, uhat) -> Field:
    """Field whose continuum Fourier transform samples are ``uhat`` (FFT order)."""
    sign = np.where(grid.mode_index % 2 == 0, 1.0, -1.0)
    return Field(sign * np.asarray(uhat) / (grid.dx * np.sqrt(grid.N)), grid)


def transform_samples(field: Field) -> np.ndarray:
    """Inverse of :func:`from_transform`."""
    grid = field.grid
    sign = np.where(grid.mode_index % 2 == 0, 1.0, -1.0)
    return sign * field.coeffs * grid.dx * np.sqrt(grid.N)


def dirac_approx(grid: SpectralGrid, eps: float, kind: str = "gaussian") -> Field:
    """Unit-mass approximation of the Dirac delta at the origin.

    ``gaussian``: ``(2 pi eps^2)^{-1/2} exp(-x^2 / 2 eps^2)``, which needs
    ``eps >= 4 dx`` to be resolved.  ``band_limited``: ``u_hat = 1`` for
    ``|xi| <= 1/eps``, i.e. a sinc kernel truncated on the grid.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if kind == "gaussian":
        if eps < 4 * grid.dx:
            raise ValueError(
                f"eps={eps:g} is not resolved on this grid (need eps >= 4*dx = {4 * grid.dx:g})"
            )
        x = grid.x
        return to_spectral(np.exp(-x**2 / (2 * eps**2)) / np.sqrt(2 * np.pi * eps**2), grid)
    if kind == "band_limited":
        uhat = np.where(np.abs(grid.xi) <= 1.0 / eps, 1.0, 0.0)
        return from_transform(grid, uhat)
    raise ValueError(f"unknown delta kind {kind!r}")


def pv_reciprocal(grid: SpectralGrid, eps: float) -> Field:
    """Regularised principal value of ``1/x``: ``u_hat = -i pi sgn(xi) exp(-eps |xi|)``.

    On the torus the eps -> 0 limit is ``(pi/L) cot(pi x / L)`` rather than
    ``1/x``; they differ by about ``(pi x / L)^2 / 3``, so 5% agreement
    holds only for ``|x|`` below roughly ``L/8``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    xi = np.where(grid.nyquist, 0.0, grid.xi)
    uhat = -1j * np.pi * np.sign(xi) * np.exp(-eps * np.abs(xi))
    return from_transform(grid, uhat)


def pv_reciprocal_limit(grid: SpectralGrid, x) -> np.ndarray:
    """Periodic principal value kernel ``(pi/L) cot(pi x / L)``."""
    x = np.asarray(x, dtype=float)
    return (np.pi / grid.L) / np.tan(np.pi * x / grid.L)


def soliton(grid: SpectralGrid, kappa: float = 1.0, x0: float = 0.0, a: float = 6.0) -> Field:
    """Travelling wave ``(12 kappa^2 / a) sech^2(kappa (x - x0))`` of
    ``u_t + u_xxx + a u u_x = 0``, moving right at speed ``4 kappa^2``."""
    if a == 0:
        raise ValueError("a must be nonzero")
    if not kappa > 0 or kappa * grid.L < 20:
        raise ValueError("need kappa > 0 and kappa*L >= 20 for negligible tails")
    return to_spectral(soliton_profile(grid.x, kappa, x0, a), grid)


def soliton_profile(x, kappa: float, x0: float, a: float) -> np.ndarray:
    e = np.exp(-2.0 * kappa * np.abs(np.asarray(x, dtype=float) - x0))
    # sech^2 z = 4 e^{-2|z|} / (1 + e^{-2|z|})^2, free of overflow in the tails
    return 12 * kappa**2 / a * 4.0 * e / (1.0 + e) ** 2


def gaussian(grid: SpectralGrid, amplitude: float = 1.0, width: float = 1.0,
             center: float = 0.0) -> Field:
    """``amplitude * exp(-((x - center)/width)^2)``."""
    return to_spectral(amplitude * np.exp(-((grid.x - center) / width) ** 2), grid)


def combine(fields: Sequence[Field], weights: Sequence[float]) -> Field:
    """Weighted sum of fields on a common grid."""
    fields = list(fields)
    weights = list(weights)
    if not fields or len(fields) != len(weights):
        raise ValueError("need matching, nonempty fields and weights")
    grid = fields[0].grid
    total = np.zeros(grid.N, dtype=complex)
    for f, w in zip(fields, weights):
        if f.grid != grid:
            raise GridMismatchError(f"{f.grid} vs {grid}")
        total += w * f.coeffs
    return Field(total, grid)


def from_file(path, component: str = "u") -> Field:
    """Load one component of a binary field dump."""
    u, v, _ = read_fields(path)
    if component == "u":
        return u
    if component == "v":
        return v
    raise ValueError(f"component must be 'u' or 'v', got {component!r}")
