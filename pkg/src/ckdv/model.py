"""Coefficients of the coupled KdV system and its reduction to diagonal form.

The system in original variables is::

    u_t + u_xxx + a3 v_xxx + u u_x + a1 v v_x + a2 (u v)_x = 0
    b1 v_t + v_xxx + b2 a3 u_xxx + v v_x + b2 a2 u u_x + b2 a1 (u v)_x = 0

Written as ``W_t + A W_xxx + d_x G(W) = 0`` with ``W = (u, v)``, the
dispersion matrix ``A`` is diagonalised, ``A = S diag(alpha+, alpha-) S^-1``.
In eigen-coordinates ``Z = S^-1 W`` each quadratic component of ``S^-1 G(S Z)``
is read off as ``(a p^2/2 + c p q + b q^2/2)``, giving six constant
coefficients.  Rescaling ``x`` per component by ``alpha^(-1/3)`` normalises
both dispersions to one and multiplies the coefficients of each equation by
``alpha^(-1/3)``.  The rescaled system is local only when the cross terms
vanish; otherwise the two components live on differently stretched axes.
See ``docs/reduction.md``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import InvalidCoefficientsError
from .spectral import Field, evaluate_at, to_spectral, derivative, to_physical

log = logging.getLogger(__name__)

ILL_CONDITIONED_TOL = 1e-9

VIOLATION_B1 = "b1>0"
VIOLATION_B2 = "b2>0"
VIOLATION_SINGULAR = "a3²b2≠1"
VIOLATION_ILL = "ill-conditioned reduction"
VIOLATION_FINITE = "finite coefficients"


@dataclass(frozen=True)
class OriginalCoefficients:
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    b1: float = 1.0
    b2: float = 1.0

    def dispersion_matrix(self) -> np.ndarray:
        return np.array(
            [[1.0, self.a3], [self.a3 * self.b2 / self.b1, 1.0 / self.b1]]
        )

    def quadratic_forms(self) -> np.ndarray:
        """Symmetric matrices ``Q_i`` with ``G_i(W) = W^T Q_i W / 2`` (A-normalised)."""
        a1, a2, b1, b2 = self.a1, self.a2, self.b1, self.b2
        q_u = np.array([[1.0, a2], [a2, a1]])
        q_v = np.array([[b2 * a2, b2 * a1], [b2 * a1, 1.0]]) / b1
        return np.stack([q_u, q_v])

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReducedCoefficients:
    """Nonlinear coefficients of ``u_t + u_xxx + a u u_x + b v v_x + c (u v)_x = 0``
    and the tilde counterparts for ``v``."""

    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    a_tilde: float = 0.0
    b_tilde: float = 0.0
    c_tilde: float = 0.0

    @classmethod
    def zero(cls) -> "ReducedCoefficients":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "ReducedCoefficients":
        m = np.asarray(m, dtype=float)
        return cls(*(float(v) for v in m.ravel()))

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.a, self.b, self.c], [self.a_tilde, self.b_tilde, self.c_tilde]]
        )

    def is_zero(self) -> bool:
        return not np.any(self.matrix())

    def cross_coupling(self) -> float:
        """Size of the terms that mix the two components (b, c, a~, c~)."""
        return float(max(abs(self.b), abs(self.c), abs(self.a_tilde), abs(self.c_tilde)))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Diagonalization:
    alpha_plus: float
    alpha_minus: float
    basis_matrix: np.ndarray
    basis_inverse: np.ndarray
    # nonlinear coefficients in eigen-coordinates before the x-rescaling
    conjugated: ReducedCoefficients = field(default_factory=ReducedCoefficients)

    @property
    def eigenvalues(self) -> tuple[float, float]:
        return self.alpha_plus, self.alpha_minus

    @property
    def scales(self) -> tuple[float, float]:
        """``alpha^(-1/3)`` per component (real cube root)."""
        return float(np.cbrt(1.0 / self.alpha_plus)), float(np.cbrt(1.0 / self.alpha_minus))

    def reconstruct(self) -> np.ndarray:
        lam = np.diag([self.alpha_plus, self.alpha_minus])
        return self.basis_matrix @ lam @ self.basis_inverse

    def as_dict(self) -> dict:
        return {
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "basis_matrix": self.basis_matrix.tolist(),
            "basis_inverse": self.basis_inverse.tolist(),
            "conjugated": self.conjugated.as_dict(),
        }


def validate(coeffs: OriginalCoefficients) -> list[str]:
    """Return every violated standing assumption; an empty list means valid."""
    values = (coeffs.a1, coeffs.a2, coeffs.a3, coeffs.b1, coeffs.b2)
    if not all(math.isfinite(v) for v in values):
        return [VIOLATION_FINITE]
    violations = []
    if not coeffs.b1 > 0:
        violations.append(VIOLATION_B1)
    if not coeffs.b2 > 0:
        violations.append(VIOLATION_B2)
    gap = coeffs.a3**2 * coeffs.b2 - 1.0
    if gap == 0.0:
        violations.append(VIOLATION_SINGULAR)
    elif abs(gap) < ILL_CONDITIONED_TOL:
        violations.append(VIOLATION_ILL)
    return violations


def _require_valid(coeffs: OriginalCoefficients):
    violations = validate(coeffs)
    if violations:
        raise InvalidCoefficientsError(violations)


def eigenvalues(coeffs: OriginalCoefficients) -> tuple[float, float]:
    """Closed-form eigenvalues of the dispersion matrix, larger first."""
    _require_valid(coeffs)
    b1, b2, a3 = coeffs.b1, coeffs.b2, coeffs.a3
    trace = 1.0 + 1.0 / b1
    root = math.sqrt((1.0 - 1.0 / b1) ** 2 + 4.0 * b2 * a3**2 / b1)
    alpha_plus = 0.5 * (trace + root)
    # product form avoids cancellation in alpha_minus
    alpha_minus = ((1.0 - a3**2 * b2) / b1) / alpha_plus
    return alpha_plus, alpha_minus


def _unit_eigenvector(coeffs: OriginalCoefficients, alpha: float) -> np.ndarray:
    a = coeffs.dispersion_matrix()
    # pick the better-conditioned row of (A - alpha I) v = 0
    r0 = np.array([a[0, 1], alpha - a[0, 0]])
    r1 = np.array([alpha - a[1, 1], a[1, 0]])
    v = r0 if math.hypot(*r0) >= math.hypot(*r1) else r1
    v = v / math.hypot(*v)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return v


def diagonalize(coeffs: OriginalCoefficients) -> Diagonalization:
    _require_valid(coeffs)
    alphas = eigenvalues(coeffs)
    if coeffs.a3 == 0.0 or alphas[0] == alphas[1]:
        # already diagonal (or a multiple of I to rounding); keep (u, v) pairing
        basis = np.eye(2)
        alphas = (1.0, 1.0 / coeffs.b1)
    else:
        basis = np.column_stack([_unit_eigenvector(coeffs, al) for al in alphas])
    inverse = np.linalg.inv(basis)
    forms = coeffs.quadratic_forms()
    h = np.einsum("ai,nab,bj->nij", basis, forms, basis)
    mixed = np.einsum("mn,nij->mij", inverse, h)
    conj = ReducedCoefficients(
        a=mixed[0, 0, 0], b=mixed[0, 1, 1], c=mixed[0, 0, 1],
        a_tilde=mixed[1, 0, 0], b_tilde=mixed[1, 1, 1], c_tilde=mixed[1, 0, 1],
    )
    conj = ReducedCoefficients(*(float(v) for v in conj.matrix().ravel()))
    return Diagonalization(alphas[0], alphas[1], basis, inverse, conj)


def reduce(coeffs: OriginalCoefficients) -> tuple[ReducedCoefficients, Diagonalization]:
    """Diagonalise the dispersion and rescale x so both dispersions equal one."""
    diag = diagonalize(coeffs)
    lam_p, lam_m = diag.scales
    m = diag.conjugated.matrix() * np.array([[lam_p], [lam_m]])
    rc = ReducedCoefficients.from_matrix(m)
    if lam_p != lam_m and rc.cross_coupling() > 0:
        log.debug(
            "reduced system has cross coupling %.3g with unequal scales; "
            "the local reduced system is not equivalent to the original",
            rc.cross_coupling(),
        )
    return rc, diag


def is_exact_reduction(rc: ReducedCoefficients, diag: Diagonalization, tol=1e-12) -> bool:
    """True when the rescaled system is exactly equivalent to the original.

    That needs either equal component scales or no cross-component terms.
    """
    lam_p, lam_m = diag.scales
    return abs(lam_p - lam_m) <= tol or rc.cross_coupling() <= tol


def scale_map(field: Field, alpha: float, direction: str = "forward") -> Field:
    """Resample ``field`` under ``x -> alpha^(-1/3) x`` (forward) or its inverse.

    Forward gives ``g(x) = f(alpha^(-1/3) x)``; this maps a reduced-variable
    component back to eigen-coordinates.  Evaluation is by trigonometric
    interpolation.  Points that land outside the torus read zero rather than
    a periodic copy, so a compressed field keeps a single copy; the field
    must be negligible near the seam for the map to be meaningful.
    """
    if alpha == 0 or not math.isfinite(alpha):
        raise ValueError("alpha must be finite and nonzero")
    if direction == "forward":
        s = float(np.cbrt(1.0 / alpha))
    elif direction == "inverse":
        s = float(np.cbrt(alpha))
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if s == 1.0:
        return field.copy()
    points = s * field.grid.x
    samples = evaluate_at(field, points)
    # the torus stands in for the line: outside it the field is zero, not periodic
    samples = np.where(np.abs(points) < 0.5 * field.grid.L, samples, 0.0)
    if np.abs(to_physical(field).imag).max() <= 1e-13 * max(np.abs(field.coeffs).max(), 1e-300):
        samples = samples.real
    return to_spectral(samples, field.grid)


def to_original(u: Field, v: Field, diag: Diagonalization) -> tuple[Field, Field]:
    """Map a reduced-variable pair back to original variables."""
    p = scale_map(u, diag.alpha_plus, "forward")
    q = scale_map(v, diag.alpha_minus, "forward")
    return from_eigen(p, q, diag)


def from_reduced_to_eigen(u: Field, v: Field, diag: Diagonalization) -> tuple[Field, Field]:
    return scale_map(u, diag.alpha_plus, "forward"), scale_map(v, diag.alpha_minus, "forward")


def from_original(u: Field, v: Field, diag: Diagonalization) -> tuple[Field, Field]:
    """Original variables to reduced variables (inverse of :func:`to_original`)."""
    p, q = to_eigen(u, v, diag)
    return scale_map(p, diag.alpha_plus, "inverse"), scale_map(q, diag.alpha_minus, "inverse")


def to_eigen(u: Field, v: Field, diag: Diagonalization) -> tuple[Field, Field]:
    s = diag.basis_inverse
    return (
        Field(s[0, 0] * u.coeffs + s[0, 1] * v.coeffs, u.grid),
        Field(s[1, 0] * u.coeffs + s[1, 1] * v.coeffs, u.grid),
    )


def from_eigen(p: Field, q: Field, diag: Diagonalization) -> tuple[Field, Field]:
    s = diag.basis_matrix
    return (
        Field(s[0, 0] * p.coeffs + s[0, 1] * q.coeffs, p.grid),
        Field(s[1, 0] * p.coeffs + s[1, 1] * q.coeffs, p.grid),
    )


def original_pointwise_residual(u_t, v_t, u: Field, v: Field, oc: OriginalCoefficients):
    """Residuals of the original equations given time derivatives ``u_t, v_t``
    as physical samples.  Products are formed pointwise, so nothing aliases."""
    uu, vv = to_physical(u).real, to_physical(v).real
    ux, vx = to_physical(derivative(u, 1)).real, to_physical(derivative(v, 1)).real
    uxxx, vxxx = to_physical(derivative(u, 3)).real, to_physical(derivative(v, 3)).real
    uvx = ux * vv + uu * vx
    r_u = u_t + uxxx + oc.a3 * vxxx + uu * ux + oc.a1 * vv * vx + oc.a2 * uvx
    r_v = (oc.b1 * v_t + vxxx + oc.b2 * oc.a3 * uxxx + vv * vx
           + oc.b2 * oc.a2 * uu * ux + oc.b2 * oc.a1 * uvx)
    return r_u, r_v


_D1_4TH = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def roundtrip_residual(states, oc: OriginalCoefficients, diag: Diagonalization | None = None):
    """Map reduced-variable snapshots to original variables and measure the
    residual of the original equations.

    ``states`` is a sequence of objects with ``u``, ``v`` and ``t`` at uniform
    spacing.  Time derivatives use fourth-order central differences, so the
    first and last two snapshots produce no output.  Returns
    ``(times, r_u, r_v)`` with discrete L2 norms.
    """
    if diag is None:
        _, diag = reduce(oc)
    states = list(states)
    if len(states) < 5:
        raise ValueError("need at least 5 snapshots for centred differences")
    times = np.array([s.t for s in states])
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("snapshots must be uniformly spaced")
    h = dt[0]
    grid = states[0].u.grid
    orig = [to_original(s.u, s.v, diag) for s in states]
    us = np.array([to_physical(p[0]).real for p in orig])
    vs = np.array([to_physical(p[1]).real for p in orig])
    out_t, out_u, out_v = [], [], []
    for i in range(2, len(states) - 2):
        u_t = _D1_4TH @ us[i - 2:i + 3] / h
        v_t = _D1_4TH @ vs[i - 2:i + 3] / h
        r_u, r_v = original_pointwise_residual(u_t, v_t, orig[i][0], orig[i][1], oc)
        out_t.append(times[i])
        out_u.append(np.sqrt(grid.dx * np.sum(r_u**2)))
        out_v.append(np.sqrt(grid.dx * np.sum(r_v**2)))
    return np.array(out_t), np.array(out_u), np.array(out_v)
