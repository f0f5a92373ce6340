"""Space-time operator algebra on sampled blocks.

Operators::

    L = d_t + d_x^3          J = x - 3 t d_x^2          P = 3 t d_t + x d_x

Time derivatives use eighth-order central differences, so every application
that differentiates in ``t`` drops four samples at each end of the block.
Space derivatives are spectral and ``x`` is the grid coordinate on
``[-L/2, L/2)``.  Multiplying by ``x`` and then differentiating is only
meaningful when the data vanish near the periodic seam, so the identity
checks require support inside the central half of the domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import Trajectory, UNIT, _uniform_windows, time_derivative_4th
from .errors import SeamError
from .model import ReducedCoefficients
from .series import DiagnosticsSeries
from .spectral import Field, SpectralGrid, derivative_multiplier

D1_CENTRAL_8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
STENCIL_HALF = 4
SEAM_TOL = 1e-10
MAX_MULTINOMIAL_ORDER = 20


@dataclass
class SpaceTimeBlock:
    """Samples ``u[i, j] = u(x_j, t_i)`` (and optionally ``v``) on a uniform time grid.

    ``taper`` names the temporal window already applied to the samples
    (``"bump"`` or ``"periodic"``); it is only consulted by Bourgain norms.
    """

    grid: SpectralGrid
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray | None = None
    taper: str | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u = np.asarray(self.u)
        nt = self.times.size
        if nt < 9 or nt % 2 == 0:
            raise ValueError(f"a block needs an odd number (>= 9) of times, got {nt}")
        steps = np.diff(self.times)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0) or steps[0] <= 0:
            raise ValueError("block times must be uniformly spaced and increasing")
        for arr in (self.u, self.v):
            if arr is not None and arr.shape != (nt, self.grid.N):
                raise ValueError(f"samples must have shape {(nt, self.grid.N)}, got {arr.shape}")

    @classmethod
    def sample(cls, grid: SpectralGrid, times, func: Callable, func_v: Callable | None = None,
               taper: str | None = None) -> "SpaceTimeBlock":
        """Evaluate ``func(x, t)`` on the grid at each time."""
        times = np.asarray(times, dtype=float)
        x = grid.x[None, :]
        t = times[:, None]
        u = np.broadcast_to(func(x, t), (times.size, grid.N)).astype(float)
        v = None if func_v is None else np.broadcast_to(func_v(x, t), (times.size, grid.N)).astype(float)
        return cls(grid, times, u, v, taper)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def center_index(self) -> int:
        return self.times.size // 2

    def with_samples(self, u, trim: int = 0) -> "SpaceTimeBlock":
        """New single-field block on this grid, times trimmed by ``trim`` at each end."""
        times = self.times[trim:self.times.size - trim] if trim else self.times
        return SpaceTimeBlock(self.grid, times, u, None, self.taper, dict(self.metadata))

    def trimmed(self, n: int) -> "SpaceTimeBlock":
        sl = slice(n, self.times.size - n)
        v = None if self.v is None else self.v[sl]
        return replace(self, times=self.times[sl], u=self.u[sl], v=v)

    def align(self, other: "SpaceTimeBlock") -> "SpaceTimeBlock":
        """Restrict to the (centred) times of a shorter block."""
        n = (self.times.size - other.times.size) // 2
        if n < 0 or not np.allclose(self.times[n:self.times.size - n], other.times):
            raise ValueError("blocks are not nested on a common time grid")
        return self.trimmed(n) if n else self

    def __sub__(self, other: "SpaceTimeBlock") -> "SpaceTimeBlock":
        a, b = _common(self, other)
        return a.with_samples(a.u - b.u)

    def __add__(self, other: "SpaceTimeBlock") -> "SpaceTimeBlock":
        a, b = _common(self, other)
        return a.with_samples(a.u + b.u)

    def scaled(self, factor: float) -> "SpaceTimeBlock":
        return self.with_samples(factor * self.u)

    def l2(self) -> float:
        """Discrete space-time L2 norm ``sqrt(dx dt sum |u|^2)``."""
        return float(np.sqrt(self.grid.dx * self.dt * np.sum(np.abs(self.u) ** 2)))


def _common(a: SpaceTimeBlock, b: SpaceTimeBlock):
    if a.grid != b.grid:
        raise ValueError("blocks live on different grids")
    if a.times.size >= b.times.size:
        return a.align(b), b
    return a, b.align(a)


# -- primitive operators -------------------------------------------------------

def _dx(u: np.ndarray, grid: SpectralGrid, order: int) -> np.ndarray:
    mult = derivative_multiplier(grid, order)
    out = np.fft.ifft(np.fft.fft(u, axis=-1) * mult, axis=-1)
    return out.real if np.isrealobj(u) else out


def time_derivative(block: SpaceTimeBlock) -> SpaceTimeBlock:
    """Eighth-order central ``d/dt``; drops four samples at each end."""
    nt = block.times.size
    if nt < 2 * STENCIL_HALF + 1 + 8:
        # the result must itself remain a valid block
        raise ValueError(f"block too short for the time stencil ({nt} samples)")
    out = sum(w * block.u[i:nt - 2 * STENCIL_HALF + i] for i, w in enumerate(D1_CENTRAL_8) if w)
    return block.with_samples(out / block.dt, trim=STENCIL_HALF)


def space_derivative(block: SpaceTimeBlock, order: int = 1) -> SpaceTimeBlock:
    return block.with_samples(_dx(block.u, block.grid, order))


def multiply_x(block: SpaceTimeBlock) -> SpaceTimeBlock:
    return block.with_samples(block.grid.x[None, :] * block.u)


def multiply_t(block: SpaceTimeBlock) -> SpaceTimeBlock:
    return block.with_samples(block.times[:, None] * block.u)


def check_seam(u: np.ndarray, grid: SpectralGrid, what: str = "field"):
    """Raise :class:`SeamError` unless ``u`` is negligible outside ``|x| < L/4``."""
    outer = np.abs(grid.x) >= 0.25 * grid.L
    scale = max(float(np.abs(u).max()), 1.0)
    worst = float(np.abs(u[..., outer]).max()) if outer.any() else 0.0
    if worst > SEAM_TOL * scale:
        raise SeamError(
            f"{what} reaches {worst:.3g} outside the central half of the domain; "
            "x-multiplication would see the periodic seam"
        )


def apply_P(block: SpaceTimeBlock) -> SpaceTimeBlock:
    """``3 t d_t f + x d_x f`` on interior times."""
    fx = space_derivative(block, 1)
    check_seam(fx.u, block.grid, "d_x f")
    ft = time_derivative(block)
    return multiply_t(ft).scaled(3.0) + multiply_x(fx)


def apply_L(block: SpaceTimeBlock) -> SpaceTimeBlock:
    """``d_t f + d_x^3 f`` on interior times."""
    return time_derivative(block) + space_derivative(block, 3)


def apply_J(block: SpaceTimeBlock) -> SpaceTimeBlock:
    """``x f - 3 t d_x^2 f``; pointwise in time, so no samples are lost."""
    return multiply_x(block) - multiply_t(space_derivative(block, 2)).scaled(3.0)


def commutator_residual(which: str, block: SpaceTimeBlock) -> float:
    """Relative discrete L2 residual of an exact operator identity.

    ``LP``: ``L P f - P L f - 3 L f``; ``LJ``: ``L J f - J L f``;
    ``P3dx3``: ``(P + 3) d_x^3 f - d_x^3 P f``.  Normalised by the L2 norm of
    ``f`` over the same times (zero data give zero).
    """
    check_seam(block.u, block.grid, "block")
    if which == "LP":
        lf = apply_L(block)
        res = apply_L(apply_P(block)) - apply_P(lf) - lf.scaled(3.0)
    elif which == "LJ":
        res = apply_L(apply_J(block)) - apply_J(apply_L(block))
    elif which == "P3dx3":
        f3 = space_derivative(block, 3)
        pf3 = apply_P(f3)
        res = (pf3 + f3.align(pf3).scaled(3.0)) - space_derivative(apply_P(block), 3)
    else:
        raise ValueError(f"unknown identity {which!r}; expected LP, LJ or P3dx3")
    scale = block.align(res).l2()
    return res.l2() / scale if scale > 0 else 0.0


# -- multinomial expansion of (P + 2)^k on products ----------------------------------

def multinomial_terms(k: int) -> list[tuple[tuple[int, int, int], int]]:
    """``((k1, k2, k3), k!/(k1! k2! k3!) 2^k1)`` for all compositions of ``k``.

    Exact integers; ``k`` is capped at 20 to keep the expansion tractable.
    """
    if int(k) != k or k < 0 or k > MAX_MULTINOMIAL_ORDER:
        raise ValueError(f"k must be an integer in [0, {MAX_MULTINOMIAL_ORDER}], got {k}")
    k = int(k)
    fk = math.factorial(k)
    terms = []
    for k1 in range(k + 1):
        for k2 in range(k - k1 + 1):
            k3 = k - k1 - k2
            coeff = fk // (math.factorial(k1) * math.factorial(k2) * math.factorial(k3))
            terms.append(((k1, k2, k3), coeff * 2**k1))
    return terms


def coefficient_sum(k: int) -> int:
    """Sum of the scalar expansion coefficients; equals ``4**k``."""
    return sum(c for _, c in multinomial_terms(k))


def _coeffs_for(rc: ReducedCoefficients, family: str):
    if family == "B":
        return rc.a, rc.b, rc.c
    if family == "C":
        return rc.a_tilde, rc.b_tilde, rc.c_tilde
    raise ValueError("family must be 'B' or 'C'")


def bk_expansion(pu: Sequence[Field], pv: Sequence[Field], rc: ReducedCoefficients, k: int,
                 family: str = "B", dealiased: bool = False) -> tuple[Field, Field, Field]:
    """The three quadratic terms of order ``k`` from ``P^j u`` and ``P^j v``.

    With ``S_k(f, g) = sum k!/(k1! k2! k3!) 2^k1 P^k2 f P^k3 g`` this returns
    ``(-(a/2) d_x S_k(u, u), -(b/2) d_x S_k(v, v), -c d_x S_k(u, v))``, or the
    tilde coefficients for ``family="C"``.  With ``dealiased`` the factors
    and products are truncated by the 2/3 rule as in the time stepper.
    """
    if len(pu) < k + 1 or len(pv) < k + 1:
        raise ValueError(f"need P^j u and P^j v for j = 0..{k}")
    grid = pu[0].grid
    ca, cb, cc = _coeffs_for(rc, family)
    mask = grid.dealias_mask if dealiased else np.ones(grid.N, dtype=bool)

    def phys(f: Field):
        return np.fft.ifft(np.where(mask, f.coeffs, 0.0), norm="ortho").real

    up = [phys(f) for f in pu[:k + 1]]
    vp = [phys(f) for f in pv[:k + 1]]
    suu = np.zeros(grid.N)
    svv = np.zeros(grid.N)
    suv = np.zeros(grid.N)
    for (_, k2, k3), coeff in multinomial_terms(k):
        suu += coeff * up[k2] * up[k3]
        svv += coeff * vp[k2] * vp[k3]
        suv += coeff * up[k2] * vp[k3]
    ik = np.where(mask, derivative_multiplier(grid, 1), 0.0)

    def dxf(arr, scale):
        return Field(scale * ik * np.fft.fft(arr, norm="ortho"), grid)

    return dxf(suu, -0.5 * ca), dxf(svv, -0.5 * cb), dxf(suv, -cc)


def leibniz_direct(block: SpaceTimeBlock, rc: ReducedCoefficients, k: int, term: str = "B1") -> Field:
    """``-(a/2) d_x (P + 2)^k (u^2)`` by literal repeated application of ``P + 2``.

    ``term`` selects ``B1`` (``u^2``, coefficient ``a``), ``B2`` (``v^2``,
    ``b``) or ``B3`` (``u v``, ``c``, no factor 1/2).  Evaluated at the
    block's centre time.
    """
    if int(k) != k or not 0 <= k <= 3:
        raise ValueError("leibniz_direct supports 0 <= k <= 3")
    needed = 2 * STENCIL_HALF * k + 9
    if block.times.size < needed:
        raise ValueError(
            f"insufficient stencil width: k={k} needs at least {needed} time samples"
        )
    if term == "B1":
        prod, scale = block.u * block.u, -0.5 * rc.a
    elif term in ("B2", "B3"):
        if block.v is None:
            raise ValueError(f"{term} needs a block with v samples")
        prod = block.v * block.v if term == "B2" else block.u * block.v
        scale = -0.5 * rc.b if term == "B2" else -rc.c
    else:
        raise ValueError("term must be B1, B2 or B3")
    check_seam(block.u, block.grid, "block")
    cur = block.with_samples(prod)
    for _ in range(int(k)):
        cur = apply_P(cur) + cur.scaled(2.0)
    row = cur.u[cur.center_index]
    grid = block.grid
    return Field(scale * derivative_multiplier(grid, 1) * np.fft.fft(row, norm="ortho"), grid)


def dilation_residual(traj: Trajectory, rc: ReducedCoefficients, k: int = 0,
                      dispersion: Sequence[float] = UNIT) -> DiagnosticsSeries:
    """L2 residual of ``t d_x^3 u + P u / 3 - x d_x u / 3 - t (B_0^1 + B_0^2 + B_0^3)``
    and its ``v`` counterpart with the ``C_0`` terms.

    ``P u`` uses the same fourth-order time differences as
    :func:`ckdv.dynamics.pde_residual`, so for ``k = 0`` the result equals
    ``|t|`` times that residual up to rounding.
    """
    if k != 0:
        raise ValueError("only k = 0 is available on computed trajectories")
    if len(traj.states) < 5:
        raise ValueError("dilation_residual needs at least 5 snapshots")
    idx = _uniform_windows(traj.times, 2)
    if not idx:
        raise ValueError("no uniformly spaced interior snapshots")
    grid = traj.states[0].grid
    x = grid.x
    d1 = derivative_multiplier(grid, 1)
    d3 = derivative_multiplier(grid, 3)
    times, ru, rv = [], [], []
    for i in idx:
        st = traj.states[i]
        t = st.t
        out = []
        for comp, speed, family in (("u", dispersion[0], "B"), ("v", dispersion[1], "C")):
            fc = getattr(st, comp).coeffs
            ft = np.fft.ifft(time_derivative_4th(traj, i, comp), norm="ortho")
            fx = np.fft.ifft(d1 * fc, norm="ortho")
            p_f = 3.0 * t * ft + x * fx
            b = bk_expansion([st.u], [st.v], rc, 0, family, dealiased=True)
            bsum = np.fft.ifft(b[0].coeffs + b[1].coeffs + b[2].coeffs, norm="ortho")
            res = (t * speed * np.fft.ifft(d3 * fc, norm="ortho") + p_f / 3.0
                   - x * fx / 3.0 - t * bsum)
            out.append(np.sqrt(grid.dx * np.sum(np.abs(res) ** 2)))
        times.append(t)
        ru.append(out[0])
        rv.append(out[1])
    return DiagnosticsSeries(np.array(times), {"residual_u": ru, "residual_v": rv})
