"""Conserved functionals, local norms, spectral-decay fits, refinement
studies and discrete Bourgain-space probes."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .dynamics import Absorber, State, Trajectory, integrate, smooth_step
from .errors import IntegrationFault
from .model import Diagonalization, OriginalCoefficients, reduce, to_original
from .operators import SpaceTimeBlock
from .rough_data import dirac_approx
from .series import DiagnosticsSeries
from .spectral import Field, SpectralGrid, derivative, sobolev_norm, to_spectral

log = logging.getLogger(__name__)

DRIFT_FLOOR = 1e-14
TAPERS = ("bump", "periodic")


# -- conserved quantities -------------------------------------------------------

class Conserved(NamedTuple):
    E1u: float
    E1v: float
    E3: float
    E4: float


def conserved(state: State, oc: OriginalCoefficients) -> Conserved:
    """Mass of each component, the energy and the Hamiltonian, in original variables.

    ``E3 = int b2 u^2 + b1 v^2`` and ``E4 = int b2 u_x^2 + v_x^2 + 2 b2 a3 u_x v_x
    - b2 u^3/3 - v^3/3 - b2 a2 u^2 v - b2 a1 u v^2``.  Integrals of polynomial
    densities are grid sums; they are exact for band-limited fields whose
    product stays below the grid Nyquist frequency.
    """
    grid = state.grid
    dx = grid.dx
    u = state.u.values
    v = state.v.values
    ux = derivative(state.u, 1).values
    vx = derivative(state.v, 1).values
    a1, a2, a3, b1, b2 = oc.a1, oc.a2, oc.a3, oc.b1, oc.b2
    e1u = dx * np.sqrt(grid.N) * state.u.coeffs[0].real
    e1v = dx * np.sqrt(grid.N) * state.v.coeffs[0].real
    e3 = dx * np.sum(b2 * u * u + b1 * v * v)
    density = (b2 * ux * ux + vx * vx + 2 * b2 * a3 * ux * vx
               - b2 * u**3 / 3 - v**3 / 3 - b2 * a2 * u * u * v - b2 * a1 * u * v * v)
    return Conserved(float(e1u), float(e1v), float(e3), float(dx * np.sum(density)))


def _original_state(state: State, diag: Diagonalization | None) -> State:
    if diag is None:
        return state
    u, v = to_original(state.u, state.v, diag)
    return State(u, v, state.t)


class ConservationObserver:
    """Integrator observer recording :func:`conserved` at each call.

    Pass ``diag`` when observing a reduced-system run so states are mapped
    back to original variables first.
    """

    def __init__(self, oc: OriginalCoefficients, diag: Diagonalization | None = None):
        self.oc = oc
        self.diag = diag
        self.times = []
        self.values = []

    def __call__(self, state: State):
        self.times.append(state.t)
        self.values.append(conserved(_original_state(state, self.diag), self.oc))

    def series(self) -> DiagnosticsSeries:
        arr = np.array(self.values, dtype=float).reshape(-1, 4)
        return DiagnosticsSeries(np.array(self.times), dict(zip(Conserved._fields, arr.T)))


def conservation_drift(traj: Trajectory, oc: OriginalCoefficients,
                       diag: Diagonalization | None = None) -> DiagnosticsSeries:
    """Relative drift ``|Q(t) - Q(0)| / max(|Q(0)|, 1e-14)`` of each conserved channel."""
    if len(traj.states) < 2:
        raise ValueError("conservation_drift needs at least 2 states")
    obs = ConservationObserver(oc, diag)
    for st in traj.states:
        obs(st)
    raw = obs.series()
    out = {}
    for name in raw.names:
        q = raw[name]
        out[name] = np.abs(q - q[0]) / max(abs(q[0]), DRIFT_FLOOR)
    return DiagnosticsSeries(raw.times, out)


def boundary_mass_fraction(field: Field, fraction: float = 0.1) -> float:
    """Share of ``int |f|`` lying within ``fraction * L`` of the periodic seam.

    A sentinel for whole-line runs on the torus: radiation reaching the seam
    wraps around and re-enters from the other side.
    """
    grid = field.grid
    f = np.abs(field.values)
    total = f.sum()
    if total == 0:
        return 0.0
    near = np.abs(grid.x) >= (0.5 - fraction) * grid.L
    return float(f[near].sum() / total)


# -- local norms and decay fits --------------------------------------------------

def window_mask(grid: SpectralGrid, center: float, half_width: float,
                edge_fraction: float = 0.25) -> np.ndarray:
    """Plateau bump: 1 within ``(1 - edge_fraction) * half_width`` of ``center``,
    a C-infinity ramp to 0 at ``half_width``.  Identically 1 when the window
    is the whole domain."""
    if half_width >= 0.5 * grid.L:
        return np.ones(grid.N)
    edge = edge_fraction * half_width
    d = np.abs(grid.x - center)
    return 1.0 - smooth_step((d - (half_width - edge)) / edge)


def windowed_sobolev(field: Field, center: float, half_width: float, k: int = 1) -> float:
    """H^k norm of ``field`` localised by :func:`window_mask`."""
    grid = field.grid
    if int(k) != k or not 0 <= k <= 4:
        raise ValueError("k must be an integer in 0..4")
    if not half_width > 0 or abs(center) + half_width > 0.5 * grid.L * (1 + 1e-12):
        raise ValueError(
            f"window [{center - half_width:g}, {center + half_width:g}] is not inside "
            f"[{-grid.L / 2:g}, {grid.L / 2:g}]"
        )
    mask = window_mask(grid, center, half_width)
    local = to_spectral(mask * field.physical(), grid)
    return sobolev_norm(local, int(k))


@dataclass(frozen=True)
class GevreyFit:
    sigma: float
    intercept: float
    band: tuple
    residual: float
    n_modes: int = 0

    def __post_init__(self):
        if not self.band[0] < self.band[1]:
            raise ValueError("band must satisfy xi_lo < xi_hi")
        if not np.isfinite(self.sigma):
            raise ValueError("sigma must be finite")

    def as_dict(self) -> dict:
        return {"sigma": self.sigma, "intercept": self.intercept, "band": list(self.band),
                "residual": self.residual, "n_modes": self.n_modes}


def default_band(grid: SpectralGrid) -> tuple[float, float]:
    return grid.xi_max / 8, grid.xi_max / 3


def analyticity_fit(field: Field, band: tuple | None = None, floor: float = 1e-14) -> GevreyFit:
    """Fit ``log|c(xi)| = intercept - sigma |xi|`` over a wavenumber band.

    Magnitudes at ``+xi`` and ``-xi`` are averaged before taking logs; modes
    below ``floor`` times the largest coefficient are discarded.  A large
    ``residual`` flags spectra that are not exponentially decaying.
    """
    grid = field.grid
    lo, hi = band if band is not None else default_band(grid)
    mag = np.abs(field.coeffs)
    k = grid.mode_index
    kabs = np.unique(np.abs(k))
    kabs = kabs[(kabs * grid.dxi >= lo) & (kabs * grid.dxi <= hi)]
    if kabs.size < 16:
        raise ValueError(f"band [{lo:g}, {hi:g}] holds {kabs.size} modes, need >= 16")
    avg = np.array([mag[np.abs(k) == j].mean() for j in kabs])
    keep = avg > floor * max(mag.max(), 1e-300)
    if keep.sum() < 2:
        raise ValueError("no modes above the floor in the fit band")
    xs = kabs[keep] * grid.dxi
    ys = np.log(avg[keep])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (slope * xs + intercept)) ** 2)))
    return GevreyFit(float(-slope), float(intercept), (float(lo), float(hi)), resid, int(keep.sum()))


# -- refinement study ----------------------------------------------------------

@dataclass
class RefinementConfig:
    """Run settings for :func:`refinement_study`.

    The default window ``[-3, 1]`` contains the initial singularity at the
    origin and the region swept by the dispersive tail.
    """

    N: int = 4096
    L: float = 40.0
    dt: float = 2e-4
    coefficients: OriginalCoefficients = field(
        default_factory=lambda: OriginalCoefficients(a1=0.5, a2=0.25, a3=0.4, b1=1.5, b2=0.8)
    )
    x_probe: float = -1.0
    half_width: float = 2.0
    k: int = 2
    amplitude: float = 1.0
    kind: str = "gaussian"
    absorber: dict | None = field(
        default_factory=lambda: {"width": 6.0, "ramp": 4.0, "smoothing": 0.1}
    )

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["coefficients"] = self.coefficients.as_dict()
        return d


def refinement_study(eps_list: Sequence[float], t_probe: float,
                     config: RefinementConfig | None = None) -> list[dict]:
    """Local H^k norm of evolved delta approximations at ``t = 0`` and ``t_probe``.

    For each ``eps`` the reduced system starts from ``u = amplitude *
    dirac_approx(eps)``, ``v = 0``.  Ratios compare each row with the
    previous (larger) ``eps``.  Solver faults mark the row and leave the
    others intact.
    """
    config = config or RefinementConfig()
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or min(eps_list) <= 0:
        raise ValueError("eps_list must be positive and strictly decreasing")
    if not t_probe > 0:
        raise ValueError("t_probe must be positive")
    grid = SpectralGrid(config.N, config.L)
    rc, _ = reduce(config.coefficients)
    absorber = Absorber(grid, **config.absorber) if config.absorber else None
    rows = []
    for eps in eps_list:
        start = time.perf_counter()
        u0 = config.amplitude * dirac_approx(grid, eps, config.kind)
        state = State(u0, Field.zeros(grid))
        row = {"eps": eps, "norm_t0": windowed_sobolev(state.u, config.x_probe,
                                                       config.half_width, config.k)}
        try:
            traj = integrate(state, t_probe, config.dt, rc, absorber=absorber,
                             stride=10**9)
            final = traj.final
            row["norm_probe"] = windowed_sobolev(final.u, config.x_probe, config.half_width,
                                                 config.k)
            row["norm_probe_v"] = windowed_sobolev(final.v, config.x_probe,
                                                   config.half_width, config.k)
            row["boundary_mass"] = boundary_mass_fraction(final.u)
            row["status"] = "ok"
        except IntegrationFault as exc:
            log.warning("refinement run eps=%g failed: %s", eps, exc)
            row.update(norm_probe=float("nan"), norm_probe_v=float("nan"),
                       boundary_mass=float("nan"), status="fault")
        row["seconds"] = time.perf_counter() - start
        rows.append(row)
    for prev, row in zip([None] + rows[:-1], rows):
        for key, name in (("norm_t0", "ratio_t0"), ("norm_probe", "ratio_probe")):
            if prev is None:
                row[name] = float("nan")
            elif prev[key] == 0:
                row[name] = 0.0
            else:
                row[name] = row[key] / prev[key]
    return rows


# -- Bourgain norms ------------------------------------------------------------

def temporal_taper(t) -> np.ndarray:
    """Bump equal to 1 for ``|t| <= 1`` and 0 for ``|t| >= 2`` (C-infinity)."""
    return 1.0 - smooth_step(np.abs(np.asarray(t, dtype=float)) - 1.0)


def _bourgain_weight(grid: SpectralGrid, nt: int, dt: float, s: float, b: float) -> np.ndarray:
    tau = 2 * np.pi * np.fft.fftfreq(nt, d=dt)
    xi = grid.xi
    return ((1.0 + np.abs(tau[:, None] - xi[None, :] ** 3)) ** (2 * b)
            * (1.0 + np.abs(xi[None, :])) ** (2 * s))


def bourgain_norm(block: SpaceTimeBlock, s: float, b: float) -> float:
    """Discrete ``X^s_b`` norm of a tapered space-time block.

    ``||u||^2 = (dx dt / (N Nt)) sum (1 + |tau - xi^3|)^{2b} (1 + |xi|)^{2s} |U|^2``
    with ``U`` the unnormalised two-dimensional DFT; with ``b = s = 0`` this
    is the discrete space-time L2 norm.
    """
    if block.taper not in TAPERS:
        raise ValueError(
            f"block taper {block.taper!r} is not one of {TAPERS}; untapered blocks leak in tau"
        )
    grid = block.grid
    nt = block.times.size
    spec = np.fft.fft2(block.u)
    w = _bourgain_weight(grid, nt, block.dt, s, b)
    total = grid.dx * block.dt / (grid.N * nt) * np.sum(w * np.abs(spec) ** 2)
    return float(np.sqrt(total))


def bilinear_ratio(u: SpaceTimeBlock, v: SpaceTimeBlock, s: float, b: float,
                   b_prime: float) -> float:
    """``||d_x(u v)||_{X^s_{b'-1}} / (||u||_{X^s_b} ||v||_{X^s_b})``; 0 if either factor is 0."""
    den = bourgain_norm(u, s, b) * bourgain_norm(v, s, b)
    if den == 0:
        return 0.0
    prod = u.u * v.u
    dprod = np.fft.ifft(np.fft.fft(prod, axis=1) * (1j * np.where(u.grid.nyquist, 0, u.grid.xi)),
                        axis=1)
    block = SpaceTimeBlock(u.grid, u.times, dprod, taper=u.taper)
    return bourgain_norm(block, s, b_prime - 1.0) / den


def random_block(grid: SpectralGrid, times, rng: np.random.Generator, band: int,
                 modulation: float = 1.0) -> SpaceTimeBlock:
    """Real random field near the dispersion surface, cut off by the temporal taper.

    ``u = psi(t) sum_k a_k exp(i (xi_k x + (xi_k^3 + sigma_k) t)) + c.c.`` over
    ``1 <= k <= band`` with complex normal ``a_k`` and ``sigma_k`` uniform in
    ``[-modulation, modulation]``.
    """
    k = np.arange(1, band + 1)
    xi = grid.dxi * k
    amp = (rng.standard_normal(band) + 1j * rng.standard_normal(band)) / np.sqrt(2 * band)
    sig = rng.uniform(-modulation, modulation, band)
    t = np.asarray(times)[:, None]
    phase = np.exp(1j * (xi[None, :] ** 3 + sig[None, :]) * t)
    coeff = amp[None, :] * phase
    x_part = np.exp(1j * np.outer(xi, grid.x))
    u = 2.0 * (coeff @ x_part).real
    return SpaceTimeBlock(grid, times, temporal_taper(times)[:, None] * u, taper="bump")


@dataclass
class ProbeConfig:
    grid_sizes: tuple = (64, 128, 256)
    periods: float = 16.0
    time_samples: int = 511
    time_half_window: float = 2.5
    modulation: float = 1.0


def bilinear_probe(s: float, b: float, b_prime: float, trials: int = 100, *, seed: int = 0,
                   config: ProbeConfig | None = None) -> dict:
    """Empirical sup of the bilinear ratio over random band-limited blocks.

    Each grid size uses length ``2 pi * periods`` and the band
    ``1 <= k <= N/4 - 1`` so products are alias-free.  ``stability`` is the
    ratio of the largest to the smallest per-N maximum.
    """
    if not s > -0.75:
        raise ValueError("need s > -3/4")
    if not 0.5 < b < b_prime < 7 / 12:
        raise ValueError("need 1/2 < b < b' < 7/12")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    config = config or ProbeConfig()
    rng = np.random.default_rng(seed)
    times = np.linspace(-config.time_half_window, config.time_half_window,
                        config.time_samples)
    per_n = {}
    for n in config.grid_sizes:
        grid = SpectralGrid(n, 2 * np.pi * config.periods)
        ratios, zeros = [], 0
        for _ in range(trials):
            u = random_block(grid, times, rng, n // 4 - 1, config.modulation)
            v = random_block(grid, times, rng, n // 4 - 1, config.modulation)
            r = bilinear_ratio(u, v, s, b, b_prime)
            if r == 0:
                zeros += 1
                log.info("zero block in bilinear probe (N=%d) excluded", n)
                continue
            ratios.append(r)
        arr = np.array(ratios)
        per_n[n] = {
            "max": float(arr.max()) if arr.size else 0.0,
            "median": float(np.median(arr)) if arr.size else 0.0,
            "trials": trials,
            "zero_trials": zeros,
        }
    maxima = [v["max"] for v in per_n.values()]
    finite = all(np.isfinite(m) and m > 0 for m in maxima)
    stability = max(maxima) / min(maxima) if finite else float("inf")
    return {"s": s, "b": b, "b_prime": b_prime, "seed": seed, "per_N": per_n,
            "stability": float(stability), "finite": bool(finite)}
