"""Relaxation and dephasing estimates for the tunable-E_J fluxonium.

Dielectric loss drives transitions between all pairs of eigenstates; T1 is
read off the multi-level decay of the initial fluxon's well population.
Flux noise in the two loops sets the pure-dephasing time.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from fluxsim.circuits import (
    Spectrum,
    TunableEjParams,
    build_tunable_ej_hamiltonian,
    diagonalize,
    operator_in_eigenbasis,
    phase_operator,
    replace_field,
)
from fluxsim.dynamics import LindbladModel, propagate_lindblad

logger = logging.getLogger(__name__)

# h / k_B: a level spacing of 1 GHz corresponds to 47.99 mK
H_OVER_KB_MK_PER_GHZ = 47.99243073366
LN2 = np.log(2.0)


@dataclass(frozen=True)
class NoiseEnvironment:
    """Bath temperature, dielectric quality factor model and flux-noise amplitudes.

    ``a1``/``a2`` are flux-noise amplitudes in micro flux quanta for the
    dc-SQUID and rf loop. ``rate_units`` selects whether the dielectric rate
    prefactor is taken in cycles (``f^2 / 4 E_C``, all in GHz) or in angular
    units (an extra factor 2 pi). ``flux_coupling='rf_loop'`` keeps only the
    rf-loop derivative at fixed dc flux; ``'physical'`` differentiates with
    respect to both physical loop fluxes.
    """

    t_eff: float = 60.0
    q_cap_ref: float = 1e5
    q_cap_exponent: float = 0.7
    q_cap_ref_freq: float = 6.0
    a1: float = 10.0
    a2: float = 10.0
    c12: float = 0.5
    rate_units: Literal["cycles", "radians"] = "cycles"
    flux_coupling: Literal["rf_loop", "physical"] = "rf_loop"

    def __post_init__(self):
        if self.t_eff <= 0:
            raise ValueError("t_eff must be positive (mK)")
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("flux-noise amplitudes must be non-negative")
        if abs(self.c12) > 1:
            raise ValueError("|c12| must not exceed 1")
        if self.rate_units not in ("cycles", "radians"):
            raise ValueError("rate_units must be 'cycles' or 'radians'")
        if self.flux_coupling not in ("rf_loop", "physical"):
            raise ValueError("flux_coupling must be 'rf_loop' or 'physical'")

    def q_cap(self, freq):
        """Dielectric quality factor at |freq| (GHz)."""
        return self.q_cap_ref * (self.q_cap_ref_freq / np.abs(freq)) ** self.q_cap_exponent

    def with_temperature(self, t_eff: float) -> "NoiseEnvironment":
        import dataclasses

        return dataclasses.replace(self, t_eff=t_eff)


def thermal_factor(freq, t_eff: float):
    """``coth(|x|/2) / (1 + exp(-x))`` with ``x = h f / k_B T``; ``f > 0`` is a downward transition."""
    x = np.asarray(freq, dtype=float) * H_OVER_KB_MK_PER_GHZ / t_eff
    ax = np.abs(x)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        coth = 1.0 / np.tanh(0.5 * ax)
        # 1/(1+e^{-x}) written to stay finite for large |x|
        occ = np.where(x >= 0, 1.0 / (1.0 + np.exp(-ax)), np.exp(-ax) / (1.0 + np.exp(-ax)))
    return coth * occ


def transition_rate(freq, phi_element, ec: float, env: NoiseEnvironment):
    """Dielectric rate (1/ns) for a transition releasing ``freq`` GHz (negative: absorbing).

    Below 1e-9 GHz the rate is returned as its zero-frequency limit, which is 0:
    the prefactor vanishes faster than the thermal factor diverges.
    """
    freq = np.asarray(freq, dtype=float)
    small = np.abs(freq) < 1e-9
    f = np.where(small, 1.0, freq)
    g = f**2 * np.abs(phi_element) ** 2 / (4 * ec * env.q_cap(f)) * thermal_factor(f, env.t_eff)
    if env.rate_units == "radians":
        g = 2 * np.pi * g
    g = np.where(small, 0.0, g)
    return g if g.ndim else float(g)


def rate_matrix(spec: Spectrum, phi_matrix: np.ndarray, ec: float, env: NoiseEnvironment) -> np.ndarray:
    """``G[i, j]`` = rate from level ``i`` to level ``j`` (1/ns), zero diagonal."""
    e = spec.energies
    freq = e[:, None] - e[None, :]
    g = transition_rate(freq, phi_matrix, ec, env)
    np.fill_diagonal(g, 0.0)
    return g


def dielectric_rate(spec: Spectrum, env: NoiseEnvironment, i: int, j: int, phi_op, ec: float) -> float:
    """Rate of the ``i -> j`` transition; ``phi_op`` is in the basis of ``spec.states``."""
    if i == j:
        raise ValueError("i and j must differ")
    n = len(spec.energies)
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("level index outside the spectrum")
    vi, vj = spec.states[:, i], spec.states[:, j]
    m = np.asarray(getattr(phi_op, "entries", phi_op))
    return float(transition_rate(spec.energies[i] - spec.energies[j], vi.conj() @ m @ vj, ec, env))


# ---------------------------------------------------------------------------
# T1
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class T1Result:
    t1: float
    times: np.ndarray
    signal: np.ndarray
    lower_bound: bool
    init_level: int
    well_levels: np.ndarray
    rates: np.ndarray

    @property
    def flagged(self) -> bool:
        return self.lower_bound


def _well_signs(spec: Spectrum, theta: np.ndarray, tol: float = 1e-3) -> np.ndarray:
    x = np.real(np.einsum("ik,ij,jk->k", spec.states.conj(), theta, spec.states))
    return np.where(np.abs(x) < tol, 0, np.sign(x)).astype(int)


class _RateEvolution:
    """Exact solution of the population master equation via the detailed-balance symmetrisation."""

    def __init__(self, g: np.ndarray, energies: np.ndarray, t_eff: float, p0: np.ndarray):
        w = g.T - np.diag(g.sum(axis=1))  # dp/dt = w p
        boltz = np.exp(-(energies - energies[0]) * H_OVER_KB_MK_PER_GHZ / t_eff)
        self.peq = boltz / boltz.sum()
        s = np.sqrt(self.peq)
        ws = (w * s[None, :]) / s[:, None]
        ws = 0.5 * (ws + ws.T)
        self.lam, self.vec = np.linalg.eigh(ws)
        self.s = s
        self.c = self.vec.T @ (p0 / s)

    def __call__(self, t: float) -> np.ndarray:
        return self.s * (self.vec @ (self.c * np.exp(self.lam * t)))


def extract_t1(
    params: TunableEjParams,
    env: NoiseEnvironment,
    n_levels: int = 16,
    init_level: int | None = None,
    horizon: float = 1e12,
    method: Literal["rate", "lindblad"] = "rate",
    spec: Spectrum | None = None,
) -> T1Result:
    """T1 from the 1/e point of the initial well's excess population.

    The qubit starts in ``init_level`` (default: level 1, the higher fluxon
    state). Every pair of the lowest ``n_levels`` eigenstates is connected by
    dielectric jumps. The observable is the population of all levels sharing
    the initial level's well, minus its equilibrium value, normalised to 1 at
    t = 0. Sample times double until the observable drops below 1/e; the
    crossing is then located on a fine grid with log-linear interpolation.
    ``method='lindblad'`` evolves the full density matrix instead of the
    population equations (identical for a diagonal initial state).
    """
    if n_levels < 4:
        raise ValueError("n_levels must be at least 4")
    if spec is None:
        spec = diagonalize(build_tunable_ej_hamiltonian(params), n_levels)
    phi = operator_in_eigenbasis(spec, phase_operator(params))
    theta = phi - params.phi_center * np.eye(len(phi))
    g = rate_matrix(spec, phi, params.ec, env)
    init = 1 if init_level is None else int(init_level)
    signs = np.real(np.diag(theta))
    side = np.where(np.abs(signs) < 1e-3, 0, np.sign(signs)).astype(int)
    if side[init] == 0:
        logger.warning("initial level is not localised in one well; using its own population")
        proj = np.zeros(n_levels)
        proj[init] = 1.0
    else:
        proj = (side == side[init]).astype(float)
    p0 = np.zeros(n_levels)
    p0[init] = 1.0

    if method == "rate":
        evo = _RateEvolution(g, spec.energies, env.t_eff, p0)
        peq = evo.peq

        def pops(ts):
            return np.array([evo(t) for t in ts])

    elif method == "lindblad":
        jumps = []
        for i in range(n_levels):
            for j in range(n_levels):
                if i != j and g[i, j] > 0:
                    op = np.zeros((n_levels, n_levels))
                    op[j, i] = 1.0
                    jumps.append((g[i, j], op))
        model = LindbladModel(np.diag(spec.energies), jumps)
        rho0 = np.diag(p0).astype(complex)
        evo = _RateEvolution(g, spec.energies, env.t_eff, p0)
        peq = evo.peq

        def pops(ts):
            rho = propagate_lindblad(model, rho0, np.concatenate([[0.0], ts]))[1:]
            return np.real(np.einsum("tii->ti", rho))

    else:
        raise ValueError("method must be 'rate' or 'lindblad'")

    y0 = proj @ (p0 - peq)

    def signal(ts):
        return (pops(ts) @ proj - proj @ peq) / y0

    target = np.exp(-1)
    t_lo, t_hi = 0.0, 1.0
    samples_t, samples_y = [0.0], [1.0]
    lower_bound = False
    while True:
        y = signal([t_hi])[0]
        samples_t.append(t_hi)
        samples_y.append(y)
        if y <= target:
            break
        t_lo = t_hi
        t_hi *= 2
        if t_hi > horizon:
            lower_bound = True
            break
    if lower_bound:
        logger.warning("no 1/e crossing before %.3g ns; T1 reported as a lower bound", horizon)
        return T1Result(t_lo, np.array(samples_t), np.array(samples_y), True, init, np.flatnonzero(proj), g)
    fine = np.linspace(t_lo, t_hi, 65)
    ys = signal(fine)
    k = int(np.argmax(ys <= target))
    ta, tb, ya, yb = fine[k - 1], fine[k], ys[k - 1], ys[k]
    if ya > 0 and yb > 0:
        t1 = ta + (np.log(ya) - np.log(target)) / (np.log(ya) - np.log(yb)) * (tb - ta)
    else:
        t1 = ta + (ya - target) / (ya - yb) * (tb - ta)
    times = np.concatenate([samples_t[:-1], fine])
    order = np.argsort(times)
    sig = np.concatenate([samples_y[:-1], ys])
    return T1Result(float(t1), times[order], sig[order], False, init, np.flatnonzero(proj), g)


# ---------------------------------------------------------------------------
# dephasing
# ---------------------------------------------------------------------------


class DerivativeError(RuntimeError):
    """Finite-difference estimates at step h and h/2 disagree."""


@dataclass(frozen=True)
class DephasingResult:
    t_phi: float
    d_phi1: float  # d f01 / d Phi_1 (GHz per flux quantum)
    d_phi2: float
    unbounded: bool


def _f01(params: TunableEjParams, k: int = 2) -> float:
    spec = diagonalize(build_tunable_ej_hamiltonian(params), k)
    return float(spec.energies[1] - spec.energies[0])


def _physical_point(params: TunableEjParams, phi1: float, phi2: float) -> TunableEjParams:
    # phi1 = Phi_dc, phi2 = Phi_ext - Phi_dc / 2
    return params.replace(phi_dc=phi1, phi_ext=phi2 + 0.5 * phi1)


def _central(f: Callable[[float], float], x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2 * h)


def _derivative(f, x, h, zero_tol, rel_tol=0.01, noise_floor=1e-3):
    d1 = _central(f, x, h)
    d2 = _central(f, x, h / 2)
    if max(abs(d1), abs(d2)) < zero_tol:
        return 0.0
    # eigenvalue round-off divided by the step sets an absolute floor on the disagreement
    if abs(d1 - d2) > rel_tol * max(abs(d1), abs(d2)) + noise_floor:
        raise DerivativeError(f"derivative not converged: {d1:.6g} (h={h:g}) vs {d2:.6g} (h={h / 2:g})")
    return (4 * d2 - d1) / 3


def dephasing_time(params: TunableEjParams, env: NoiseEnvironment, step: float = 1e-5, zero_tol: float = 1e-6) -> DephasingResult:
    """Flux-noise pure-dephasing time (ns).

    ``T_phi = 1 / sqrt(ln 2 (A1'^2 + A2'^2 + 2 c12 A1' A2'))`` with
    ``Ai' = Ai * d f01 / d Phi_i`` and f01 in GHz. With
    ``flux_coupling='physical'`` the fluxes are the dc-SQUID flux
    ``Phi_1 = Phi_dc`` and ``Phi_2 = Phi_ext - Phi_dc / 2``; with
    ``'rf_loop'`` only ``d f01 / d Phi_ext`` at fixed dc flux enters through A2.
    Derivatives below ``zero_tol`` GHz per flux quantum count as zero; if both
    vanish the working point is first-order insensitive and the result is
    unbounded.
    """
    if env.flux_coupling == "physical":
        p1, p2 = params.phi_dc, params.phi_ext - 0.5 * params.phi_dc
        d1 = _derivative(lambda x: _f01(_physical_point(params, x, p2)), p1, step, zero_tol)
        d2 = _derivative(lambda x: _f01(_physical_point(params, p1, x)), p2, step, zero_tol)
    else:
        d1 = 0.0
        d2 = _derivative(lambda x: _f01(params.replace(phi_ext=x)), params.phi_ext, step, zero_tol)
    a1 = env.a1 * 1e-6 * d1
    a2 = env.a2 * 1e-6 * d2
    s = a1**2 + a2**2 + 2 * env.c12 * a1 * a2
    if s <= 0:
        return DephasingResult(np.inf, d1, d2, True)
    return DephasingResult(float(1 / np.sqrt(LN2 * s)), d1, d2, False)


def combine_t2(t1: float, t_phi: float) -> float:
    """``(1/(2 T1) + 1/T_phi)^-1``; infinite inputs switch a channel off."""
    if t1 <= 0 or t_phi <= 0:
        raise ValueError("coherence times must be positive")
    rate = 0.5 / t1 + 1.0 / t_phi
    return np.inf if rate == 0 else 1.0 / rate


@dataclass(frozen=True, eq=False)
class CoherenceReport:
    t1: float
    t2: float
    t_phi: float
    gamma_table: np.ndarray
    phi_ext: float
    phi_dc: float
    ej: float
    t_eff: float
    n_levels: int
    t1_lower_bound: bool = False
    t_phi_unbounded: bool = False

    def as_dict(self) -> dict:
        return {
            "phi_ext": self.phi_ext,
            "phi_dc": self.phi_dc,
            "ej": self.ej,
            "t_eff": self.t_eff,
            "n_levels": self.n_levels,
            "t1_ns": self.t1,
            "t_phi_ns": self.t_phi,
            "t2_ns": self.t2,
            "t1_lower_bound": self.t1_lower_bound,
            "t_phi_unbounded": self.t_phi_unbounded,
        }


def coherence_report(params: TunableEjParams, env: NoiseEnvironment, n_levels: int = 16) -> CoherenceReport:
    r1 = extract_t1(params, env, n_levels)
    rp = dephasing_time(params, env)
    return CoherenceReport(
        t1=r1.t1,
        t2=combine_t2(r1.t1, rp.t_phi),
        t_phi=rp.t_phi,
        gamma_table=r1.rates,
        phi_ext=params.phi_ext,
        phi_dc=params.phi_dc,
        ej=params.ej,
        t_eff=env.t_eff,
        n_levels=n_levels,
        t1_lower_bound=r1.lower_bound,
        t_phi_unbounded=rp.unbounded,
    )


# ---------------------------------------------------------------------------
# sweeps and fits
# ---------------------------------------------------------------------------


COHERENCE_COLUMNS = ("grid", "t_eff", "E01", "T1", "T_phi", "T2")


def _coherence_point(args):
    params, env, n_levels = args
    spec = diagonalize(build_tunable_ej_hamiltonian(params), n_levels)
    r1 = extract_t1(params, env, n_levels, spec=spec)
    rp = dephasing_time(params, env)
    return spec.e01, r1.t1, rp.t_phi, combine_t2(r1.t1, rp.t_phi)


def sweep_coherence(
    params: TunableEjParams,
    path: str,
    grid: Sequence[float],
    envs: Sequence[NoiseEnvironment],
    n_levels: int = 16,
    workers: int = 1,
) -> np.ndarray:
    """T1, T_phi and T2 over a parameter grid for every environment.

    ``path`` names the swept field (``phi_ext``, ``phi_dc`` or the pseudo
    field ``ej``). Rows follow ``COHERENCE_COLUMNS``, grouped by environment in
    input order, so the output does not depend on ``workers``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("sweep grid is empty")
    jobs = [(replace_field(params, path, x), env, n_levels) for env in envs for x in grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_coherence_point, jobs))
    else:
        results = [_coherence_point(j) for j in jobs]
    rows = []
    for (p, env, _), (e01, t1, tphi, t2), x in zip(jobs, results, np.tile(grid, len(envs))):
        rows.append((x, env.t_eff, e01, t1, tphi, t2))
    return np.array(rows, dtype=float)


@dataclass(frozen=True, eq=False)
class ScalingFit:
    gamma: float
    gamma_err: float
    intercepts: dict
    residuals: np.ndarray
    x: np.ndarray


def fit_ej_scaling(ej, t_eff, t1, min_temperatures: int = 3, min_points: int = 5) -> ScalingFit:
    """Pooled fit of ``ln T1 = gamma E_J / k_B T + c_T`` with one intercept per temperature."""
    ej, t_eff, t1 = (np.asarray(a, dtype=float) for a in (ej, t_eff, t1))
    if not (ej.shape == t_eff.shape == t1.shape):
        raise ValueError("ej, t_eff and t1 must have the same shape")
    temps = np.unique(t_eff)
    if len(temps) < min_temperatures or any(np.sum(t_eff == t) < min_points for t in temps):
        raise ValueError(f"need at least {min_temperatures} temperatures with {min_points} E_J points each")
    x = ej * H_OVER_KB_MK_PER_GHZ / t_eff
    y = np.log(t1)
    design = np.column_stack([x] + [(t_eff == t).astype(float) for t in temps])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = len(y) - design.shape[1]
    sigma2 = resid @ resid / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return ScalingFit(
        gamma=float(coef[0]),
        gamma_err=float(np.sqrt(cov[0, 0])),
        intercepts={float(t): float(c) for t, c in zip(temps, coef[1:])},
        residuals=resid,
        x=x,
    )


def staircase_plateaus(ej, t1, min_drop: float = 0.2) -> list[float]:
    """E_J positions where ``d ln T1 / d E_J`` dips, i.e. the plateaus of a staircase.

    A local minimum of the log-slope counts when it lies at least ``min_drop``
    (relative) below the highest slope on each side, up to the neighbouring
    minima or the ends of the grid.
    """
    ej, t1 = np.asarray(ej, dtype=float), np.asarray(t1, dtype=float)
    if ej.size < 5:
        raise ValueError("need at least five points")
    s = np.gradient(np.log(t1), ej)
    minima = [i for i in range(1, len(s) - 1) if s[i] < s[i - 1] and s[i] <= s[i + 1]]
    edges = [0] + minima + [len(s) - 1]
    out = []
    for k, i in enumerate(minima):
        left = s[edges[k] : i].max()
        right = s[i + 1 : edges[k + 2] + 1].max()
        if s[i] <= (1 - min_drop) * min(left, right):
            out.append(float(ej[i]))
    return out


@dataclass(eq=False)
class EjInterpolant:
    """Log-space interpolation of a coherence time versus E_J; refuses to extrapolate."""

    ej: np.ndarray
    times: np.ndarray
    name: str = "T"
    _log: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        order = np.argsort(self.ej)
        self.ej = np.asarray(self.ej, dtype=float)[order]
        self.times = np.asarray(self.times, dtype=float)[order]
        with np.errstate(divide="ignore"):
            self._log = np.log(self.times)

    def __call__(self, ej: float) -> float:
        if not (self.ej[0] - 1e-9 <= ej <= self.ej[-1] + 1e-9):
            raise ValueError(f"{self.name} table covers E_J in [{self.ej[0]:g}, {self.ej[-1]:g}] GHz, not {ej:g}")
        if np.all(np.isinf(self.times)):
            return np.inf
        return float(np.exp(np.interp(ej, self.ej, self._log)))


def coherence_vs_ej(params: TunableEjParams, env: NoiseEnvironment, ej_grid, n_levels: int = 16) -> tuple[EjInterpolant, EjInterpolant]:
    """T1(E_J) and T_phi(E_J) interpolants at fixed rf flux, for pulse rate schedules."""
    ej_grid = np.asarray(ej_grid, dtype=float)
    t1, tphi = [], []
    for ej in ej_grid:
        p = params.with_ej(ej)
        t1.append(extract_t1(p, env, n_levels).t1)
        tphi.append(dephasing_time(p, env).t_phi)
    return EjInterpolant(ej_grid, np.array(t1), "T1"), EjInterpolant(ej_grid, np.array(tphi), "T_phi")
