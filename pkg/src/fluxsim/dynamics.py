"""Closed- and open-system time evolution.

Hamiltonians are in GHz and times in ns, so the Schrodinger equation reads
``d psi/dt = -2 pi i H(t) psi``. Lindblad rates are plain 1/ns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


class IntegrationError(RuntimeError):
    """The ODE solver failed or the norm/trace drifted beyond tolerance."""


def _as_array(op) -> np.ndarray:
    return np.asarray(getattr(op, "entries", op))


@dataclass(eq=False)
class TimeDependentHamiltonian:
    """``H(t) = static + sum_k f_k(t) * op_k`` with cached operator parts.

    ``breakpoints`` are times where some ``f_k`` has a kink or jump; the
    integrators restart there instead of stepping across.
    """

    static: np.ndarray
    terms: list[tuple[np.ndarray, Callable[[float], float]]] = field(default_factory=list)
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        self.static = np.asarray(_as_array(self.static), dtype=complex)
        self.terms = [(np.asarray(_as_array(op), dtype=complex), f) for op, f in self.terms]

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for op, f in self.terms:
            h += f(t) * op
        return h

    def coefficients(self, t: float) -> list[float]:
        return [f(t) for _, f in self.terms]

    @classmethod
    def constant(cls, h) -> "TimeDependentHamiltonian":
        return cls(_as_array(h))


def _segments(t0: float, t1: float, breakpoints: Sequence[float]) -> list[tuple[float, float]]:
    inner = sorted(b for b in breakpoints if t0 < b < t1)
    edges = [t0, *inner, t1]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _integrate(rhs, y0, t0, t1, breakpoints, rtol, atol, t_eval=None, method="DOP853"):
    """Piecewise adaptive integration restarted at every breakpoint.

    Returns the final state and, when ``t_eval`` is given, ``(t_eval, states)``
    sampled from the dense output of each segment.
    """
    y = np.asarray(y0, dtype=complex)
    samples = None
    if t_eval is not None:
        samples = np.empty((len(y), len(t_eval)), dtype=complex)
        samples[:, np.asarray(t_eval) == t0] = y[:, None]
    for a, b in _segments(t0, t1, breakpoints):
        sol = solve_ivp(rhs, (a, b), y, method=method, rtol=rtol, atol=atol, dense_output=t_eval is not None)
        if not sol.success:
            raise IntegrationError(f"integration failed on [{a:g}, {b:g}] ns: {sol.message}")
        y = sol.y[:, -1]
        if t_eval is not None:
            sel = (t_eval > a) & (t_eval <= b)
            if sel.any():
                samples[:, sel] = sol.sol(t_eval[sel])
                samples[:, t_eval == b] = y[:, None]
    if t_eval is None:
        return y, None
    return y, (np.asarray(t_eval), samples)


def propagate_unitary(
    h: TimeDependentHamiltonian,
    psi0,
    t0: float,
    t1: float,
    tol: float = 1e-10,
    norm_tol: float | None = None,
    t_eval=None,
):
    """Evolve one state (or the columns of a matrix) under ``H(t)`` from ``t0`` to ``t1``.

    Returns the final state with the same shape as ``psi0``; with ``t_eval`` it
    returns ``(final, (times, states))`` where ``states`` has one column block
    per time. Norms are never renormalised: a drift above ``norm_tol`` raises
    :class:`IntegrationError`.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    shape = psi0.shape
    cols = psi0.reshape(h.dim, -1)
    norms0 = np.linalg.norm(cols, axis=0)
    static = -1j * TWO_PI * h.static
    terms = [(-1j * TWO_PI * op, f) for op, f in h.terms]
    ncol = cols.shape[1]

    def rhs(t, y):
        m = y.reshape(h.dim, ncol)
        out = static @ m
        for op, f in terms:
            c = f(t)
            if c:
                out += c * (op @ m)
        return out.ravel()

    atol = tol * 1e-2
    te = None if t_eval is None else np.asarray(t_eval, dtype=float)
    y, traj = _integrate(rhs, cols.ravel(), t0, t1, h.breakpoints, tol, atol, te)
    final = y.reshape(h.dim, ncol)
    drift = np.max(np.abs(np.linalg.norm(final, axis=0) - norms0)) if ncol else 0.0
    limit = max(1e-8, 100 * tol) if norm_tol is None else norm_tol
    if drift > limit:
        raise IntegrationError(f"norm drift {drift:.2e} exceeds {limit:.1e}; tighten tol")
    final = final.reshape(shape)
    if traj is None:
        return final
    times, ys = traj
    return final, (times, ys.reshape(h.dim, ncol, -1) if len(shape) > 1 else ys)


@dataclass(frozen=True, eq=False)
class SubspacePropagation:
    """Columns of the propagator on a set of input states and their projection."""

    final_states: np.ndarray
    projected: np.ndarray
    leakage: np.ndarray


def propagate_unitary_full(
    h: TimeDependentHamiltonian,
    basis_states,
    t0: float,
    t1: float,
    tol: float = 1e-10,
    projector_states=None,
) -> SubspacePropagation:
    """Propagate each column of ``basis_states`` and project onto the computational subspace.

    ``projector_states`` defaults to ``basis_states``; ``projected[a, b]`` is
    ``<a|U|b>`` and ``leakage[b] = 1 - ||P U|b>||^2``.
    """
    basis_states = np.asarray(basis_states, dtype=complex)
    proj = basis_states if projector_states is None else np.asarray(projector_states, dtype=complex)
    final = propagate_unitary(h, basis_states, t0, t1, tol=tol)
    sub = proj.conj().T @ final
    leakage = 1.0 - np.sum(np.abs(sub) ** 2, axis=0)
    return SubspacePropagation(final, sub, leakage)


# ---------------------------------------------------------------------------
# Lindblad
# ---------------------------------------------------------------------------


Rate = float | Callable[[float], float]


@dataclass(eq=False)
class LindbladModel:
    """Hamiltonian plus jump operators ``(rate, L)``; rates may depend on time."""

    hamiltonian: np.ndarray | TimeDependentHamiltonian
    jumps: list[tuple[Rate, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if not isinstance(self.hamiltonian, TimeDependentHamiltonian):
            self.hamiltonian = np.asarray(_as_array(self.hamiltonian), dtype=complex)
        self.jumps = [(r, np.asarray(_as_array(op), dtype=complex)) for r, op in self.jumps]
        for r, _ in self.jumps:
            if not callable(r) and r < 0:
                raise ValueError("jump rates must be non-negative")

    @property
    def is_static(self) -> bool:
        return not isinstance(self.hamiltonian, TimeDependentHamiltonian) and not any(
            callable(r) for r, _ in self.jumps
        )

    @property
    def dim(self) -> int:
        h = self.hamiltonian
        return h.dim if isinstance(h, TimeDependentHamiltonian) else h.shape[0]


def liouvillian(h: np.ndarray, jumps: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Column-stacking superoperator of the Lindblad generator."""
    d = h.shape[0]
    eye = np.eye(d)
    lv = -1j * TWO_PI * (np.kron(eye, h) - np.kron(h.T, eye))
    for rate, op in jumps:
        if rate == 0:
            continue
        ld = op.conj().T @ op
        lv += rate * (np.kron(op.conj(), op) - 0.5 * np.kron(eye, ld) - 0.5 * np.kron(ld.T, eye))
    return lv


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape(d, d, order="F")


def _check_density(rho: np.ndarray, t: float, trace_tol: float) -> None:
    tr = np.trace(rho).real
    if abs(tr - 1) > trace_tol:
        raise IntegrationError(f"trace drifted to {tr:.12f} at t = {t:g} ns")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w[0] < -1e-10:
        logger.warning("density matrix lost positivity at t = %g ns (min eigenvalue %.2e)", t, w[0])


def propagate_lindblad(
    m: LindbladModel,
    rho0,
    t_grid,
    tol: float = 1e-10,
    trace_tol: float = 1e-8,
    eigenbasis: bool = True,
) -> np.ndarray:
    """Density matrices at every time of ``t_grid`` (first entry is the start time).

    Static models are solved exactly with the matrix exponential of the
    Liouvillian, written in the eigenbasis of ``H`` when ``eigenbasis`` is set;
    time-dependent models use the adaptive integrator.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    t_grid = np.asarray(t_grid, dtype=float)
    d = m.dim
    if abs(np.trace(rho0) - 1) > 1e-9 or np.linalg.norm(rho0 - rho0.conj().T) > 1e-9:
        raise ValueError("rho0 must be Hermitian with unit trace")
    out = np.empty((len(t_grid), d, d), dtype=complex)
    if m.is_static:
        h = m.hamiltonian
        jumps = m.jumps
        u = np.eye(d, dtype=complex)
        if eigenbasis:
            _, u = np.linalg.eigh(h)
            h = u.conj().T @ h @ u
            jumps = [(r, u.conj().T @ op @ u) for r, op in jumps]
        lv = liouvillian(h, jumps)
        v0 = _vec(u.conj().T @ rho0 @ u)
        for k, t in enumerate(t_grid):
            rho = _unvec(sla.expm(lv * (t - t_grid[0])) @ v0, d)
            out[k] = u @ rho @ u.conj().T
            _check_density(out[k], t, trace_tol)
        return out

    hfun = m.hamiltonian if isinstance(m.hamiltonian, TimeDependentHamiltonian) else TimeDependentHamiltonian.constant(m.hamiltonian)
    jumps = [((r if callable(r) else (lambda t, r=r: r)), op, op.conj().T @ op) for r, op in m.jumps]

    def rhs(t, y):
        rho = y.reshape(d, d)
        h = hfun(t)
        drho = -1j * TWO_PI * (h @ rho - rho @ h)
        for rate, op, ld in jumps:
            g = rate(t)
            if g:
                drho += g * (op @ rho @ op.conj().T - 0.5 * (ld @ rho + rho @ ld))
        return drho.ravel()

    _, (times, ys) = _integrate(rhs, rho0.ravel(), t_grid[0], t_grid[-1], hfun.breakpoints, tol, tol * 1e-2, t_grid)
    for k in range(len(times)):
        out[k] = ys[:, k].reshape(d, d)
        _check_density(out[k], times[k], trace_tol)
    return out


# ---------------------------------------------------------------------------
# open-system gates in the tracked qubit subspace
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class AdiabaticFrame:
    """Instantaneous eigenstates of ``H(t)`` followed continuously through a pulse.

    ``energies[k]`` and ``states[k]`` hold the tracked levels at ``times[k]``;
    each vector is kept in phase with its predecessor.
    """

    times: np.ndarray
    energies: np.ndarray
    states: np.ndarray


def track_subspace(
    h: TimeDependentHamiltonian, initial_states, t0: float, t1: float, dt: float = 0.01, n: int | None = None
) -> AdiabaticFrame:
    """Follow the eigenvectors that start closest to ``initial_states`` by maximum overlap.

    The grid has ``n`` intervals, by default the fewest with spacing <= ``dt``.
    """
    initial_states = np.asarray(initial_states, dtype=complex)
    m = initial_states.shape[1]
    if n is None:
        n = max(int(np.ceil((t1 - t0) / dt)), 2)
    times = np.linspace(t0, t1, n + 1)
    n_search = min(h.dim, 3 * m + 4)
    prev = initial_states
    energies = np.empty((len(times), m))
    states = np.empty((len(times), h.dim, m), dtype=complex)
    for k, t in enumerate(times):
        e, v = sla.eigh(h(t), subset_by_index=[0, n_search - 1])
        ov = np.abs(prev.conj().T @ v) ** 2
        pick = np.empty(m, dtype=int)
        used: set[int] = set()
        for row in np.argsort(-ov.max(axis=1)):
            choice = next(j for j in np.argsort(-ov[row]) if j not in used)
            pick[row] = choice
            used.add(choice)
        vec = v[:, pick]
        phase = np.sum(prev.conj() * vec, axis=0)
        vec = vec * (np.abs(phase) / np.where(phase == 0, 1, phase)).conj()
        energies[k] = e[pick]
        states[k] = vec
        prev = vec
    return AdiabaticFrame(times, energies, states)


@dataclass(eq=False)
class RateSchedule:
    """Per-qubit relaxation and pure-dephasing rates (1/ns) as functions of time."""

    relaxation: Sequence[Callable[[float], float]]
    dephasing: Sequence[Callable[[float], float]]

    def __post_init__(self):
        if len(self.relaxation) != len(self.dephasing):
            raise ValueError("need one relaxation and one dephasing rate per qubit")

    @property
    def n_qubits(self) -> int:
        return len(self.relaxation)

    @classmethod
    def from_times(cls, t1: Sequence[float], t_phi: Sequence[float]) -> "RateSchedule":
        """Constant rates from coherence times; ``inf`` switches a channel off."""

        def rate(x):
            if x <= 0:
                raise ValueError("coherence times must be positive")
            r = 0.0 if np.isinf(x) else 1.0 / x
            return lambda t: r

        return cls([rate(x) for x in t1], [rate(x) for x in t_phi])


_SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, 0 = lower level
_SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


def _local(op: np.ndarray, which: int, n: int) -> np.ndarray:
    mats = [np.eye(2)] * n
    mats[which] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _polar_unitary(w: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(w)
    return u @ vh


def _dissipator(jumps: Sequence[tuple[float, np.ndarray]], d: int) -> np.ndarray:
    eye = np.eye(d)
    g = np.zeros((d * d, d * d), dtype=complex)
    for rate, op in jumps:
        if rate < 0:
            raise ValueError("negative rate in schedule")
        if rate:
            ld = op.conj().T @ op
            g += rate * (np.kron(op.conj(), op) - 0.5 * np.kron(eye, ld) - 0.5 * np.kron(ld.T, eye))
    return g


def open_system_gate(
    h: TimeDependentHamiltonian,
    basis_states,
    rates: RateSchedule,
    window: tuple[float, float],
    rho0=None,
    dt_track: float = 0.01,
    tol: float = 1e-10,
    frame: AdiabaticFrame | None = None,
):
    """Lindblad evolution of the computational subspace through a pulse.

    ``basis_states`` are the computational eigenstates at the window start,
    ordered as binary labels (|0>, |1> or |00>, |01>, |10>, |11>) where each
    qubit's |1> is its higher level. Relaxation acts as ``|0><1|`` and
    dephasing as ``sigma_z`` of each qubit in the tracked eigenbasis, at rates
    ``1/T1`` and ``1/(2 T_phi)``, so coherences decay as ``exp(-t/T_phi)``.

    The coherent part is the closed-system propagator projected on the
    tracked subspace, ``W(t) = P(t)^dagger U(t) P(t0)``. Dissipation is
    integrated in the interaction picture of its unitary part with the
    exponential midpoint rule on the tracking grid, and ``W(t1)`` is applied
    last, so zero rates reproduce the projected closed-system map exactly.

    With ``rho0`` the final density matrix is returned; without it, the
    ``d^2 x d^2`` column-stacking superoperator. Either is expressed in the
    basis of ``basis_states`` (Schrodinger picture).
    """
    basis_states = np.asarray(basis_states, dtype=complex)
    d = basis_states.shape[1]
    n = int(round(np.log2(d)))
    if 2**n != d or n != rates.n_qubits:
        raise ValueError("basis size must be 2^n for the n qubits in the rate schedule")
    t0, t1 = window
    if frame is None:
        steps = max(int(np.ceil((t1 - t0) / dt_track)), 1)
        frame = track_subspace(h, basis_states, t0, t1, n=2 * steps)
    times = frame.times
    if len(times) % 2 == 0:
        raise ValueError("tracking grid must have an odd number of samples (midpoints)")
    _, (_, ys) = propagate_unitary(h, basis_states, t0, t1, tol=tol, t_eval=times)
    w = np.einsum("tim,ijt->tmj", frame.states.conj(), ys)  # W(t) = P(t)^dagger U(t) P(t0)
    relax = [_local(_SIGMA_MINUS, q, n) for q in range(n)]
    deph = [_local(_SIGMA_Z, q, n) for q in range(n)]
    sup = np.eye(d * d, dtype=complex)
    for k in range(1, len(times), 2):
        tm = times[k]
        u = _polar_unitary(w[k])
        jumps = []
        for q in range(n):
            jumps.append((rates.relaxation[q](tm), u.conj().T @ relax[q] @ u))
            jumps.append((0.5 * rates.dephasing[q](tm), u.conj().T @ deph[q] @ u))
        step = times[k + 1] - times[k - 1]
        sup = sla.expm(_dissipator(jumps, d) * step) @ sup
    wf = w[-1]
    # express the final tracked vectors in the gauge of the input states
    align = basis_states.conj().T @ frame.states[-1]
    wf = align @ wf
    sup = np.kron(wf.conj(), wf) @ sup
    if rho0 is None:
        return sup
    return _unvec(sup @ _vec(np.asarray(rho0, dtype=complex)), d)
