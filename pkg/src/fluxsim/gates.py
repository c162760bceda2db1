"""Flux-pulse gate models: Hamiltonian assembly, computational frame, simulation and scoring.

A gate model bundles the time-dependent Hamiltonian in a reduced eigenbasis,
the computational states at the idle point and the change of basis from idle
eigenstates to the localised fluxon states that define |0> and |1>.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fluxsim.circuits import (
    CoupledParams,
    Spectrum,
    TunableEjParams,
    diagonalize,
    fix_phases,
    localized_fluxon_basis,
    qubit_block,
)
from fluxsim.dynamics import (
    AdiabaticFrame,
    RateSchedule,
    TimeDependentHamiltonian,
    open_system_gate,
    propagate_unitary,
)
from fluxsim.pulses import FlatTopGaussianPulse, ZDetuneSegment, pulse_support
from fluxsim.tomography import (
    GateTarget,
    ProcessMatrix,
    VirtualZResult,
    unitary_superop,
    virtual_z_correct,
)

logger = logging.getLogger(__name__)

# Josephson energies whose low-lying eigenstates span the reduced basis
DEFAULT_ANCHORS = (12.0, 6.0, 3.0, 1.0)


def _anchors(pulse: FlatTopGaussianPulse, extra: Sequence[float] = ()) -> list[float]:
    pts = {round(float(x), 9) for x in (pulse.baseline, pulse.amplitude, *extra)}
    pts.update(x for x in DEFAULT_ANCHORS if pulse.amplitude <= x <= pulse.baseline)
    return sorted(pts, reverse=True)


def _pulse_breakpoints(p: FlatTopGaussianPulse) -> list[float]:
    t0, t1 = pulse_support(p)
    return [t0, p.center - 0.5 * p.l_flat, p.center + 0.5 * p.l_flat, t1]


def _segment_breakpoints(s: ZDetuneSegment) -> list[float]:
    return [s.t_start, s.t_start + s.ramp, s.t_start + s.ramp + s.duration, s.t_start + s.total_time]


@dataclass(eq=False)
class GateModel:
    """Everything needed to simulate one gate.

    ``idle_states`` are eigenstates of ``H`` at the idle point in the
    reduced basis, ordered by binary computational label, and
    ``idle_energies`` their energies. Column ``k`` of ``to_computational``
    expresses computational state ``k`` in terms of ``idle_states``.
    """

    hamiltonian: TimeDependentHamiltonian
    idle_states: np.ndarray
    idle_energies: np.ndarray
    to_computational: np.ndarray
    window: tuple[float, float]
    n_qubits: int
    ej_schedules: list = field(default_factory=list)
    labels: tuple[str, ...] = ()
    # integrator tolerance that keeps the norm drift below 1e-8 for this model size
    tol: float = 1e-10

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]

    def frame(self, t: float) -> np.ndarray:
        """Idle rotating-frame phases referenced to the window start."""
        return np.exp(2j * np.pi * self.idle_energies * (t - self.window[0]))

    @property
    def computational_states(self) -> np.ndarray:
        return self.idle_states @ self.to_computational


def single_qubit_model(
    params: TunableEjParams,
    pulse: FlatTopGaussianPulse | None,
    z_segments: Sequence[ZDetuneSegment] = (),
    levels: int = 20,
    anchors: Sequence[float] | None = None,
) -> GateModel:
    """Tunable-E_J fluxonium driven by an E_J pulse and optional external-flux detunings.

    ``params.ej`` is ignored in favour of the pulse baseline. Without a pulse
    the qubit idles at ``params.ej`` and only the detunings act.
    """
    if pulse is None:
        pulse = FlatTopGaussianPulse(fwhm=1.0, l_flat=0.0, baseline=params.ej, amplitude=params.ej)
    idle = params.with_ej(pulse.baseline) if pulse.baseline <= params.ej_max else params
    anchors = _anchors(pulse) if anchors is None else list(anchors)
    block = qubit_block(idle, levels=levels, anchors=anchors)
    dim = block.n.shape[0]
    theta = block.phi - idle.phi_center * np.eye(dim)
    terms = [(-block.cos_phi, pulse.value)]
    breaks = _pulse_breakpoints(pulse)
    starts, ends = [pulse_support(pulse)[0]], [pulse_support(pulse)[1]]
    if z_segments:
        segs = list(z_segments)

        def delta(t):
            return 2 * np.pi * sum(s.value(t) for s in segs)

        terms.append((-idle.el * theta, delta))
        terms.append((0.5 * idle.el * np.eye(dim), lambda t: delta(t) ** 2))
        for s in segs:
            breaks += _segment_breakpoints(s)
            starts.append(s.t_start)
            ends.append(s.t_start + s.total_time)
    window = (min(starts), max(ends))
    if pulse.amplitude == pulse.baseline and not z_segments:
        window = (window[0], window[0])
    h = TimeDependentHamiltonian(block.harmonic, terms, tuple(sorted(set(breaks))))

    spec = diagonalize(h(window[0] - 1.0), k=2)
    fb = localized_fluxon_basis(spec, theta)
    return GateModel(
        hamiltonian=h,
        idle_states=spec.states[:, :2],
        idle_energies=spec.energies[:2],
        to_computational=fb.coefficients,
        window=window,
        n_qubits=1,
        ej_schedules=[pulse.value],
        labels=("0", "1"),
    )


def two_qubit_model(
    params: CoupledParams,
    pulses: FlatTopGaussianPulse | Sequence[FlatTopGaussianPulse],
    levels: int = 4,
    anchors: Sequence[float] | None = None,
) -> GateModel:
    """Two capacitively coupled tunable-E_J fluxoniums with one E_J pulse each.

    A single pulse is applied to both qubits. Each qubit is reduced to the
    ``levels`` lowest eigenstates at every anchor E_J before forming the
    product space. Computational states are the idle eigenstates with the
    largest overlap on products of single-qubit fluxon states.
    """
    if isinstance(pulses, FlatTopGaussianPulse):
        pulses = (pulses, pulses)
    p1, p2 = pulses
    qs = (params.q1.with_ej(p1.baseline), params.q2.with_ej(p2.baseline))
    anc = _anchors(p1, (p2.baseline, p2.amplitude)) if anchors is None else list(anchors)
    blocks = [qubit_block(q, levels=levels, anchors=anc) for q in qs]
    d1, d2 = (b.n.shape[0] for b in blocks)
    i1, i2 = np.eye(d1), np.eye(d2)
    static = (
        np.kron(blocks[0].harmonic, i2)
        + np.kron(i1, blocks[1].harmonic)
        + params.coupling * np.kron(blocks[0].n, blocks[1].n)
    )
    terms = [(-np.kron(blocks[0].cos_phi, i2), p1.value), (-np.kron(i1, blocks[1].cos_phi), p2.value)]
    breaks = sorted(set(_pulse_breakpoints(p1) + _pulse_breakpoints(p2)))
    window = (min(pulse_support(p1)[0], pulse_support(p2)[0]), max(pulse_support(p1)[1], pulse_support(p2)[1]))
    h = TimeDependentHamiltonian(static, terms, tuple(breaks))

    # single-qubit fluxon states at the idle point
    locals_ = []
    for b, q in zip(blocks, qs):
        spec = diagonalize(b.hamiltonian, k=2)
        theta = b.phi - q.phi_center * np.eye(b.n.shape[0])
        locals_.append((spec, localized_fluxon_basis(spec, theta)))
    idle = diagonalize(h(window[0] - 1.0), k=min(12, h.dim))
    picks, labels = [], []
    for i, j in itertools.product((0, 1), repeat=2):
        prod = np.kron(locals_[0][0].states[:, i], locals_[1][0].states[:, j])
        ov = np.abs(idle.states.conj().T @ prod) ** 2
        ov[picks] = -1
        picks.append(int(np.argmax(ov)))
        labels.append(f"{i}{j}")
    if len(set(picks)) < 4:
        raise RuntimeError("could not assign computational labels at the idle point")
    states = idle.states[:, picks]
    coeff = np.kron(locals_[0][1].coefficients, locals_[1][1].coefficients)
    return GateModel(
        hamiltonian=h,
        idle_states=states,
        idle_energies=idle.energies[picks],
        to_computational=coeff,
        window=window,
        n_qubits=2,
        ej_schedules=[p1.value, p2.value],
        labels=tuple(labels),
        tol=1e-11,
    )


@dataclass(eq=False)
class GateResult:
    target: GateTarget
    fidelity: float
    leakage: np.ndarray
    propagator: np.ndarray | None
    process: ProcessMatrix
    correction: VirtualZResult
    open_system: bool = False

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    @property
    def mean_leakage(self) -> float:
        return float(np.mean(self.leakage))

    def summary(self) -> dict:
        return {
            "target": self.target.name,
            "open_system": self.open_system,
            "fidelity": self.fidelity,
            "infidelity": self.infidelity,
            "uncorrected_fidelity": self.correction.uncorrected_fidelity,
            "leakage": [float(x) for x in self.leakage],
            "vz_pre": [float(x) for x in self.correction.pre],
            "vz_post": [float(x) for x in self.correction.post],
        }


def gate_propagator(model: GateModel, tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Projected propagator in the computational basis (idle rotating frame) and leakage per input."""
    tol = model.tol if tol is None else tol
    t0, t1 = model.window
    final = propagate_unitary(model.hamiltonian, model.idle_states, t0, t1, tol=tol)
    sub = model.idle_states.conj().T @ final
    leakage = 1.0 - np.sum(np.abs(sub) ** 2, axis=0)
    v = model.frame(t1)[:, None] * sub
    c = model.to_computational
    return c.conj().T @ v @ c, leakage


def simulate_gate(model: GateModel, target: GateTarget, tol: float | None = None, grid: int = 64) -> GateResult:
    """Closed-system gate fidelity after virtual-Z correction."""
    if target.n_qubits != model.n_qubits:
        raise ValueError("target and model act on different numbers of qubits")
    v, leakage = gate_propagator(model, tol)
    corr = virtual_z_correct(v, target, grid=grid)
    return GateResult(target, corr.fidelity, leakage, v, corr.chi, corr)


def rate_schedule(model: GateModel, t1_of_ej, tphi_of_ej) -> RateSchedule:
    """Instantaneous rates following each qubit's E_J(t).

    ``t1_of_ej`` and ``tphi_of_ej`` map E_J (GHz) to times (ns) and are
    typically interpolants from :mod:`fluxsim.coherence`.
    """
    relax, deph = [], []
    for ej in model.ej_schedules:
        relax.append(lambda t, ej=ej: 1.0 / t1_of_ej(float(ej(t))))
        deph.append(lambda t, ej=ej: 1.0 / tphi_of_ej(float(ej(t))))
    return RateSchedule(relax, deph)


def simulate_open_gate(
    model: GateModel,
    target: GateTarget,
    rates: RateSchedule,
    tol: float | None = None,
    dt_track: float = 0.01,
    frame: AdiabaticFrame | None = None,
    grid: int = 64,
) -> GateResult:
    """Qubit-subspace Lindblad gate fidelity after virtual-Z correction.

    Leakage is not modelled here: the tracked subspace is closed by construction.
    """
    t0, t1 = model.window
    tol = model.tol if tol is None else tol
    s = open_system_gate(model.hamiltonian, model.idle_states, rates, model.window, dt_track=dt_track, tol=tol, frame=frame)
    f = np.diag(model.frame(t1))
    c = model.to_computational
    s = unitary_superop(c.conj().T @ f) @ s @ unitary_superop(c)
    corr = virtual_z_correct(s, target, model.n_qubits, grid=grid)
    d = 2**model.n_qubits
    return GateResult(target, corr.fidelity, np.zeros(d), None, corr.chi, corr, open_system=True)


CARDINAL_STATES = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


@dataclass(frozen=True, eq=False)
class GateTrajectory:
    times: np.ndarray
    amplitudes: np.ndarray  # (n_times, 2^n) computational amplitudes in the idle frame
    leakage: np.ndarray
    ej: np.ndarray  # (n_times, n_qubits)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def state_fidelities(self) -> dict[str, np.ndarray]:
        """Overlap with the single-qubit cardinal states (one-qubit gates only)."""
        if self.amplitudes.shape[1] != 2:
            raise ValueError("cardinal-state fidelities are defined for one qubit")
        return {k: np.abs(self.amplitudes @ v.conj()) ** 2 for k, v in CARDINAL_STATES.items()}


def gate_trajectory(model: GateModel, initial, times=None, n: int = 201, tol: float | None = None) -> GateTrajectory:
    """Computational-subspace amplitudes over the gate window for one input state.

    ``initial`` is a computational label such as ``"0"`` or ``"01"``, or a
    vector of computational amplitudes.
    """
    d = 2**model.n_qubits
    if isinstance(initial, str):
        amp0 = np.zeros(d, dtype=complex)
        amp0[model.labels.index(initial)] = 1
    else:
        amp0 = np.asarray(initial, dtype=complex)
    t0, t1 = model.window
    times = np.linspace(t0, t1, n) if times is None else np.asarray(times, dtype=float)
    c = model.to_computational
    psi0 = model.idle_states @ (c @ amp0)
    tol = model.tol if tol is None else tol
    _, (ts, ys) = propagate_unitary(model.hamiltonian, psi0, t0, t1, tol=tol, t_eval=times)
    sub = model.idle_states.conj().T @ ys  # (d, n_t)
    leak = 1.0 - np.sum(np.abs(sub) ** 2, axis=0)
    phases = np.exp(2j * np.pi * np.outer(model.idle_energies, ts - t0))
    amps = (c.conj().T @ (phases * sub)).T
    ej = np.array([[float(f(t)) for f in model.ej_schedules] for t in ts])
    return GateTrajectory(ts, amps, leak, ej)


def fix_global_phase(u: np.ndarray) -> np.ndarray:
    """Strip the global phase so that the largest entry is real positive (for display)."""
    return fix_phases(u.reshape(-1, 1)).reshape(u.shape)
