"""Truncated-basis Hamiltonians for the tunable-E_J and tunable-E_C fluxonium circuits.

The phase mode of a fluxonium is represented in the Fock basis of its harmonic
part, centred on the effective external phase. With ``theta = phi - phi_e`` the
Hamiltonian reads::

    H = w (a^dag a + 1/2) - E_J cos(theta + phi_e),    w = sqrt(8 E_C E_L)

so the kinetic and inductive energies are exactly diagonal and ``cos``/``sin``
of the phase are evaluated as matrix functions of the truncated ``theta``.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12

BASIS_TAGS = ("fock-phi", "charge-theta", "product", "eigen")


# ---------------------------------------------------------------------------
# dc-SQUID mapping
# ---------------------------------------------------------------------------


def squid_effective_ej(ej_max, d, phi_dc):
    """Effective Josephson energy of an asymmetric dc-SQUID.

    ``E_J,max * sqrt(cos^2(pi Phi_dc) + d^2 sin^2(pi Phi_dc))``, with ``phi_dc``
    in flux quanta. Works elementwise on arrays.
    """
    x = np.pi * np.asarray(phi_dc, dtype=float)
    return ej_max * np.sqrt(np.cos(x) ** 2 + d**2 * np.sin(x) ** 2)


def squid_phase_correction(d, phi_dc):
    """Shift of the effective external phase caused by the SQUID asymmetry, in radians."""
    x = np.pi * np.asarray(phi_dc, dtype=float)
    return np.arctan2(d * np.sin(x), np.cos(x))


def ej_to_phi_dc(ej_target, ej_max, d=0.0):
    """Invert :func:`squid_effective_ej` on ``Phi_dc in [0, 0.5]``.

    Raises
    ------
    ValueError
        If ``ej_target`` lies outside ``[d * ej_max, ej_max]``.
    """
    lo, hi = d * ej_max, ej_max
    tol = 1e-12 * ej_max
    if not (lo - tol <= ej_target <= hi + tol):
        raise ValueError(
            f"E_J = {ej_target} GHz is not reachable; the SQUID covers [{lo:g}, {hi:g}] GHz"
        )
    if d >= 1.0:
        return 0.0
    r2 = (ej_target / ej_max) ** 2
    c2 = (r2 - d**2) / (1.0 - d**2)
    c = np.sqrt(min(max(c2, 0.0), 1.0))
    return float(np.arccos(c) / np.pi)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TunableEjParams:
    """One tunable-E_J fluxonium: a fluxonium whose junction is a dc-SQUID.

    ``phi_ext`` and ``phi_dc`` are the rf-loop and dc-SQUID fluxes in units of
    the flux quantum. ``d`` is the junction asymmetry of the SQUID.
    """

    ec: float
    el: float
    ej_max: float = 12.0
    d: float = 0.0
    phi_ext: float = 0.5
    phi_dc: float = 0.0
    n_fock: int = 100

    def __post_init__(self):
        if self.ec <= 0 or self.el <= 0:
            raise ValueError("ec and el must be positive")
        if self.ej_max <= 0:
            raise ValueError("ej_max must be positive")
        if not 0 <= self.d < 1:
            raise ValueError("SQUID asymmetry d must lie in [0, 1)")
        if int(self.n_fock) != self.n_fock or self.n_fock < 10:
            raise ValueError("n_fock must be an integer >= 10")

    @property
    def ej(self) -> float:
        return float(squid_effective_ej(self.ej_max, self.d, self.phi_dc))

    @property
    def phi_center(self) -> float:
        """Effective external phase in radians, including the asymmetry correction."""
        return float(2 * np.pi * self.phi_ext + squid_phase_correction(self.d, self.phi_dc))

    @property
    def plasma_frequency(self) -> float:
        return float(np.sqrt(8 * self.ec * self.el))

    def with_ej(self, ej: float) -> "TunableEjParams":
        """Same circuit with the dc flux set so that the SQUID gives ``ej``."""
        return dataclasses.replace(self, phi_dc=ej_to_phi_dc(ej, self.ej_max, self.d))

    def replace(self, **changes) -> "TunableEjParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TunableEcParams:
    """Tunable-E_C fluxonium: a fluxonium whose island couples to a dc-SQUID transmon mode."""

    ec: float = 0.15
    ec_q: float = 1.0
    el: float = 0.5
    ej_q: float = 3.0
    ej_max: float = 50.0
    d: float = 0.0
    phi_ext: float = 0.495
    phi_dc: float = 0.0
    ng: float = 0.0
    n_fock_phi: int = 60
    n_charge_theta: int = 15

    def __post_init__(self):
        for name in ("ec", "ec_q", "el", "ej_q", "ej_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.d < 1:
            raise ValueError("SQUID asymmetry d must lie in [0, 1)")
        if self.n_charge_theta < 5:
            raise ValueError("n_charge_theta must be >= 5")
        if self.n_fock_phi < 10:
            raise ValueError("n_fock_phi must be >= 10")

    @property
    def ej(self) -> float:
        return float(squid_effective_ej(self.ej_max, self.d, self.phi_dc))

    def with_ej(self, ej: float) -> "TunableEcParams":
        return dataclasses.replace(self, phi_dc=ej_to_phi_dc(ej, self.ej_max, self.d))

    def replace(self, **changes) -> "TunableEcParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class CoupledParams:
    """Two tunable-E_J fluxoniums joined by a coupling capacitor of charging energy ``ec_g``."""

    q1: TunableEjParams
    q2: TunableEjParams
    ec_g: float = 6.67

    def __post_init__(self):
        if self.ec_g <= 0:
            raise ValueError("ec_g must be positive")

    @property
    def coupling(self) -> float:
        """Charge-charge coupling ``8 E_C1 E_C2 / (E_C1 + E_C2 + E_Cg)`` in GHz."""
        return 8 * self.q1.ec * self.q2.ec / (self.q1.ec + self.q2.ec + self.ec_g)

    def with_ej(self, ej: float) -> "CoupledParams":
        return dataclasses.replace(self, q1=self.q1.with_ej(ej), q2=self.q2.with_ej(ej))

    def replace(self, **changes) -> "CoupledParams":
        return dataclasses.replace(self, **changes)


def replace_field(params, path: str, value):
    """``dataclasses.replace`` through a dotted path such as ``"q2.phi_ext"``.

    The pseudo-field ``ej`` sets the dc flux that produces that Josephson energy.
    """
    head, _, rest = path.partition(".")
    if rest:
        return dataclasses.replace(params, **{head: replace_field(getattr(params, head), rest, value)})
    if head == "ej":
        return params.with_ej(value)
    if head == "n_fock" and not isinstance(value, (int, np.integer)):
        value = int(round(value))
    return dataclasses.replace(params, **{head: value})


# ---------------------------------------------------------------------------
# operator containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense operator with a tag naming the basis it is written in."""

    entries: np.ndarray
    basis_tag: str = "fock-phi"

    def __post_init__(self):
        m = np.asarray(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        if self.basis_tag not in BASIS_TAGS:
            raise ValueError(f"unknown basis tag {self.basis_tag!r}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def hermiticity_error(self) -> float:
        m = self.entries
        norm = np.linalg.norm(m)
        return float(np.linalg.norm(m - m.conj().T) / norm) if norm else 0.0

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        return self.hermiticity_error() < rtol

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Spectrum:
    energies: np.ndarray
    states: np.ndarray
    basis_tag: str = "fock-phi"

    def __post_init__(self):
        if np.any(np.diff(self.energies) < -1e-12):
            raise ValueError("energies must be sorted ascending")

    @property
    def e01(self) -> float:
        return float(self.energies[1] - self.energies[0])

    def __len__(self):
        return len(self.energies)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True, eq=False)
class FluxoniumOperators:
    """Fock-basis building blocks of one fluxonium phase mode.

    ``harmonic`` holds ``w (a^dag a + 1/2)``, ``theta`` the phase measured from
    ``center``; ``cos_phi``/``sin_phi`` are functions of the full phase.
    """

    ec: float
    el: float
    center: float
    harmonic: np.ndarray
    theta: np.ndarray
    n: np.ndarray
    cos_phi: np.ndarray
    sin_phi: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.theta + self.center * np.eye(len(self.theta))

    @property
    def oscillator_length(self) -> float:
        return (2 * self.ec / self.el) ** 0.25


@functools.lru_cache(maxsize=64)
def fluxonium_operators(ec: float, el: float, n_fock: int, center: float) -> FluxoniumOperators:
    n_fock = int(n_fock)
    s = (2 * ec / el) ** 0.25
    a = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), 1)
    theta = s * (a + a.T)
    n_op = 0.5j / s * (a.T - a)
    x, v = np.linalg.eigh(theta)
    cos_t = (v * np.cos(x)) @ v.T
    sin_t = (v * np.sin(x)) @ v.T
    cos_phi = np.cos(center) * cos_t - np.sin(center) * sin_t
    sin_phi = np.sin(center) * cos_t + np.cos(center) * sin_t
    harmonic = np.diag(np.sqrt(8 * ec * el) * (np.arange(n_fock) + 0.5))
    ops = FluxoniumOperators(
        ec=ec,
        el=el,
        center=center,
        harmonic=harmonic,
        theta=theta.astype(complex),
        n=n_op,
        cos_phi=_hermitize(cos_phi).astype(complex),
        sin_phi=_hermitize(sin_phi).astype(complex),
    )
    for arr in (ops.harmonic, ops.theta, ops.n, ops.cos_phi, ops.sin_phi):
        arr.setflags(write=False)
    return ops


def tunable_ej_operators(p: TunableEjParams) -> FluxoniumOperators:
    return fluxonium_operators(p.ec, p.el, int(p.n_fock), p.phi_center)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_tunable_ej_hamiltonian(p: TunableEjParams) -> OperatorMatrix:
    """Fock-basis Hamiltonian ``E_C(2n)^2 + E_L/2 (phi - phi_e)^2 - E_J(Phi_dc) cos(phi)``."""
    ops = tunable_ej_operators(p)
    h = ops.harmonic - p.ej * ops.cos_phi
    return OperatorMatrix(_hermitize(h), "fock-phi")


def phase_operator(p: TunableEjParams) -> OperatorMatrix:
    return OperatorMatrix(tunable_ej_operators(p).phi, "fock-phi")


def charge_operator(p: TunableEjParams) -> OperatorMatrix:
    return OperatorMatrix(tunable_ej_operators(p).n, "fock-phi")


def _charge_mode(p: TunableEcParams):
    n_max = int(p.n_charge_theta)
    charges = np.arange(-n_max, n_max + 1, dtype=float)
    dim = len(charges)
    corr = float(squid_phase_correction(p.d, p.phi_dc))
    hop = np.diag(np.full(dim - 1, np.exp(1j * corr)), -1)  # e^{i theta} raises charge
    cos_theta = 0.5 * (hop + hop.conj().T)
    h = np.diag(4 * (p.ec_q + p.ec) * (charges - p.ng) ** 2) - p.ej * cos_theta
    # the offset charge rides along with n_C in the cross term too, keeping n_g 1-periodic
    return _hermitize(h), np.diag(charges - p.ng).astype(complex), cos_theta


def build_tunable_ec_hamiltonian(p: TunableEcParams, coupling: bool = True) -> OperatorMatrix:
    """Product-basis Hamiltonian of the tunable-E_C circuit, (Fock phi) x (charge theta).

    ``coupling=False`` drops the ``-8 E_C^q (n_C - n_g) n_q`` cross term.
    """
    ops = fluxonium_operators(p.ec_q, p.el, int(p.n_fock_phi), 2 * np.pi * p.phi_ext)
    h_phi = ops.harmonic - p.ej_q * ops.cos_phi
    h_theta, n_c, _ = _charge_mode(p)
    eye_phi = np.eye(h_phi.shape[0])
    eye_theta = np.eye(h_theta.shape[0])
    h = np.kron(h_phi, eye_theta) + np.kron(eye_phi, h_theta)
    if coupling:
        h = h - 8 * p.ec_q * np.kron(ops.n, n_c)
    return OperatorMatrix(_hermitize(h), "product")


def tunable_ec_phase_operator(p: TunableEcParams) -> OperatorMatrix:
    ops = fluxonium_operators(p.ec_q, p.el, int(p.n_fock_phi), 2 * np.pi * p.phi_ext)
    return OperatorMatrix(np.kron(ops.phi, np.eye(2 * int(p.n_charge_theta) + 1)), "product")


@dataclass(frozen=True, eq=False)
class QubitBlock:
    """Operators of one coupled qubit in the basis used for the product space."""

    harmonic: np.ndarray
    cos_phi: np.ndarray
    n: np.ndarray
    phi: np.ndarray
    ej: float
    basis_tag: str

    @property
    def hamiltonian(self) -> np.ndarray:
        return self.harmonic - self.ej * self.cos_phi


def qubit_block(p: TunableEjParams, levels: int | None = None, anchors: Sequence[float] | None = None) -> QubitBlock:
    """Operators of one qubit, optionally compressed to a low-energy subspace.

    With ``levels`` set, the subspace is spanned by the ``levels`` lowest
    eigenstates at each Josephson energy in ``anchors`` (default: the
    current E_J only), orthonormalised. Several anchors keep both the heavy and
    light regime accurate in one basis, which time-dependent E_J needs.
    """
    ops = tunable_ej_operators(p)
    if levels is None:
        return QubitBlock(ops.harmonic, ops.cos_phi, ops.n, ops.phi, p.ej, "fock-phi")
    anchors = [p.ej] if anchors is None else list(anchors)
    vecs = []
    for ej in anchors:
        _, v = sla.eigh(ops.harmonic - ej * ops.cos_phi, subset_by_index=[0, levels - 1])
        vecs.append(v)
    stacked = np.hstack(vecs)
    u, s, _ = np.linalg.svd(stacked, full_matrices=False)
    basis = u[:, s > 1e-8 * s[0]]
    # rotate into the eigenbasis at the current E_J so that low indices are low energies
    h_red = basis.conj().T @ (ops.harmonic - p.ej * ops.cos_phi) @ basis
    _, w = np.linalg.eigh(_hermitize(h_red))
    basis = basis @ w

    def proj(m):
        return _hermitize(basis.conj().T @ m @ basis)

    return QubitBlock(proj(ops.harmonic), proj(ops.cos_phi), proj(ops.n), proj(ops.phi), p.ej, "eigen")


def build_coupled_hamiltonian(p: CoupledParams, levels: int | None = None) -> OperatorMatrix:
    """``H1 x I + I x H2 + g n1 x n2`` with ``g = 8 E_C1 E_C2 / (E_C1 + E_C2 + E_Cg)``.

    ``levels=None`` keeps each qubit's full Fock basis (dimension ``n_fock^2``);
    otherwise each qubit is first reduced to its ``levels`` lowest eigenstates.
    """
    b1 = qubit_block(p.q1, levels)
    b2 = qubit_block(p.q2, levels)
    return OperatorMatrix(_coupled_matrix(b1, b2, p.coupling), "product" if levels is None else "eigen")


def _coupled_matrix(b1: QubitBlock, b2: QubitBlock, g: float) -> np.ndarray:
    i1 = np.eye(b1.n.shape[0])
    i2 = np.eye(b2.n.shape[0])
    h = np.kron(b1.hamiltonian, i2) + np.kron(i1, b2.hamiltonian) + g * np.kron(b1.n, b2.n)
    return _hermitize(h)


def coupled_operator(p: CoupledParams, name: str, levels: int | None = None) -> OperatorMatrix:
    """Embedded single-qubit operator, ``name`` in {n1, n2, phi1, phi2}."""
    b1 = qubit_block(p.q1, levels)
    b2 = qubit_block(p.q2, levels)
    i1 = np.eye(b1.n.shape[0])
    i2 = np.eye(b2.n.shape[0])
    table = {
        "n1": np.kron(b1.n, i2),
        "n2": np.kron(i1, b2.n),
        "phi1": np.kron(b1.phi, i2),
        "phi2": np.kron(i1, b2.phi),
    }
    return OperatorMatrix(table[name], "product" if levels is None else "eigen")


def single_excitation_splitting(p: CoupledParams, levels: int = 10) -> float:
    """Gap between the two lowest excited levels of the coupled pair (GHz).

    Near resonance these are the hybridised |01> and |10> states, so the
    minimum over flux is the anti-crossing size.
    """
    e = diagonalize(build_coupled_hamiltonian(p, levels), 3).energies
    return float(e[2] - e[1])


# ---------------------------------------------------------------------------
# diagonalisation and matrix elements
# ---------------------------------------------------------------------------


def fix_phases(states: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real and positive."""
    states = np.array(states, dtype=complex, copy=True)
    idx = np.argmax(np.abs(states), axis=0)
    lead = states[idx, np.arange(states.shape[1])]
    return states * (np.abs(lead) / lead)[None, :]


def diagonalize(h, k: int | None = None) -> Spectrum:
    """The ``k`` lowest eigenpairs of a Hermitian operator, ascending, phase-fixed."""
    if isinstance(h, OperatorMatrix):
        m, tag = h.entries, h.basis_tag
    else:
        m, tag = np.asarray(h), "eigen"
    dim = m.shape[0]
    k = dim if k is None else int(k)
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}], got {k}")
    norm = np.linalg.norm(m)
    if norm and np.linalg.norm(m - m.conj().T) / norm > 1e-10:
        raise ValueError("operator is not Hermitian")
    e, v = sla.eigh(_hermitize(m), subset_by_index=[0, k - 1], driver="evr")
    return Spectrum(e, fix_phases(v), tag)


def matrix_element(spec: Spectrum, op, i: int, j: int) -> complex:
    """``<i|op|j>`` between eigenstates of ``spec``."""
    k = len(spec)
    if not (0 <= i < k and 0 <= j < k):
        raise IndexError(f"levels ({i}, {j}) outside the {k} computed states")
    m = op.entries if isinstance(op, OperatorMatrix) else np.asarray(op)
    return complex(spec.states[:, i].conj() @ m @ spec.states[:, j])


def operator_in_eigenbasis(spec: Spectrum, op) -> np.ndarray:
    m = op.entries if isinstance(op, OperatorMatrix) else np.asarray(op)
    return spec.states.conj().T @ m @ spec.states


def phi01(spec: Spectrum, phi_op) -> float:
    return abs(matrix_element(spec, phi_op, 0, 1))


# ---------------------------------------------------------------------------
# computational basis
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FluxonBasis:
    """Left/right fluxon states expressed in the basis of the spectrum they came from."""

    zero: np.ndarray
    one: np.ndarray
    rotated: bool
    flagged: bool = False
    # coefficients of (zero, one) on the two lowest eigenstates, as columns
    coefficients: np.ndarray = field(default_factory=lambda: np.eye(2, dtype=complex))

    @property
    def states(self) -> np.ndarray:
        return np.column_stack([self.zero, self.one])


def localized_fluxon_basis(spec: Spectrum, theta_op, split_tol: float = 1e-12) -> FluxonBasis:
    """Computational states localised in the left (|0>) and right (|1>) well.

    ``theta_op`` is the phase measured from the centre of the double well, so
    that its sign tells the wells apart. Bare eigenstates are kept when they are
    already localised on opposite sides; otherwise the pair is rotated into the
    eigenvectors of the projected phase.
    """
    if len(spec) < 2:
        raise ValueError("need the two lowest eigenstates")
    m = theta_op.entries if isinstance(theta_op, OperatorMatrix) else np.asarray(theta_op)
    v = spec.states[:, :2]
    x = _hermitize(v.conj().T @ m @ v)
    x00, x11, x01 = x[0, 0].real, x[1, 1].real, abs(x[0, 1])
    if x00 * x11 < 0 and x01 < min(abs(x00), abs(x11)):
        coeff = np.eye(2, dtype=complex)
        if x00 > 0:
            coeff = coeff[:, ::-1]
        return FluxonBasis(v @ coeff[:, 0], v @ coeff[:, 1], rotated=False, coefficients=coeff)
    w, c = np.linalg.eigh(x)
    flagged = False
    if spec.e01 < split_tol and abs(w[1] - w[0]) < 1e-8:
        logger.warning("fluxon assignment ill-defined: degenerate pair without well separation")
        flagged = True
        c = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    c = fix_phases(c)
    return FluxonBasis(v @ c[:, 0], v @ c[:, 1], rotated=True, flagged=flagged, coefficients=c)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepTable:
    field: str
    grid: np.ndarray
    energies: np.ndarray
    e01: np.ndarray
    phi01: np.ndarray

    def columns(self) -> list[str]:
        return ["grid"] + [f"E{i}" for i in range(self.energies.shape[1])] + ["E01", "phi01"]

    def rows(self) -> np.ndarray:
        return np.column_stack([self.grid, self.energies, self.e01, self.phi01])


def _sweep_point(args):
    params, path, value, k, levels = args
    p = replace_field(params, path, value)
    if isinstance(p, TunableEjParams):
        h, op = build_tunable_ej_hamiltonian(p), phase_operator(p)
    elif isinstance(p, TunableEcParams):
        h, op = build_tunable_ec_hamiltonian(p), tunable_ec_phase_operator(p)
    elif isinstance(p, CoupledParams):
        h, op = build_coupled_hamiltonian(p, levels), coupled_operator(p, "phi1", levels)
    else:
        raise TypeError(f"cannot sweep {type(p).__name__}")
    spec = diagonalize(h, k)
    return spec.energies, spec.e01, phi01(spec, op)


def sweep_spectrum(params, path: str, grid, k: int = 6, levels: int | None = 12, workers: int = 1) -> SweepTable:
    """Diagonalise ``params`` with ``path`` set to each grid value.

    ``levels`` only applies to coupled circuits. Rows come back in grid order
    whatever the worker count.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("sweep grid is empty")
    d = np.diff(grid)
    if grid.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("sweep grid must be strictly monotone")
    jobs = [(params, path, float(x), k, levels) for x in grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_sweep_point, jobs))
    else:
        out = [_sweep_point(j) for j in jobs]
    energies = np.array([o[0] for o in out])
    return SweepTable(path, grid, energies, np.array([o[1] for o in out]), np.array([o[2] for o in out]))


# ---------------------------------------------------------------------------
# real-space views
# ---------------------------------------------------------------------------


def hermite_functions(n: int, x: np.ndarray) -> np.ndarray:
    """Normalised Hermite functions ``psi_0..psi_{n-1}`` at ``x`` (shape ``(n, len(x))``)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((n, x.size))
    out[0] = np.pi**-0.25 * np.exp(-(x**2) / 2)
    if n > 1:
        out[1] = np.sqrt(2) * x * out[0]
    for k in range(2, n):
        out[k] = np.sqrt(2 / k) * x * out[k - 1] - np.sqrt((k - 1) / k) * out[k - 2]
    return out


def fock_to_grid(state: np.ndarray, ec: float, el: float, center: float, phi_grid) -> np.ndarray:
    """Wavefunction ``psi(phi)`` of a Fock-basis state on a phase grid."""
    s = (2 * ec / el) ** 0.25
    length = s * np.sqrt(2)  # theta = length * xi, with xi the dimensionless quadrature
    xi = (np.asarray(phi_grid) - center) / length
    basis = hermite_functions(len(state), xi)
    # n_op = i/(2s)(a^dag - a) makes the Fock states real Hermite functions with this sign
    return (state @ basis) / np.sqrt(length)


def tunable_ej_potential(p: TunableEjParams, phi_grid) -> np.ndarray:
    phi = np.asarray(phi_grid, dtype=float)
    return 0.5 * p.el * (phi - p.phi_center) ** 2 - p.ej * np.cos(phi)


def tunable_ec_potential(p: TunableEcParams, phi_grid, theta: float = 0.0) -> np.ndarray:
    phi = np.asarray(phi_grid, dtype=float)
    corr = float(squid_phase_correction(p.d, p.phi_dc))
    return (
        0.5 * p.el * (phi - 2 * np.pi * p.phi_ext) ** 2
        - p.ej_q * np.cos(phi)
        - p.ej * np.cos(theta + corr)
    )


def tunable_ec_cross_section(p: TunableEcParams, state: np.ndarray, phi_grid, theta: float = 0.0) -> np.ndarray:
    """``psi(phi, theta)`` of a product-basis state along a fixed-theta cut."""
    n_charge = 2 * int(p.n_charge_theta) + 1
    coeffs = np.asarray(state).reshape(int(p.n_fock_phi), n_charge)
    charges = np.arange(-int(p.n_charge_theta), int(p.n_charge_theta) + 1)
    theta_part = coeffs @ (np.exp(1j * charges * theta) / np.sqrt(2 * np.pi))
    return fock_to_grid(theta_part, p.ec_q, p.el, 2 * np.pi * p.phi_ext, phi_grid)
