"""Pauli process tomography, average gate fidelity and virtual-Z phase correction.

Channels are handled through their column-stacking superoperator ``S`` with
``vec(E(rho)) = S vec(rho)``. The process matrix uses the lexicographically
ordered Pauli basis, ``E(rho) = sum_mn chi_mn P_m rho P_n``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import minimize

PAULI_LABELS = ("I", "X", "Y", "Z")
_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.diag([1, -1]).astype(complex),
)


def _kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


@lru_cache(maxsize=None)
def pauli_basis(n_qubits: int) -> tuple[tuple[str, ...], np.ndarray]:
    """Labels and stacked matrices ``(4^n, 2^n, 2^n)`` of the n-qubit Pauli basis."""
    labels, mats = [], []
    for idx in itertools.product(range(4), repeat=n_qubits):
        labels.append("".join(PAULI_LABELS[i] for i in idx))
        mats.append(_kron_all(_PAULI[i] for i in idx))
    arr = np.array(mats)
    arr.setflags(write=False)
    return tuple(labels), arr


def _vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def _unvec(v, d):
    return np.asarray(v).reshape(d, d, order="F")


@lru_cache(maxsize=None)
def _chi_basis(n_qubits: int) -> np.ndarray:
    # rows: vec of conj(P_n) (x) P_m, flattened, index m * 4^n + n
    _, paulis = pauli_basis(n_qubits)
    k = len(paulis)
    d = paulis.shape[1]
    b = np.empty((k * k, d**4), dtype=complex)
    for m in range(k):
        for n in range(k):
            b[m * k + n] = np.kron(paulis[n].conj(), paulis[m]).ravel()
    b.setflags(write=False)
    return b


def superop_to_chi(s: np.ndarray, n_qubits: int) -> np.ndarray:
    d = 2**n_qubits
    b = _chi_basis(n_qubits)
    chi = (b.conj() @ np.asarray(s).ravel()) / d**2
    return chi.reshape(4**n_qubits, 4**n_qubits)


def chi_to_superop(chi: np.ndarray, n_qubits: int) -> np.ndarray:
    d = 2**n_qubits
    b = _chi_basis(n_qubits)
    return (np.asarray(chi).ravel() @ b).reshape(d * d, d * d)


def unitary_superop(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    return np.kron(u.conj(), u)


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    chi: np.ndarray
    n_qubits: int

    def __post_init__(self):
        k = 4**self.n_qubits
        if self.chi.shape != (k, k):
            raise ValueError(f"chi must be {k}x{k} for {self.n_qubits} qubit(s)")

    @property
    def labels(self) -> tuple[str, ...]:
        return pauli_basis(self.n_qubits)[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.chi).real)

    @property
    def superoperator(self) -> np.ndarray:
        return chi_to_superop(self.chi, self.n_qubits)

    def is_physical(self, tol: float = 1e-8) -> bool:
        herm = np.linalg.norm(self.chi - self.chi.conj().T) < tol
        return bool(herm and np.linalg.eigvalsh(0.5 * (self.chi + self.chi.conj().T))[0] > -tol)

    def apply(self, rho):
        d = 2**self.n_qubits
        return _unvec(self.superoperator @ _vec(rho), d)

    @classmethod
    def from_superop(cls, s, n_qubits: int) -> "ProcessMatrix":
        return cls(superop_to_chi(s, n_qubits), n_qubits)

    @classmethod
    def from_unitary(cls, u) -> "ProcessMatrix":
        u = np.asarray(u, dtype=complex)
        n = int(round(np.log2(u.shape[0])))
        _, paulis = pauli_basis(n)
        c = np.einsum("kij,ij->k", paulis.conj(), u) / u.shape[0]
        return cls(np.outer(c, c.conj()), n)


_S = (1 + 1j) / 2
_C = (1 - 1j) / 2
_H = 1 / np.sqrt(2)

NAMED_GATES: dict[str, np.ndarray] = {
    "X_pi": np.array([[0, 1], [1, 0]], dtype=complex),
    "X_pi_over_2": _H * np.array([[1, -1j], [-1j, 1]]),
    "Hadamard": _H * np.array([[1, 1], [1, -1]], dtype=complex),
    "identity": np.eye(2, dtype=complex),
    "sqrtSWAP": np.array([[1, 0, 0, 0], [0, _S, _C, 0], [0, _C, _S, 0], [0, 0, 0, 1]]),
    "iSWAP": np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]]),
    "sqrtiSWAP": np.array([[1, 0, 0, 0], [0, _H, 1j * _H, 0], [0, 1j * _H, _H, 0], [0, 0, 0, 1]]),
    "identity2": np.eye(4, dtype=complex),
}


@dataclass(frozen=True, eq=False)
class GateTarget:
    name: str
    unitary: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        d = u.shape[0]
        if u.shape != (d, d) or d not in (2, 4):
            raise ValueError("target must be a 2x2 or 4x4 matrix")
        if np.linalg.norm(u.conj().T @ u - np.eye(d)) > 1e-12 * d:
            raise ValueError(f"target {self.name!r} is not unitary")
        object.__setattr__(self, "unitary", u)

    @property
    def n_qubits(self) -> int:
        return 1 if self.unitary.shape[0] == 2 else 2

    @property
    def chi(self) -> ProcessMatrix:
        return ProcessMatrix.from_unitary(self.unitary)

    @classmethod
    def named(cls, name: str) -> "GateTarget":
        try:
            return cls(name, NAMED_GATES[name])
        except KeyError:
            raise ValueError(f"unknown gate {name!r}; known: {', '.join(NAMED_GATES)}") from None


def preparation_states(n_qubits: int) -> list[np.ndarray]:
    """Product density matrices from {|0>, |1>, |+>, |+i>} per qubit, lexicographic order."""
    kets = [
        np.array([1, 0], dtype=complex),
        np.array([0, 1], dtype=complex),
        np.array([1, 1], dtype=complex) / np.sqrt(2),
        np.array([1, 1j], dtype=complex) / np.sqrt(2),
    ]
    out = []
    for idx in itertools.product(range(4), repeat=n_qubits):
        psi = _kron_all(kets[i][:, None] for i in idx)[:, 0]
        out.append(np.outer(psi, psi.conj()))
    return out


def reconstruct_chi(channel: Callable[[np.ndarray], np.ndarray], n_qubits: int, preps=None) -> ProcessMatrix:
    """Linear-inversion process tomography of ``channel`` from its action on the preparation set."""
    preps = preparation_states(n_qubits) if preps is None else list(preps)
    d = 2**n_qubits
    if len(preps) != d**2:
        raise ValueError(f"need {d * d} informationally complete preparations")
    rin = np.column_stack([_vec(r) for r in preps])
    rout = np.column_stack([_vec(channel(r)) for r in preps])
    s = rout @ np.linalg.inv(rin)
    return ProcessMatrix.from_superop(s, n_qubits)


def _as_process(obj, n_qubits: int) -> ProcessMatrix:
    if isinstance(obj, ProcessMatrix):
        return obj
    if callable(obj):
        return reconstruct_chi(obj, n_qubits)
    m = np.asarray(obj, dtype=complex)
    d = 2**n_qubits
    if m.shape == (d, d):
        return ProcessMatrix.from_superop(unitary_superop(m), n_qubits)
    if m.shape == (d * d, d * d):
        return ProcessMatrix.from_superop(m, n_qubits)
    raise ValueError(f"cannot interpret array of shape {m.shape} as a {n_qubits}-qubit channel")


def process_fidelity(chi_r: ProcessMatrix, target: GateTarget) -> float:
    """``Re Tr(chi_target^dagger chi_R)``."""
    if chi_r.n_qubits != target.n_qubits:
        raise ValueError("dimension mismatch between process matrix and target")
    return float(np.real(np.vdot(target.chi.chi, chi_r.chi)))


def pauli_fidelity(chi_r: ProcessMatrix, target: GateTarget) -> float:
    """Average gate fidelity ``(d F_pro + 1) / (d + 1)`` with ``d = 2^n``."""
    d = 2**target.n_qubits
    return (d * process_fidelity(chi_r, target) + 1) / (d + 1)


def z_phases(angles, n_qubits: int) -> np.ndarray:
    """Diagonal of ``Z(theta_1) (x) ... (x) Z(theta_n)`` with ``Z(theta) = diag(1, e^{i theta})``."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if len(angles) != n_qubits:
        raise ValueError("one angle per qubit")
    bits = np.array(list(itertools.product((0, 1), repeat=n_qubits)))
    return np.exp(1j * bits @ angles)


@dataclass(frozen=True, eq=False)
class VirtualZResult:
    fidelity: float
    uncorrected_fidelity: float
    pre: np.ndarray
    post: np.ndarray
    chi: ProcessMatrix
    target: GateTarget = field(repr=False)


def _quadratic_kernel(chi: ProcessMatrix) -> np.ndarray:
    # F_pro(U') = vec(U')^dagger J vec(U') / d^2 with J = A chi A^dagger, A = [vec(P_m)]
    _, paulis = pauli_basis(chi.n_qubits)
    a = np.column_stack([p.ravel() for p in paulis])
    return a @ chi.chi @ a.conj().T


def virtual_z_correct(channel, target: GateTarget, n_qubits: int | None = None, grid: int = 64, chunk: int = 256) -> VirtualZResult:
    """Best single-qubit Z rotations before and after ``channel`` for reaching ``target``.

    ``channel`` can be a :class:`ProcessMatrix`, a density-matrix map, a
    ``2^n x 2^n`` (possibly non-unitary) propagator, or a superoperator. The
    search runs on a ``grid``-point lattice per angle followed by a
    Nelder-Mead polish of the best lattice point; for two qubits the pre-angle
    lattice is swept analytically for every post-angle point. Returned angles
    ``pre``/``post`` define ``E_c = Z(post) o E o Z(pre)``.
    """
    n = target.n_qubits if n_qubits is None else n_qubits
    proc = _as_process(channel, n)
    d = 2**n
    u = target.unitary
    kernel = _quadratic_kernel(proc)
    jk = kernel.reshape(d, d, d, d)  # row index i*d + j matches U.ravel()
    uc = u.conj()

    def f_pro(a, b):
        up = z_phases(a, n)[:, None] * u * z_phases(b, n)[None, :]
        v = up.ravel()
        return float(np.real(np.vdot(v, kernel @ v))) / d**2

    f0 = f_pro(np.zeros(n), np.zeros(n))

    lattice = np.linspace(0, 2 * np.pi, grid, endpoint=False)
    angle_sets = np.array(list(itertools.product(lattice, repeat=n)))
    zset = np.array([z_phases(a, n) for a in angle_sets])  # (G, d)
    # N(a)_{jl} = sum_{ik} conj(U_ij za_i) J_{ij,kl} U_kl za_k
    best = (-np.inf, None, None)
    for start in range(0, len(zset), chunk):
        za = zset[start : start + chunk]
        left = uc[None, :, :] * za.conj()[:, :, None]  # (c, i, j)
        right = u[None, :, :] * za[:, :, None]  # (c, k, l)
        nmat = np.einsum("cij,ijkl,ckl->cjl", left, jk, right, optimize=True)
        # F(a, b) = zb^dagger N(a) zb
        vals = np.real(np.einsum("bj,cjl,bl->cb", zset.conj(), nmat, zset, optimize=True)) / d**2
        c, b = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[c, b] > best[0]:
            best = (vals[c, b], angle_sets[start + c], angle_sets[b])
    _, a0, b0 = best

    def neg(x):
        return -f_pro(x[:n], x[n:])

    res = minimize(neg, np.concatenate([a0, b0]), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000 * n})
    a, b = (res.x[:n], res.x[n:]) if -res.fun >= best[0] else (a0, b0)
    fbest = max(-res.fun, best[0], f0)
    if fbest == f0:
        a, b = np.zeros(n), np.zeros(n)
    post, pre = -np.mod(a, 2 * np.pi), -np.mod(b, 2 * np.pi)
    post, pre = np.mod(post, 2 * np.pi), np.mod(pre, 2 * np.pi)
    zpost, zpre = np.diag(z_phases(post, n)), np.diag(z_phases(pre, n))
    s = unitary_superop(zpost) @ proc.superoperator @ unitary_superop(zpre)
    corrected = ProcessMatrix.from_superop(s, n)
    return VirtualZResult(
        fidelity=pauli_fidelity(corrected, target),
        uncorrected_fidelity=(d * f0 + 1) / (d + 1),
        pre=pre,
        post=post,
        chi=corrected,
        target=target,
    )


def process_matrix_report(chi_r: ProcessMatrix, target: GateTarget) -> dict:
    """|chi_R|, |chi_R - chi_target| and summary numbers for plotting."""
    ideal = target.chi.chi
    dev = np.abs(chi_r.chi - ideal)
    return {
        "labels": list(chi_r.labels),
        "abs_chi": np.abs(chi_r.chi),
        "deviation": dev,
        "max_deviation": float(dev.max()),
        "fidelity": pauli_fidelity(chi_r, target),
        "trace": chi_r.trace,
    }
