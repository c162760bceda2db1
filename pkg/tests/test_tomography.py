import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from fluxsim.tomography import (
    NAMED_GATES,
    GateTarget,
    ProcessMatrix,
    pauli_basis,
    pauli_fidelity,
    preparation_states,
    process_matrix_report,
    reconstruct_chi,
    unitary_superop,
    virtual_z_correct,
    z_phases,
)

from oracles import average_gate_fidelity, depolarizing_channel, depolarizing_chi


def _conj(u):
    return lambda rho: u @ rho @ u.conj().T


def test_pauli_labels():
    labels, mats = pauli_basis(2)
    assert labels[:5] == ("II", "IX", "IY", "IZ", "XI")
    assert labels[-1] == "ZZ"
    assert mats.shape == (16, 4, 4)


def test_identity_channel():
    chi = reconstruct_chi(lambda r: r, 2).chi
    expect = np.zeros((16, 16))
    expect[0, 0] = 1
    assert np.allclose(chi, expect, atol=1e-9)


def test_x_pi_channel():
    chi = reconstruct_chi(_conj(NAMED_GATES["X_pi"]), 1).chi
    assert chi[1, 1] == pytest.approx(1, abs=1e-9)
    assert np.sum(np.abs(chi)) == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 0.1, 0.5, 1.0])
def test_depolarizing_chi(p):
    chi = reconstruct_chi(depolarizing_channel(p), 1)
    assert np.allclose(chi.chi, depolarizing_chi(p), atol=1e-9)
    assert chi.is_physical()


def test_depolarizing_fidelity_half():
    chi = reconstruct_chi(depolarizing_channel(1.0), 1)
    for name in ("X_pi", "Hadamard", "identity"):
        assert pauli_fidelity(chi, GateTarget.named(name)) == pytest.approx(0.5, abs=1e-12)


def test_channel_reproduced_on_preparations():
    u = unitary_group.rvs(4, random_state=1)
    chan = _conj(u)
    pm = reconstruct_chi(chan, 2)
    for rho in preparation_states(2):
        assert np.allclose(pm.apply(rho), chan(rho), atol=1e-9)


def test_target_chi_gives_unit_fidelity():
    for name, u in NAMED_GATES.items():
        t = GateTarget(name, u)
        assert pauli_fidelity(t.chi, t) == pytest.approx(1.0, abs=1e-12)


def test_average_fidelity_relation_on_random_unitaries():
    rng = np.random.default_rng(11)
    for k in range(100):
        n = 1 if k % 2 else 2
        d = 2**n
        v = unitary_group.rvs(d, random_state=rng)
        u = unitary_group.rvs(d, random_state=rng)
        chi = reconstruct_chi(_conj(v), n)
        assert pauli_fidelity(chi, GateTarget("u", u)) == pytest.approx(average_gate_fidelity(u, v), abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), p=st.floats(0, 1))
def test_fidelity_bounds_and_physicality(seed, p):
    u = unitary_group.rvs(2, random_state=seed)
    dep = depolarizing_channel(p)
    chi = reconstruct_chi(lambda r: dep(u @ r @ u.conj().T), 1)
    assert chi.is_physical()
    assert abs(chi.trace - 1) < 1e-8
    f = pauli_fidelity(chi, GateTarget.named("Hadamard"))
    assert -1e-12 <= f <= 1 + 1e-12


def test_preparation_order_irrelevant():
    u = unitary_group.rvs(4, random_state=7)
    preps = preparation_states(2)
    perm = np.random.default_rng(0).permutation(len(preps))
    a = reconstruct_chi(_conj(u), 2).chi
    b = reconstruct_chi(_conj(u), 2, preps=[preps[i] for i in perm]).chi
    assert np.allclose(a, b, atol=1e-10)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        pauli_fidelity(reconstruct_chi(lambda r: r, 1), GateTarget.named("sqrtSWAP"))
    with pytest.raises(ValueError):
        GateTarget("bad", np.array([[1, 1], [0, 1]]))
    with pytest.raises(ValueError):
        GateTarget.named("CNOT")


# --- virtual Z ------------------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(alpha=st.floats(0, 2 * np.pi), beta=st.floats(0, 2 * np.pi))
def test_virtual_z_cancels_local_phases(alpha, beta):
    x = NAMED_GATES["X_pi"]
    v = np.diag(z_phases([alpha], 1)) @ x @ np.diag(z_phases([beta], 1))
    res = virtual_z_correct(v, GateTarget.named("X_pi"))
    assert res.fidelity == pytest.approx(1.0, abs=1e-9)
    assert res.fidelity >= res.uncorrected_fidelity - 1e-12


def test_virtual_z_two_qubit():
    u = NAMED_GATES["sqrtSWAP"]
    za, zb = np.diag(z_phases([0.3, 1.1], 2)), np.diag(z_phases([2.0, -0.4], 2))
    res = virtual_z_correct(za @ u @ zb, GateTarget.named("sqrtSWAP"), grid=32)
    assert res.fidelity == pytest.approx(1.0, abs=1e-9)
    # E_c = Z(post) o E o Z(pre) must reproduce the corrected channel
    manual = np.diag(z_phases(res.post, 2)) @ za @ u @ zb @ np.diag(z_phases(res.pre, 2))
    assert average_gate_fidelity(u, manual) == pytest.approx(res.fidelity, abs=1e-9)


def test_virtual_z_exact_gate_unchanged():
    res = virtual_z_correct(NAMED_GATES["X_pi"], GateTarget.named("X_pi"))
    assert res.fidelity == pytest.approx(1.0, abs=1e-12)
    assert res.uncorrected_fidelity == pytest.approx(1.0, abs=1e-12)
    corrected = np.diag(z_phases(res.post, 1)) @ NAMED_GATES["X_pi"] @ np.diag(z_phases(res.pre, 1))
    assert average_gate_fidelity(NAMED_GATES["X_pi"], corrected) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_virtual_z_never_decreases_fidelity(seed):
    v = unitary_group.rvs(2, random_state=seed)
    res = virtual_z_correct(v, GateTarget.named("Hadamard"), grid=16)
    assert res.fidelity >= res.uncorrected_fidelity - 1e-12


def test_virtual_z_accepts_all_channel_forms():
    v = NAMED_GATES["Hadamard"] @ np.diag(z_phases([0.4], 1))
    t = GateTarget.named("Hadamard")
    forms = [v, unitary_superop(v), _conj(v), ProcessMatrix.from_unitary(v)]
    fids = [virtual_z_correct(f, t, n_qubits=1, grid=16).fidelity for f in forms]
    assert np.allclose(fids, 1.0, atol=1e-9)


# --- reports ----------------------------------------------------------------------


def test_report_ideal_and_depolarizing():
    t = GateTarget.named("identity")
    rep = process_matrix_report(t.chi, t)
    assert rep["max_deviation"] < 1e-12
    dep = process_matrix_report(reconstruct_chi(depolarizing_channel(0.2), 1), t)
    off = dep["deviation"] - np.diag(np.diag(dep["deviation"]))
    assert np.max(off) < 1e-9
    assert np.allclose(np.diag(dep["deviation"]), [0.15, 0.05, 0.05, 0.05], atol=1e-9)
    assert dep["labels"] == ["I", "X", "Y", "Z"]


def test_superop_round_trip():
    for n in (1, 2):
        u = unitary_group.rvs(2**n, random_state=n)
        pm = ProcessMatrix.from_unitary(u)
        assert np.allclose(pm.superoperator, unitary_superop(u), atol=1e-12)
        for rho in itertools.islice(preparation_states(n), 3):
            assert np.allclose(pm.apply(rho), u @ rho @ u.conj().T, atol=1e-12)
