import math

import numpy as np
import pytest

from supchan import channels as ch
from supchan import dilation as dl
from supchan import matkernel as mk
from supchan import states as st
from supchan import superchannel as sup
from supchan.matkernel import DimShape, ShapeError, ValidationError


def rand_sc(d_s, d_e, seed):
    rng = np.random.default_rng(seed)
    raw = st.random_density(d_s * d_e, int(rng.integers(1, d_s * d_e + 1)), rng)
    rho = st.density(raw.mat, DimShape([d_s, d_e], ["S", "E"]))
    return sup.build(st.haar_unitary(d_s * d_e, rng), rho), rng


def entropy_of(mat):
    w = mk.clamp_spectrum(np.linalg.eigvalsh(mat)[::-1])
    return st.entropy_of_spectrum(w)


def test_stinespring_unitary_operation():
    u = st.haar_unitary(2, np.random.default_rng(0))
    form = dl.stinespring(ch.unitary_channel(u))
    assert form.ancilla_dim == 1
    psi = form.psi_abc
    rho = np.outer(psi, psi.conj())
    shape = form.shape_abc(2)
    s_bc = entropy_of(mk.partial_trace(rho, shape, ["b", "c"]))
    s_a = entropy_of(mk.partial_trace(rho, shape, ["a"]))
    assert s_bc <= 1e-10 and s_a <= 1e-10


def test_stinespring_depolarizing_entropy():
    op = ch.depolarizing_channel(2)
    form = dl.stinespring(op)
    psi = form.psi_abc
    rho = np.outer(psi, psi.conj())
    s_bc = entropy_of(mk.partial_trace(rho, form.shape_abc(2), ["b", "c"]))
    assert abs(s_bc - 2 * math.log(2)) <= 1e-10
    assert abs(dl.operation_entropy(op) - 2 * math.log(2)) <= 1e-10


def test_stinespring_reproduces_choi_state():
    rng = np.random.default_rng(1)
    for d in (2, 3):
        for _ in range(10):
            op = ch.random_cptp(d, int(rng.integers(1, d * d + 1)), rng)
            form = dl.stinespring(op)
            assert mk.max_abs(form.v.conj().T @ form.v - np.eye(d)) <= 1e-10
            rho = np.outer(form.psi_abc, form.psi_abc.conj())
            got = mk.partial_trace(rho, form.shape_abc(d), ["b", "c"])
            assert mk.max_abs(got - op.choi_state) <= 1e-10


def test_stinespring_choi_origin_round_trip():
    # operations built from a Choi matrix dilate just as well
    rng = np.random.default_rng(2)
    base = ch.random_cptp(2, 3, rng)
    op = ch.from_choi(base.choi, 2, 2)
    form = dl.stinespring(op)
    rho = np.outer(form.psi_abc, form.psi_abc.conj())
    got = mk.partial_trace(rho, form.shape_abc(2), ["b", "c"])
    assert mk.max_abs(got - op.choi_state) <= 1e-10


def test_stinespring_unitary_completion_properties():
    rng = np.random.default_rng(3)
    op = ch.random_cptp(2, 3, rng)
    form = dl.stinespring(op)
    n = form.ancilla_dim * 2
    assert form.u_ab.shape == (n, n)
    assert mk.max_abs(form.u_ab.conj().T @ form.u_ab - np.eye(n)) <= 1e-9
    # the ancilla-|0> block of U_ab is the isometry itself
    assert mk.max_abs(form.u_ab[:, :2] - form.v) == 0


def test_stinespring_entropies_are_completion_invariant():
    rng = np.random.default_rng(4)
    op = ch.random_cptp(2, 4, rng)
    d = 2
    form1 = dl.stinespring(op)
    n = form1.ancilla_dim * d
    form2 = dl.stinespring(op, pivot_order=list(reversed(range(n))))
    assert mk.max_abs(form1.u_ab - form2.u_ab) > 1e-6  # genuinely different completions
    for form in (form1, form2):
        anc0 = np.zeros(form.ancilla_dim, dtype=complex)
        anc0[0] = 1.0
        beta = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
        # run |0>_a (x) |beta_bc> through U_ab (x) I_c
        inp = np.kron(anc0, beta)
        psi = (np.kron(form.u_ab, np.eye(d)) @ inp)
        assert mk.max_abs(psi - form.psi_abc) <= 1e-10


def test_purification_symmetry_sweep():
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = int(rng.integers(2, 4))
        op = ch.random_cptp(d, int(rng.integers(1, d * d + 1)), rng)
        form = dl.stinespring(op)
        rho = np.outer(form.psi_abc, form.psi_abc.conj())
        shape = form.shape_abc(d)
        s_bc = entropy_of(mk.partial_trace(rho, shape, ["b", "c"]))
        s_a = entropy_of(mk.partial_trace(rho, shape, ["a"]))
        assert abs(s_bc - s_a) <= 1e-10
        assert abs(dl.operation_entropy(op) - s_a) <= 1e-10


def test_stinespring_rejects_non_tp():
    with pytest.raises(ValidationError):
        dl.stinespring(ch.from_kraus([np.array([[1, 0], [0, 0.5]], dtype=complex)]))
    with pytest.raises(ShapeError):
        dl.stinespring(ch.from_kraus([np.zeros((3, 2), dtype=complex)]))


def test_operation_entropy_unitary_is_zero():
    u = st.haar_unitary(3, np.random.default_rng(6))
    assert dl.operation_entropy(ch.unitary_channel(u)) <= 1e-10


def test_isometric_operation_validation():
    alpha = st.density(np.diag([1.0, 0.0]), labels=["A"])
    with pytest.raises(ValidationError):
        dl.IsometricOperation(np.eye(4) * 2.0, alpha)
    with pytest.raises(ShapeError):
        dl.IsometricOperation(st.haar_unitary(5, np.random.default_rng(0)), alpha)


def test_operation_of_reproduces_dilation_action():
    rng = np.random.default_rng(7)
    v = st.haar_unitary(4, rng)
    alpha_vec = st.random_pure(2, rng)
    alpha = st.density(np.outer(alpha_vec, alpha_vec.conj()), labels=["A"])
    iso = dl.IsometricOperation(v, alpha)
    op = dl.operation_of(iso)
    assert op.is_trace_preserving
    sigma = st.random_density(2, 2, rng)
    direct = mk.partial_trace(
        v @ mk.tensor(sigma.mat, alpha.mat) @ v.conj().T,
        DimShape([2, 2], ["S", "A"]),
        ["S"],
    )
    assert mk.max_abs(ch.apply(op, sigma).mat - direct) <= 1e-10


def test_isometry_choi_state_is_valid_and_tp():
    rng = np.random.default_rng(8)
    v = st.haar_unitary(4, rng)
    alpha_vec = st.random_pure(2, rng)
    alpha = st.density(np.outer(alpha_vec, alpha_vec.conj()), labels=["A"])
    iso = dl.IsometricOperation(v, alpha)
    state = dl.isometry_choi_state(iso)
    assert abs(np.trace(state.mat).real - 1.0) <= 1e-10
    # tracing the ancilla out of the dilation Choi recovers the reduced map
    shape = DimShape([2, 2, 2], ["So", "Ao", "in"])
    reduced = mk.partial_trace(state.mat * 2, shape, ["So", "in"])
    assert mk.max_abs(reduced - dl.operation_of(iso).choi) <= 1e-10


def test_mmap_decoupled_case():
    # V = I: Upsilon = sigma' (x) alpha and delta_S = S(sigma') - S(sigma)
    sc, rng = rand_sc(2, 2, seed=9)
    alpha_vec = st.random_pure(2, rng)
    alpha = st.density(np.outer(alpha_vec, alpha_vec.conj()), labels=["A"])
    iso = dl.IsometricOperation(np.eye(4, dtype=complex), alpha)
    upsilon, delta_s = dl.mmap(sc, iso)
    sigma_p = sup.act(sc, ch.identity_channel(2))
    assert mk.max_abs(upsilon.mat - mk.tensor(sigma_p.mat, alpha.mat)) <= 1e-10
    expected = st.von_neumann_entropy(sigma_p) - st.von_neumann_entropy(sc.sys_marginal)
    assert abs(delta_s - expected) <= 1e-10


def test_mmap_swap_dilation_moves_state_to_ancilla():
    # V = SWAP_SA with alpha = |0><0| implements replace-by-|0> on the system
    sc, _ = rand_sc(2, 2, seed=10)
    alpha = st.density(np.diag([1.0, 0.0]), labels=["A"])
    iso = dl.IsometricOperation(ch.swap_unitary(2), alpha)
    op = dl.operation_of(iso)
    ket0 = st.density(np.diag([1.0, 0.0]))
    rho = st.random_density(2, 2, np.random.default_rng(11))
    assert mk.max_abs(ch.apply(op, rho).mat - ket0.mat) <= 1e-12
    upsilon, _ = dl.mmap(sc, iso)
    reduced = mk.partial_trace(upsilon.mat, upsilon.shape, ["S"])
    assert mk.max_abs(reduced - sup.act(sc, op).mat) <= 1e-10


def test_mmap_marginal_consistency_sweep():
    for seed in range(25):
        sc, rng = rand_sc(2, 2, seed=100 + seed)
        v = st.haar_unitary(4, rng)
        alpha_vec = st.random_pure(2, rng)
        alpha = st.density(np.outer(alpha_vec, alpha_vec.conj()), labels=["A"])
        iso = dl.IsometricOperation(v, alpha)
        upsilon, _ = dl.mmap(sc, iso)
        reduced = mk.partial_trace(upsilon.mat, upsilon.shape, ["S"])
        direct = sup.act(sc, dl.operation_of(iso))
        assert mk.max_abs(reduced - direct.mat) <= 1e-10


def test_mmap_dim_mismatch():
    sc, _ = rand_sc(2, 2, seed=12)
    alpha = st.density(np.diag([1.0, 0.0, 0.0]), labels=["A"])
    with pytest.raises(ShapeError):
        dl.mmap(sc, dl.IsometricOperation(st.haar_unitary(9, np.random.default_rng(0)), alpha))
