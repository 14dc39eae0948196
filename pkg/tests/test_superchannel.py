import math

import numpy as np
import pytest

from supchan import channels as ch
from supchan import matkernel as mk
from supchan import states as st
from supchan import superchannel as sup
from supchan.matkernel import DimShape, ShapeError, ValidationError


def rand_sc(d_s, d_e, seed, rank=None, product=False):
    rng = np.random.default_rng(seed)
    if product:
        sigma = st.random_density(d_s, d_s, rng)
        tau = st.random_density(d_e, d_e, rng)
        rho = st.density(mk.tensor(sigma.mat, tau.mat), DimShape([d_s, d_e], ["S", "E"]))
    else:
        r = rank if rank is not None else int(rng.integers(1, d_s * d_e + 1))
        raw = st.random_density(d_s * d_e, r, rng)
        rho = st.density(raw.mat, DimShape([d_s, d_e], ["S", "E"]))
    return sup.build(st.haar_unitary(d_s * d_e, rng), rho), rng


def test_build_validation():
    rng = np.random.default_rng(0)
    rho = st.random_density(4, 4, rng)
    rho_se = st.density(rho.mat, DimShape([2, 2], ["S", "E"]))
    with pytest.raises(ValidationError):
        sup.build(np.eye(4) * 1.5, rho_se)
    with pytest.raises(ShapeError):
        sup.build(st.haar_unitary(6, rng), rho_se)
    with pytest.raises(ShapeError):
        sup.build(np.eye(4), st.density(rho.mat, DimShape([2, 2], ["A", "B"])))


def test_uncorrelated_trivial_dynamics():
    # rho_SE = sigma (x) tau with U = I: the identity operation returns sigma
    rng = np.random.default_rng(1)
    sigma = st.random_density(2, 2, rng)
    tau = st.random_density(3, 3, rng)
    rho_se = st.density(mk.tensor(sigma.mat, tau.mat), DimShape([2, 3], ["S", "E"]))
    sc = sup.build(np.eye(6, dtype=complex), rho_se)
    got = sup.act(sc, ch.identity_channel(2))
    assert mk.max_abs(got.mat - sigma.mat) <= 1e-12


def test_factorized_superchannel_oracle():
    # for product rho_SE the superchannel factorizes: act(A) = Phi(A(sigma))
    for seed in range(20):
        sc, rng = rand_sc(2, 2, seed=100 + seed, product=True)
        sigma = sc.sys_marginal
        phi = sc.dilation_channel
        op = ch.random_cptp(2, int(rng.integers(1, 5)), rng)
        got = sup.act(sc, op)
        oracle = ch.apply(phi, ch.apply(op, sigma))
        assert mk.max_abs(got.mat - oracle.mat) <= 1e-10


def test_dual_definition_agreement():
    # index-tensor contraction vs operational formula on correlated instances
    for seed in range(25):
        sc, rng = rand_sc(2, int(2 + seed % 2), seed=200 + seed)
        op = ch.random_cptp(2, int(rng.integers(1, 5)), rng)
        operational = sup.act(sc, op).mat
        index_formula = sup.act_tensor(sc, op.choi)
        assert mk.max_abs(operational - index_formula) <= 1e-10


def test_act_identity_is_plain_evolution():
    sc, _ = rand_sc(2, 3, seed=7)
    got = sup.act(sc, ch.identity_channel(2))
    evolved = sc.u @ sc.rho_se.mat @ sc.u.conj().T
    oracle = mk.partial_trace(evolved, sc.rho_se.shape, ["S"])
    assert mk.max_abs(got.mat - oracle) <= 1e-12


def test_act_replace_conditions_environment():
    # a replace preparation decorrelates: sigma' = tr_E[U (pi (x) tau) U^dag]
    sc, rng = rand_sc(2, 2, seed=8)
    pi_vec = st.random_pure(2, rng)
    pi = st.density(np.outer(pi_vec, pi_vec.conj()))
    got = sup.act(sc, ch.replace_channel(pi))
    tau = sc.env_marginal
    joint = mk.tensor(pi.mat, tau.mat)
    oracle = mk.partial_trace(sc.u @ joint @ sc.u.conj().T, sc.rho_se.shape, ["S"])
    assert mk.max_abs(got.mat - oracle) <= 1e-11


def test_act_requires_cptp():
    sc, _ = rand_sc(2, 2, seed=9)
    non_tp = ch.from_kraus([np.array([[1, 0], [0, 0.5]], dtype=complex)])
    with pytest.raises(ValidationError):
        sup.act(sc, non_tp)
    with pytest.raises(ShapeError):
        sup.act(sc, ch.identity_channel(3))


def test_act_normalized_consistency_and_linearity():
    sc, rng = rand_sc(2, 2, seed=10)
    a = ch.random_cptp(2, 3, rng)
    b = ch.random_cptp(2, 1, rng)
    assert mk.max_abs(sup.act_normalized(sc, a.choi_state).mat - sup.act(sc, a).mat) <= 1e-11
    lam = 0.37
    mix = lam * a.choi_state + (1 - lam) * b.choi_state
    got = sup.act_normalized(sc, mix).mat
    oracle = lam * sup.act(sc, a).mat + (1 - lam) * sup.act(sc, b).mat
    assert mk.max_abs(got - oracle) <= 1e-11


def test_act_normalized_depolarizing_input_oracle():
    # I/d^2 is the operation-state of the completely depolarizing channel
    sc, _ = rand_sc(2, 2, seed=11)
    d = sc.d_s
    got = sup.act_normalized(sc, np.eye(d * d) / (d * d))
    joint = mk.tensor(np.eye(d) / d, sc.env_marginal.mat)
    oracle = mk.partial_trace(sc.u @ joint @ sc.u.conj().T, sc.rho_se.shape, ["S"])
    assert mk.max_abs(got.mat - oracle) <= 1e-11


def test_act_normalized_trace_preserving_on_operation_states():
    for seed in range(20):
        sc, rng = rand_sc(2, 2, seed=300 + seed)
        ops = [ch.random_cptp(2, int(rng.integers(1, 5)), rng) for _ in range(3)]
        weights = rng.dirichlet(np.ones(3))
        mix = sum(w * op.choi_state for w, op in zip(weights, ops))
        out = sup.act_normalized(sc, mix)
        assert abs(np.trace(out.mat).real - 1.0) <= 1e-10


def test_choi_of_msharp_psd_and_tp_residual():
    for seed in range(25):
        sc, _ = rand_sc(2, 2, seed=400 + seed)
        choi = sup.choi_of_msharp(sc)
        w = np.linalg.eigvalsh(choi)
        assert w[0] >= -1e-9
        assert sup.msharp_tp_residual(sc) <= 1e-9


def test_choi_of_msharp_maximally_mixed_trivial_case():
    # with rho_SE maximally mixed the system marginal is I/d and M# is
    # trace preserving on the whole operation-state space: tr_out Choi = I
    d_s = d_e = 2
    rho_se = st.density(np.eye(4) / 4, DimShape([d_s, d_e], ["S", "E"]))
    sc = sup.build(np.eye(4, dtype=complex), rho_se)
    choi = sup.choi_of_msharp(sc)
    shape = DimShape([d_s, d_s, d_s], ["a", "b", "c"])
    w = mk.partial_trace(choi, shape, ["b", "c"])
    assert mk.max_abs(w - np.eye(d_s * d_s)) <= 1e-10
    assert np.linalg.eigvalsh(choi)[0] >= -1e-9


def test_choi_of_msharp_factorized_composition_oracle():
    # for rho_SE = sigma (x) tau, M# is (evaluate at sigma) then Phi;
    # compare Choi matrices column by column through matrix units
    sc, _ = rand_sc(2, 2, seed=12, product=True)
    d = sc.d_s
    sigma = sc.sys_marginal
    phi = sc.dilation_channel
    choi = sup.choi_of_msharp(sc).reshape(d, d * d, d, d * d)
    for i in range(d * d):
        for j in range(d * d):
            e = np.zeros((d * d, d * d), dtype=complex)
            e[i, j] = 1.0
            # lift E_ij to the operation d*E_ij and run the composition
            lifted = d * np.einsum("aibj,ij->ab", e.reshape(d, d, d, d), sigma.mat)
            oracle = ch.apply_matrix(phi, lifted)
            assert mk.max_abs(choi[:, i, :, j] - oracle) <= 1e-10


def test_neso_swap_gives_env_marginal():
    rng = np.random.default_rng(13)
    tau = st.random_density(2, 2, rng)
    sigma = st.random_density(2, 2, rng)
    rho_se = st.density(mk.tensor(sigma.mat, tau.mat), DimShape([2, 2], ["S", "E"]))
    sc = sup.build(ch.swap_unitary(2), rho_se)
    ns = sup.neso(sc)
    assert mk.max_abs(ns.ness.mat - tau.mat) <= 1e-9
    assert mk.max_abs(ns.env_marginal.mat - tau.mat) <= 1e-12


def test_neso_thermal_fixed_point_oracle():
    # partial-swap dilation against a thermal environment settles on it
    beta, energies = 1.0, np.array([0.0, 1.0])
    gibbs = np.diag(np.exp(-beta * energies))
    gibbs /= np.trace(gibbs)
    tau = st.density(gibbs.astype(complex), labels=["E"])
    rng = np.random.default_rng(14)
    sigma = st.random_density(2, 2, rng)
    rho_se = st.density(mk.tensor(sigma.mat, tau.mat), DimShape([2, 2], ["S", "E"]))
    sc = sup.build(ch.partial_swap_unitary(2, 0.6), rho_se)
    ns = sup.neso(sc)
    assert mk.max_abs(ns.ness.mat - tau.mat) <= 1e-9


def test_neso_choi_structure_and_entropy_split():
    sc, _ = rand_sc(2, 2, seed=15)
    ns = sup.neso(sc)
    d = sc.d_s
    assert mk.max_abs(ns.op.choi - mk.tensor(ns.ness.mat, np.eye(d))) <= 1e-10
    s_opstate = st.von_neumann_entropy(
        st.density(ns.op_state, DimShape([d, d], ["out", "in"]))
    )
    s_ness = st.von_neumann_entropy(ns.ness)
    assert abs(s_opstate - (s_ness + math.log(d))) <= 1e-10


def test_neso_self_consistency_sweep():
    # M#[E_d] == e across 100 random instances
    for seed in range(100):
        sc, _ = rand_sc(2, 2, seed=1000 + seed)
        ns = sup.neso(sc)
        back = sup.act_normalized(sc, ns.op_state)
        assert mk.max_abs(back.mat - ns.ness.mat) <= 1e-9


def test_msharp_monotonicity_on_operation_states():
    # relative entropy cannot grow through M# on operation-state pairs
    for seed in range(30):
        sc, rng = rand_sc(2, 2, seed=500 + seed)
        d = sc.d_s
        shape = DimShape([d, d], ["out", "in"])
        x_op = ch.random_cptp(d, int(rng.integers(1, 5)), rng)
        y_op = ch.random_cptp(d, int(rng.integers(2, 5)), rng)
        x = st.density(x_op.choi_state, shape)
        y = st.density(y_op.choi_state, shape)
        before = st.relative_entropy(x, y)
        after = st.relative_entropy(
            sup.act_normalized(sc, x.mat), sup.act_normalized(sc, y.mat)
        )
        if math.isfinite(before):
            assert after <= before + 1e-8
