"""Inequality verifiers: Spohn's bound, the generalized entropy-production
bound, its Clausius reduction, the data-processing inequality for
superchannels, and the Holevo bound.

Every verifier emits a BoundReport with lhs, rhs and slack = lhs - rhs as
extended reals (float with +-inf; an undefined inf - inf becomes NaN and is
flagged "indeterminate", never silently passed).  A report passes when
slack >= -slack_tol under extended-real ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channels as ch
from . import matkernel as mk
from . import states as st
from . import superchannel as sup
from .config import DEFAULT_TOLS, Tolerances
from .matkernel import DimShape, ShapeError, ValidationError
from .states import DensityMatrix, density


@dataclass(frozen=True)
class BoundReport:
    name: str                   # spohn | main | clausius | qdpi | holevo | ...
    lhs: float
    rhs: float
    slack: float
    passed: bool
    tolerance: float
    flags: tuple[str, ...] = ()
    metadata: dict = field(default_factory=dict)


def ext_sub(a: float, b: float) -> float:
    """a - b with inf - inf mapped to NaN (indeterminate)."""
    if math.isinf(a) and math.isinf(b) and (a > 0) == (b > 0):
        return math.nan
    return a - b


def ext_add(a: float, b: float) -> float:
    """a + b with inf + (-inf) mapped to NaN (indeterminate)."""
    return ext_sub(a, -b)


def _finish(name: str, lhs: float, rhs: float, tols: Tolerances, metadata: dict) -> BoundReport:
    slack = ext_sub(lhs, rhs)
    flags = []
    if math.isinf(lhs):
        flags.append("lhs_pos_inf" if lhs > 0 else "lhs_neg_inf")
    if math.isinf(rhs):
        flags.append("rhs_pos_inf" if rhs > 0 else "rhs_neg_inf")
    if math.isnan(slack):
        flags.append("indeterminate")
        passed = False
    else:
        passed = slack >= -tols.slack_tol
    return BoundReport(name, lhs, rhs, slack, passed, tols.slack_tol, tuple(flags), metadata)


def trace_against_log(
    state_mat: np.ndarray, base: DensityMatrix, tols: Tolerances = DEFAULT_TOLS
) -> float:
    """tr[X log(base)] for a PSD unit-trace X; -inf on support mismatch.

    Support mismatch means X has weight above support_tol on the kernel of
    ``base`` (eigenvalues clamped at psd_floor).
    """
    w, v = mk.herm_eig(base.mat, tols)
    w = mk.clamp_spectrum(w, tols)
    overlap = np.real(np.einsum("ik,ij,jk->k", v.conj(), np.asarray(state_mat, dtype=complex), v))
    kernel = w == 0.0
    if float(np.sum(overlap[kernel])) > tols.support_tol:
        return float("-inf")
    return float(np.sum(overlap[~kernel] * np.log(w[~kernel])))


# ---------------------------------------------------------------------------
# Spohn's inequality:  S(Phi(rho)) - S(rho) >= -tr[(Phi(rho) - rho) log e]
# ---------------------------------------------------------------------------

def spohn(
    op: ch.QuantumOperation,
    rho: DensityMatrix,
    ness: ch.NessResult | None = None,
    tols: Tolerances = DEFAULT_TOLS,
    collect: dict | None = None,
) -> BoundReport:
    """Entropy-production bound of a CPTP map relative to its steady state."""
    if op.d_in != op.d_out:
        raise ShapeError("spohn requires a square operation")
    if ness is None:
        ness = ch.fixed_point(op, tols)
    out = ch.apply(op, rho, tols=tols)
    lhs = st.von_neumann_entropy(out, tols) - st.von_neumann_entropy(rho, tols)
    t_out = trace_against_log(out.mat, ness.state, tols)
    t_in = trace_against_log(rho.mat, ness.state, tols)
    rhs = ext_sub(t_in, t_out)   # -tr[(Phi rho - rho) log e]
    meta = {
        "d": op.d_in,
        "fixed_space_dim": ness.fixed_space_dim,
        "ness_method": ness.method,
        "ness_residual": ness.residual,
    }
    if collect is not None:
        collect.update(
            ness_eigenvalues=st.spectrum(ness.state, tols).tolist(),
            entropy_out=st.von_neumann_entropy(out, tols),
            entropy_in=st.von_neumann_entropy(rho, tols),
            tr_out_log_ness=t_out,
            tr_in_log_ness=t_in,
        )
    return _finish("spohn", lhs, rhs, tols, meta)


# ---------------------------------------------------------------------------
# Generalized bound:  S(sigma') - S(A_d) >= -tr[sigma' log e] + tr[A_d log E_d]
# ---------------------------------------------------------------------------

def main_bound(
    sc: sup.Superchannel,
    op: ch.QuantumOperation,
    ns: sup.Neso | None = None,
    tols: Tolerances = DEFAULT_TOLS,
    collect: dict | None = None,
) -> BoundReport:
    """The generalized entropy-production bound for correlated initial states.

    With E_d = e (x) I/d, log(E_d) = log(e) (x) I - log(d) I on its support,
    so tr[A_d log E_d] reduces to tr[tr_in(A_d) log e] - log d.
    """
    if ns is None:
        ns = sup.neso(sc)
    d = sc.d_s
    sigma_p = sup.act(sc, op)
    a_d = op.choi_state
    s_out = st.von_neumann_entropy(sigma_p, tols)
    s_op = st.entropy_of_spectrum(mk.clamp_spectrum(np.linalg.eigvalsh(a_d)[::-1], tols))
    lhs = s_out - s_op
    t_out = trace_against_log(sigma_p.mat, ns.ness, tols)
    out_marg = mk.partial_trace(a_d, op.choi_shape(), ["out"])
    t_op = trace_against_log(out_marg, ns.ness, tols)
    rhs = ext_sub(t_op - math.log(d) if not math.isinf(t_op) else t_op, t_out)
    meta = {
        "d_S": sc.d_s,
        "d_E": sc.d_e,
        "fixed_space_dim": ns.diagnostics.fixed_space_dim,
        "ness_method": ns.diagnostics.method,
        "ness_residual": ns.diagnostics.residual,
    }
    if collect is not None:
        collect.update(
            ness_eigenvalues=st.spectrum(ns.ness, tols).tolist(),
            entropy_sigma_prime=s_out,
            entropy_op_state=s_op,
            tr_sigma_log_ness=t_out,
            tr_op_log_neso=(t_op - math.log(d)) if not math.isinf(t_op) else t_op,
            slack_identity=slack_identity(sc, op, ns, tols),
        )
    return _finish("main", lhs, rhs, tols, meta)


def slack_identity(
    sc: sup.Superchannel,
    op: ch.QuantumOperation,
    ns: sup.Neso | None = None,
    tols: Tolerances = DEFAULT_TOLS,
) -> tuple[float, float]:
    """(D[A_d || E_d], D[sigma' || e]): the main-bound slack equals their
    difference on finite branches."""
    if ns is None:
        ns = sup.neso(sc)
    d = sc.d_s
    choi_shape = DimShape([d, d], ["out", "in"])
    a_d = density(op.choi_state, choi_shape, tols=tols)
    e_d = density(ns.op_state, choi_shape, tols=tols)
    d_in = st.relative_entropy(a_d, e_d, tols)
    d_out = st.relative_entropy(sup.act(sc, op), ns.ness, tols)
    return d_in, d_out


@dataclass(frozen=True)
class CompositionReport:
    """Spohn's bound for the preparation plus the generalized bound for the
    subsequent correlated dynamics; slacks add."""

    spohn: BoundReport
    main: BoundReport
    combined_slack: float


def spohn_composition(
    op: ch.QuantumOperation,
    sc: sup.Superchannel,
    tols: Tolerances = DEFAULT_TOLS,
) -> CompositionReport:
    """Bound the total entropy change from tr_E(rho_SE) through sigma'."""
    sigma = sc.sys_marginal
    rep_spohn = spohn(op, sigma, None, tols)
    rep_main = main_bound(sc, op, None, tols)
    return CompositionReport(rep_spohn, rep_main, ext_add(rep_spohn.slack, rep_main.slack))


# ---------------------------------------------------------------------------
# Clausius reduction for thermal dynamics and throw-and-replace preparations
# ---------------------------------------------------------------------------

THERMAL_MATCH_TOL = 1e-6


def thermal_state(h: np.ndarray, beta: float, tols: Tolerances = DEFAULT_TOLS) -> tuple[DensityMatrix, float]:
    """(exp(-beta H)/Z, Z) for a Hermitian Hamiltonian."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    gibbs = mk.herm_fn(h, lambda w: np.exp(-beta * w), tols=tols)
    z = float(np.trace(gibbs).real)
    return density(gibbs / z, DimShape([h.shape[0]], ["S"]), tols=tols), z


def clausius(
    sc: sup.Superchannel,
    sigma: DensityMatrix,
    h: np.ndarray,
    beta: float,
    tols: Tolerances = DEFAULT_TOLS,
    collect: dict | None = None,
) -> BoundReport:
    """Clausius-form bound for a thermalizing superchannel.

    Validates that the fixed point of the subsequent dynamics is the Gibbs
    state of (h, beta), then evaluates the generalized bound at the
    throw-and-replace operation A_d = sigma (x) I/d.
    """
    h = mk.as_matrix(h)
    if not mk.is_hermitian(h, tols.herm_tol * max(1.0, mk.max_abs(h))):
        raise ValidationError("Hamiltonian is not Hermitian")
    gibbs, z = thermal_state(h, beta, tols)
    ns = sup.neso(sc)
    resid = mk.max_abs(ns.ness.mat - gibbs.mat)
    if resid > THERMAL_MATCH_TOL:
        raise ValidationError(
            f"fixed point is not the Gibbs state: residual {resid:.3e} > {THERMAL_MATCH_TOL}"
        )
    d = sc.d_s
    op = ch.replace_channel(sigma, d_in=d, tols=tols)
    sigma_p = sup.act(sc, op)
    # The entropies of sigma (x) I/d split off a log d on each side.
    lhs = st.von_neumann_entropy(sigma_p, tols) - (st.von_neumann_entropy(sigma, tols) + math.log(d))
    t_out = trace_against_log(sigma_p.mat, gibbs, tols)
    t_in = trace_against_log(sigma.mat, gibbs, tols)
    rhs = ext_sub(t_in - math.log(d) if not math.isinf(t_in) else t_in, t_out)
    meta = {
        "d": d,
        "beta": beta,
        "Z": z,
        "F": math.log(z) / beta,
        "thermal_residual": resid,
    }
    if collect is not None:
        collect.update(
            gibbs_eigenvalues=st.spectrum(gibbs, tols).tolist(),
            entropy_sigma_prime=st.von_neumann_entropy(sigma_p, tols),
            entropy_sigma=st.von_neumann_entropy(sigma, tols),
            tr_sigma_prime_log_gibbs=t_out,
            tr_sigma_log_gibbs=t_in,
        )
    return _finish("clausius", lhs, rhs, tols, meta)


# ---------------------------------------------------------------------------
# Quantum data-processing inequality through two superchannels
# ---------------------------------------------------------------------------

def regroup_joint_choi(choi: np.ndarray, d_p: int, d_q: int) -> np.ndarray:
    """(PQ)_out (x) (PQ)_in  ->  (P_out, P_in, Q_out, Q_in)."""
    x = choi.reshape(d_p, d_q, d_p, d_q, d_p, d_q, d_p, d_q)
    x = np.transpose(x, (0, 2, 1, 3, 4, 6, 5, 7))
    return x.reshape(d_p * d_p * d_q * d_q, -1)


def joint_act_normalized(
    sc1: sup.Superchannel, sc2: sup.Superchannel, op_state: np.ndarray,
    tols: Tolerances = DEFAULT_TOLS,
) -> DensityMatrix:
    """(M1# (x) M2#)[X] with X ordered (P_out, P_in, Q_out, Q_in)."""
    d1, d2 = sc1.d_s, sc2.d_s
    x = np.asarray(op_state, dtype=complex).reshape(d1, d1, d2, d2, d1, d1, d2, d2)
    out = np.einsum(
        "abcpqr,ABCPQR,bcBCqrQR->aApP",
        sc1.m_tensor, sc2.m_tensor, (d1 * d2) * x, optimize=True,
    ).reshape(d1 * d2, d1 * d2)
    out = (out + out.conj().T) / 2.0
    return density(out, DimShape([d1, d2], ["P", "Q"]), tols=tols)


def qdpi(
    sc1: sup.Superchannel,
    sc2: sup.Superchannel,
    op_pq: ch.QuantumOperation,
    tols: Tolerances = DEFAULT_TOLS,
    collect: dict | None = None,
) -> BoundReport:
    """Mutual information cannot grow: I[P:Q] of the output state is bounded
    by I[P:Q] of the joint operation-state.

    Also evaluates the relative-entropy form through the marginal
    operations A_P, A_Q and cross-checks the two routes: the input-side
    reference A_P_d (x) A_Q_d is exactly the product of the joint
    operation-state's marginals, so D_in must equal the input mutual
    information; on the output side the reference M1#[A_P_d] (x) M2#[A_Q_d]
    is generally *not* the product of the output's marginals, so D_out
    dominates the output mutual information and the relative-entropy slack
    can only be tighter than the mutual-information slack.
    """
    if op_pq.bipartite is None:
        raise ShapeError("qdpi requires an operation with bipartite structure")
    d_p, d_q = op_pq.bipartite
    if d_p != sc1.d_s or d_q != sc2.d_s:
        raise ShapeError(f"bipartite dims {(d_p, d_q)} do not match superchannels {(sc1.d_s, sc2.d_s)}")
    if not op_pq.is_trace_preserving:
        raise ValidationError("qdpi requires a CPTP joint operation")

    x = regroup_joint_choi(op_pq.choi_state, d_p, d_q)
    shape_in = DimShape([d_p, d_p, d_q, d_q], ["Po", "Pi", "Qo", "Qi"])
    rho_in = density(x, shape_in, tols=tols)
    mi_in = st.mutual_information(rho_in, ["Po", "Pi"], tols)
    rho_out = joint_act_normalized(sc1, sc2, x, tols)
    mi_out = st.mutual_information(rho_out, ["P"], tols)

    # Relative-entropy route through the marginal operations.
    op_p = ch.marginal_operation(op_pq, "P", tols)
    op_q = ch.marginal_operation(op_pq, "Q", tols)
    ref_in = np.kron(op_p.choi_state, op_q.choi_state)
    d_rel_in = st.relative_entropy(rho_in, density(ref_in, shape_in, tols=tols), tols)
    ref_out = np.kron(
        sup.act_normalized(sc1, op_p.choi_state).mat,
        sup.act_normalized(sc2, op_q.choi_state).mat,
    )
    d_rel_out = st.relative_entropy(
        rho_out, density(ref_out, DimShape([d_p, d_q], ["P", "Q"]), tols=tols), tols
    )
    flags = []
    if math.isinf(d_rel_in) or math.isinf(d_rel_out):
        flags.append("relative_entropy_route_infinite")
    else:
        if abs(d_rel_in - mi_in) > 1e-8:
            raise ValidationError(
                f"QDPI input identity broken: |D_in - I_in| = {abs(d_rel_in - mi_in):.3e}"
            )
        if d_rel_out < mi_out - 1e-8:
            raise ValidationError(
                f"QDPI output dominance broken: D_out = {d_rel_out:.6e} < I_out = {mi_out:.6e}"
            )
        if (d_rel_in - d_rel_out) > (mi_in - mi_out) + 1e-8:
            raise ValidationError(
                "QDPI routes disagree: relative-entropy slack exceeds MI slack"
            )
    meta = {
        "d_P": d_p,
        "d_Q": d_q,
        "relent_in": d_rel_in,
        "relent_out": d_rel_out,
    }
    if collect is not None:
        collect.update(mi_in=mi_in, mi_out=mi_out, relent_in=d_rel_in, relent_out=d_rel_out)
    report = _finish("qdpi", mi_in, mi_out, tols, meta)
    if flags:
        report = BoundReport(
            report.name, report.lhs, report.rhs, report.slack, report.passed,
            report.tolerance, report.flags + tuple(flags), report.metadata,
        )
    return report


# ---------------------------------------------------------------------------
# Holevo bound with sampled projective measurements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ensemble:
    """Preparation ensemble {p_k, A^(k)} of CPTP operations."""

    probs: tuple[float, ...]
    ops: tuple[ch.QuantumOperation, ...]

    def __post_init__(self):
        if len(self.probs) != len(self.ops) or not self.ops:
            raise ValidationError("ensemble needs matching, nonempty probs and ops")
        if any(p < 0 for p in self.probs):
            raise ValidationError("ensemble probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValidationError(f"ensemble probabilities sum to {sum(self.probs)!r}, not 1")
        dims = {(op.d_in, op.d_out) for op in self.ops}
        if len(dims) != 1:
            raise ValidationError(f"ensemble operations have mixed dims {sorted(dims)}")


def classical_mutual_information(joint: np.ndarray) -> float:
    """I(K;M) in nats for a joint probability table, 0 log 0 = 0."""
    joint = np.asarray(joint, dtype=float)
    joint = np.clip(joint, 0.0, None)
    total = joint.sum()
    if total <= 0:
        return 0.0
    joint = joint / total
    pk = joint.sum(axis=1, keepdims=True)
    pm = joint.sum(axis=0, keepdims=True)
    mask = joint > 0.0
    ratio = joint[mask] / (pk @ pm)[mask]
    return float(np.sum(joint[mask] * np.log(ratio)))


def measured_information(states: list[np.ndarray], probs: np.ndarray, basis: np.ndarray) -> float:
    """Classical I(K; outcome) for a projective measurement in ``basis`` columns."""
    joint = np.empty((len(states), basis.shape[1]))
    for k, s in enumerate(states):
        joint[k] = probs[k] * np.clip(np.real(np.einsum("im,ij,jm->m", basis.conj(), s, basis)), 0.0, None)
    return classical_mutual_information(joint)


def holevo(
    sc: sup.Superchannel,
    ens: Ensemble,
    rng: np.random.Generator,
    n_meas: int = 50,
    tols: Tolerances = DEFAULT_TOLS,
    collect: dict | None = None,
) -> tuple[float, BoundReport, list[float]]:
    """Holevo quantity of the received ensemble and sampled-measurement checks.

    Bob receives sigma'_k = M#[A^(k)_d]; chi = S(avg) - sum p_k S(sigma'_k)
    upper-bounds the classical information of every sampled projective
    measurement (Haar-random bases plus the eigenbasis of the average).
    The report records the most informative sampled measurement.
    """
    outs = [sup.act(sc, op) for op in ens.ops]
    probs = np.asarray(ens.probs, dtype=float)
    avg_mat = sum(p * o.mat for p, o in zip(probs, outs))
    avg = density(avg_mat, outs[0].shape, tols=tols)
    chi = st.von_neumann_entropy(avg, tols) - float(
        sum(p * st.von_neumann_entropy(o, tols) for p, o in zip(probs, outs))
    )
    if -1e-12 < chi < 0.0:
        chi = 0.0
    d = sc.d_s
    bases = [st.haar_unitary(d, rng) for _ in range(n_meas)]
    _, eigbasis = mk.herm_eig(avg.mat, tols)
    bases.append(eigbasis)
    state_mats = [o.mat for o in outs]
    sampled = [measured_information(state_mats, probs, b) for b in bases]
    best = int(np.argmax(sampled))
    meta = {
        "d": d,
        "codewords": len(ens.ops),
        "n_measurements": len(bases),
        "best_measurement": best,
        "chi": chi,
    }
    if collect is not None:
        collect.update(
            chi=chi,
            sampled_information=list(sampled),
            avg_state_eigenvalues=st.spectrum(avg, tols).tolist(),
        )
    report = _finish("holevo", chi, max(sampled), tols, meta)
    return chi, report, sampled
