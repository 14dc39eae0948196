"""Superchannels: the two-time process map built from (U, rho_SE).

A superchannel sends the quantum operation performed on the system between
two times to the system state at the later time,

    act(sc, A) = tr_E[ U ((A (x) Id_E)(rho_SE)) U^dag ].

Two equivalent realizations are kept: the operational formula above
(authoritative) and a six-index tensor M with

    M[a,b,c,p,q,r] = sum_{x,y,z} U[ax,by] rho_SE[cy,rz] conj(U)[px,qz],

contracted against the operation's Choi matrix C as

    sigma'[a,p] = sum_{b,c,q,r} M[a,b,c,p,q,r] C[bc,qr],

where C is indexed (out, in) x (out, in); their agreement is asserted in
the test suite.  The trace-normalized superchannel M# acts on unit-trace
operation-states A_d = C/d and is realized by the same tensor contraction
with C = d * A_d.

M# is completely positive; it preserves traces on the span of
operation-states (matrices whose Choi lifts have tr_out proportional to
the identity), which is exactly the domain the formalism gives it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channels as ch
from . import matkernel as mk
from .config import DEFAULT_TOLS, Tolerances
from .matkernel import DimShape, ShapeError
from .states import DensityMatrix, density, marginal


@dataclass(frozen=True)
class Superchannel:
    u: np.ndarray                 # joint unitary on S (x) E, S on the slow index
    rho_se: DensityMatrix         # initial correlated state, labels ("S", "E")
    d_s: int
    d_e: int
    m_tensor: np.ndarray          # six-index tensor [a, b, c, p, q, r]
    _tols: Tolerances = field(default=DEFAULT_TOLS, repr=False)

    @property
    def sys_marginal(self) -> DensityMatrix:
        """sigma = tr_E rho_SE."""
        return marginal(self.rho_se, ["S"], self._tols)

    @property
    def env_marginal(self) -> DensityMatrix:
        """tau = tr_S rho_SE."""
        return marginal(self.rho_se, ["E"], self._tols)

    @property
    def dilation_channel(self) -> ch.QuantumOperation:
        """Phi: sigma -> tr_E[U (sigma (x) tau) U^dag], the subsequent dynamics."""
        return ch.channel_from_dilation(self.u, self.env_marginal, self._tols)


def build(u: np.ndarray, rho_se: DensityMatrix, tols: Tolerances = DEFAULT_TOLS) -> Superchannel:
    """Construct the superchannel for a joint unitary and correlated state."""
    u = mk.as_matrix(u)
    if tuple(rho_se.shape.labels) != ("S", "E"):
        raise ShapeError(f"rho_SE must carry labels ('S', 'E'), got {rho_se.shape.labels}")
    d_s = rho_se.factor_of("S")
    d_e = rho_se.factor_of("E")
    if u.shape != (d_s * d_e, d_s * d_e):
        raise ShapeError(f"unitary shape {u.shape} != joint dim {d_s * d_e}")
    ch.check_unitary(u, tols, what="joint unitary")
    u4 = u.reshape(d_s, d_e, d_s, d_e)
    r4 = rho_se.mat.reshape(d_s, d_e, d_s, d_e)
    m = np.einsum("axby,cyrz,pxqz->abcpqr", u4, r4, u4.conj(), optimize=True)
    return Superchannel(u, rho_se, d_s, d_e, m, tols)


def act(sc: Superchannel, op: ch.QuantumOperation) -> DensityMatrix:
    """sigma' for a CPTP operation on the system, by the operational formula."""
    if op.d_in != sc.d_s or op.d_out != sc.d_s:
        raise ShapeError(f"operation dims ({op.d_out}, {op.d_in}) != system dim {sc.d_s}")
    if not op.is_trace_preserving:
        raise mk.ValidationError("act() requires a CPTP operation; use act_normalized")
    i_e = np.eye(sc.d_e, dtype=complex)
    joint = np.zeros_like(sc.rho_se.mat)
    for k in op.kraus_ops():
        kk = np.kron(k, i_e)
        joint += kk @ sc.rho_se.mat @ kk.conj().T
    evolved = sc.u @ joint @ sc.u.conj().T
    out = mk.partial_trace(evolved, sc.rho_se.shape, ["S"])
    out = (out + out.conj().T) / 2.0
    return density(out, DimShape([sc.d_s], ["S"]), tols=sc._tols)


def act_tensor(sc: Superchannel, choi: np.ndarray) -> np.ndarray:
    """Index-formula contraction of M against an (unnormalized) Choi matrix."""
    d = sc.d_s
    c4 = np.asarray(choi, dtype=complex).reshape(d, d, d, d)
    return np.einsum("abcpqr,bcqr->ap", sc.m_tensor, c4)


def act_normalized(sc: Superchannel, op_state: np.ndarray) -> DensityMatrix:
    """M#[X] for a unit-trace PSD operation-state X on out (x) in.

    Linear in X and CP; trace preservation holds when X lies in the span of
    operation-states of trace-preserving maps (tr_out X = tr(X)/d * I), the
    domain on which M# is defined.
    """
    d = sc.d_s
    op_state = mk.as_matrix(op_state)
    if op_state.shape != (d * d, d * d):
        raise ShapeError(f"operation-state shape {op_state.shape} != {(d * d, d * d)}")
    out = act_tensor(sc, d * op_state)
    out = (out + out.conj().T) / 2.0
    return density(out, DimShape([d], ["S"]), tols=sc._tols)


def choi_of_msharp(sc: Superchannel) -> np.ndarray:
    """Choi matrix of M# on (S_out) (x) (out, in), dimension d^3.

    Equals d * M reshaped to ((a,b,c), (p,q,r)); PSD by construction.
    """
    d = sc.d_s
    c = sc.d_s * sc.m_tensor.reshape(d ** 3, d ** 3)
    return (c + c.conj().T) / 2.0


def msharp_tp_residual(sc: Superchannel) -> float:
    """Trace-preservation residual of M# on the operation-state span.

    M# preserves traces exactly on inputs X with tr_out X = tr(X)/d * I.
    Equivalently, W = tr_S Choi(M#) must have the form I (x) G: the residual
    is the deviation from that form plus the deviation of tr(W) from d^2.
    """
    d = sc.d_s
    choi = choi_of_msharp(sc)
    shape = DimShape([d, d, d], ["a", "b", "c"])
    w = mk.partial_trace(choi, shape, ["b", "c"])
    g = mk.partial_trace(w, DimShape([d, d], ["b", "c"]), ["c"]) / d
    resid = mk.max_abs(w - np.kron(np.eye(d), g))
    return max(resid, abs(float(np.trace(w).real) - d * d) / (d * d))


@dataclass(frozen=True)
class Neso:
    """The steady operation: discard the system, prepare the steady state.

    ``op`` has Choi ness (x) I, so the unit-trace operation-state is
    ness (x) I/d and act_normalized maps it back to ``ness``.
    """

    ness: DensityMatrix
    env_marginal: DensityMatrix
    op: ch.QuantumOperation
    diagnostics: ch.NessResult

    @property
    def op_state(self) -> np.ndarray:
        return self.op.choi / self.op.d_in


def neso(sc: Superchannel) -> Neso:
    """Steady operation of the superchannel's subsequent dynamics.

    The steady state solves e = tr_E[U (e (x) tau) U^dag] with
    tau = tr_S rho_SE; failures of the fixed-point search propagate.
    """
    tau = sc.env_marginal
    phi = ch.channel_from_dilation(sc.u, tau, sc._tols)
    fp = ch.fixed_point(phi, sc._tols)
    op = ch.replace_channel(fp.state, d_in=sc.d_s, tols=sc._tols)
    return Neso(fp.state, tau, op, fp)
