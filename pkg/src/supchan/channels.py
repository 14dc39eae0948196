"""Completely positive maps in Kraus and Choi form.

Choi convention: ``choi = sum_ij A(|i><j|) (x) |i><j|`` on output (x) input,
i.e. the output factor is the slow index and the (unnormalized) Choi of a
trace-preserving map has trace d_in.  Equivalently
``choi = sum_k vec(K_k) vec(K_k)^dag`` with row-major vec.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matkernel as mk
from .config import DEFAULT_TOLS, Tolerances
from .matkernel import DimShape, ShapeError, ValidationError
from .states import DensityMatrix, density, ginibre

CP_TOL = 1e-9   # Choi min eigenvalue above -CP_TOL means completely positive
TP_TOL = 1e-9   # ||tr_out(choi) - I|| below TP_TOL means trace preserving


class FixedPointError(RuntimeError):
    """Fixed-point extraction failed to converge."""


@dataclass(frozen=True)
class QuantumOperation:
    """A CP map held in dual form: optional Kraus list plus Choi matrix.

    ``bipartite`` optionally records a (d_P, d_Q) tensor split shared by the
    input and output spaces, enabling marginal operations.
    """

    d_in: int
    d_out: int
    choi: np.ndarray
    kraus: tuple[np.ndarray, ...] | None = None
    bipartite: tuple[int, int] | None = None
    _tols: Tolerances = field(default=DEFAULT_TOLS, repr=False)

    @property
    def is_trace_preserving(self) -> bool:
        return mk.max_abs(tr_out_choi(self.choi, self.d_out, self.d_in) - np.eye(self.d_in)) <= TP_TOL

    @property
    def choi_state(self) -> np.ndarray:
        """Normalized Choi A_d = choi / d_in, a unit-trace PSD matrix."""
        return self.choi / self.d_in

    def choi_shape(self) -> DimShape:
        return DimShape([self.d_out, self.d_in], ["out", "in"])

    def kraus_ops(self) -> tuple[np.ndarray, ...]:
        if self.kraus is not None:
            return self.kraus
        return kraus_of(self)


def tr_out_choi(choi: np.ndarray, d_out: int, d_in: int) -> np.ndarray:
    shape = DimShape([d_out, d_in], ["out", "in"])
    return mk.partial_trace(choi, shape, ["in"])


def choi_from_kraus(kraus: list[np.ndarray] | tuple[np.ndarray, ...]) -> np.ndarray:
    d_out, d_in = kraus[0].shape
    c = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for k in kraus:
        v = np.asarray(k, dtype=complex).reshape(-1)
        c += np.outer(v, v.conj())
    return c


def from_kraus(
    kraus: list[np.ndarray],
    bipartite: tuple[int, int] | None = None,
    tols: Tolerances = DEFAULT_TOLS,
) -> QuantumOperation:
    """Build an operation from its Kraus operators."""
    kraus = [mk.as_matrix(k) for k in kraus]
    d_out, d_in = kraus[0].shape
    if any(k.shape != (d_out, d_in) for k in kraus):
        raise ShapeError("Kraus operators have inconsistent shapes")
    return QuantumOperation(d_in, d_out, choi_from_kraus(kraus), tuple(kraus), bipartite, tols)


def from_choi(
    choi: np.ndarray,
    d_out: int,
    d_in: int,
    bipartite: tuple[int, int] | None = None,
    tols: Tolerances = DEFAULT_TOLS,
) -> QuantumOperation:
    """Build an operation from its (unnormalized, trace-d_in) Choi matrix."""
    choi = mk.as_matrix(choi)
    if choi.shape != (d_out * d_in, d_out * d_in):
        raise ShapeError(f"Choi shape {choi.shape} != {(d_out * d_in,) * 2}")
    if not mk.is_hermitian(choi, tols.herm_tol * max(1.0, mk.max_abs(choi))):
        raise ValidationError("Choi matrix is not Hermitian")
    w = np.linalg.eigvalsh((choi + choi.conj().T) / 2.0)
    if w[0] < -CP_TOL * max(1.0, float(w[-1])):
        raise ValidationError(f"Choi matrix has eigenvalue {w[0]:.3e}: map is not CP")
    return QuantumOperation(d_in, d_out, choi, None, bipartite, tols)


def kraus_of(op: QuantumOperation, tols: Tolerances = DEFAULT_TOLS) -> tuple[np.ndarray, ...]:
    """Extract Kraus operators from the Choi matrix.

    Eigenvalues below psd_floor are dropped, so the returned rank is the
    numerical Kraus rank.  Kraus sets are unique only up to isometric
    mixing; compare channels through their action, not their Kraus lists.
    """
    w, V = mk.herm_eig(op.choi, tols)
    w = mk.clamp_spectrum(w, tols)
    ops = []
    for lam, v in zip(w, V.T):
        if lam > 0.0:
            ops.append(np.sqrt(lam) * v.reshape(op.d_out, op.d_in))
    return tuple(ops)


def apply(
    op: QuantumOperation,
    rho: DensityMatrix,
    allow_non_tp: bool = False,
    tols: Tolerances = DEFAULT_TOLS,
):
    """Apply the map: sum_k K rho K^dag.

    Returns a DensityMatrix for trace-preserving operations.  For non-TP
    operations the unnormalized output matrix (ndarray) is returned, and
    only when ``allow_non_tp`` is set.
    """
    if rho.dim != op.d_in:
        raise ShapeError(f"state dim {rho.dim} != operation d_in {op.d_in}")
    out = apply_matrix(op, rho.mat)
    if op.is_trace_preserving:
        out = (out + out.conj().T) / 2.0
        return density(out, DimShape([op.d_out], [rho.shape.labels[0]]), tols=tols)
    if not allow_non_tp:
        raise ValidationError("operation is not trace preserving; pass allow_non_tp=True")
    return out


def apply_matrix(op: QuantumOperation, mat: np.ndarray) -> np.ndarray:
    """Linear action on an arbitrary matrix (no TP/validity checks)."""
    if op.kraus is not None:
        out = np.zeros((op.d_out, op.d_out), dtype=complex)
        for k in op.kraus:
            out += k @ mat @ k.conj().T
        return out
    return apply_choi(op.choi, mat, op.d_out, op.d_in)


def apply_choi(choi: np.ndarray, mat: np.ndarray, d_out: int, d_in: int) -> np.ndarray:
    """Choi contraction tr_in[choi (I (x) mat^T)]."""
    c = choi.reshape(d_out, d_in, d_out, d_in)
    return np.einsum("aibj,ij->ab", c, np.asarray(mat, dtype=complex))


def compose(after: QuantumOperation, before: QuantumOperation, tols: Tolerances = DEFAULT_TOLS) -> QuantumOperation:
    """Composition after . before via Kraus products."""
    if before.d_out != after.d_in:
        raise ShapeError(f"cannot compose: {before.d_out} -> {after.d_in}")
    ks = [a @ b for a in after.kraus_ops() for b in before.kraus_ops()]
    return from_kraus(ks, tols=tols)


# ---------------------------------------------------------------------------
# Named channels
# ---------------------------------------------------------------------------

def identity_channel(d: int) -> QuantumOperation:
    return from_kraus([np.eye(d, dtype=complex)])


def unitary_channel(u: np.ndarray, tols: Tolerances = DEFAULT_TOLS) -> QuantumOperation:
    u = mk.as_matrix(u)
    check_unitary(u, tols)
    return from_kraus([u], tols=tols)


def depolarizing_channel(d: int) -> QuantumOperation:
    """Completely depolarizing map rho -> I/d."""
    ks = [np.zeros((d, d), dtype=complex) for _ in range(d * d)]
    for i in range(d):
        for j in range(d):
            ks[i * d + j][i, j] = 1.0 / np.sqrt(d)
    return from_kraus(ks)


def replace_channel(target: DensityMatrix, d_in: int | None = None, tols: Tolerances = DEFAULT_TOLS) -> QuantumOperation:
    """Map that discards its input and prepares ``target``.

    Its Choi matrix is target (x) I, so the normalized Choi is target (x) I/d.
    """
    d_in = target.dim if d_in is None else d_in
    w, V = mk.herm_eig(target.mat, tols)
    w = mk.clamp_spectrum(w, tols)
    ks = []
    for lam, v in zip(w, V.T):
        if lam > 0.0:
            for j in range(d_in):
                k = np.zeros((target.dim, d_in), dtype=complex)
                k[:, j] = np.sqrt(lam) * v
                ks.append(k)
    return from_kraus(ks, tols=tols)


def classical_channel(t: np.ndarray) -> QuantumOperation:
    """Channel acting as the column-stochastic matrix ``t`` on basis states."""
    t = np.asarray(t, dtype=float)
    d_out, d_in = t.shape
    if np.any(t < 0) or mk.max_abs(t.sum(axis=0) - 1.0) > 1e-12:
        raise ValidationError("matrix is not column stochastic")
    ks = []
    for b in range(d_out):
        for c in range(d_in):
            if t[b, c] > 0.0:
                k = np.zeros((d_out, d_in), dtype=complex)
                k[b, c] = np.sqrt(t[b, c])
                ks.append(k)
    return from_kraus(ks)


def check_unitary(u: np.ndarray, tols: Tolerances = DEFAULT_TOLS, what: str = "matrix") -> None:
    u = mk.as_matrix(u)
    if u.shape[0] != u.shape[1]:
        raise ShapeError(f"{what} is not square: {u.shape}")
    dev = mk.max_abs(u.conj().T @ u - np.eye(u.shape[0]))
    if dev > 1e-10:
        raise ValidationError(f"{what} is not unitary: max deviation {dev:.3e}")


def swap_unitary(d1: int, d2: int | None = None) -> np.ndarray:
    """SWAP between two subsystems (equal dims required for a square swap)."""
    d2 = d1 if d2 is None else d2
    shape = DimShape([d1, d2], ["1", "2"])
    return mk.permutation_matrix(shape, ["2", "1"])


def partial_swap_unitary(d: int, theta: float) -> np.ndarray:
    """cos(theta) I + i sin(theta) SWAP on two d-dimensional factors."""
    s = swap_unitary(d)
    return np.cos(theta) * np.eye(d * d, dtype=complex) + 1j * np.sin(theta) * s


# ---------------------------------------------------------------------------
# Dilations and fixed points
# ---------------------------------------------------------------------------

def channel_from_dilation(
    u: np.ndarray, tau: DensityMatrix, tols: Tolerances = DEFAULT_TOLS
) -> QuantumOperation:
    """The channel sigma -> tr_E[U (sigma (x) tau) U^dag].

    ``u`` acts on system (x) environment with the system on the slow index.
    Kraus operators are K_(i,j) = sqrt(lam_j) (I (x) <i|) U (I (x) |v_j>)
    with (lam_j, v_j) the eigenpairs of tau.
    """
    u = mk.as_matrix(u)
    d_e = tau.dim
    d_tot = u.shape[0]
    if d_tot % d_e != 0:
        raise ShapeError(f"unitary dim {d_tot} does not factor over environment dim {d_e}")
    d_s = d_tot // d_e
    check_unitary(u, tols, what="dilation unitary")
    w, V = mk.herm_eig(tau.mat, tols)
    w = mk.clamp_spectrum(w, tols)
    u4 = u.reshape(d_s, d_e, d_s, d_e)
    ks = []
    for lam, v in zip(w, V.T):
        if lam <= 0.0:
            continue
        # block[i] = (I (x) <i|) U (I (x) |v>), one Kraus per env output index
        block = np.einsum("aibj,j->iab", u4, v)
        for i in range(d_e):
            ks.append(np.sqrt(lam) * block[i])
    return from_kraus(ks, tols=tols)


def transfer_matrix(op: QuantumOperation) -> np.ndarray:
    """Superoperator matrix acting on row-major vec(rho)."""
    t = np.zeros((op.d_out * op.d_out, op.d_in * op.d_in), dtype=complex)
    for k in op.kraus_ops():
        t += np.kron(k, k.conj())
    return t


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


@dataclass(frozen=True)
class NessResult:
    """A fixed point of a channel together with convergence diagnostics."""

    state: DensityMatrix
    residual: float
    method: str              # "eigen" or "cesaro"
    fixed_space_dim: int


def _repair_psd(m: np.ndarray, tols: Tolerances) -> np.ndarray | None:
    """Hermitize, clamp small negative eigenvalues, renormalize; None if the
    negative part is too large to be float noise."""
    m = (m + m.conj().T) / 2.0
    tr = np.trace(m).real
    if abs(tr) < 1e-12:
        return None
    m = m / tr
    w, V = np.linalg.eigh(m)
    if w[0] < -1e-8:
        return None
    w = np.clip(w, 0.0, None)
    m = (V * w) @ V.conj().T
    return m / np.trace(m).real


def fixed_point(op: QuantumOperation, tols: Tolerances = DEFAULT_TOLS) -> NessResult:
    """Extract a steady state of a trace-preserving channel.

    Primary route: eigenvector of the d^2 x d^2 superoperator at the
    eigenvalue nearest 1.  When the fixed space is degenerate or the
    eigenvector cannot be repaired into a state, falls back to the Cesaro
    average (1/N) sum_n Phi^n(I/d) with N doubling up to 2^16, which always
    converges onto a valid fixed state for trace-preserving maps.
    """
    if op.d_in != op.d_out:
        raise ShapeError("fixed point requires a square operation")
    if not op.is_trace_preserving:
        raise ValidationError("fixed point requires a trace-preserving operation")
    d = op.d_in
    t = transfer_matrix(op)
    evals, evecs = np.linalg.eig(t)
    fixed_space_dim = int(np.sum(np.abs(evals - 1.0) < 1e-8))

    def finish(mat: np.ndarray, method: str) -> NessResult | None:
        repaired = _repair_psd(mat, tols)
        if repaired is None:
            return None
        resid = trace_norm(apply_matrix(op, repaired) - repaired)
        if resid > tols.fp_tol:
            return None
        state = density(repaired, DimShape([d], ["S"]), tols=tols)
        return NessResult(state, resid, method, fixed_space_dim)

    if fixed_space_dim == 1:
        idx = int(np.argmin(np.abs(evals - 1.0)))
        cand = evecs[:, idx].reshape(d, d)
        res = finish(cand, "eigen")
        if res is not None:
            return res

    # Cesaro fallback from the maximally mixed state.
    x = np.eye(d, dtype=complex) / d
    total = x.copy()
    n = 1
    while n <= (1 << 16):
        res = finish(total / n, "cesaro")
        if res is not None:
            return res
        # double the number of averaged iterates
        for _ in range(n):
            x = apply_matrix(op, x)
            total += x
        n *= 2
    raise FixedPointError(
        f"Cesaro average did not reach residual {tols.fp_tol} within 2^16 iterations "
        f"(fixed_space_dim={fixed_space_dim})"
    )


def marginal_operation(
    op: QuantumOperation, keep: str, tols: Tolerances = DEFAULT_TOLS
) -> QuantumOperation:
    """Reduce a bipartite operation on P (x) Q to the kept subsystem.

    The result's Choi is the partial trace of ``op.choi`` over the discarded
    subsystem's (out, in) pair, rescaled to trace d_in of the kept part; it
    is the channel X -> tr_disc[op(X (x) I/d_disc)].
    """
    if op.bipartite is None:
        raise ShapeError("operation has no declared bipartite structure")
    if keep not in ("P", "Q"):
        raise ValueError(f"keep must be 'P' or 'Q', got {keep!r}")
    d_p, d_q = op.bipartite
    shape = DimShape([d_p, d_q, d_p, d_q], ["Po", "Qo", "Pi", "Qi"])
    if keep == "P":
        reduced = mk.partial_trace(op.choi, shape, ["Po", "Pi"]) / d_q
        return from_choi(reduced, d_p, d_p, tols=tols)
    reduced = mk.partial_trace(op.choi, shape, ["Qo", "Qi"]) / d_p
    return from_choi(reduced, d_q, d_q, tols=tols)


# ---------------------------------------------------------------------------
# Random channels
# ---------------------------------------------------------------------------

def random_cptp(
    d: int,
    kraus_rank: int,
    rng: np.random.Generator,
    d_out: int | None = None,
    bipartite: tuple[int, int] | None = None,
    tols: Tolerances = DEFAULT_TOLS,
) -> QuantumOperation:
    """Random CPTP map from the Wishart/BCSZ construction.

    A PSD Wishart matrix W of rank ``kraus_rank`` on out (x) in is projected
    onto the trace-preserving slice via W -> (I (x) R^-1/2) W (I (x) R^-1/2)
    with R = tr_out W.
    """
    d_out = d if d_out is None else d_out
    g = ginibre(d_out * d, kraus_rank, rng)
    w = g @ g.conj().T
    r = tr_out_choi(w, d_out, d)
    rw, rv = np.linalg.eigh((r + r.conj().T) / 2.0)
    rw = np.clip(rw, 1e-14, None)
    r_isqrt = (rv * (rw ** -0.5)) @ rv.conj().T
    choi = np.kron(np.eye(d_out), r_isqrt) @ w @ np.kron(np.eye(d_out), r_isqrt).conj().T
    choi = (choi + choi.conj().T) / 2.0
    op = from_choi(choi, d_out, d, bipartite=bipartite, tols=tols)
    # materialize Kraus form so apply() uses the cheaper route
    return QuantumOperation(d, d_out, op.choi, kraus_of(op, tols), bipartite, tols)
