"""Density matrices and entropic functionals.

All entropies are in nats (natural logarithm).  Relative entropy returns
``float('inf')`` when the first argument has support outside the support of
the second, detected by projecting onto the kernel at ``psd_floor``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import matkernel as mk
from .config import DEFAULT_TOLS, Tolerances
from .matkernel import DimShape, ShapeError, ValidationError


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, PSD, unit-trace matrix on a labeled tensor factor structure."""

    mat: np.ndarray
    shape: DimShape

    def __post_init__(self):
        object.__setattr__(self, "mat", mk.as_matrix(self.mat))

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def factor_of(self, label: str) -> int:
        return self.shape.factor_of(label)


def density(
    mat: np.ndarray,
    shape: DimShape | None = None,
    labels: Sequence[str] | None = None,
    tols: Tolerances = DEFAULT_TOLS,
) -> DensityMatrix:
    """Validate a matrix as a density matrix and attach its shape.

    With neither ``shape`` nor ``labels`` given, a single subsystem labeled
    "S" is assumed.  ``labels`` alone means one factor per label is not
    inferable, so it is only valid for a single label.
    """
    mat = mk.as_matrix(mat)
    if mat.shape[0] != mat.shape[1]:
        raise ShapeError(f"density matrix must be square, got {mat.shape}")
    d = mat.shape[0]
    if shape is None:
        if labels is None:
            shape = DimShape([d], ["S"])
        elif len(labels) == 1:
            shape = DimShape([d], labels)
        else:
            raise ShapeError("multiple labels require an explicit DimShape")
    if shape.dim != d:
        raise ShapeError(f"shape dim {shape.dim} != matrix dim {d}")
    dev = mk.max_abs(mat - mat.conj().T)
    if dev > tols.herm_tol:
        raise ValidationError(f"not Hermitian: max deviation {dev:.3e}")
    tr = float(np.real(np.trace(mat)))
    if abs(tr - 1.0) > tols.trace_tol:
        raise ValidationError(f"trace {tr!r} is not 1 within {tols.trace_tol}")
    w = np.linalg.eigvalsh((mat + mat.conj().T) / 2.0)
    if w[0] < -tols.psd_floor:
        raise ValidationError(f"negative eigenvalue {w[0]:.3e} below -psd_floor")
    return DensityMatrix(mat, shape)


def marginal(rho: DensityMatrix, keep: Sequence[str], tols: Tolerances = DEFAULT_TOLS) -> DensityMatrix:
    """Partial trace onto the subsystems named in ``keep``."""
    sub = rho.shape.subshape(keep)
    return density(mk.partial_trace(rho.mat, rho.shape, keep), sub, tols=tols)


def spectrum(rho: DensityMatrix, tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Descending eigenvalues, clamped at psd_floor."""
    w, _ = mk.herm_eig(rho.mat, tols)
    return mk.clamp_spectrum(w, tols)


def entropy_of_spectrum(w: np.ndarray) -> float:
    """Shannon entropy of a clamped spectrum in nats, with 0 log 0 = 0."""
    w = np.asarray(w, dtype=float)
    pos = w[w > 0.0]
    return float(-np.sum(pos * np.log(pos)))


def von_neumann_entropy(rho: DensityMatrix, tols: Tolerances = DEFAULT_TOLS) -> float:
    """S(rho) = -tr[rho log rho] in nats."""
    return entropy_of_spectrum(spectrum(rho, tols))


def relative_entropy(
    rho1: DensityMatrix, rho2: DensityMatrix, tols: Tolerances = DEFAULT_TOLS
) -> float:
    """D[rho1 || rho2] in nats; +inf on support mismatch.

    Support mismatch means the weight of rho1 on the kernel of rho2
    (eigenvalues below psd_floor) exceeds support_tol.
    """
    if rho1.dim != rho2.dim:
        raise ShapeError(f"dimension mismatch {rho1.dim} != {rho2.dim}")
    w2, V2 = mk.herm_eig(rho2.mat, tols)
    w2 = mk.clamp_spectrum(w2, tols)
    # Weight of rho1 in each eigenvector of rho2.
    overlap = np.real(np.einsum("ik,ij,jk->k", V2.conj(), rho1.mat, V2))
    kernel = w2 == 0.0
    if float(np.sum(overlap[kernel])) > tols.support_tol:
        return float("inf")
    w1, _ = mk.herm_eig(rho1.mat, tols)
    w1 = mk.clamp_spectrum(w1, tols)
    d = -entropy_of_spectrum(w1) - float(np.sum(overlap[~kernel] * np.log(w2[~kernel])))
    # Clip float noise around zero; genuine negatives would violate Klein's
    # inequality and should surface, so only a tiny band is clipped.
    if -1e-12 < d < 0.0:
        d = 0.0
    return d


def mutual_information(
    rho: DensityMatrix, part: Sequence[str], tols: Tolerances = DEFAULT_TOLS
) -> float:
    """I(P:Q) = S(P) + S(Q) - S(PQ) for the bipartition (part, rest)."""
    part_set = set(part)
    all_labels = set(rho.shape.labels)
    if not part_set or not part_set < all_labels:
        raise ShapeError(f"{sorted(part_set)} is not a proper nonempty subset of {rho.shape.labels}")
    rest = [l for l in rho.shape.labels if l not in part_set]
    s_p = von_neumann_entropy(marginal(rho, list(part_set), tols), tols)
    s_q = von_neumann_entropy(marginal(rho, rest, tols), tols)
    return s_p + s_q - von_neumann_entropy(rho, tols)


# ---------------------------------------------------------------------------
# Random ensembles
# ---------------------------------------------------------------------------

def ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Standard complex Gaussian matrix."""
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def random_density(
    d: int, rank: int, rng: np.random.Generator, labels: Sequence[str] | None = None,
    tols: Tolerances = DEFAULT_TOLS,
) -> DensityMatrix:
    """Normalized Wishart state G G^dag / tr with G a d x rank Ginibre matrix."""
    if not 1 <= rank <= d:
        raise ValueError(f"rank {rank} out of range [1, {d}]")
    g = ginibre(d, rank, rng)
    m = g @ g.conj().T
    m /= np.trace(m).real
    shape = DimShape([d], labels if labels is not None else ["S"])
    return density(m, shape, tols=tols)


def random_pure(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random state vector of dimension d."""
    v = ginibre(d, 1, rng)[:, 0]
    return v / np.linalg.norm(v)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase fix."""
    q, r = np.linalg.qr(ginibre(d, d, rng))
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent per-trial stream derived from (seed, trial)."""
    return np.random.default_rng([np.uint64(seed), np.uint64(trial)])
