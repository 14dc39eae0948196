"""Dense complex-matrix kernel: tensor products, partial traces, subsystem
permutations, Hermitian eigendecompositions and matrix functions.

Index convention used everywhere: a matrix on a composite space is stored
row-major with the *leftmost* subsystem label as the slowest-varying index,
so ``tensor(a, b)`` puts ``a`` on the slow index (plain Kronecker product).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import DEFAULT_TOLS, Tolerances

# Dimension guard: dense storage only, desk-scale problems.
MAX_ENTRIES = 1 << 24


class ShapeError(ValueError):
    """Dimension or label bookkeeping error."""


class ValidationError(ValueError):
    """Input violates a numerical invariant (Hermiticity, PSD, trace...)."""


@dataclass(frozen=True)
class DimShape:
    """Ordered subsystem dimensions with unique labels.

    ``factors[i]`` is the dimension of subsystem ``labels[i]``; the product
    of the factors must equal the matrix dimension the shape annotates.
    """

    factors: tuple[int, ...]
    labels: tuple[str, ...]

    def __init__(self, factors: Iterable[int], labels: Iterable[str]):
        factors = tuple(int(f) for f in factors)
        labels = tuple(str(l) for l in labels)
        if len(factors) != len(labels):
            raise ShapeError(f"{len(factors)} factors but {len(labels)} labels")
        if any(f <= 0 for f in factors):
            raise ShapeError(f"non-positive factor in {factors}")
        if len(set(labels)) != len(labels):
            raise ShapeError(f"duplicate labels in {labels}")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return int(np.prod(self.factors))

    def factor_of(self, label: str) -> int:
        return self.factors[self.index_of(label)]

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ShapeError(f"unknown label {label!r}; have {self.labels}") from None

    def subshape(self, keep: Sequence[str]) -> "DimShape":
        """Shape of the subsystems in ``keep``, in their original order."""
        kept = [l for l in self.labels if l in set(keep)]
        return DimShape([self.factor_of(l) for l in kept], kept)


def as_matrix(m: np.ndarray) -> np.ndarray:
    """Validate and return a finite 2-D complex array."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {m.shape}")
    if m.size > MAX_ENTRIES:
        raise ShapeError(f"matrix with {m.size} entries exceeds the dense-storage limit")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains NaN or Inf entries")
    return m


def tensor(*mats: np.ndarray) -> np.ndarray:
    """Kronecker product, left factor on the slow index."""
    out = as_matrix(mats[0])
    for m in mats[1:]:
        m = as_matrix(m)
        if out.size * m.size > MAX_ENTRIES:
            raise ShapeError("tensor product exceeds the dense-storage limit")
        out = np.kron(out, m)
    return out


def _check_square(m: np.ndarray, shape: DimShape) -> np.ndarray:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected square matrix, got {m.shape}")
    if m.shape[0] != shape.dim:
        raise ShapeError(f"matrix dim {m.shape[0]} != shape dim {shape.dim} {shape.factors}")
    return m


def partial_trace(m: np.ndarray, shape: DimShape, keep: Sequence[str]) -> np.ndarray:
    """Trace out every subsystem not named in ``keep``.

    Kept subsystems stay in their original relative order; the result has
    dimension equal to the product of the kept factors.
    """
    m = _check_square(m, shape)
    keep_set = set(keep)
    for l in keep_set:
        shape.index_of(l)  # raises on unknown labels
    n = len(shape.factors)
    t = m.reshape(shape.factors + shape.factors)
    # Trace row/col index pairs of discarded subsystems, highest index first
    # so earlier positions stay valid.
    removed = 0
    for i in reversed(range(n)):
        if shape.labels[i] not in keep_set:
            t = np.trace(t, axis1=i, axis2=i + n - removed)
            removed += 1
    d_keep = int(np.prod([f for f, l in zip(shape.factors, shape.labels) if l in keep_set]))
    return t.reshape(d_keep, d_keep)


def permutation_matrix(shape: DimShape, new_order: Sequence[str]) -> np.ndarray:
    """Unitary P that reorders subsystems: P |i_old...> = |i_new...>."""
    new_order = list(new_order)
    if sorted(new_order) != sorted(shape.labels):
        raise ShapeError(f"{new_order} is not a permutation of {shape.labels}")
    perm = [shape.index_of(l) for l in new_order]
    d = shape.dim
    P = np.zeros((d, d), dtype=complex)
    for old_flat, idx in enumerate(np.ndindex(*shape.factors)):
        new_idx = tuple(idx[p] for p in perm)
        new_flat = int(np.ravel_multi_index(new_idx, [shape.factors[p] for p in perm]))
        P[new_flat, old_flat] = 1.0
    return P


def permute_subsystems(
    m: np.ndarray, shape: DimShape, new_order: Sequence[str]
) -> tuple[np.ndarray, DimShape]:
    """Similarity transform by the subsystem permutation; spectrum preserved.

    Returns the permuted matrix together with its new shape.
    """
    m = _check_square(m, shape)
    new_order = list(new_order)
    if sorted(new_order) != sorted(shape.labels):
        raise ShapeError(f"{new_order} is not a permutation of {shape.labels}")
    perm = [shape.index_of(l) for l in new_order]
    n = len(perm)
    t = m.reshape(shape.factors + shape.factors)
    t = np.transpose(t, perm + [p + n for p in perm])
    d = shape.dim
    new_shape = DimShape([shape.factors[p] for p in perm], new_order)
    return t.reshape(d, d), new_shape


def max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def is_hermitian(m: np.ndarray, tol: float) -> bool:
    return max_abs(m - m.conj().T) <= tol


def herm_eig(
    m: np.ndarray, tols: Tolerances = DEFAULT_TOLS
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, V)`` with real eigenvalues ``w`` in descending order and
    unitary ``V`` whose columns are the matching eigenvectors, so that
    ``m == V @ diag(w) @ V.conj().T`` within ``recon_tol``.  No eigenvector
    order or phase is promised inside degenerate clusters.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected square matrix, got {m.shape}")
    dev = max_abs(m - m.conj().T)
    if dev > tols.herm_tol:
        raise ValidationError(f"matrix is not Hermitian: max deviation {dev:.3e}")
    w, V = np.linalg.eigh((m + m.conj().T) / 2.0)
    w, V = w[::-1], V[:, ::-1]
    resid = max_abs(V @ np.diag(w) @ V.conj().T - m)
    if resid > tols.recon_tol:
        raise ValidationError(f"eigendecomposition residual {resid:.3e} exceeds recon_tol")
    return w, V


def clamp_spectrum(w: np.ndarray, tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Snap eigenvalues within psd_floor of zero to exactly zero."""
    w = np.array(w, dtype=float)
    w[np.abs(w) < tols.psd_floor] = 0.0
    return w


def herm_fn(
    m: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    kernel_policy: str = "zero",
    tols: Tolerances = DEFAULT_TOLS,
) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum.

    Eigenvalues within ``psd_floor`` of zero are treated as exact zeros
    before evaluation.  Where ``f`` is undefined at 0 (log), the kernel
    policy decides: ``"zero"`` defines the value there to be 0 (the
    0*log(0) = 0 convention is applied by callers), ``"reject"`` raises.
    Functions finite at 0 (exp) are unaffected by the policy.
    """
    if kernel_policy not in ("zero", "reject"):
        raise ValueError(f"unknown kernel_policy {kernel_policy!r}")
    w, V = herm_eig(m, tols)
    w = clamp_spectrum(w, tols)
    with np.errstate(divide="ignore", invalid="ignore"):
        fw = np.asarray(f(w), dtype=float)
    bad = ~np.isfinite(fw)
    if np.any(bad & (w != 0.0)):
        raise ValidationError("scalar function undefined on a non-kernel eigenvalue")
    if np.any(bad):
        if kernel_policy == "reject":
            raise ValidationError("matrix has a zero eigenvalue and kernel_policy is 'reject'")
        fw[bad] = 0.0
    out = (V * fw) @ V.conj().T
    return (out + out.conj().T) / 2.0
