"""Numerical tolerances shared across the package.

All tolerances live in one frozen dataclass so that a single override
(e.g. from a scenario file or the SUPCHAN_SLACK_TOL environment variable)
propagates consistently.  Defaults are sized for double precision on
matrices of dimension <= 36.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    herm_tol: float = 1e-10      # max-abs deviation allowed from Hermiticity
    psd_floor: float = 1e-10     # eigenvalues below this are clamped to exactly 0
    recon_tol: float = 1e-9      # eigendecomposition reconstruction residual
    fp_tol: float = 1e-9         # fixed-point residual ||Phi(e) - e||_1
    support_tol: float = 1e-9    # kernel weight above this means support mismatch
    slack_tol: float = 1e-8      # bound violations beyond this are genuine failures
    trace_tol: float = 1e-10     # unit-trace check for density matrices

    def with_overrides(self, **kwargs: float) -> "Tolerances":
        """Return a copy with the given fields replaced."""
        return replace(self, **kwargs)


def from_env(base: Tolerances | None = None) -> Tolerances:
    """Apply the SUPCHAN_SLACK_TOL environment override, if set."""
    tols = base if base is not None else Tolerances()
    raw = os.environ.get("SUPCHAN_SLACK_TOL")
    if raw is not None:
        tols = tols.with_overrides(slack_tol=float(raw))
    return tols


DEFAULT_TOLS = Tolerances()
