"""Shared numeric tolerances.

Every predicate in the package that needs a cutoff reads its default from a
single ``Tolerances`` instance, so a whole experiment can be tightened or
relaxed coherently instead of sprinkling magic numbers around.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    """Default numeric cutoffs.  Relative to the operator scale unless noted.

    Attributes
    ----------
    positivity:
        Eigenvalue floor; x counts as positive when the minimum eigenvalue of
        its hermitian part is >= -positivity * ||x||.
    self_adjoint:
        Cap on ||x - x*|| relative to ||x||.
    projection:
        Cap on the idempotency and self-adjointness residuals of projections.
    spectral_include:
        Absolute slack added to spectral thresholds; eigenvalues within this
        slack of a cut level are included below the cut.
    meet_rank:
        Singular-value cutoff used by projection meets, scaled by the block
        dimension.
    certificate:
        Agreement required when a certificate's stored bounds are recomputed.
    decay:
        Default final-decay target for convergence certificates.
    """

    positivity: float = 1e-10
    self_adjoint: float = 1e-10
    projection: float = 1e-8
    spectral_include: float = 1e-12
    meet_rank: float = 1e-8
    certificate: float = 1e-10
    decay: float = 1e-6


DEFAULT_TOLS = Tolerances()
