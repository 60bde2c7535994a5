"""Block-diagonal matrix algebras with weighted traces.

A :class:`TracialAlgebra` is a finite direct sum of full complex matrix
blocks, each carrying a strictly positive trace weight.  Elements are
:class:`Operator` instances; the weighted trace, the p-norms built from it,
absolute values, spectral resolutions, spectral projections and lattice meets
of projections all live in this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .config import DEFAULT_TOLS

__all__ = [
    "AlgebraMismatchError",
    "TracialAlgebra",
    "Operator",
    "Projection",
    "SpectralResolution",
    "trace",
    "pnorm",
    "abs_value",
    "spectral_resolution",
    "spectral_projection",
    "proj_meet",
    "meet_all",
    "min_eig",
    "random_operator",
    "random_self_adjoint",
    "random_positive",
    "random_projection",
    "operator_to_dict",
    "operator_from_dict",
    "vec",
    "unvec",
]


class AlgebraMismatchError(ValueError):
    """Raised when operator blocks do not match the algebra they are used with."""


@dataclass(frozen=True)
class TracialAlgebra:
    """Direct sum of full matrix blocks with a weighted block trace.

    Parameters
    ----------
    blocks:
        Block dimensions, each >= 1.
    weights:
        Strictly positive trace weight per block.  The trace of an element is
        ``sum_i weights[i] * tr(block_i)``, so the trace of the identity is
        ``sum_i weights[i] * blocks[i]``.
    """

    blocks: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(int(n) for n in self.blocks))
        object.__setattr__(self, "weights", tuple(float(c) for c in self.weights))
        if len(self.blocks) == 0:
            raise ValueError("algebra needs at least one block")
        if len(self.blocks) != len(self.weights):
            raise ValueError("one weight per block required")
        if any(n < 1 for n in self.blocks):
            raise ValueError("block dimensions must be >= 1")
        if any(not (c > 0) for c in self.weights):
            raise ValueError("trace weights must be > 0")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def total_dim(self) -> int:
        return sum(self.blocks)

    @property
    def trace_of_identity(self) -> float:
        return float(sum(c * n for c, n in zip(self.weights, self.blocks)))

    @property
    def min_weight(self) -> float:
        return min(self.weights)

    @cached_property
    def vec_dim(self) -> int:
        """Dimension of the algebra viewed as a complex vector space."""
        return sum(n * n for n in self.blocks)

    @cached_property
    def vec_offsets(self) -> tuple[int, ...]:
        offs = [0]
        for n in self.blocks:
            offs.append(offs[-1] + n * n)
        return tuple(offs)

    def identity(self) -> Operator:
        return Operator(self, [np.eye(n, dtype=complex) for n in self.blocks])

    def zero(self) -> Operator:
        return Operator(self, [np.zeros((n, n), dtype=complex) for n in self.blocks])


class Operator:
    """Element of a :class:`TracialAlgebra`: one complex matrix per block.

    Instances are immutable; all arithmetic returns new operators.
    """

    __slots__ = ("algebra", "blocks")

    def __init__(self, algebra: TracialAlgebra, blocks: Sequence[np.ndarray]):
        if len(blocks) != algebra.n_blocks:
            raise AlgebraMismatchError(
                f"expected {algebra.n_blocks} blocks, got {len(blocks)}"
            )
        mats = []
        for n, b in zip(algebra.blocks, blocks):
            arr = np.array(b, dtype=complex)
            if arr.shape != (n, n):
                raise AlgebraMismatchError(
                    f"block of shape {arr.shape} does not match dimension {n}"
                )
            arr.setflags(write=False)
            mats.append(arr)
        object.__setattr__(self, "algebra", algebra)
        object.__setattr__(self, "blocks", tuple(mats))

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("Operator is immutable")

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Operator") -> None:
        if self.algebra != other.algebra:
            raise AlgebraMismatchError("operators live in different algebras")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.algebra, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.algebra, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __neg__(self) -> "Operator":
        return Operator(self.algebra, [-a for a in self.blocks])

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.algebra, [a * scalar for a in self.blocks])

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "Operator":
        return Operator(self.algebra, [a / scalar for a in self.blocks])

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.algebra, [a @ b for a, b in zip(self.blocks, other.blocks)])

    @property
    def H(self) -> "Operator":
        """Adjoint (conjugate transpose blockwise)."""
        return Operator(self.algebra, [a.conj().T for a in self.blocks])

    def herm(self) -> "Operator":
        """Hermitian part (x + x*)/2."""
        return Operator(
            self.algebra, [(a + a.conj().T) / 2.0 for a in self.blocks]
        )

    # -- predicates and scalars -------------------------------------------
    def norm_inf(self) -> float:
        """Largest singular value across blocks (the operator norm)."""
        return max(
            (float(np.linalg.norm(a, 2)) if a.size else 0.0) for a in self.blocks
        )

    def self_adjoint_defect(self) -> float:
        return max(
            float(np.linalg.norm(a - a.conj().T, 2)) for a in self.blocks
        )

    def is_self_adjoint(self, tol: float = DEFAULT_TOLS.self_adjoint) -> bool:
        scale = max(self.norm_inf(), 1e-300)
        return self.self_adjoint_defect() <= tol * max(scale, 1e-14)

    def is_positive(self, tol: float = DEFAULT_TOLS.positivity) -> bool:
        scale = max(self.norm_inf(), 1e-14)
        if self.self_adjoint_defect() > tol * scale:
            return False
        return min_eig(self) >= -tol * scale

    def to_dense(self) -> np.ndarray:
        """Single block-diagonal matrix, mainly for cross-checks in tests."""
        n = self.algebra.total_dim
        out = np.zeros((n, n), dtype=complex)
        k = 0
        for a in self.blocks:
            m = a.shape[0]
            out[k : k + m, k : k + m] = a
            k += m
        return out

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Operator(blocks={self.algebra.blocks}, norm={self.norm_inf():.3g})"


def min_eig(x: Operator) -> float:
    """Minimum eigenvalue of the hermitian part of ``x`` over all blocks."""
    vals = []
    for a in x.blocks:
        h = (a + a.conj().T) / 2.0
        vals.append(float(np.linalg.eigvalsh(h)[0]))
    return min(vals)


# ---------------------------------------------------------------------------
# trace and p-norms
# ---------------------------------------------------------------------------

def trace(alg: TracialAlgebra, x: Operator) -> complex:
    """Weighted trace ``sum_i c_i tr(x_i)``.

    Linear in ``x`` and real on self-adjoint inputs (up to roundoff).
    """
    if x.algebra != alg:
        raise AlgebraMismatchError("operator does not belong to this algebra")
    return complex(sum(c * np.trace(a) for c, a in zip(alg.weights, x.blocks)))


def _singular_values(x: Operator) -> list[np.ndarray]:
    return [np.linalg.svd(a, compute_uv=False) for a in x.blocks]


def pnorm(alg: TracialAlgebra, x: Operator, p: float) -> float:
    """p-norm ``tau(|x|^p)^(1/p)``; ``p = inf`` gives the operator norm.

    Computed from singular values, with each block's contribution weighted by
    its trace weight.  ``p < 1`` is rejected.
    """
    if x.algebra != alg:
        raise AlgebraMismatchError("operator does not belong to this algebra")
    if p != math.inf and p < 1:
        raise ValueError("p must be >= 1 or inf")
    svals = _singular_values(x)
    if p == math.inf:
        return max(float(s[0]) if s.size else 0.0 for s in svals)
    total = sum(c * float(np.sum(s**p)) for c, s in zip(alg.weights, svals))
    return float(total ** (1.0 / p))


def abs_value(x: Operator) -> Operator:
    """Positive square root of ``x* x``."""
    blocks = []
    for a in x.blocks:
        w, v = np.linalg.eigh(a.conj().T @ a)
        w = np.sqrt(np.clip(w, 0.0, None))
        blocks.append((v * w) @ v.conj().T)
    return Operator(x.algebra, blocks)


# ---------------------------------------------------------------------------
# spectral machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralResolution:
    """Eigendecomposition of a self-adjoint operator.

    ``eigenvalues[i]`` is the ascending spectrum of block ``i`` and
    ``eigenvectors[i]`` the matching orthonormal eigenvector columns.
    """

    algebra: TracialAlgebra
    eigenvalues: tuple[np.ndarray, ...]
    eigenvectors: tuple[np.ndarray, ...]

    def reconstruct(self) -> Operator:
        blocks = [
            (v * w) @ v.conj().T for w, v in zip(self.eigenvalues, self.eigenvectors)
        ]
        return Operator(self.algebra, blocks)

    def reconstruction_residual(self, x: Operator) -> float:
        scale = max(x.norm_inf(), 1e-300)
        return (self.reconstruct() - x).norm_inf() / scale

    def gram_residual(self) -> float:
        return max(
            float(np.linalg.norm(v.conj().T @ v - np.eye(v.shape[1]), 2))
            for v in self.eigenvectors
        )

    def all_eigenvalues(self) -> np.ndarray:
        return np.concatenate([w for w in self.eigenvalues])


def spectral_resolution(
    x: Operator, tol: float = DEFAULT_TOLS.self_adjoint
) -> SpectralResolution:
    """Eigendecomposition of a (numerically) self-adjoint operator.

    The input may carry roundoff; it is symmetrized before decomposition, but
    a defect beyond ``tol * ||x||`` is rejected.
    """
    scale = max(x.norm_inf(), 1e-14)
    if x.self_adjoint_defect() > tol * scale:
        raise ValueError(
            f"operator is not self-adjoint within tolerance "
            f"({x.self_adjoint_defect():.3e} > {tol * scale:.3e})"
        )
    ws, vs = [], []
    for a in x.blocks:
        h = (a + a.conj().T) / 2.0
        w, v = np.linalg.eigh(h)
        ws.append(w)
        vs.append(v)
    return SpectralResolution(x.algebra, tuple(ws), tuple(vs))


class Projection:
    """Idempotent self-adjoint element, with residual bookkeeping.

    ``cotrace`` is the weighted trace of the complement ``1 - p``.  When a
    projection is built from an explicit eigenvector selection the cotrace is
    the exact weighted count of excluded eigenvectors.
    """

    __slots__ = ("op", "cotrace", "idempotency_residual", "selfadjoint_residual")

    def __init__(
        self,
        op: Operator,
        cotrace: float | None = None,
        tol: float = DEFAULT_TOLS.projection,
    ):
        idem = (op @ op - op).norm_inf()
        sa = op.self_adjoint_defect()
        if idem > tol or sa > tol:
            raise ValueError(
                f"not a projection: idempotency residual {idem:.3e}, "
                f"self-adjointness residual {sa:.3e} (tol {tol:.1e})"
            )
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "idempotency_residual", idem)
        object.__setattr__(self, "selfadjoint_residual", sa)
        if cotrace is None:
            alg = op.algebra
            cotrace = float(
                (trace(alg, alg.identity()) - trace(alg, op)).real
            )
        object.__setattr__(self, "cotrace", float(cotrace))

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("Projection is immutable")

    @property
    def algebra(self) -> TracialAlgebra:
        return self.op.algebra

    def complement(self) -> Operator:
        return self.algebra.identity() - self.op

    def ranks(self) -> tuple[int, ...]:
        return tuple(int(round(np.trace(a).real)) for a in self.op.blocks)

    def leq(self, other: "Projection", tol: float = 1e-8) -> bool:
        """True when this projection is dominated by ``other`` (q p = p)."""
        return (other.op @ self.op - self.op).norm_inf() <= tol

    def __repr__(self) -> str:  # pragma: no cover
        return f"Projection(ranks={self.ranks()}, cotrace={self.cotrace:.6g})"


def spectral_projection(
    res: SpectralResolution,
    level: float,
    tol: float = DEFAULT_TOLS.spectral_include,
) -> Projection:
    """Projection onto eigenvectors with eigenvalue <= ``level + tol``.

    Ties at the threshold are included, so the co-trace never exceeds the
    weighted count of eigenvalues strictly above the level.
    """
    blocks = []
    cotrace = 0.0
    for n, c, w, v in zip(
        res.algebra.blocks, res.algebra.weights, res.eigenvalues, res.eigenvectors
    ):
        mask = w <= level + tol
        cols = v[:, mask]
        blocks.append(cols @ cols.conj().T)
        cotrace += c * float(n - int(mask.sum()))
    return Projection(Operator(res.algebra, blocks), cotrace=cotrace)


def proj_meet(
    p: Projection,
    q: Projection,
    sv_tol: float = DEFAULT_TOLS.meet_rank,
) -> Projection:
    """Lattice meet: projection onto ``range(p) & range(q)``.

    Computed per block as an orthonormal basis of the null space of the
    stacked complements ``[(1-p); (1-q)]``.  Singular values below
    ``sv_tol * block_dim`` count as zero; the cutoff separates the numerical
    null space from roundoff and can be widened for ill-conditioned inputs.
    """
    if p.algebra != q.algebra:
        raise AlgebraMismatchError("projections live in different algebras")
    alg = p.algebra
    blocks = []
    cotrace = 0.0
    for n, c, a, b in zip(alg.blocks, alg.weights, p.op.blocks, q.op.blocks):
        eye = np.eye(n, dtype=complex)
        stacked = np.vstack([eye - a, eye - b])
        _, s, vh = np.linalg.svd(stacked)
        cut = sv_tol * n
        keep = s <= cut
        basis = vh[keep].conj().T
        if basis.shape[1] == 0:
            blocks.append(np.zeros((n, n), dtype=complex))
            cotrace += c * n
        else:
            blocks.append(basis @ basis.conj().T)
            cotrace += c * float(n - basis.shape[1])
    return Projection(Operator(alg, blocks), cotrace=cotrace)


def meet_all(projections: Iterable[Projection], sv_tol: float = DEFAULT_TOLS.meet_rank) -> Projection:
    """Fold :func:`proj_meet` over a nonempty iterable."""
    it = iter(projections)
    try:
        acc = next(it)
    except StopIteration:
        raise ValueError("meet of an empty family is undefined") from None
    for p in it:
        acc = proj_meet(acc, p, sv_tol=sv_tol)
    return acc


# ---------------------------------------------------------------------------
# random elements
# ---------------------------------------------------------------------------

def random_operator(
    alg: TracialAlgebra, rng: np.random.Generator, scale: float = 1.0
) -> Operator:
    blocks = []
    for n in alg.blocks:
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        blocks.append(scale * a / math.sqrt(2 * n))
    return Operator(alg, blocks)


def random_self_adjoint(
    alg: TracialAlgebra, rng: np.random.Generator, norm: float | None = 1.0
) -> Operator:
    x = random_operator(alg, rng).herm()
    if norm is not None:
        cur = x.norm_inf()
        if cur > 0:
            x = x * (norm / cur)
    return x


def random_positive(
    alg: TracialAlgebra, rng: np.random.Generator, norm: float | None = 1.0
) -> Operator:
    a = random_operator(alg, rng)
    x = a @ a.H
    if norm is not None:
        cur = x.norm_inf()
        if cur > 0:
            x = x * (norm / cur)
    return x


def random_projection(
    alg: TracialAlgebra,
    rng: np.random.Generator,
    ranks: Sequence[int] | None = None,
) -> Projection:
    blocks = []
    cotrace = 0.0
    for i, (n, c) in enumerate(zip(alg.blocks, alg.weights)):
        r = int(rng.integers(0, n + 1)) if ranks is None else int(ranks[i])
        if r == 0:
            blocks.append(np.zeros((n, n), dtype=complex))
        else:
            a = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
            qmat, _ = np.linalg.qr(a)
            blocks.append(qmat @ qmat.conj().T)
        cotrace += c * (n - r)
    return Projection(Operator(alg, blocks), cotrace=cotrace)


# ---------------------------------------------------------------------------
# serialization (JSON-friendly dicts) and vectorization
# ---------------------------------------------------------------------------

def operator_to_dict(x: Operator) -> dict:
    """Schema: {"blocks": [{"dim", "re", "im"}], "weights": [...]}."""
    return {
        "blocks": [
            {
                "dim": int(a.shape[0]),
                "re": a.real.tolist(),
                "im": a.imag.tolist(),
            }
            for a in x.blocks
        ],
        "weights": list(x.algebra.weights),
    }


def operator_from_dict(data: dict, alg: TracialAlgebra | None = None) -> Operator:
    dims = tuple(int(b["dim"]) for b in data["blocks"])
    weights = tuple(float(w) for w in data.get("weights", ()))
    if alg is None:
        alg = TracialAlgebra(dims, weights if weights else tuple(1.0 for _ in dims))
    else:
        if dims != alg.blocks:
            raise AlgebraMismatchError(
                f"serialized dims {dims} do not match algebra blocks {alg.blocks}"
            )
    blocks = [
        np.asarray(b["re"], dtype=float) + 1j * np.asarray(b["im"], dtype=float)
        for b in data["blocks"]
    ]
    return Operator(alg, blocks)


def vec(x: Operator) -> np.ndarray:
    """Flatten to a single complex vector (row-major within each block)."""
    return np.concatenate([a.ravel() for a in x.blocks])


def unvec(alg: TracialAlgebra, v: np.ndarray) -> Operator:
    if v.shape != (alg.vec_dim,):
        raise AlgebraMismatchError(
            f"vector of length {v.shape} does not match algebra dimension {alg.vec_dim}"
        )
    blocks = []
    for n, lo, hi in zip(alg.blocks, alg.vec_offsets[:-1], alg.vec_offsets[1:]):
        blocks.append(np.asarray(v[lo:hi], dtype=complex).reshape(n, n))
    return Operator(alg, blocks)
