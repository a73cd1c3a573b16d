"""Dense complex linear algebra used by every other module.

Everything here is a pure function of its inputs. Matrices are plain
``numpy.ndarray`` objects of complex dtype; subspaces are carried as
orthonormal frames (:class:`Subspace`).

Vectorization is column stacking throughout, so that
``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from qabsorb.errors import PreconditionError

__all__ = [
    "ToleranceContext",
    "DEFAULT_TOL",
    "HermitianEig",
    "Subspace",
    "machine_tol",
    "as_matrix",
    "eig_hermitian",
    "support",
    "support_projector",
    "subspace_op",
    "intersect",
    "span_sum",
    "complement",
    "contains",
    "null_space",
    "solve_linear",
    "vectorize",
    "unvectorize",
    "expm_superop",
    "semigroup_defect",
    "opnorm",
]


@dataclass(frozen=True)
class ToleranceContext:
    """Thresholds for rank decisions and equality checks.

    ``rank_cut`` is relative to the largest eigenvalue (or singular value)
    of the matrix being inspected; ``eq_tol`` is an absolute residual bound.
    """

    rank_cut: float = 1e-10
    eq_tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.rank_cut < 1.0:
            raise ValueError(f"rank_cut must lie in (0, 1), got {self.rank_cut}")
        if not 0.0 < self.eq_tol < 1.0:
            raise ValueError(f"eq_tol must lie in (0, 1), got {self.eq_tol}")


DEFAULT_TOL = ToleranceContext()


def machine_tol(dim: int) -> float:
    """Accumulated eigensolver error bound ``100 * eps * dim``."""
    return 100.0 * np.finfo(float).eps * max(int(dim), 1)


def opnorm(a: np.ndarray) -> float:
    """Operator (spectral) norm; 0 for empty matrices."""
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def as_matrix(a, name: str = "matrix", square: bool = False) -> np.ndarray:
    """Coerce to a finite 2-D complex array, raising ``ValueError`` otherwise."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name}: expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


@dataclass(frozen=True)
class HermitianEig:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def eig_hermitian(a) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    The input is symmetrized as ``(A + A*)/2`` first, so slightly
    non-Hermitian round-off does not leak into complex eigenvalues.
    """
    a = as_matrix(a, "A", square=True)
    h = 0.5 * (a + a.conj().T)
    if h.shape[0] == 0:
        return HermitianEig(np.zeros(0), np.zeros((0, 0), dtype=complex))
    w, v = np.linalg.eigh(h)
    return HermitianEig(w, v)


@dataclass(frozen=True, eq=False)
class Subspace:
    """A subspace of ``C^ambient_dim`` stored as an orthonormal frame.

    ``frame`` has shape ``(ambient_dim, dim)``; ``dim`` may be 0.
    """

    frame: np.ndarray
    _projector: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        f = np.asarray(self.frame, dtype=complex)
        if f.ndim != 2:
            raise ValueError(f"frame must be 2-D, got shape {f.shape}")
        f.setflags(write=False)
        object.__setattr__(self, "frame", f)
        p = f @ f.conj().T
        p.setflags(write=False)
        object.__setattr__(self, "_projector", p)

    @property
    def ambient_dim(self) -> int:
        return self.frame.shape[0]

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self._projector

    def is_zero(self) -> bool:
        return self.dim == 0

    def is_full(self) -> bool:
        return self.dim == self.ambient_dim

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(np.zeros((d, 0), dtype=complex))

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(np.eye(d, dtype=complex))

    @classmethod
    def coordinate(cls, d: int, indices) -> "Subspace":
        """Span of the standard basis vectors ``e_i`` for ``i`` in ``indices``."""
        idx = sorted(set(int(i) for i in indices))
        if any(i < 0 or i >= d for i in idx):
            raise ValueError(f"basis index out of range for dimension {d}: {idx}")
        return cls(np.eye(d, dtype=complex)[:, idx])

    @classmethod
    def span(cls, vectors, tol: ToleranceContext = DEFAULT_TOL) -> "Subspace":
        """Orthonormal frame for the span of the given columns (rank-revealing SVD)."""
        v = as_matrix(vectors, "vectors")
        if v.shape[1] == 0:
            return cls.zero(v.shape[0])
        u, s, _ = np.linalg.svd(v, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            return cls.zero(v.shape[0])
        keep = s >= tol.rank_cut * s[0]
        return cls(u[:, keep])

    @classmethod
    def from_projector(cls, p) -> "Subspace":
        """Range of an (approximate) orthogonal projector: eigenvalues above 1/2."""
        eig = eig_hermitian(p)
        return cls(eig.eigenvectors[:, eig.eigenvalues > 0.5])

    def compress(self, x: np.ndarray) -> np.ndarray:
        """``F* x F`` for the frame ``F``."""
        return self.frame.conj().T @ x @ self.frame

    def expand(self, y: np.ndarray) -> np.ndarray:
        """``F y F*``: embed an operator on the subspace into the ambient space."""
        return self.frame @ y @ self.frame.conj().T

    def __repr__(self) -> str:
        return f"Subspace(ambient_dim={self.ambient_dim}, dim={self.dim})"


def _check_psd(w: np.ndarray, scale: float, tol: ToleranceContext):
    if w.size and w[0] < -tol.eq_tol * max(scale, 1.0):
        raise PreconditionError(
            f"matrix is not positive semidefinite: smallest eigenvalue {w[0]:.3e}"
        )


def support(a, tol: ToleranceContext = DEFAULT_TOL) -> Subspace:
    """Support ``ker(A)^perp`` of a positive semidefinite matrix.

    Eigenvalues below zero (within ``eq_tol``) are clipped; eigenvectors
    with eigenvalue ``>= rank_cut * lambda_max`` span the support. The
    boundary case is included in the support.
    """
    eig = eig_hermitian(a)
    w, v = eig.eigenvalues, eig.eigenvectors
    d = v.shape[0]
    if d == 0:
        return Subspace.zero(0)
    scale = float(np.max(np.abs(w)))
    _check_psd(w, scale, tol)
    w = np.clip(w, 0.0, None)
    top = w[-1]
    if top <= 0.0:
        return Subspace.zero(d)
    keep = w >= tol.rank_cut * top
    return Subspace(v[:, keep])


def support_projector(a, tol: ToleranceContext = DEFAULT_TOL) -> np.ndarray:
    return support(a, tol).projector


def null_space(m, tol: ToleranceContext = DEFAULT_TOL, atol: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of ``m``.

    A right singular vector belongs to the kernel when its singular value is
    at most ``atol`` (default: ``rank_cut`` times the largest singular value,
    floored at the machine tolerance).
    """
    m = as_matrix(m, "M")
    n = m.shape[1]
    if m.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    smax = s[0] if s.size else 0.0
    if atol is None:
        atol = max(tol.rank_cut * smax, machine_tol(max(m.shape)) * max(smax, 1.0))
    full_s = np.zeros(n)
    full_s[: s.size] = s
    return vh[full_s <= atol].conj().T


def _check_same_ambient(s1: Subspace, s2: Subspace):
    if s1.ambient_dim != s2.ambient_dim:
        raise ValueError(
            f"ambient dimension mismatch: {s1.ambient_dim} vs {s2.ambient_dim}"
        )


def intersect(s1: Subspace, s2: Subspace, tol: ToleranceContext = DEFAULT_TOL) -> Subspace:
    """``S1 ∩ S2`` as the kernel of the stacked matrix ``[P1 - I; P2 - I]``."""
    _check_same_ambient(s1, s2)
    d = s1.ambient_dim
    eye = np.eye(d)
    stacked = np.vstack([s1.projector - eye, s2.projector - eye])
    return Subspace(null_space(stacked, tol, atol=tol.eq_tol))


def span_sum(s1: Subspace, s2: Subspace, tol: ToleranceContext = DEFAULT_TOL) -> Subspace:
    """Closed sum ``S1 + S2`` as the support of ``P1 + P2``."""
    _check_same_ambient(s1, s2)
    return support(s1.projector + s2.projector, tol)


def complement(s: Subspace, tol: ToleranceContext = DEFAULT_TOL) -> Subspace:
    d = s.ambient_dim
    return Subspace.from_projector(np.eye(d) - s.projector)


def contains(big: Subspace, small: Subspace, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    """True when ``small ⊆ big`` within ``eq_tol``."""
    _check_same_ambient(big, small)
    if small.dim == 0:
        return True
    resid = (np.eye(big.ambient_dim) - big.projector) @ small.frame
    return opnorm(resid) <= tol.eq_tol


def subspace_op(mode: str, s1: Subspace, s2: Subspace | None = None,
                tol: ToleranceContext = DEFAULT_TOL):
    """Dispatch on ``mode`` in {"intersect", "sum", "complement", "contains"}.

    ``contains`` answers whether ``s2 ⊆ s1``.
    """
    if mode == "complement":
        return complement(s1, tol)
    if s2 is None:
        raise ValueError(f"subspace_op({mode!r}) needs two subspaces")
    if mode == "intersect":
        return intersect(s1, s2, tol)
    if mode == "sum":
        return span_sum(s1, s2, tol)
    if mode == "contains":
        return contains(s1, s2, tol)
    raise ValueError(f"unknown subspace operation {mode!r}")


def solve_linear(m, b, tol: ToleranceContext = DEFAULT_TOL) -> tuple[np.ndarray, float]:
    """Least-squares solution of ``M x = b`` and the achieved residual ``||Mx - b||``."""
    m = as_matrix(m, "M")
    b = np.asarray(b, dtype=complex)
    if not np.all(np.isfinite(b)):
        raise ValueError("b: non-finite entries")
    if b.shape[0] != m.shape[0]:
        raise ValueError(f"shape mismatch: M is {m.shape}, b has length {b.shape[0]}")
    smax = opnorm(m)
    rcond = max(tol.rank_cut, machine_tol(max(m.shape))) if smax > 0 else None
    x, *_ = np.linalg.lstsq(m, b, rcond=rcond)
    return x, float(np.linalg.norm(m @ x - b))


def vectorize(m) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(m).reshape(-1, order="F")


def unvectorize(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape vector of length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def expm_superop(superop, t: float) -> np.ndarray:
    """``exp(t * superop)`` by scaling and squaring with a Padé core."""
    m = as_matrix(superop, "superop", square=True)
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0:
        return np.eye(m.shape[0], dtype=complex)
    return scipy.linalg.expm(t * m)


def semigroup_defect(superop, t: float) -> float:
    """``||exp((t/2) L)^2 - exp(t L)||``, a cheap consistency check."""
    half = expm_superop(superop, t / 2.0)
    return opnorm(half @ half - expm_superop(superop, t))
