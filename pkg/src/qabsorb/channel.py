"""Quantum channels in Kraus form and their superoperator matrices.

Kraus operators are stored in the predual (Schrödinger) convention::

    Phi_*(rho) = sum_i B_i rho B_i^*        (states)
    Phi(x)     = sum_i B_i^* x B_i          (observables)

so that ``tr(Phi(x) rho) == tr(x Phi_*(rho))``. Superoperator matrices act
on column-stacked vectors (see :func:`qabsorb.numerics.vectorize`).

Continuous-time semigroup members ``exp(t L)`` are kept as matrices only
(:class:`SampledChannel`); no Kraus form is extracted from them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from qabsorb.errors import ChannelError, NotAnEnclosureError
from qabsorb.numerics import (
    DEFAULT_TOL,
    Subspace,
    ToleranceContext,
    as_matrix,
    eig_hermitian,
    expm_superop,
    opnorm,
    unvectorize,
    vectorize,
)

HEISENBERG = "heisenberg"
PREDUAL = "predual"
PICTURES = (HEISENBERG, PREDUAL)


def _check_picture(picture: str):
    if picture not in PICTURES:
        raise ValueError(f"picture must be one of {PICTURES}, got {picture!r}")


@dataclass(frozen=True)
class Superoperator:
    dim: int
    matrix: np.ndarray
    picture: str

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return unvectorize(self.matrix @ vectorize(x), self.dim, self.dim)


class ChannelMap:
    """Common interface: a normal unital CP map given by its Heisenberg matrix.

    Subclasses provide ``dim``, ``tol`` and :meth:`heisenberg_matrix`.
    """

    dim: int
    tol: ToleranceContext
    label: str = ""

    def heisenberg_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def predual_matrix(self) -> np.ndarray:
        return self.heisenberg_matrix().conj().T

    def superoperator(self, picture: str = HEISENBERG) -> Superoperator:
        _check_picture(picture)
        m = self.heisenberg_matrix() if picture == HEISENBERG else self.predual_matrix()
        return Superoperator(self.dim, m, picture)

    def _check_operand(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.dim, self.dim):
            raise ValueError(f"operand has shape {x.shape}, expected {(self.dim, self.dim)}")
        return x

    def apply(self, x, picture: str = HEISENBERG) -> np.ndarray:
        _check_picture(picture)
        x = self._check_operand(x)
        m = self.heisenberg_matrix() if picture == HEISENBERG else self.predual_matrix()
        return unvectorize(m @ vectorize(x), self.dim, self.dim)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.dim).encode())
        h.update(np.ascontiguousarray(self.heisenberg_matrix()).tobytes())
        return h.hexdigest()[:16]


class QuantumChannel(ChannelMap):
    """A channel given by a validated, immutable Kraus family.

    Build instances through :func:`validate_channel`. When ``subnormalized``
    is set the family only needs ``sum B_i* B_i <= I`` (truncated maps that
    leak trace through a boundary).
    """

    def __init__(self, kraus, tol: ToleranceContext = DEFAULT_TOL, label: str = "",
                 subnormalized: bool = False):
        ops = []
        for b in kraus:
            b = np.array(b, dtype=complex)
            b.setflags(write=False)
            ops.append(b)
        self.kraus: tuple[np.ndarray, ...] = tuple(ops)
        self.dim = ops[0].shape[0]
        self.tol = tol
        self.label = label
        self.subnormalized = subnormalized
        self._heis = None

    def __repr__(self) -> str:
        tag = f" {self.label!r}" if self.label else ""
        return f"QuantumChannel{tag}(dim={self.dim}, kraus={len(self.kraus)})"

    def heisenberg_matrix(self) -> np.ndarray:
        if self._heis is None:
            d = self.dim
            m = np.zeros((d * d, d * d), dtype=complex)
            for b in self.kraus:
                m += np.kron(b.T, b.conj().T)
            m.setflags(write=False)
            self._heis = m
        return self._heis

    def apply(self, x, picture: str = HEISENBERG) -> np.ndarray:
        _check_picture(picture)
        x = self._check_operand(x)
        out = np.zeros_like(x)
        if picture == HEISENBERG:
            for b in self.kraus:
                out += b.conj().T @ x @ b
        else:
            for b in self.kraus:
                out += b @ x @ b.conj().T
        return out

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.dim}:{len(self.kraus)}".encode())
        for b in self.kraus:
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()[:16]

    def normalization(self) -> np.ndarray:
        """``sum_i B_i* B_i``."""
        return sum(b.conj().T @ b for b in self.kraus)


class SampledChannel(ChannelMap):
    """A channel held only as its Heisenberg superoperator matrix."""

    def __init__(self, dim: int, heisenberg: np.ndarray, tol: ToleranceContext = DEFAULT_TOL,
                 label: str = ""):
        m = np.array(heisenberg, dtype=complex)
        if m.shape != (dim * dim, dim * dim):
            raise ValueError(f"superoperator has shape {m.shape}, expected {(dim * dim,) * 2}")
        m.setflags(write=False)
        self.dim = dim
        self._heis = m
        self.tol = tol
        self.label = label

    def __repr__(self) -> str:
        return f"SampledChannel(dim={self.dim}, label={self.label!r})"

    def heisenberg_matrix(self) -> np.ndarray:
        return self._heis


def validate_channel(kraus, dim: int | None = None, tol: ToleranceContext = DEFAULT_TOL,
                     label: str = "", subnormalized: bool = False) -> QuantumChannel:
    """Check a Kraus family and wrap it as a :class:`QuantumChannel`.

    Raises
    ------
    ChannelError
        On an empty family, a shape mismatch, or when
        ``||sum B_i* B_i - I|| > eq_tol`` (``residual`` is attached). With
        ``subnormalized=True`` the requirement is ``sum B_i* B_i <= I``.
    """
    kraus = list(kraus)
    if not kraus:
        raise ChannelError("Kraus list is empty")
    mats = []
    for i, b in enumerate(kraus):
        try:
            b = as_matrix(b, f"kraus[{i}]", square=True)
        except ValueError as exc:
            raise ChannelError(str(exc)) from None
        mats.append(b)
    if dim is None:
        dim = mats[0].shape[0]
    for i, b in enumerate(mats):
        if b.shape != (dim, dim):
            raise ChannelError(f"kraus[{i}]: expected shape {(dim, dim)}, found {b.shape}")
    total = sum(b.conj().T @ b for b in mats)
    if subnormalized:
        top = eig_hermitian(total).eigenvalues[-1]
        if top > 1.0 + tol.eq_tol:
            raise ChannelError(
                f"Kraus family is not trace non-increasing: "
                f"largest eigenvalue of sum B*B is {top:.6g}",
                residual=float(top - 1.0), offending=total)
    else:
        residual = opnorm(total - np.eye(dim))
        if residual > tol.eq_tol:
            raise ChannelError(
                f"Kraus family is not trace preserving: ||sum B*B - I|| = {residual:.6g}",
                residual=residual, offending=total)
    return QuantumChannel(mats, tol=tol, label=label, subnormalized=subnormalized)


def apply(channel: ChannelMap, x, picture: str = HEISENBERG) -> np.ndarray:
    return channel.apply(x, picture)


def superoperator_matrix(channel: ChannelMap, picture: str = HEISENBERG) -> Superoperator:
    return channel.superoperator(picture)


def enclosure_slack(channel: ChannelMap, subspace: Subspace) -> float:
    """Smallest eigenvalue of ``Phi(p_V) - p_V``; non-negative iff ``V`` is an enclosure."""
    if subspace.ambient_dim != channel.dim:
        raise ValueError(
            f"ambient dimension mismatch: subspace lives in C^{subspace.ambient_dim}, "
            f"channel acts on C^{channel.dim}")
    if subspace.dim == 0:
        return 0.0
    p = subspace.projector
    return float(eig_hermitian(channel.apply(p) - p).eigenvalues[0])


def restrict_channel(channel: ChannelMap, subspace: Subspace) -> ChannelMap:
    """Restriction of ``channel`` to the enclosure ``subspace``.

    The result acts on ``C^dim(V)`` in the coordinates of the frame ``F``:
    Kraus operators ``F* B_i F`` for a Kraus channel, or the compressed
    superoperator ``y -> F* Phi(F y F*) F`` for a sampled one.
    """
    if subspace.dim == 0:
        raise ValueError("cannot restrict to the zero subspace")
    slack = enclosure_slack(channel, subspace)
    if slack < -channel.tol.eq_tol:
        raise NotAnEnclosureError(
            f"subspace is not an enclosure (slack {slack:.3e})", slack)
    f = subspace.frame
    if isinstance(channel, QuantumChannel):
        kraus = [f.conj().T @ b @ f for b in channel.kraus]
        return validate_channel(kraus, subspace.dim, channel.tol, label=channel.label,
                                subnormalized=channel.subnormalized)
    left = np.kron(f.T, f.conj().T)
    right = np.kron(f.conj(), f)
    return SampledChannel(subspace.dim, left @ channel.heisenberg_matrix() @ right,
                          channel.tol, label=channel.label)


@dataclass(frozen=True)
class CesaroReport:
    n_terms: int
    converged: bool
    last_change: float


def cesaro_average(channel: ChannelMap, x, picture: str = HEISENBERG,
                   max_terms: int = 100_000, stall_tol: float = 1e-9
                   ) -> tuple[np.ndarray, CesaroReport]:
    """Running mean ``(1/n) sum_{k<n} Phi^k(x)`` until consecutive means stall.

    Stops at the first ``n`` for which the step from the mean of ``n - 1``
    terms is at most ``stall_tol`` (Frobenius norm, which bounds the
    operator norm), or at ``max_terms`` with ``converged=False``.
    """
    _check_picture(picture)
    x = channel._check_operand(x)
    if max_terms < 1:
        raise ValueError("max_terms must be at least 1")
    m = channel.heisenberg_matrix() if picture == HEISENBERG else channel.predual_matrix()
    d = channel.dim
    term = vectorize(x).copy()
    mean = term.copy()
    change = np.inf
    for n in range(2, max_terms + 1):
        term = m @ term
        step = (term - mean) / n
        change = float(np.linalg.norm(step))
        if change <= stall_tol:
            # the mean of n - 1 terms is already stationary
            return unvectorize(mean, d, d), CesaroReport(n - 1, True, change)
        mean += step
    return unvectorize(mean, d, d), CesaroReport(max_terms, False, change)


@dataclass(frozen=True)
class GKLSGenerator:
    """``L(x) = i[H, x] + sum_i (L_i* x L_i - 1/2 {L_i* L_i, x})`` (Heisenberg picture)."""

    hamiltonian: np.ndarray
    jumps: tuple = field(default_factory=tuple)
    tol: ToleranceContext = DEFAULT_TOL

    def __post_init__(self):
        h = as_matrix(self.hamiltonian, "hamiltonian", square=True)
        if opnorm(h - h.conj().T) > self.tol.eq_tol:
            raise ValueError("hamiltonian is not Hermitian")
        jumps = tuple(as_matrix(j, f"jumps[{i}]", square=True) for i, j in enumerate(self.jumps))
        for i, j in enumerate(jumps):
            if j.shape != h.shape:
                raise ValueError(f"jumps[{i}]: shape {j.shape} does not match hamiltonian {h.shape}")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", jumps)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def matrix(self) -> np.ndarray:
        d = self.dim
        eye = np.eye(d)
        h = self.hamiltonian
        gen = 1j * (np.kron(eye, h) - np.kron(h.T, eye))
        for lj in self.jumps:
            k = lj.conj().T @ lj
            gen += np.kron(lj.T, lj.conj().T) - 0.5 * (np.kron(eye, k) + np.kron(k.T, eye))
        return gen

    def __call__(self, x) -> np.ndarray:
        d = self.dim
        return unvectorize(self.matrix() @ vectorize(np.asarray(x, dtype=complex)), d, d)


def generator_channel(gen: GKLSGenerator, t: float) -> SampledChannel:
    """The semigroup member ``exp(t L)`` as a :class:`SampledChannel`."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    return SampledChannel(gen.dim, expm_superop(gen.matrix(), t), gen.tol,
                          label=f"exp({t:g} L)")
