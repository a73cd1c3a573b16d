"""Enclosures, fixed points and the recurrent/transient split of a channel.

All routines accept any :class:`~qabsorb.channel.ChannelMap`, so a sampled
continuous-time semigroup member ``exp(tau L)`` is analyzed exactly like a
discrete channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qabsorb.channel import (
    HEISENBERG,
    PREDUAL,
    ChannelMap,
    CesaroReport,
    cesaro_average,
    enclosure_slack,
    restrict_channel,
)
from qabsorb.errors import PreconditionError
from qabsorb.numerics import (
    DEFAULT_TOL,
    Subspace,
    ToleranceContext,
    complement,
    contains,
    eig_hermitian,
    intersect,
    null_space,
    opnorm,
    span_sum,
    support,
    unvectorize,
    vectorize,
)

#: consecutive non-splitting draws before a part is declared minimal
DEFAULT_DRAWS = 8


@dataclass(frozen=True)
class EnclosureCert:
    subspace: Subspace
    slack: float
    is_enclosure: bool
    diagnostic: str | None = None


def is_enclosure(channel: ChannelMap, subspace: Subspace) -> EnclosureCert:
    """Certify ``Phi(p_V) >= p_V`` through ``slack = lambda_min(Phi(p_V) - p_V)``."""
    if subspace.dim == 0 or subspace.dim == subspace.ambient_dim:
        if subspace.ambient_dim != channel.dim:
            raise ValueError("ambient dimension mismatch")
        # trivial enclosures; the slack is still measured for the record
        slack = enclosure_slack(channel, subspace)
        return EnclosureCert(subspace, slack, True)
    slack = enclosure_slack(channel, subspace)
    return EnclosureCert(subspace, slack, slack >= -channel.tol.eq_tol)


def random_state_in(subspace: Subspace, rng: np.random.Generator, rank: int | None = None
                    ) -> np.ndarray:
    """A random density matrix supported in ``subspace``."""
    k = subspace.dim
    if k == 0:
        raise ValueError("the zero subspace carries no states")
    r = k if rank is None else rank
    g = rng.standard_normal((k, r)) + 1j * rng.standard_normal((k, r))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return subspace.expand(rho)


def hereditary_defect(channel: ChannelMap, subspace: Subspace, rng: np.random.Generator,
                      n_states: int = 10) -> float:
    """Largest ``||(I - p) Phi_*(p rho p) (I - p)||`` over random states in ``V``.

    Zero (within tolerance) exactly when ``p_V L^1 p_V`` is hereditary for
    the predual map, i.e. when ``V`` is an enclosure.
    """
    if subspace.dim == 0:
        return 0.0
    q = np.eye(channel.dim) - subspace.projector
    worst = 0.0
    for _ in range(n_states):
        rho = random_state_in(subspace, rng)
        out = channel.apply(rho, PREDUAL)
        worst = max(worst, opnorm(q @ out @ q))
    return worst


def _hermitian_basis(vectors: np.ndarray, d: int, k: int | None = None) -> list[np.ndarray]:
    """Hermitian orthonormal basis for an adjoint-closed space of d x d matrices.

    ``vectors`` holds column-stacked matrices spanning the space. When the
    space is closed under adjoints, its Hermitian part has real dimension
    equal to the complex dimension ``k`` (default: number of columns).
    """
    n = vectors.shape[1]
    if k is None:
        k = n
    if k == 0:
        return []
    herm = []
    for j in range(n):
        b = unvectorize(vectors[:, j], d, d)
        herm.append(0.5 * (b + b.conj().T))
        herm.append(-0.5j * (b - b.conj().T))
    flat = np.array([vectorize(h) for h in herm]).T
    real = np.vstack([flat.real, flat.imag])
    u, _, _ = np.linalg.svd(real, full_matrices=False)
    u = u[:, :k]
    cols = u[: d * d] + 1j * u[d * d:]
    out = []
    for j in range(k):
        h = unvectorize(cols[:, j], d, d)
        out.append(0.5 * (h + h.conj().T))
    return out


@dataclass(frozen=True)
class FixedPointSpace:
    """Orthonormal (trace pairing) Hermitian basis of a space of matrices."""

    basis: tuple
    ambient_dim: int

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrix(self) -> np.ndarray:
        """Basis as columns of a ``d^2 x dim`` matrix (column-stacked)."""
        d = self.ambient_dim
        if not self.basis:
            return np.zeros((d * d, 0), dtype=complex)
        return np.array([vectorize(b) for b in self.basis]).T

    def distance(self, x) -> float:
        """Frobenius distance from ``x`` to the span."""
        v = vectorize(np.asarray(x, dtype=complex))
        k = self.matrix()
        return float(np.linalg.norm(v - k @ (k.conj().T @ v)))

    def project(self, x) -> np.ndarray:
        d = self.ambient_dim
        v = vectorize(np.asarray(x, dtype=complex))
        k = self.matrix()
        return unvectorize(k @ (k.conj().T @ v), d, d)

    def random_hermitian(self, rng: np.random.Generator) -> np.ndarray:
        coeffs = rng.standard_normal(self.dim)
        h = sum(c * b for c, b in zip(coeffs, self.basis))
        return 0.5 * (h + h.conj().T)

    def same_span(self, other: "FixedPointSpace", tol: float) -> bool:
        if self.dim != other.dim:
            return False
        return (all(other.distance(b) <= tol for b in self.basis)
                and all(self.distance(b) <= tol for b in other.basis))


def _kernel_space(m: np.ndarray, d: int, tol: ToleranceContext) -> FixedPointSpace:
    k = null_space(m, tol)
    return FixedPointSpace(tuple(_hermitian_basis(k, d)), d)


def fixed_point_space(channel: ChannelMap) -> FixedPointSpace:
    """Kernel of ``Phi_hat - I`` for the Heisenberg superoperator ``Phi_hat``."""
    d = channel.dim
    m = channel.heisenberg_matrix() - np.eye(d * d)
    return _kernel_space(m, d, channel.tol)


def commutant_basis(generators, tol: ToleranceContext = DEFAULT_TOL) -> FixedPointSpace:
    """Basis of ``{x : x G = G x and x G* = G* x for every generator G}``."""
    gens = [np.asarray(g, dtype=complex) for g in generators]
    if not gens:
        raise ValueError("commutant of an empty generator list is undefined here")
    d = gens[0].shape[0]
    for i, g in enumerate(gens):
        if g.shape != (d, d):
            raise ValueError(f"generators[{i}]: expected shape {(d, d)}, found {g.shape}")
    eye = np.eye(d)
    rows = []
    for g in gens:
        for h in (g, g.conj().T):
            rows.append(np.kron(h.T, eye) - np.kron(eye, h))
    return _kernel_space(np.vstack(rows), d, tol)


def ergodic_projection(channel: ChannelMap, x, picture: str = HEISENBERG) -> np.ndarray:
    """Limit of the Cesàro means ``(1/n) sum_{k<n} Phi^k(x)``.

    In finite dimension eigenvalue 1 of a channel is semisimple, so the
    Cesàro limit is the spectral projection onto ``ker(Phi - I)`` along
    ``range(Phi - I)``. It is assembled from the two kernels
    ``R = ker(M - I)`` and ``L = ker(M* - I)`` as ``R (L* R)^{-1} L*``.
    """
    d = channel.dim
    m = channel.heisenberg_matrix() if picture == HEISENBERG else channel.predual_matrix()
    eye = np.eye(d * d)
    right = null_space(m - eye, channel.tol)
    left = null_space(m.conj().T - eye, channel.tol)
    v = vectorize(np.asarray(x, dtype=complex))
    if right.shape[1] == 0 or left.shape[1] != right.shape[1]:
        return np.zeros((d, d), dtype=complex)
    coeff = np.linalg.solve(left.conj().T @ right, left.conj().T @ v)
    return unvectorize(right @ coeff, d, d)


@dataclass(frozen=True)
class InvariantState:
    state: np.ndarray
    support: Subspace
    cesaro: CesaroReport | None
    cesaro_distance: float | None

    @property
    def converged(self) -> bool:
        return self.cesaro is None or self.cesaro.converged


def maximal_invariant_state(channel: ChannelMap, cesaro_terms: int = 0,
                            stall_tol: float = 1e-9) -> InvariantState:
    """Invariant state whose support is the supremum of all invariant supports.

    The Cesàro limit of ``Phi_*^k(I/d)`` is taken exactly via
    :func:`ergodic_projection`; starting from the full-rank state ``I/d``
    makes its support dominate every invariant support. With
    ``cesaro_terms > 0`` the running Cesàro mean is also computed and its
    distance to the limit recorded.
    """
    d = channel.dim
    start = np.eye(d, dtype=complex) / d
    rho = ergodic_projection(channel, start, PREDUAL)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if tr > channel.tol.eq_tol:
        rho = rho / tr
    else:
        rho = np.zeros_like(rho)
    report = dist = None
    if cesaro_terms > 0:
        avg, report = cesaro_average(channel, start, PREDUAL, cesaro_terms, stall_tol)
        dist = opnorm(avg - rho)
    return InvariantState(rho, support(rho, channel.tol), report, dist)


@dataclass(frozen=True)
class RecurrenceDecomposition:
    R_plus: Subspace
    R_zero: Subspace
    T: Subspace
    max_invariant_state: np.ndarray
    R_plus_slack: float

    @property
    def R(self) -> Subspace:
        """Recurrent space; equal to ``R_plus`` in finite dimension."""
        return self.R_plus


def recurrence_decomposition(channel: ChannelMap) -> RecurrenceDecomposition:
    """``(R_+, R_0, T)`` with ``R_+`` the support of the maximal invariant state.

    Null recurrence cannot occur in finite dimension, so ``R_0 = {0}`` and
    ``T`` is the orthocomplement of ``R_+``.
    """
    inv = maximal_invariant_state(channel)
    if inv.support.dim == 0:
        raise PreconditionError("channel has no invariant state (is it trace preserving?)")
    r_plus = inv.support
    t = complement(r_plus, channel.tol)
    slack = enclosure_slack(channel, r_plus)
    if slack < -channel.tol.eq_tol:
        raise PreconditionError(
            f"support of the maximal invariant state failed its enclosure certificate "
            f"(slack {slack:.3e})")
    return RecurrenceDecomposition(r_plus, Subspace.zero(channel.dim), t, inv.state, slack)


@dataclass(frozen=True)
class AlgebraCheck:
    is_algebra: bool
    worst_pair: tuple[int, int] | None
    distance: float


def algebra_closure_check(space: FixedPointSpace, tol: ToleranceContext = DEFAULT_TOL
                          ) -> AlgebraCheck:
    """Is the span closed under multiplication? Reports the worst basis product."""
    worst, pair = 0.0, None
    n = space.dim
    for i in range(n):
        for j in range(n):
            dist = space.distance(space.basis[i] @ space.basis[j])
            if dist > worst or pair is None:
                worst, pair = dist, (i, j)
    return AlgebraCheck(worst <= tol.eq_tol, pair, worst)


def spectral_pieces(h: np.ndarray, rel_gap: float = 1e-6) -> list[np.ndarray]:
    """Eigenspace frames of Hermitian ``h``, eigenvalues clustered by gaps.

    Two consecutive eigenvalues join the same cluster when they differ by at
    most ``rel_gap * max(1, ||h||)``.
    """
    eig = eig_hermitian(h)
    w, v = eig.eigenvalues, eig.eigenvectors
    if w.size == 0:
        return []
    gap = rel_gap * max(1.0, float(np.max(np.abs(w))))
    pieces, start = [], 0
    for i in range(1, w.size + 1):
        if i == w.size or w[i] - w[i - 1] > gap:
            pieces.append(v[:, start:i])
            start = i
    return pieces


@dataclass(frozen=True)
class DOME:
    parts: tuple
    spans: Subspace
    slacks: tuple = field(default_factory=tuple)


def minimal_enclosures(channel: ChannelMap, seed: int, draws: int = DEFAULT_DRAWS,
                       decomposition: RecurrenceDecomposition | None = None) -> DOME:
    """Split the recurrent space into mutually orthogonal minimal enclosures.

    A part ``W`` is split along the eigenspaces of a random Hermitian
    element of the fixed-point algebra of the restriction to ``W``. A part
    is kept as minimal when that algebra is one-dimensional (only scalars),
    or when ``draws`` consecutive draws produce no split.
    """
    dec = decomposition or recurrence_decomposition(channel)
    rng = np.random.default_rng(seed)
    stack = [dec.R]
    parts = []
    while stack:
        w = stack.pop()
        if w.dim == 1:
            parts.append(w)
            continue
        fps = fixed_point_space(restrict_channel(channel, w))
        if fps.dim <= 1:
            parts.append(w)
            continue
        split = None
        for _ in range(draws):
            pieces = spectral_pieces(fps.random_hermitian(rng))
            if len(pieces) > 1:
                split = pieces
                break
        if split is None:
            parts.append(w)
            continue
        # push in reverse so the lowest eigenvalue piece is processed first
        for q in reversed(split):
            stack.append(Subspace(w.frame @ q))
    slacks = tuple(enclosure_slack(channel, p) for p in parts)
    total = Subspace.zero(channel.dim)
    for p in parts:
        total = span_sum(total, p, channel.tol)
    return DOME(tuple(parts), total, slacks)


def enclosure_generated_by(channel: ChannelMap, x) -> Subspace:
    """Smallest enclosure containing ``supp(x)`` for positive ``x``.

    The support of ``sum_{k<=d} Phi_*^k(x)`` stops growing after at most
    ``d`` steps, so the sum is enough.
    """
    x = np.asarray(x, dtype=complex)
    acc = x.copy()
    cur = x
    for _ in range(channel.dim):
        cur = channel.apply(cur, PREDUAL)
        cur = cur / max(np.trace(cur).real, 1e-300)
        acc = acc + cur
    return support(acc, channel.tol)


def enclosure_complement(channel: ChannelMap, v: Subspace, z: Subspace,
                         decomposition: RecurrenceDecomposition | None = None) -> EnclosureCert:
    """Certificate for ``Z ∩ V^perp`` given enclosures ``V ⊆ Z ⊆ R``.

    The complement must itself be an enclosure; a negative slack is
    returned with ``diagnostic`` set rather than accepted silently.
    """
    tol = channel.tol
    if not contains(z, v, tol):
        raise PreconditionError("V is not contained in Z")
    dec = decomposition or recurrence_decomposition(channel)
    if not contains(dec.R, z, tol):
        raise PreconditionError("Z is not contained in the recurrent space")
    for name, s in (("V", v), ("Z", z)):
        c = is_enclosure(channel, s)
        if not c.is_enclosure:
            raise PreconditionError(f"{name} is not an enclosure (slack {c.slack:.3e})")
    rest = Subspace.from_projector(z.projector - v.projector)
    cert = is_enclosure(channel, rest)
    if not cert.is_enclosure:
        return EnclosureCert(rest, cert.slack, False,
                             f"Z ∩ V^perp has slack {cert.slack:.3e} below -eq_tol")
    return cert


@dataclass(frozen=True)
class EnclosureStructure:
    v_r_plus: Subspace
    v_r_zero: Subspace
    v_t: Subspace
    decomposition_residual: float
    absorption_slack: float
    recurrent_part_nonzero: bool
    commutators: dict
    ok: bool


def enclosure_structure(channel: ChannelMap, v: Subspace,
                        decomposition: RecurrenceDecomposition | None = None
                        ) -> EnclosureStructure:
    """Split an enclosure ``V`` as ``(V∩R_+) ⊕ (V∩R_0) ⊕ (V∩T)`` and check it.

    Checks that the three projectors add up to ``p_V``, that
    ``p_{V∩T} <= A(V∩R) - p_{V∩R}`` (reported as the smallest eigenvalue of
    the difference) and that ``V∩R`` is non-zero. Commutator norms of
    ``p_V`` with ``p_{R_+}`` and ``p_T`` are recorded as data.
    """
    from qabsorb.absorption import absorption_iterative

    tol = channel.tol
    cert = is_enclosure(channel, v)
    if not cert.is_enclosure:
        raise PreconditionError(f"V is not an enclosure (slack {cert.slack:.3e})")
    dec = decomposition or recurrence_decomposition(channel)
    v_rp = intersect(v, dec.R_plus, tol)
    v_r0 = intersect(v, dec.R_zero, tol)
    v_t = intersect(v, dec.T, tol)
    resid = opnorm(v.projector - v_rp.projector - v_r0.projector - v_t.projector)
    v_r = span_sum(v_rp, v_r0, tol)
    nonzero = v_r.dim > 0 or v.dim == 0
    if v_r.dim > 0:
        a = absorption_iterative(channel, v_r).matrix
        gap = a - v_r.projector - v_t.projector
        abs_slack = float(eig_hermitian(gap).eigenvalues[0])
    else:
        abs_slack = 0.0 if v_t.dim == 0 else -1.0
    p = v.projector
    comms = {
        "R_plus": opnorm(p @ dec.R_plus.projector - dec.R_plus.projector @ p),
        "R_zero": opnorm(p @ dec.R_zero.projector - dec.R_zero.projector @ p),
        "T": opnorm(p @ dec.T.projector - dec.T.projector @ p),
    }
    ok = resid <= tol.eq_tol and abs_slack >= -tol.eq_tol and nonzero
    return EnclosureStructure(v_rp, v_r0, v_t, resid, abs_slack, nonzero, comms, ok)
