"""Absorption operators ``A(V) = lim Phi^n(p_V)`` and what they say about fixed points.

Two independent routes compute ``A(V)``:

* :func:`absorption_iterative` follows the increasing sequence
  ``Phi^n(p_V)`` (``p_V`` is subharmonic for an enclosure, so the sequence
  is monotone and its limit equals the Cesàro limit);
* :func:`absorption_linear` solves ``L(y) = -p_T L(p_V) p_T`` for the
  transient corner ``y`` with ``L = Phi - Id``, compressed to ``B(T)``.

The classical counterpart (absorption probabilities of a Markov chain) lives
here as well, together with the diagonal embedding of a chain as a channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from qabsorb.channel import (
    ChannelMap,
    QuantumChannel,
    enclosure_slack,
    restrict_channel,
    validate_channel,
)
from qabsorb.errors import NotAnEnclosureError, PreconditionError
from qabsorb.numerics import (
    DEFAULT_TOL,
    Subspace,
    ToleranceContext,
    complement,
    contains,
    intersect,
    opnorm,
    solve_linear,
    span_sum,
    unvectorize,
    vectorize,
)
from qabsorb.structure import (
    FixedPointSpace,
    RecurrenceDecomposition,
    _hermitian_basis,
    fixed_point_space,
    is_enclosure,
    minimal_enclosures,
    recurrence_decomposition,
    spectral_pieces,
)

ITERATIVE = "iterative"
LINEAR = "linear_system"

#: agreement bound between the two absorption routes
CROSS_TOL = 1e-6


@dataclass(frozen=True)
class AbsorptionOperator:
    enclosure: Subspace
    matrix: np.ndarray
    method: str
    residuals: dict = field(default_factory=dict)
    converged: bool = True
    steps: int = 0


def _require_enclosure(channel: ChannelMap, v: Subspace):
    slack = enclosure_slack(channel, v)
    if v.dim and slack < -channel.tol.eq_tol:
        raise NotAnEnclosureError(f"subspace is not an enclosure (slack {slack:.3e})", slack)


def _finish(channel, v, a, method, decomposition, converged=True, steps=0, **extra):
    a = 0.5 * (a + a.conj().T)
    residuals = {"fixed_point": opnorm(channel.apply(a) - a)}
    if decomposition is not None:
        residuals["blocks"] = _blocks(a, v, decomposition, channel.tol)
    residuals.update(extra)
    return AbsorptionOperator(v, a, method, residuals, converged, steps)


def absorption_iterative(channel: ChannelMap, v: Subspace, stall_tol: float = 1e-9,
                         max_power: int = 2 ** 30,
                         decomposition: RecurrenceDecomposition | None = None
                         ) -> AbsorptionOperator:
    """``A(V)`` as the limit of the increasing sequence ``Phi^n(p_V)``.

    The sequence is sampled at ``n = 1, 2, 4, 8, ...`` by repeated squaring
    of the Heisenberg superoperator and stops once two samples differ by at
    most ``stall_tol`` (Frobenius). For a monotone sequence
    ``Phi^{2n}(p) = Phi^n(p)`` already forces ``Phi^n(p)`` to be fixed.
    """
    _require_enclosure(channel, v)
    d = channel.dim
    m = np.array(channel.heisenberg_matrix())
    x = vectorize(v.projector).astype(complex)
    n, power, converged = 1, 1, False
    x_next = m @ x
    while True:
        change = float(np.linalg.norm(x_next - x))
        x = x_next
        if change <= stall_tol:
            converged = True
            break
        if n >= max_power:
            break
        m = m @ m
        n *= 2
        power += n
        x_next = m @ x
    return _finish(channel, v, unvectorize(x, d, d), ITERATIVE, decomposition,
                   converged=converged, steps=power)


def transient_corner(channel: ChannelMap, t: Subspace) -> np.ndarray:
    """Matrix of ``Y -> F_T* Phi(F_T Y F_T*) F_T`` on ``dim(T)^2`` coordinates."""
    f = t.frame
    return np.kron(f.T, f.conj().T) @ channel.heisenberg_matrix() @ np.kron(f.conj(), f)


def absorption_linear(channel: ChannelMap, v: Subspace,
                      decomposition: RecurrenceDecomposition | None = None,
                      check_absorbing: bool = True) -> AbsorptionOperator:
    """``A(V)`` for an enclosure ``V ⊆ R`` from the linear system on ``B(T)``.

    Requires ``A(R) = I``; the transient corner map must have spectral
    radius below ``1 - eq_tol`` so that ``(C - I) Y = -F_T* Phi(p_V) F_T``
    has a unique solution.
    """
    tol = channel.tol
    _require_enclosure(channel, v)
    dec = decomposition or recurrence_decomposition(channel)
    if not contains(dec.R, v, tol):
        raise PreconditionError("enclosure is not contained in the recurrent space")
    if check_absorbing:
        ok, dev = is_absorbing_recurrent(channel, dec)
        if not ok:
            raise PreconditionError(f"recurrent space is not absorbing: ||A(R) - I|| = {dev:.3e}")
    t = dec.T
    if t.dim == 0:
        return _finish(channel, v, v.projector.astype(complex), LINEAR, dec,
                       solve_residual=0.0, spectral_radius=0.0)
    corner = transient_corner(channel, t)
    radius = float(np.max(np.abs(np.linalg.eigvals(corner))))
    if radius >= 1.0 - tol.eq_tol:
        raise PreconditionError(
            f"transient corner has spectral radius {radius:.6g}; linear system is singular")
    k = t.dim
    rhs = -vectorize(t.compress(channel.apply(v.projector)))
    y, res = solve_linear(corner - np.eye(k * k), rhs, tol)
    a = v.projector + t.expand(unvectorize(y, k, k))
    return _finish(channel, v, a, LINEAR, dec, solve_residual=res, spectral_radius=radius)


def _blocks(a: np.ndarray, v: Subspace, dec: RecurrenceDecomposition,
            tol: ToleranceContext) -> float:
    q = intersect(dec.T, complement(v, tol), tol).projector
    return opnorm(a - v.projector - q @ a @ q)


def blocks_residual(a: AbsorptionOperator, channel: ChannelMap,
                    decomposition: RecurrenceDecomposition | None = None) -> float:
    """``||A - p_V - q A q||`` with ``q`` the projector onto ``V^perp ∩ T``."""
    dec = decomposition or recurrence_decomposition(channel)
    return _blocks(a.matrix, a.enclosure, dec, channel.tol)


def is_absorbing_recurrent(channel: ChannelMap,
                           decomposition: RecurrenceDecomposition | None = None
                           ) -> tuple[bool, float]:
    """Whether ``A(R) = I``; returns the verdict and ``||A(R) - I||``."""
    dec = decomposition or recurrence_decomposition(channel)
    a = absorption_iterative(channel, dec.R).matrix
    dev = opnorm(a - np.eye(channel.dim))
    return dev <= channel.tol.eq_tol, dev


def _recurrent_enclosures(channel: ChannelMap, dec: RecurrenceDecomposition,
                          rng: np.random.Generator, n_random: int):
    """Random enclosures in ``R``: unions of spectral pieces of random fixed points."""
    r = dec.R
    fps = fixed_point_space(restrict_channel(channel, r))
    out = []
    for _ in range(n_random):
        pieces = spectral_pieces(fps.random_hermitian(rng))
        for q in pieces:
            out.append(Subspace(r.frame @ q))
    return out


def _coordinate_enclosures(channel: ChannelMap, dec: RecurrenceDecomposition) -> list:
    """Rays ``span{e_i}`` that lie in ``R`` and are enclosures."""
    out = []
    for i in range(channel.dim):
        e = Subspace.coordinate(channel.dim, [i])
        if contains(dec.R, e, channel.tol) and is_enclosure(channel, e).is_enclosure:
            out.append(e)
    return out


@dataclass(frozen=True)
class AbsorptionSpan:
    space: FixedPointSpace
    fixed_point_dim: int
    matches: bool
    containment: float
    block_residual: float
    enclosures_used: int


def fixed_points_via_absorption(channel: ChannelMap, seed: int, n_random: int = 10,
                                decomposition: RecurrenceDecomposition | None = None
                                ) -> AbsorptionSpan:
    """Span of absorption operators of enclosures in ``R``, compared with ``F(P)``.

    Enclosures are the parts of a DOME of ``R``, their pairwise sums, and
    spectral projections of ``n_random`` random Hermitian fixed points of
    the restriction to ``R``. Each fixed point is also checked to split as
    ``p_{R+} x p_{R+} + p_{R0} x p_{R0} + p_T x p_T``.
    """
    tol = channel.tol
    dec = decomposition or recurrence_decomposition(channel)
    ok, dev = is_absorbing_recurrent(channel, dec)
    if not ok:
        raise PreconditionError(f"recurrent space is not absorbing: ||A(R) - I|| = {dev:.3e}")
    rng = np.random.default_rng(seed)
    dome = minimal_enclosures(channel, int(rng.integers(2 ** 32)), decomposition=dec)
    encl = list(dome.parts)
    for i in range(len(dome.parts)):
        for j in range(i + 1, len(dome.parts)):
            encl.append(span_sum(dome.parts[i], dome.parts[j], tol))
    encl.extend(_recurrent_enclosures(channel, dec, rng, n_random))
    d = channel.dim
    vecs = np.array([vectorize(absorption_iterative(channel, v).matrix) for v in encl]).T
    u, s, _ = np.linalg.svd(vecs, full_matrices=False)
    rank = int(np.sum(s >= tol.rank_cut * s[0])) if s.size else 0
    span = FixedPointSpace(tuple(_hermitian_basis(u[:, :rank], d, rank)), d)
    fps = fixed_point_space(channel)
    contain = max([fps.distance(b) for b in span.basis] + [span.distance(b) for b in fps.basis]
                  + [0.0])
    p_rp, p_r0, p_t = dec.R_plus.projector, dec.R_zero.projector, dec.T.projector
    block = max([opnorm(x - p_rp @ x @ p_rp - p_r0 @ x @ p_r0 - p_t @ x @ p_t)
                 for x in fps.basis] + [0.0])
    matches = span.dim == fps.dim and contain <= tol.eq_tol
    return AbsorptionSpan(span, fps.dim, matches, contain, block, len(encl))


@dataclass(frozen=True)
class AlgebraCriterion:
    is_algebra: bool
    worst_pair: tuple | None
    worst_norm: float
    pairs_checked: int


def algebra_criterion(channel: ChannelMap, seed: int, n_random: int = 10,
                      decomposition: RecurrenceDecomposition | None = None
                      ) -> AlgebraCriterion:
    """Largest ``||A(V) A(W)||`` over orthogonal enclosure pairs inside ``R``.

    ``F(P)`` is an algebra exactly when every such product vanishes. Pairs
    come from a DOME of ``R``, from coordinate rays in ``R`` that are
    enclosures, and from spectral pieces of ``n_random`` random fixed points
    of the restriction to ``R``.
    """
    tol = channel.tol
    dec = decomposition or recurrence_decomposition(channel)
    ok, dev = is_absorbing_recurrent(channel, dec)
    if not ok:
        raise PreconditionError(f"recurrent space is not absorbing: ||A(R) - I|| = {dev:.3e}")
    rng = np.random.default_rng(seed)
    dome = minimal_enclosures(channel, int(rng.integers(2 ** 32)), decomposition=dec)
    families = [list(dome.parts), _coordinate_enclosures(channel, dec)]
    r = dec.R
    fps = fixed_point_space(restrict_channel(channel, r))
    for _ in range(n_random):
        pieces = spectral_pieces(fps.random_hermitian(rng))
        families.append([Subspace(r.frame @ q) for q in pieces])
    cache = {}

    def absorb(s: Subspace) -> np.ndarray:
        key = id(s)
        if key not in cache:
            cache[key] = absorption_iterative(channel, s).matrix
        return cache[key]

    worst, pair, count = 0.0, None, 0
    for fam in families:
        for i, v in enumerate(fam):
            for j, w in enumerate(fam):
                if i == j:
                    continue
                if opnorm(v.projector @ w.projector) > tol.eq_tol:
                    continue
                count += 1
                val = opnorm(absorb(v) @ absorb(w))
                if val > worst or pair is None:
                    worst, pair = val, (v, w)
    return AlgebraCriterion(worst <= tol.eq_tol, pair, worst, count)


# --------------------------------------------------------------------------
# classical chains

@dataclass(frozen=True)
class ClassicalChain:
    """Row-stochastic transition matrix ``P[x, y] = p_{xy}``."""

    P: np.ndarray
    labels: tuple = ()
    tol: ToleranceContext = DEFAULT_TOL

    def __post_init__(self):
        p = np.array(self.P, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"transition matrix must be square, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("transition matrix has non-finite entries")
        if np.min(p) < -self.tol.eq_tol:
            raise ValueError(f"transition matrix has a negative entry {np.min(p):.3e}")
        rows = np.abs(p.sum(axis=1) - 1.0)
        if np.max(rows) > self.tol.eq_tol:
            bad = int(np.argmax(rows))
            raise ValueError(f"row {bad} sums to {p[bad].sum():.12g}, not 1")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "P", p)
        labels = tuple(self.labels) or tuple(str(i) for i in range(p.shape[0]))
        if len(labels) != p.shape[0]:
            raise ValueError("number of labels does not match the number of states")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def is_closed(self, states) -> bool:
        c = sorted(set(states))
        out = [y for y in range(self.n) if y not in set(c)]
        if not c:
            return True
        return float(np.max(self.P[np.ix_(c, out)].sum(axis=1))) <= self.tol.eq_tol if out else True

    def recurrent_states(self) -> list[int]:
        """States in closed communicating classes."""
        adj = self.P > 0
        ncomp, lab = connected_components(adj, directed=True, connection="strong")
        rec = []
        for c in range(ncomp):
            members = np.flatnonzero(lab == c)
            leaving = adj[np.ix_(members, np.flatnonzero(lab != c))]
            if not leaving.any():
                rec.extend(int(m) for m in members)
        return sorted(rec)


def classical_absorption(chain: ClassicalChain, closed) -> np.ndarray:
    """Absorption probabilities into the closed set ``closed``.

    ``A_x = 1`` on the closed set, ``0`` on recurrent states outside it,
    and on the remaining (transient) states the unique solution of
    ``sum_y (p_xy - delta_xy) A_y = -sum_{y in C} p_xy``.
    """
    tol = chain.tol
    c = sorted(set(int(s) for s in closed))
    if any(s < 0 or s >= chain.n for s in c):
        raise ValueError(f"state index out of range: {c}")
    if not chain.is_closed(c):
        raise PreconditionError(f"state set {c} is not closed")
    a = np.zeros(chain.n)
    a[c] = 1.0
    rec = set(chain.recurrent_states())
    trans = [x for x in range(chain.n) if x not in rec and x not in set(c)]
    if not trans:
        return a
    ptt = chain.P[np.ix_(trans, trans)]
    radius = float(np.max(np.abs(np.linalg.eigvals(ptt))))
    if radius >= 1.0 - tol.eq_tol:
        raise PreconditionError(f"transient block has spectral radius {radius:.6g}")
    rhs = -chain.P[np.ix_(trans, c)].sum(axis=1)
    a[trans] = np.linalg.solve(ptt - np.eye(len(trans)), rhs)
    return a


def embed_classical_chain(chain: ClassicalChain) -> QuantumChannel:
    """Channel with Kraus ``sqrt(p_xy) |y><x|``; it acts on diagonals as the chain."""
    n = chain.n
    kraus = []
    for x in range(n):
        for y in range(n):
            if chain.P[x, y] > 0:
                b = np.zeros((n, n), dtype=complex)
                b[y, x] = np.sqrt(chain.P[x, y])
                kraus.append(b)
    return validate_channel(kraus, n, chain.tol, label="embedded chain")
