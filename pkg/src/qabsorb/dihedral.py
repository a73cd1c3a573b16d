"""Truncated symmetric random walk on the infinite dihedral group.

The group ``<a, b | a^2 = b^2 = e>`` is enumerated by reduced words and
relabeled by integers::

    ... aba -> -3, ba -> -2, a -> -1, e -> 0, b -> 1, ab -> 2, bab -> 3 ...

so a positive label ``k`` is the alternating word of length ``k`` ending in
``b`` and a negative label ``-k`` the one ending in ``a``. The window
``[-N, N]`` keeps ``M = 2N + 1`` basis vectors; operators that would map a
basis vector outside the window drop it (absorbing boundary), and the lost
trace is tracked.

The channel is ``Phi(x) = (lam(a) x lam(a) + lam(b) x lam(b)) / 2``. On
diagonal matrices it is the simple symmetric walk on the integers.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from qabsorb.channel import GKLSGenerator, QuantumChannel, validate_channel
from qabsorb.errors import PreconditionError
from qabsorb.numerics import DEFAULT_TOL, ToleranceContext

#: eigenvalues this close below a dyadic cell boundary go to the right-hand cell
TIE_TOL = 1e-12


def reduce_word(word: str) -> str:
    """Cancel adjacent repeated letters (``aa = bb = e``)."""
    out = []
    for ch in word:
        if ch not in "ab":
            raise ValueError(f"not a group word: {word!r}")
        if out and out[-1] == ch:
            out.pop()
        else:
            out.append(ch)
    return "".join(out)


def word_for_label(k: int) -> str:
    if k == 0:
        return ""
    last = "b" if k > 0 else "a"
    other = "a" if last == "b" else "b"
    n = abs(k)
    # alternate backwards from the final letter
    return "".join(last if (n - 1 - i) % 2 == 0 else other for i in range(n))


def label_for_word(word: str) -> int:
    w = reduce_word(word)
    if not w:
        return 0
    return len(w) if w[-1] == "b" else -len(w)


def inverse_word(word: str) -> str:
    # every generator is an involution
    return reduce_word(word)[::-1]


@dataclass(frozen=True)
class TruncatedBasis:
    N: int

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @property
    def labels(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    def index(self, label: int) -> int:
        if abs(label) > self.N:
            raise ValueError(f"label {label} outside the window [-{self.N}, {self.N}]")
        return label + self.N

    def word(self, index: int) -> str:
        return word_for_label(index - self.N)


def _left_targets(basis: TruncatedBasis, g: str) -> np.ndarray:
    """Index of ``g h`` for every basis element ``h``; -1 when it leaves the window."""
    out = np.full(basis.size, -1, dtype=np.int64)
    for i, k in enumerate(basis.labels):
        t = label_for_word(g + word_for_label(int(k)))
        if abs(t) <= basis.N:
            out[i] = t + basis.N
    return out


def _right_targets(basis: TruncatedBasis, g: str) -> np.ndarray:
    """Index of ``h g^{-1}`` for every basis element ``h``."""
    ginv = inverse_word(g)
    out = np.full(basis.size, -1, dtype=np.int64)
    for i, k in enumerate(basis.labels):
        t = label_for_word(word_for_label(int(k)) + ginv)
        if abs(t) <= basis.N:
            out[i] = t + basis.N
    return out


def _perm_matrix(targets: np.ndarray) -> np.ndarray:
    m = targets.size
    out = np.zeros((m, m))
    cols = np.flatnonzero(targets >= 0)
    out[targets[cols], cols] = 1.0
    return out


@dataclass(frozen=True)
class WalkOperators:
    """Partial permutations ``lam(a), lam(b), rho(ab), rho(ba)`` on the window.

    Each is stored as a target-index array (``-1`` means the image falls
    outside the window and is dropped); :meth:`matrix` gives the dense form.
    """

    basis: TruncatedBasis
    targets: dict
    boundary_policy: str = "absorbing"

    def matrix(self, name: str) -> np.ndarray:
        return _perm_matrix(self.targets[name])

    @property
    def lam_a(self) -> np.ndarray:
        return self.matrix("lam_a")

    @property
    def lam_b(self) -> np.ndarray:
        return self.matrix("lam_b")

    @property
    def rho_ab(self) -> np.ndarray:
        return self.matrix("rho_ab")

    @property
    def rho_ba(self) -> np.ndarray:
        return self.matrix("rho_ba")

    def step_diagonal(self, p: np.ndarray) -> tuple[np.ndarray, float]:
        """One predual step on a diagonal state; returns the new diagonal and the leak."""
        out = np.zeros_like(p)
        leak = 0.0
        for name in ("lam_a", "lam_b"):
            t = self.targets[name]
            ok = t >= 0
            np.add.at(out, t[ok], 0.5 * p[ok])
            leak += 0.5 * float(np.sum(p[~ok]))
        return out, leak

    def step_dense(self, rho: np.ndarray) -> tuple[np.ndarray, float]:
        """One predual step ``(A rho A* + B rho B*)/2`` on a full density matrix."""
        out = np.zeros_like(rho)
        before = np.trace(rho).real
        for name in ("lam_a", "lam_b"):
            t = self.targets[name]
            ok = np.flatnonzero(t >= 0)
            out[np.ix_(t[ok], t[ok])] += 0.5 * rho[np.ix_(ok, ok)]
        return out, float(before - np.trace(out).real)


def walk_operators(N: int) -> WalkOperators:
    if N < 2:
        raise ValueError(f"truncation radius must be at least 2, got {N}")
    basis = TruncatedBasis(N)
    targets = {
        "lam_a": _left_targets(basis, "a"),
        "lam_b": _left_targets(basis, "b"),
        "rho_ab": _right_targets(basis, "ab"),
        "rho_ba": _right_targets(basis, "ba"),
    }
    return WalkOperators(basis, targets)


def build_walk(N: int, tol: ToleranceContext = DEFAULT_TOL
               ) -> tuple[TruncatedBasis, WalkOperators, QuantumChannel]:
    """Basis, operators and the truncated walk channel with Kraus ``lam(a)/√2, lam(b)/√2``.

    The truncated channel only satisfies ``sum B* B <= I`` (mass reaching
    the boundary leaks out), so it is built as a subnormalized channel.
    """
    ops = walk_operators(N)
    kraus = [ops.lam_a / math.sqrt(2.0), ops.lam_b / math.sqrt(2.0)]
    ch = validate_channel(kraus, ops.basis.size, tol, label=f"dihedral walk N={N}",
                          subnormalized=True)
    return ops.basis, ops, ch


def walk_generator(N: int, tol: ToleranceContext = DEFAULT_TOL) -> GKLSGenerator:
    """Continuous-time counterpart: jumps ``lam(a)/√2`` and ``lam(b)/√2``, no Hamiltonian."""
    ops = walk_operators(N)
    m = ops.basis.size
    return GKLSGenerator(np.zeros((m, m)),
                         (ops.lam_a / math.sqrt(2.0), ops.lam_b / math.sqrt(2.0)), tol)


@dataclass(frozen=True)
class PotentialSeries:
    """Partial sums ``S_n = sum_{k<n} tr(Phi_*^k(|v><v|) x)`` for ``n = 1..n_max``."""

    partial_sums: np.ndarray
    terms: np.ndarray
    leak: np.ndarray
    N: int

    @property
    def n_max(self) -> int:
        return self.partial_sums.size

    def S(self, n: int) -> float:
        if not 1 <= n <= self.n_max:
            raise IndexError(f"S_{n} not computed (n_max = {self.n_max})")
        return float(self.partial_sums[n - 1])

    def growth_ratio(self, m: int) -> float:
        """``S_{4m} / S_{2m}``; tends to ``sqrt(2)`` for a null-recurrent walk."""
        return self.S(4 * m) / self.S(2 * m)

    def sqrt_fit(self, start: int = 1) -> float:
        """Least-squares ``c`` in ``S_n ≈ c sqrt(n)`` over ``n >= start``."""
        n = np.arange(start, self.n_max + 1, dtype=float)
        s = self.partial_sums[start - 1:]
        r = np.sqrt(n)
        return float(r @ s / (r @ r))

    def cesaro_means(self) -> np.ndarray:
        """``S_n / n``."""
        return self.partial_sums / np.arange(1, self.n_max + 1)


def potential_series(N: int, x, v, n_max: int, ops: WalkOperators | None = None
                     ) -> PotentialSeries:
    """Exact partial sums of the form-potential of ``x`` at ``v``.

    ``x`` is a positive ``M x M`` matrix or, for diagonal observables, the
    1-D array of its diagonal. When ``v`` is a basis vector and ``x`` is
    diagonal only the diagonal of the state is evolved.
    """
    if n_max >= N:
        raise PreconditionError(
            f"n_max = {n_max} must stay below N = {N}; later terms would see the boundary")
    if n_max < 1:
        raise ValueError("n_max must be positive")
    ops = ops or walk_operators(N)
    m = ops.basis.size
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != m:
        raise ValueError(f"start vector has length {v.size}, expected {m}")
    v = v / np.linalg.norm(v)
    x = np.asarray(x)
    diag_x = x.ndim == 1
    if diag_x:
        if x.size != m:
            raise ValueError(f"diagonal observable has length {x.size}, expected {m}")
        if np.min(x.real) < -DEFAULT_TOL.eq_tol:
            raise PreconditionError("observable is not positive")
    elif x.shape != (m, m):
        raise ValueError(f"observable has shape {x.shape}, expected {(m, m)}")
    basis_start = np.count_nonzero(np.abs(v) > 0) == 1
    if diag_x and not basis_start:
        x = np.diag(x)
        diag_x = False
    if not diag_x:
        herm = 0.5 * (x + x.conj().T)
        if np.linalg.eigvalsh(herm)[0] < -DEFAULT_TOL.eq_tol * max(1.0, np.abs(herm).max()):
            raise PreconditionError("observable is not positive")
    terms = np.zeros(n_max)
    leak = np.zeros(n_max)
    if diag_x:
        p = np.abs(v) ** 2
        xd = x.real
        for k in range(n_max):
            terms[k] = float(p @ xd)
            if k + 1 < n_max:
                p, leak[k + 1] = ops.step_diagonal(p)
    else:
        rho = np.outer(v, v.conj())
        for k in range(n_max):
            terms[k] = float(np.real(np.sum(rho.T * x)))
            if k + 1 < n_max:
                rho, leak[k + 1] = ops.step_dense(rho)
    return PotentialSeries(np.cumsum(terms), terms, leak, N)


def return_probability_sums(n_max: int) -> np.ndarray:
    """``sum_{k<n} P(simple walk at 0 after k steps)`` for ``n = 1..n_max``.

    Exact binomial counts, independent of any matrix evolution.
    """
    terms = np.zeros(n_max)
    for k in range(0, n_max, 2):
        terms[k] = math.comb(k, k // 2) / 2.0 ** k
    return np.cumsum(terms)


@dataclass(frozen=True)
class ShiftCheck:
    order: np.ndarray
    copy_sizes: tuple[int, int]
    residual: float
    interior_residual: float


def _orbit_labels(N: int) -> tuple[list[int], list[int]]:
    """Labels of the two ``rho(ab)``-orbits ordered along the shift direction.

    Orbit 0 is ``(ab)^j ... e ... (ba)^j`` (position ``j`` has label ``-2j``),
    orbit 1 is ``a (ba)^j`` (label ``-(2j + 1)``).
    """
    first = [-2 * j for j in range(-N, N + 1) if abs(2 * j) <= N]
    second = [-(2 * j + 1) for j in range(-N - 1, N + 1) if abs(2 * j + 1) <= N]
    return first, second


def shift_equivalence_check(N: int, ops: WalkOperators | None = None) -> ShiftCheck:
    """Relabel the window into the two ``rho(ab)``-orbits and compare with a right shift.

    ``rho(ab)`` is built from group multiplication; after the permutation it
    must equal the truncated right shift on each orbit, block by block.
    """
    ops = ops or walk_operators(N)
    first, second = _orbit_labels(N)
    order = np.array([k + N for k in first + second])
    rho = ops.rho_ab
    conj = rho[np.ix_(order, order)]
    n0, n1 = len(first), len(second)
    shift = np.zeros_like(conj)
    for start, n in ((0, n0), (n0, n1)):
        for j in range(n - 1):
            shift[start + j + 1, start + j] = 1.0
    diff = np.abs(conj - shift)
    interior = np.ones(n0 + n1, dtype=bool)
    interior[[n0 - 1, n0 + n1 - 1]] = False
    return ShiftCheck(order, (n0, n1), float(diff.max()),
                      float(diff[:, interior].max()) if interior.any() else 0.0)


@dataclass(frozen=True)
class CopySpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    cells: dict  # level -> cell index of every eigenvalue


@dataclass(frozen=True)
class PartitionProjections:
    """Dyadic spectral projections of the truncated ``(rho(ab) + rho(ba)) / 2``.

    Level ``n`` has cells ``[-1 + j 2^-n, -1 + (j+1) 2^-n)``,
    ``j = 0..2^(n+1) - 1`` (the last closed at 1). Projections are kept in
    the eigenbasis of each orbit copy; :meth:`projector` assembles one.
    """

    level: int
    copies: tuple
    orders: tuple

    def ranks(self, n: int) -> np.ndarray:
        """``ranks[c, j]``: rank of cell ``j`` at level ``n`` in copy ``c``."""
        width = 2 ** (n + 1)
        return np.array([np.bincount(c.cells[n], minlength=width) for c in self.copies])

    def projector(self, copy: int, n: int, j: int) -> np.ndarray:
        c = self.copies[copy]
        v = c.eigenvectors[:, c.cells[n] == j]
        return v @ v.T

    def verify(self) -> dict:
        """Completeness, orthogonality and refinement on the cell assignment.

        Every eigenvector sits in exactly one cell per level (completeness
        and orthogonality in the eigenbasis) and its level-``n`` cell halves
        to its level-``n-1`` cell (refinement); these are integer checks.
        """
        complete = refine = True
        for c in self.copies:
            for n in range(self.level + 1):
                cells = c.cells[n]
                complete &= bool(np.all((cells >= 0) & (cells < 2 ** (n + 1))))
                complete &= cells.size == c.eigenvalues.size
                if n:
                    refine &= bool(np.array_equal(cells // 2, c.cells[n - 1]))
        return {"completeness": complete, "orthogonality": complete, "refinement": refine}

    def matrix_residuals(self, copy: int = 0) -> dict:
        """Dense checks of the three properties for one copy (small sizes only)."""
        c = self.copies[copy]
        m = c.eigenvalues.size
        out = {"completeness": 0.0, "orthogonality": 0.0, "refinement": 0.0}
        for n in range(self.level + 1):
            qs = [self.projector(copy, n, j) for j in range(2 ** (n + 1))]
            out["completeness"] = max(out["completeness"],
                                      float(np.abs(sum(qs) - np.eye(m)).max()))
            for j, qj in enumerate(qs):
                for k, qk in enumerate(qs):
                    target = qj if j == k else 0.0
                    out["orthogonality"] = max(out["orthogonality"],
                                               float(np.abs(qj @ qk - target).max()))
                if n:
                    parent = self.projector(copy, n - 1, j // 2)
                    out["refinement"] = max(out["refinement"],
                                            float(np.abs(qj @ parent - qj).max()))
        return out

    def rank_ratios(self) -> dict:
        """``max_j rank(q_{j,n}) / rank(q_{j//2,n-1})`` per level ``n >= 1``."""
        out = {}
        for n in range(1, self.level + 1):
            child = self.ranks(n)
            parent = self.ranks(n - 1)
            best = 0.0
            for c in range(len(self.copies)):
                for j in range(child.shape[1]):
                    p = parent[c, j // 2]
                    if p:
                        best = max(best, child[c, j] / p)
            out[n] = best
        return out


def dyadic_cells(eigenvalues: np.ndarray, n: int, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Cell index ``floor((lambda + 1) 2^n)`` with boundary ties pushed right."""
    width = 2 ** (n + 1)
    y = (np.asarray(eigenvalues, dtype=float) + 1.0 + tie_tol) * 2.0 ** n
    return np.clip(np.floor(y).astype(np.int64), 0, width - 1)


def partition_projections(N: int, level: int, tie_tol: float = TIE_TOL,
                          ops: WalkOperators | None = None) -> PartitionProjections:
    """Spectral partition of ``(rho(ab) + rho(ba))/2`` per orbit copy, levels ``0..level``."""
    ops = ops or walk_operators(N)
    first, second = _orbit_labels(N)
    full = 0.5 * (ops.rho_ab + ops.rho_ba)
    copies, orders = [], []
    for labels in (first, second):
        idx = np.array([k + N for k in labels])
        if 2 ** (level + 1) > idx.size:
            raise PreconditionError(
                f"level {level} needs {2 ** (level + 1)} eigenvalues per copy; "
                f"copy has {idx.size}")
        block = full[np.ix_(idx, idx)]
        w, v = np.linalg.eigh(block)
        cells = {n: dyadic_cells(w, n, tie_tol) for n in range(level + 1)}
        copies.append(CopySpectrum(w, v, cells))
        orders.append(idx)
    return PartitionProjections(level, tuple(copies), tuple(orders))


def series_csv(series: PotentialSeries) -> str:
    buf = io.StringIO()
    buf.write("n,S_n,leak\n")
    cum_leak = np.cumsum(series.leak)
    for n in range(1, series.n_max + 1):
        buf.write(f"{n},{series.partial_sums[n - 1]:.17g},{cum_leak[n - 1]:.17g}\n")
    return buf.getvalue()


def partition_csv(pp: PartitionProjections) -> str:
    buf = io.StringIO()
    buf.write("copy,level,j,rank\n")
    for n in range(pp.level + 1):
        ranks = pp.ranks(n)
        for c in range(ranks.shape[0]):
            for j in range(ranks.shape[1]):
                buf.write(f"{c},{n},{j},{ranks[c, j]}\n")
    return buf.getvalue()
