"""Bundled example channels and seeded random channel generators."""

from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from qabsorb.absorption import ClassicalChain
from qabsorb.channel import GKLSGenerator, QuantumChannel, validate_channel
from qabsorb.numerics import DEFAULT_TOL, ToleranceContext

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def identity_channel(d: int, tol: ToleranceContext = DEFAULT_TOL) -> QuantumChannel:
    return validate_channel([np.eye(d)], d, tol, label=f"identity C^{d}")


def unitary_channel(u, tol: ToleranceContext = DEFAULT_TOL) -> QuantumChannel:
    u = np.asarray(u, dtype=complex)
    return validate_channel([u], u.shape[0], tol, label="unitary")


def amplitude_damping(gamma: float = 0.5, tol: ToleranceContext = DEFAULT_TOL) -> QuantumChannel:
    b0 = np.diag([1.0, np.sqrt(1.0 - gamma)])
    b1 = np.zeros((2, 2))
    b1[0, 1] = np.sqrt(gamma)
    return validate_channel([b0, b1], 2, tol, label=f"amplitude damping {gamma:g}")


def three_level_absorber(psi=None, tol: ToleranceContext = DEFAULT_TOL) -> QuantumChannel:
    """``B1 = |0><0| + |1><1|``, ``B2 = |psi><2|``: level 2 decays into ``psi``.

    ``psi`` defaults to ``(|0> + |1>)/sqrt(2)``.
    """
    if psi is None:
        psi = np.array([1.0, 1.0]) / np.sqrt(2.0)
    psi = np.asarray(psi, dtype=complex)
    b1 = np.diag([1.0, 1.0, 0.0]).astype(complex)
    b2 = np.zeros((3, 3), dtype=complex)
    b2[:2, 2] = psi
    return validate_channel([b1, b2], 3, tol, label="three-level absorber")


def gamblers_ruin(n: int = 5, p: float = 0.5, tol: ToleranceContext = DEFAULT_TOL
                  ) -> ClassicalChain:
    """Walk on ``{0, ..., n-1}`` absorbed at both ends; step right with probability ``p``."""
    m = np.zeros((n, n))
    m[0, 0] = m[n - 1, n - 1] = 1.0
    for x in range(1, n - 1):
        m[x, x + 1] = p
        m[x, x - 1] = 1.0 - p
    return ClassicalChain(m, tol=tol)


def dephasing_generator(tol: ToleranceContext = DEFAULT_TOL) -> GKLSGenerator:
    """Qubit dephasing ``L(x) = Z x Z - x``: a single jump ``Z`` with ``Z* Z = I``."""
    return GKLSGenerator(np.zeros((2, 2)), (PAULI_Z,), tol)


def _random_isometry_columns(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_channel(d: int, n_kraus: int, rng: np.random.Generator,
                   tol: ToleranceContext = DEFAULT_TOL) -> QuantumChannel:
    """Generic random channel: a Haar-like random Stinespring isometry."""
    w = _random_isometry_columns(n_kraus * d, d, rng)
    kraus = [w[i * d:(i + 1) * d] for i in range(n_kraus)]
    return validate_channel(kraus, d, tol, label=f"random d={d}")


def random_structured_channel(blocks, transient: int, n_kraus: int, rng: np.random.Generator,
                              multiplicities=None, rotate: bool = True,
                              tol: ToleranceContext = DEFAULT_TOL) -> QuantumChannel:
    """Random channel with prescribed recurrent blocks and a transient block.

    ``blocks`` lists the sizes of the recurrent blocks; block ``r`` of size
    ``m * s`` (``s = multiplicities[r]``, default 1) carries a random
    channel on ``C^m`` tensored with the identity on ``C^s``, so its
    fixed points include ``I ⊗ M_s``. The ``transient`` coordinates are
    mapped anywhere. With ``rotate`` the whole picture is conjugated by a
    Haar random unitary so that nothing is aligned with the standard basis.
    """
    blocks = list(blocks)
    mult = list(multiplicities) if multiplicities is not None else [1] * len(blocks)
    sizes = [b * s for b, s in zip(blocks, mult)]
    d = sum(sizes) + transient
    k = n_kraus
    w = np.zeros((k * d, d), dtype=complex)
    offset = 0
    for size, m, s in zip(sizes, blocks, mult):
        iso = _random_isometry_columns(k * m, m, rng)
        for i in range(k):
            ki = np.kron(iso[i * m:(i + 1) * m], np.eye(s))
            w[i * d + offset:i * d + offset + size, offset:offset + size] = ki
        offset += size
    if transient:
        g = rng.standard_normal((k * d, transient)) + 1j * rng.standard_normal((k * d, transient))
        rec = w[:, :offset]
        g = g - rec @ (rec.conj().T @ g)
        q, _ = np.linalg.qr(g)
        w[:, offset:] = q
    kraus = [w[i * d:(i + 1) * d] for i in range(k)]
    if rotate:
        u = unitary_group.rvs(d, random_state=rng)
        kraus = [u @ b @ u.conj().T for b in kraus]
    return validate_channel(kraus, d, tol, label=f"structured {blocks}+{transient}")


def random_channel_family(seed: int, count: int = 20, max_dim: int = 6, max_kraus: int = 4,
                          tol: ToleranceContext = DEFAULT_TOL) -> list[QuantumChannel]:
    """A seeded mix of generic and block-structured channels (``d <= max_dim``)."""
    rng = np.random.default_rng(seed)
    out = []
    shapes = [
        ([1], 1, None), ([2], 1, None), ([1, 1], 1, None), ([1, 2], 2, None),
        ([2, 1], 1, None), ([1, 1, 1], 2, None), ([1], 0, [2]), ([1, 1], 2, [1, 2]),
        ([3], 2, None), ([1, 2], 0, None),
    ]
    for i in range(count):
        k = int(rng.integers(1, max_kraus + 1))
        if i % 4 == 3:
            d = int(rng.integers(2, max_dim + 1))
            out.append(random_channel(d, max(k, 2), rng, tol))
            continue
        blocks, trans, mult = shapes[i % len(shapes)]
        size = sum(b * (s or 1) for b, s in zip(blocks, mult or [1] * len(blocks))) + trans
        assert size <= max_dim
        out.append(random_structured_channel(blocks, trans, max(k, 2), rng, mult, tol=tol))
    return out
