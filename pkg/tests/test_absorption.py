import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qabsorb.absorption import (
    CROSS_TOL,
    ClassicalChain,
    absorption_iterative,
    absorption_linear,
    algebra_criterion,
    blocks_residual,
    classical_absorption,
    embed_classical_chain,
    fixed_points_via_absorption,
    is_absorbing_recurrent,
    transient_corner,
)
from qabsorb.errors import NotAnEnclosureError, PreconditionError
from qabsorb.library import identity_channel, random_channel_family, random_structured_channel
from qabsorb.numerics import Subspace, contains, opnorm, span_sum
from qabsorb.structure import (
    algebra_closure_check,
    fixed_point_space,
    is_enclosure,
    minimal_enclosures,
    recurrence_decomposition,
)

EQ = 1e-8
V0 = Subspace.coordinate(3, [0])
R3 = Subspace.coordinate(3, [0, 1])


class TestIterative:
    def test_full_space(self, absorber):
        a = absorption_iterative(absorber, Subspace.full(3))
        np.testing.assert_allclose(a.matrix, np.eye(3), atol=1e-15)

    def test_absorber_v0(self, absorber):
        a = absorption_iterative(absorber, V0)
        np.testing.assert_allclose(a.matrix, np.diag([1.0, 0, 0.5]), atol=1e-12)
        assert a.converged and a.residuals["fixed_point"] <= EQ
        # oracle: plain power iteration
        x = V0.projector
        for _ in range(50):
            x = absorber.apply(x)
        np.testing.assert_allclose(a.matrix, x, atol=1e-12)

    def test_absorber_r(self, absorber):
        np.testing.assert_allclose(absorption_iterative(absorber, R3).matrix, np.eye(3),
                                   atol=1e-12)

    def test_refuses_non_enclosure(self, damping):
        with pytest.raises(NotAnEnclosureError):
            absorption_iterative(damping, Subspace.coordinate(2, [1]))


class TestLinear:
    def test_absorber_v0(self, absorber):
        a = absorption_linear(absorber, V0)
        np.testing.assert_allclose(a.matrix, np.diag([1.0, 0, 0.5]), atol=1e-12)
        t = Subspace.coordinate(3, [2])
        np.testing.assert_allclose(t.compress(a.matrix), [[0.5]], atol=1e-12)

    def test_absorber_r(self, absorber):
        np.testing.assert_allclose(absorption_linear(absorber, R3).matrix, np.eye(3),
                                   atol=1e-12)

    def test_gambler(self, ruin):
        ch = embed_classical_chain(ruin)
        a = absorption_linear(ch, Subspace.coordinate(5, [4]))
        np.testing.assert_allclose(np.diag(a.matrix).real, [0, .25, .5, .75, 1], atol=1e-10)

    def test_no_transient(self):
        v = Subspace.span(np.array([[1.0], [1.0]]))
        a = absorption_linear(identity_channel(2), v)
        np.testing.assert_allclose(a.matrix, v.projector, atol=1e-15)

    def test_corner_contracts(self, absorber):
        c = transient_corner(absorber, Subspace.coordinate(3, [2]))
        np.testing.assert_allclose(c, [[0.0]], atol=1e-15)


class TestBlocks:
    def test_absorber(self, absorber):
        a = absorption_iterative(absorber, V0)
        assert blocks_residual(a, absorber) <= EQ

    def test_full(self, absorber):
        assert blocks_residual(absorption_iterative(absorber, Subspace.full(3)), absorber) <= EQ

    def test_identity(self):
        ch = identity_channel(3)
        v = Subspace.span(np.array([[1.0, 0], [0, 1], [1, 1j]]))
        a = absorption_iterative(ch, v)
        np.testing.assert_allclose(a.matrix, v.projector, atol=1e-12)
        assert blocks_residual(a, ch) <= EQ


class TestAbsorbingRecurrent:
    def test_identity(self):
        ok, dev = is_absorbing_recurrent(identity_channel(2))
        assert ok and dev == pytest.approx(0.0, abs=1e-15)

    def test_damping(self, damping):
        assert is_absorbing_recurrent(damping)[0]

    def test_absorber(self, absorber):
        assert is_absorbing_recurrent(absorber)[0]


class TestSpan:
    def test_identity(self):
        span = fixed_points_via_absorption(identity_channel(2), 0)
        assert span.space.dim == 4 and span.matches

    def test_absorber(self, absorber):
        span = fixed_points_via_absorption(absorber, 1)
        assert span.space.dim == 4 == span.fixed_point_dim and span.matches
        assert fixed_point_space(absorber).same_span(span.space, 1e-8)

    def test_gambler(self, ruin):
        ch = embed_classical_chain(ruin)
        span = fixed_points_via_absorption(ch, 2)
        assert span.space.dim == 2 and span.matches
        # harmonic functions of the walk are affine: h_x = (h_{x-1} + h_{x+1})/2
        for b in span.space.basis:
            h = np.diag(b).real
            np.testing.assert_allclose(h[1:-1], 0.5 * (h[:-2] + h[2:]), atol=1e-10)


class TestCriterion:
    def test_absorber(self, absorber):
        crit = algebra_criterion(absorber, 7)
        assert not crit.is_algebra
        assert crit.worst_norm == pytest.approx(0.25, abs=1e-6)
        a0 = absorption_iterative(absorber, V0).matrix
        a1 = absorption_iterative(absorber, Subspace.coordinate(3, [1])).matrix
        np.testing.assert_allclose(a0 @ a1, np.diag([0, 0, 0.25]), atol=1e-12)

    def test_damping(self, damping):
        crit = algebra_criterion(damping, 0)
        assert crit.is_algebra and fixed_point_space(damping).dim == 1

    def test_gambler(self, ruin):
        ch = embed_classical_chain(ruin)
        crit = algebra_criterion(ch, 0)
        assert not crit.is_algebra
        a0 = absorption_iterative(ch, Subspace.coordinate(5, [0])).matrix
        a4 = absorption_iterative(ch, Subspace.coordinate(5, [4])).matrix
        np.testing.assert_allclose(np.diag(a0 @ a4).real, [0, 3 / 16, .25, 3 / 16, 0],
                                   atol=1e-6)


class TestClassical:
    def test_all_states(self, ruin):
        np.testing.assert_array_equal(classical_absorption(ruin, range(5)), np.ones(5))

    def test_gambler(self, ruin):
        np.testing.assert_allclose(classical_absorption(ruin, [4]), np.arange(5) / 4,
                                   atol=1e-12)

    def test_no_path(self):
        p = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 0, 1.0]])
        a = classical_absorption(ClassicalChain(p), [2])
        np.testing.assert_allclose(a, [0, 0, 1])

    def test_not_closed(self, ruin):
        with pytest.raises(PreconditionError):
            classical_absorption(ruin, [2])

    def test_invalid_chain(self):
        with pytest.raises(ValueError):
            ClassicalChain(np.array([[0.5, 0.2], [0, 1]]))

    def test_recurrent_states(self, ruin):
        assert ruin.recurrent_states() == [0, 4]


class TestEmbed:
    def test_identity_chain(self):
        ch = embed_classical_chain(ClassicalChain(np.eye(3)))
        assert len(ch.kraus) == 3
        for idx in ([0], [1, 2], [0, 2]):
            assert is_enclosure(ch, Subspace.coordinate(3, idx)).is_enclosure

    def test_period_two(self):
        ch = embed_classical_chain(ClassicalChain(np.array([[0.0, 1], [1, 0]])))
        np.testing.assert_allclose(absorption_iterative(ch, Subspace.full(2)).matrix, np.eye(2))

    def test_diagonal_action(self, ruin):
        ch = embed_classical_chain(ruin)
        h = np.random.default_rng(0).random(5)
        np.testing.assert_allclose(np.diag(ch.apply(np.diag(h))).real, ruin.P @ h, atol=1e-14)


def random_absorbing_chain(rng, n):
    """Random chain: a few closed classes, the rest transient with full rows."""
    n_rec = int(rng.integers(1, min(4, n) + 1))
    p = np.zeros((n, n))
    classes, i = [], 0
    while i < n_rec:
        size = int(min(rng.integers(1, 3), n_rec - i))
        members = list(range(i, i + size))
        block = rng.random((size, size)) + 0.1
        p[np.ix_(members, members)] = block / block.sum(axis=1, keepdims=True)
        classes.append(members)
        i += size
    for x in range(n_rec, n):
        row = rng.random(n) + 0.01
        p[x] = row / row.sum()
    return ClassicalChain(p), classes


@given(st.integers(0, 2 ** 31))
def test_classical_bridge(seed):
    rng = np.random.default_rng(seed)
    chain, classes = random_absorbing_chain(rng, int(rng.integers(2, 13)))
    pick = [c for c in classes if rng.random() < 0.5] or classes[:1]
    closed = sorted(s for c in pick for s in c)
    classical = classical_absorption(chain, closed)
    q = absorption_linear(embed_classical_chain(chain), Subspace.coordinate(chain.n, closed))
    np.testing.assert_allclose(np.diag(q.matrix).real, classical, atol=1e-6)


FAMILY = random_channel_family(11, count=12)


@pytest.mark.parametrize("idx", range(len(FAMILY)))
def test_channel_properties(idx):
    ch = FAMILY[idx]
    dec = recurrence_decomposition(ch)
    assert is_absorbing_recurrent(ch, dec)[0]
    dome = minimal_enclosures(ch, idx, decomposition=dec)
    total = np.zeros((ch.dim, ch.dim), dtype=complex)
    mats = {}
    for v in dome.parts:
        it = absorption_iterative(ch, v, decomposition=dec)
        lin = absorption_linear(ch, v, decomposition=dec)
        assert opnorm(it.matrix - lin.matrix) <= CROSS_TOL
        for a in (it, lin):
            assert a.residuals["blocks"] <= EQ
            assert a.residuals["fixed_point"] <= EQ
        total += it.matrix
        mats[id(v)] = it.matrix
    # a DOME of R absorbs everything
    assert opnorm(total - np.eye(ch.dim)) <= 1e-6
    # monotone: 0 <= A(V) <= A(W) for V inside W
    if len(dome.parts) >= 2:
        v = dome.parts[0]
        w = span_sum(v, dome.parts[1])
        av, aw = mats[id(v)], absorption_iterative(ch, w).matrix
        assert np.linalg.eigvalsh(av)[0] >= -EQ
        assert np.linalg.eigvalsh(aw - av)[0] >= -EQ
    crit = algebra_criterion(ch, idx, decomposition=dec)
    assert crit.is_algebra == algebra_closure_check(fixed_point_space(ch)).is_algebra


def test_multiplicity_block_dome():
    # fixed points of the block are M_2, so the DOME splits it into two rays
    rng = np.random.default_rng(4)
    ch = random_structured_channel([1], 1, 2, rng, multiplicities=[2])
    dec = recurrence_decomposition(ch)
    dome = minimal_enclosures(ch, 0, decomposition=dec)
    assert [p.dim for p in dome.parts] == [1, 1] and dec.R.dim == 2
    assert all(contains(dec.R, p) for p in dome.parts)
