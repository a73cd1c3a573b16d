import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import unitary_group

from conftest import random_matrix
from qabsorb.channel import restrict_channel, validate_channel
from qabsorb.errors import PreconditionError
from qabsorb.library import (
    PAULI_X,
    PAULI_Z,
    identity_channel,
    random_channel,
    random_structured_channel,
)
from qabsorb.numerics import Subspace, contains, opnorm, span_sum
from qabsorb.structure import (
    FixedPointSpace,
    algebra_closure_check,
    commutant_basis,
    enclosure_complement,
    enclosure_generated_by,
    enclosure_structure,
    fixed_point_space,
    hereditary_defect,
    is_enclosure,
    maximal_invariant_state,
    minimal_enclosures,
    recurrence_decomposition,
    spectral_pieces,
)

EQ = 1e-8
PSI = np.array([1.0, 1.0]) / np.sqrt(2)


def random_unital(d, n, rng):
    """Mixture of unitaries: the trace state is invariant, so R = C^d."""
    p = rng.dirichlet(np.ones(n))
    return validate_channel([np.sqrt(q) * unitary_group.rvs(d, random_state=rng) for q in p])


class TestIsEnclosure:
    def test_identity_any(self):
        v = Subspace.span(np.array([[1.0], [2.0]]))
        cert = is_enclosure(identity_channel(2), v)
        assert cert.is_enclosure and abs(cert.slack) < 1e-15

    def test_damping_ground(self, damping):
        cert = is_enclosure(damping, Subspace.coordinate(2, [0]))
        np.testing.assert_allclose(damping.apply(np.diag([1.0, 0])), np.diag([1.0, 0.5]))
        assert cert.is_enclosure and cert.slack == pytest.approx(0.0, abs=1e-15)

    def test_damping_excited(self, damping):
        cert = is_enclosure(damping, Subspace.coordinate(2, [1]))
        assert not cert.is_enclosure and cert.slack == pytest.approx(-0.5)

    def test_trivial_subspaces(self, damping):
        assert is_enclosure(damping, Subspace.zero(2)).is_enclosure
        assert is_enclosure(damping, Subspace.full(2)).is_enclosure

    def test_ambient_mismatch(self, damping):
        with pytest.raises(ValueError):
            is_enclosure(damping, Subspace.full(3))


class TestFixedPoints:
    def test_identity(self):
        assert fixed_point_space(identity_channel(3)).dim == 9

    def test_damping(self, damping):
        fps = fixed_point_space(damping)
        assert fps.dim == 1
        b = fps.basis[0] * np.sign(np.trace(fps.basis[0]).real)
        np.testing.assert_allclose(b, np.eye(2) / np.sqrt(2), atol=1e-12)

    def test_absorber(self, absorber):
        fps = fixed_point_space(absorber)
        assert fps.dim == 4
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = random_matrix(rng, 2, hermitian=True)
            y = np.zeros((3, 3), dtype=complex)
            y[:2, :2] = x
            y[2, 2] = PSI @ x @ PSI
            assert fps.distance(y) <= EQ
        # the 9x9 kernel computed directly
        m = absorber.heisenberg_matrix() - np.eye(9)
        assert 9 - np.linalg.matrix_rank(m, tol=1e-10) == 4

    def test_basis_hermitian_orthonormal(self, absorber):
        fps = fixed_point_space(absorber)
        gram = np.array([[np.trace(a @ b) for b in fps.basis] for a in fps.basis])
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)
        for b in fps.basis:
            np.testing.assert_allclose(b, b.conj().T)


class TestInvariantState:
    def test_identity(self):
        inv = maximal_invariant_state(identity_channel(3))
        np.testing.assert_allclose(inv.state, np.eye(3) / 3, atol=1e-12)

    def test_damping(self, damping):
        inv = maximal_invariant_state(damping, cesaro_terms=2000)
        np.testing.assert_allclose(inv.state, np.diag([1.0, 0.0]), atol=1e-12)
        assert inv.cesaro_distance < 1e-2

    def test_absorber_support(self, absorber):
        inv = maximal_invariant_state(absorber)
        assert inv.support.dim == 2
        assert contains(Subspace.coordinate(3, [0, 1]), inv.support)


class TestRecurrence:
    def test_identity(self):
        dec = recurrence_decomposition(identity_channel(2))
        assert dec.R_plus.dim == 2 and dec.T.dim == 0 and dec.R_zero.dim == 0

    def test_damping(self, damping):
        dec = recurrence_decomposition(damping)
        np.testing.assert_allclose(dec.R_plus.projector, np.diag([1.0, 0]), atol=1e-12)
        np.testing.assert_allclose(dec.T.projector, np.diag([0.0, 1]), atol=1e-12)

    def test_absorber(self, absorber):
        dec = recurrence_decomposition(absorber)
        np.testing.assert_allclose(dec.R_plus.projector, np.diag([1.0, 1, 0]), atol=1e-12)
        np.testing.assert_allclose(dec.T.projector, np.diag([0.0, 0, 1]), atol=1e-12)
        assert dec.R_plus_slack >= -EQ

    def test_no_invariant_state(self):
        # subnormalized map that loses all mass has no invariant state
        ch = validate_channel([np.array([[0.0, 0.0], [1.0, 0.0]])], subnormalized=True)
        with pytest.raises(PreconditionError):
            recurrence_decomposition(ch)


class TestCommutant:
    def test_identity_generator(self):
        assert commutant_basis([np.eye(3)]).dim == 9

    def test_paulis(self):
        c = commutant_basis([PAULI_X, PAULI_Z])
        assert c.dim == 1
        assert c.distance(np.eye(2)) < 1e-12

    def test_diagonal(self):
        c = commutant_basis([np.diag([1.0, 2.0])])
        assert c.dim == 2
        assert c.distance(np.diag([1.0, 0])) < 1e-12 and c.distance(np.diag([0, 1.0])) < 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_fixed_points_equal_commutant(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 5))
        ch = random_unital(d, 3, rng)
        assert recurrence_decomposition(ch).T.dim == 0
        assert fixed_point_space(ch).same_span(commutant_basis(ch.kraus), 1e-8)

    def test_block_unital(self):
        rng = np.random.default_rng(9)
        u = [unitary_group.rvs(2, random_state=rng) for _ in range(4)]
        kraus = [np.kron(np.eye(2), ui) / 2 for ui in u]
        ch = validate_channel(kraus)
        fps = fixed_point_space(ch)
        assert fps.dim == 4
        assert fps.same_span(commutant_basis(ch.kraus), 1e-8)


class TestAlgebraClosure:
    def _space(self, mats, d):
        vecs = np.array([m.reshape(-1, order="F") for m in mats]).T
        q, _ = np.linalg.qr(vecs)
        return FixedPointSpace(tuple(q[:, i].reshape(d, d, order="F") for i in range(q.shape[1])), d)

    def test_identity_and_x(self):
        assert algebra_closure_check(self._space([np.eye(2), PAULI_X], 2)).is_algebra

    def test_scalars(self):
        assert algebra_closure_check(self._space([np.eye(2)], 2)).is_algebra

    def test_absorber_not_algebra(self, absorber):
        fps = fixed_point_space(absorber)
        assert not algebra_closure_check(fps).is_algebra
        a0 = np.diag([1.0, 0.0, 0.5])
        assert fps.distance(a0) < 1e-12
        # <psi|p0|psi>^2 = 1/4 but <psi|p0^2|psi> = 1/2
        assert fps.distance(a0 @ a0) > 0.1


class TestDOME:
    def _check(self, ch, dome, r):
        for i, p in enumerate(dome.parts):
            assert is_enclosure(ch, p).is_enclosure
            for q in dome.parts[i + 1:]:
                assert opnorm(p.projector @ q.projector) <= EQ
        assert opnorm(dome.spans.projector - r.projector) <= EQ
        assert min(dome.slacks) >= -EQ

    def test_damping(self, damping):
        dome = minimal_enclosures(damping, seed=0)
        assert len(dome.parts) == 1
        np.testing.assert_allclose(dome.parts[0].projector, np.diag([1.0, 0]), atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_identity_two_rays(self, seed):
        ch = identity_channel(2)
        dome = minimal_enclosures(ch, seed)
        assert [p.dim for p in dome.parts] == [1, 1]
        self._check(ch, dome, Subspace.full(2))

    def test_absorber(self, absorber):
        dome = minimal_enclosures(absorber, 3)
        assert [p.dim for p in dome.parts] == [1, 1]
        self._check(absorber, dome, Subspace.coordinate(3, [0, 1]))

    @pytest.mark.parametrize("seed", range(6))
    def test_random(self, seed):
        rng = np.random.default_rng(seed)
        ch = random_structured_channel([1, 2], 1, 2, rng, multiplicities=[2, 1])
        dec = recurrence_decomposition(ch)
        dome = minimal_enclosures(ch, seed, decomposition=dec)
        self._check(ch, dome, dec.R)
        # each part carries only scalar fixed points
        for p in dome.parts:
            assert fixed_point_space(restrict_channel(ch, p)).dim == 1


class TestSpectralPieces:
    def test_clusters(self):
        pieces = spectral_pieces(np.diag([1.0, 1.0 + 1e-9, 3.0]))
        assert [p.shape[1] for p in pieces] == [2, 1]


class TestComplement:
    def test_identity(self):
        ch = identity_channel(3)
        v = Subspace.span(np.array([[1.0], [1.0], [0.0]]))
        cert = enclosure_complement(ch, v, Subspace.full(3))
        assert cert.is_enclosure and cert.subspace.dim == 2

    def test_absorber(self, absorber):
        cert = enclosure_complement(absorber, Subspace.coordinate(3, [0]),
                                    Subspace.coordinate(3, [0, 1]))
        np.testing.assert_allclose(cert.subspace.projector, np.diag([0.0, 1, 0]), atol=1e-12)
        assert cert.slack >= 0 and cert.is_enclosure

    def test_equal(self, absorber):
        v = Subspace.coordinate(3, [0, 1])
        cert = enclosure_complement(absorber, v, v)
        assert cert.subspace.dim == 0 and cert.is_enclosure

    def test_preconditions(self, absorber):
        with pytest.raises(PreconditionError):
            enclosure_complement(absorber, Subspace.coordinate(3, [1]),
                                 Subspace.coordinate(3, [0]))
        with pytest.raises(PreconditionError):
            enclosure_complement(absorber, Subspace.coordinate(3, [0]), Subspace.full(3))


class TestEnclosureStructure:
    def test_full_absorber(self, absorber):
        s = enclosure_structure(absorber, Subspace.full(3))
        assert s.v_r_plus.dim == 2 and s.v_r_zero.dim == 0 and s.v_t.dim == 1
        assert s.absorption_slack == pytest.approx(0.0, abs=1e-12)
        assert s.ok

    def test_ray(self, absorber):
        s = enclosure_structure(absorber, Subspace.coordinate(3, [0]))
        assert (s.v_r_plus.dim, s.v_r_zero.dim, s.v_t.dim) == (1, 0, 0)
        assert s.ok

    def test_identity(self):
        v = Subspace.span(np.array([[1.0], [1j]]))
        s = enclosure_structure(identity_channel(2), v)
        assert s.v_r_plus.dim == 1 and s.v_t.dim == 0 and s.ok

    def test_rejects_non_enclosure(self, damping):
        with pytest.raises(PreconditionError):
            enclosure_structure(damping, Subspace.coordinate(2, [1]))


def test_generated_enclosure(absorber):
    # the smallest enclosure containing a state on level 2
    v = enclosure_generated_by(absorber, np.diag([0.0, 0, 1]))
    assert is_enclosure(absorber, v).is_enclosure
    assert contains(v, Subspace.coordinate(3, [2]))


@given(st.integers(0, 2 ** 31))
def test_enclosure_equivalence(seed):
    """Enclosure certificate agrees with the hereditary predual test."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    ch = random_structured_channel([1, 1], d - 2, 2, rng) if d > 2 else random_channel(2, 2, rng)
    dec = recurrence_decomposition(ch)
    dome = minimal_enclosures(ch, seed, decomposition=dec)
    candidates = [dec.R, *dome.parts]
    for _ in range(4):
        k = int(rng.integers(1, d))
        candidates.append(Subspace.span(random_matrix(rng, d)[:, :k]))
    for v in candidates:
        cert = is_enclosure(ch, v)
        defect = hereditary_defect(ch, v, rng)
        assert cert.is_enclosure == (defect <= EQ), (cert.slack, defect)
