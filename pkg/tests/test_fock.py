import math

import numpy as np
import pytest

from bfl.fock import FockSpace, MonomialSpec, monomial_matrix, normalization
from ladder_reference import ladder_monomial_matrix


class TestNormalization:
    def test_empty_products(self):
        assert normalization(0, 0) == 1.0

    def test_small(self):
        assert normalization(2, 4) == 2.0

    def test_direct_factorials(self):
        # sqrt(5! * 5!) = 120
        assert normalization(5, 10) == pytest.approx(math.sqrt(math.factorial(5) ** 2), rel=1e-15)
        assert normalization(5, 10) == pytest.approx(120.0, rel=1e-15)

    def test_huge_intermediate_factorials(self):
        # 300! has ~2500 bits: exercises the scaled big-int square root
        val = normalization(300, 301)
        ref = 0.5 * (math.lgamma(301) + math.lgamma(2))
        assert math.isfinite(val)
        assert math.log(val) == pytest.approx(ref, rel=1e-12)

    def test_result_beyond_float_range(self):
        # sqrt(1500!^2) = 1500! ~ 1e4114 cannot be a finite float; the
        # computation itself never overflows, only the final conversion
        with pytest.raises(OverflowError):
            normalization(1500, 3000)

    @pytest.mark.parametrize("r,n", [(-1, 4), (5, 4)])
    def test_domain_errors(self, r, n):
        with pytest.raises(ValueError):
            normalization(r, n)


class TestMonomialMatrix:
    def test_single_hop_n2(self):
        # k=1, r=1, s=0: a1+ a2 moves one boson from level 2 to level 1
        m = monomial_matrix(FockSpace(2), MonomialSpec(1, 1, 0))
        expected = np.zeros((3, 3))
        expected[1, 0] = math.sqrt(2)
        expected[2, 1] = math.sqrt(2)
        np.testing.assert_allclose(m, expected, atol=1e-15)

    def test_number_operator(self):
        m = monomial_matrix(FockSpace(4), MonomialSpec(1, 1, 1))
        np.testing.assert_allclose(m, np.diag([0.0, 1.0, 2.0, 3.0, 4.0]), atol=1e-15)

    def test_double_hop_n2(self):
        # (a1+)^2 (a2)^2 / 2 connects |0,2> -> |2,0> with unit amplitude
        m = monomial_matrix(FockSpace(2), MonomialSpec(2, 2, 0))
        expected = np.zeros((3, 3))
        expected[2, 0] = 1.0
        np.testing.assert_allclose(m, expected, atol=1e-15)

    def test_rank_exceeds_particles(self):
        with pytest.raises(ValueError):
            monomial_matrix(FockSpace(2), MonomialSpec(3, 1, 1))

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_band_structure(self, k):
        for n in (k, 7, 20):
            space = FockSpace(n)
            for r in range(k + 1):
                for s in range(k + 1):
                    m = monomial_matrix(space, MonomialSpec(k, r, s))
                    for off in range(-n, n + 1):
                        band = np.diagonal(m, offset=-off)  # offset of rows below diagonal
                        if off != r - s:
                            assert not band.any(), (n, k, r, s, off)

    @pytest.mark.parametrize("n,k", [(3, 2), (8, 3), (12, 4)])
    def test_adjoint_pairing(self, n, k):
        space = FockSpace(n)
        for r in range(k + 1):
            for s in range(k + 1):
                m_rs = monomial_matrix(space, MonomialSpec(k, r, s))
                m_sr = monomial_matrix(space, MonomialSpec(k, s, r))
                np.testing.assert_allclose(m_rs, m_sr.T, atol=1e-12)

    @pytest.mark.parametrize("n", range(1, 9))
    def test_ladder_oracle(self, n):
        for k in range(1, min(3, n) + 1):
            space = FockSpace(n)
            for r in range(k + 1):
                for s in range(k + 1):
                    closed = monomial_matrix(space, MonomialSpec(k, r, s))
                    ref = ladder_monomial_matrix(n, k, r, s)
                    np.testing.assert_allclose(closed, ref, atol=1e-12)

    def test_number_conservation(self):
        # acting on any fixed-n state lands back in the fixed-n block: the
        # matrix is square on that block and columns violating the occupancy
        # constraints vanish entirely
        space = FockSpace(6)
        m = monomial_matrix(space, MonomialSpec(3, 2, 1))
        assert m.shape == (7, 7)
        for col in range(7):
            nz = np.nonzero(m[:, col])[0]
            assert all(0 <= row <= 6 for row in nz)


class TestSpecs:
    def test_fock_space_dim(self):
        assert FockSpace(0).dim == 1
        assert FockSpace(128).dim == 129

    def test_negative_n(self):
        with pytest.raises(ValueError):
            FockSpace(-1)

    def test_monomial_spec_validation(self):
        with pytest.raises(ValueError):
            MonomialSpec(2, 3, 0)
        with pytest.raises(ValueError):
            MonomialSpec(2, 0, -1)
        with pytest.raises(ValueError):
            MonomialSpec(0, 0, 0)
        assert MonomialSpec(3, 2, 1).shift == 1
