import numpy as np
import pytest
from scipy.integrate import quad

import platelab as pl
from platelab.spectral import (
    _scale,
    bilaplacian,
    grid_quadrature,
    inner_l2,
    minus_laplacian,
)
from conftest import random_field


def reconstruct(field, x):
    """Independent dense evaluation from the coefficient definition."""
    dom = field.domain
    out = np.zeros_like(x)
    if dom.dim == 1:
        for k in range(1, dom.modes_per_axis + 1):
            out += field.coeffs[k - 1] * np.sin(k * x)
    return out


class TestEigenvalues:
    def test_d1_lowest(self, dom1):
        assert pl.laplacian_eigenvalue(dom1, 1) == 1.0

    def test_d2_mixed(self, dom2):
        assert pl.laplacian_eigenvalue(dom2, (2, 3)) == 13.0

    def test_d2_lowest(self, dom2):
        assert pl.laplacian_eigenvalue(dom2, (1, 1)) == 2.0

    def test_out_of_range(self, dom1):
        with pytest.raises(IndexError):
            pl.laplacian_eigenvalue(dom1, 9)
        with pytest.raises(IndexError):
            pl.laplacian_eigenvalue(dom1, 0)

    def test_monotone_under_index_increase(self, dom2):
        for k1 in range(1, 4):
            for k2 in range(1, 4):
                v = pl.laplacian_eigenvalue(dom2, (k1, k2))
                assert pl.laplacian_eigenvalue(dom2, (k1 + 1, k2)) > v
                assert pl.laplacian_eigenvalue(dom2, (k1, k2 + 1)) > v


class TestNorms:
    def test_zero(self, dom1):
        assert pl.norms(pl.SpectralField.zero(dom1)) == (0.0, 0.0, 0.0)

    def test_sin_x_quadrature_oracle(self, dom1):
        # oracle: integral of sin(x)^2 over (0, pi)
        ref, _ = quad(lambda x: np.sin(x) ** 2, 0, np.pi)
        u = pl.SpectralField.single_mode(dom1, 1, 1.0)
        l2, v1, v2 = pl.norms(u)
        assert l2 == pytest.approx(np.sqrt(ref), rel=1e-12)
        assert v1 == pytest.approx(np.sqrt(ref), rel=1e-12)
        assert v2 == pytest.approx(np.sqrt(ref), rel=1e-12)

    def test_sin_2x_second_norm(self, dom1):
        u = pl.SpectralField.single_mode(dom1, 2, 1.0)
        _, _, v2 = pl.norms(u)
        assert v2**2 == pytest.approx(16.0 * np.pi / 2.0, rel=1e-12)

    def test_parseval_against_dense_grid(self):
        rng = np.random.default_rng(3)
        for n in (4, 16, 32):
            dom = pl.DomainSpec(1, n, 2 * n)
            u = random_field(dom, rng)
            x = np.pi * np.arange(1, 4097) / 4097
            vals = reconstruct(u, x)
            quad_l2sq = np.pi / 4097 * (vals**2).sum()
            assert pl.norms(u)[0] ** 2 == pytest.approx(quad_l2sq, rel=1e-10)

    def test_operator_diagonality(self, dom1):
        rng = np.random.default_rng(5)
        u = random_field(dom1, rng)
        assert pl.norms(minus_laplacian(u))[0] == pytest.approx(pl.norms(u)[2], rel=1e-14)
        assert pl.norms(bilaplacian(u))[0] == pytest.approx(
            pl.norms(minus_laplacian(u))[2], rel=1e-14)
        np.testing.assert_allclose(
            bilaplacian(u).coeffs, u.coeffs * dom1.eigenvalues**2, rtol=1e-15)


class TestEmbeddingConstants:
    def exhaustive_oracle(self, dom):
        lams = sorted(dom.eigenvalues.reshape(-1))
        lam0 = min(lams)
        lam1 = min(l**2 for l in lams)
        lam2 = min(l**2 / l for l in lams)
        return lam0, lam1, lam2

    def test_d1(self, dom1):
        emb = pl.embedding_constants(dom1)
        assert (emb.lambda0, emb.lambda1, emb.lambda2) == (1.0, 1.0, 1.0)
        assert (emb.lambda0, emb.lambda1, emb.lambda2) == self.exhaustive_oracle(dom1)

    def test_d2(self, dom2):
        emb = pl.embedding_constants(dom2)
        assert (emb.lambda0, emb.lambda1, emb.lambda2) == (2.0, 4.0, 2.0)
        assert (emb.lambda0, emb.lambda1, emb.lambda2) == self.exhaustive_oracle(dom2)

    def test_equality_at_lowest_mode(self, dom1):
        u = pl.SpectralField.single_mode(dom1, 1, 2.5)
        emb = pl.embedding_constants(dom1)
        l2, v1, v2 = pl.norms(u)
        assert emb.lambda0 * l2**2 == pytest.approx(v1**2, rel=1e-14)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_inequalities_on_random_fields(self, dim):
        dom = pl.DomainSpec(dim, 6, 12)
        emb = pl.embedding_constants(dom)
        rng = np.random.default_rng(11)
        for _ in range(1000):
            u = random_field(dom, rng)
            l2, v1, v2 = pl.norms(u)
            assert emb.lambda0 * l2**2 <= v1**2 * (1 + 1e-12)
            assert emb.lambda1 * l2**2 <= v2**2 * (1 + 1e-12)
            assert emb.lambda2 * v1**2 <= v2**2 * (1 + 1e-12)


class TestTransforms:
    def test_basis_sample(self, dom1):
        u = pl.SpectralField.single_mode(dom1, 1, 1.0)
        x = dom1.axis_points()
        np.testing.assert_allclose(pl.to_physical(u), np.sin(x), atol=1e-14)

    @pytest.mark.parametrize("dim,n", [(1, 8), (1, 32), (2, 6)])
    def test_round_trip(self, dim, n):
        dom = pl.DomainSpec(dim, n, 2 * n)
        rng = np.random.default_rng(n)
        u = random_field(dom, rng)
        back = pl.to_spectral(pl.to_physical(u), dom)
        tol = 10 * np.finfo(float).eps * n
        assert np.abs(back.coeffs - u.coeffs).max() <= tol

    def test_cube_projection_quadrature_oracle(self, dom1):
        # oracle: projection coefficients of sin(x)^3 by dense quadrature
        u = pl.SpectralField.single_mode(dom1, 1, 1.0)
        cubed = pl.to_spectral(pl.to_physical(u) ** 3, dom1)
        for k in range(1, dom1.modes_per_axis + 1):
            ref, _ = quad(lambda x, k=k: np.sin(k * x) * np.sin(x) ** 3, 0, np.pi)
            coeff = ref / (np.pi / 2)
            assert cubed.coeffs[k - 1] == pytest.approx(coeff, abs=1e-12)

    def test_grid_mismatch_raises(self, dom1):
        with pytest.raises(ValueError):
            pl.to_spectral(np.zeros(7), dom1)

    def test_grid_quadrature_quartic(self, dom1):
        # integral of sin(x)^4 over (0, pi) equals 3*pi/8
        vals = pl.to_physical(pl.SpectralField.single_mode(dom1, 1, 1.0)) ** 4
        assert grid_quadrature(vals, dom1) == pytest.approx(3 * np.pi / 8, rel=1e-13)


class TestFieldAlgebra:
    def test_linear_space_axioms(self, dom1):
        rng = np.random.default_rng(2)
        a, b = random_field(dom1, rng), random_field(dom1, rng)
        np.testing.assert_allclose((a + b).coeffs, a.coeffs + b.coeffs)
        np.testing.assert_allclose((a - b).coeffs, a.coeffs - b.coeffs)
        np.testing.assert_allclose((2.0 * a).coeffs, 2.0 * a.coeffs)

    def test_inner_product_is_bilinear(self, dom1):
        rng = np.random.default_rng(4)
        a, b, c = (random_field(dom1, rng) for _ in range(3))
        lhs = inner_l2(a + 2.0 * b, c)
        assert lhs == pytest.approx(inner_l2(a, c) + 2.0 * inner_l2(b, c), rel=1e-12)

    def test_domain_mismatch(self, dom1, dom2):
        with pytest.raises(ValueError):
            pl.SpectralField.zero(dom1) + pl.SpectralField.zero(
                pl.DomainSpec(1, 4, 8))

    def test_domain_invariants(self):
        with pytest.raises(ValueError):
            pl.DomainSpec(3, 4, 8)
        with pytest.raises(ValueError):
            pl.DomainSpec(1, 0, 8)
        with pytest.raises(ValueError):
            pl.DomainSpec(1, 8, 15)
