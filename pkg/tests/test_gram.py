import math
from fractions import Fraction

import numpy as np
import pytest

from donsker_lab.gram import (
    cond_coeffs,
    cond_variance,
    cond_variance_exact,
    cond_variance_mc_oracle,
    gamma_inverse_float,
    gamma_inverse_inf_norm,
    gamma_matrix,
    inner_ip,
    inner_table,
    neumann_bound,
    project_cm,
)
from donsker_lab.paths import BasisIndex, GridPath, coarsen
from donsker_lab.rng import SeededStream

from oracles import cond_variance_dense, fraction_inverse_inf_norm, gram_dense


def test_inner_ip_examples():
    assert inner_ip(4, BasisIndex(1, 0, 4), 2, BasisIndex(1, 0, 2)) == pytest.approx(math.sqrt(0.5), rel=1e-15)
    assert inner_ip(3, BasisIndex(1, 1, 3), 2, BasisIndex(1, 0, 2)) == pytest.approx(0.408248290463863, rel=1e-12)
    assert inner_ip(4, BasisIndex(1, 0, 4), 2, BasisIndex(2, 0, 2)) == 0.0


def test_inner_table_is_sparse_and_bounded():
    for m, N in ((24, 2), (17, 4), (65, 8)):
        tab = inner_table(m, N)
        assert tab.max_row_nnz() <= 2
        assert tab.bounded()
        T, _ = gram_dense(m, N)
        assert np.allclose(tab.dense(), T, atol=1e-14)


def test_gamma_examples():
    G = gamma_matrix(3, 2)
    assert G.diag == (Fraction(5, 6), Fraction(5, 6))
    assert G.off == (Fraction(1, 6),)
    assert G.is_tridiagonal() and not G.is_identity()
    assert gamma_inverse_inf_norm(G, exact=True) == Fraction(3, 2)
    assert gamma_matrix(4, 2).is_identity()
    assert gamma_inverse_inf_norm(gamma_matrix(4, 2)) == 1.0
    with pytest.raises(ValueError):
        gamma_matrix(4, 4)


@pytest.mark.parametrize("m,N", [(7, 3), (17, 2), (33, 4), (41, 5), (100, 7)])
def test_gamma_against_dense_and_fraction_oracles(m, N):
    G = gamma_matrix(m, N)
    _, D = gram_dense(m, N)
    assert np.allclose(G.dense(), D, atol=1e-13)
    assert gamma_inverse_inf_norm(G, exact=True) == fraction_inverse_inf_norm(m, N)
    assert np.allclose(gamma_inverse_float(G), np.linalg.inv(D), atol=1e-11)
    # the Neumann series bound holds whenever it is finite
    nb = neumann_bound(G)
    assert gamma_inverse_inf_norm(G) <= nb + 1e-12


def test_gamma_bounds_when_fine_enough():
    for N in (2, 3, 5, 8):
        for m in (8 * N + 1, 9 * N + 4, 16 * N + 3):
            G = gamma_matrix(m, N)
            assert G.is_tridiagonal()
            assert min(G.diag) >= Fraction(3, 4)
            assert gamma_inverse_inf_norm(G, exact=True) <= 2


def test_cond_coeffs_examples():
    c = cond_coeffs(4, 2, BasisIndex(1, 0, 4))
    assert c.row == pytest.approx([math.sqrt(0.5), 0.0], abs=1e-15)
    assert cond_coeffs(4, 2, BasisIndex(1, 0, 4), coord=2).row.tolist() == [0.0, 0.0]
    assert cond_variance(4, 2, BasisIndex(1, 0, 4)) == 0.5
    assert cond_variance_exact(4, 2, BasisIndex(1, 0, 4), coord=2) == 0
    with pytest.raises(ValueError):
        cond_coeffs(2, 2, BasisIndex(1, 0, 2))


@pytest.mark.parametrize("m,N", [(24, 2), (37, 4), (50, 6)])
def test_cond_variance_against_dense_solve(m, N):
    for cell in range(m):
        a = BasisIndex(1, cell, m)
        assert cond_variance(m, N, a) == pytest.approx(cond_variance_dense(m, N, cell), rel=1e-10)
        assert cond_variance_exact(m, N, a) <= Fraction(8 * N, m)
        assert cond_coeffs(m, N, a).within_bound()


def test_cond_variance_mc_oracle():
    s = SeededStream(21)
    est = cond_variance_mc_oracle(4, 2, BasisIndex(1, 0, 4), 100_000, s)
    assert est.within(0.5)
    est = cond_variance_mc_oracle(4, 2, BasisIndex(1, 0, 4), 100_000, s.child(1), coord=2)
    assert est.within(0.0)
    a = BasisIndex(1, 5, 24)
    est = cond_variance_mc_oracle(24, 2, a, 100_000, s.child(2))
    assert est.within(cond_variance(24, 2, a))


def test_project_cm_examples():
    tent = GridPath([0.0, 1.0, 0.0])
    assert np.allclose(project_cm(tent, 1).values, 0.0, atol=1e-15)
    rng = np.random.default_rng(8)
    p = GridPath(rng.standard_normal((9, 2)))
    assert np.allclose(project_cm(p, 8).values, p.values, atol=1e-14)
    # aligned grids: the projection is coarsening
    for N in (1, 2, 4):
        assert np.allclose(project_cm(p, N).values, coarsen(p, N).values, atol=1e-14)


def test_project_cm_matches_least_squares_off_grid():
    # not aligned: the projection keeps the inner products with each h_b^N
    rng = np.random.default_rng(9)
    v = np.concatenate([[0.0], np.cumsum(rng.standard_normal(7))])
    got = project_cm(GridPath(v), 3).values[:, 0]
    T, _ = gram_dense(7, 3)
    coef = T.T @ (math.sqrt(7) * np.diff(v))
    assert np.allclose(np.diff(got) * math.sqrt(3), coef, atol=1e-13)


def test_gamma_rows_are_sparse():
    for m, N in ((17, 2), (100, 7), (257, 32)):
        assert gamma_matrix(m, N).max_row_nnz() <= 3


def test_projected_basis_norm_ratio_is_bounded():
    from donsker_lab.paths import basis_h
    from donsker_lab.sobolev import SobolevIndex, norm_eta_p

    idx = SobolevIndex(0.1, 20.0)
    ratios = []
    for N in (2, 4, 8, 16):
        for m in (9 * N, 16 * N + 3, 64 * N + 1):
            for cell in (0, m // 3, m - 1):
                v = norm_eta_p(project_cm(basis_h(BasisIndex(1, cell, m)), N), idx, method="lag")
                ratios.append(v / (math.sqrt(N / m) * N ** (idx.eta - 0.5)))
    assert max(ratios) / min(ratios) < 1.5
