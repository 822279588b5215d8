import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from qdobrushin.costdyn import (build_Q, build_R, check_cmi_contraction, check_inner_products, check_path_sum,
                                check_Q_contraction, check_Q_quasilocal, mu, path_sum, path_sum_vectorized,
                                propagate, r_vectors)
from qdobrushin.lattice import build_graph, chain, grid, measure_params


def dense(Q):
    return Q.to_sparse().toarray()


def test_mu_value():
    assert mu(1, 1, 2, 2, 0.01) == pytest.approx(0.44)
    assert mu(2, 2, 2, 2, 0.01) == pytest.approx(22 * 2 * 1e-4 * (3 * 2 * 0.01))


def test_zero_temperature_limit_is_pure_sink():
    g = build_graph(chain(5, seed=0))
    for i, Q in enumerate(build_Q(g, 0.0)):
        M = dense(Q)
        expected = np.zeros((5, 5))
        expected[i, i] = -4
        assert np.allclose(M, expected)
    with pytest.raises(ValueError):
        build_Q(g, -1.0)


def test_update_matrix_views_agree():
    g = build_graph(chain(6, seed=0))
    Q = build_Q(g, 0.01, k_max=3, r_max=3, sites=[2])[0]
    M = dense(Q)
    for j in range(6):
        assert np.allclose(Q.column(j), M[:, j])
    x = np.random.default_rng(0).random(6)
    assert np.allclose(Q.matvec(x), M @ x)
    Mhat = M.copy()
    Mhat[2, 2] -= Q.sink
    assert np.allclose(Q.hat_column_norms(), np.abs(Mhat).sum(axis=0))
    assert Q.one_norm() == pytest.approx(np.abs(M).sum(axis=0).max())
    off = M - np.diag(np.diag(M))
    assert (off >= 0).all()
    assert len(Q.triplets()) == np.count_nonzero(M)


def test_split_pieces():
    g = build_graph(chain(5, seed=0))
    parts = build_Q(g, 0.01, k_max=2, r_max=2, split=True)[1]
    total, coh, dis = parts["total"], parts["coherent"], parts["dissipative"]
    assert np.allclose(dense(coh), dense(total) * 10 / 22 + np.diag(np.eye(5)[1] * 4 * 10 / 22))
    assert dis.sink == -4.0
    assert dis.r_max == 0


def test_small_beta_contraction_checks():
    g = build_graph(chain(30, seed=0))
    params = measure_params(g)
    beta = 1e-7
    Qs = build_Q(g, beta)
    rep = check_Q_contraction(Qs, params, beta)
    assert rep["in_regime"] and rep["passed"]
    assert rep["max_one_norm"] == pytest.approx(4.0, rel=1e-4)
    loc = check_Q_quasilocal(Qs[15], g, params, beta, [20], [22])
    assert loc["passed"]


def test_propagate_matches_dense_exponential():
    g = build_graph(chain(6, seed=0))
    Q = build_Q(g, 0.01, k_max=3, r_max=3, sites=[2])[0]
    x0 = np.ones(6)
    for t in (0.0, 0.3, 1.5):
        assert np.allclose(propagate(Q, x0, t), expm(dense(Q) * t) @ x0)
    assert propagate(Q, x0, [0.0, 1.0]).shape == (2, 6)
    with pytest.raises(ValueError):
        propagate(Q, -x0, 1.0)


def test_R_kernel_structure():
    g = build_graph(chain(6, seed=0))
    c = 1e-3
    R = build_R(g, c, [1, 2, 3]).toarray()
    r = r_vectors(g, c)
    assert np.allclose(R, R.T)
    off = R - np.diag(np.diag(R))
    assert (off >= 0).all()
    for i in (1, 2, 3):
        assert R[i, i] == pytest.approx(-1 + 0.25 * sum(r[k, i] ** 2 for k in (1, 2, 3)))
    assert r[0, 2] == pytest.approx(c ** 2)
    with pytest.raises(ValueError):
        build_R(g, 1.5, [0])


def test_cmi_contraction_on_chain():
    g = build_graph(chain(20, seed=0))
    rep = check_cmi_contraction(g, [9, 10], [2, 4], 1e-5, [0.0, 0.5, 2.0])
    assert rep["passed"]


@given(st.integers(1, 3), st.integers(0, 5), st.integers(0, 5))
def test_path_sum_matches_matrix_power(steps, a, b):
    g = build_graph(chain(6, seed=0))
    c = 0.2
    W = c ** g.dist
    ref = np.linalg.matrix_power(W, steps)[a, b]
    assert path_sum(g, c, steps, a, b) == pytest.approx(ref, rel=1e-12)
    assert path_sum_vectorized(g, c, steps, a, b) == pytest.approx(ref, rel=1e-12)


def test_path_bounds_on_grid():
    g = build_graph(grid(6, 6))
    params = measure_params(g)
    c = math.exp(-2 * params.power) / 2000
    rep = check_path_sum(g, c, [1, 2, 3], [(0, 0), (0, 7), (14, 21)], params)
    assert rep["passed"] and rep["precondition"]
    assert check_inner_products(g, c, params)["passed"]
    with pytest.raises(ValueError):
        path_sum_vectorized(g, c, 5, 0, 1)
