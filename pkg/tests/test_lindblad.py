import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import SX, SZ, coherent_term_quadrature, gibbs_expm, hermitian_power, lindblad_dense, pauli_word
from qdobrushin.lattice import HamiltonianSpec, Term, build_graph, chain, tfim
from qdobrushin.lindblad import (JUMP_LABELS, assemble, balanced_lindbladian, check_evolution_error, check_kms,
                                 check_stationarity, coherent_term_closed, coherent_term_fourier,
                                 depolarizing_residual, fourier_monomial_bound, fourier_monomial_integral, gibbs,
                                 jump_operator, jump_series, jump_series_bound, maximally_mixed_gibbs,
                                 site_lindbladian, truncate, truncation_profile)
from qdobrushin.qop import op_norm, pauli, random_density_matrix, random_hermitian, trace_norm

seeds = st.integers(0, 2 ** 31 - 1)


def single_z(beta):
    return HamiltonianSpec(1, (Term((0,), SZ),), beta)


def test_gibbs_matches_expm():
    spec = chain(3, seed=4)
    for beta in (0.0, 0.05, 0.7):
        assert np.allclose(gibbs(spec, beta).sigma, gibbs_expm(spec.dense(), beta), atol=1e-14)


def test_single_qubit_gibbs_formula():
    beta = 0.3
    sigma = gibbs(single_z(beta)).sigma
    expected = np.diag([math.exp(-beta), math.exp(beta)]) / (2 * math.cosh(beta))
    assert np.allclose(sigma, expected)


def test_jump_is_pauli_at_zero_field():
    spec = HamiltonianSpec(2, (Term((0, 1), 0 * pauli_word("ZZ")),), 0.4)
    g = gibbs(spec)
    for p in "XYZ":
        P = pauli(1, p, 2)
        assert np.allclose(jump_operator(g, P), P)
        assert np.allclose(coherent_term_closed(g, P), 0)


@given(seeds)
def test_jump_matches_fractional_powers(seed):
    spec = chain(3, seed=seed % 1000)
    g = gibbs(spec, 0.4)
    P = pauli(1, "X", 3)
    s = gibbs_expm(spec.dense(), 0.4)
    expected = hermitian_power(s, 0.25) @ P @ hermitian_power(s, -0.25)
    assert np.allclose(jump_operator(g, P), expected, atol=1e-12)


@given(seeds)
def test_adjoint_identity(seed):
    rng = np.random.default_rng(seed)
    L = balanced_lindbladian(chain(3, seed=seed % 97), 0.2)
    rho, B = random_density_matrix(3, rng), random_hermitian(8, rng)
    lhs = np.trace(B @ L.apply(rho))
    rhs = np.trace(L.apply_adjoint(B) @ rho)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_generator_matches_dense_oracle():
    L = balanced_lindbladian(chain(3, seed=2), 0.3)
    rho = random_density_matrix(3, np.random.default_rng(0))
    pairs = [(s.coherent[p], s.jumps[p]) for s in L.sites for p in JUMP_LABELS]
    assert np.allclose(L.apply(rho), lindblad_dense(pairs, rho), atol=1e-13)
    S = L.superop()
    assert np.allclose(S(rho), L.apply(rho), atol=1e-13)
    assert S.trace_defect() < 1e-12


def test_coherent_term_hermitian_and_matches_quadrature():
    spec = chain(2, seed=5)
    beta = 0.6
    g = gibbs(spec, beta)
    for p in "XZ":
        P = pauli(0, p, 2)
        G = coherent_term_closed(g, P)
        assert np.allclose(G, G.conj().T)
        ref = coherent_term_quadrature(spec.dense(), beta, P)
        assert np.abs(G - ref).max() < 1e-9
        four = coherent_term_fourier(g, P)
        assert np.abs(four.value - G).max() < 1e-10


def test_depolarizing_generator_at_infinite_temperature():
    L = assemble(maximally_mixed_gibbs(1))
    B = (np.eye(2) + SZ) / 2
    assert np.allclose(L.apply_adjoint(B), -2 * SZ)
    for p in "XYZ":
        s = L.sites[0]
        assert np.allclose(s.coherent[p], 0)
    # M + sum_P P M P = 2 tr(M) I on one qubit
    assert depolarizing_residual(SX, 0, 1) < 1e-14
    assert depolarizing_residual(np.eye(2), 0, 1) == pytest.approx(8.0)


@pytest.mark.parametrize("beta", [0.0, 0.1, 0.5])
def test_gibbs_is_stationary_per_term(beta):
    L = balanced_lindbladian(tfim(3, beta, h=0.7), beta)
    rep = check_stationarity(L)
    assert rep["passed"]
    assert rep["max_term"] < 1e-12


def test_kms_with_identity_and_basis():
    L = balanced_lindbladian(chain(2, seed=1), 0.4)
    s = L.sites[0]
    half = L.gibbs.power(0.5)
    for p in JUMP_LABELS:
        # B = I: the adjoint annihilates the identity, so the left side must vanish too
        assert trace_norm(s.apply(half @ half, p)) < 1e-13
    assert check_kms(L)["max"] < 1e-12
    assert check_kms(L, basis="random", samples=8)["passed"]


def test_kms_fails_for_unbalanced_generator():
    L = balanced_lindbladian(chain(2, seed=1), 0.4)
    for s in L.sites:
        for p in JUMP_LABELS:
            s.coherent[p] = np.zeros_like(s.coherent[p])
    assert not check_kms(L)["passed"]


def test_fourier_monomial_ratio_is_dirichlet_beta():
    beta = 0.3
    for r in range(5):
        ratio = fourier_monomial_integral(beta, r) / fourier_monomial_bound(beta, r)
        expected = float(mpmath.dirichlet(r + 1, [0, 1, 0, -1]))
        assert ratio == pytest.approx(expected, rel=1e-9)
    assert fourier_monomial_integral(beta, 0) == pytest.approx(0.5)


def test_truncation_support_and_full_radius():
    spec = chain(5, seed=3, beta=0.1)
    graph = build_graph(spec)
    for R in range(graph.diameter + 1):
        t = truncate(spec, 2, R, graph=graph)
        assert t.support_defect < 1e-12
        assert t.region == graph.ball(2, R)
    assert truncate(spec, 2, graph.diameter, graph=graph).epsilon < 1e-12
    zero = truncate(spec, 2, 0, graph=graph)
    assert zero.restricted_terms == []
    eps = [t.epsilon for t in truncation_profile(chain(7, seed=3, beta=0.1), 3, range(4))]
    assert eps[0] > eps[1] > eps[2] > 0
    assert eps[3] < 1e-12


def test_truncated_evolution_error_within_certificate():
    spec = chain(4, seed=0, beta=0.2)
    full = site_lindbladian(gibbs(spec), 1)
    t = truncate(spec, 1, 1, full=full)
    rng = np.random.default_rng(1)
    rhos = [random_density_matrix(4, rng) for _ in range(4)]
    rep = check_evolution_error(full.superop(), t.superop(), 0.7, t.epsilon, rhos)
    assert rep["passed"]
    assert rep["measured"] <= rep["bound"]


def test_jump_series_converges_to_jump():
    spec = chain(5, seed=1, beta=0.05)
    d = 2
    A = jump_operator(gibbs(spec), pauli(2, "X", 5))
    prev = np.inf
    for K in range(1, 5):
        err = op_norm(jump_series(spec, 2, "X", K).value - A)
        assert err <= jump_series_bound(d, 0.05, K + 1)
        assert err < prev
        prev = err


def test_overflow_guard():
    with pytest.raises(OverflowError):
        gibbs(chain(3, seed=0), 1e4)
    with pytest.raises(ValueError):
        gibbs(chain(3, seed=0), -1.0)
