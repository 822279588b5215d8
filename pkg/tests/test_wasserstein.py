import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import SZ, dual_norm_sdp, hypercube_flow_w1, pauli_word, sdp_w1
from qdobrushin.qop import embed, random_density_matrix, random_hermitian, trace_norm
from qdobrushin.wasserstein import (apply_plan_linearity, bracket, classical_ot, classical_w1_of_diagonal,
                                    commutator_plan, dual_certificate, telescoping_plan, w1)

seeds = st.integers(0, 2 ** 31 - 1)


def basis_state(bits):
    v = np.zeros(2 ** len(bits))
    v[int(bits, 2)] = 1
    return np.outer(v, v).astype(complex)


@pytest.mark.parametrize("X, value", [
    (SZ, 1.0),
    (pauli_word("ZZ"), 2.0),
    (basis_state("00") - basis_state("11"), 2.0),
    (basis_state("000") - basis_state("100"), 1.0),
])
def test_closed_form_values(X, value):
    r = w1(X, gap_tol=1e-9)
    assert r.lower == pytest.approx(value, abs=1e-7)
    assert r.upper == pytest.approx(value, abs=1e-7)
    assert r.plan.verify()


@given(st.integers(1, 3), seeds)
def test_diagonal_matches_hypercube_flow(n, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(2 ** n)), rng.dirichlet(np.ones(2 ** n))
    X = np.diag(p - q).astype(complex)
    ref = hypercube_flow_w1(p, q)
    r = w1(X, gap_tol=1e-9)
    assert r.lower - 1e-9 <= ref <= r.upper + 1e-9
    assert r.upper - r.lower <= 1e-8 * max(1.0, trace_norm(X))
    assert classical_ot(p, q)[0] == pytest.approx(ref, abs=1e-9)
    assert classical_w1_of_diagonal(X) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dense_bracket_contains_sdp(seed):
    rng = np.random.default_rng(seed)
    X = random_density_matrix(2, rng) - random_density_matrix(2, rng)
    ref = sdp_w1(X)
    r = w1(X)
    assert r.lower <= ref + 1e-6
    assert ref <= r.upper + 1e-6
    assert r.plan.verify()
    # the witness certifies the lower bound: tr(A X) with dual norm <= 1
    exact = dual_norm_sdp(r.witness)
    assert exact <= 1 + 1e-6
    assert dual_certificate(r.witness) >= exact - 1e-6
    assert np.trace(r.witness @ X).real == pytest.approx(r.lower, rel=1e-9, abs=1e-12)


@given(st.integers(1, 3), seeds)
def test_trace_norm_sandwich(n, seed):
    rng = np.random.default_rng(seed)
    X = random_density_matrix(n, rng) - random_density_matrix(n, rng)
    b = bracket(X)
    t1 = trace_norm(X)
    assert b["lower"] == pytest.approx(t1 / 2)
    assert b["upper"] <= n * t1 / 2 + 1e-12
    r = w1(X, gap_tol=1e-6)
    assert t1 / 2 - 1e-9 <= r.upper <= n * t1 / 2 + 1e-9
    assert r.lower >= t1 / 2 - 1e-9


def test_few_site_plan():
    rng = np.random.default_rng(0)
    rest = random_density_matrix(2, rng)
    X = np.kron(SZ, rest)
    b = bracket(X)
    assert b["few_site"]["sites"] == (0,)
    assert b["few_site"]["costs"][1:].max() < 1e-12
    assert b["upper"] == pytest.approx(1.0)


def test_commutator_plan_and_linearity():
    rng = np.random.default_rng(3)
    n = 3
    A = embed(random_hermitian(4, rng), [0, 1], n)
    B = random_hermitian(8, rng)
    plan = commutator_plan(A, [0, 1], B)
    assert plan.verify()
    C = 1j * (A @ B - B @ A)
    assert plan.costs[2] < 1e-12
    assert plan.costs.max() <= trace_norm(C) + 1e-12
    other = telescoping_plan(random_density_matrix(n, rng) - np.eye(8) / 8)
    combo = apply_plan_linearity([plan, other], [0.5, -2.0])
    assert combo.verify()
    assert combo.value <= 0.5 * plan.value + 2.0 * other.value + 1e-12


def test_target_stops_early():
    rng = np.random.default_rng(5)
    X = random_density_matrix(2, rng) - random_density_matrix(2, rng)
    full = w1(X)
    early = w1(X, target=0.1 * full.upper)
    assert early.lower > 0.1 * full.upper
    assert early.iterations <= full.iterations


def test_zero_and_invalid_inputs():
    assert w1(np.zeros((4, 4))).upper == 0.0
    with pytest.raises(ValueError):
        w1(np.eye(2))
    with pytest.raises(ValueError):
        w1(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(ValueError):
        classical_ot(np.array([1.0, 0.0]), np.array([0.5, 0.0]))
