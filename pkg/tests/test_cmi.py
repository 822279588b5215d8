import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import classical_cmi, mp_gibbs_cmi, von_neumann
from qdobrushin.cmi import (ExactGibbs, SupportViolation, Tripartition, cmi, contiguous_tripartition,
                            decay_experiment, default_schedule, entropy, gibbs_cmi_exact, log_slope, recover)
from qdobrushin.lattice import build_graph, chain, tfim
from qdobrushin.lindblad import gibbs
from qdobrushin.qop import random_density_matrix

seeds = st.integers(0, 2 ** 31 - 1)

# uniform transverse-field Ising chain, n = 8, beta = 0.1, contiguous A | B | C;
# extended-precision values, unchanged between 192 and 384 bits
TFIM8_CMI = {
    1: 4.942390477604326e-3,
    2: 4.3271034167922404e-8,
    3: 3.660713582482734e-13,
    4: 4.4216905869345704e-18,
    5: 5.978062455319843e-23,
}


def test_entropy_cases():
    pure = np.zeros((4, 4))
    pure[0, 0] = 1
    assert entropy(pure) == 0.0
    assert entropy(np.eye(8) / 8) == pytest.approx(3 * math.log(2))
    rho = random_density_matrix(3, np.random.default_rng(0))
    assert entropy(rho) == pytest.approx(von_neumann(rho), abs=1e-10)
    with pytest.raises(ValueError):
        entropy(np.diag([1.5, -0.5]))


def test_tripartition_validation():
    with pytest.raises(ValueError):
        Tripartition((0,), (0,), (1,), 2)
    with pytest.raises(ValueError):
        Tripartition((0,), (), (1,), 3)
    with pytest.raises(ValueError):
        Tripartition((), (0,), (1,), 2)
    g = build_graph(tfim(8))
    tri = contiguous_tripartition(8, 1, g)
    assert tri.B == () and tri.dist == 1
    tri = contiguous_tripartition(8, 3, g)
    assert len(tri.B) == 2 and tri.dist == 3
    with pytest.raises(ValueError):
        contiguous_tripartition(4, 4)


def classical_state(P):
    return np.diag(P.ravel()).astype(complex)


@given(seeds)
def test_classical_states_match_shannon_oracle(seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
    tri = Tripartition((0,), (1,), (2,), 3)
    assert cmi(classical_state(P), tri) == pytest.approx(classical_cmi(P), abs=1e-12)


def test_markov_chain_has_zero_cmi():
    rng = np.random.default_rng(1)
    pa = rng.dirichlet(np.ones(2))
    pb_a = rng.dirichlet(np.ones(2), size=2)
    pc_b = rng.dirichlet(np.ones(2), size=2)
    P = pa[:, None, None] * pb_a[:, :, None] * pc_b[None, :, :]
    assert cmi(classical_state(P), Tripartition((0,), (1,), (2,), 3)) < 1e-12


def test_product_state_has_zero_cmi():
    rng = np.random.default_rng(2)
    rho = np.kron(random_density_matrix(2, rng), random_density_matrix(1, rng))
    assert cmi(rho, Tripartition((0,), (1,), (2,), 3)) < 1e-12
    assert cmi(rho, Tripartition((0, 1), (), (2,), 3)) < 1e-12


@given(seeds)
def test_strong_subadditivity(seed):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(4, rng)
    perm = rng.permutation(4)
    tri = Tripartition((int(perm[0]),), (int(perm[1]),), tuple(sorted(int(p) for p in perm[2:])), 4)
    assert cmi(rho, tri) >= 0.0


def test_extended_precision_matches_mpmath_oracle():
    spec = tfim(4, 0.1)
    H = spec.dense()
    for dist in (1, 2, 3):
        tri = contiguous_tripartition(4, dist)
        ours = gibbs_cmi_exact(spec, tri, 0.1)
        assert ours == pytest.approx(mp_gibbs_cmi(H, 0.1, tri.A, tri.B, tri.C), rel=1e-12)


def test_extended_precision_agrees_with_float64_when_large():
    spec = tfim(4, 1.0)
    sigma = gibbs(spec).sigma
    tri = contiguous_tripartition(4, 1)
    assert gibbs_cmi_exact(spec, tri) == pytest.approx(cmi(sigma, tri), rel=1e-9)


def test_frozen_tfim_decay_values():
    spec = tfim(8, 0.1)
    g = build_graph(spec)
    ex = ExactGibbs(spec.dense(), 0.1, prec=256)
    values = []
    for dist, expected in TFIM8_CMI.items():
        v = ex.cmi(contiguous_tripartition(8, dist, g))
        assert v == pytest.approx(expected, rel=1e-8)
        values.append(v)
    assert log_slope(list(TFIM8_CMI), values) < -10
    assert ExactGibbs(spec.dense(), 0.1, prec=192).cmi(contiguous_tripartition(8, 4, g)) == pytest.approx(
        TFIM8_CMI[4], rel=1e-8)


def test_default_schedule():
    assert default_schedule(4) == (1.0, 0.5, 2)
    assert default_schedule(1) == (0.25, 0.125, 0)
    for dist in range(1, 8):
        Delta, _, R = default_schedule(dist)
        assert Delta + R < dist


def test_recovery_at_time_zero_and_compliance():
    spec = chain(5, beta=0.1, seed=0)
    g = build_graph(spec)
    tri = Tripartition.build((0,), (1, 2), (3, 4), 5, g)
    run = recover(spec, tri, t=0.0, graph=g)
    assert run.trace_distance == pytest.approx(run.initial_distance)
    assert run.compliant
    later = recover(spec, tri, graph=g)
    assert later.trace_distance < run.trace_distance
    assert later.marginal_defect < 1e-10
    lhs, rhs, ok = later.recovery_bound()
    assert ok and lhs <= rhs
    with pytest.raises(SupportViolation):
        recover(spec, tri, Delta=1, t=0.1, truncation=3, graph=g, strict=True)


def test_log_slope_and_small_experiment():
    d = np.arange(1, 5)
    assert log_slope(d, np.exp(-3 * d)) == pytest.approx(-3)
    assert math.isnan(log_slope(d, [1, 0, 1, 1]))
    res = decay_experiment(6, 0.1, dists=(1, 2, 3), recovery=False)
    assert res.slope < -8
    assert (np.diff(res.values[0]) < 0).all()
