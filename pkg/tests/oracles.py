"""Reference implementations used only by the tests.

Each oracle is written from first principles with plain loops, scipy.linalg,
LP or SDP solvers, and does not import the routine it checks.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SINGLE = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def pauli_word(label: str) -> np.ndarray:
    return kron_all([SINGLE[c] for c in label])


def embed_loop(op: np.ndarray, sites, n: int) -> np.ndarray:
    """Entry-by-entry embedding; site 0 is the most significant bit."""
    k = len(sites)
    D = 2 ** n
    out = np.zeros((D, D), dtype=complex)
    rest = [s for s in range(n) if s not in sites]
    for a in range(D):
        bits_a = [(a >> (n - 1 - s)) & 1 for s in range(n)]
        for b in range(D):
            bits_b = [(b >> (n - 1 - s)) & 1 for s in range(n)]
            if any(bits_a[s] != bits_b[s] for s in rest):
                continue
            ia = int("".join(str(bits_a[s]) for s in sites), 2) if k else 0
            ib = int("".join(str(bits_b[s]) for s in sites), 2) if k else 0
            out[a, b] = op[ia, ib]
    return out


def ptrace_loop(X: np.ndarray, traced, n: int) -> np.ndarray:
    keep = [s for s in range(n) if s not in traced]
    dk = 2 ** len(keep)
    out = np.zeros((dk, dk), dtype=complex)
    for a in range(2 ** n):
        ba = [(a >> (n - 1 - s)) & 1 for s in range(n)]
        for b in range(2 ** n):
            bb = [(b >> (n - 1 - s)) & 1 for s in range(n)]
            if any(ba[s] != bb[s] for s in traced):
                continue
            ia = int("".join(str(ba[s]) for s in keep), 2) if keep else 0
            ib = int("".join(str(bb[s]) for s in keep), 2) if keep else 0
            out[ia, ib] += X[a, b]
    return out


def gibbs_expm(H: np.ndarray, beta: float) -> np.ndarray:
    E = sla.expm(-beta * H)
    return E / np.trace(E)


def hermitian_power(rho: np.ndarray, p: float) -> np.ndarray:
    return sla.fractional_matrix_power(rho, p)


def von_neumann(rho: np.ndarray) -> float:
    """-tr rho log rho through scipy's matrix logarithm."""
    return float(-np.trace(rho @ sla.logm(rho)).real)


def shannon(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def classical_cmi(P: np.ndarray) -> float:
    """I(A:C|B) for a joint distribution P[a, b, c]."""
    return (shannon(P.sum(axis=2).ravel()) + shannon(P.sum(axis=0).ravel())
            - shannon(P.sum(axis=(0, 2))) - shannon(P.ravel()))


def hypercube_flow_w1(p: np.ndarray, q: np.ndarray) -> float:
    """Earth mover distance on {0,1}^n with Hamming cost as a min-cost flow over cube edges."""
    N = len(p)
    n = int(round(math.log2(N)))
    edges = [(u, u ^ (1 << b)) for u in range(N) for b in range(n)]
    A = np.zeros((N, len(edges)))
    for e, (u, v) in enumerate(edges):
        A[u, e] += 1.0
        A[v, e] -= 1.0
    res = linprog(np.ones(len(edges)), A_eq=A, b_eq=p - q, bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun)


def sdp_w1(X: np.ndarray) -> float:
    """Primal W1 as a semidefinite program (cvxpy, CLARABEL)."""
    import cvxpy as cp

    d = X.shape[0]
    n = int(round(math.log2(d)))
    Ps = [cp.Variable((d, d), hermitian=True) for _ in range(n)]
    Ns = [cp.Variable((d, d), hermitian=True) for _ in range(n)]
    cons = []
    labels = ["".join(t) for t in itertools.product("IXYZ", repeat=n)]
    for i in range(n):
        cons += [Ps[i] >> 0, Ns[i] >> 0]
        Xi = Ps[i] - Ns[i]
        for lab in labels:
            if lab[i] == "I":
                W = pauli_word(lab)
                cons.append(cp.real(cp.trace(W @ Xi)) == 0)
                cons.append(cp.imag(cp.trace(W @ Xi)) == 0)
    cons.append(sum(P - N for P, N in zip(Ps, Ns)) == X)
    prob = cp.Problem(cp.Minimize(0.5 * cp.real(sum(cp.trace(P + N) for P, N in zip(Ps, Ns)))), cons)
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def lindblad_dense(pairs, rho):
    """Sum over (G, A) of -i[G, rho] + A rho A^dag - 1/2 {A^dag A, rho}."""
    out = np.zeros_like(rho, dtype=complex)
    for G, A in pairs:
        K = A.conj().T @ A
        out += -1j * (G @ rho - rho @ G) + A @ rho @ A.conj().T - 0.5 * (K @ rho + rho @ K)
    return out


def coherent_term_quadrature(H: np.ndarray, beta: float, P: np.ndarray) -> np.ndarray:
    """Real-time filtered average computed with scipy quad_vec and matrix exponentials."""
    from scipy.integrate import quad_vec

    sigma = gibbs_expm(H, beta)
    s_half = hermitian_power(sigma, 0.5)
    s_mhalf = hermitian_power(sigma, -0.5)
    Pm = P @ s_half @ P
    M = (Pm @ s_mhalf - s_mhalf @ Pm) / 2j
    w, V = np.linalg.eigh(H)

    def integrand(om):
        U = (V * np.exp(1j * w * om)) @ V.conj().T
        return (U @ M @ U.conj().T) / (beta * np.cosh(2 * np.pi * om / beta))

    val, _ = quad_vec(integrand, -12 * beta, 12 * beta, epsabs=1e-13, epsrel=1e-12)
    return val


def ball_size_grid_interior(r: int) -> int:
    """Sites within term distance r of an interior grid site with nearest-neighbour bonds."""
    return 2 * r * r + 2 * r + 1


def brute_force_clusters(supports, root, k: int) -> int:
    """Number of length-k term sequences where each term meets the union of the root and earlier terms."""
    m = len(supports)
    count = 0
    for seq in itertools.product(range(m), repeat=k):
        reach = set(root)
        ok = True
        for a in seq:
            if not reach & set(supports[a]):
                ok = False
                break
            reach |= set(supports[a])
        count += ok
    return count


def dual_norm_sdp(A: np.ndarray) -> float:
    """2 max_i min_B ||A - I_i (x) B|| with each inner minimum solved as an SDP."""
    import cvxpy as cp

    d = A.shape[0]
    n = int(round(math.log2(d)))
    A = (A + A.conj().T) / 2
    worst = 0.0
    for i in range(n):
        B = cp.Variable((d // 2, d // 2), hermitian=True)
        t = cp.Variable()
        # I_i (x) B with site i moved to the front, then permuted back
        perm = [i] + [s for s in range(n) if s != i]
        P = np.zeros((d, d))
        for a in range(d):
            bits = [(a >> (n - 1 - s)) & 1 for s in range(n)]
            moved = [bits[s] for s in perm]
            P[int("".join(map(str, moved)), 2), a] = 1
        IB = P.T @ cp.kron(np.eye(2), B) @ P
        M = A - IB
        prob = cp.Problem(cp.Minimize(t), [M << t * np.eye(d), M >> -t * np.eye(d)])
        prob.solve(solver=cp.CLARABEL)
        worst = max(worst, float(prob.value))
    return 2 * worst


def mp_gibbs_cmi(H: np.ndarray, beta: float, A, B, C, dps: int = 80) -> float:
    """I(A:C|B) of exp(-beta H)/Z with mpmath matrices at ``dps`` digits."""
    import mpmath as mp

    n = int(round(math.log2(H.shape[0])))
    with mp.workdps(dps):
        Hm = mp.matrix(H.real.tolist()) if np.allclose(H.imag, 0) else mp.matrix(H.tolist())
        E = mp.expm(-mp.mpf(beta) * Hm)
        Z = sum(E[i, i] for i in range(E.rows))
        rho = E / Z
        d = rho.rows

        def marginal(keep):
            keep = sorted(keep)
            dk = 2 ** len(keep)
            out = mp.zeros(dk, dk)
            for a in range(d):
                ba = [(a >> (n - 1 - s)) & 1 for s in range(n)]
                for b in range(d):
                    bb = [(b >> (n - 1 - s)) & 1 for s in range(n)]
                    if any(ba[s] != bb[s] for s in range(n) if s not in keep):
                        continue
                    ia = int("".join(str(ba[s]) for s in keep), 2) if keep else 0
                    ib = int("".join(str(bb[s]) for s in keep), 2) if keep else 0
                    out[ia, ib] += rho[a, b]
            return out

        def S(keep):
            if not keep:
                return mp.mpf(0)
            M = marginal(keep)
            w = mp.eighe(M, eigvals_only=True)
            return -sum(x * mp.log(x) for x in w if x > 0)

        val = S(list(A) + list(B)) + S(list(B) + list(C)) - S(list(B)) - S(list(A) + list(B) + list(C))
        return float(val)
