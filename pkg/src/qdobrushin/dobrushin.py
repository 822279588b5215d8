"""Quantum Dobrushin influence estimates and the mixing criterion.

For a site update Phi_i and a site j the influence is the largest W1 growth
of Phi_i on operators X with tr_j X = 0 and W1(X) = 1 (j-edges). Two routes:

* heuristic-lower: seeded search over product j-edges, each scored by the
  certified W1 lower bracket of Phi_i(X), so every reported value is a true
  lower bound on the influence;
* analytic-upper: the cluster-expansion update matrices,
  ||(I + delta Q^(i)) e_j||_1 for the step I + delta L_i.

For the averaged channel (1/n) sum_i Phi_i the Dobrushin matrix is the
per-update influence divided by n; the condition is certified only through
the analytic route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.linalg import expm_multiply

from .costdyn import UpdateMatrix
from .qop import embed, num_qubits, random_density_matrix, trace_norm
from .wasserstein import w1


class DobrushinUnverified(RuntimeError):
    pass


@dataclass
class InfluenceMatrix:
    """Per-update influence brackets g[i, j]; the Dobrushin matrix is g / n."""

    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    witnesses: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return (self.upper if self.upper is not None else self.lower).shape[0]

    def D(self, which: str = "upper") -> np.ndarray:
        M = self.upper if which == "upper" else self.lower
        return M / self.n

    def column_sums(self, which: str = "upper") -> np.ndarray:
        return self.D(which).sum(axis=0)

    def one_norm(self, which: str = "upper") -> float:
        return float(self.column_sums(which).max())

    def margin(self) -> float:
        """gamma with ||D||_{1->1} = 1 - gamma / n (negative when the condition fails)."""
        return self.n * (1 - self.one_norm("upper"))

    def consistent(self, tol: float = 1e-6) -> bool:
        if self.lower is None or self.upper is None:
            return True
        mask = np.isfinite(self.lower)
        return bool((self.lower[mask] <= self.upper[mask] + tol).all())

    def rows(self):
        n = self.n
        for i in range(n):
            for j in range(n):
                if self.lower is not None and np.isfinite(self.lower[i, j]):
                    yield (i, j, float(self.lower[i, j]), "heuristic-lower")
                if self.upper is not None:
                    yield (i, j, float(self.upper[i, j]), "analytic-upper")


def _pure(rng, dim=2):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def j_edge(rest_state: np.ndarray, a: np.ndarray, b: np.ndarray, j: int, n: int) -> np.ndarray:
    """rest_state (x) a_j - rest_state (x) b_j, normalized so W1 = 1/2 ||X||_1 = 1."""
    rest = [s for s in range(n) if s != j]
    diff = a - b
    X = embed(np.kron(diff, rest_state), [j] + rest, n)
    return X / (0.5 * trace_norm(X))


def influence_lower(channel: Callable[[np.ndarray], np.ndarray], n: int, j: int, restarts: int = 64,
                    refine: int = 8, seed: int = 0, w1_kw: dict | None = None) -> tuple[float, np.ndarray]:
    """Best certified W1 lower bracket of channel(X) over seeded j-edges X.

    Candidates are product j-edges with random pure site-j states and a random
    state elsewhere; the best one is refined by random perturbation (accept if
    better). Returns (value, witness X).
    """
    rng = np.random.default_rng(seed)
    w1_kw = {"gap_tol": 1e-7, "tol": 1e-9} if w1_kw is None else w1_kw

    def score(X):
        Y = channel(X)
        return w1((Y + Y.conj().T) / 2, **w1_kw).lower

    best, best_X, best_parts = -np.inf, None, None
    for _ in range(restarts):
        a, b = _pure(rng), _pure(rng)
        rest = random_density_matrix(n - 1, rng) if n > 1 else np.ones((1, 1))
        if n > 1 and rng.random() < 0.5:
            rest = random_density_matrix(n - 1, rng, rank=1)
        X = j_edge(rest, a, b, j, n)
        val = score(X)
        if val > best:
            best, best_X, best_parts = val, X, (rest, a, b)
    rest, a, b = best_parts
    scale = 0.3
    for _ in range(refine):
        a2 = a + scale * (_pure(rng) - a)
        b2 = b + scale * (_pure(rng) - b)
        rest2 = rest
        if n > 1:
            rest2 = (1 - scale) * rest + scale * random_density_matrix(n - 1, rng, rank=1)
        if trace_norm(a2 - b2) < 1e-8:
            continue
        X = j_edge(rest2, a2, b2, j, n)
        val = score(X)
        if val > best:
            best, best_X, (rest, a, b) = val, X, (rest2, a2, b2)
        else:
            scale *= 0.7
    return float(best), best_X


def influence_upper(Qs: Sequence[UpdateMatrix], delta: float) -> InfluenceMatrix:
    """g[i, j] = ||(I + delta Q^(i)) e_j||_1 from the update matrices."""
    n = Qs[0].n
    U = np.zeros((n, n))
    for i, Q in enumerate(Qs):
        for j in range(n):
            col = delta * Q.column(j)
            col[j] += 1.0
            U[i, j] = np.abs(col).sum()
    return InfluenceMatrix(upper=U)


def discrete_influence_upper(Qs: Sequence[UpdateMatrix], Delta: float) -> InfluenceMatrix:
    """g[i, j] = ||e^{Delta Q^(i)} e_j||_1 for the channel e^{Delta L_i}."""
    n = Qs[0].n
    U = np.zeros((n, n))
    for i, Q in enumerate(Qs):
        M = Q.to_sparse()
        E = expm_multiply(M * Delta, np.eye(n))
        U[i] = np.abs(E).sum(axis=0)
    return InfluenceMatrix(upper=U)


def dobrushin_test(infl: InfluenceMatrix, gamma: float) -> dict:
    cols = infl.column_sums("upper")
    n = infl.n
    target = 1 - gamma / n
    return {"column_sums": cols, "max_column": float(cols.max()), "target": target,
            "margin": float(n * (1 - cols.max())), "passed": bool(cols.max() <= target)}


def tau_bound(n: int, gamma: float, eps: float) -> int:
    """Steps (n / gamma) log(n / eps), rounded up; zero when eps >= n."""
    if eps >= n:
        return 0
    return math.ceil(n / gamma * math.log(n / eps))


def mixing_bound(infl: InfluenceMatrix, gamma: float, eps: float) -> int:
    """Step count after which the Dobrushin lemma guarantees W1 error eps, if certified."""
    test = dobrushin_test(infl, gamma)
    if not test["passed"]:
        raise DobrushinUnverified(
            f"column sum {test['max_column']:.6g} exceeds 1 - gamma/n = {test['target']:.6g}")
    return tau_bound(infl.n, gamma, eps)


def contraction_check(step: Callable[[np.ndarray], np.ndarray], norm_D: float, n: int, tau: int,
                      trials: int = 20, seed: int = 0, w1_kw: dict | None = None) -> dict:
    """W1-upper(Phi^tau(rho - rho')) <= ||D||^tau * W1-lower(rho - rho') on random pairs."""
    rng = np.random.default_rng(seed)
    w1_kw = {} if w1_kw is None else w1_kw
    rows = []
    for k in range(trials):
        r1, r2 = random_density_matrix(n, rng), random_density_matrix(n, rng)
        X = r1 - r2
        lo = w1(X, **w1_kw).lower
        Y = X
        for _ in range(tau):
            Y = step(Y)
        Y = (Y + Y.conj().T) / 2
        up = w1(Y, **w1_kw).upper
        rhs = norm_D ** tau * lo
        rows.append({"trial": k, "w1_after_upper": up, "bound": rhs, "passed": up <= rhs + 1e-9})
    return {"rows": rows, "passed": all(r["passed"] for r in rows), "seed": seed}
