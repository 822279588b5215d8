"""Classical cost-vector dynamics from the cluster expansion.

An update matrix M bounds how a channel moves transport costs: if X has cost
vector x then the image has a plan with cost at most M x entrywise. For the
balanced generator at site i the bound is I + delta Q^(i) with

    Q^(i) = -4 E_{i} + sum_k sum_{clusters a from i, |a|=k} sum_{r>=1}
            mu_{k,r} E_{ball(S_a, r)},
    mu_{k,r} = 22 l beta^k / (k-1)! * ((d+1) l beta)^(r-1),

where E_S = e_S e_S^T. Pieces are stored as (weight, index set) pairs and
expanded lazily, so large lattices cost O(sum |S|) memory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .lattice import InteractionGraph, cluster_support_counts, measure_params


@dataclass
class UpdateMatrix:
    """Nonnegative-off-diagonal n x n matrix sink * E_{site} + sum_p w_p E_{S_p}."""

    n: int
    site: int | None
    sink: float
    pieces: list[tuple[float, np.ndarray]] = field(default_factory=list)
    k_max: int = 0
    r_max: int = 0
    tail: float = 0.0
    label: str = "Q"

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros(self.n)
        if self.site is not None:
            y[self.site] += self.sink * x[self.site]
        for w, S in self.pieces:
            y[S] += w * x[S].sum()
        return y

    def column(self, j: int) -> np.ndarray:
        e = np.zeros(self.n)
        e[j] = 1.0
        return self.matvec(e)

    def hat_column_norms(self) -> np.ndarray:
        """||Qhat e_j||_1 for every j (sink excluded)."""
        out = np.zeros(self.n)
        for w, S in self.pieces:
            out[S] += w * len(S)
        return out

    def one_norm(self) -> float:
        """Induced 1-norm of the full matrix including the sink."""
        col = self.hat_column_norms()
        if self.site is not None:
            i = self.site
            diag_hat = sum(w for w, S in self.pieces if i in set(S.tolist()))
            col[i] = col[i] - diag_hat + abs(self.sink + diag_hat)
        return float(col.max())

    def to_sparse(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        if self.site is not None and self.sink != 0:
            rows.append([self.site]), cols.append([self.site]), vals.append([self.sink])
        for w, S in self.pieces:
            r, c = np.meshgrid(S, S, indexing="ij")
            rows.append(r.ravel()), cols.append(c.ravel()), vals.append(np.full(r.size, w))
        if not rows:
            return sp.csr_matrix((self.n, self.n))
        M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n, self.n))
        return M.tocsr()  # duplicates are summed

    def triplets(self) -> list[tuple[int, int, float]]:
        M = self.to_sparse().tocoo()
        return [(int(i), int(j), float(v)) for i, j, v in zip(M.row, M.col, M.data)]


def mu(k: int, r: int, locality: int, degree: int, beta: float) -> float:
    return 22 * locality * beta ** k / math.factorial(k - 1) * ((degree + 1) * locality * beta) ** (r - 1)


def build_Q(graph: InteractionGraph, beta: float, k_max: int = 5, r_max: int = 8,
            sites: Iterable[int] | None = None, split: bool = False, params=None) -> list:
    """Update matrices Q^(i) for the given sites (default all).

    With ``split`` each entry is a dict with the coherent piece
    10 l sum beta^k/(k-1)! ((d+1) l beta)^(r-1) E_{ball(S_a, r)}, the
    dissipative piece -4 E_i + 12 sum beta^k/k! E_{S_a}, and their sum
    as separate update matrices.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    params = measure_params(graph) if params is None else params
    ell, d, g = params.locality, params.degree, params.growth
    sites = range(graph.n) if sites is None else sites
    out = []
    q = (d + 1) * ell * beta
    for i in sites:
        counts = cluster_support_counts(graph, [i], k_max) if beta > 0 else []
        merged: dict[frozenset, float] = {}
        coh: dict[frozenset, float] = {}
        dis: dict[frozenset, float] = {}
        for k, layer in enumerate(counts, start=1):
            for S, c in layer.items():
                dS = graph.dist_to_set(S)
                if split:
                    dis[S] = dis.get(S, 0.0) + 12 * c * beta ** k / math.factorial(k)
                for r in range(1, r_max + 1):
                    B = frozenset(np.flatnonzero(dS <= r).tolist())
                    w = c * mu(k, r, ell, d, beta)
                    merged[B] = merged.get(B, 0.0) + w
                    if split:
                        coh[B] = coh.get(B, 0.0) + w * 10 / 22
        # geometric tails of the dropped orders, relative to the kept series
        tail = 0.0
        if beta > 0:
            tail = (q ** r_max / max(1 - q, 1e-300)) if q < 1 else math.inf
            tail += (math.e * d * beta) ** k_max
        Q = _pack(graph.n, i, -4.0, merged, k_max, r_max, tail, "Q")
        if split:
            out.append({"total": Q,
                        "coherent": _pack(graph.n, i, 0.0, coh, k_max, r_max, tail, "Qcoh"),
                        "dissipative": _pack(graph.n, i, -4.0, dis, k_max, 0, tail, "Qdis")})
        else:
            out.append(Q)
    return out


def _pack(n, i, sink, pieces, k_max, r_max, tail, label):
    items = [(w, np.array(sorted(S), dtype=int)) for S, w in pieces.items() if w > 0]
    items.sort(key=lambda p: (len(p[1]), p[1].tolist()))
    return UpdateMatrix(n, i, sink, items, k_max, r_max, tail, label)


def check_Q_contraction(Qs: Sequence[UpdateMatrix], params, beta: float) -> dict:
    """Column sums of the Qhat family against min(1, 2000 l^3 g^2 beta), and ||Q^(i)||_{1->1} <= 5."""
    n = Qs[0].n
    cols = np.zeros(n)
    for Q in Qs:
        cols += Q.hat_column_norms()
    ell, g, d = params.locality, params.growth, params.degree
    bound = min(1.0, 2000 * ell ** 3 * g ** 2 * beta)
    norms = np.array([Q.one_norm() for Q in Qs])
    j = int(np.argmax(cols))
    regime = beta <= 1 / (10000 * ell ** 3 * g ** 2 * d)
    return {"column_sums": cols, "max_column": float(cols[j]), "witness_column": j, "bound": bound,
            "one_norms": norms, "max_one_norm": float(norms.max()), "in_regime": regime,
            "passed": bool(cols[j] <= bound and norms.max() <= 5)}


def check_Q_quasilocal(Q: UpdateMatrix, graph: InteractionGraph, params, beta: float,
                       X: Sequence[int], Y: Sequence[int], x: np.ndarray | None = None,
                       y: np.ndarray | None = None) -> dict:
    """y^T Qhat x against 150 l (25 g l (d+1) beta)^max(1, D - 1), D = max distance from the site.

    Without explicit vectors the worst unit vectors on X and Y are used: the
    largest Qhat entry on the Y x X block.
    """
    ell, g, d = params.locality, params.growth, params.degree
    i = Q.site
    Qhat = Q.to_sparse().tolil()
    Qhat[i, i] = Qhat[i, i] - Q.sink
    Qhat = Qhat.tocsr()
    if x is None or y is None:
        block = Qhat[np.ix_(list(Y), list(X))].toarray()
        value = float(block.max())
    else:
        value = float(y @ (Qhat @ x))
    D = max(graph.dist[i, list(X)].min(), graph.dist[i, list(Y)].min())
    bound = 150 * ell * (25 * g * ell * (d + 1) * beta) ** max(1.0, D - 1)
    return {"value": value, "bound": float(bound), "distance": float(D),
            "in_regime": beta <= 1 / (100 * g * ell * (d + 1)), "passed": value <= bound}


# ---------------------------------------------------------------------------
# CMI contraction kernel
# ---------------------------------------------------------------------------

def build_R(graph: InteractionGraph, c: float, active: Iterable[int]) -> sp.csr_matrix:
    """sum over active i of R^(i) = -E_{i} + 1/4 r r^T with r_j = c^dist(i, j)."""
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    n = graph.n
    active = sorted(set(active))
    with np.errstate(under="ignore"):
        rvecs = c ** graph.dist[active]  # (|active|, n), underflows to exact zeros far away
    rvecs[~np.isfinite(graph.dist[active])] = 0.0
    M = 0.25 * rvecs.T @ rvecs
    M[active, active] -= 1.0
    M[np.abs(M) < 1e-300] = 0.0
    return sp.csr_matrix(M)


def r_vectors(graph: InteractionGraph, c: float) -> np.ndarray:
    with np.errstate(under="ignore"):
        R = c ** graph.dist
    R[~np.isfinite(graph.dist)] = 0.0
    return R


def propagate(M, x0: np.ndarray, t: float | Sequence[float]) -> np.ndarray:
    """e^{Mt} x0 by Krylov-free truncated Taylor (scipy expm_multiply) on a sparse M."""
    x0 = np.asarray(x0, dtype=float)
    if (x0 < 0).any():
        raise ValueError("cost vectors are nonnegative")
    if isinstance(M, UpdateMatrix):
        M = M.to_sparse()
    M = sp.csr_matrix(M)
    if np.isscalar(t):
        return x0.copy() if t == 0 else expm_multiply(M * t, x0)
    return np.stack([x0.copy() if s == 0 else expm_multiply(M * s, x0) for s in t])


def check_cmi_contraction(graph: InteractionGraph, C: Sequence[int], deltas: Sequence[float], c: float,
                          t_grid: Sequence[float], kappa: float = 1.0, params=None) -> dict:
    """||e^{t sum_{i in ball(C, Delta)} R^(i)} e_C||_1 <= e^{-t/2}|C| + e^{2t} 10^{-Delta} on a grid."""
    params = measure_params(graph) if params is None else params
    p = params.power
    e_C = np.zeros(graph.n)
    e_C[list(C)] = 1.0
    rows = []
    for Delta in deltas:
        M = build_R(graph, c, graph.ball(C, Delta))
        for t in t_grid:
            lhs = float(propagate(M, e_C, t).sum())
            rhs = math.exp(-t / 2) * len(C) + math.exp(2 * t) * 10.0 ** (-Delta)
            rows.append({"t": t, "Delta": Delta, "lhs": lhs, "rhs": rhs, "passed": lhs <= rhs})
    return {"rows": rows, "passed": all(r["passed"] for r in rows), "c": c, "kappa": kappa,
            "precondition": c < 1 / (kappa * math.exp(8 * p)), "power": p}


def path_sum(graph: InteractionGraph, c: float, steps: int, start: int, end: int) -> float:
    """Brute-force sum over middle points i_1..i_{steps-1} of c^(sum of consecutive distances)."""
    with np.errstate(under="ignore"):
        W = c ** graph.dist
    W[~np.isfinite(graph.dist)] = 0.0
    if steps == 1:
        return float(W[start, end])
    n = graph.n
    total = 0.0
    for mids in np.ndindex(*(n,) * (steps - 1)):
        path = (start,) + mids + (end,)
        term = 1.0
        for a, b in zip(path[:-1], path[1:]):
            term *= W[a, b]
            if term == 0.0:
                break
        total += term
    return total


def path_sum_vectorized(graph: InteractionGraph, c: float, steps: int, start: int, end: int) -> float:
    """Same sum with the middle points enumerated by array broadcasting (steps <= 4)."""
    with np.errstate(under="ignore"):
        W = c ** graph.dist
    W[~np.isfinite(graph.dist)] = 0.0
    if steps == 1:
        return float(W[start, end])
    if steps == 2:
        return float((W[start, :] * W[:, end]).sum())
    if steps == 3:
        return float((W[start, :, None] * W * W[None, :, end]).sum())
    if steps == 4:
        return float(np.einsum("a,ab,bc,c->", W[start], W, W, W[:, end]))
    raise ValueError("exact enumeration supports at most 4 steps")


def check_path_sum(graph: InteractionGraph, c: float, steps_list: Sequence[int], endpoints: Iterable[tuple[int, int]],
                   params=None) -> dict:
    """Path sums against 1.1^l (e^p sqrt c)^dist and 1.1^l / 25^dist."""
    params = measure_params(graph) if params is None else params
    p = params.power
    base = math.exp(p) * math.sqrt(c)
    rows = []
    for steps in steps_list:
        for a, b in endpoints:
            dist = graph.dist[a, b]
            value = path_sum_vectorized(graph, c, steps, a, b)
            mid = 1.1 ** steps * base ** dist
            outer = 1.1 ** steps / 25.0 ** dist
            rows.append({"steps": steps, "start": a, "end": b, "dist": float(dist), "value": value,
                         "bound": mid, "bound25": outer, "passed": value <= mid and value <= outer})
    return {"rows": rows, "passed": all(r["passed"] for r in rows),
            "precondition": c < math.exp(-2 * p) / 1000, "power": p}


def check_inner_products(graph: InteractionGraph, c: float, params=None) -> dict:
    """r^(i) . r^(j) against 1.1 (e^p sqrt c)^dist(i, j) for all pairs."""
    params = measure_params(graph) if params is None else params
    R = r_vectors(graph, c)
    G = R @ R.T
    with np.errstate(under="ignore"):
        bound = 1.1 * (math.exp(params.power) * math.sqrt(c)) ** graph.dist
    ok = G <= bound * (1 + 1e-12)
    return {"max_ratio": float((G / np.maximum(bound, 1e-300)).max()), "passed": bool(ok.all())}
