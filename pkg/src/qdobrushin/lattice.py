"""Interaction hypergraphs of local qubit Hamiltonians.

Distances count terms: two sites sharing a term are at distance 1. Balls,
growth parameters and cluster enumeration are all built on that metric.
Sites are 0-indexed.
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .qop import PAULI, embed, op_norm, pauli_string

NORM_SLACK = 1e-9
DEFAULT_CLUSTER_CAP = 10 ** 7


class ClusterCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Term:
    support: tuple[int, ...]
    matrix: np.ndarray  # acts on ``support`` in the listed order

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "support", tuple(int(s) for s in self.support))


@dataclass(frozen=True)
class HamiltonianSpec:
    """Sum of local terms with operator norm at most one, at inverse temperature ``beta``."""

    n: int
    terms: tuple[Term, ...]
    beta: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("a Hamiltonian needs at least one term")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        for t in self.terms:
            if not t.support or len(set(t.support)) != len(t.support):
                raise ValueError(f"bad support {t.support}")
            if min(t.support) < 0 or max(t.support) >= self.n:
                raise ValueError(f"support {t.support} outside [0, {self.n})")
            k = len(t.support)
            if t.matrix.shape != (2 ** k, 2 ** k):
                raise ValueError(f"term on {t.support} has shape {t.matrix.shape}")
            if np.abs(t.matrix - t.matrix.conj().T).max() > 1e-12:
                raise ValueError(f"term on {t.support} is not Hermitian")
            if op_norm(t.matrix) > 1 + NORM_SLACK:
                raise ValueError(f"term on {t.support} has operator norm > 1")

    @property
    def supports(self) -> list[frozenset]:
        return [frozenset(t.support) for t in self.terms]

    def with_beta(self, beta: float) -> "HamiltonianSpec":
        return HamiltonianSpec(self.n, self.terms, beta, self.name)

    def term_matrices(self) -> list[np.ndarray]:
        return [embed(t.matrix, list(t.support), self.n) for t in self.terms]

    def dense(self, subset: Iterable[int] | None = None) -> np.ndarray:
        """Full-register matrix of H, or of the terms indexed by ``subset``."""
        idx = range(len(self.terms)) if subset is None else subset
        H = np.zeros((2 ** self.n, 2 ** self.n), dtype=complex)
        for a in idx:
            t = self.terms[a]
            H += embed(t.matrix, list(t.support), self.n)
        return H

    def restricted_terms(self, region: Iterable[int]) -> list[int]:
        """Indices of terms whose support lies inside ``region``."""
        region = set(region)
        return [a for a, t in enumerate(self.terms) if set(t.support) <= region]

    def restricted(self, region: Iterable[int]) -> "HamiltonianSpec | None":
        idx = self.restricted_terms(region)
        if not idx:
            return None
        return HamiltonianSpec(self.n, tuple(self.terms[a] for a in idx), self.beta, self.name + "|restricted")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "beta": self.beta,
            "terms": [{"support": list(t.support),
                       "real": (np.round(t.matrix.real, 15) + 0.0).tolist(),
                       "imag": (np.round(t.matrix.imag, 15) + 0.0).tolist()} for t in self.terms],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HamiltonianSpec":
        terms = []
        for t in obj["terms"]:
            if "pauli" in t:
                m = float(t.get("coeff", 1.0)) * pauli_string(t["pauli"])
            else:
                m = np.array(t["real"], dtype=float) + 1j * np.array(t.get("imag", np.zeros_like(t["real"])), dtype=float)
            terms.append(Term(tuple(t["support"]), m))
        return cls(int(obj["n"]), tuple(terms), float(obj.get("beta", 0.0)), obj.get("name", "custom"))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# graph
# ---------------------------------------------------------------------------

@dataclass
class InteractionGraph:
    spec: HamiltonianSpec
    site_terms: list[list[int]] = field(init=False)
    term_adj: list[list[int]] = field(init=False)
    dist: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.spec.n
        supports = self.spec.supports
        self.site_terms = [[] for _ in range(n)]
        for a, S in enumerate(supports):
            for s in S:
                self.site_terms[s].append(a)
        m = len(supports)
        self.term_adj = [sorted({b for s in supports[a] for b in self.site_terms[s]} - {a}) for a in range(m)]
        nbrs = [sorted({u for a in self.site_terms[s] for u in supports[a]} - {s}) for s in range(n)]
        self.site_adj = nbrs
        self.dist = _bfs_all(nbrs)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def supports(self) -> list[frozenset]:
        return self.spec.supports

    @property
    def diameter(self) -> int:
        finite = self.dist[np.isfinite(self.dist)]
        return int(finite.max()) if finite.size else 0

    def dist_to_set(self, S: Iterable[int]) -> np.ndarray:
        S = list(S)
        return self.dist[S].min(axis=0)

    def set_distance(self, S: Iterable[int], T: Iterable[int]) -> float:
        return float(self.dist_to_set(S)[list(T)].min())

    def ball(self, S: Iterable[int] | int, r: float) -> frozenset:
        if isinstance(S, (int, np.integer)):
            S = [int(S)]
        d = self.dist_to_set(S)
        return frozenset(int(i) for i in np.flatnonzero(d <= r + 1e-12))

    def terms_touching(self, S: Iterable[int]) -> set[int]:
        return {a for s in S for a in self.site_terms[s]}


def _bfs_all(nbrs: list[list[int]]) -> np.ndarray:
    n = len(nbrs)
    D = np.full((n, n), np.inf)
    for src in range(n):
        D[src, src] = 0
        q = deque([src])
        while q:
            u = q.popleft()
            for v in nbrs[u]:
                if D[src, v] == np.inf:
                    D[src, v] = D[src, u] + 1
                    q.append(v)
    return D


def build_graph(spec: HamiltonianSpec) -> InteractionGraph:
    return InteractionGraph(spec)


@dataclass(frozen=True)
class GraphParams:
    locality: int
    degree: int  # dual-graph degree, floored at 2
    growth: float
    power: float
    raw_degree: int

    def as_dict(self) -> dict:
        return {"locality": self.locality, "degree": self.degree, "growth": self.growth,
                "power": self.power, "raw_degree": self.raw_degree}


def ball_sizes(graph: InteractionGraph) -> np.ndarray:
    """Array [i, r] = |ball(i, r)| for r = 0..diameter."""
    R = graph.diameter
    D = graph.dist
    return np.stack([(D <= r).sum(axis=1) for r in range(R + 1)], axis=1)


def measure_params(graph: InteractionGraph) -> GraphParams:
    """Locality, dual-graph degree and the tightest growth parameters g and p."""
    ell = max(len(S) for S in graph.supports)
    raw_d = max((len(adj) for adj in graph.term_adj), default=0)
    sizes = ball_sizes(graph).astype(float)
    g, p = 1.0, 1.0
    if sizes.shape[1] > 1:
        r = np.arange(1, sizes.shape[1], dtype=float)
        logs = np.log(sizes[:, 1:])
        g = max(1.0, float(np.exp((logs / r).max())))
        p = max(1.0, float((logs / np.log1p(r)).max()))
    return GraphParams(ell, max(2, raw_d), g, p, raw_d)


# ---------------------------------------------------------------------------
# clusters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cluster:
    seq: tuple[int, ...]
    support: frozenset

    @property
    def k(self) -> int:
        return len(self.seq)


def is_cluster_from(graph: InteractionGraph, seq: Sequence[int], root: Iterable[int]) -> bool:
    reach = set(root)
    for a in seq:
        S = graph.supports[a]
        if not (S & reach):
            return False
        reach |= S
    return True


def is_connected_cluster(graph: InteractionGraph, seq: Sequence[int]) -> bool:
    return bool(seq) and is_cluster_from(graph, seq[1:], graph.supports[seq[0]])


def enumerate_clusters(graph: InteractionGraph, k_max: int, *, sites: Iterable[int] | None = None,
                       term: int | None = None, cap: int = DEFAULT_CLUSTER_CAP,
                       unordered: bool = False) -> list[Cluster]:
    """All ordered clusters of length 1..k_max from a root site set or a root term's support.

    With ``unordered`` the result keeps one representative per multiset.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if (sites is None) == (term is None):
        raise ValueError("give exactly one of sites or term")
    root = frozenset(graph.supports[term]) if term is not None else frozenset(sites)
    out: list[Cluster] = []
    seen: set = set()

    def dfs(seq: list[int], support: frozenset):
        for a in sorted(graph.terms_touching(root | support)):
            new_seq = seq + [a]
            new_sup = support | graph.supports[a]
            if unordered:
                key = tuple(sorted(new_seq))
                if key not in seen:
                    seen.add(key)
                    out.append(Cluster(tuple(new_seq), new_sup))
            else:
                out.append(Cluster(tuple(new_seq), new_sup))
            if len(out) > cap:
                raise ClusterCapExceeded(f"more than {cap} clusters")
            if len(new_seq) < k_max:
                dfs(new_seq, new_sup)

    dfs([], frozenset())
    return out


def cluster_support_counts(graph: InteractionGraph, root: Iterable[int], k_max: int,
                           cap: int = DEFAULT_CLUSTER_CAP) -> list[dict[frozenset, int]]:
    """Number of ordered clusters from ``root`` of each length, grouped by support.

    Element k-1 maps a support set S to the number of length-k clusters with
    union S. Dynamic programming over supports; this avoids materializing the
    ordered sequences, which grow like k!(d+1)^k.
    """
    root = frozenset(root)
    layer: dict[frozenset, int] = {frozenset(): 1}
    out = []
    total = 0
    for _ in range(k_max):
        nxt: dict[frozenset, int] = {}
        for S, c in layer.items():
            for a in graph.terms_touching(root | S):
                T = S | graph.supports[a]
                nxt[T] = nxt.get(T, 0) + c
        total += len(nxt)
        if total > cap:
            raise ClusterCapExceeded(f"more than {cap} cluster supports")
        out.append(nxt)
        layer = nxt
    return out


def connected_clusters_containing(graph: InteractionGraph, a: int, size: int) -> int:
    """Count ordered connected clusters of length ``size`` that contain term ``a``."""
    # every such cluster lies within ``size - 1`` dual-graph steps of a
    near = {a}
    frontier = {a}
    for _ in range(size - 1):
        frontier = {b for t in frontier for b in graph.term_adj[t]} - near
        near |= frontier
    count = 0
    for first in sorted(near):
        for seq in _connected_from(graph, first, size):
            if a in seq:
                count += 1
    return count


def _connected_from(graph: InteractionGraph, first: int, size: int):
    def rec(seq, support):
        if len(seq) == size:
            yield tuple(seq)
            return
        for b in sorted(graph.terms_touching(support)):
            yield from rec(seq + [b], support | graph.supports[b])

    yield from rec([first], graph.supports[first])


def check_series_bounds(graph: InteractionGraph, beta: float, k_max: int = 4) -> dict:
    """Evaluate the cluster-series bounds by enumeration and compare to closed forms.

    Three checks:
      * bounded-support Hadamard series from each term's support,
        sum_k sum_clusters (2 beta)^k / k!  <=  1/(1 - 2 beta (d+1));
      * connected cluster counts containing a term, <= e^2 (e d)^(k-1) k!;
      * distance-weighted sums over connected clusters of each size around
        each site, weight (2g)^-max(0, dist-1), <= 3 e^2 g (e d)^(k-1) k!.
    """
    params = measure_params(graph)
    d, g = params.degree, params.growth
    if not beta < 1 / (2 * (d + 1)):
        raise ValueError("requires beta < 1/(2(d+1))")
    report = {"params": params.as_dict(), "beta": beta, "k_max": k_max, "checks": [], "violations": []}

    rhs = 1.0 / (1.0 - 2 * beta * (d + 1))
    m = len(graph.supports)
    for a in range(m):
        counts = cluster_support_counts(graph, graph.supports[a], k_max)
        lhs = 1.0 + sum(sum(layer.values()) * (2 * beta) ** k / math.factorial(k)
                        for k, layer in enumerate(counts, start=1))
        report["checks"].append(("hadamard", a, lhs, rhs))
        if lhs > rhs:
            report["violations"].append(("hadamard", a, lhs, rhs))
        for k, layer in enumerate(counts, start=1):
            bound = math.factorial(k) * (d + 1) ** k
            if sum(layer.values()) > bound:
                report["violations"].append(("root-count", a, k, sum(layer.values()), bound))

    for k in range(1, min(k_max, 4) + 1):
        bound = math.e ** 2 * (math.e * d) ** (k - 1) * math.factorial(k)
        for a in range(m):
            c = connected_clusters_containing(graph, a, k)
            report["checks"].append(("num-clusters", a, k, c, bound))
            if c > bound:
                report["violations"].append(("num-clusters", a, k, c, bound))

    # all connected clusters of size k, grouped by support, then weighted by distance
    for k in range(1, min(k_max, 3) + 1):
        supports: dict[frozenset, int] = {}
        for first in range(m):
            for seq in _connected_from(graph, first, k):
                S = frozenset().union(*(graph.supports[b] for b in seq))
                supports[S] = supports.get(S, 0) + 1
        bound = 3 * math.e ** 2 * g * (math.e * d) ** (k - 1) * math.factorial(k)
        for i in range(graph.n):
            total = 0.0
            for S, c in supports.items():
                dist = graph.set_distance(S, [i])
                total += c * (2 * g) ** (-max(0.0, dist - 1))
            report["checks"].append(("quasi", i, k, total, bound))
            if total > bound:
                report["violations"].append(("quasi", i, k, total, bound))
    report["passed"] = not report["violations"]
    return report


# ---------------------------------------------------------------------------
# model generators
# ---------------------------------------------------------------------------

def _random_term(k: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    d = 2 ** k
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    M = (G + G.conj().T) / 2
    return scale * M / op_norm(M)


def chain(n: int, beta: float = 0.0, *, periodic: bool = False, seed: int | None = None,
          coupling: np.ndarray | str | None = None) -> HamiltonianSpec:
    """Nearest-neighbour 2-local chain.

    ``coupling`` is a 4x4 matrix or Pauli label pair like ``"ZZ"`` applied on
    every bond; default is an independent random Hermitian block per bond
    (seeded) with operator norm drawn from [0.5, 1].
    """
    rng = np.random.default_rng(seed)
    bonds = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 2:
        bonds.append((n - 1, 0))
    terms = []
    for b in bonds:
        if coupling is None:
            m = _random_term(2, rng, rng.uniform(0.5, 1.0))
        elif isinstance(coupling, str):
            m = pauli_string(coupling)
        else:
            m = np.asarray(coupling, dtype=complex)
        terms.append(Term(b, m))
    return HamiltonianSpec(n, tuple(terms), beta, "ring" if periodic else "chain")


def ring(n: int, beta: float = 0.0, *, seed: int | None = None, coupling=None) -> HamiltonianSpec:
    return chain(n, beta, periodic=True, seed=seed, coupling=coupling)


def grid(Lx: int, Ly: int, beta: float = 0.0, *, seed: int | None = None,
         coupling: np.ndarray | str | None = "ZZ") -> HamiltonianSpec:
    """Nearest-neighbour 2-local terms on an open Lx x Ly grid; site (x, y) -> x*Ly + y."""
    rng = np.random.default_rng(seed)
    terms = []
    for x in range(Lx):
        for y in range(Ly):
            s = x * Ly + y
            for nb in ((x + 1, y), (x, y + 1)):
                if nb[0] < Lx and nb[1] < Ly:
                    t = nb[0] * Ly + nb[1]
                    if coupling is None:
                        m = _random_term(2, rng, rng.uniform(0.5, 1.0))
                    elif isinstance(coupling, str):
                        m = pauli_string(coupling)
                    else:
                        m = np.asarray(coupling, dtype=complex)
                    terms.append(Term((s, t), m))
    return HamiltonianSpec(Lx * Ly, tuple(terms), beta, "grid")


def tfim(n: int, beta: float = 0.0, *, J: float | Sequence[float] = 1.0,
         h: float | Sequence[float] = 1.0, periodic: bool = False) -> HamiltonianSpec:
    """Transverse-field Ising chain: bonds J Z Z, fields h X as separate 1-local terms."""
    Js = np.broadcast_to(np.asarray(J, dtype=float), (n,))
    hs = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    ZZ = pauli_string("ZZ")
    terms = [Term((i, i + 1), Js[i] * ZZ) for i in range(n - 1)]
    if periodic and n > 2:
        terms.append(Term((n - 1, 0), Js[n - 1] * ZZ))
    terms += [Term((i,), hs[i] * PAULI["X"]) for i in range(n)]
    return HamiltonianSpec(n, tuple(terms), beta, "tfim")


def heisenberg(n: int, beta: float = 0.0, *, J: float = 1.0, periodic: bool = False) -> HamiltonianSpec:
    """Heisenberg chain with bond (XX+YY+ZZ)/3, normalized to operator norm |J|."""
    bond = J * (pauli_string("XX") + pauli_string("YY") + pauli_string("ZZ")) / 3
    bonds = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 2:
        bonds.append((n - 1, 0))
    return HamiltonianSpec(n, tuple(Term(b, bond) for b in bonds), beta, "heisenberg")


GENERATORS = {"chain": chain, "ring": ring, "grid": grid, "tfim": tfim, "heisenberg": heisenberg}


def make_model(name: str, **params) -> HamiltonianSpec:
    if name not in GENERATORS:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[name](**params)
