"""Gibbs states and the balanced Lindbladian.

For every site j and Pauli P in {X, Y, Z} at j the generator has a jump
A^P = s^{1/4} P s^{-1/4} (s the Gibbs state) and a Hermitian coherent term
G^P chosen so that s is stationary and the dynamics is KMS-balanced:

    L^P(rho) = -i[G^P, rho] + A^P rho A^P^dag - 1/2 {A^P^dag A^P, rho}.

All matrix functions of s are evaluated in the energy eigenbasis, where they
reduce to elementwise factors of eigenvalue gaps. That keeps the jump
operators accurate even when s has a large dynamic range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .lattice import HamiltonianSpec, InteractionGraph, build_graph, measure_params
from .qop import (PAULI, Superoperator, anticommutator, commutator, left_right, op_norm,
                  pauli, support_defect, trace_norm)

JUMP_LABELS = ("X", "Y", "Z")
DEGENERACY_TOL = 1e-14
OVERFLOW_LIMIT = 700.0  # exp argument beyond which double precision overflows


@dataclass
class GibbsState:
    """Normalized ``exp(-beta H)`` with its eigendecomposition cached."""

    beta: float
    energies: np.ndarray
    vectors: np.ndarray
    spec: HamiltonianSpec | None = None

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def n(self) -> int:
        return int(round(math.log2(self.dim)))

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(-self.beta * (self.energies - self.energies.min()))
        return w / w.sum()

    @property
    def sigma(self) -> np.ndarray:
        return self.power(1.0)

    def power(self, alpha: float) -> np.ndarray:
        w = self.weights
        return (self.vectors * w ** alpha) @ self.vectors.conj().T

    def to_eigen(self, X: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ X @ self.vectors

    def from_eigen(self, X: np.ndarray) -> np.ndarray:
        return self.vectors @ X @ self.vectors.conj().T

    def gap_matrix(self) -> np.ndarray:
        """Entry [a, b] = E_a - E_b."""
        return self.energies[:, None] - self.energies[None, :]


def gibbs(spec: HamiltonianSpec, beta: float | None = None, H: np.ndarray | None = None) -> GibbsState:
    beta = spec.beta if beta is None else beta
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    H = spec.dense() if H is None else H
    E, V = np.linalg.eigh(H)
    spread = beta * (E.max() - E.min())
    if spread > OVERFLOW_LIMIT:
        raise OverflowError(f"beta * spectral width = {spread:.1f} is too large for a faithful Gibbs state")
    return GibbsState(beta, E, V, spec)


def maximally_mixed_gibbs(n: int) -> GibbsState:
    return GibbsState(0.0, np.zeros(2 ** n), np.eye(2 ** n, dtype=complex), None)


# ---------------------------------------------------------------------------
# jump operators and coherent terms
# ---------------------------------------------------------------------------

def jump_operator(g: GibbsState, P: np.ndarray) -> np.ndarray:
    """``s^{1/4} P s^{-1/4}`` via the eigenbasis factor exp(-beta (E_a - E_b)/4)."""
    Pe = g.to_eigen(P)
    return g.from_eigen(Pe * np.exp(-g.beta * g.gap_matrix() / 4))


def coherent_term_closed(g: GibbsState, P: np.ndarray, A: np.ndarray | None = None) -> np.ndarray:
    """Coherent term -(i/2) (A^dag A) o [(s_a^{1/2} - s_b^{1/2}) / (s_a^{1/2} + s_b^{1/2})].

    The ratio equals tanh(beta (E_b - E_a)/4); it is zeroed on (near-)degenerate
    pairs, its analytic limit.
    """
    A = jump_operator(g, P) if A is None else A
    K = g.to_eigen(A.conj().T @ A)
    gaps = g.gap_matrix()
    ratio = np.tanh(-g.beta * gaps / 4)
    w = g.weights
    degenerate = np.abs(w[:, None] - w[None, :]) <= DEGENERACY_TOL * w.max()
    ratio[degenerate] = 0.0
    G = g.from_eigen(-0.5j * K * ratio)
    return (G + G.conj().T) / 2


def fourier_filter(omega: np.ndarray, beta: float) -> np.ndarray:
    """Weight 1/(beta cosh(2 pi omega / beta)); integrates to 1/2."""
    x = 2 * np.pi * np.asarray(omega) / beta
    # 1/cosh without overflow
    return 2 * np.exp(-np.abs(x)) / (1 + np.exp(-2 * np.abs(x))) / beta


@dataclass
class QuadratureResult:
    value: np.ndarray
    residual: float
    nodes: int
    window: float


def coherent_term_fourier(g: GibbsState, P: np.ndarray, window: float | None = None,
                          tol: float = 1e-12, max_nodes: int = 2 ** 16) -> QuadratureResult:
    """Coherent term as a filtered real-time average of (1/2i)[P s^{1/2} P, s^{-1/2}].

    Adaptive trapezoid on |omega| <= window (default 10 beta), doubling the node
    count until successive estimates agree to ``tol`` relative; the last change
    is returned as the residual estimate.
    """
    if g.beta == 0:
        return QuadratureResult(np.zeros((g.dim, g.dim), dtype=complex), 0.0, 0, 0.0)
    W = 10 * g.beta if window is None else window
    half = g.power(0.5)
    inv_half = g.power(-0.5)
    M = commutator(P @ half @ P, inv_half) / 2j
    Me = g.to_eigen(M)
    gaps = g.gap_matrix()

    def trapezoid(N):
        w, h = np.linspace(-W, W, N + 1, retstep=True)
        f = fourier_filter(w, g.beta)
        f[0] *= 0.5
        f[-1] *= 0.5
        # e^{iH w} M e^{-iH w} in the eigenbasis is M_ab e^{i w (E_a - E_b)}
        acc = np.zeros_like(Me)
        for wk, fk in zip(w, f):
            acc += fk * np.exp(1j * wk * gaps)
        return h * acc * Me

    N = 64
    prev = trapezoid(N)
    scale = max(np.abs(prev).max(), 1e-300)
    residual = np.inf
    while N < max_nodes:
        N *= 2
        cur = trapezoid(N)
        residual = float(np.abs(cur - prev).max())
        prev = cur
        if residual <= tol * scale:
            break
    G = g.from_eigen(prev)
    return QuadratureResult((G + G.conj().T) / 2, residual, N, W)


def fourier_monomial_integral(beta: float, r: int) -> float:
    """Integral of 1/(beta cosh(2 pi w/beta)) |w|^r over the real line (adaptive quadrature)."""
    val, _ = integrate.quad(lambda w: fourier_filter(w, beta) * w ** r, 0, np.inf,
                            epsabs=0, epsrel=1e-12, limit=200)
    return 2 * val


def fourier_monomial_bound(beta: float, r: int) -> float:
    return 2 / np.pi * (beta / (2 * np.pi)) ** r * math.factorial(r)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def dissipator_apply(G: np.ndarray, A: np.ndarray, rho: np.ndarray) -> np.ndarray:
    K = A.conj().T @ A
    return -1j * commutator(G, rho) + A @ rho @ A.conj().T - 0.5 * anticommutator(K, rho)


def dissipator_adjoint(G: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    K = A.conj().T @ A
    return 1j * commutator(G, B) + A.conj().T @ B @ A - 0.5 * anticommutator(K, B)


def lindblad_superop(pairs: Iterable[tuple[np.ndarray, np.ndarray]], dim: int, tag: str = "") -> Superoperator:
    """Superoperator of a sum of (coherent, jump) Lindblad terms."""
    I = np.eye(dim)
    S = np.zeros((dim * dim, dim * dim), dtype=complex)
    for G, A in pairs:
        K = A.conj().T @ A
        S += -1j * (left_right(G, I) - left_right(I, G))
        S += left_right(A, A.conj().T)
        S += -0.5 * (left_right(K, I) + left_right(I, K))
    return Superoperator(S, tag, {"generator": True})


@dataclass
class SiteLindbladian:
    """Three Pauli channels of the balanced generator at one site."""

    site: int
    jumps: dict[str, np.ndarray]
    coherent: dict[str, np.ndarray]
    support: frozenset | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return next(iter(self.jumps.values())).shape[0]

    def pairs(self):
        return [(self.coherent[p], self.jumps[p]) for p in JUMP_LABELS]

    def apply(self, rho: np.ndarray, which: str | None = None) -> np.ndarray:
        labels = JUMP_LABELS if which is None else (which,)
        return sum(dissipator_apply(self.coherent[p], self.jumps[p], rho) for p in labels)

    def apply_adjoint(self, B: np.ndarray, which: str | None = None) -> np.ndarray:
        labels = JUMP_LABELS if which is None else (which,)
        return sum(dissipator_adjoint(self.coherent[p], self.jumps[p], B) for p in labels)

    def effective(self):
        """(H_eff, jump stack) with d rho/dt = -i(H_eff rho - rho H_eff^dag) + sum A rho A^dag."""
        if "eff" not in self._cache:
            Gt = sum(self.coherent[p] for p in JUMP_LABELS)
            Kt = sum(self.jumps[p].conj().T @ self.jumps[p] for p in JUMP_LABELS)
            self._cache["eff"] = (Gt - 0.5j * Kt, np.stack([self.jumps[p] for p in JUMP_LABELS]))
        return self._cache["eff"]

    def superop(self, which: str | None = None) -> Superoperator:
        key = ("sup", which)
        if key not in self._cache:
            labels = JUMP_LABELS if which is None else (which,)
            self._cache[key] = lindblad_superop([(self.coherent[p], self.jumps[p]) for p in labels],
                                                self.dim, tag=f"site{self.site}{which or ''}")
        return self._cache[key]

    def size_bounds(self) -> dict[str, float]:
        """Per-Pauli diamond-norm size bound 2||G|| + 2||A||^2."""
        return {p: 2 * op_norm(self.coherent[p]) + 2 * op_norm(self.jumps[p]) ** 2 for p in JUMP_LABELS}


def site_lindbladian(g: GibbsState, site: int) -> SiteLindbladian:
    n = g.n
    jumps, coh = {}, {}
    for p in JUMP_LABELS:
        P = pauli(site, p, n)
        A = jump_operator(g, P)
        jumps[p] = A
        coh[p] = coherent_term_closed(g, P, A)
    return SiteLindbladian(site, jumps, coh)


@dataclass
class BalancedLindbladian:
    gibbs: GibbsState
    sites: list[SiteLindbladian]

    @property
    def n(self) -> int:
        return self.gibbs.n

    @property
    def dim(self) -> int:
        return self.gibbs.dim

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(s.apply(rho) for s in self.sites)

    def apply_adjoint(self, B: np.ndarray) -> np.ndarray:
        return sum(s.apply_adjoint(B) for s in self.sites)

    def superop(self) -> Superoperator:
        S = sum(s.superop().matrix for s in self.sites)
        return Superoperator(S, "balanced", {"generator": True})

    def effective(self):
        H_eff = sum(s.effective()[0] for s in self.sites)
        jumps = np.concatenate([s.effective()[1] for s in self.sites])
        return H_eff, jumps


def assemble(g: GibbsState, sites: Sequence[int] | None = None) -> BalancedLindbladian:
    sites = range(g.n) if sites is None else sites
    return BalancedLindbladian(g, [site_lindbladian(g, j) for j in sites])


def balanced_lindbladian(spec: HamiltonianSpec, beta: float | None = None) -> BalancedLindbladian:
    return assemble(gibbs(spec, beta))


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def check_stationarity(L: BalancedLindbladian, sigma: np.ndarray | None = None) -> dict:
    """Trace norms of L^P(sigma) per (site, P) and of the full generator on sigma."""
    sigma = L.gibbs.sigma if sigma is None else sigma
    per = {}
    for s in L.sites:
        for p in JUMP_LABELS:
            per[(s.site, p)] = trace_norm(s.apply(sigma, p))
    total = trace_norm(L.apply(sigma))
    return {"per_term": per, "total": total, "max_term": max(per.values()),
            "passed": total <= 1e-9 and max(per.values()) <= 1e-9}


def check_kms(L: BalancedLindbladian, basis: str = "pauli", samples: int = 32,
              rng: np.random.Generator | None = None) -> dict:
    """Max over B and (site, P) of || L^P(s^1/2 B s^1/2) - s^1/2 L^P^dag(B) s^1/2 ||_1.

    ``basis="pauli"`` runs all 4^n Pauli strings; ``"random"`` uses ``samples``
    random Hermitian matrices.
    """
    from .qop import pauli_basis, random_hermitian
    g = L.gibbs
    half = g.power(0.5)
    if basis == "pauli":
        Bs = pauli_basis(g.n)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        Bs = np.stack([random_hermitian(g.dim, rng) for _ in range(samples)])
    left = half @ Bs @ half
    worst = 0.0
    per = {}
    for s in L.sites:
        for p in JUMP_LABELS:
            G, A = s.coherent[p], s.jumps[p]
            K = A.conj().T @ A
            Ad = A.conj().T
            lhs = (-1j * (G @ left - left @ G) + A @ left @ Ad - 0.5 * (K @ left + left @ K))
            adj = (1j * (G @ Bs - Bs @ G) + Ad @ Bs @ A - 0.5 * (K @ Bs + Bs @ K))
            rhs = half @ adj @ half
            diff = lhs - rhs
            diff = (diff + diff.conj().transpose(0, 2, 1)) / 2
            r = float(np.abs(np.linalg.eigvalsh(diff)).sum(axis=-1).max())
            per[(s.site, p)] = r
            worst = max(worst, r)
    return {"per_term": per, "max": worst, "passed": worst <= 1e-9, "basis_size": len(Bs)}


def depolarizing_residual(M: np.ndarray, site: int, n: int) -> float:
    """|| M + sum_P P M P ||_1 for the three Paulis at ``site``."""
    out = M.copy()
    for p in JUMP_LABELS:
        P = pauli(site, p, n)
        out = out + P @ M @ P
    return trace_norm(out)


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

@dataclass
class TruncatedSiteLindbladian:
    site: int
    radius: int
    region: frozenset
    restricted_terms: list[int]
    local: SiteLindbladian
    epsilon: float
    per_pauli: dict[str, dict]
    support_defect: float

    def apply(self, rho):
        return self.local.apply(rho)

    def superop(self):
        return self.local.superop()

    def effective(self):
        return self.local.effective()


def truncate(spec: HamiltonianSpec, site: int, radius: int, full: SiteLindbladian | None = None,
             graph: InteractionGraph | None = None, beta: float | None = None) -> TruncatedSiteLindbladian:
    """Site generator built from the Gibbs state of the terms inside ball(site, radius).

    The certificate is sum_P 2||G - G'|| + 2||A - A'|| (||A|| + ||A'||), which
    bounds the diamond norm of the difference of generators.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    beta = spec.beta if beta is None else beta
    graph = build_graph(spec) if graph is None else graph
    region = graph.ball(site, radius)
    idx = spec.restricted_terms(region)
    if idx:
        g_loc = gibbs(spec, beta, spec.dense(idx))
    else:
        g_loc = maximally_mixed_gibbs(spec.n)
    local = site_lindbladian(g_loc, site)
    if full is None:
        full = site_lindbladian(gibbs(spec, beta), site)
    eps = 0.0
    per = {}
    for p in JUMP_LABELS:
        dG = op_norm(full.coherent[p] - local.coherent[p])
        dA = op_norm(full.jumps[p] - local.jumps[p])
        nA, nA2 = op_norm(full.jumps[p]), op_norm(local.jumps[p])
        term = 2 * dG + 2 * dA * (nA + nA2)
        per[p] = {"dG": dG, "dA": dA, "normA": nA, "normA_trunc": nA2, "bound": term}
        eps += term
    defect = max(max(support_defect(local.jumps[p], region), support_defect(local.coherent[p], region))
                 for p in JUMP_LABELS)
    local.support = region
    return TruncatedSiteLindbladian(site, radius, region, idx, local, eps, per, defect)


def truncation_profile(spec: HamiltonianSpec, site: int, radii: Iterable[int]) -> list[TruncatedSiteLindbladian]:
    graph = build_graph(spec)
    full = site_lindbladian(gibbs(spec), site)
    return [truncate(spec, site, R, full=full, graph=graph) for R in radii]


def fit_geometric(values: Sequence[float], floor: float = 1e-13) -> tuple[float, float]:
    """Least-squares fit of log(values) against index; returns (ratio, prefactor).

    Entries at or below ``floor`` (round-off) are dropped.
    """
    y = np.asarray(values, dtype=float)
    x = np.arange(len(y), dtype=float)
    keep = y > floor
    if keep.sum() < 2:
        return 0.0, float(y[0]) if len(y) else 0.0
    slope, icpt = np.polyfit(x[keep], np.log(y[keep]), 1)
    return float(np.exp(slope)), float(np.exp(icpt))


def radius_for_tolerance(spec: HamiltonianSpec, site: int, delta: float, max_radius: int | None = None) -> dict:
    """Smallest truncation radius whose certificate is at most ``delta``.

    Radii are scanned upward; if none qualifies within ``max_radius`` the
    geometric fit of the measured certificates extrapolates the answer.
    """
    graph = build_graph(spec)
    max_radius = graph.diameter if max_radius is None else max_radius
    full = site_lindbladian(gibbs(spec), site)
    eps = []
    for R in range(1, max_radius + 1):
        t = truncate(spec, site, R, full=full, graph=graph)
        eps.append(t.epsilon)
        if t.epsilon <= delta:
            return {"radius": R, "measured": eps, "extrapolated": False}
    ratio, pref = fit_geometric(eps)
    if 0 < ratio < 1:
        R = 1 + math.ceil(math.log(delta / pref) / math.log(ratio))
    else:
        R = max_radius
    return {"radius": max(R, 1), "measured": eps, "extrapolated": True}


def closed_form_truncation_radius(delta: float, degree: int, locality: int, beta: float) -> int:
    """Closed-form radius 1 + ceil(log(1000/delta) / log(1/(3(d+1) l^2 beta)))."""
    q = 3 * (degree + 1) * locality ** 2 * beta
    if not 0 < q < 1:
        raise ValueError("needs 0 < 3(d+1) l^2 beta < 1")
    return 1 + math.ceil(math.log(1000 / delta) / math.log(1 / q))


def jump_series_bound(degree: int, beta: float, K: int) -> float:
    """Tail bound 2e (e d beta)^K for the order-K Hadamard truncation of a jump."""
    return 2 * math.e * (math.e * degree * beta) ** K


def jump_series(spec: HamiltonianSpec, site: int, which: str, K: int, beta: float | None = None):
    """Order-K cluster series of exp(-beta H/4) P exp(beta H/4)."""
    from .qop import nested_commutator_series
    beta = spec.beta if beta is None else beta
    P = pauli(site, which, spec.n)
    terms = [(t.support, t.matrix) for t in spec.terms]
    return nested_commutator_series(terms, P, [site], -beta / 4, K, spec.n)


def check_evolution_error(L_full: Superoperator, L_trunc: Superoperator, t: float, epsilon: float,
                          rhos: Sequence[np.ndarray]) -> dict:
    """Largest ||(e^{Lt} - e^{L't})(rho)||_1 over ``rhos`` against t * epsilon."""
    from scipy.linalg import expm
    E1 = expm(L_full.matrix * t)
    E2 = expm(L_trunc.matrix * t)
    worst = 0.0
    for rho in rhos:
        diff = ((E1 - E2) @ rho.reshape(-1)).reshape(rho.shape)
        worst = max(worst, trace_norm((diff + diff.conj().T) / 2))
    return {"measured": worst, "bound": t * epsilon, "passed": worst <= t * epsilon + 1e-12}
