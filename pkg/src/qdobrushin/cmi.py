"""Conditional mutual information of Gibbs states and the local recovery experiment.

High-temperature CMI values fall below double-precision round-off after a few
sites of separation (entropies are O(n) while the CMI is ~1e-20). Besides the
float64 routines, :func:`gibbs_cmi_exact` evaluates the Gibbs state and the
marginal spectra in Arb ball arithmetic through python-flint at a configurable
bit precision.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evolve import GeneratorSum, Propagator
from .lattice import HamiltonianSpec, InteractionGraph, build_graph, tfim
from .lindblad import gibbs, truncate
from .qop import embed, partial_trace, reduced, trace_norm

NEG_TOL = 1e-9


class SupportViolation(RuntimeError):
    pass


def entropy(rho: np.ndarray) -> float:
    """Von Neumann entropy in nats, 0 log 0 = 0."""
    w = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    if w.min() < -NEG_TOL:
        raise ValueError(f"negative eigenvalue {w.min():.3g}")
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


@dataclass(frozen=True)
class Tripartition:
    A: tuple
    B: tuple
    C: tuple
    n: int
    dist: float = float("nan")

    def __post_init__(self):
        sets = [set(self.A), set(self.B), set(self.C)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("parts must be disjoint")
        if set().union(*sets) != set(range(self.n)):
            raise ValueError("parts must cover the register")
        if not self.A or not self.C:
            raise ValueError("A and C must be nonempty")

    @classmethod
    def build(cls, A, B, C, n: int, graph: InteractionGraph | None = None) -> "Tripartition":
        d = graph.set_distance(A, C) if graph is not None else float("nan")
        return cls(tuple(sorted(A)), tuple(sorted(B)), tuple(sorted(C)), n, float(d))


def contiguous_tripartition(n: int, dist: int, graph: InteractionGraph | None = None) -> Tripartition:
    """A | B | C on a chain with |B| = dist - 1 and A, C splitting the rest (A the smaller)."""
    if not 1 <= dist <= n - 1:
        raise ValueError("need 1 <= dist <= n - 1")
    lo = (n - (dist - 1)) // 2
    A = range(lo)
    B = range(lo, lo + dist - 1)
    C = range(lo + dist - 1, n)
    return Tripartition.build(A, B, C, n, graph)


def cmi(sigma: np.ndarray, tri: Tripartition) -> float:
    """S(AB) + S(BC) - S(B) - S(ABC) in float64, clipped at zero within NEG_TOL."""
    n = tri.n
    AB, BC = tri.A + tri.B, tri.B + tri.C
    sB = entropy(reduced(sigma, tri.B, n)) if tri.B else 0.0
    val = entropy(reduced(sigma, AB, n)) + entropy(reduced(sigma, BC, n)) - sB - entropy(sigma)
    if val < -NEG_TOL:
        raise ValueError(f"strong subadditivity violated: {val:.3g}")
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# extended precision
# ---------------------------------------------------------------------------

@contextmanager
def _precision(flint, prec: int):
    old = flint.ctx.prec
    flint.ctx.prec = prec
    try:
        yield
    finally:
        flint.ctx.prec = old


class ExactGibbs:
    """Gibbs state e^{-beta H}/Z held as Arb midpoints at ``prec`` bits."""

    def __init__(self, H: np.ndarray, beta: float, prec: int = 256):
        import flint

        self.flint = flint
        self.prec = prec
        self.n = int(round(math.log2(H.shape[0])))
        with _precision(flint, prec):
            d = H.shape[0]
            real = np.allclose(H.imag, 0)
            mat, num = (flint.arb_mat, flint.arb) if real else (flint.acb_mat, flint.acb)
            H = H.real if real else H
            entries = [num(float(x)) if real else num(float(x.real), float(x.imag)) for x in H.ravel()]
            Hm = mat(d, d, entries)
            b = flint.arb(beta)
            E = (Hm * (-b)).exp().mid()
            Z = E.trace()
            rho = E * (1 / Z)
            self.rho = np.array([[rho[i, j] for j in range(d)] for i in range(d)], dtype=object)
            # S(sigma) = beta <H> + log Z
            S = b * (rho * Hm).trace() + Z.log()
            self.S_full = S if real else S.real

    def marginal(self, keep: Sequence[int]) -> np.ndarray:
        keep = sorted(keep)
        n = self.n
        T = self.rho.reshape([2] * (2 * n))
        traced = [s for s in range(n) if s not in keep]
        m = n
        for s in sorted(traced, reverse=True):
            T = np.trace(T, axis1=s, axis2=s + m)
            m -= 1
        d = 2 ** len(keep)
        return T.reshape(d, d)

    def entropy(self, keep: Sequence[int]):
        flint = self.flint
        if len(keep) == 0:
            return flint.arb(0)
        if len(keep) == self.n:
            return self.S_full
        with _precision(flint, self.prec):
            R = self.marginal(keep)
            d = R.shape[0]
            ev = flint.acb_mat(d, d, [flint.acb(x) for x in R.ravel()]).eig(algorithm="approx")
            s = flint.arb(0)
            for e in ev:
                x = e.real.mid()
                if x > 0:
                    s -= x * x.log()
            return s

    def cmi(self, tri: Tripartition) -> float:
        with _precision(self.flint, self.prec):
            v = (self.entropy(tri.A + tri.B) + self.entropy(tri.B + tri.C)
                 - self.entropy(tri.B) - self.entropy(tri.A + tri.B + tri.C))
            val = float(v.mid())
        if val < -NEG_TOL:
            raise ValueError(f"strong subadditivity violated: {val:.3g}")
        return max(val, 0.0)


def gibbs_cmi_exact(spec: HamiltonianSpec, tri: Tripartition, beta: float | None = None, prec: int = 256) -> float:
    beta = spec.beta if beta is None else beta
    return ExactGibbs(spec.dense(), beta, prec).cmi(tri)


# ---------------------------------------------------------------------------
# recovery
# ---------------------------------------------------------------------------

@dataclass
class RecoveryRun:
    tri: Tripartition
    Delta: float
    t: float
    truncation: int
    sites: tuple
    region: tuple
    compliant: bool
    trace_distance: float
    initial_distance: float
    cmi: float
    epsilon_tr: float
    marginal_defect: float
    bounds: dict = field(default_factory=dict)
    rho: np.ndarray | None = field(default=None, repr=False)

    def recovery_bound(self) -> tuple[float, float, bool]:
        rhs = 7 * len(self.tri.A) * math.sqrt(self.trace_distance)
        return self.cmi, rhs, self.cmi <= rhs

    def row(self) -> dict:
        lhs, rhs, ok = self.recovery_bound()
        return {"dist": self.tri.dist, "Delta": self.Delta, "t": self.t, "truncation": self.truncation,
                "compliant": self.compliant, "cmi": float(self.cmi), "trace_distance": self.trace_distance,
                "initial_distance": self.initial_distance, "fr_rhs": rhs, "fr_ok": bool(ok),
                "mixing_rhs": self.bounds.get("mixing_rhs"), "epsilon_tr": self.epsilon_tr,
                "marginal_defect": self.marginal_defect}


def recovery_initial_state(sigma: np.ndarray, tri: Tripartition) -> np.ndarray:
    """sigma_AB (x) I/2^|C|."""
    AB = tri.A + tri.B
    dC = 2 ** len(tri.C)
    return embed(np.kron(reduced(sigma, AB, tri.n), np.eye(dC) / dC), list(AB) + list(tri.C), tri.n)


def default_schedule(dist: float) -> tuple[float, float, int]:
    """(Delta, t, truncation radius) = (dist/4, dist/8, largest R with Delta + R < dist)."""
    Delta = dist / 4
    t = dist / 8
    R = max(math.ceil(dist - Delta) - 1, 0)
    return Delta, t, R


def recover(spec: HamiltonianSpec, tri: Tripartition, Delta: float | None = None, t: float | None = None,
            truncation: int | None = None, graph: InteractionGraph | None = None, sigma: np.ndarray | None = None,
            cmi_value: float | None = None, strict: bool = False, tolerance: float = 1e-11) -> RecoveryRun:
    """Evolve sigma_AB (x) I_C under the truncated site generators of ball(C, Delta)."""
    graph = build_graph(spec) if graph is None else graph
    n = spec.n
    dist = graph.set_distance(tri.A, tri.C)
    d_Delta, d_t, d_R = default_schedule(dist)
    Delta = d_Delta if Delta is None else Delta
    t = d_t if t is None else t
    R = d_R if truncation is None else truncation
    sigma = gibbs(spec).sigma if sigma is None else sigma
    sites = sorted(graph.ball(tri.C, Delta))
    gens = [truncate(spec, s, R, graph=graph) for s in sites]
    region = sorted(frozenset().union(*[g.region for g in gens]))
    compliant = not (set(region) & set(tri.A))
    if strict and not compliant:
        raise SupportViolation(f"recovery region {region} meets A={list(tri.A)}")
    rho0 = recovery_initial_state(sigma, tri)
    rho = Propagator(GeneratorSum(gens), tolerance=tolerance)(rho0, t) if t > 0 else rho0.copy()
    rho = (rho + rho.conj().T) / 2
    outside = [s for s in range(n) if s not in region]
    defect = float(trace_norm(reduced(rho, outside, n) - reduced(rho0, outside, n))) if outside else 0.0
    eps = float(sum(g.epsilon for g in gens))
    mixing_rhs = 2 * (math.exp(-t / 2) * len(tri.C) + math.exp(2 * t) * 10.0 ** (-Delta)) + t * eps
    if cmi_value is None:
        cmi_value = cmi(sigma, tri)
    return RecoveryRun(tri, Delta, t, R, tuple(sites), tuple(region), compliant,
                       float(trace_norm(sigma - rho)), float(trace_norm(sigma - rho0)), cmi_value, eps, defect,
                       {"mixing_rhs": mixing_rhs}, rho)


# ---------------------------------------------------------------------------
# decay experiment
# ---------------------------------------------------------------------------

@dataclass
class DecayResult:
    dists: np.ndarray
    values: np.ndarray  # (draws, len(dists))
    slopes: np.ndarray
    slope: float
    ci: tuple[float, float]
    runs: list = field(default_factory=list)

    def rows(self):
        for k, run in enumerate(self.runs):
            yield run


def log_slope(dists: Sequence[float], values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    if (v <= 0).any():
        return float("nan")
    return float(np.polyfit(np.asarray(dists, dtype=float), np.log(v), 1)[0])


def random_tfim(n: int, beta: float, rng: np.random.Generator) -> HamiltonianSpec:
    return tfim(n, beta, J=rng.uniform(0.5, 1.0, n), h=rng.uniform(0.5, 1.0, n))


def decay_experiment(n: int, beta: float, dists: Sequence[int] = (1, 2, 3, 4, 5), draws: int = 1,
                     family: Callable[[int, float, np.random.Generator], HamiltonianSpec] | None = None,
                     seed: int = 0, bootstrap: int = 2000, prec: int = 256, recovery: bool = True) -> DecayResult:
    """CMI against dist(A, C) on contiguous chain tripartitions.

    With ``family=None`` the uniform TFIM (J = h = 1) is used and ``draws`` is
    ignored; otherwise each draw samples a Hamiltonian and the mean slope is
    bootstrapped over draws.
    """
    rng = np.random.default_rng(seed)
    specs = [tfim(n, beta)] if family is None else [family(n, beta, rng) for _ in range(draws)]
    vals = np.zeros((len(specs), len(dists)))
    runs = []
    for k, spec in enumerate(specs):
        graph = build_graph(spec)
        ex = ExactGibbs(spec.dense(), beta, prec)
        sigma = gibbs(spec, beta).sigma
        for m, d in enumerate(dists):
            tri = contiguous_tripartition(n, d, graph)
            vals[k, m] = ex.cmi(tri)
            if recovery:
                run = recover(spec, tri, graph=graph, sigma=sigma, cmi_value=vals[k, m])
                row = run.row()
                row["draw"] = k
                runs.append(row)
    slopes = np.array([log_slope(dists, v) for v in vals])
    finite = slopes[np.isfinite(slopes)]
    if finite.size:
        boot = rng.choice(finite, size=(bootstrap, finite.size), replace=True).mean(axis=1)
        ci = (float(np.quantile(boot, 0.025)), float(np.quantile(boot, 0.975)))
        slope = float(finite.mean())
    else:
        ci, slope = (float("nan"), float("nan")), float("nan")
    return DecayResult(np.asarray(dists), vals, slopes, slope, ci, runs)
