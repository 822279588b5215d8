"""Continuous semigroups, the discrete site-sampled channel and mixing experiments.

Up to five qubits the generator is exponentiated as a 4^n superoperator
(scipy's scaling-and-squaring ``expm``). Larger registers integrate the
master equation with an adaptive embedded Runge-Kutta pair (DOP853).

Rates: a continuous trajectory reports its fitted rate per unit time and the
same number as the per-site-uniformized rate, since every site generator
runs at unit speed. A discrete trajectory of the channel (1/n) sum_i
e^{Delta L_i} reports the rate per step and ``n/Delta`` times that rate,
which is directly comparable with the continuous one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .qop import Superoperator, trace_norm

SUPEROP_MAX_QUBITS = 5


@dataclass
class EvolutionConfig:
    method: str = "auto"  # "superoperator", "rk" or "auto"
    t_grid: Sequence[float] = (0.0,)
    tolerance: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if (t < 0).any() or (np.diff(t) < 0).any():
            raise ValueError("t_grid must be nonnegative and nondecreasing")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


class IntegrationError(RuntimeError):
    pass


def _num_qubits(dim: int) -> int:
    return int(round(np.log2(dim)))


class Propagator:
    """Applies e^{Lt} for a generator given by its (H_eff, jumps) pair or superoperator."""

    def __init__(self, generator, method: str = "auto", tolerance: float = 1e-10):
        self.generator = generator
        dim = generator.dim
        n = _num_qubits(dim)
        if method == "auto":
            method = "superoperator" if n <= SUPEROP_MAX_QUBITS else "rk"
        self.method = method
        self.tolerance = tolerance
        self.dim = dim
        self._S = None
        self._cache: dict[float, np.ndarray] = {}
        self.last_steps = 0

    @property
    def S(self) -> np.ndarray:
        if self._S is None:
            sup = self.generator.superop()
            self._S = sup.matrix if isinstance(sup, Superoperator) else sup
        return self._S

    def step_matrix(self, dt: float) -> np.ndarray:
        key = round(float(dt), 14)
        if key not in self._cache:
            self._cache[key] = expm(self.S * dt)
        return self._cache[key]

    def __call__(self, rho: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return rho.copy()
        if self.method == "superoperator":
            return (self.step_matrix(t) @ rho.reshape(-1)).reshape(rho.shape)
        return self._rk(rho, [t])[-1]

    def trajectory(self, rho: np.ndarray, times: Sequence[float]) -> list[np.ndarray]:
        times = list(times)
        if self.method == "superoperator":
            out, cur, t_prev = [], rho.reshape(-1).astype(complex), 0.0
            for t in times:
                if t > t_prev:
                    cur = self.step_matrix(t - t_prev) @ cur
                    t_prev = t
                out.append(cur.reshape(rho.shape).copy())
            return out
        return self._rk(rho, times)

    def _rk(self, rho: np.ndarray, times: Sequence[float]) -> list[np.ndarray]:
        H_eff, jumps = self.generator.effective()
        Hd = H_eff.conj().T
        jd = jumps.conj().transpose(0, 2, 1)
        d = self.dim

        def rhs(_, y):
            r = y.reshape(d, d)
            out = -1j * (H_eff @ r - r @ Hd) + (jumps @ r @ jd).sum(axis=0)
            return out.reshape(-1)

        t_end = max(times)
        if t_end == 0:
            return [rho.copy() for _ in times]
        sol = solve_ivp(rhs, (0.0, t_end), rho.reshape(-1).astype(complex), method="DOP853",
                        t_eval=sorted(set(times)), rtol=self.tolerance, atol=self.tolerance * 1e-2)
        if not sol.success:
            raise IntegrationError(f"integrator failed: {sol.message}")
        self.last_steps = int(sol.nfev)
        lookup = {t: sol.y[:, k].reshape(d, d) for k, t in enumerate(sol.t)}
        return [lookup[t] for t in times]


def evolve(L, rho0: np.ndarray, t: float, method: str = "auto", tolerance: float = 1e-10) -> np.ndarray:
    """e^{Lt}(rho0) for a generator exposing ``superop()`` and ``effective()``."""
    if abs(np.trace(rho0) - 1) > 1e-9:
        raise ValueError("initial state must have unit trace")
    return Propagator(L, method, tolerance)(rho0, t)


class GeneratorSum:
    """Sum of site generators acting on a common register."""

    def __init__(self, parts: Sequence):
        if not parts:
            raise ValueError("need at least one generator")
        self.parts = list(parts)

    @property
    def dim(self) -> int:
        return self.parts[0].effective()[0].shape[0]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(p.apply(rho) for p in self.parts)

    def superop(self) -> Superoperator:
        S = sum(p.superop().matrix for p in self.parts)
        return Superoperator(S, "sum", {"generator": True})

    def effective(self):
        H_eff = sum(p.effective()[0] for p in self.parts)
        jumps = np.concatenate([p.effective()[1] for p in self.parts])
        return H_eff, jumps


# ---------------------------------------------------------------------------
# discrete channel
# ---------------------------------------------------------------------------

class DiscreteChannel:
    """rho -> (1/n) sum_i e^{Delta L_i}(rho), exact average or sampled site."""

    def __init__(self, sites: Sequence, delta: float = 0.1):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.sites = list(sites)
        self.delta = delta
        self._maps = None

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def site_maps(self) -> list[np.ndarray]:
        if self._maps is None:
            self._maps = [expm(s.superop().matrix * self.delta) for s in self.sites]
        return self._maps

    def superop(self) -> Superoperator:
        return Superoperator(sum(self.site_maps) / self.n, f"discrete(delta={self.delta})")

    def __call__(self, rho: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        v = rho.reshape(-1)
        if rng is None:
            out = sum(M @ v for M in self.site_maps) / self.n
        else:
            out = self.site_maps[rng.integers(self.n)] @ v
        return out.reshape(rho.shape)


def discrete_step(sites: Sequence, delta: float, rho: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    return DiscreteChannel(sites, delta)(rho, rng)


# ---------------------------------------------------------------------------
# mixing experiments
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    trace_distance: np.ndarray
    w1_upper: np.ndarray | None = None
    w1_lower: np.ndarray | None = None
    rate: float = float("nan")
    rate_uniformized: float = float("nan")
    t_mix: dict = field(default_factory=dict)
    monotone: bool = True
    max_trace_drift: float = 0.0
    min_eigenvalue: float = 0.0
    kind: str = "continuous"

    def rows(self):
        for k, t in enumerate(self.times):
            yield (float(t), float(self.trace_distance[k]),
                   float(self.w1_lower[k]) if self.w1_lower is not None else float("nan"),
                   float(self.w1_upper[k]) if self.w1_upper is not None else float("nan"))


def fit_rate(times: np.ndarray, dist: np.ndarray, floor: float = 1e-11, tail: float = 0.5) -> float:
    """Decay rate from a log-linear fit over the last ``tail`` fraction of points above ``floor``."""
    times = np.asarray(times, dtype=float)
    dist = np.asarray(dist, dtype=float)
    keep = dist > floor
    t, y = times[keep], np.log(dist[keep])
    if len(t) < 2:
        return float("nan")
    start = int(len(t) * (1 - tail))
    start = min(start, len(t) - 2)
    slope, _ = np.polyfit(t[start:], y[start:], 1)
    return float(-slope)


def _t_mix(times, dist, targets):
    out = {}
    for eps in targets:
        hit = np.flatnonzero(np.asarray(dist) <= eps)
        out[float(eps)] = float(times[hit[0]]) if hit.size else float("nan")
    return out


def mixing_experiment(process, rho0: np.ndarray, sigma: np.ndarray, times: Sequence[float] | None = None,
                      steps: int | None = None, eps_targets: Sequence[float] = (1e-1, 1e-2, 1e-3),
                      w1: Callable[[np.ndarray], tuple[float, float]] | None = None,
                      monotone_tol: float = 1e-6, method: str = "auto") -> Trajectory:
    """Trace-distance (and optional W1 bracket) curve towards ``sigma``.

    ``process`` is either a generator (continuous time, pass ``times``) or a
    :class:`DiscreteChannel` (pass ``steps``).
    """
    if isinstance(process, DiscreteChannel):
        if steps is None:
            raise ValueError("discrete experiments need a step count")
        states = [rho0]
        cur = rho0
        for _ in range(steps):
            cur = process(cur)
            states.append(cur)
        grid = np.arange(steps + 1, dtype=float)
        kind = "discrete"
    else:
        if times is None:
            raise ValueError("continuous experiments need a time grid")
        grid = np.asarray(times, dtype=float)
        states = Propagator(process, method).trajectory(rho0, grid)
        kind = "continuous"
    dist = np.array([trace_norm((r - sigma + (r - sigma).conj().T) / 2) for r in states])
    drift = max(abs(np.trace(r) - 1) for r in states)
    min_eig = min(float(np.linalg.eigvalsh((r + r.conj().T) / 2).min()) for r in states)
    up = lo = None
    if w1 is not None:
        br = [w1((r - sigma + (r - sigma).conj().T) / 2) for r in states]
        lo = np.array([b[0] for b in br])
        up = np.array([b[1] for b in br])
    rate = fit_rate(grid, dist)
    if kind == "discrete":
        uni = rate * process.n / process.delta
    else:
        uni = rate
    monotone = bool((np.diff(dist) <= monotone_tol).all())
    return Trajectory(grid, dist, up, lo, rate, uni, _t_mix(grid, dist, eps_targets), monotone,
                      float(drift), min_eig, kind)
