"""Acceptance checks. Each returns an ExperimentReport whose assertions carry claim ids."""
from __future__ import annotations

import itertools
import math
import time

import numpy as np

from .. import cmi as cmi_mod
from ..costdyn import build_Q, check_cmi_contraction, check_path_sum, check_Q_contraction, path_sum
from ..dobrushin import discrete_influence_upper, dobrushin_test, influence_upper, tau_bound
from ..evolve import DiscreteChannel, Propagator, mixing_experiment
from ..lattice import build_graph, chain, grid, measure_params
from ..lindblad import (JUMP_LABELS, assemble, balanced_lindbladian, check_kms, check_stationarity,
                        coherent_term_closed, coherent_term_fourier, depolarizing_residual, fit_geometric,
                        fourier_monomial_bound, fourier_monomial_integral, gibbs, jump_operator, jump_series,
                        jump_series_bound, maximally_mixed_gibbs, truncate, site_lindbladian)
from ..qop import PAULI, embed, extend_identity, op_norm, partial_trace, pauli, random_density_matrix, trace_norm
from ..wasserstein import classical_w1_of_diagonal, w1
from .report import ExperimentReport, Table

TITLES = {
    1: "Gibbs stationarity",
    2: "KMS detailed balance",
    3: "coherent-term duality and Fourier monomials",
    4: "jump series and truncation certificate",
    5: "W1 solver correctness",
    6: "update-matrix contract",
    7: "Dobrushin certificate and mixing",
    8: "exact H=0 decay law",
    9: "cost-dynamics bounds at scale",
    10: "path-sum bound",
    11: "CMI decay and recovery",
    12: "depolarizing identity",
}

BETAS = (0.05, 0.1, 0.2)


def _report(k: int, **config) -> ExperimentReport:
    cfg = {"criterion": k, **config}
    return ExperimentReport(name=f"criterion-{k:02d}", config=cfg, config_hash="", seed=int(config.get("seed", 0)))


def small_chains(count: int = 20):
    """Seeded random 2-local chains with n = 3..5 and beta in BETAS."""
    for s in range(count):
        n = 3 + s % 3
        beta = BETAS[(s // 3) % 3]
        yield s, chain(n, beta, seed=s)


def criterion_1(count: int = 20) -> ExperimentReport:
    rep = _report(1, instances=count)
    rows = []
    for s, spec in small_chains(count):
        res = check_stationarity(balanced_lindbladian(spec))
        rows.append({"seed": s, "n": spec.n, "beta": spec.beta, "residual": res["total"],
                     "max_term": res["max_term"]})
    worst = max(max(r["residual"], r["max_term"]) for r in rows)
    rep.check("stationarity", worst <= 1e-9, worst, 1e-9, "gibbs-stationarity")
    rep.tables["instances"] = Table.from_dicts(rows)
    rep.metrics["worst"] = worst
    return rep


def criterion_2(count: int = 20) -> ExperimentReport:
    rep = _report(2, instances=count)
    rows = []
    for s, spec in small_chains(count):
        res = check_kms(balanced_lindbladian(spec))
        rows.append({"seed": s, "n": spec.n, "beta": spec.beta, "residual": res["max"], "basis": res["basis_size"]})
    worst = max(r["residual"] for r in rows)
    rep.check("kms", worst <= 1e-9, worst, 1e-9, "kms-detailed-balance")
    rep.tables["instances"] = Table.from_dicts(rows)
    rep.metrics["worst"] = worst
    return rep


def criterion_3() -> ExperimentReport:
    rep = _report(3)
    rows = []
    worst = 0.0
    for n, beta, seed in itertools.product((2, 3, 4), (0.1, 0.3), (0, 1)):
        g = gibbs(chain(n, beta, seed=seed))
        for site in range(n):
            for p in JUMP_LABELS:
                P = pauli(site, p, n)
                closed = coherent_term_closed(g, P, jump_operator(g, P))
                quad = coherent_term_fourier(g, P)
                err = op_norm(closed - quad.value)
                worst = max(worst, err)
                rows.append({"n": n, "beta": beta, "seed": seed, "site": site, "pauli": p, "error": err,
                             "nodes": quad.nodes})
    rep.check("closed-vs-fourier", worst <= 1e-6, worst, 1e-6, "coherent-term-fourier-duality")
    mono = []
    for beta in (0.1, 0.3, 1.0):
        for r in range(7):
            val = fourier_monomial_integral(beta, r)
            bnd = fourier_monomial_bound(beta, r)
            mono.append({"beta": beta, "r": r, "integral": val, "bound": bnd, "gap": 1 - val / bnd})
    ok_upper = all(m["integral"] <= m["bound"] * (1 + 1e-12) for m in mono)
    max_gap = max(m["gap"] for m in mono)
    rep.check("monomial-upper", ok_upper, max(m["integral"] / m["bound"] for m in mono), 1.0, "fourier-monomial-bound")
    rep.check("monomial-gap", max_gap < 0.35, max_gap, 0.35, "fourier-monomial-bound")
    rep.tables["coherent"] = Table.from_dicts(rows)
    rep.tables["monomials"] = Table.from_dicts(mono)
    return rep


def criterion_4() -> ExperimentReport:
    rep = _report(4)
    rows = []
    ok = True
    for n, beta, seed in ((5, 0.02, 0), (6, 0.05, 1), (6, 0.1, 2)):
        spec = chain(n, beta, seed=seed)
        params = measure_params(build_graph(spec))
        g = gibbs(spec)
        for site in (0, n // 2):
            for p in JUMP_LABELS:
                A = jump_operator(g, pauli(site, p, n))
                for K in range(1, 7):
                    series = jump_series(spec, site, p, K)
                    err = op_norm(A - series.value)
                    bnd = jump_series_bound(params.degree, beta, K)
                    ok &= err <= bnd
                    rows.append({"n": n, "beta": beta, "site": site, "pauli": p, "K": K, "error": err,
                                 "bound": bnd, "noncluster": series.noncluster_residual})
    rep.check("jump-series", ok, max(r["error"] / r["bound"] for r in rows), 1.0, "jump-series-truncation")
    trunc = []
    Cs = []
    for n, beta, seed in ((7, 0.008, 0), (7, 0.005, 1), (8, 0.008, 2)):
        spec = chain(n, beta, seed=seed)
        graph = build_graph(spec)
        params = measure_params(graph)
        regime = 1 / (10 * (params.degree + 1) * params.locality ** 2)
        site = n // 2
        full = site_lindbladian(gibbs(spec), site)
        eps = []
        for R in range(1, graph.diameter + 1):
            t = truncate(spec, site, R, full=full, graph=graph)
            eps.append(t.epsilon)
            trunc.append({"n": n, "beta": beta, "radius": R, "epsilon": t.epsilon, "support_defect": t.support_defect})
        ratio, _ = fit_geometric(eps, floor=1e-13)
        q = 3 * (params.degree + 1) * params.locality ** 2 * beta
        C = ratio / q
        Cs.append({"n": n, "beta": beta, "in_regime": beta <= regime, "ratio": ratio, "base": q, "C": C})
    worst_C = max(c["C"] for c in Cs)
    rep.check("truncation-ratio", worst_C <= 10 and all(c["in_regime"] for c in Cs), worst_C, 10,
              "truncation-error-decay")
    rep.tables["series"] = Table.from_dicts(rows)
    rep.tables["truncation"] = Table.from_dicts(trunc)
    rep.tables["truncation_fit"] = Table.from_dicts(Cs)
    return rep


def criterion_5(count: int = 200, dense: int = 20, seed: int = 0) -> ExperimentReport:
    rep = _report(5, instances=count, dense=dense, seed=seed)
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(count):
        n = int(rng.integers(1, 5))
        p, q = rng.dirichlet(np.ones(2 ** n)), rng.dirichlet(np.ones(2 ** n))
        if rng.random() < 0.3:
            q = rng.dirichlet(np.full(2 ** n, 0.2))
        X = np.diag(p - q).astype(complex)
        res = w1(X)
        ot = classical_w1_of_diagonal(X)
        tn = trace_norm(X)
        rows.append({"k": k, "n": n, "kind": "diagonal", "lower": res.lower, "upper": res.upper, "reference": ot,
                     "gap": res.upper - res.lower, "half_trace": tn / 2, "cap": n * tn / 2})
    for k in range(dense):
        n = int(rng.integers(1, 4))
        X = random_density_matrix(n, rng) - random_density_matrix(n, rng)
        res = w1(X)
        tn = trace_norm(X)
        rows.append({"k": count + k, "n": n, "kind": "dense", "lower": res.lower, "upper": res.upper,
                     "reference": float("nan"), "gap": res.upper - res.lower, "half_trace": tn / 2,
                     "cap": n * tn / 2})
    diag = [r for r in rows if r["kind"] == "diagonal"]
    contain = max(max(r["lower"] - r["reference"], r["reference"] - r["upper"]) for r in diag)
    gap = max(r["gap"] for r in diag)
    sandwich = all(r["half_trace"] - 1e-12 <= r["lower"] <= r["upper"] <= r["cap"] + 1e-12 for r in rows)
    rep.check("bracket-contains-ot", contain <= 1e-9, contain, 1e-9, "w1-classical-reduction")
    rep.check("bracket-gap", gap <= 1e-6, gap, 1e-6, "w1-classical-reduction")
    rep.check("trace-sandwich", sandwich, None, None, "w1-trace-norm-sandwich")
    rep.tables["instances"] = Table.from_dicts(rows)
    return rep


def canonical_edges(n: int, j: int):
    """P_j (x) tau over P in {X, Y, Z} and tau a product of I/2 and Pauli eigenstates; W1 = 1."""
    singles = [np.eye(2) / 2] + [(np.eye(2) + s * PAULI[p]) / 2 for p in "XYZ" for s in (1, -1)]
    rest = [s for s in range(n) if s != j]
    for P in "XYZ":
        for combo in itertools.product(range(len(singles)), repeat=n - 1):
            tau = np.ones((1, 1))
            for c in combo:
                tau = np.kron(tau, singles[c])
            yield P, combo, embed(np.kron(PAULI[P], tau), [j] + rest, n)


def criterion_6(delta: float = 1e-3, seeds=(0, 1, 2), betas=(0.05, 0.1)) -> ExperimentReport:
    rep = _report(6, delta=delta, seeds=list(seeds), betas=list(betas))
    n = 3
    worst = -np.inf
    rows = []
    edges = 0
    for seed, beta in itertools.product(seeds, betas):
        spec = chain(n, beta, seed=seed)
        graph = build_graph(spec)
        L = balanced_lindbladian(spec)
        U = influence_upper(build_Q(graph, beta), delta).upper
        for i in range(n):
            S = L.sites[i].superop().matrix
            Phi = np.eye(S.shape[0]) + delta * S
            for j in range(n):
                best = -np.inf
                for P, combo, X in canonical_edges(n, j):
                    Y = (Phi @ X.reshape(-1)).reshape(X.shape)
                    Y = (Y + Y.conj().T) / 2
                    res = w1(Y, target=U[i, j] + 1e-6)
                    best = max(best, res.upper)
                    edges += 1
                worst = max(worst, best - U[i, j])
                rows.append({"seed": seed, "beta": beta, "i": i, "j": j, "max_w1_upper": best, "bound": U[i, j]})
    rep.check("contract", worst <= 1e-6, worst, 1e-6, "wasserstein-growth-from-jump",
              note=f"{edges} edges; value is the largest excess over the bound")
    rep.tables["entries"] = Table.from_dicts(rows)
    return rep


def _w1_mixing_time(prop, rho0, sigma, eps, times):
    """First grid time where the W1 upper bracket of rho(t) - sigma is at most eps."""
    states = prop.trajectory(rho0, times)
    for t, r in zip(times, states):
        X = r - sigma
        X = (X + X.conj().T) / 2
        if 0.5 * trace_norm(X) > eps:
            continue
        if w1(X, target=eps).upper <= eps:
            return float(t)
    return float("nan")


def criterion_7(n: int = 5, beta: float = 0.05, delta: float = 1e-3, Delta: float = 0.1, eps: float = 1e-3,
                seed: int = 0) -> ExperimentReport:
    rep = _report(7, n=n, beta=beta, delta=delta, Delta=Delta, eps=eps, seed=seed)
    spec = chain(n, beta, seed=seed)
    graph = build_graph(spec)
    Qs = build_Q(graph, beta)
    cont = dobrushin_test(influence_upper(Qs, delta), delta)
    margin = 1 - cont["max_column"]
    qhat = max(Q.hat_column_norms().max() for Q in Qs)
    rep.metrics.update({"column_margin": margin, "required_margin": 2 * delta / n,
                        "max_hat_column_sum": float(sum(Q.hat_column_norms() for Q in Qs).max()),
                        "max_single_hat_column": float(qhat)})
    rep.check("7a continuous column sums", margin >= 2 * delta / n, margin, 2 * delta / n, "dobrushin-sum",
              note="margin 1 - max_j sum_i D_ij")
    g = gibbs(spec)
    L = assemble(g)
    sigma = g.sigma
    tau_steps = tau_bound(n, delta, eps)
    t_bound = tau_steps * delta / n
    times = np.round(np.arange(0, math.ceil(t_bound) + 0.25, 0.25), 10)
    prop = Propagator(L)
    rng = np.random.default_rng(seed)
    starts = [np.diag(np.eye(2 ** n)[0]).astype(complex)]
    for _ in range(3):
        v = np.ones(1)
        for _s in range(n):
            u = rng.normal(size=2) + 1j * rng.normal(size=2)
            v = np.kron(v, u / np.linalg.norm(u))
        starts.append(np.outer(v, v.conj()))
    t_mix = max(_w1_mixing_time(prop, r0, sigma, eps, times) for r0 in starts)
    rep.metrics.update({"tau_steps": tau_steps, "tau_time": t_bound, "t_mix_measured": t_mix})
    rep.check("7b mixing time", t_mix <= t_bound, t_mix, t_bound, "dobrushin-implies-mixing",
              note="continuous time; tau steps of size delta/n")
    disc = dobrushin_test(discrete_influence_upper(Qs, Delta), Delta)
    rep.metrics["discrete_max_column"] = disc["max_column"]
    rep.check("7c discrete column sums", disc["max_column"] <= 1 - Delta / n, disc["max_column"], 1 - Delta / n,
              "discrete-dobrushin-sum")
    rep.tables["columns"] = Table.from_dicts([
        {"j": j, "continuous": float(cont["column_sums"][j]), "discrete": float(disc["column_sums"][j])}
        for j in range(n)])
    return rep


def criterion_8() -> ExperimentReport:
    rep = _report(8)
    g = maximally_mixed_gibbs(1)
    L = assemble(g)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    times = np.linspace(0, 2, 81)
    traj = mixing_experiment(L, rho0, g.sigma, times=times, method="superoperator")
    exact = np.exp(-4 * times)
    err = float(np.abs(traj.trace_distance - exact).max())
    rep.check("decay-law", err <= 1e-8, err, 1e-8, "dissipative-sink")
    rep.tables["trajectory"] = Table.from_dicts([
        {"t": float(t), "trace_distance": float(d), "exact": float(e)}
        for t, d, e in zip(times, traj.trace_distance, exact)])
    return rep


def criterion_9(L: int = 20, k_max: int = 3, chain_n: int = 200, c: float = 1e-4) -> ExperimentReport:
    rep = _report(9, L=L, k_max=k_max, chain_n=chain_n, c=c)
    graph = build_graph(grid(L, L, 0.0))
    params = measure_params(graph)
    beta_c = 1 / (10000 * params.locality ** 3 * params.growth ** 2 * params.degree)
    beta = beta_c / 2
    Qs = build_Q(graph, beta, k_max=k_max)
    res = check_Q_contraction(Qs, params, beta)
    tail = max(Q.tail for Q in Qs)
    rep.metrics.update({"params": params.as_dict(), "beta": beta, "k_max": k_max, "tail_estimate": tail})
    rep.check("Qhat column sums", res["max_column"] <= res["bound"], res["max_column"], res["bound"], "q-contracts")
    rep.check("Q one-norm", res["max_one_norm"] <= 5, res["max_one_norm"], 5, "q-one-one")
    cg = build_graph(chain(chain_n, 0.0, seed=0))
    rows = []
    mid = chain_n // 2
    pre = True
    for C in ([mid], list(range(mid - 2, mid + 2))):
        r = check_cmi_contraction(cg, C, [5, 10, 20], c, [1, 2, 4, 8])
        pre &= r["precondition"]
        for row in r["rows"]:
            rows.append({"C_size": len(C), **row})
    worst = max(r["lhs"] / r["rhs"] for r in rows)
    rep.metrics["cmi_precondition_met"] = pre
    rep.check("cmi contraction", all(r["passed"] for r in rows), worst, 1.0, "cmi-contraction",
              note="value is the largest lhs/rhs")
    rep.tables["columns"] = Table.from_dicts([{"j": j, "hat_column_sum": float(v)}
                                              for j, v in enumerate(res["column_sums"])])
    rep.tables["cmi_contraction"] = Table.from_dicts(rows)
    return rep


def criterion_10(n: int = 60, c: float = 1e-5, max_steps: int = 3, max_dist: int = 10) -> ExperimentReport:
    rep = _report(10, n=n, c=c, max_steps=max_steps, max_dist=max_dist)
    graph = build_graph(chain(n, 0.0, seed=0))
    a = n // 2 - max_dist // 2
    ends = [(a, a + d) for d in range(max_dist + 1)]
    res = check_path_sum(graph, c, list(range(1, max_steps + 1)), ends)
    brute = []
    for steps in range(1, max_steps + 1):
        for d in (0, 3, max_dist):
            ref = path_sum(graph, c, steps, a, a + d)
            vec = [r for r in res["rows"] if r["steps"] == steps and r["end"] == a + d][0]["value"]
            brute.append(abs(ref - vec) / max(ref, 1e-300))
    rep.metrics["precondition_met"] = res["precondition"]
    worst = max(r["value"] / r["bound25"] for r in res["rows"])
    rep.check("path-sum bound", res["passed"], worst, 1.0, "cmi-path-sum", note="value is the largest sum / bound")
    rep.check("enumerations agree", max(brute) <= 1e-12, max(brute), 1e-12, "cmi-path-sum")
    rep.check("compliant c", res["precondition"], c, None, "cmi-path-sum")
    rep.tables["path_sums"] = Table.from_dicts(res["rows"])
    return rep


def criterion_11(n: int = 8, beta: float = 0.1, prec: int = 256) -> ExperimentReport:
    rep = _report(11, n=n, beta=beta, prec=prec)
    dists = [1, 2, 3, 4, 5]
    res = cmi_mod.decay_experiment(n, beta, dists, prec=prec)
    vals = res.values[0]
    rep.check("positive", bool((vals > 0).all()), float(vals.min()), 0.0, "cmi-decay")
    rep.check("strictly decreasing", bool((np.diff(vals) < 0).all()), None, None, "cmi-decay")
    rep.check("log slope", res.slope <= -0.5, res.slope, -0.5, "cmi-decay")
    fr = [r["fr_ok"] for r in res.runs]
    rep.check("recovery bound", all(fr), max(r["cmi"] / r["fr_rhs"] for r in res.runs), 1.0, "recovery-cmi-bound")
    rep.check("recovery avoids A", all(r["compliant"] and r["marginal_defect"] <= 1e-10 for r in res.runs),
              max(r["marginal_defect"] for r in res.runs), 1e-10, "recovery-locality")
    rep.metrics["slope"] = res.slope
    rep.tables["decay"] = Table.from_dicts(res.runs)
    return rep


def criterion_12(count: int = 100, seed: int = 0) -> ExperimentReport:
    rep = _report(12, instances=count, seed=seed)
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(count):
        n = int(rng.integers(1, 5))
        i = int(rng.integers(n))
        d = 2 ** n
        M = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rest = [s for s in range(n) if s != i]
        M = M - extend_identity(partial_trace(M, [i], n), rest, n) / 2
        rows.append({"k": k, "n": n, "site": i, "residual": depolarizing_residual(M, i, n),
                     "trace_defect": float(np.abs(partial_trace(M, [i], n)).max())})
    worst = max(r["residual"] for r in rows)
    rep.check("identity", worst <= 1e-12, worst, 1e-12, "depolarizing-identity")
    rep.tables["instances"] = Table.from_dicts(rows)
    return rep


RUNNERS = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
           7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12}

FAST = {1: {"count": 6}, 2: {"count": 6}, 3: {}, 5: {"count": 40, "dense": 5}, 8: {}, 10: {}, 12: {}}


def run_criterion(k: int, **kw) -> ExperimentReport:
    t0 = time.perf_counter()
    try:
        rep = RUNNERS[k](**kw)
    except Exception as exc:  # noqa: BLE001 - captured into the report
        rep = _report(k, **kw)
        rep.status = "error"
        rep.error = f"{type(exc).__name__}: {exc}"
    rep.wall_clock = time.perf_counter() - t0
    return rep


def summary_line(k: int, rep: ExperimentReport) -> str:
    status = "PASS" if rep.passed else ("ERROR" if rep.status == "error" else "FAIL")
    parts = []
    for a in rep.assertions:
        v = f"{a.value:.3g}" if isinstance(a.value, (int, float)) and not isinstance(a.value, bool) else "-"
        b = f"{a.bound:.3g}" if isinstance(a.bound, (int, float)) and not isinstance(a.bound, bool) else "-"
        parts.append(f"{a.name}={'ok' if a.passed else 'FAIL'}({v} vs {b})")
    if rep.error:
        parts.append(rep.error)
    return f"criterion {k:2d} [{status}] {TITLES[k]} ({rep.wall_clock:.1f}s): " + "; ".join(parts)
