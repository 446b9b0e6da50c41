"""
Acceptance criteria as runnable checks.

Each check returns a ``CriterionResult`` with the measured value, the
threshold it is held to and the wall-clock time it took. ``run_criteria``
is what ``lockdown validate`` executes.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from lockdown import control as ctl
from lockdown import dynamics as dyn
from lockdown import network as net
from lockdown import opinion as op
from lockdown import sde
from lockdown.model import ConstantPolicy, GroupParams, GroupState, SimConfig

LD = np.longdouble


@dataclass
class CriterionResult:
    key: str
    title: str
    measured: float
    threshold: float
    passed: bool
    runtime_s: float = 0.0
    runtime_limit_s: float | None = None
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        limit = f" (limit {self.runtime_limit_s:g}s)" if self.runtime_limit_s else ""
        return (f"[{status}] {self.key}: {self.title}: measured={self.measured:.6g} "
                f"threshold={self.threshold:.6g} runtime={self.runtime_s:.2f}s{limit}")

    def to_dict(self) -> dict:
        return asdict(self)


def _timed(key: str, title: str, limit: float | None):
    def wrap(fn: Callable[..., tuple]):
        def run(**kwargs) -> CriterionResult:
            t0 = time.perf_counter()
            measured, threshold, ok, details = fn(**kwargs)
            elapsed = time.perf_counter() - t0
            within = limit is None or elapsed <= limit
            if not within:
                details["runtime_exceeded"] = True
            return CriterionResult(key, title, float(measured), float(threshold), bool(ok and within),
                                   elapsed, limit, details)
        run.key = key
        return run
    return wrap


# --- graph corpus ------------------------------------------------------------

def _g(n, edges):
    return net.Graph(n, tuple(edges))


def small_graph_corpus(max_edges: int = 10) -> dict[str, net.Graph]:
    """Named desk-scale graphs, filtered by edge count."""
    corpus = {
        "edge": _g(2, [(0, 1)]),
        "path_2": _g(3, [(0, 1), (1, 2)]),
        "two_edges": _g(4, [(0, 1), (2, 3)]),
        "triangle": _g(3, [(0, 1), (1, 2), (0, 2)]),
        "path_3": _g(4, [(0, 1), (1, 2), (2, 3)]),
        "star_3": _g(4, [(0, 1), (0, 2), (0, 3)]),
        "cycle_4": _g(4, [(0, 1), (1, 2), (2, 3), (0, 3)]),
        "path_4": _g(5, [(0, 1), (1, 2), (2, 3), (3, 4)]),
        "star_4": _g(5, [(0, 1), (0, 2), (0, 3), (0, 4)]),
        "triangle_pendant": _g(4, [(0, 1), (1, 2), (0, 2), (2, 3)]),
        "k4_minus_edge": _g(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]),
        "k4": _g(4, [(u, v) for u in range(4) for v in range(u + 1, 4)]),
        "k23": _g(5, [(u, v) for u in (0, 1) for v in (2, 3, 4)]),
        "ladder_3": _g(6, [(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)]),
        "wheel_4": _g(5, [(0, 1), (1, 2), (2, 3), (0, 3), (4, 0), (4, 1), (4, 2), (4, 3)]),
        "cycle_10": _g(10, [(i, (i + 1) % 10) for i in range(10)]),
        "k5": _g(5, [(u, v) for u in range(5) for v in range(u + 1, 5)]),
    }
    return {name: g for name, g in corpus.items() if g.n_edges <= max_edges}


# --- random control contexts ---------------------------------------------------

def random_context(rng: np.random.Generator, max_varkappa: float = 0.2) -> ctl.ControlContext:
    """A context with log-uniform states and rates drawn inside their validated ranges."""
    z, s, i, r = np.exp(rng.uniform(math.log(0.1), math.log(1e3), 4))
    w = math.exp(rng.uniform(math.log(0.1), 0.0))  # a probability, so capped at 1
    vp = GroupParams().varpi_params
    params = GroupParams(
        kappa0=rng.uniform(0.01, 1.0), kappa1=rng.uniform(0.01, 1.0),
        beta1=rng.uniform(0.0, 0.1), beta2=rng.uniform(1e-3, 1.0), m_pollution=rng.uniform(0.5, 2.0),
        theta_exp=rng.uniform(1.2, 4.0), gamma_fatigue=rng.uniform(0.1, 0.9),
        eta_birth=rng.uniform(0.0, 1e-3), r_sat=rng.uniform(0.01, 1.0), tau_death=rng.uniform(0.0, 0.01),
        zeta_waning=rng.uniform(0.0, 0.05), mu_recovery=rng.uniform(0.05, 0.3),
        varkappa=rng.uniform(0.01, max_varkappa), mu4=rng.uniform(0.5, 1.5),
        rho_discount=rng.uniform(0.01, 0.2), theta_weight=rng.uniform(1e-4, 1e-2),
        chi_death=rng.uniform(10.0, 200.0), h_icu=rng.uniform(0.01, 0.2),
        varpi_params=vp, n_pop=float(rng.uniform(500.0, 5000.0)),
        sigma0=rng.uniform(0, 0.2), sigma2=rng.uniform(0, 0.05), sigma3=rng.uniform(0, 0.05),
        sigma4=rng.uniform(0, 0.05), sigma8=rng.uniform(0, 0.1),
    )
    state = GroupState(z=z, beta=0.1, s_comp=s, i_comp=i, r_comp=r, omega=rng.uniform(-1, 1),
                       w_prob=w, time=rng.uniform(0.0, 10.0))
    return ctl.ControlContext(state, p_attach=rng.uniform(0.01, 0.5), omega_partner=rng.uniform(-1, 1),
                              params=params)


def admissible_contexts(n: int, seed: int = 2024, options: ctl.ControlOptions = ctl.DEFAULT_OPTIONS):
    """Contexts with C > 0 and an interior optimum (0 < B/C < 1), found by rejection."""
    rng = np.random.default_rng(seed)
    out = []
    drawn = 0
    while len(out) < n:
        drawn += 1
        ctx = random_context(rng)
        bc = ctl.b_tilde_c_tilde(ctx, 0.5, options)
        if bc.c_tilde > 0 and 0 < bc.b_tilde < bc.c_tilde:
            out.append(ctx)
    return out, drawn


# --- the twelve criteria ---------------------------------------------------------

@_timed("oracle", "closed-form optimum matches the numerical minimiser", 10.0)
def check_oracle(n_contexts: int = 100, seed: int = 2024, tol: float = 1e-6):
    contexts, drawn = admissible_contexts(n_contexts, seed)
    gap = slope = 0.0
    for ctx in contexts:
        closed = ctl.e_star_closed_form(ctx)
        numeric = ctl.e_star_numeric(ctx)
        gap = max(gap, abs(closed.e - numeric.e))
        slope = max(slope, abs(ctl.df_tilde_de(ctx, closed.e)))
    measured = max(gap, slope)
    return measured, tol, measured <= tol, {"max_e_gap": gap, "max_abs_derivative": slope,
                                            "contexts": len(contexts), "drawn": drawn}


def random_measure_pair(rng: np.random.Generator, max_atoms: int = 8):
    labels = [f"a{j}" for j in range(max_atoms)]

    def one():
        k = int(rng.integers(1, max_atoms + 1))
        atoms = list(rng.choice(labels, size=k, replace=False))
        w = rng.random(k) + 1e-3
        return op.DiscreteMeasure(tuple(atoms), tuple(w / w.sum()))

    return one(), one()


@_timed("tv", "three total-variation forms agree", 5.0)
def check_tv(n_pairs: int = 10_000, seed: int = 7, tol: float = 1e-12):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        worst = max(worst, op.tv_forms(*random_measure_pair(rng)).max_discrepancy)
    return worst, tol, worst <= tol, {"pairs": n_pairs}


@_timed("cluster", "random-cluster measure reduces to independent percolation at q = 1", None)
def check_cluster(tol_exact: float = 1e-14, tol_mass: float = 1e-12):
    dev = mass_err = 0.0
    for graph in small_graph_corpus(10).values():
        for rho in (0.2, 0.5, 0.8):
            for idx in range(1 << graph.n_edges):
                cfg = net.EdgeConfig.from_index(idx, graph.n_edges)
                bern = math.prod(rho if b else 1.0 - rho for b in cfg.bits)
                dev = max(dev, abs(net.random_cluster_prob(graph, net.ClusterParams(rho, 1.0), cfg) - bern))
            for q in (1.0, 1.5, 2.0, 3.0):
                probs = net.cluster_distribution(graph, net.ClusterParams(rho, q))
                mass_err = max(mass_err, abs(math.fsum(probs) - 1.0))
    edge = small_graph_corpus()["edge"]
    p_open = net.random_cluster_prob(edge, net.ClusterParams(0.5, 2.0), net.EdgeConfig((1,)))
    edge_err = abs(p_open - 1.0 / 3.0)
    ok = dev <= tol_exact and mass_err <= tol_mass and edge_err <= tol_exact
    return max(dev, edge_err), tol_exact, ok, {"max_bernoulli_deviation": dev, "max_mass_error": mass_err,
                                               "single_edge_open": p_open}


@_timed("fkg", "FKG inequality for all increasing events on small graphs", 30.0)
def check_fkg():
    graphs = list(small_graph_corpus(4).values())
    res = net.fkg_sweep(graphs, (1.0, 1.5, 2.0, 3.0), (0.2, 0.5, 0.8))
    return res.worst_margin, -1e-12, res.holds, {"pairs_checked": res.n_checks, "failures": res.n_failures,
                                                 "graphs": len(graphs)}


@_timed("moment", "second-moment bound on fatigue paths", 60.0)
def check_moment(n_paths: int = 10_000, seed: int = 11):
    params = GroupParams(kappa0=0.2, kappa1=0.1, sigma0=0.1)
    p, e, t, dt = 0.5, 0.5, 10.0, 0.01
    paths = sde.simulate_fatigue_paths(params, p, e, 0.0, t, dt, n_paths, seed)
    c0 = sde.default_c0(params, p)
    rep = sde.fatigue_moment_check(paths, c0, t)
    return rep.lhs + 3 * rep.stderr, rep.bound, rep.satisfied, {"lhs": rep.lhs, "stderr": rep.stderr, "c0": c0}


@_timed("zmax", "deterministic fatigue under full lockdown reaches its ceiling", None)
def check_zmax(tol: float = 1e-3):
    params = GroupParams(kappa0=0.2, kappa1=0.1, sigma0=0.0)
    z = sde.simulate_fatigue_paths(params, 0.5, 0.0, 0.0, 200.0, 0.01, 1)[0]
    target = dyn.z_max(params, 0.5)
    err = abs(z[-1] - target)
    return err, tol, err <= tol, {"z_final": z[-1], "z_max": target}


def _conservation_run(dt: float = 0.001, t: float = 10.0):
    params = GroupParams(eta_birth=0.0, tau_death=0.0, zeta_waning=0.0, mu_recovery=0.0, sigma0=0.0,
                         sigma1=0.0, sigma2=0.0, sigma3=0.0, sigma4=0.0, sigma8=0.0, sigma10=0.0,
                         beta1=0.01, beta2=0.02)
    cfg = SimConfig(t_horizon=t, dt=dt, n_paths=1)
    init = GroupState(z=0.5, beta=0.05, s_comp=900.0, i_comp=100.0, r_comp=0.0)
    return sde.simulate_ensemble(cfg, [params], ConstantPolicy(0.6), [init], [0.2])[0]


@_timed("conservation", "S + I conserved without vital dynamics or noise", None)
def check_conservation(tol: float = 1e-6):
    tr = _conservation_run()
    total = tr.states[:, 0, 2] + tr.states[:, 0, 3]
    drift = float(np.max(np.abs(total - total[0])))
    return drift, tol, drift <= tol, {"final_I": float(tr.states[-1, 0, 3])}


@_timed("convexity", "infection-rate drift convex in e", None)
def check_convexity(n_draws: int = 100, seed: int = 5):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.02, 0.98, 50).astype(LD)
    h = LD(1e-3)
    worst = math.inf
    done = 0
    while done < n_draws:
        params = GroupParams(kappa0=rng.uniform(0.01, 1), kappa1=rng.uniform(0.01, 1),
                             beta1=rng.uniform(0, 0.1), beta2=rng.uniform(1e-3, 1),
                             m_pollution=rng.uniform(0.5, 2), theta_exp=rng.uniform(1.05, 4),
                             gamma_fatigue=rng.uniform(0.05, 0.95))
        z, p = rng.uniform(0, 5), rng.uniform(0.01, 1)
        if not dyn.fatigue_pressure(z, p, params) < 1:
            continue
        done += 1
        f = lambda e: dyn.infection_rate_drift(LD(z), e, LD(p), params)  # noqa: E731
        second = (f(grid + h) - 2 * f(grid) + f(grid - h)) / h**2
        worst = min(worst, float(second.min()))
    return worst, 0.0, worst > 0, {"draws": n_draws}


@_timed("ba", "preferential-attachment degree law", 30.0)
def check_ba(n: int = 10_000, m: int = 2, n_seeds: int = 20):
    graphs = [net.ba_generate(n, m, seed) for seed in range(n_seeds)]
    expected_edges = m * (n - m - 1) + m * (m + 1) // 2
    edges_ok = all(g.n_edges == expected_edges for g in graphs)
    connected = all(g.is_connected() for g in graphs)
    alpha = net.degree_tail_exponent(graphs)
    ok = edges_ok and connected and 2.2 <= alpha <= 3.8
    return alpha, 3.0, ok, {"edges_ok": edges_ok, "connected": connected, "window": [2.2, 3.8]}


@_timed("determinism", "simulate output independent of thread count", None)
def check_determinism(config_path: str | None = None, overrides=()):
    from lockdown.cli import main

    with tempfile.TemporaryDirectory() as tmp:
        digests = []
        for threads in (1, 4):
            out = Path(tmp) / f"t{threads}"
            args = ["simulate", "--out", str(out), "--threads", str(threads)]
            if config_path:
                args += ["--config", str(config_path)]
            for ov in overrides:
                args += ["--override", ov]
            code = main(args)
            if code != 0:
                return 1.0, 0.0, False, {"exit_code": code}
            digests.append((out / "trajectories.csv").read_bytes())
    same = digests[0] == digests[1]
    return float(not same), 0.0, same, {"bytes": len(digests[0])}


@_timed("fp", "transition-function step exact and positive", None)
def check_fp(tol: float = 1e-12):
    rng = np.random.default_rng(3)
    ctx, _ = admissible_contexts(1, seed=99)
    f = ctl.f_tilde(ctx[0], 0.5)
    worst = 0.0
    for n in (1, 2, 7, 100, 1000):
        dt = 10.0 / (abs(f) * n)
        one = ctl.fp_step(ctl.WaveValue(0.0), None, 0.5, n * dt, f_value=f)
        halves = ctl.WaveValue(0.0)
        for _ in range(2 * n):
            halves = ctl.fp_step(halves, None, 0.5, dt / 2, f_value=f)
        worst = max(worst, abs(math.expm1(halves.log_psi - one.log_psi)))
    psi = ctl.WaveValue(0.0)
    steps = rng.uniform(-10.0, 10.0, 1_000_000)
    positive = True
    for v in steps:
        psi = ctl.fp_step(psi, None, 0.5, 1.0, f_value=v)
        positive &= psi.is_positive
    return worst, tol, worst <= tol and positive, {"stays_positive": bool(positive), "final_log_psi": psi.log_psi}


@_timed("posterior", "posterior and tolerance closed forms", None)
def check_posterior(tol: float = 1e-14):
    uniform = op.CostDistribution()
    errs = [abs(op.posterior_p(0.0, p0) - p0) for p0 in (0.1, 0.3, 0.5, 0.9)]
    errs += [abs(op.posterior_p(1.0, p0)) for p0 in (0.1, 0.3, 0.5, 0.9)]
    errs += [abs(op.tolerance_rate(1.0, uniform, p0) - 1.0) for p0 in (0.1, 0.3, 0.5)]
    errs.append(abs(op.posterior_p(0.5, 0.5) - 1.0 / 3.0))
    errs.append(abs(op.tolerance_rate(0.5, uniform, 0.5) - 2.0 / 3.0))
    worst = max(errs)
    return worst, tol, worst <= tol, {}


DETERMINISM_OVERRIDES = ("simulation.n_paths=300", "simulation.t_horizon=2.0", "simulation.dt=0.01")

CRITERIA = {c.key: c for c in (check_oracle, check_tv, check_cluster, check_fkg, check_moment, check_zmax,
                               check_conservation, check_convexity, check_ba, check_determinism, check_fp,
                               check_posterior)}


def run_criteria(only=None, config_path: str | None = None, overrides=()) -> list[CriterionResult]:
    keys = list(CRITERIA) if not only else list(only)
    unknown = [k for k in keys if k not in CRITERIA]
    if unknown:
        raise KeyError(f"unknown criteria: {', '.join(unknown)}")
    results = []
    for key in keys:
        if key == "determinism":
            # without a config, use enough paths to span several integration chunks
            ov = tuple(overrides) if config_path or overrides else DETERMINISM_OVERRIDES
            results.append(CRITERIA[key](config_path=config_path, overrides=ov))
        else:
            results.append(CRITERIA[key]())
    return results
