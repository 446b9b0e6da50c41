"""
Euler-Maruyama integration of the coupled group system.

Reproducibility: path ``i`` draws every normal it needs from its own Philox
stream keyed by ``(master_seed, i)``. Paths are integrated in chunks of a
fixed size, so the arithmetic applied to any path does not depend on the
number of worker threads.

Noise columns per group: 0 fatigue, 1 infection rate, 2-4 S/I/R,
5 opinion, 6 interaction probability. In shared mode the S, I and R
equations reuse the fatigue column.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from lockdown import dynamics as dyn
from lockdown.control import ControlOptions
from lockdown.model import (IBETA, ID, II, IOMEGA, IR, IS, IW, IZ, ConstantPolicy, FeedbackPolicy,
                            GroupParams, GroupState, PiecewisePolicy, SimConfig, policy_eval)
from lockdown.opinion import opinion_pair_drift_diffusion, w_drift_diffusion

N_NOISE = 7
CHUNK_PATHS = 128
_RESAMPLE_KEY = 1


class RngStream:
    """Normal draws for one (master_seed, path) pair; ``draws`` counts values handed out."""

    def __init__(self, master_seed: int, path_index: int, purpose: int = 0):
        self.master_seed = int(master_seed)
        self.path_index = int(path_index)
        key = [self.master_seed & 0xFFFFFFFFFFFFFFFF, self.path_index, purpose]
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
        self.draws = 0

    def normals(self, shape) -> np.ndarray:
        out = self._gen.standard_normal(shape)
        self.draws += out.size
        return out


def euler_maruyama_step(state, drift: Callable, diffusion: Callable, dt: float, noise,
                        time: float = 0.0, e: float | None = None,
                        positivity: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """One step of x + a dt + b sqrt(dt) xi with a diagonal diffusion b."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != x.shape:
        raise ValueError("noise dimension does not match the state")
    a = np.asarray(drift(time, x, e), dtype=float)
    b = np.asarray(diffusion(time, x, e), dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise FloatingPointError("non-finite drift or diffusion")
    nxt = x + a * dt + b * math.sqrt(dt) * noise
    return positivity(nxt) if positivity is not None else nxt


def integrate(x0, drift: Callable, diffusion: Callable, dt: float, increments) -> np.ndarray:
    """Euler path driven by explicit Brownian increments (n_steps, *x0.shape)."""
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for i, db in enumerate(np.asarray(increments, dtype=float)):
        t = i * dt
        x = x + np.asarray(drift(t, x)) * dt + np.asarray(diffusion(t, x)) * db
        out.append(x.copy())
    return np.array(out)


@dataclass
class Trajectory:
    times: np.ndarray  # (n_t,)
    states: np.ndarray  # (n_t, K, 8) in STATE_FIELDS order
    e: np.ndarray  # (n_t, K)
    path: int = 0
    exploded_at: int | None = None  # step index at which the path was frozen
    noise: np.ndarray | None = None  # (n_t - 1, K, 7) driving normals, when recorded
    flags: list = field(default_factory=list)

    def group_state(self, step: int, group: int = 0) -> GroupState:
        return GroupState.from_array(self.states[step, group], time=float(self.times[step]))


@dataclass(frozen=True)
class SystemSpec:
    """Everything the step function needs besides the state."""

    config: SimConfig
    params: tuple  # GroupParams per group
    p_attach: np.ndarray  # (K,)
    policy: object
    control_options: ControlOptions | None = None

    @property
    def stacked(self):
        return dyn.stack_params(self.params)


def _partner_opinion(omega: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Mean opinion of the other groups; the configured constant when alone."""
    k = omega.shape[-1]
    if k == 1:
        return np.full_like(omega, cfg.omega_partner)
    return (omega.sum(axis=-1, keepdims=True) - omega) / (k - 1)


def drift_and_diffusion(x: np.ndarray, e: np.ndarray, sp: SystemSpec, stacked) -> tuple[np.ndarray, np.ndarray]:
    """Drift (..., K, 8) and diffusion (..., K, 7) of the full system; D carries no noise."""
    p = stacked
    z, beta, S, I, R, om, W = (x[..., j] for j in (IZ, IBETA, IS, II, IR, IOMEGA, IW))
    dS, dI, dR = dyn.sir_drift(beta, S, I, R, e, p)
    partner = _partner_opinion(om, sp.config)
    pair = opinion_pair_drift_diffusion(om, partner, e, e, p)
    dW, gW = w_drift_diffusion(om, partner, e, p)
    icu = (p.h_icu * I).sum(axis=-1, keepdims=True)
    vp = varpi_array(icu, p)
    drift = np.stack([
        dyn.fatigue_drift(z, e, sp.p_attach, p),
        dyn.infection_rate_drift(z, e, sp.p_attach, p),
        dS, dI, dR, pair.drift_k, dW, p.h_icu * vp * I,
    ], axis=-1)
    diff = np.stack([
        dyn.fatigue_diffusion(z, p),
        np.broadcast_to(dyn.infection_rate_diffusion(p), z.shape),
        p.sigma2 * (S - p.s_eq), p.sigma3 * (I - p.i_eq), p.sigma4 * (R - p.r_eq),
        pair.diffusion_k, gW,
    ], axis=-1)
    return drift, diff


def varpi_array(icu, p):
    load = np.minimum(1.0, icu / p.h_capacity)
    return p.pi_min + (p.pi_max - p.pi_min) * load


def _expand_noise(dw: np.ndarray, cfg: SimConfig) -> np.ndarray:
    if cfg.noise_mode == "shared":
        dw = dw.copy()
        dw[..., 2:5] = dw[..., 0:1]
    return dw


def advance(x: np.ndarray, e: np.ndarray, dw: np.ndarray, dt: float, sp: SystemSpec, stacked) -> np.ndarray:
    """Raw Euler step driven by Brownian increments dw (..., K, 7), before positivity."""
    drift, diff = drift_and_diffusion(x, e, sp, stacked)
    dw = _expand_noise(dw, sp.config)
    nxt = x + drift * dt
    nxt[..., :7] += diff * dw
    if sp.config.beta_mode == "algebraic":
        nxt[..., IBETA] = dyn.infection_rate_drift(nxt[..., IZ], e, sp.p_attach, stacked)
    return nxt


def clamp_state(x: np.ndarray) -> np.ndarray:
    out = x.copy()
    for j in (IZ, IBETA, IS, II, IR, ID):
        np.maximum(out[..., j], 0.0, out=out[..., j])
    np.clip(out[..., IOMEGA], -1.0, 1.0, out=out[..., IOMEGA])
    np.clip(out[..., IW], 0.0, 1.0, out=out[..., IW])
    return out


def out_of_bounds(x: np.ndarray) -> np.ndarray:
    """Per-leading-index flag: any positivity or range constraint violated."""
    nonneg = x[..., [IZ, IBETA, IS, II, IR, ID]] < 0
    bad = nonneg.any(axis=-1) | (np.abs(x[..., IOMEGA]) > 1) | (x[..., IW] < 0) | (x[..., IW] > 1)
    return bad.reshape(bad.shape[0], -1).any(axis=-1)


def _policy_values(sp: SystemSpec, t: float, x: np.ndarray) -> np.ndarray:
    """Lockdown intensity per (path, group) at time t."""
    pol = sp.policy
    n_paths, k = x.shape[:2]
    if isinstance(pol, ConstantPolicy):
        return np.full((n_paths, k), pol.e)
    if isinstance(pol, PiecewisePolicy):
        return np.full((n_paths, k), pol.value(t))
    if isinstance(pol, FeedbackPolicy):
        out = np.empty((n_paths, k))
        partner = _partner_opinion(x[..., IOMEGA], sp.config)
        for i in range(n_paths):
            for g in range(k):
                st = GroupState.from_array(x[i, g], time=t)
                out[i, g] = policy_eval(pol, t, st, sp.params[g], p_attach=float(sp.p_attach[g]),
                                        omega_partner=float(partner[i, g]), options=sp.control_options)
        return out
    raise TypeError(f"unknown policy {pol!r}")


def _run_chunk(sp: SystemSpec, x0: np.ndarray, paths: Sequence[int], record_noise: bool) -> list[Trajectory]:
    cfg = sp.config
    n_steps, dt = cfg.n_steps, cfg.dt
    stacked = sp.stacked
    k = x0.shape[0]
    streams = [RngStream(cfg.master_seed, p) for p in paths]
    normals = np.stack([s.normals((n_steps, k, N_NOISE)) for s in streams], axis=1)  # (n_steps, P, K, 7)
    resample = None
    n_p = len(paths)
    states = np.empty((n_steps + 1, n_p, k, 8))
    evals = np.empty((n_steps + 1, n_p, k))
    x = np.broadcast_to(x0, (n_p, k, 8)).copy()
    states[0] = x
    alive = np.ones(n_p, dtype=bool)
    exploded = [None] * n_p
    sqdt = math.sqrt(dt)
    for i in range(n_steps):
        t = i * dt
        e = _policy_values(sp, t, x)
        evals[i] = e
        xi = normals[i]
        nxt = advance(x, e, sqdt * xi, dt, sp, stacked)
        if cfg.positivity == "resample":
            if resample is None:
                resample = [RngStream(cfg.master_seed, p, _RESAMPLE_KEY) for p in paths]
            for _ in range(100):
                bad = out_of_bounds(nxt) & alive
                if not bad.any():
                    break
                idx = np.flatnonzero(bad)
                xi = xi.copy()
                xi[idx] = np.stack([resample[j].normals((k, N_NOISE)) for j in idx])
                nxt[idx] = advance(x[idx], e[idx], sqdt * xi[idx], dt, sp, stacked)
            normals[i] = xi
        nxt = clamp_state(nxt)
        blown = alive & ~(np.isfinite(nxt) & (np.abs(nxt) <= cfg.overflow_guard)).reshape(n_p, -1).all(axis=1)
        for j in np.flatnonzero(blown):
            exploded[j] = i + 1
        alive &= ~blown
        x = np.where(alive[:, None, None], nxt, x)
        states[i + 1] = x
    evals[n_steps] = _policy_values(sp, n_steps * dt, x)
    times = np.arange(n_steps + 1) * dt
    # record the normals each equation actually saw (shared mode copies the fatigue column)
    driving = _expand_noise(normals, cfg) if record_noise else None
    out = []
    for j, p in enumerate(paths):
        tr = Trajectory(times, states[:, j].copy(), evals[:, j].copy(), path=p, exploded_at=exploded[j],
                        noise=driving[:, j].copy() if record_noise else None)
        if exploded[j] is not None:
            tr.flags.append("exploded")
        out.append(tr)
    return out


def _check_inputs(config: SimConfig, params: Sequence[GroupParams], initial: Sequence[GroupState],
                  p_attach: Sequence[float]):
    k = config.n_groups
    if not (len(params) == len(initial) == len(p_attach) == k):
        raise ValueError(f"expected {k} groups of params, initial states and attachment probabilities")
    for st in initial:
        st.check()
    if any(not 0 < p <= 1 for p in p_attach):
        raise ValueError("attachment probabilities must lie in (0, 1]")


def iter_ensemble(config: SimConfig, params: Sequence[GroupParams], policy, initial: Sequence[GroupState],
                  p_attach: Sequence[float], threads: int = 0, record_noise: bool = False,
                  control_options: ControlOptions | None = None) -> Iterator[Trajectory]:
    """Yield trajectories in path order, computing fixed-size chunks in parallel."""
    _check_inputs(config, params, initial, p_attach)
    sp = SystemSpec(config, tuple(params), np.asarray(p_attach, dtype=float), policy, control_options)
    x0 = np.stack([s.as_array() for s in initial])
    chunks = [range(a, min(a + CHUNK_PATHS, config.n_paths)) for a in range(0, config.n_paths, CHUNK_PATHS)]
    workers = threads if threads > 0 else min(len(chunks), os.cpu_count() or 1)
    if workers <= 1:
        for c in chunks:
            yield from _run_chunk(sp, x0, c, record_noise)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # bounded look-ahead keeps memory flat for large ensembles
        pending = []
        it = iter(chunks)
        for c in it:
            pending.append(pool.submit(_run_chunk, sp, x0, c, record_noise))
            if len(pending) >= 2 * workers:
                yield from pending.pop(0).result()
        for f in pending:
            yield from f.result()


def simulate_ensemble(config: SimConfig, params: Sequence[GroupParams], policy, initial: Sequence[GroupState],
                      p_attach: Sequence[float], threads: int = 0, record_noise: bool = False,
                      control_options: ControlOptions | None = None) -> list[Trajectory]:
    return list(iter_ensemble(config, params, policy, initial, p_attach, threads, record_noise, control_options))


def simulate_with_increments(config: SimConfig, params: Sequence[GroupParams], policy,
                             initial: Sequence[GroupState], p_attach: Sequence[float],
                             increments: np.ndarray) -> np.ndarray:
    """Final states (P, K, 8) of paths driven by given Brownian increments (n_steps, P, K, 7)."""
    _check_inputs(config, params, initial, p_attach)
    sp = SystemSpec(config, tuple(params), np.asarray(p_attach, dtype=float), policy)
    stacked = sp.stacked
    n_paths = increments.shape[1]
    x = np.broadcast_to(np.stack([s.as_array() for s in initial]), (n_paths, config.n_groups, 8)).copy()
    for i, dw in enumerate(increments):
        e = _policy_values(sp, i * config.dt, x)
        x = clamp_state(advance(x, e, dw, config.dt, sp, stacked))
    return x


def simulate_fatigue_paths(params: GroupParams, p_attach: float, e: float, z0: float, t_horizon: float,
                           dt: float, n_paths: int, master_seed: int = 0) -> np.ndarray:
    """Fatigue-only ensemble (n_paths, n_steps + 1) under a constant intensity, clamped at zero."""
    n_steps = round(t_horizon / dt)
    normals = np.stack([RngStream(master_seed, p).normals(n_steps) for p in range(n_paths)], axis=1)
    z = np.full(n_paths, float(z0))
    out = np.empty((n_steps + 1, n_paths))
    out[0] = z
    sqdt = math.sqrt(dt)
    for i in range(n_steps):
        z = z + dyn.fatigue_drift(z, e, p_attach, params) * dt + dyn.fatigue_diffusion(z, params) * sqdt * normals[i]
        np.maximum(z, 0.0, out=z)
        out[i + 1] = z
    return out.T


def default_c0(params: GroupParams, p_attach: float) -> float:
    return max(1.0, params.kappa0 + params.kappa1 * p_attach + params.sigma0**2)


@dataclass(frozen=True)
class MomentReport:
    lhs: float
    stderr: float
    bound: float
    satisfied: bool


def fatigue_moment_check(z_paths, c0: float, t_horizon: float, min_paths: int = 1000) -> MomentReport:
    """Monte Carlo E sup|z|^2 against c0 (1 + E|z(0)|^2) exp(c0 t)."""
    z = np.asarray(z_paths, dtype=float)
    if z.size == 0:
        raise ValueError("empty ensemble")
    if z.ndim != 2 or z.shape[0] < min_paths:
        raise ValueError(f"need at least {min_paths} paths as rows")
    sup_sq = np.max(z**2, axis=1)
    lhs = float(sup_sq.mean())
    se = float(sup_sq.std(ddof=1) / math.sqrt(len(sup_sq)))
    bound = c0 * (1.0 + float(np.mean(z[:, 0] ** 2))) * math.exp(c0 * t_horizon)
    return MomentReport(lhs, se, bound, lhs + 3 * se <= bound)
