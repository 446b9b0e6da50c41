"""
Contact networks: Barabasi-Albert growth, attachment probabilities and the
random-cluster measure on small graphs.

Edge configurations are indexed by integers: bit i of the index is the state
of edge i (1 = open). The random-cluster weight of a configuration is::

    prod_e rho^open(e) * (1 - rho)^(1 - open(e)) * q^(number of open components)

and probabilities are weights divided by their sum over all 2^|E| configurations.
Exact enumeration is refused above ``ENUMERATION_GUARD`` edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

ENUMERATION_GUARD = 20


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: tuple

    def __post_init__(self):
        canon = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ValueError(f"edge ({u}, {v}) references a missing vertex")
            canon.append((min(u, v), max(u, v)))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate edge")
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        if self.edges:
            np.add.at(deg, np.array(self.edges).ravel(), 1)
        return deg

    def is_connected(self) -> bool:
        if self.n_vertices <= 1:
            return True
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.n_vertices,) * 2)
        n_comp, _ = connected_components(adj, directed=False)
        return n_comp == 1


@dataclass(frozen=True)
class EdgeConfig:
    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("edge states must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_index(cls, index: int, n_edges: int) -> "EdgeConfig":
        return cls(tuple((index >> i) & 1 for i in range(n_edges)))

    @property
    def index(self) -> int:
        return sum(b << i for i, b in enumerate(self.bits))


@dataclass(frozen=True)
class ClusterParams:
    rho_signal: float
    q_states: float

    def __post_init__(self):
        if not 0.0 < self.rho_signal < 1.0:
            raise ValueError("rho_signal must lie in (0, 1)")
        if not self.q_states > 0:
            raise ValueError("q_states must be positive")


def attach_probability(degrees: Sequence[float], node: int) -> float:
    degrees = list(degrees)
    if not degrees:
        raise ValueError("empty degree vector")
    if not 0 <= node < len(degrees):
        raise IndexError(f"node {node} out of range")
    total = math.fsum(degrees)
    if total <= 0:
        raise ValueError("all degrees are zero")
    return float(degrees[node] / total)


def ba_generate(n: int, m: int, seed: int) -> Graph:
    """Grow a preferential-attachment graph from a complete seed graph on m+1 vertices.

    Each new vertex draws m distinct targets with probability proportional to
    degree, degrees frozen for the duration of the vertex's draws.
    """
    if m < 1 or n <= m:
        raise ValueError(f"need n > m >= 1 (got n={n}, m={m})")
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u in range(m + 1) for v in range(u + 1, m + 1)]
    # every vertex appears once per incident edge, so a uniform pick is degree-weighted
    endpoints = [x for e in edges for x in e]
    for new in range(m + 1, n):
        pool = len(endpoints)
        targets: list[int] = []
        while len(targets) < m:
            t = endpoints[int(rng.random() * pool)]
            if t not in targets:
                targets.append(t)
        for t in targets:
            edges.append((t, new))
            endpoints.extend((t, new))
    return Graph(n, tuple(edges))


def hub_attach_probabilities(graph: Graph, n_groups: int) -> list[float]:
    """Attachment probability of each group's hub: the k-th highest-degree vertex."""
    deg = graph.degrees()
    if n_groups > graph.n_vertices:
        raise ValueError("more groups than vertices")
    order = np.argsort(-deg, kind="stable")
    return [attach_probability(deg, int(order[k])) for k in range(n_groups)]


def degree_histogram(graph: Graph) -> list[tuple[int, int]]:
    values, counts = np.unique(graph.degrees(), return_counts=True)
    return [(int(v), int(c)) for v, c in zip(values, counts)]


def degree_tail_exponent(graphs: Iterable[Graph], k_min: int | None = None, min_count: int = 10) -> float:
    """Power-law exponent of the pooled degree distribution from a log-log CCDF fit.

    A degree density ~ k^-a has CCDF ~ k^(1-a), so the exponent is 1 - slope.
    """
    deg = np.concatenate([g.degrees() for g in graphs])
    k_min = k_min if k_min is not None else 2 * int(deg.min())
    values = np.unique(deg[deg >= k_min])
    n_at_least = np.array([(deg >= v).sum() for v in values])
    keep = n_at_least >= min_count
    x, y = np.log(values[keep]), np.log(n_at_least[keep] / deg.size)
    slope = np.polyfit(x, y, 1)[0]
    return float(1.0 - slope)


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def count_open_components(graph: Graph, config: EdgeConfig) -> int:
    if len(config.bits) != graph.n_edges:
        raise ValueError("configuration length does not match the edge count")
    parent = list(range(graph.n_vertices))
    count = graph.n_vertices
    for (u, v), bit in zip(graph.edges, config.bits):
        if bit:
            ru, rv = _find(parent, u), _find(parent, v)
            if ru != rv:
                parent[ru] = rv
                count -= 1
    return count


def _check_guard(graph: Graph, guard: int):
    if graph.n_edges > guard:
        raise ValueError(f"{graph.n_edges} edges exceed the enumeration guard of {guard}")


@lru_cache(maxsize=256)
def _component_counts(graph: Graph) -> np.ndarray:
    n_cfg = 1 << graph.n_edges
    return np.array([count_open_components(graph, EdgeConfig.from_index(i, graph.n_edges))
                     for i in range(n_cfg)], dtype=np.int64)


def _bernoulli_weight(config: EdgeConfig, rho: float) -> float:
    w = 1.0
    for bit in config.bits:  # fixed edge order keeps the product bit-reproducible
        w *= rho if bit else 1.0 - rho
    return w


def cluster_distribution(graph: Graph, params: ClusterParams, guard: int = ENUMERATION_GUARD) -> np.ndarray:
    """Random-cluster probabilities of every configuration, indexed by configuration bits."""
    _check_guard(graph, guard)
    n_cfg = 1 << graph.n_edges
    bern = np.array([_bernoulli_weight(EdgeConfig.from_index(i, graph.n_edges), params.rho_signal)
                     for i in range(n_cfg)])
    if params.q_states == 1.0:
        return bern  # the component factor is identically one
    weights = bern * np.power(params.q_states, _component_counts(graph).astype(float))
    return weights / math.fsum(weights)


def partition_function(graph: Graph, params: ClusterParams, guard: int = ENUMERATION_GUARD) -> float:
    _check_guard(graph, guard)
    if params.q_states == 1.0:
        return 1.0
    n_cfg = 1 << graph.n_edges
    return math.fsum(_bernoulli_weight(EdgeConfig.from_index(i, graph.n_edges), params.rho_signal)
                     * params.q_states ** int(c)
                     for i, c in zip(range(n_cfg), _component_counts(graph)))


def random_cluster_prob(graph: Graph, params: ClusterParams, config: EdgeConfig,
                        guard: int = ENUMERATION_GUARD) -> float:
    if len(config.bits) != graph.n_edges:
        raise ValueError("configuration length does not match the edge count")
    _check_guard(graph, guard)
    bern = _bernoulli_weight(config, params.rho_signal)
    if params.q_states == 1.0:
        return bern
    weight = bern * params.q_states ** count_open_components(graph, config)
    return weight / partition_function(graph, params, guard)


@dataclass(frozen=True)
class FKGReport:
    lhs: float
    rhs: float
    holds: bool


def fkg_check(graph: Graph, params: ClusterParams, f: Callable[[EdgeConfig], float],
              g: Callable[[EdgeConfig], float], guard: int = ENUMERATION_GUARD) -> FKGReport:
    """Compare E[fg] with E[f]E[g] under the random-cluster measure, by enumeration."""
    probs = cluster_distribution(graph, params, guard)
    cfgs = [EdgeConfig.from_index(i, graph.n_edges) for i in range(len(probs))]
    fv = np.array([f(c) for c in cfgs], dtype=float)
    gv = np.array([g(c) for c in cfgs], dtype=float)
    lhs = math.fsum(probs * fv * gv)
    rhs = math.fsum(probs * fv) * math.fsum(probs * gv)
    return FKGReport(lhs, rhs, lhs >= rhs - 1e-12)


@lru_cache(maxsize=8)
def increasing_events(n_edges: int) -> np.ndarray:
    """All up-closed sets of configurations as a boolean (n_events, 2^n_edges) matrix."""
    if n_edges > 4:
        raise ValueError("up-set enumeration is limited to 4 edges")
    n_cfg = 1 << n_edges
    masks = np.arange(1 << n_cfg, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(n_cfg)) & 1).astype(bool)
    ok = np.ones(len(masks), dtype=bool)
    for c in range(n_cfg):
        for b in range(n_edges):
            if not (c >> b) & 1:
                ok &= ~member[:, c] | member[:, c | (1 << b)]
    return member[ok]


@dataclass(frozen=True)
class FKGSweepResult:
    n_checks: int
    n_failures: int
    worst_margin: float  # min over pairs of lhs - rhs

    @property
    def holds(self) -> bool:
        return self.n_failures == 0


def fkg_sweep(graphs: Iterable[Graph], q_values: Sequence[float], rho_values: Sequence[float]) -> FKGSweepResult:
    """Check the FKG inequality for every pair of increasing events on each small graph."""
    n_checks = n_fail = 0
    worst = math.inf
    for graph in graphs:
        events = increasing_events(graph.n_edges).astype(float)
        for q in q_values:
            for rho in rho_values:
                probs = cluster_distribution(graph, ClusterParams(rho, q))
                p_single = events @ probs
                p_joint = (events * probs) @ events.T
                margin = p_joint - np.outer(p_single, p_single)
                n_checks += margin.size
                n_fail += int((margin < -1e-12).sum())
                worst = min(worst, float(margin.min()))
    return FKGSweepResult(n_checks, n_fail, worst)
