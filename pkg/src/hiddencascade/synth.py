"""
Synthetic ground truth: random tree, candidate sets, true link strengths,
a cascade drawn from the model and two-regime Gaussian observations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .likelihood import GaussianModel
from .model import NO_PARENT, LatentState, ModelError, Network, ObservationMatrix, REAL

MAX_RETRIES = 100


@dataclass(frozen=True)
class SynthConfig:
    n_nodes: int = 20
    horizon: int = 200
    tree_seed: int = 0
    a1: float = 9.0
    b1: float = 0.5
    a2: float = 10.0
    b2: float = 0.9
    mu1: float = 10.0
    mu2: float = 100.0
    sigma1: float = 1.0
    sigma2: float = 1.0
    candidate_parent_density: float = 0.5

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ModelError("need at least 2 nodes")
        if self.horizon < 2:
            raise ModelError("horizon must be at least 2")
        if min(self.a1, self.b1, self.a2, self.b2) <= 0:
            raise ModelError("Gamma parameters must be positive")
        if min(self.sigma1, self.sigma2) <= 0:
            raise ModelError("standard deviations must be positive")
        if not 0 < self.candidate_parent_density <= 1:
            raise ModelError("candidate_parent_density must lie in (0, 1]")

    def obs_model(self) -> GaussianModel:
        return GaussianModel.uniform(self.n_nodes, self.mu1, self.mu2, self.sigma1, self.sigma2)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        return cls(**data)


@dataclass(eq=False)
class Dataset:
    net: Network
    tree: np.ndarray  # tree[i, j] = 1 iff j is i's parent in the underlying tree
    truth: LatentState
    obs: ObservationMatrix
    config: SynthConfig = field(repr=False, default=None)


def _random_labelled_tree(n: int, rng) -> np.ndarray:
    """Uniform labelled tree on n vertices via a random Pruefer sequence; returns edge list."""
    if n == 2:
        return np.array([[0, 1]])
    seq = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=int)
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = int(np.flatnonzero(degree == 1)[0])
        edges.append((leaf, int(v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = np.flatnonzero(degree == 1)
    edges.append((int(u), int(w)))
    return np.array(edges)


def generate_tree(cfg: SynthConfig, rng) -> tuple[Network, np.ndarray]:
    """Random spanning tree rooted at node 0 plus candidate parent sets.

    The tree is uniform over labelled trees, oriented away from the source.
    Candidates of i are its tree parent plus each node that precedes i in a
    random topological order, kept independently with the configured density.
    """
    N = cfg.n_nodes
    source = 0
    adj = [[] for _ in range(N)]
    for u, v in _random_labelled_tree(N, rng):
        adj[u].append(v)
        adj[v].append(u)
    tree_parent = np.full(N, NO_PARENT)
    seen = {source}
    frontier = [source]
    order = []
    while frontier:
        # random linear extension: expand a uniformly chosen frontier node
        u = frontier.pop(int(rng.integers(len(frontier))))
        order.append(u)
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                tree_parent[v] = u
                frontier.append(v)
    A = np.zeros((N, N), dtype=np.int64)
    parents: list[tuple[int, ...]] = [()] * N
    rank = {u: r for r, u in enumerate(order)}
    for i in range(N):
        if i == source:
            continue
        p = int(tree_parent[i])
        A[i, p] = 1
        extra = [j for j in order[: rank[i]] if j != p
                 and rng.random() < cfg.candidate_parent_density]
        parents[i] = tuple(sorted([p] + extra))
    a = np.full((N, N), np.nan)
    b = np.full((N, N), np.nan)
    for i, ps in enumerate(parents):
        for j in ps:
            a[i, j], b[i, j] = (cfg.a1, cfg.b1) if A[i, j] else (cfg.a2, cfg.b2)
    net = Network(N, parents, [source], a, b, source_times=[1])
    return net, A


def generate_link_strengths(net: Network, A: np.ndarray, cfg: SynthConfig, rng) -> np.ndarray:
    """True strengths: Gamma(a1, b1) on tree links, Gamma(a2, b2) on other candidate links."""
    alpha = np.zeros((net.n_nodes, net.n_nodes))
    for i, j in net.edges():
        shape, scale = (cfg.a1, cfg.b1) if A[i, j] else (cfg.a2, cfg.b2)
        alpha[i, j] = rng.gamma(shape, scale)
    return alpha


def waiting_gaps(rate, rng, size=None):
    """Discrete waiting times: ceil of an Exponential(rate) draw, at least 1 step."""
    return np.maximum(1, np.ceil(rng.exponential(1.0 / np.asarray(rate), size=size))).astype(np.int64)


def generate_cascade(net: Network, alpha: np.ndarray, cfg: SynthConfig, rng):
    """Draw true parents proportional to alpha and times with ceil(Exp) gaps.

    Regenerates until every time fits in the horizon (up to MAX_RETRIES).
    """
    N = net.n_nodes
    order = _topological(net)
    for _ in range(MAX_RETRIES):
        z = np.full(N, NO_PARENT)
        t = np.zeros(N, dtype=np.int64)
        for s in net.sources:
            t[s] = net.source_time(s)
        for i in order:
            if net.is_source(i):
                continue
            ps = np.array(net.candidate_parents[i])
            w = alpha[i, ps]
            j = int(ps[rng.choice(len(ps), p=w / w.sum())])
            z[i] = j
            t[i] = t[j] + int(waiting_gaps(alpha[i, j], rng))
        if t.max() <= cfg.horizon:
            return z, t
    raise ModelError(f"cascade overflowed the horizon {cfg.horizon} in {MAX_RETRIES} attempts")


def _topological(net: Network) -> list[int]:
    # candidate graph from generate_tree is acyclic by construction
    indeg = {i: len(p) for i, p in enumerate(net.candidate_parents)}
    kids = [[] for _ in range(net.n_nodes)]
    for i, j in net.edges():
        kids[j].append(i)
    ready = sorted(i for i, d in indeg.items() if d == 0)
    out = []
    while ready:
        u = ready.pop(0)
        out.append(u)
        for v in kids[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if len(out) != net.n_nodes:
        raise ModelError("candidate parent graph has a cycle")
    return out


def generate_observations(t: np.ndarray, cfg: SynthConfig, rng) -> ObservationMatrix:
    """Gaussian series switching from (mu1, sigma1) to (mu2, sigma2) at each node's time."""
    N, T = len(t), cfg.horizon
    steps = np.arange(1, T + 1)
    after = steps[None, :] >= np.asarray(t)[:, None]
    noise = rng.standard_normal((N, T))
    data = np.where(after, cfg.mu2 + cfg.sigma2 * noise, cfg.mu1 + cfg.sigma1 * noise)
    return ObservationMatrix(data, REAL)


def generate_dataset(cfg: SynthConfig, seed: int | None = None) -> Dataset:
    """End-to-end synthetic bundle from ``seed`` (defaults to ``cfg.tree_seed``)."""
    rng = np.random.default_rng(cfg.tree_seed if seed is None else seed)
    net, A = generate_tree(cfg, rng)
    alpha = generate_link_strengths(net, A, cfg, rng)
    z, t = generate_cascade(net, alpha, cfg, rng)
    obs = generate_observations(t, cfg, rng)
    return Dataset(net=net, tree=A, truth=LatentState(z=z, t=t, alpha=alpha), obs=obs, config=cfg)
