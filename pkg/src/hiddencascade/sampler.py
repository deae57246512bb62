"""
Metropolis-within-Gibbs sampling of parents, infection times and link
strengths, and summaries of the resulting chains.

A sweep is a systematic scan: every free infection time in ascending order
of its current value, then every parent, then one random-walk MH step (in
log space) per candidate link strength.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .likelihood import check_model_matches, obs_loglik_table
from .model import NO_PARENT, LatentState, ModelError, Network, ObservationMatrix, state_violations, \
    validate_network

BATCH = 100


class SupportError(RuntimeError):
    """A full conditional has no admissible value."""

    def __init__(self, node: int):
        super().__init__(f"empty support for node {node + 1}")
        self.node = node


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class GibbsConfig:
    total_iters: int = 20_000
    burn_in: int = 1_000
    seed: int = 0
    mh_step: float = 0.5
    mh_adapt: bool = True
    thin: int = 1
    latent_sources: bool = False
    alpha_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if self.total_iters < 1 or not 0 <= self.burn_in < self.total_iters:
            raise ConfigurationError("need 0 <= burn_in < total_iters")
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1")
        if not self.mh_step > 0:
            raise ConfigurationError("mh_step must be positive")
        if any(g <= 0 for g in self.alpha_grid):
            raise ConfigurationError("alpha grid values must be positive")

    def to_dict(self) -> dict:
        return {"total_iters": self.total_iters, "burn_in": self.burn_in, "seed": self.seed,
                "mh_step": self.mh_step, "mh_adapt": self.mh_adapt, "thin": self.thin,
                "latent_sources": self.latent_sources, "alpha_grid": list(self.alpha_grid)}

    @classmethod
    def from_dict(cls, data: dict) -> "GibbsConfig":
        data = dict(data)
        if "alpha_grid" in data:
            data["alpha_grid"] = tuple(float(g) for g in data["alpha_grid"])
        return cls(**data)


class _Layout:
    """Padded array view of a network, shared by all chains on the same inputs."""

    def __init__(self, net: Network, table: np.ndarray):
        N = net.n_nodes
        width = max(1, max(len(p) for p in net.candidate_parents))
        self.net = net
        self.table = np.ascontiguousarray(table, dtype=float)
        self.cand = np.full((N, width), -1, dtype=np.int64)
        self.ncand = np.zeros(N, dtype=np.int64)
        self.ha = np.ones((N, width))
        self.hb = np.ones((N, width))
        for i, parents in enumerate(net.candidate_parents):
            self.ncand[i] = len(parents)
            for k, j in enumerate(parents):
                self.cand[i, k] = j
                self.ha[i, k] = net.hyper_a[i, j]
                self.hb[i, k] = net.hyper_b[i, j]
        self.lgc = np.array([[math.lgamma(a) + a * math.log(b) for a, b in zip(ra, rb)]
                             for ra, rb in zip(self.ha, self.hb)])
        self.is_src = np.zeros(N, dtype=np.bool_)
        self.is_src[list(net.sources)] = True

    def pos_of(self, i: int, j: int) -> int:
        return self.net.candidate_parents[i].index(j)

    def to_arrays(self, state: LatentState):
        N, width = self.cand.shape
        zpos = np.full(N, -1, dtype=np.int64)
        alpha = np.ones((N, width))
        for i in range(N):
            if not self.is_src[i]:
                zpos[i] = self.pos_of(i, int(state.z[i]))
            for k in range(self.ncand[i]):
                alpha[i, k] = state.alpha[i, self.cand[i, k]]
        return zpos, state.t.astype(np.int64).copy(), alpha

    def to_state(self, zpos, t, alpha) -> LatentState:
        N = len(t)
        z = np.array([NO_PARENT if zpos[i] < 0 else self.cand[i, zpos[i]] for i in range(N)])
        dense = np.zeros((N, N))
        for i in range(N):
            for k in range(self.ncand[i]):
                dense[i, self.cand[i, k]] = alpha[i, k]
        return LatentState(z=z, t=t.copy(), alpha=dense)


def _layout(net, obs, model) -> _Layout:
    problems = validate_network(net)
    if problems:
        raise ConfigurationError("invalid network: " + "; ".join(problems))
    if obs.n_nodes != net.n_nodes:
        raise ModelError(f"network has {net.n_nodes} nodes but observations have {obs.n_nodes}")
    check_model_matches(obs, model)
    return _Layout(net, obs_loglik_table(obs, model))


def _check(status):
    if status != 0:
        raise SupportError(int(status) - 1)


# -- single-coordinate updates on LatentState values ---------------------------------

def sample_parent(i, state, net, obs, model, rng) -> LatentState:
    """Redraw the parent of non-source node ``i`` from its full conditional."""
    if net.is_source(i):
        raise ModelError(f"node {i + 1} is a source and has no parent")
    lay = _layout(net, obs, model)
    zpos, t, alpha = lay.to_arrays(state)
    n = lay.cand.shape[1] + 1
    _check(K.update_parent(i, lay.cand, lay.ncand, zpos, t, alpha, rng.random(),
                           np.empty(n), np.empty(n, dtype=np.int64)))
    return lay.to_state(zpos, t, alpha)


def sample_infection_time(i, state, net, obs, model, rng) -> LatentState:
    """Redraw ``t_i`` by enumerating every admissible step."""
    lay = _layout(net, obs, model)
    zpos, t, alpha = lay.to_arrays(state)
    _check(K.update_time(i, lay.cand, zpos, t, alpha, lay.table, lay.is_src, rng.random(),
                         np.empty(obs.horizon + 1)))
    return lay.to_state(zpos, t, alpha)


def sample_link_strength(i, j, state, net, rng, mh_step) -> tuple[LatentState, bool]:
    """One MH step on the strength of link j -> i; returns the new state and whether it moved."""
    if j not in net.candidate_parents[i]:
        raise ModelError(f"{j + 1} is not a candidate parent of {i + 1}")
    dummy = np.zeros((net.n_nodes, 1))
    lay = _Layout(net, dummy)
    zpos, t, alpha = lay.to_arrays(state)
    acc = K.update_strength(i, lay.pos_of(i, j), lay.cand, zpos, t, alpha, lay.ha, lay.hb,
                            float(mh_step), rng.standard_normal(), rng.random())
    return lay.to_state(zpos, t, alpha), bool(acc)


def gibbs_sweep(state, net, obs, model, rng, mh_step, free_times=None) -> LatentState:
    """One full systematic scan (times, then parents, then strengths)."""
    lay = _layout(net, obs, model)
    zpos, t, alpha = lay.to_arrays(state)
    if free_times is None:
        free_times = ~lay.is_src
    N, width = lay.cand.shape
    u_t, u_z = rng.random(N), rng.random(N)
    eps, u_a = rng.standard_normal((N, width)), rng.random((N, width))
    size = max(obs.horizon, width) + 1
    st, _, _ = K.sweep(lay.cand, lay.ncand, zpos, t, alpha, lay.ha, lay.hb, lay.table,
                       lay.is_src, np.asarray(free_times, dtype=np.bool_), float(mh_step),
                       np.empty(0), u_t, u_z, eps, u_a, np.empty(size),
                       np.empty(size, dtype=np.int64))
    _check(st)
    return lay.to_state(zpos, t, alpha)


# -- chains ---------------------------------------------------------------------------

@dataclass(eq=False)
class SampleChain:
    """Post-burn-in draws stored column-wise.

    ``z`` and ``t`` are (S, N) arrays, ``alpha`` is (S, N, N) built lazily from the
    padded per-candidate array, ``log_post`` the joint log posterior of each draw.
    """

    net: Network
    z: np.ndarray
    t: np.ndarray
    alpha_padded: np.ndarray
    log_post: np.ndarray
    burn_in: int
    seed: int
    mh_step: float
    acceptance_rate: float
    total_iters: int = 0
    thin: int = 1

    def __len__(self):
        return len(self.t)

    def alpha_at(self, rows) -> np.ndarray:
        """Dense (len(rows), N, N) strength matrices for the selected draws."""
        rows = np.atleast_1d(rows)
        N = self.net.n_nodes
        out = np.zeros((len(rows), N, N))
        for i, parents in enumerate(self.net.candidate_parents):
            for k, j in enumerate(parents):
                out[:, i, j] = self.alpha_padded[rows, i, k]
        return out

    def __getitem__(self, m) -> LatentState:
        return LatentState(z=self.z[m], t=self.t[m], alpha=self.alpha_at(m)[0])

    def __iter__(self):
        for m in range(len(self)):
            yield self[m]

    @property
    def samples(self) -> list[LatentState]:
        return list(self)

    def to_jsonl(self, fh) -> None:
        for m in range(len(self)):
            rec = self[m].to_dict(self.net)
            rec["log_post"] = float(self.log_post[m])
            fh.write(json.dumps(rec) + "\n")


def initial_state(lay: _Layout, t0: np.ndarray, horizon: int) -> LatentState:
    """Repair per-node changepoint guesses into a feasible state.

    Nodes are placed in order of their guessed time; a node may only be placed
    once one of its candidates is, and is pushed to just after the earliest
    placed candidate if its guess would precede it.
    """
    net = lay.net
    N = net.n_nodes
    t = np.array(t0, dtype=np.int64)
    placed = np.zeros(N, dtype=bool)
    for s in net.sources:
        placed[s] = True
    remaining = set(net.non_sources)
    while remaining:
        ready = [i for i in remaining if any(placed[j] for j in net.candidate_parents[i])]
        if not ready:
            raise ConfigurationError("no feasible ordering: nodes " + ", ".join(
                str(i + 1) for i in sorted(remaining)) + " cannot be reached from a source")
        i = min(ready, key=lambda i: (t[i], i))
        earliest = min(t[j] for j in net.candidate_parents[i] if placed[j])
        t[i] = max(t[i], earliest + 1)
        if t[i] > horizon:
            raise ConfigurationError(f"node {i + 1} cannot be placed before the horizon {horizon}")
        placed[i] = True
        remaining.discard(i)
    alpha = np.zeros((N, N))
    for i, j in net.edges():
        alpha[i, j] = net.hyper_a[i, j] * net.hyper_b[i, j]
    z = np.full(N, NO_PARENT)
    for i in net.non_sources:
        feas = [j for j in net.candidate_parents[i] if t[j] < t[i]]
        if not feas:
            raise ConfigurationError(f"node {i + 1} has no candidate infected earlier")
        w = [2 * math.log(alpha[i, j]) - alpha[i, j] * (t[i] - t[j]) for j in feas]
        z[i] = feas[int(np.argmax(w))]
    return LatentState(z=z, t=t, alpha=alpha)


def run_chain(net: Network, obs: ObservationMatrix, model, cfg: GibbsConfig,
              init: LatentState | None = None, known_times=None, _layout_cache=None) -> SampleChain:
    """Run ``cfg.total_iters`` sweeps and keep the thinned post-burn-in draws.

    With ``known_times`` every infection time is clamped to the given values and
    only parents and strengths are sampled.
    """
    lay = _layout_cache or _layout(net, obs, model)
    N, T = obs.n_nodes, obs.horizon
    t_free = ~lay.is_src
    if cfg.latent_sources:
        t_free = np.ones(N, dtype=np.bool_)
    if init is None:
        t0 = np.argmax(lay.table, axis=1) + 1
        for s in net.sources:
            t0[s] = net.source_time(s)
        if known_times is not None:
            t0 = np.asarray(known_times, dtype=np.int64)
        init = initial_state(lay, t0, T)
    if known_times is not None:
        init = replace(init, t=np.asarray(known_times, dtype=np.int64))
        t_free = np.zeros(N, dtype=np.bool_)
    problems = state_violations(init, net, T)
    if problems:
        raise ConfigurationError("invalid initial state: " + "; ".join(problems))
    zpos, t, alpha = lay.to_arrays(init)

    rng = np.random.default_rng(cfg.seed)
    grid = np.asarray(cfg.alpha_grid, dtype=float)
    width = lay.cand.shape[1]
    keep = np.arange(cfg.burn_in, cfg.total_iters, cfg.thin)
    S = len(keep)
    out_z = np.empty((S, N), dtype=np.int64)
    out_t = np.empty((S, N), dtype=np.int64)
    out_a = np.empty((S, N, width))
    out_lp = np.empty(S)
    store = np.full(cfg.total_iters, -1, dtype=np.int64)
    store[keep] = np.arange(S)

    step = float(cfg.mh_step)
    acc_after = prop_after = 0
    done = 0
    while done < cfg.total_iters:
        # batches never straddle the end of burn-in so adaptation stops exactly there
        end = min(done + BATCH, cfg.total_iters)
        if done < cfg.burn_in:
            end = min(end, cfg.burn_in)
        B = end - done
        u_t = rng.random((B, N))
        u_z = rng.random((B, N))
        eps = rng.standard_normal((B, N, width))
        u_a = rng.random((B, N, width))
        st, acc, prop = K.run_batch(lay.cand, lay.ncand, zpos, t, alpha, lay.ha, lay.hb, lay.lgc,
                                    lay.table, lay.is_src, t_free, step, grid, u_t, u_z, eps, u_a,
                                    store[done:end], out_z, out_t, out_a, out_lp)
        _check(st)
        if done < cfg.burn_in:
            if cfg.mh_adapt and prop:
                rate = acc / prop
                if rate < 0.2:
                    step *= 0.8
                elif rate > 0.5:
                    step *= 1.25
        else:
            acc_after += acc
            prop_after += prop
        done = end

    rate = acc_after / prop_after if prop_after else 1.0
    return SampleChain(net=net, z=out_z, t=out_t, alpha_padded=out_a, log_post=out_lp,
                       burn_in=cfg.burn_in, seed=cfg.seed, mh_step=step, acceptance_rate=rate,
                       total_iters=cfg.total_iters, thin=cfg.thin)


def chain_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def run_chains(net, obs, model, cfg: GibbsConfig, n_chains: int = 1, known_times=None,
               workers: int | None = None) -> list[SampleChain]:
    """Independent chains with seeds spawned from ``cfg.seed``; chain 0 uses ``cfg.seed`` itself."""
    lay = _layout(net, obs, model)
    seeds = [cfg.seed] + chain_seeds(cfg.seed, n_chains - 1) if n_chains > 1 else [cfg.seed]
    cfgs = [replace(cfg, seed=s) for s in seeds]
    if n_chains == 1:
        return [run_chain(net, obs, model, cfgs[0], known_times=known_times, _layout_cache=lay)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_chain(net, obs, model, c, known_times=known_times,
                                                 _layout_cache=lay), cfgs))


# -- summaries ------------------------------------------------------------------------

@dataclass(eq=False)
class PosteriorSummary:
    z_hat: np.ndarray
    t_hat: np.ndarray
    alpha_hat: np.ndarray
    mode_count: int
    n_samples: int
    configurations: list[tuple[np.ndarray, float]]
    map_state: LatentState
    map_log_post: float
    acceptance_rate: float
    net: Network = field(repr=False, default=None)

    def to_dict(self) -> dict:
        net = self.net

        def parents(z):
            return [int(p) + 1 if p >= 0 else None for p in z]

        return {
            "z_hat": parents(self.z_hat),
            "t_hat": [int(x) for x in self.t_hat],
            "alpha_hat": [[i + 1, j + 1, float(self.alpha_hat[i, j])] for i, j in net.edges()],
            "mode_weight": self.mode_count / self.n_samples,
            "n_samples": self.n_samples,
            "configurations": [{"z": parents(z), "weight": w} for z, w in self.configurations],
            "map_sample": dict(self.map_state.to_dict(net), log_post=self.map_log_post),
            "acceptance_rate": self.acceptance_rate,
        }


def _row_modes(keys: np.ndarray):
    rows, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return rows, inverse.reshape(-1), counts


def summarize(chain, top_k: int = 4) -> PosteriorSummary:
    """Modal (z, t) pair, conditional mean strengths and top-k parent configurations.

    ``chain`` may be a single SampleChain or a list whose draws are pooled. Ties
    between equally frequent configurations go to the lexicographically
    smallest (z, t) row, with sources coded as parent 0 in 1-based terms.
    """
    chains = chain if isinstance(chain, (list, tuple)) else [chain]
    if not chains or sum(len(c) for c in chains) == 0:
        raise ModelError("cannot summarise an empty chain")
    net = chains[0].net
    z = np.concatenate([c.z for c in chains])
    t = np.concatenate([c.t for c in chains])
    lp = np.concatenate([c.log_post for c in chains])
    S, N = t.shape

    rows, inverse, counts = _row_modes(np.hstack([z, t]))
    best = int(np.argmax(counts))  # first maximum = lexicographically smallest
    z_hat, t_hat = rows[best, :N].copy(), rows[best, N:].copy()
    members = np.flatnonzero(inverse == best)

    alpha_hat = np.zeros((N, N))
    offset = 0
    for c in chains:
        local = members[(members >= offset) & (members < offset + len(c))] - offset
        if len(local):
            alpha_hat += c.alpha_at(local).sum(axis=0)
        offset += len(c)
    alpha_hat /= len(members)

    zrows, _, zcounts = _row_modes(z)
    order = sorted(range(len(zrows)), key=lambda r: -zcounts[r])[:top_k]
    configs = [(zrows[r].copy(), float(zcounts[r]) / S) for r in order]

    m = int(np.argmax(lp))
    offset = 0
    for c in chains:
        if m < offset + len(c):
            map_state = c[m - offset]
            break
        offset += len(c)
    rates = [c.acceptance_rate for c in chains]
    return PosteriorSummary(z_hat=z_hat, t_hat=t_hat, alpha_hat=alpha_hat,
                            mode_count=int(counts[best]), n_samples=S, configurations=configs,
                            map_state=map_state, map_log_post=float(lp[m]),
                            acceptance_rate=float(np.mean(rates)), net=net)
