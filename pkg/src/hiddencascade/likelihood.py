"""
Log densities of the four factors of the posterior over (z, t, alpha):

    log f(alpha) + log f(z | alpha) + log f(t | z, alpha) + log f(d | t)

Everything is accumulated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import COUNT, REAL, LatentState, ModelError, Network, ObservationMatrix

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Mean/std before (``mu1``, ``sigma1``) and after (``mu2``, ``sigma2``) infection."""

    mu1: np.ndarray
    mu2: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray

    kind = REAL

    def __post_init__(self):
        for name in ("mu1", "mu2", "sigma1", "sigma2"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.sigma1 <= 0) or np.any(self.sigma2 <= 0):
            raise ModelError("Gaussian standard deviations must be positive")

    @classmethod
    def uniform(cls, n_nodes, mu1, mu2, sigma1, sigma2=None):
        sigma2 = sigma1 if sigma2 is None else sigma2
        full = lambda v: np.full(n_nodes, float(v))
        return cls(full(mu1), full(mu2), full(sigma1), full(sigma2))

    def params(self, i):
        def pick(v):
            return float(v[i] if v.size > 1 else v[0])
        return pick(self.mu1), pick(self.mu2), pick(self.sigma1), pick(self.sigma2)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "mu1": self.mu1.tolist(), "mu2": self.mu2.tolist(),
                "sigma1": self.sigma1.tolist(), "sigma2": self.sigma2.tolist()}


@dataclass(frozen=True)
class PoissonProfile:
    """Poisson counts with segment rates replaced by their segment means."""

    kind = COUNT

    def to_dict(self) -> dict:
        return {"kind": "poisson"}


def obs_model_from_dict(data: dict, n_nodes: int | None = None):
    kind = data.get("kind", "gaussian").lower()
    if kind == "poisson":
        return PoissonProfile()
    if kind != "gaussian":
        raise ModelError(f"unknown observation model {kind!r}")
    vals = {k: np.atleast_1d(np.asarray(data[k], dtype=float))
            for k in ("mu1", "mu2", "sigma1")}
    vals["sigma2"] = np.atleast_1d(np.asarray(data.get("sigma2", data["sigma1"]), dtype=float))
    if n_nodes is not None:
        vals = {k: np.broadcast_to(v, (n_nodes,)).copy() for k, v in vals.items()}
    return GaussianModel(**vals)


def check_model_matches(obs: ObservationMatrix, model) -> None:
    if obs.kind != model.kind:
        raise ModelError(f"{type(model).__name__} needs {model.kind}-valued observations, got {obs.kind}")


def _gamma_logpdf(x, a, b):
    return (a - 1.0) * math.log(x) - x / b - math.lgamma(a) - a * math.log(b)


def log_gamma_prior(alpha: np.ndarray, net: Network) -> float:
    """Sum of Gamma(shape a_ij, scale b_ij) log densities over candidate links."""
    total = 0.0
    for i, j in net.edges():
        x = float(alpha[i, j])
        if not x > 0:
            raise ModelError(f"link strength at ({i + 1},{j + 1}) must be positive, got {x}")
        total += _gamma_logpdf(x, float(net.hyper_a[i, j]), float(net.hyper_b[i, j]))
    return total


def log_parent_prior(z: np.ndarray, alpha: np.ndarray, net: Network) -> float:
    """Multinomial log probability of each parent choice, proportional to alpha."""
    total = 0.0
    for i in net.non_sources:
        parents = net.candidate_parents[i]
        p = int(z[i])
        if p not in parents:
            raise ModelError(f"parent of node {i + 1} is not a candidate")
        total += math.log(alpha[i, p]) - math.log(sum(alpha[i, j] for j in parents))
    return total


def log_waiting_prior(t: np.ndarray, z: np.ndarray, alpha: np.ndarray, net: Network) -> float:
    """Exponential waiting-time log density; -inf when a child precedes its parent."""
    total = 0.0
    for i in net.non_sources:
        p = int(z[i])
        gap = int(t[i]) - int(t[p])
        if gap <= 0:
            return -math.inf
        a = float(alpha[i, p])
        total += math.log(a) - a * gap
    return total


def _poisson_segment(seg: np.ndarray) -> float:
    # rate is the segment mean, so sum(d log lam - lam) = S log(S/n) - S
    if seg.size == 0:
        return 0.0
    s = float(seg.sum())
    lf = float(sum(math.lgamma(x + 1.0) for x in seg))
    if s == 0.0:
        return -lf
    return s * math.log(s / seg.size) - s - lf


def log_obs_lik(d: np.ndarray, t: int, model, node: int = 0) -> float:
    """Log likelihood of one series given infection at step ``t`` (1-based).

    Steps 1..t-1 follow the pre-infection law, steps t..T the post-infection law.
    ``node`` selects the per-node Gaussian parameters.
    """
    d = np.asarray(d, dtype=float)
    T = d.size
    t = int(t)
    if not 1 <= t <= T:
        raise ModelError(f"infection time {t} outside [1, {T}]")
    if isinstance(model, PoissonProfile):
        return _poisson_segment(d[: t - 1]) + _poisson_segment(d[t - 1:])
    mu1, mu2, s1, s2 = model.params(node)
    pre = -0.5 * ((d[: t - 1] - mu1) / s1) ** 2 - math.log(s1) - 0.5 * LOG_2PI
    post = -0.5 * ((d[t - 1:] - mu2) / s2) ** 2 - math.log(s2) - 0.5 * LOG_2PI
    # fsum of the combined terms makes the result exactly split-invariant
    return math.fsum(np.concatenate([pre, post]))


def obs_loglik_table(obs: ObservationMatrix, model) -> np.ndarray:
    """Array ``L`` with ``L[i, t-1] = log f(d_i | t_i = t)`` for every node and step."""
    check_model_matches(obs, model)
    N, T = obs.data.shape
    table = np.empty((N, T))
    for i in range(N):
        table[i] = _node_table(obs.data[i], model, i)
    return table


def _node_table(d, model, i):
    T = d.size
    zero = np.zeros(1)
    if isinstance(model, PoissonProfile):
        lf = np.concatenate([zero, np.cumsum([math.lgamma(x + 1.0) for x in d])])
        cs = np.concatenate([zero, np.cumsum(d)])
        t = np.arange(1, T + 1)
        n_pre, n_post = t - 1, T - t + 1
        s_pre, s_post = cs[t - 1], cs[T] - cs[t - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            pre = np.where(s_pre > 0, s_pre * np.log(s_pre / np.maximum(n_pre, 1)) - s_pre, 0.0)
            post = np.where(s_post > 0, s_post * np.log(s_post / n_post) - s_post, 0.0)
        return pre + post - lf[T]
    mu1, mu2, s1, s2 = model.params(i)
    if mu1 == mu2 and s1 == s2:
        return np.full(T, log_obs_lik(d, 1, model, i))
    lp1 = -0.5 * ((d - mu1) / s1) ** 2 - math.log(s1) - 0.5 * LOG_2PI
    lp2 = -0.5 * ((d - mu2) / s2) ** 2 - math.log(s2) - 0.5 * LOG_2PI
    c1 = np.concatenate([zero, np.cumsum(lp1)])
    c2 = np.concatenate([zero, np.cumsum(lp2)])
    t = np.arange(1, T + 1)
    return c1[t - 1] + (c2[T] - c2[t - 1])


def joint_log_posterior(state: LatentState, obs: ObservationMatrix, model, net: Network) -> float:
    """Unnormalised log posterior of a full configuration; -inf outside the support."""
    N, T = obs.data.shape
    if state.n_nodes != N or net.n_nodes != N or state.alpha.shape != (N, N):
        raise ModelError("state, observations and network disagree on the number of nodes")
    check_model_matches(obs, model)
    if np.any(state.t < 1) or np.any(state.t > T):
        return -math.inf
    wait = log_waiting_prior(state.t, state.z, state.alpha, net)
    if wait == -math.inf:
        return -math.inf
    total = log_gamma_prior(state.alpha, net) + log_parent_prior(state.z, state.alpha, net) + wait
    for i in range(N):
        total += log_obs_lik(obs.data[i], int(state.t[i]), model, i)
    return total
