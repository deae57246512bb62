"""Checking the sampler against an exhaustively enumerated posterior.

Three nodes, six time steps and strengths restricted to a small grid keep the
posterior small enough to list in full.
"""
import itertools
import math

import numpy as np

from hiddencascade import GaussianModel, GibbsConfig, LatentState, Network, ObservationMatrix, run_chain
from hiddencascade.likelihood import joint_log_posterior

# Node 0 is the source; node 1 can only catch it from 0; node 2 from either.
parents = [(), (0,), (0, 1)]
a = np.full((3, 3), np.nan)
b = np.full((3, 3), np.nan)
for i, ps in enumerate(parents):
    a[i, list(ps)], b[i, list(ps)] = 4.0, 0.25
net = Network(3, parents, [0], a, b)

rng = np.random.default_rng(2016)
steps = np.arange(1, 7)
data = np.vstack([np.where(steps >= t, 2.0, 0.0) + rng.normal(0, 1, 6) for t in (1, 3, 4)])
obs = ObservationMatrix(data)
model = GaussianModel.uniform(3, 0.0, 2.0, 1.0)
grid = (0.5, 1.0, 2.0)
edges = list(net.edges())

# %% Enumerate every (z2, t1, t2, strengths) combination and normalise.
logp = {}
for z2, t1, t2, vals in itertools.product((0, 1), range(1, 7), range(1, 7),
                                          itertools.product(grid, repeat=len(edges))):
    alpha = np.zeros((3, 3))
    for (i, j), v in zip(edges, vals):
        alpha[i, j] = v
    state = LatentState([-1, 0, z2], [1, t1, t2], alpha)
    lp = joint_log_posterior(state, obs, model, net)
    if lp > -math.inf:
        logp[(z2, t1, t2, vals)] = lp
top = max(logp.values())
exact = {k: math.exp(v - top) for k, v in logp.items()}
norm = sum(exact.values())
exact = {k: v / norm for k, v in exact.items()}
print(f"{len(exact)} admissible configurations")

# %% Run the sampler with the same grid and tally what it visits.
chain = run_chain(net, obs, model, GibbsConfig(total_iters=101_000, burn_in=1_000, seed=1, alpha_grid=grid))
cols = [chain.alpha_padded[:, i, parents[i].index(j)] for i, j in edges]
seen = {}
for m in range(len(chain)):
    key = (int(chain.z[m, 2]), int(chain.t[m, 1]), int(chain.t[m, 2]), tuple(float(c[m]) for c in cols))
    seen[key] = seen.get(key, 0) + 1
emp = {k: v / len(chain) for k, v in seen.items()}
tv = 0.5 * sum(abs(exact.get(k, 0) - emp.get(k, 0)) for k in set(exact) | set(emp))
print(f"total variation between sampler and enumeration: {tv:.4f}")

# %% The marginal of node 2's parent, both ways.
for parent in (0, 1):
    p_exact = sum(v for k, v in exact.items() if k[0] == parent)
    p_emp = sum(v for k, v in emp.items() if k[0] == parent)
    print(f"P(node 2 <- node {parent}): exact {p_exact:.3f}, sampled {p_emp:.3f}")
