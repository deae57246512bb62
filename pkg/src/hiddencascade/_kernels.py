"""
Compiled coordinate updates for the Gibbs sampler.

All arrays use a padded candidate layout: ``cand[i, k]`` is the k-th
candidate parent of node i (-1 past ``ncand[i]``), ``alpha[i, k]`` its link
strength and ``zpos[i]`` the position of the current parent in that row
(-1 for sources). Randomness is passed in as pre-drawn uniforms/normals so
the caller's numpy Generator remains the only RNG.

Functions return 0 on success or ``node + 1`` when the node's full
conditional has empty support.
"""

import math

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def _pick(logw, n, u):
    m = -np.inf
    for k in range(n):
        if logw[k] > m:
            m = logw[k]
    total = 0.0
    for k in range(n):
        logw[k] = math.exp(logw[k] - m)
        total += logw[k]
    target = u * total
    acc = 0.0
    for k in range(n):
        acc += logw[k]
        if target < acc:
            return k
    # u * total rounding past the last bin
    for k in range(n - 1, -1, -1):
        if logw[k] > 0.0:
            return k
    return n - 1


@njit(**_OPTS)
def update_time(i, cand, zpos, t, alpha, table, is_src, u, buf):
    T = table.shape[1]
    N = t.shape[0]
    lo = 1
    slope = 0.0
    if not is_src[i]:
        k = zpos[i]
        lo = t[cand[i, k]] + 1
        slope -= alpha[i, k]
    hi = T
    for c in range(N):
        kc = zpos[c]
        if kc >= 0 and cand[c, kc] == i:
            if t[c] - 1 < hi:
                hi = t[c] - 1
            slope += alpha[c, kc]
    n = hi - lo + 1
    if n <= 0:
        return i + 1
    for s in range(n):
        tt = lo + s
        buf[s] = table[i, tt - 1] + slope * tt
    t[i] = lo + _pick(buf, n, u)
    return 0


@njit(**_OPTS)
def update_parent(i, cand, ncand, zpos, t, alpha, u, buf, pos):
    n = 0
    ti = t[i]
    for k in range(ncand[i]):
        j = cand[i, k]
        if t[j] < ti:
            a = alpha[i, k]
            buf[n] = 2.0 * math.log(a) - a * (ti - t[j])
            pos[n] = k
            n += 1
    if n == 0:
        return i + 1
    zpos[i] = pos[_pick(buf, n, u)]
    return 0


@njit(**_OPTS)
def _alpha_logtarget(x, a, b, is_parent, gap, rest):
    v = (a - 1.0) * math.log(x) - x / b - math.log(x + rest)
    if is_parent:
        v += 2.0 * math.log(x) - x * gap
    return v


@njit(**_OPTS)
def update_strength(i, k, cand, zpos, t, alpha, ha, hb, step, eps, u):
    """One log-space random-walk MH step; returns 1 if the proposal was accepted."""
    x = alpha[i, k]
    rest = 0.0
    for l in range(cand.shape[1]):
        if l != k and cand[i, l] >= 0:
            rest += alpha[i, l]
    is_parent = zpos[i] == k
    gap = t[i] - t[cand[i, zpos[i]]]
    y = x * math.exp(step * eps)
    a = ha[i, k]
    b = hb[i, k]
    ratio = (_alpha_logtarget(y, a, b, is_parent, gap, rest)
             - _alpha_logtarget(x, a, b, is_parent, gap, rest) + math.log(y) - math.log(x))
    if math.log(u) < ratio:
        alpha[i, k] = y
        return 1
    return 0


@njit(**_OPTS)
def update_strength_grid(i, k, cand, zpos, t, alpha, ha, hb, grid, u, buf):
    rest = 0.0
    for l in range(cand.shape[1]):
        if l != k and cand[i, l] >= 0:
            rest += alpha[i, l]
    is_parent = zpos[i] == k
    gap = t[i] - t[cand[i, zpos[i]]]
    for g in range(grid.shape[0]):
        buf[g] = _alpha_logtarget(grid[g], ha[i, k], hb[i, k], is_parent, gap, rest)
    alpha[i, k] = grid[_pick(buf, grid.shape[0], u)]


@njit(**_OPTS)
def log_posterior(cand, ncand, zpos, t, alpha, ha, hb, lgc, table, is_src):
    total = 0.0
    N = t.shape[0]
    for i in range(N):
        total += table[i, t[i] - 1]
        if is_src[i]:
            continue
        row = 0.0
        for k in range(ncand[i]):
            x = alpha[i, k]
            total += (ha[i, k] - 1.0) * math.log(x) - x / hb[i, k] - lgc[i, k]
            row += x
        kp = zpos[i]
        gap = t[i] - t[cand[i, kp]]
        if gap <= 0:
            return -np.inf
        ap = alpha[i, kp]
        total += 2.0 * math.log(ap) - math.log(row) - ap * gap
    return total


@njit(**_OPTS)
def sweep(cand, ncand, zpos, t, alpha, ha, hb, table, is_src, t_free,
          step, grid, u_t, u_z, eps, u_a, buf, pos):
    """Systematic scan: times in ascending current-t order, then parents, then strengths.

    Returns (status, mh_accepted, mh_proposed).
    """
    N = t.shape[0]
    order = np.argsort(t, kind="mergesort")
    for r in range(N):
        i = order[r]
        if t_free[i]:
            st = update_time(i, cand, zpos, t, alpha, table, is_src, u_t[i], buf)
            if st != 0:
                return st, 0, 0
    for i in range(N):
        if not is_src[i]:
            st = update_parent(i, cand, ncand, zpos, t, alpha, u_z[i], buf, pos)
            if st != 0:
                return st, 0, 0
    accepted = 0
    proposed = 0
    use_grid = grid.shape[0] > 0
    for i in range(N):
        if is_src[i]:
            continue
        for k in range(ncand[i]):
            if use_grid:
                update_strength_grid(i, k, cand, zpos, t, alpha, ha, hb, grid, u_a[i, k], buf)
            else:
                accepted += update_strength(i, k, cand, zpos, t, alpha, ha, hb, step,
                                            eps[i, k], u_a[i, k])
                proposed += 1
    return 0, accepted, proposed


@njit(**_OPTS)
def run_batch(cand, ncand, zpos, t, alpha, ha, hb, lgc, table, is_src, t_free,
              step, grid, u_t, u_z, eps, u_a, store_at, out_z, out_t, out_a, out_lp):
    """Run ``len(u_t)`` sweeps, copying the state into row ``store_at[s]`` when >= 0."""
    N = t.shape[0]
    size = max(table.shape[1], grid.shape[0], cand.shape[1]) + 1
    buf = np.empty(size)
    pos = np.empty(size, dtype=np.int64)
    accepted = 0
    proposed = 0
    for s in range(u_t.shape[0]):
        st, acc, prop = sweep(cand, ncand, zpos, t, alpha, ha, hb, table, is_src, t_free,
                              step, grid, u_t[s], u_z[s], eps[s], u_a[s], buf, pos)
        if st != 0:
            return st, accepted, proposed
        accepted += acc
        proposed += prop
        row = store_at[s]
        if row >= 0:
            for i in range(N):
                out_t[row, i] = t[i]
                out_z[row, i] = -1 if zpos[i] < 0 else cand[i, zpos[i]]
                for k in range(cand.shape[1]):
                    out_a[row, i, k] = alpha[i, k]
            out_lp[row] = log_posterior(cand, ncand, zpos, t, alpha, ha, hb, lgc, table, is_src)
    return 0, accepted, proposed
