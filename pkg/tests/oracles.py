"""Independent reference computations used by the test-suite.

None of these share code with the package paths they check.
"""

from fractions import Fraction
import math

import numpy as np


def northwest_corner_cost(xs, ps, ys, qs, p=1):
    """d_p by walking the monotone (north-west corner) coupling of two sorted
    discrete laws.  Probabilities may be Fractions for exact bookkeeping."""
    fx = sorted(zip(xs, ps))
    gy = sorted(zip(ys, qs))
    i = j = 0
    rem_f, rem_g = fx[0][1], gy[0][1]
    total, worst = 0, 0.0
    while i < len(fx) and j < len(gy):
        mass = min(rem_f, rem_g)
        gap = abs(fx[i][0] - gy[j][0])
        if mass > 0:
            total += mass * Fraction(gap) ** p if not math.isinf(p) else 0
            worst = max(worst, gap)
        rem_f -= mass
        rem_g -= mass
        if rem_f == 0:
            i += 1
            if i < len(fx):
                rem_f = fx[i][1]
        if rem_g == 0:
            j += 1
            if j < len(gy):
                rem_g = gy[j][1]
    if math.isinf(p):
        return worst
    return float(total) ** (1.0 / p)


def lp_wasserstein1(xs, ps, ys, qs):
    """d_1 from the full transport linear program (scipy)."""
    from scipy.optimize import linprog

    n, m = len(xs), len(ys)
    cost = np.abs(np.subtract.outer(np.asarray(xs, float), np.asarray(ys, float))).ravel()
    a_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros((n, m))
        row[i, :] = 1
        a_eq.append(row.ravel())
        b_eq.append(float(ps[i]))
    for j in range(m):
        row = np.zeros((n, m))
        row[:, j] = 1
        a_eq.append(row.ravel())
        b_eq.append(float(qs[j]))
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    assert res.success
    return float(res.fun)


def hat_projection(support_atoms, v_min, v_max, delta_z, atoms, probs):
    """Hat-function form of the categorical projection:
    m_i = sum_j [1 - |clamp(y_j) - z_i| / dz]_0^1 * p_j."""
    y = np.clip(np.asarray(atoms, float), v_min, v_max)
    kernel = 1.0 - np.abs(y[None, :] - np.asarray(support_atoms)[:, None]) / delta_z
    return np.clip(kernel, 0.0, 1.0) @ np.asarray(probs, float)


def central_difference(fun, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (fun(up) - fun(dn)) / (2 * h)
    return out


def brute_return_law(rewards_per_step, gamma):
    """Enumerate every reward sequence of independent per-step laws.
    ``rewards_per_step`` is a list of (atoms, probs) pairs."""
    outcomes = {0.0: 1.0}
    disc = 1.0
    for atoms, probs in rewards_per_step:
        nxt = {}
        for v, w in outcomes.items():
            for a, p in zip(atoms, probs):
                key = round(v + disc * a, 12)
                nxt[key] = nxt.get(key, 0.0) + w * p
        outcomes = nxt
        disc *= gamma
    keys = sorted(outcomes)
    return keys, [outcomes[k] for k in keys]
