"""Exact distances between finite discrete distributions."""

from __future__ import annotations

import math

import numpy as np

from .dist import (
    MERGE_TOL,
    CategoricalDistribution,
    DiscreteDistribution,
    coalesce,
    cumulative,
)

LOG_FLOOR = 1e-300
# quantile pieces narrower than this are treated as breakpoint rounding noise
# by the sup-norm path
PIECE_TOL = 1e-12


def _quantile_pieces(f: DiscreteDistribution, g: DiscreteDistribution):
    """Lengths of the merged quantile pieces and |F^-1 - G^-1| on each."""
    cf = cumulative(f.probs)
    cg = cumulative(g.probs)
    edges = np.union1d(cf, cg)  # sorted, ends at exactly 1.0
    lengths = np.diff(edges, prepend=0.0)
    mid = edges - 0.5 * lengths
    i = np.minimum(np.searchsorted(cf, mid, side="left"), f.atoms.size - 1)
    j = np.minimum(np.searchsorted(cg, mid, side="left"), g.atoms.size - 1)
    return lengths, np.abs(f.atoms[i] - g.atoms[j])


def wasserstein(f: DiscreteDistribution, g: DiscreteDistribution, p: float = 1) -> float:
    """d_p between two discrete laws via the inverse-c.d.f. coupling.

    ``p`` may be any real >= 1 or ``math.inf``.
    """
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p!r}")
    if f.atoms.size == 1 and g.atoms.size == 1:
        return float(abs(f.atoms[0] - g.atoms[0]))
    lengths, gaps = _quantile_pieces(f, g)
    if math.isinf(p):
        live = lengths > PIECE_TOL
        if not np.any(live):
            live = lengths == lengths.max()
        return float(gaps[live].max())
    if p == 1:
        return float(np.dot(lengths, gaps))
    return float(np.dot(lengths, gaps ** p) ** (1.0 / p))


def max_wasserstein(z1, z2, p: float = 1) -> float:
    """Largest d_p over all state-action pairs of two tables."""
    if (z1.n_states, z1.n_actions) != (z2.n_states, z2.n_actions):
        raise ValueError("tables are indexed by different state-action sets")
    return max(wasserstein(z1[x, a], z2[x, a], p) for x, a in z1.pairs())


def _merged_cdfs(f: DiscreteDistribution, g: DiscreteDistribution, tol: float):
    grid, _ = coalesce(np.concatenate([f.atoms, g.atoms]),
                       np.ones(f.atoms.size + g.atoms.size), tol)
    # each atom falls in the group headed by the largest grid point <= atom
    fi = np.searchsorted(grid, f.atoms, side="right") - 1
    gi = np.searchsorted(grid, g.atoms, side="right") - 1
    pf = np.bincount(fi, weights=f.probs, minlength=grid.size)
    pg = np.bincount(gi, weights=g.probs, minlength=grid.size)
    return grid, pf, pg


def kolmogorov(f: DiscreteDistribution, g: DiscreteDistribution,
               tol: float = MERGE_TOL) -> float:
    """sup_y |F(y) - G(y)|, atoms closer than ``tol`` identified."""
    _, pf, pg = _merged_cdfs(f, g, tol)
    diff = np.cumsum(np.asarray(pf, np.longdouble) - np.asarray(pg, np.longdouble))
    return float(np.max(np.abs(diff)))


def kolmogorov_to_cdf(f: DiscreteDistribution, cdf) -> float:
    """sup_y |F(y) - G(y)| against a continuous reference c.d.f. ``cdf``."""
    cum = cumulative(f.probs)
    left = np.concatenate(([0.0], cum[:-1]))
    ref = np.asarray(cdf(f.atoms), dtype=np.float64)
    return float(max(np.max(np.abs(cum - ref)), np.max(np.abs(left - ref))))


def total_variation(f: DiscreteDistribution, g: DiscreteDistribution,
                    tol: float = MERGE_TOL) -> float:
    _, pf, pg = _merged_cdfs(f, g, tol)
    return float(0.5 * np.abs(pf - pg).sum())


def cross_entropy(m, p) -> float:
    """-sum_i m_i log p_i with 0 log 0 = 0.

    Accepts :class:`CategoricalDistribution` objects or raw probability
    vectors.  Zero entries of ``p`` under positive ``m`` are floored at
    ``LOG_FLOOR``, so the result saturates near ``690 * m_i`` instead of
    becoming infinite.
    """
    if isinstance(m, CategoricalDistribution) and isinstance(p, CategoricalDistribution):
        if m.support != p.support:
            raise ValueError("cross-entropy requires a shared support")
    m = np.asarray(getattr(m, "probs", m), dtype=np.float64)
    p = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    if m.shape != p.shape:
        raise ValueError("probability vectors differ in length")
    live = m > 0
    return float(-np.sum(m[live] * np.log(np.maximum(p[live], LOG_FLOOR))))
