"""Finite discrete distributions and their elementary transforms.

A :class:`DiscreteDistribution` is the universal representation of a return
law in this package: a strictly increasing list of atoms with a matching
probability vector.  Every transform returns a new object; instances are
never mutated after construction.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MERGE_TOL = 1e-12
PROB_TOL = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Law of a real random variable with finitely many outcomes."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64).reshape(-1)
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if atoms.size == 0 or atoms.shape != probs.shape:
            raise ValueError("atoms and probs must be non-empty and of equal length")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if np.any(np.diff(atoms) <= 0):
            raise ValueError("atoms must be strictly increasing")
        if np.any(probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, expected 1")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "probs", _frozen(probs))

    def __len__(self) -> int:
        return self.atoms.size

    def __repr__(self) -> str:
        return f"DiscreteDistribution(atoms={self.atoms.tolist()}, probs={self.probs.tolist()})"

    def cdf(self, y) -> np.ndarray:
        """P(Z <= y), vectorized over ``y``."""
        cum = cumulative(self.probs)
        idx = np.searchsorted(self.atoms, np.asarray(y, dtype=np.float64), side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    def mean(self) -> float:
        return mean(self)

    def variance(self) -> float:
        return variance(self)

    def is_point_mass(self, at: float | None = None, tol: float = MERGE_TOL) -> bool:
        if self.atoms.size != 1:
            return False
        return at is None or abs(self.atoms[0] - at) <= tol

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteDistribution":
        return make_discrete(data["atoms"], data["probs"])


def cumulative(probs: np.ndarray) -> np.ndarray:
    """Cumulative sums accumulated in extended precision, last entry pinned to 1."""
    cum = np.cumsum(np.asarray(probs, dtype=np.longdouble)).astype(np.float64)
    cum[-1] = 1.0
    return cum


def coalesce(atoms: np.ndarray, probs: np.ndarray, merge_tol: float = MERGE_TOL):
    """Sort atoms and merge neighbours closer than ``merge_tol``.

    Merged groups keep their smallest atom and the summed probability.  Atoms
    carrying exactly zero mass are dropped.
    """
    atoms = np.asarray(atoms, dtype=np.float64).reshape(-1)
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    keep = probs > 0
    atoms, probs = atoms[keep], probs[keep]
    order = np.argsort(atoms, kind="stable")
    atoms, probs = atoms[order], probs[order]
    if atoms.size <= 1:
        return atoms, probs
    starts = np.concatenate(([True], np.diff(atoms) > merge_tol))
    idx = np.flatnonzero(starts)
    return atoms[idx], np.add.reduceat(probs, idx)


def make_discrete(atoms: Sequence[float], probs: Sequence[float],
                  merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    """Build a valid distribution from unsorted, possibly duplicated atoms.

    Probabilities are renormalized to sum to one.
    """
    atoms = np.asarray(atoms, dtype=np.float64).reshape(-1)
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if atoms.size == 0:
        raise ValueError("empty distribution")
    if atoms.shape != probs.shape:
        raise ValueError("atoms and probs must have equal length")
    if np.any(probs < 0):
        raise ValueError("negative probability")
    total = probs.sum()
    if not total > 0:
        raise ValueError("probabilities sum to zero")
    a, p = coalesce(atoms, probs / total, merge_tol)
    return DiscreteDistribution(a, p / p.sum())


def point_mass(value: float) -> DiscreteDistribution:
    return DiscreteDistribution([value], [1.0])


def inverse_cdf(d: DiscreteDistribution, q: float) -> float:
    """Smallest atom whose cumulative probability reaches ``q``."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile level must lie in (0, 1], got {q!r}")
    cum = cumulative(d.probs)
    i = int(np.searchsorted(cum, q, side="left"))
    return float(d.atoms[min(i, d.atoms.size - 1)])


def affine(d: DiscreteDistribution, scale: float, shift: float,
           merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    """Law of ``shift + scale * Z``; any real scale, including negative."""
    if scale == 0:
        return point_mass(shift)
    return make_discrete(shift + scale * d.atoms, d.probs, merge_tol)


def scale_shift(d: DiscreteDistribution, gamma: float, r: float,
                merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    """Law of ``r + gamma * Z``: discount, then add the reward.

    ``gamma = 0`` collapses to a point mass at ``r`` (terminal transition).
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return affine(d, gamma, r, merge_tol)


def mixture(components: Iterable[tuple[float, DiscreteDistribution]],
            merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    components = list(components)
    if not components:
        raise ValueError("empty component list")
    weights = np.array([w for w, _ in components], dtype=np.float64)
    if np.any(weights < 0):
        raise ValueError("negative mixture weight")
    if abs(weights.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"mixture weights sum to {weights.sum()!r}, expected 1")
    atoms = np.concatenate([d.atoms for _, d in components])
    probs = np.concatenate([w * d.probs for w, d in components])
    return make_discrete(atoms, probs, merge_tol)


def convolve(d1: DiscreteDistribution, d2: DiscreteDistribution,
             merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    """Law of the sum of two independent variables."""
    atoms = (d1.atoms[:, None] + d2.atoms[None, :]).ravel()
    probs = (d1.probs[:, None] * d2.probs[None, :]).ravel()
    return make_discrete(atoms, probs, merge_tol)


def product(d1: DiscreteDistribution, d2: DiscreteDistribution,
            merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    """Law of the product of two independent variables."""
    atoms = (d1.atoms[:, None] * d2.atoms[None, :]).ravel()
    probs = (d1.probs[:, None] * d2.probs[None, :]).ravel()
    return make_discrete(atoms, probs, merge_tol)


def mean(d: DiscreteDistribution) -> float:
    return float(np.dot(d.probs, d.atoms))


def variance(d: DiscreteDistribution) -> float:
    m = mean(d)
    return float(np.dot(d.probs, (d.atoms - m) ** 2))


def sample(d: DiscreteDistribution, rng: np.random.Generator, size=None):
    """Draw atoms by inverting the c.d.f. at uniform variates.

    Returns a float when ``size`` is None, otherwise an array.
    """
    u = 1.0 - rng.random(size)  # (0, 1]
    cum = cumulative(d.probs)
    idx = np.minimum(np.searchsorted(cum, u, side="left"), d.atoms.size - 1)
    out = d.atoms[idx]
    return float(out) if size is None else out


def empirical(values, merge_tol: float = MERGE_TOL) -> DiscreteDistribution:
    """Empirical law of a sample, equal weight per observation."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    return make_discrete(values, np.ones_like(values), merge_tol)


@dataclass(frozen=True)
class CategoricalSupport:
    """Evenly spaced atoms ``v_min + i * delta_z`` for ``i < n_atoms``."""

    v_min: float
    v_max: float
    n_atoms: int

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be smaller than v_max")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 2:
            raise ValueError("n_atoms must be an integer >= 2")

    @property
    def delta_z(self) -> float:
        return (self.v_max - self.v_min) / (self.n_atoms - 1)

    def atom(self, i: int) -> float:
        if i == self.n_atoms - 1:
            return float(self.v_max)
        return self.v_min + i * self.delta_z

    @property
    def atoms(self) -> np.ndarray:
        z = self.v_min + np.arange(self.n_atoms) * self.delta_z
        z[-1] = self.v_max
        return z


@dataclass(frozen=True, eq=False)
class CategoricalDistribution:
    support: CategoricalSupport
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64).reshape(-1)
        if probs.size != self.support.n_atoms:
            raise ValueError("probability vector length must equal n_atoms")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("invalid categorical probabilities")
        object.__setattr__(self, "probs", _frozen(probs))

    def mean(self) -> float:
        return float(np.dot(self.probs, self.support.atoms))

    def to_discrete(self) -> DiscreteDistribution:
        return make_discrete(self.support.atoms, self.probs)


def to_json(d: DiscreteDistribution) -> str:
    return json.dumps(d.to_dict())


def from_json(text: str) -> DiscreteDistribution:
    return DiscreteDistribution.from_dict(json.loads(text))


def to_csv_rows(d: DiscreteDistribution) -> str:
    """``atom,prob`` rows (with header) for plotting exports."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["atom", "prob"])
    for z, p in zip(d.atoms, d.probs):
        writer.writerow([repr(float(z)), repr(float(p))])
    return buf.getvalue()
