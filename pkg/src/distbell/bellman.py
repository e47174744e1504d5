"""Expected and distributional Bellman operators and fixed-point drivers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dist import MERGE_TOL, CategoricalSupport, DiscreteDistribution, coalesce, point_mass
from .metrics import max_wasserstein
from .mdp import TabularMdp, ValueDistributionTable, greedy_policy

MAX_ATOMS = 10**6


class SupportTooLarge(RuntimeError):
    pass


def _successor_weights(mdp: TabularMdp) -> np.ndarray:
    """Transition kernel with transitions into terminal states removed."""
    P = np.array(mdp.transition)
    P[:, :, mdp.terminal] = 0.0
    return P


def expected_bellman_pe(q: np.ndarray, mdp: TabularMdp, policy) -> np.ndarray:
    """One application of the policy-evaluation operator to a Q table."""
    q = np.asarray(q, dtype=np.float64)
    v = np.sum(np.asarray(policy) * q, axis=1)
    out = mdp.mean_reward() + mdp.gamma * _successor_weights(mdp) @ v
    out[mdp.terminal] = mdp.mean_reward()[mdp.terminal]
    return out


def expected_bellman_opt(q: np.ndarray, mdp: TabularMdp) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = mdp.mean_reward() + mdp.gamma * _successor_weights(mdp) @ q.max(axis=1)
    out[mdp.terminal] = mdp.mean_reward()[mdp.terminal]
    return out


def policy_q_values(mdp: TabularMdp, policy) -> np.ndarray:
    """Q^pi by solving the linear Bellman system directly."""
    nS, nA = mdp.n_states, mdp.n_actions
    P = _successor_weights(mdp).reshape(nS * nA, nS)
    # next-pair kernel: (x,a) -> (x',a') with weight P(x'|x,a) pi(a'|x')
    M = (P[:, :, None] * np.asarray(policy)[None, :, :]).reshape(nS * nA, nS * nA)
    A = np.eye(nS * nA) - mdp.gamma * M
    return np.linalg.solve(A, mdp.mean_reward().reshape(-1)).reshape(nS, nA)


def _next_pair_law(z: ValueDistributionTable, policy, x: int, merge_tol: float):
    """Atoms and probabilities of Z(x, A') with A' ~ policy(. | x)."""
    parts = [(z[x, a].atoms, w * z[x, a].probs)
             for a, w in enumerate(policy[x]) if w > 0]
    atoms = np.concatenate([p[0] for p in parts])
    probs = np.concatenate([p[1] for p in parts])
    return coalesce(atoms, probs, merge_tol)


def project_table(z: ValueDistributionTable, support: CategoricalSupport) -> ValueDistributionTable:
    from .categorical import project

    return ValueDistributionTable([[project(support, d).to_discrete() for d in row] for row in z.rows()])


def dist_bellman_pe_exact(z: ValueDistributionTable, mdp: TabularMdp, policy,
                          merge_tol: float = MERGE_TOL, max_atoms: int = MAX_ATOMS,
                          support: CategoricalSupport | None = None) -> ValueDistributionTable:
    """Exact distributional policy-evaluation operator.

    Each output entry is the law of R(x,a) + gamma * Z(X', A') with reward,
    successor and next-pair value drawn independently.  Successors that are
    terminal contribute a zero continuation; terminal states map to their
    reward law.  If ``support`` is given, every entry is projected onto it.
    """
    if (z.n_states, z.n_actions) != (mdp.n_states, mdp.n_actions):
        raise ValueError("table does not match the MDP")
    policy = np.asarray(policy)
    gamma = mdp.gamma
    P = _successor_weights(mdp)
    nxt = [None] * mdp.n_states
    for x2 in range(mdp.n_states):
        if not mdp.terminal[x2] and np.any(P[:, :, x2] > 0):
            nxt[x2] = _next_pair_law(z, policy, x2, merge_tol)
    rows = []
    for x in range(mdp.n_states):
        row = []
        for a in range(mdp.n_actions):
            r = mdp.reward[x][a]
            if mdp.terminal[x]:
                row.append(r)
                continue
            cont_atoms, cont_probs = [], []
            stop = 1.0 - P[x, a].sum()
            if stop > 1e-15:
                cont_atoms.append(np.zeros(1))
                cont_probs.append(np.array([stop]))
            for x2 in np.flatnonzero(P[x, a] > 0):
                za, zp = nxt[x2]
                cont_atoms.append(gamma * za)
                cont_probs.append(P[x, a, x2] * zp)
            ca = np.concatenate(cont_atoms)
            cp = np.concatenate(cont_probs)
            if r.atoms.size * ca.size > max_atoms:
                raise SupportTooLarge(
                    f"pair ({x},{a}) would carry {r.atoms.size * ca.size} atoms (cap {max_atoms})")
            if gamma == 0:
                ca, cp = np.zeros(1), np.ones(1)
            atoms = (r.atoms[:, None] + ca[None, :]).ravel()
            probs = (r.probs[:, None] * cp[None, :]).ravel()
            atoms, probs = coalesce(atoms, probs, merge_tol)
            row.append(DiscreteDistribution(atoms, probs / probs.sum()))
        rows.append(row)
    out = ValueDistributionTable(rows)
    if support is not None:
        out = project_table(out, support)
    return out


def dist_bellman_opt(z: ValueDistributionTable, mdp: TabularMdp, tie_break=None,
                     merge_tol: float = MERGE_TOL, max_atoms: int = MAX_ATOMS,
                     support: CategoricalSupport | None = None) -> ValueDistributionTable:
    """Distributional optimality operator: T^pi for the greedy pi of E[z]."""
    policy = greedy_policy(z.means(), tie_break, z=z)
    return dist_bellman_pe_exact(z, mdp, policy, merge_tol, max_atoms, support)


def variance_table(z: ValueDistributionTable) -> np.ndarray:
    return z.variances()


@dataclass
class IterationReport:
    deltas: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    cycle_detected: bool = False
    cycle_period: int | None = None
    final: ValueDistributionTable | None = None
    history: list | None = None

    def to_dict(self) -> dict:
        return {
            "deltas": self.deltas,
            "ratios": self.ratios,
            "iterations": self.iterations,
            "converged": self.converged,
            "cycle_detected": self.cycle_detected,
            "cycle_period": self.cycle_period,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def iterate(op: Callable[[ValueDistributionTable], ValueDistributionTable],
            z0: ValueDistributionTable, p: float = 1, tol: float = 1e-6,
            max_iters: int = 1000, keep_history: bool = False) -> IterationReport:
    """Apply ``op`` until successive tables are within ``tol`` in max-d_p.

    A table returning within ``tol`` of the one two steps earlier while still
    moving flags a period-2 cycle and stops the run unconverged.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    report = IterationReport()
    prev2, prev = None, z0
    history = [z0] if keep_history else None
    for k in range(1, max_iters + 1):
        cur = op(prev)
        delta = max_wasserstein(cur, prev, p)
        if report.deltas:
            last = report.deltas[-1]
            report.ratios.append(delta / last if last > 0 else (0.0 if delta == 0 else math.inf))
        report.deltas.append(delta)
        report.iterations = k
        if history is not None:
            history.append(cur)
        if delta < tol:
            report.converged = True
            prev = cur
            break
        if prev2 is not None and max_wasserstein(cur, prev2, p) < tol:
            report.cycle_detected = True
            report.cycle_period = 2
            prev = cur
            break
        prev2, prev = prev, cur
    report.final = prev
    report.history = history
    return report


def zero_table(mdp: TabularMdp) -> ValueDistributionTable:
    return ValueDistributionTable.constant(mdp.n_states, mdp.n_actions, point_mass(0.0))
