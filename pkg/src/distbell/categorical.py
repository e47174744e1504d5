"""Categorical projection, sample Bellman targets, losses and tabular training."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import (
    CategoricalDistribution,
    CategoricalSupport,
    DiscreteDistribution,
    scale_shift,
)
from .metrics import wasserstein
from .mdp import TabularMdp, ValueDistributionTable, lowest_index

LOGIT_LIMIT = 1e6
SIGN_TOL = 1e-12


class TrainingDiverged(RuntimeError):
    pass


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


# --- projection -------------------------------------------------------------

def split_mass(support: CategoricalSupport, atoms: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Project rows of weighted atoms onto the support.

    ``atoms`` and ``probs`` have shape (..., M); the result has shape (..., N).
    Each atom is clamped to [v_min, v_max] and its mass split linearly between
    the two neighbouring support atoms.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    lead = atoms.shape[:-1]
    n = support.n_atoms
    b = (np.clip(atoms, support.v_min, support.v_max) - support.v_min) / support.delta_z
    b = np.clip(b, 0.0, n - 1)
    lo = np.floor(b)
    hi = np.ceil(b)
    w_hi = probs * (b - lo)
    w_lo = np.where(lo == hi, probs, probs * (hi - b))
    rows = np.arange(int(np.prod(lead, dtype=np.int64))).reshape(lead + (1,)) * n
    flat = np.bincount((rows + lo.astype(np.int64)).ravel(), weights=w_lo.ravel(),
                       minlength=rows.size * n)
    flat += np.bincount((rows + hi.astype(np.int64)).ravel(), weights=w_hi.ravel(),
                        minlength=rows.size * n)
    return flat.reshape(lead + (n,))


def project(support: CategoricalSupport, target: DiscreteDistribution) -> CategoricalDistribution:
    """Categorical projection of an arbitrary discrete law onto ``support``."""
    return CategoricalDistribution(support, split_mass(support, target.atoms, target.probs))


# --- tabular parametrization ------------------------------------------------

@dataclass
class LogitTable:
    """One logit vector per state-action pair; probabilities via softmax."""

    support: CategoricalSupport
    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=np.float64)
        if self.logits.ndim != 3 or self.logits.shape[2] != self.support.n_atoms:
            raise ValueError("logits must have shape (n_states, n_actions, n_atoms)")
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be finite")

    @classmethod
    def zeros(cls, support: CategoricalSupport, n_states: int, n_actions: int) -> "LogitTable":
        return cls(support, np.zeros((n_states, n_actions, support.n_atoms)))

    @property
    def n_states(self) -> int:
        return self.logits.shape[0]

    @property
    def n_actions(self) -> int:
        return self.logits.shape[1]

    def probs(self) -> np.ndarray:
        return softmax(self.logits)

    def distribution(self, x: int, a: int) -> CategoricalDistribution:
        return CategoricalDistribution(self.support, softmax(self.logits[x, a]))

    def q_values(self) -> np.ndarray:
        return self.probs() @ self.support.atoms

    def to_table(self) -> ValueDistributionTable:
        return ValueDistributionTable(
            [[self.distribution(x, a).to_discrete() for a in range(self.n_actions)]
             for x in range(self.n_states)])

    def copy(self) -> "LogitTable":
        return LogitTable(self.support, self.logits.copy())

    def to_dict(self) -> dict:
        s = self.support
        return {"v_min": s.v_min, "v_max": s.v_max, "n_atoms": s.n_atoms,
                "logits": self.logits.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "LogitTable":
        return cls(CategoricalSupport(data["v_min"], data["v_max"], data["n_atoms"]), data["logits"])


@dataclass(frozen=True)
class TransitionSample:
    """One observed transition.  ``a_next`` fixes the bootstrap action;
    when None the greedy action under the target parameters is used."""

    x: int
    a: int
    r: float
    x_next: int
    gamma_t: float
    a_next: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.gamma_t <= 1.0:
            raise ValueError("gamma_t must lie in [0, 1]")


def draw_transition(mdp: TabularMdp, x: int, a: int, rng: np.random.Generator,
                    policy=None) -> TransitionSample:
    """Sample (r, x') for a pair; with a policy, also sample the next action."""
    r = mdp.reward[x][a]
    reward = float(r.atoms[min(np.searchsorted(np.cumsum(r.probs), rng.random(), side="right"),
                               r.atoms.size - 1)])
    row = mdp.transition[x, a]
    x_next = int(min(np.searchsorted(np.cumsum(row), rng.random(), side="right"), row.size - 1))
    gamma_t = 0.0 if mdp.terminal[x_next] else mdp.gamma
    a_next = None
    if policy is not None:
        pi = np.asarray(policy)[x_next]
        a_next = int(min(np.searchsorted(np.cumsum(pi), rng.random(), side="right"), pi.size - 1))
    return TransitionSample(x, a, reward, x_next, gamma_t, a_next)


def _bootstrap_action(theta_target: LogitTable, sample: TransitionSample, tie_break) -> int:
    if sample.a_next is not None:
        return sample.a_next
    q = theta_target.probs()[sample.x_next] @ theta_target.support.atoms
    tied = [int(a) for a in np.flatnonzero(q == q.max())]
    return tied[0] if len(tied) == 1 else int((tie_break or lowest_index)(sample.x_next, tied, None))


def sample_bellman_target(theta_target: LogitTable, mdp: TabularMdp, sample: TransitionSample,
                          tie_break=None) -> CategoricalDistribution:
    """Projected sample Bellman target for one transition.

    Follows the categorical algorithm step by step: pick the bootstrap action,
    move every support atom through r + gamma_t z, clamp, and hand its target
    probability to the two bracketing atoms.  An atom landing exactly on a
    support point keeps all of its mass there.
    """
    if mdp.terminal[sample.x_next] and sample.gamma_t != 0.0:
        raise ValueError("transitions into a terminal state need gamma_t = 0")
    support = theta_target.support
    a_star = _bootstrap_action(theta_target, sample, tie_break)
    p_next = softmax(theta_target.logits[sample.x_next, a_star])
    z = support.atoms
    dz = support.delta_z
    m = np.zeros(support.n_atoms)
    for j in range(support.n_atoms):
        tz = min(max(sample.r + sample.gamma_t * z[j], support.v_min), support.v_max)
        b = min((tz - support.v_min) / dz, support.n_atoms - 1)
        lo, hi = math.floor(b), math.ceil(b)
        if lo == hi:
            m[lo] += p_next[j]
        else:
            m[lo] += p_next[j] * (hi - b)
            m[hi] += p_next[j] * (b - lo)
    return CategoricalDistribution(support, m)


def bellman_sample_law(theta_target: LogitTable, sample: TransitionSample,
                       tie_break=None) -> DiscreteDistribution:
    """Unprojected law of r + gamma_t Z_target(x', a*)."""
    a_star = _bootstrap_action(theta_target, sample, tie_break)
    return scale_shift(theta_target.distribution(sample.x_next, a_star).to_discrete(),
                       sample.gamma_t, sample.r)


def bernoulli_target(theta_target: LogitTable, mdp: TabularMdp, sample: TransitionSample,
                     tie_break=None) -> CategoricalDistribution:
    """Two-atom target whose mean is the clamped mean of the sample target."""
    support = theta_target.support
    if support.n_atoms != 2:
        raise ValueError("the Bernoulli target needs a two-atom support")
    if mdp.terminal[sample.x_next] and sample.gamma_t != 0.0:
        raise ValueError("transitions into a terminal state need gamma_t = 0")
    q = bellman_sample_law(theta_target, sample, tie_break).mean()
    return CategoricalDistribution(support, bernoulli_probs(support, q))


def bernoulli_probs(support: CategoricalSupport, q):
    """(1 - w, w) with w = clamp((q - v_min) / delta_z, 0, 1); vectorized in q."""
    w = np.clip((np.asarray(q, dtype=np.float64) - support.v_min) / support.delta_z, 0.0, 1.0)
    return np.stack([1.0 - w, w], axis=-1)


# --- losses -----------------------------------------------------------------

def ce_loss_and_gradient(m, logits) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against target ``m`` and its gradient."""
    m = np.asarray(getattr(m, "probs", m), dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if m.shape != logits.shape:
        raise ValueError("target and logits differ in length")
    loss = float(-np.dot(m, log_softmax(logits)))
    return loss, softmax(logits) * m.sum() - m


def w1_cdf_terms(probs: np.ndarray, support_atoms: np.ndarray,
                 t_atoms: np.ndarray, t_probs: np.ndarray):
    """Batched d_1 between categorical rows and discrete targets, with the
    derivative of d_1 with respect to each support probability.

    Shapes: ``probs`` (R, N), ``t_atoms``/``t_probs`` (R, M).  Targets may be
    padded with zero-probability atoms.
    """
    R, N = probs.shape
    pts = np.concatenate([np.broadcast_to(support_atoms, (R, N)), t_atoms], axis=1)
    w = np.concatenate([probs, -t_probs], axis=1)
    order = np.argsort(pts, axis=1, kind="stable")
    pts_s = np.take_along_axis(pts, order, axis=1)
    dcdf = np.cumsum(np.take_along_axis(w, order, axis=1), axis=1)[:, :-1]
    seg = np.diff(pts_s, axis=1)
    loss = np.sum(np.abs(dcdf) * seg, axis=1)
    sign = np.where(np.abs(dcdf) > SIGN_TOL, np.sign(dcdf), 0.0)
    contrib = sign * seg
    tail = np.concatenate([np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1], np.zeros((R, 1))], axis=1)
    pos = np.argsort(order, axis=1, kind="stable")[:, :N]
    return loss, np.take_along_axis(tail, pos, axis=1)


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. probabilities through the softmax Jacobian."""
    return p * (grad_p - np.sum(p * grad_p, axis=-1, keepdims=True))


def wasserstein_loss_and_subgradient(logits, support: CategoricalSupport,
                                     target: DiscreteDistribution) -> tuple[float, np.ndarray]:
    """d_1 between softmax(logits) on ``support`` and ``target``, with a
    subgradient w.r.t. the logits.  Segments where the two c.d.f.s agree
    contribute nothing to the subgradient."""
    logits = np.asarray(logits, dtype=np.float64)
    p = softmax(logits)
    loss = wasserstein(CategoricalDistribution(support, p).to_discrete(), target, 1)
    _, grad_p = w1_cdf_terms(p[None, :], support.atoms, target.atoms[None, :], target.probs[None, :])
    return loss, softmax_backward(p, grad_p[0])


# --- training ---------------------------------------------------------------

REGIMES = ("supervised_target", "sampled_bellman")
LOSSES = ("categorical_ce", "wasserstein_p1", "bernoulli")


@dataclass
class TrainConfig:
    regime: str = "supervised_target"
    loss: str = "categorical_ce"
    sweeps: int = 5000
    step_size: float = 0.1
    seed: int = 0
    target_refresh_interval: int = 1
    bootstrap: str = "policy"  # "policy": a' ~ pi; "greedy": argmax under the target
    eval_interval: int = 1

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.bootstrap not in ("policy", "greedy"):
            raise ValueError(f"unknown bootstrap rule {self.bootstrap!r}")
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.target_refresh_interval < 1 or self.eval_interval < 1:
            raise ValueError("intervals must be >= 1")


def pad_distributions(dists: Sequence[DiscreteDistribution]):
    """Stack laws into (R, M) atom/prob arrays, padding with zero-mass atoms."""
    M = max(len(d) for d in dists)
    atoms = np.empty((len(dists), M))
    probs = np.zeros((len(dists), M))
    for i, d in enumerate(dists):
        k = len(d)
        atoms[i, :k] = d.atoms
        atoms[i, k:] = d.atoms[-1]
        probs[i, :k] = d.probs
    return atoms, probs


class _PairSampler:
    """Vectorized draws of (r, x') for a fixed list of state-action pairs."""

    def __init__(self, mdp: TabularMdp, xs: np.ndarray, acts: np.ndarray):
        self.mdp = mdp
        self.r_atoms, r_probs = pad_distributions([mdp.reward[x][a] for x, a in zip(xs, acts)])
        self.r_cdf = np.cumsum(r_probs, axis=1)
        self.r_cdf[:, -1] = 1.0
        self.p_cdf = np.cumsum(mdp.transition[xs, acts], axis=1)
        self.p_cdf[:, -1] = 1.0

    @staticmethod
    def _pick(cdf, u):
        return np.minimum((cdf <= u[:, None]).sum(axis=1), cdf.shape[1] - 1)

    def draw(self, rng: np.random.Generator):
        R = self.r_cdf.shape[0]
        j = self._pick(self.r_cdf, rng.random(R))
        r = self.r_atoms[np.arange(R), j]
        x_next = self._pick(self.p_cdf, rng.random(R))
        return r, x_next


def _policy_cdf(policy):
    c = np.cumsum(np.asarray(policy, dtype=np.float64), axis=1)
    c[:, -1] = 1.0
    return c


def train(mdp: TabularMdp, policy, config: TrainConfig, support: CategoricalSupport,
          oracle: ValueDistributionTable | None = None, pairs=None,
          init: LogitTable | None = None, tie_break=None) -> tuple[LogitTable, list]:
    """Tabular gradient-descent training of a categorical value distribution.

    Every sweep updates all listed pairs at once against targets built from a
    frozen copy of the logits.  History rows hold ``sweep``, ``mean_d1`` and
    ``max_d1`` (distance to ``oracle`` over ``pairs``, when an oracle is given)
    and the mean training ``loss``.
    """
    if config.regime == "supervised_target" and oracle is None:
        raise ValueError("the supervised regime needs an oracle table")
    if config.loss == "bernoulli" and support.n_atoms != 2:
        raise ValueError("the Bernoulli loss needs a two-atom support")
    if pairs is None:
        pairs = [(x, a) for x, a in mdp.pairs() if not mdp.terminal[x]]
    xs = np.array([x for x, _ in pairs], dtype=np.int64)
    acts = np.array([a for _, a in pairs], dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0x7E1,)))
    z = support.atoms
    theta = init.copy() if init is not None else LogitTable.zeros(support, mdp.n_states, mdp.n_actions)
    frozen = theta.logits.copy()
    R = len(pairs)

    if oracle is not None:
        o_atoms, o_probs = pad_distributions([oracle[x, a] for x, a in pairs])
        o_proj = split_mass(support, o_atoms, o_probs)
        o_mean = np.sum(o_atoms * o_probs, axis=1)
    sampler = _PairSampler(mdp, xs, acts) if config.regime == "sampled_bellman" else None
    pi_cdf = _policy_cdf(policy) if policy is not None else None
    if config.regime == "sampled_bellman" and config.bootstrap == "policy" and policy is None:
        raise ValueError("policy bootstrapping needs a policy")

    history = []
    for sweep in range(1, config.sweeps + 1):
        p = softmax(theta.logits[xs, acts])
        if config.regime == "supervised_target":
            if config.loss == "categorical_ce":
                target_m = o_proj
            elif config.loss == "bernoulli":
                target_m = bernoulli_probs(support, o_mean)
            else:
                t_atoms, t_probs = o_atoms, o_probs
        else:
            r, x_next = sampler.draw(rng)
            gamma_t = np.where(mdp.terminal[x_next], 0.0, mdp.gamma)
            if config.bootstrap == "policy":
                u = rng.random(R)
                a_next = np.minimum((pi_cdf[x_next] <= u[:, None]).sum(axis=1), mdp.n_actions - 1)
            else:
                q = softmax(frozen[x_next]) @ z
                a_next = np.argmax(q, axis=1)  # first maximal index
            p_next = softmax(frozen[x_next, a_next])
            t_atoms = r[:, None] + gamma_t[:, None] * z[None, :]
            t_probs = p_next
            if config.loss == "categorical_ce":
                target_m = split_mass(support, t_atoms, t_probs)
            elif config.loss == "bernoulli":
                target_m = bernoulli_probs(support, np.sum(t_atoms * t_probs, axis=1))

        if config.loss == "wasserstein_p1":
            loss_rows, grad_p = w1_cdf_terms(p, z, t_atoms, t_probs)
            grad = softmax_backward(p, grad_p)
        else:
            loss_rows = -np.sum(target_m * np.log(np.maximum(p, 1e-300)), axis=1)
            grad = p - target_m
        theta.logits[xs, acts] -= config.step_size * grad
        if not np.all(np.abs(theta.logits[xs, acts]) <= LOGIT_LIMIT):
            raise TrainingDiverged(f"logit magnitude exceeded {LOGIT_LIMIT:g} at sweep {sweep}")
        if sweep % config.target_refresh_interval == 0:
            frozen = theta.logits.copy()

        if sweep % config.eval_interval == 0 or sweep == config.sweeps:
            row = {"sweep": sweep, "loss": float(np.mean(loss_rows))}
            if oracle is not None:
                d1, _ = w1_cdf_terms(softmax(theta.logits[xs, acts]), z, o_atoms, o_probs)
                row["mean_d1"] = float(np.mean(d1))
                row["max_d1"] = float(np.max(d1))
            history.append(row)
    return theta, history
