"""Finite Markov reward processes with linear features.

Provides exact population quantities (stationary distribution, value function,
and the steady-state linear system with its feature second-moment matrix),
seeded trajectory simulation for both the on-policy and off-policy sampling
models, the empirical system built from a trajectory, and the projected
Bellman error, which coincides with the weighted residual loss under the
inverse second-moment weight.

Model construction and the exact computations are pure; ``simulate`` is pure
given its seed, so independent seeds can run concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyTrajectory,
    NoUniqueStationary,
    ParseError,
    RankDeficientC,
    SingularSystem,
)
from .geometry import WeightMatrix, loss

_ROW_SUM_TOL = 1e-12
_STATIONARY_TOL = 1e-12
_STATIONARY_CAP = 1_000_000


def _check_stochastic(P, name: str) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {P.shape}")
    if np.any(P < 0):
        raise ValueError(f"{name} has negative entries")
    sums = P.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"{name} row {bad} sums to {sums[bad]!r}, not 1")
    return P


@dataclass(frozen=True)
class FiniteMrp:
    """Finite-state chain with per-transition mean rewards and Gaussian reward noise."""

    n_states: int
    transition: np.ndarray
    mean_reward: np.ndarray
    reward_noise_std: float
    gamma: float

    @classmethod
    def create(cls, transition, mean_reward, gamma: float, reward_noise_std: float = 0.0) -> "FiniteMrp":
        P = _check_stochastic(transition, "transition")
        R = np.asarray(mean_reward, dtype=float)
        n = P.shape[0]
        if R.shape != (n, n):
            raise DimensionMismatch(f"mean_reward shape {R.shape} does not match {n} states")
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie strictly inside (0, 1)")
        if reward_noise_std < 0:
            raise ValueError("reward_noise_std must be nonnegative")
        return cls(n, P, R, float(reward_noise_std), float(gamma))

    def expected_reward(self) -> np.ndarray:
        """Per-state mean reward under one transition of the target kernel."""
        return np.einsum("ij,ij->i", self.transition, self.mean_reward)


@dataclass(frozen=True)
class OffPolicyMrp:
    """Target kernel plus a separate behavior chain generating the index process."""

    base: FiniteMrp
    behavior: np.ndarray

    @classmethod
    def create(cls, base: FiniteMrp, behavior) -> "OffPolicyMrp":
        B = _check_stochastic(behavior, "behavior")
        if B.shape[0] != base.n_states:
            raise DimensionMismatch("behavior chain size does not match the target kernel")
        return cls(base, B)


@dataclass(frozen=True)
class FeatureMap:
    """Row x of ``phi`` is the feature vector of state x."""

    phi: np.ndarray

    @classmethod
    def create(cls, phi) -> "FeatureMap":
        phi = np.asarray(phi, dtype=float)
        if phi.ndim != 2:
            raise DimensionMismatch(f"feature matrix must be 2-d, got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("features must be finite")
        return cls(phi)

    @property
    def dim(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class Trajectory:
    """A sampled path: states holds X_0..X_n; rewards and next_states hold n transitions.

    On-policy, next_states[t] == states[t + 1]; off-policy the successor states
    are drawn independently from the target kernel.
    """

    states: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __post_init__(self):
        n = self.rewards.size
        if self.next_states.size != n or self.states.size != n + 1:
            raise DimensionMismatch("trajectory arrays have inconsistent lengths")

    @property
    def length(self) -> int:
        return self.rewards.size


def stationary_distribution(P) -> np.ndarray:
    """Stationary distribution by power iteration from the uniform vector."""
    P = _check_stochastic(P, "transition")
    n = P.shape[0]
    mu = np.full(n, 1.0 / n)
    for _ in range(_STATIONARY_CAP):
        nxt = mu @ P
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - mu)) <= _STATIONARY_TOL:
            resid = np.max(np.abs(nxt @ P - nxt))
            if resid <= _STATIONARY_TOL:
                return nxt
        mu = nxt
    raise NoUniqueStationary("power iteration hit its cap without converging")


def value_function(mrp: FiniteMrp) -> np.ndarray:
    """Discounted value V = (I - gamma P)^{-1} rbar."""
    rbar = mrp.expected_reward()
    try:
        V = np.linalg.solve(np.eye(mrp.n_states) - mrp.gamma * mrp.transition, rbar)
    except np.linalg.LinAlgError as exc:  # cannot happen for gamma < 1, guarded anyway
        raise SingularSystem("Bellman system solve failed") from exc
    return V


def _index_chain(model) -> np.ndarray:
    return model.behavior if isinstance(model, OffPolicyMrp) else model.transition


def _target(model) -> FiniteMrp:
    return model.base if isinstance(model, OffPolicyMrp) else model


def exact_system(model, features: FeatureMap) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Population linear system (A, b, C) under the index chain's stationary law.

    A = E[phi(X) (phi(X) - gamma phi(X'))'] with X' drawn from the target
    kernel, b = E[rbar(X) phi(X)], C = E[phi(X) phi(X)'].  The expectation is
    over the stationary distribution of the chain generating the index
    process (the behavior chain off-policy, the target chain on-policy).
    """
    target = _target(model)
    phi = features.phi
    if phi.shape[0] != target.n_states:
        raise DimensionMismatch("feature matrix rows do not match the number of states")
    mu = stationary_distribution(_index_chain(model))
    weighted = phi * mu[:, None]
    displaced = phi - target.gamma * (target.transition @ phi)
    A = weighted.T @ displaced
    b = weighted.T @ target.expected_reward()
    C = weighted.T @ phi
    C = 0.5 * (C + C.T)
    return A, b, C


def simulate(model, n: int, seed: int) -> Trajectory:
    """Sample n transitions, starting from the exact stationary distribution.

    On-policy the chain steps via the target kernel and rewards attach to the
    realized transitions.  Off-policy the index chain steps via the behavior
    kernel while an independent successor and its reward are drawn from the
    target kernel at every step.  Deterministic given (model, n, seed).
    """
    target = _target(model)
    index_P = _index_chain(model)
    mu = stationary_distribution(index_P)
    rng = np.random.default_rng(seed)

    x0 = int(np.searchsorted(np.cumsum(mu), rng.random(), side="right"))
    x0 = min(x0, target.n_states - 1)
    states = np.empty(n + 1, dtype=np.int64)
    states[0] = x0
    cdf_index = np.cumsum(index_P, axis=1)
    u_steps = rng.random(n)
    for t in range(n):
        states[t + 1] = np.searchsorted(cdf_index[states[t]], u_steps[t], side="right")
    np.clip(states, 0, target.n_states - 1, out=states)

    if isinstance(model, OffPolicyMrp):
        cdf_target = np.cumsum(target.transition, axis=1)
        u_tilde = rng.random(n)
        next_states = np.empty(n, dtype=np.int64)
        for t in range(n):
            next_states[t] = np.searchsorted(cdf_target[states[t]], u_tilde[t], side="right")
        np.clip(next_states, 0, target.n_states - 1, out=next_states)
    else:
        next_states = states[1:].copy()

    rewards = target.mean_reward[states[:-1], next_states].astype(float)
    if target.reward_noise_std > 0:
        rewards = rewards + target.reward_noise_std * rng.standard_normal(n)
    return Trajectory(states=states, rewards=rewards, next_states=next_states)


def empirical_system(traj: Trajectory, features: FeatureMap, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample means (A_obs, b_obs, C_obs) over the trajectory's transitions."""
    n = traj.length
    if n < 1:
        raise EmptyTrajectory("empirical system needs at least one transition")
    cur = features.phi[traj.states[:n]]
    nxt = features.phi[traj.next_states]
    A_obs = cur.T @ (cur - gamma * nxt) / n
    b_obs = cur.T @ traj.rewards / n
    C_obs = cur.T @ cur / n
    return A_obs, b_obs, 0.5 * (C_obs + C_obs.T)


def inverse_weight(C, min_eigenvalue: float = 1e-10) -> WeightMatrix:
    """Weight M = C^{-1}; raises RankDeficientC when C is numerically singular."""
    return WeightMatrix.from_inverse(C, min_eigenvalue)


def projected_bellman_error(theta, mrp: FiniteMrp, features: FeatureMap) -> float:
    """Stationary-weighted norm of the projected Bellman residual of W_theta.

    The Bellman image of W = phi theta is rbar + gamma P W; the residual is
    projected onto the feature span under the stationary-weighted inner
    product.  Equals the residual loss ||A theta - b|| weighted by C^{-1}.
    """
    theta = np.asarray(theta, dtype=float)
    phi = features.phi
    if theta.shape != (phi.shape[1],):
        raise DimensionMismatch("theta length does not match the feature dimension")
    mu = stationary_distribution(mrp.transition)
    W = phi @ theta
    residual = mrp.expected_reward() + mrp.gamma * (mrp.transition @ W) - W
    D = mu[:, None] * phi
    Cmat = phi.T @ D
    rhs = D.T @ residual
    w, V = np.linalg.eigh(0.5 * (Cmat + Cmat.T))
    if w.min() < 1e-10:
        raise RankDeficientC(f"feature second moment has eigenvalue {w.min():.3e}")
    coef = V @ ((V.T @ rhs) / w)
    projected = phi @ coef
    return float(np.sqrt(max(0.0, float(projected @ (mu * projected)))))


# ---------------------------------------------------------------------------
# Model files: one JSON document per model.

def save_model(path, model, features: FeatureMap) -> None:
    target = _target(model)
    doc = {
        "n_states": target.n_states,
        "gamma": target.gamma,
        "reward_noise_std": target.reward_noise_std,
        "transition": target.transition.tolist(),
        "mean_reward": target.mean_reward.tolist(),
        "features": features.phi.tolist(),
    }
    if isinstance(model, OffPolicyMrp):
        doc["behavior"] = model.behavior.tolist()
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _rows_to_matrix(rows, n_cols: int | None, name: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ParseError(f"{name} must be a non-empty list of rows")
    width = len(rows[0]) if n_cols is None else n_cols
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"{name} row {i} has length {len(row)}, expected {width}")
    return np.asarray(rows, dtype=float)


def load_model(path):
    """Parse a model document; returns (FiniteMrp or OffPolicyMrp, FeatureMap)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc}") from exc
    try:
        n = int(doc["n_states"])
        gamma = float(doc["gamma"])
        noise = float(doc.get("reward_noise_std", 0.0))
        P = _rows_to_matrix(doc["transition"], n, "transition")
        R = _rows_to_matrix(doc["mean_reward"], n, "mean_reward")
        phi = _rows_to_matrix(doc["features"], None, "features")
    except KeyError as exc:
        raise ParseError(f"model file {path} is missing field {exc}") from exc
    if P.shape != (n, n) or R.shape != (n, n) or phi.shape[0] != n:
        raise ParseError(f"model file {path} has inconsistent matrix sizes")
    try:
        base = FiniteMrp.create(P, R, gamma, noise)
    except ValueError as exc:
        raise ParseError(f"model file {path}: {exc}") from exc
    features = FeatureMap.create(phi)
    if "behavior" in doc:
        B = _rows_to_matrix(doc["behavior"], n, "behavior")
        try:
            return OffPolicyMrp.create(base, B), features
        except ValueError as exc:
            raise ParseError(f"model file {path}: {exc}") from exc
    return base, features
