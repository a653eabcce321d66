"""Shared builders for the test suite: weight matrices and the MRP model pair."""

import numpy as np

from linverse import FeatureMap, FiniteMrp, OffPolicyMrp, WeightMatrix


def random_weight(rng, m, identity_every=None, trial=0):
    if identity_every is not None and trial % identity_every == 0:
        return WeightMatrix.identity(m)
    G = rng.standard_normal((m, m))
    return WeightMatrix.from_matrix(G @ G.T / m + 0.1 * np.eye(m))


def standard_chain(reward_noise=0.5):
    """Five-state random walk with polynomial features; the on-policy suite model."""
    P = np.array([
        [0.6, 0.4, 0.0, 0.0, 0.0],
        [0.4, 0.2, 0.4, 0.0, 0.0],
        [0.0, 0.4, 0.2, 0.4, 0.0],
        [0.0, 0.0, 0.4, 0.2, 0.4],
        [0.0, 0.0, 0.0, 0.4, 0.6],
    ])
    x = (np.arange(5) - 2.0) / 2.0
    R = 1.0 + 0.5 * x[:, None] - 0.25 * x[None, :]
    phi = np.column_stack([np.ones(5), x, x**2])
    return FiniteMrp.create(P, R, 0.9, reward_noise), FeatureMap.create(phi)


def _birth_death(n, p_up, p_down):
    P = np.zeros((n, n))
    for i in range(n):
        up = p_up if i < n - 1 else 0.0
        down = p_down if i > 0 else 0.0
        P[i, i] = 1.0 - up - down
        if i < n - 1:
            P[i, i + 1] = up
        if i > 0:
            P[i, i - 1] = down
    return P


def offpolicy_chain(reward_noise=0.5):
    """Right-drift target sampled under a left-drift behavior chain.

    The second feature is tuned so the population system matrix is singular
    while the target vector stays off its range: the system is inconsistent,
    with minimal weighted loss around 0.1.
    """
    n = 5
    gamma = 0.9
    P = _birth_death(n, 0.7, 0.1)
    B = _birth_death(n, 0.2, 0.5)
    x = np.arange(n, dtype=float)
    R = 0.5 + 0.3 * x[:, None] - 0.2 * x[None, :]

    # stationary law of the behavior chain (birth-death: detailed balance)
    ratios = np.ones(n)
    for i in range(1, n):
        ratios[i] = ratios[i - 1] * (B[i - 1, i] / B[i, i - 1])
    mu = ratios / ratios.sum()
    Q = np.diag(mu) @ (np.eye(n) - gamma * P)

    f0 = np.array([0.0, 0.1, 0.3, 0.6, 1.0])
    u = np.zeros(n)
    u[3] = 1.0

    def det_at(t):
        phi = np.column_stack([np.ones(n), f0 + t * u])
        return np.linalg.det(phi.T @ Q @ phi)

    coef = np.polyfit([-1.0, 0.0, 1.0], [det_at(t) for t in (-1.0, 0.0, 1.0)], 2)
    roots = [r.real for r in np.roots(coef) if abs(r.imag) < 1e-12]
    t = min(roots, key=abs)
    phi = np.column_stack([np.ones(n), f0 + t * u])
    base = FiniteMrp.create(P, R, gamma, reward_noise)
    return OffPolicyMrp.create(base, B), FeatureMap.create(phi)
