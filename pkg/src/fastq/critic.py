"""Twin critics with a Q head and a softmax objective-weight head."""
from __future__ import annotations

import numpy as np

from .data import N_ACTION, N_REWARD
from .ndmath import Tensor, concat, mean, no_grad, relu, reshape, softmax, square, tsum
from .nn import Linear, Module

N_WEIGHTS = N_REWARD + 1  # last weight is the overflow share


class CriticNet(Module):
    """Trunk over ``concat(state, action)``; the penultimate layer feeds both heads."""

    def __init__(self, state_dim: int, rng: np.random.Generator, hidden: int = 64):
        self.l1 = Linear(state_dim + N_ACTION, hidden, rng)
        self.l2 = Linear(hidden, hidden, rng)
        self.q_head = Linear(hidden, 1, rng)
        self.w_head = Linear(hidden, N_WEIGHTS, rng)

    def __call__(self, state, action) -> tuple[Tensor, Tensor]:
        h = concat([state, action], axis=-1)
        p = relu(self.l2(relu(self.l1(h))))
        q = self.q_head(p)[:, 0]
        w = softmax(self.w_head(p))
        return q, w

    def q(self, state, action) -> Tensor:
        return self(state, action)[0]


class TwinCritic(Module):
    def __init__(self, state_dim: int, rng: np.random.Generator, hidden: int = 64):
        self.q1 = CriticNet(state_dim, rng, hidden)
        self.q2 = CriticNet(state_dim, rng, hidden)


def target_policy_action(target_actor, next_state: np.ndarray, rng: np.random.Generator,
                         policy_noise: float = 0.2, noise_clip: float = 0.5) -> np.ndarray:
    """Smoothed target action: clip(pi'(s') + clip(N(0, sigma^2), -c, c), 0, 1)."""
    with no_grad():
        a = target_actor(Tensor(next_state)).data
    noise = np.clip(rng.normal(0.0, policy_noise, size=a.shape), -noise_clip, noise_clip)
    return np.clip(a + noise, 0.0, 1.0)


def td_target(reward: np.ndarray, done: np.ndarray, next_state: np.ndarray, target_actor,
              target_critic: TwinCritic, gamma: float, rng: np.random.Generator,
              policy_noise: float = 0.2, noise_clip: float = 0.5) -> np.ndarray:
    """``y = r + gamma * (1 - done) * min(Q1', Q2')(s', a~)``; no gradient."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    reward = np.asarray(reward, dtype=np.float64)
    a_next = target_policy_action(target_actor, next_state, rng, policy_noise, noise_clip)
    with no_grad():
        s = Tensor(next_state)
        q1 = target_critic.q1.q(s, Tensor(a_next)).data
        q2 = target_critic.q2.q(s, Tensor(a_next)).data
    return bellman_target(reward, done, q1, q2, gamma)


def bellman_target(reward, done, q1_next, q2_next, gamma: float) -> np.ndarray:
    cont = 1.0 - np.asarray(done, dtype=np.float64)
    return np.asarray(reward, dtype=np.float64) + gamma * cont * np.minimum(q1_next, q2_next)


def td_loss(q1: Tensor, q2: Tensor, y: np.ndarray) -> Tensor:
    """Batch mean of ``(y - Q1)^2 + (y - Q2)^2`` with ``y`` held constant."""
    y = Tensor(np.asarray(y, dtype=np.float64))
    return mean(square(y - q1) + square(y - q2))


def decomp_loss(q: Tensor, w: Tensor, rewards: np.ndarray) -> Tensor:
    """Batch mean of ``sum_i (R_i - w_i Q)^2 / C`` over the C reward components.

    ``w`` has C + 1 columns; the overflow column only enters via the softmax.
    """
    R = np.asarray(rewards, dtype=np.float64)
    C = R.shape[-1]
    if w.shape[-1] != C + 1:
        raise ValueError(f"expected {C + 1} weights, got {w.shape[-1]}")
    pred = w[:, :C] * reshape(q, (-1, 1))
    return mean(tsum(square(Tensor(R) - pred), axis=-1) * (1.0 / C))


def critic_loss(l_td: Tensor, l_decomp: Tensor, mix_alpha: float = 0.75) -> Tensor:
    if not 0.0 <= mix_alpha <= 1.0:
        raise ValueError("mix_alpha must be in [0, 1]")
    return l_td * mix_alpha + l_decomp * (1.0 - mix_alpha)


def decompose(q: float, weights) -> np.ndarray:
    """Per-objective shares ``w_i * q`` (dwell, engagement, return time, overflow)."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must lie on the simplex")
    return w * q
