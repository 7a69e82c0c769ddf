"""Deterministic actor with a behaviour-cloning anchor and counterfactual exploration."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import N_ACTION, Transition
from .ndmath import Tensor, absolute, mean, no_grad, sigmoid, square, tsum
from .nn import MLP, Module
from .policy_experts import PolicyExpert, counterfactual_action

LAMBDA_Q_FLOOR = 1e-6


class ActorNet(Module):
    def __init__(self, state_dim: int, rng: np.random.Generator, hidden: int = 64):
        self.net = MLP([state_dim, hidden, hidden, N_ACTION], rng, activation="relu")

    def __call__(self, state) -> Tensor:
        return sigmoid(self.net(state))


def act(actor: ActorNet, br) -> np.ndarray:
    with no_grad():
        return actor(Tensor(br.data if isinstance(br, Tensor) else br)).data


def bc_lambda(q_values: np.ndarray, bc_alpha: float = 2.5) -> float:
    """``bc_alpha / mean|Q|``, with ``mean|Q|`` floored to keep the critic term finite."""
    return bc_alpha / max(float(np.mean(np.abs(q_values))), LAMBDA_Q_FLOOR)


def actor_loss(state: np.ndarray, actor: ActorNet, q_fn, anchors: np.ndarray,
               bc_alpha: float = 2.5, lam: float | None = None) -> tuple[Tensor, float]:
    """``-lambda * mean Q(s, pi(s)) + mean ||pi(s) - anchor||^2``.

    ``q_fn(state, action) -> Tensor[B]`` is the first critic. ``lambda`` is
    computed from this batch and treated as a constant unless given.
    """
    if bc_alpha <= 0:
        raise ValueError("bc_alpha must be positive")
    s = Tensor(state)
    pi = actor(s)
    q = q_fn(s, pi)
    if lam is None:
        lam = bc_lambda(q.data, bc_alpha)
    bc = mean(tsum(square(pi - Tensor(anchors)), axis=-1))
    return mean(q) * (-lam) + bc, lam


def epsilon_at(step_in_phase: int, phase_steps: int, start: float = 0.1, end: float = 0.5) -> float:
    """Linear ramp from ``start`` to ``end`` across one discount phase."""
    if phase_steps <= 1:
        return end
    frac = min(max(step_in_phase / (phase_steps - 1), 0.0), 1.0)
    return start + (end - start) * frac


def select_anchor(history: Sequence[Transition], experts: Sequence[PolicyExpert], epsilon: float,
                  rng: np.random.Generator, window: int | None = None) -> tuple[np.ndarray, bool]:
    """Logged action with probability ``1 - epsilon``, otherwise a counterfactual expert action.

    ``history`` ends at the current transition. Returns ``(anchor, explored)``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    current = history[-1]
    if rng.random() >= epsilon:
        return np.asarray(current.action, dtype=np.float64), False
    others = [p for p in range(len(experts)) if p != current.policy_id]
    cp = others[rng.integers(len(others))]
    return counterfactual_action(experts, cp, history, window), True


def draw_counterfactual(policy_ids: np.ndarray, n_policies: int, epsilon: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Per-row counterfactual policy for a batch, or -1 where the logged action is kept."""
    n = len(policy_ids)
    explore = rng.random(n) < epsilon
    offset = rng.integers(1, n_policies, size=n)
    cp = (np.asarray(policy_ids) + offset) % n_policies
    return np.where(explore, cp, -1)
