"""Per-policy LSTM encoders with an action head.

Each expert reads the rolling window of ``(x_t, a_{t-1}, r_{t-1})`` step
inputs, exposes the final hidden state ``beta`` and predicts the logging
policy's action with a sigmoid head.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import STEP_INPUT, N_ACTION, Transition
from .ndmath import Tensor, dropout, lstm_sequence, mean, sigmoid, square, tsum
from .nn import Linear, Module, uniform_param


class PolicyExpert(Module):
    def __init__(self, policy_id: int, rng: np.random.Generator, hidden: int = 32,
                 input_dim: int = STEP_INPUT):
        self.policy_id = policy_id
        self.hidden = hidden
        bound = 1.0 / np.sqrt(hidden)
        self.W = uniform_param(rng, (4 * hidden, input_dim), bound)
        self.U = uniform_param(rng, (4 * hidden, hidden), bound)
        self.b = uniform_param(rng, (4 * hidden,), bound)
        self.b.data[hidden:2 * hidden] += 1.0  # forget-gate bias
        self.head = Linear(hidden, N_ACTION, rng)

    def lstm_parameters(self):
        return [(k, p) for k, p in self.named_parameters() if not k.startswith("head.")]

    def encode(self, steps: np.ndarray, mask: np.ndarray, dropout_rate: float = 0.0,
               rng: np.random.Generator | None = None) -> Tensor:
        beta = lstm_sequence(Tensor(steps), mask, self.W, self.U, self.b)
        if dropout_rate > 0.0:
            beta = dropout(beta, dropout_rate, rng)
        return beta

    def predict(self, beta: Tensor) -> Tensor:
        return sigmoid(self.head(beta))

    def __call__(self, steps: np.ndarray, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        beta = self.encode(steps, mask)
        return beta, self.predict(beta)


def make_experts(n_policies: int, rng: np.random.Generator, hidden: int = 32) -> list[PolicyExpert]:
    return [PolicyExpert(p, rng, hidden) for p in range(n_policies)]


def window_from_history(history: Sequence[Transition], window: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``[1, T, 18]`` step inputs and mask for a transition history ending at the current step."""
    if len(history) == 0:
        raise ValueError("empty history")
    pids = {tr.policy_id for tr in history}
    if len(pids) != 1:
        raise ValueError(f"history mixes policy ids {sorted(pids)}")
    ts = [tr.t for tr in history]
    if any(b != a + 1 for a, b in zip(ts, ts[1:])):
        raise ValueError("history is not ordered by consecutive t")
    if window is not None:
        history = history[-window:]
    steps = np.asarray([tr.x + tr.prev_action + tr.prev_reward for tr in history], dtype=np.float64)
    return steps[None], np.ones((1, len(steps)))


def pe_forward(expert: PolicyExpert, history: Sequence[Transition], window: int | None = None):
    """``(beta[H], action_hat[3])`` for one state history."""
    steps, mask = window_from_history(history, window)
    beta, a_hat = expert(steps, mask)
    return beta[0], a_hat[0]


def pe_loss(action_hat, action, dim_weights: Sequence[float] = (1.0, 1.0, 1.0)) -> Tensor:
    """Weighted MSE ``sum_i w_i (A_i - Ahat_i)^2 / sum_i w_i``, averaged over a batch."""
    w = np.asarray(dim_weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("dim_weights must be non-negative")
    if w.sum() <= 0:
        raise ValueError("dim_weights must not all be zero")
    diff = Tensor(np.asarray(action, dtype=np.float64)) - action_hat
    per = tsum(square(diff) * (w / w.sum()), axis=-1)
    return mean(per) if per.ndim else per


def counterfactual_action(experts: Sequence[PolicyExpert], cp: int, history: Sequence[Transition],
                          window: int | None = None) -> np.ndarray:
    """Action that policy ``cp``'s expert predicts on another policy's history."""
    if not 0 <= cp < len(experts):
        raise ValueError(f"unknown counterfactual policy {cp}")
    own = history[0].policy_id if history else None
    if cp == own:
        raise ValueError("counterfactual policy must differ from the logging policy")
    _, a_hat = pe_forward(experts[cp], history, window)
    return a_hat.data.copy()
