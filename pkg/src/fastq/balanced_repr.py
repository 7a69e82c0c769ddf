"""Shared balancing representation trained against a policy classifier.

``Theta`` maps any expert's hidden state to the balanced state. The
classifier sees the balanced state through a gradient reversal layer, so a
single backward pass sharpens the classifier while pushing ``Theta`` to
hide the logging policy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ndmath import Tensor, cross_entropy, grl, mean, softmax, tanh
from .nn import MLP, Linear, Module


class BalancingRepresentation(Module):
    def __init__(self, hidden: int, dim: int, rng: np.random.Generator):
        self.dense = Linear(hidden, dim, rng)

    def __call__(self, beta) -> Tensor:
        return tanh(self.dense(beta))


def balance(theta: BalancingRepresentation, beta) -> Tensor:
    return theta(beta)


class PolicyClassifier(Module):
    def __init__(self, dim: int, n_policies: int, rng: np.random.Generator, hidden: int = 32):
        self.n_policies = n_policies
        self.net = MLP([dim, hidden, n_policies], rng, activation="tanh")

    def __call__(self, br) -> Tensor:
        return softmax(self.net(br))


def classifier_loss(classifier: PolicyClassifier, brs: Tensor, policy_ids,
                    lambda_grl: float = 1.0) -> tuple[Tensor, np.ndarray]:
    """Mean policy cross-entropy on ``brs`` routed through the reversal layer.

    Returns the loss and the classifier's predicted probabilities.
    """
    policy_ids = np.asarray(policy_ids, dtype=np.int64)
    if policy_ids.size == 0:
        raise ValueError("empty batch")
    if np.any(policy_ids < 0) or np.any(policy_ids >= classifier.n_policies):
        raise ValueError("unknown policy id in batch")
    probs = classifier(grl(brs, lambda_grl))
    return mean(cross_entropy(probs, policy_ids)), probs.data


@dataclass
class ClassSampler:
    """Draws batches with class weights inversely proportional to ``p_prev + delta``."""

    n_policies: int
    delta: float = 0.01
    p_prev: np.ndarray | None = None

    def __post_init__(self):
        if self.p_prev is None:
            self.p_prev = np.full(self.n_policies, 1.0 / self.n_policies)

    def weights(self) -> np.ndarray:
        inv = 1.0 / (self.p_prev + self.delta)
        return inv / inv.sum()

    def sample(self, by_policy: list[np.ndarray], batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Transition indices for one batch (with replacement)."""
        w = self.weights()
        sizes = np.array([len(ix) for ix in by_policy])
        if np.any((sizes == 0) & (w > 0)):
            pool = np.concatenate([ix for ix in by_policy if len(ix)])
            return np.sort(rng.choice(pool, size=batch_size, replace=True))
        classes = rng.choice(self.n_policies, size=batch_size, p=w)
        counts = np.bincount(classes, minlength=self.n_policies)
        picks = [by_policy[p][rng.integers(0, sizes[p], size=counts[p])] for p in range(self.n_policies)]
        return np.concatenate(picks)

    def update(self, probs: np.ndarray) -> None:
        """Set ``p_prev`` to the mean predicted class distribution of the last batch."""
        p = np.asarray(probs, dtype=np.float64).mean(axis=0)
        self.p_prev = p / p.sum()


def classifier_accuracy(probs: np.ndarray, policy_ids) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(policy_ids)))
