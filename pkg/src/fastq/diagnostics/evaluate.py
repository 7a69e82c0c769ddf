"""Read-only evaluations of a trained model on (held-out) transitions."""
from __future__ import annotations

import numpy as np

from ..checkpoint import Checkpoint, CheckpointError
from ..config import TrainConfig, parse_config
from ..data import Packed
from ..ndmath import Tensor, no_grad
from ..policy_experts import PolicyExpert
from ..rng import substream
from ..trainer import Models, group_by_policy
from .stats import disparity


def models_from_checkpoint(ckpt: Checkpoint) -> tuple[Models, TrainConfig]:
    cfg = parse_config(ckpt.meta["config"])
    if cfg.hash() != ckpt.config_hash:
        raise CheckpointError("config hash mismatch")
    n = int(ckpt.meta["n_policies"])
    placeholder = [PolicyExpert(p, substream(0, "placeholder", p), cfg.hidden) for p in range(n)]
    models = Models.build(cfg, 0, placeholder)
    models.load_arrays(ckpt.tensors)
    return models, cfg


def sample_rows(packed: Packed, n: int | None, seed: int) -> np.ndarray:
    """Up to ``n`` row indices drawn without replacement, grouped by policy."""
    idx = np.arange(len(packed))
    if n is not None and n < len(idx):
        idx = np.sort(substream(seed, "eval-rows").choice(idx, size=n, replace=False))
    return group_by_policy(idx, packed.policy)


def _route(models: Models, beta: Tensor, use_br: bool, dim: int) -> Tensor:
    if use_br:
        return models.theta(beta)
    raw = beta.data
    if raw.shape[1] >= dim:
        return Tensor(raw[:, :dim])
    return Tensor(np.pad(raw, ((0, 0), (0, dim - raw.shape[1]))))


def states(models: Models, packed: Packed, idx: np.ndarray, use_br: bool = True,
           dropout_rate: float = 0.0, rng=None) -> np.ndarray:
    """Critic inputs for grouped rows: ``Theta(beta)``, or raw ``beta`` padded/truncated to D."""
    pids = packed.policy[idx]
    dim = models.theta.dense.W.shape[0]
    with no_grad():
        beta = models.encode(packed, idx, pids, use_br=False, dropout_rate=dropout_rate, rng=rng)
        return _route(models, beta, use_br, dim).data


def raw_betas(models: Models, packed: Packed, idx: np.ndarray) -> np.ndarray:
    with no_grad():
        return models.encode(packed, idx, packed.policy[idx], use_br=False).data


def q1(models: Models, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    with no_grad():
        return models.critic.q1.q(Tensor(s), Tensor(a)).data


def policy_actions(models: Models, packed: Packed, idx: np.ndarray) -> np.ndarray:
    """``[n_policies, len(idx), 3]``: each expert's predicted action on every row's history."""
    steps, mask = packed.windows(idx)
    out = []
    with no_grad():
        for e in models.experts:
            out.append(e.predict(e.encode(steps, mask)).data)
    return np.stack(out)


def balance_report(models: Models, packed: Packed, idx: np.ndarray) -> dict:
    """Classifier accuracy on S^BR and policy-conditioned W1 of S^BR against raw beta."""
    pids = packed.policy[idx]
    s = states(models, packed, idx)
    beta = raw_betas(models, packed, idx)
    with no_grad():
        probs = models.classifier(Tensor(s)).data
    groups = sorted(set(pids.tolist()))
    _, w_br = disparity({p: s[pids == p] for p in groups})
    _, w_beta = disparity({p: beta[pids == p] for p in groups})
    return {
        "classifier_acc": float(np.mean(np.argmax(probs, axis=1) == pids)),
        "w_br": w_br, "w_beta": w_beta, "ratio": w_br / w_beta if w_beta > 0 else float("inf"),
    }


def final_mean_q(models: Models, packed: Packed, idx: np.ndarray) -> float:
    s = states(models, packed, idx)
    with no_grad():
        a = models.actor(Tensor(s)).data
    return float(np.mean(q1(models, s, a)))


def q_spread(models: Models, packed: Packed, idx: np.ndarray, use_br: bool = True) -> np.ndarray:
    """Per-row ``max - min`` of Q1 over the logged action and the other policies' expert actions."""
    s = states(models, packed, idx, use_br)
    pids = packed.policy[idx]
    cands = policy_actions(models, packed, idx)
    qs = [q1(models, s, packed.action[idx])]
    for p in range(len(models.experts)):
        qp = q1(models, s, cands[p])
        qs.append(np.where(pids == p, qs[0], qp))  # own policy contributes its logged action
    qs = np.stack(qs)
    return qs.max(axis=0) - qs.min(axis=0)


def mc_uncertainty(models: Models, packed: Packed, idx: np.ndarray, k: int = 20,
                   rate: float = 0.1, seed: int = 12345, action: np.ndarray | None = None) -> np.ndarray:
    """Per-row std of Q1 over ``k`` passes with dropout on the expert hidden state."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = substream(seed, "mc-dropout")
    a = packed.action[idx] if action is None else np.asarray(action, dtype=np.float64)
    if rate == 0.0:
        return np.zeros(len(idx))
    qs = np.stack([q1(models, states(models, packed, idx, dropout_rate=rate, rng=rng), a) for _ in range(k)])
    return qs.std(axis=0)


def objective_weights(models: Models, packed: Packed, idx: np.ndarray) -> np.ndarray:
    """``[len(idx), 4]`` decomposition weights of Q1 at the actor's action."""
    s = states(models, packed, idx)
    with no_grad():
        a = models.actor(Tensor(s)).data
        _, w = models.critic.q1(Tensor(s), Tensor(a))
    return w.data


def objective_report(models: Models, packed: Packed, idx: np.ndarray, segment=None) -> np.ndarray:
    """Mean weights over the rows whose feature vector satisfies ``segment``."""
    if segment is not None:
        keep = np.asarray([bool(segment(packed.x[i])) for i in idx])
        idx = idx[keep]
    if len(idx) == 0:
        raise ValueError("empty segment")
    return objective_weights(models, packed, idx).mean(axis=0)


def preference_fractions(models: Models, packed: Packed, idx: np.ndarray, seed: int = 12345) -> np.ndarray:
    """Fraction of rows where each policy's expert action has the highest Q1.

    Exact ties are broken uniformly at random from ``seed``.
    """
    s = states(models, packed, idx)
    cands = policy_actions(models, packed, idx)
    qs = np.stack([q1(models, s, cands[p]) for p in range(len(cands))], axis=1)
    rng = substream(seed, "preference-ties")
    best = qs.max(axis=1, keepdims=True)
    wins = np.zeros(len(cands))
    for row in qs == best:
        winners = np.flatnonzero(row)
        wins[winners[rng.integers(len(winners))] if len(winners) > 1 else winners[0]] += 1
    return wins / len(idx)
