"""Synthetic multi-policy challenge-recommendation simulator.

Each player is served by a single logging policy for the whole episode. Two
feature dimensions (session frequency, entry-fee tier) are squeezed into a
policy-specific band so the policies occupy largely disjoint state regions,
and each policy maps features to actions with its own rule. Rewards come from
a latent response model in which cash rewards lift low-intent players only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .data import (
    N_FEATURES, ZERO_ACTION, ZERO_REWARD, Buffer, Episode, Transition,
)
from .rng import substream

SKILL, INTENT, BANKROLL, WIN_RATE, DROP_ADH, SESSION_FREQ, LOSS_STREAK, ENTRY_FEE, \
    PLAY_SPEED, INVALID_DECL, TENURE, VOLATILITY = range(N_FEATURES)
SHIFTED_DIMS = (SESSION_FREQ, ENTRY_FEE)


class SimConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_policies: int = 3
    episodes_per_policy: int = 2000
    max_len: int = 30
    action_noise: float = 0.05
    region_width: float = 0.4
    base_churn: float = 0.02
    churn_scale: float = 0.12

    def validate(self) -> None:
        if self.n_policies < 2:
            raise SimConfigError("n_policies must be >= 2")
        if self.episodes_per_policy < 1:
            raise SimConfigError("episodes_per_policy must be >= 1")
        if self.max_len < 1:
            raise SimConfigError("max_len must be >= 1")
        if not 0.0 <= self.action_noise < 0.5:
            raise SimConfigError("action_noise must be in [0, 0.5)")
        if not 0.0 < self.region_width <= 1.0:
            raise SimConfigError("region_width must be in (0, 1]")
        if not (0.0 <= self.base_churn <= 1.0 and 0.0 <= self.churn_scale <= 1.0):
            raise SimConfigError("churn parameters must be in [0, 1]")

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


# ------------------------------------------------------------------ reward formulas

def reward_engagement(b: float) -> float:
    """Normalised engagement from ``b`` days to return after seeing a challenge."""
    if b < 0 or math.isnan(b):
        raise ValueError("days-to-return b must be >= 0")
    return (6.0 - min(max(b, 0.0), 6.0)) / 6.0


def reward_return_time(a: float) -> float:
    """Normalised return time from ``a`` days to return after completing a challenge."""
    if not 0.0 <= a <= 6.0:
        raise ValueError("days-to-return a must be in [0, 6]")
    return 1.0 - math.sin((6.0 - a) / 2.0)


# ------------------------------------------------------------------ logging policies

def region_band(value: float, policy: int, cfg: SimConfig) -> float:
    """Squeeze ``value`` in [0, 1] into ``policy``'s band of the shifted dims."""
    spacing = (1.0 - cfg.region_width) / (cfg.n_policies - 1)
    return policy * spacing + cfg.region_width * value


def logging_rule(policy: int, x: np.ndarray, n_policies: int = 3) -> np.ndarray:
    """Deterministic part of a logging policy: features -> action (noise-free).

    Works on a single feature vector or a ``[batch, 12]`` array.
    """
    x = np.asarray(x, dtype=np.float64)
    skill, intent, wr = x[..., SKILL], x[..., INTENT], x[..., WIN_RATE]
    performance = np.stack([0.25 + 0.5 * wr, 0.15 + 0.7 * skill, 0.15 + 0.5 * (1.0 - wr)], axis=-1)
    by_intent = np.stack([0.2 + 0.6 * intent, 0.75 - 0.5 * intent, 0.1 + 0.6 * (1.0 - intent)], axis=-1)
    if policy == 0:
        out = performance
    elif policy == 1:
        out = by_intent
    elif policy == 2:
        out = np.zeros_like(performance)
    else:
        # extra policies blend the two challenge-serving rules
        w = (policy - 2) / (n_policies - 2)
        out = w * performance + (1.0 - w) * by_intent
    return np.clip(out, 0.0, 1.0)


# ------------------------------------------------------------------ response model

def _c01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def _response(state: dict, action, noise) -> tuple[tuple, dict]:
    """Rewards and latent outcome for serving ``action`` to a player.

    ``noise`` holds three standard normals.
    """
    games, target, cash = action
    skill, intent, churn = state["skill"], state["intent"], state["churn"]
    fit = _c01(1.0 - 2.0 * abs(target - skill))
    challenge = games * fit
    frustration = games * (1.0 - fit)
    lift = cash * (1.0 - intent)  # cash only moves players without organic intent
    dwell = _c01(0.25 + 0.25 * challenge - 0.1 * frustration + 0.45 * lift + 0.1 * (1.0 - intent)
                 + 0.03 * noise[0])
    attract = _c01(0.6 * intent + 0.3 * challenge - 0.15 * frustration + 0.2 * lift + 0.05 * noise[1])
    b = 6.0 * (1.0 - attract)
    quality = _c01(0.1 + 0.55 * intent + 0.35 * challenge - 0.3 * frustration + 0.15 * lift
                   - 0.2 * churn + 0.05 * noise[2])
    # map quality onto the increasing branch of the return-time curve
    a = 6.0 - math.pi * (1.0 - quality)
    reward = (dwell, reward_engagement(b), reward_return_time(a))
    return reward, {"fit": fit, "engagement": reward[1]}


def _observe(state: dict, policy: int, cfg: SimConfig, n, t: int) -> tuple[float, ...]:
    skill, intent, bankroll = state["skill"], state["intent"], state["bankroll"]
    x = [
        _c01(skill + 0.03 * n[0]),
        intent,
        bankroll,
        state["win_rate"],
        _c01(0.3 + 0.5 * skill + 0.05 * n[1]),
        region_band(_c01(0.2 + 0.6 * intent + 0.05 * n[2]), policy, cfg),
        state["loss_streak"],
        region_band(_c01(0.7 * bankroll + 0.3 * skill + 0.05 * n[3]), policy, cfg),
        _c01(0.5 + 0.3 * (intent - 0.5) + 0.05 * n[4]),
        _c01(0.3 * (1.0 - skill) + 0.03 * n[5]),
        min(1.0, state["tenure"] + t / 30.0),
        _c01(state["churn"] + 0.05 * n[6]),
    ]
    return tuple(x)


def simulate_episode(cfg: SimConfig, seed: int, episode_id: int, policy: int) -> Episode:
    rng = substream(seed, "episode", episode_id)
    state = {
        "skill": float(rng.beta(2.0, 2.0)),
        "intent": float(rng.beta(2.0, 2.0)),
        "churn": float(rng.beta(2.0, 5.0)),
        "bankroll": float(rng.uniform(0.2, 0.8)),
        "win_rate": float(rng.uniform(0.3, 0.7)),
        "loss_streak": 0.0,
        "tenure": float(rng.uniform(0.0, 0.5)),
    }
    base_intent = state["intent"]
    normals = rng.normal(0.0, 1.0, size=(cfg.max_len, 14)).tolist()
    uniforms = rng.random(size=(cfg.max_len, 2)).tolist()
    ep = Episode(episode_id, policy)
    prev_a, prev_r = ZERO_ACTION, ZERO_REWARD
    for t in range(cfg.max_len):
        n, u = normals[t], uniforms[t]
        x = _observe(state, policy, cfg, n, t)
        a = logging_rule(policy, np.asarray(x), cfg.n_policies).tolist()
        if policy != 2 and cfg.action_noise > 0:
            a = [_c01(v + cfg.action_noise * e) for v, e in zip(a, n[7:10])]
        a = tuple(a)
        r, info = _response(state, a, n[10:13])
        p_done = cfg.base_churn + cfg.churn_scale * state["churn"] * (1.0 - info["engagement"])
        done = u[0] < p_done or t == cfg.max_len - 1
        ep.transitions.append(Transition(t, x, prev_a, prev_r, a, r, policy, done))
        if done:
            break
        # player dynamics
        won = 1.0 if u[1] < 0.3 + 0.4 * state["skill"] - 0.3 * max(0.0, a[1] - state["skill"]) else 0.0
        state["win_rate"] = 0.7 * state["win_rate"] + 0.3 * won
        state["loss_streak"] = 0.0 if won else min(1.0, state["loss_streak"] + 0.2)
        state["bankroll"] = _c01(state["bankroll"] + 0.05 * (won - 0.5) + 0.05 * a[2] * info["fit"])
        state["intent"] = _c01(0.85 * state["intent"] + 0.15 * base_intent
                               + 0.1 * (info["engagement"] - 0.5) + 0.03 * n[13])
        prev_a, prev_r = a, r
    return ep


def simulate(cfg: SimConfig, seed: int) -> Buffer:
    """Generate the logged buffer; a pure function of ``(cfg, seed)``."""
    cfg.validate()
    episodes = []
    for p in range(cfg.n_policies):
        for k in range(cfg.episodes_per_policy):
            eid = p * cfg.episodes_per_policy + k
            episodes.append(simulate_episode(cfg, seed, eid, p))
    return Buffer(episodes, cfg.n_policies)


def sample_shared_states(n: int, seed: int) -> np.ndarray:
    """Feature vectors drawn without any policy band shift (the overlap region)."""
    rng = substream(seed, "shared-states")
    return rng.uniform(0.0, 1.0, size=(n, N_FEATURES))
