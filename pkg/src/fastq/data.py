"""Logged offline data: transitions, episodes, buffers and their text format."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FEATURE_NAMES = (
    "skill", "intent", "bankroll", "recent_win_rate", "drop_adherence", "session_freq",
    "loss_streak", "entry_fee_tier", "play_speed", "invalid_declare_rate", "tenure", "volatility",
)
ACTION_NAMES = ("games", "target_score", "cash_reward")
REWARD_NAMES = ("dwell", "engagement", "return_time")
N_FEATURES = len(FEATURE_NAMES)
N_ACTION = len(ACTION_NAMES)
N_REWARD = len(REWARD_NAMES)
STEP_INPUT = N_FEATURES + N_ACTION + N_REWARD

ZERO_ACTION = (0.0, 0.0, 0.0)
ZERO_REWARD = (0.0, 0.0, 0.0)


class BufferFormatError(ValueError):
    """Malformed buffer file; carries the 1-based line number."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


@dataclass(frozen=True)
class Transition:
    t: int
    x: tuple[float, ...]
    prev_action: tuple[float, ...]
    prev_reward: tuple[float, ...]
    action: tuple[float, ...]
    reward: tuple[float, ...]
    policy_id: int
    done: bool


@dataclass
class Episode:
    episode_id: int
    policy_id: int
    transitions: list[Transition] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass
class Buffer:
    episodes: list[Episode]
    n_policies: int

    def __len__(self) -> int:
        return sum(len(e) for e in self.episodes)

    def partition(self) -> dict[int, list[Episode]]:
        parts: dict[int, list[Episode]] = {p: [] for p in range(self.n_policies)}
        for ep in self.episodes:
            parts.setdefault(ep.policy_id, []).append(ep)
        return parts

    def missing_policies(self) -> list[int]:
        return [p for p, eps in self.partition().items() if not eps]

    def subset(self, episode_ids: Iterable[int]) -> "Buffer":
        keep = set(episode_ids)
        return Buffer([e for e in self.episodes if e.episode_id in keep], self.n_policies)


def split_buffer(buffer: Buffer, heldout_every: int = 5) -> tuple[Buffer, Buffer]:
    """Deterministic train / held-out split: every ``heldout_every``-th episode per policy."""
    train, held = [], []
    for eps in buffer.partition().values():
        for k, ep in enumerate(eps):
            (held if k % heldout_every == heldout_every - 1 else train).append(ep)
    order = lambda e: e.episode_id  # noqa: E731
    return (Buffer(sorted(train, key=order), buffer.n_policies),
            Buffer(sorted(held, key=order), buffer.n_policies))


def fraction_buffer(buffer: Buffer, fraction: float) -> Buffer:
    """First ``fraction`` of each policy's episodes (at least one each)."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    keep = []
    for eps in buffer.partition().values():
        n = max(1, int(math.ceil(fraction * len(eps) - 1e-9))) if eps else 0
        keep.extend(e.episode_id for e in eps[:n])
    return buffer.subset(keep)


# ------------------------------------------------------------------ file format

COLUMNS = (
    ["episode_id", "t", "policy_id"]
    + [f"x.{n}" for n in FEATURE_NAMES]
    + [f"prev_action.{n}" for n in ACTION_NAMES]
    + [f"prev_reward.{n}" for n in REWARD_NAMES]
    + [f"action.{n}" for n in ACTION_NAMES]
    + [f"reward.{n}" for n in REWARD_NAMES]
    + ["done"]
)


def _fmt(v: float) -> str:
    # repr is the shortest string that round-trips a float64 exactly
    return repr(float(v))


def write_buffer(buffer: Buffer, path) -> None:
    """One tab-separated transition per line, preceded by ``#`` header lines."""
    lines = [f"#n_policies\t{buffer.n_policies}", "#" + "\t".join(COLUMNS)]
    for ep in buffer.episodes:
        for tr in ep.transitions:
            fields = [str(ep.episode_id), str(tr.t), str(tr.policy_id)]
            for vec in (tr.x, tr.prev_action, tr.prev_reward, tr.action, tr.reward):
                fields.extend(_fmt(v) for v in vec)
            fields.append("1" if tr.done else "0")
            lines.append("\t".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def read_buffer(path) -> Buffer:
    n_policies = None
    episodes: dict[int, Episode] = {}
    ncol = len(COLUMNS)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].split("\t")
                if parts[0] == "n_policies" and len(parts) == 2:
                    try:
                        n_policies = int(parts[1])
                    except ValueError:
                        raise BufferFormatError(lineno, "bad n_policies header") from None
                continue
            parts = line.split("\t")
            if len(parts) != ncol:
                raise BufferFormatError(lineno, f"expected {ncol} fields, got {len(parts)}")
            try:
                eid, t, pid = int(parts[0]), int(parts[1]), int(parts[2])
                vals = [float(v) for v in parts[3:-1]]
                done = {"0": False, "1": True}[parts[-1]]
            except (ValueError, KeyError):
                raise BufferFormatError(lineno, "unparseable field") from None
            if any(not math.isfinite(v) for v in vals):
                raise BufferFormatError(lineno, "non-finite value")
            o = 0
            x = tuple(vals[o:o + N_FEATURES]); o += N_FEATURES
            pa = tuple(vals[o:o + N_ACTION]); o += N_ACTION
            pr = tuple(vals[o:o + N_REWARD]); o += N_REWARD
            a = tuple(vals[o:o + N_ACTION]); o += N_ACTION
            r = tuple(vals[o:o + N_REWARD])
            ep = episodes.get(eid)
            if ep is None:
                ep = episodes[eid] = Episode(eid, pid)
            elif ep.policy_id != pid:
                raise BufferFormatError(lineno, f"policy_id changes within episode {eid}")
            if t != len(ep.transitions):
                raise BufferFormatError(lineno, f"episode {eid}: expected t={len(ep.transitions)}, got {t}")
            ep.transitions.append(Transition(t, x, pa, pr, a, r, pid, done))
    eps = list(episodes.values())
    if n_policies is None:
        n_policies = max((e.policy_id for e in eps), default=-1) + 1
    if any(e.policy_id >= n_policies or e.policy_id < 0 for e in eps):
        raise BufferFormatError(0, "policy_id outside [0, n_policies)")
    return Buffer(eps, n_policies)


# ------------------------------------------------------------------ packed arrays

@dataclass
class Packed:
    """Array view of a buffer for batched training.

    ``steps`` holds the per-step LSTM input ``(x_t, a_{t-1}, r_{t-1})`` with a
    zero row appended at index ``len(steps)`` used for left padding.
    ``window[i]`` indexes the last ``T`` steps of transition ``i``'s history.
    """

    steps: np.ndarray        # [N + 1, 18]
    window: np.ndarray       # [N, T] indices into steps
    mask: np.ndarray         # [N, T]
    next_index: np.ndarray   # [N] index of the successor transition (self if done)
    action: np.ndarray       # [N, 3]
    reward: np.ndarray       # [N, 3]
    policy: np.ndarray       # [N]
    done: np.ndarray         # [N] float 0/1
    episode: np.ndarray      # [N]
    x: np.ndarray            # [N, 12]
    n_policies: int

    def __len__(self) -> int:
        return len(self.action)

    def windows(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.steps[self.window[idx]], self.mask[idx]

    def by_policy(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.policy == p) for p in range(self.n_policies)]


def pack(buffer: Buffer, window: int) -> Packed:
    if window < 1:
        raise ValueError("window must be >= 1")
    rows, act, rew, pol, done, epi, nxt, win = [], [], [], [], [], [], [], []
    for ep in buffer.episodes:
        base = len(rows)
        for tr in ep.transitions:
            rows.append(tr.x + tr.prev_action + tr.prev_reward)
            act.append(tr.action)
            rew.append(tr.reward)
            pol.append(tr.policy_id)
            done.append(1.0 if tr.done else 0.0)
            epi.append(ep.episode_id)
        n = len(ep.transitions)
        for k in range(n):
            i = base + k
            last = ep.transitions[k].done or k == n - 1
            nxt.append(i if last else i + 1)
            w = list(range(max(0, k - window + 1), k + 1))
            win.append([-1] * (window - len(w)) + [base + j for j in w])
    N = len(rows)
    steps = np.zeros((N + 1, STEP_INPUT))
    if N:
        steps[:N] = np.asarray(rows, dtype=np.float64)
    window_idx = np.asarray(win, dtype=np.int64).reshape(N, window)
    mask = (window_idx >= 0).astype(np.float64)
    window_idx[window_idx < 0] = N
    done_arr = np.asarray(done, dtype=np.float64)
    # a final transition without done has no successor in the buffer
    nxt_arr = np.asarray(nxt, dtype=np.int64)
    done_arr = np.where(nxt_arr == np.arange(N), 1.0, done_arr)
    return Packed(
        steps=steps, window=window_idx, mask=mask, next_index=nxt_arr,
        action=np.asarray(act, dtype=np.float64).reshape(N, N_ACTION),
        reward=np.asarray(rew, dtype=np.float64).reshape(N, N_REWARD),
        policy=np.asarray(pol, dtype=np.int64), done=done_arr,
        episode=np.asarray(epi, dtype=np.int64),
        x=steps[:N, :N_FEATURES].copy(), n_policies=buffer.n_policies,
    )


def history_window(episode: Episode, t: int, window: int) -> np.ndarray:
    """The ``[len, 18]`` step inputs for the state at step ``t`` (no padding)."""
    trs = episode.transitions[max(0, t - window + 1): t + 1]
    return np.asarray([tr.x + tr.prev_action + tr.prev_reward for tr in trs], dtype=np.float64)


def scalarize_reward(r: Sequence[float], weights: Sequence[float] = (1.0, 1.0, 1.0)) -> float:
    """Weighted mean of the reward components."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("reward weights must be non-negative")
    if w.sum() <= 0:
        raise ValueError("reward weights must not all be zero")
    return float(np.dot(w, np.asarray(r, dtype=np.float64)) / w.sum())


def scalarize_rewards(r: np.ndarray, weights: Sequence[float] = (1.0, 1.0, 1.0)) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("reward weights must be non-negative with a positive sum")
    return r @ w / w.sum()
