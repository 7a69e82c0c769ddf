"""Paired training runs: component ablations and the exploration speed-up curve."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..config import TrainConfig
from ..data import Buffer, fraction_buffer, pack, split_buffer
from ..trainer import Trainer, pretrain_experts
from .evaluate import final_mean_q, sample_rows

ABLATIONS = {
    "none": {},
    "no_br": {"use_classifier": False},
    "no_explore": {"explore": False},
    "no_decomp": {"critic_mix_alpha": 1.0},
}
EVAL_ROWS = 2000


def ablation_config(config: TrainConfig, which: str) -> TrainConfig:
    if which not in ABLATIONS:
        raise ValueError(f"unknown ablation {which!r}; choose from {', '.join(ABLATIONS)}")
    return config.with_(**ABLATIONS[which]).validate()


@dataclass
class RunCache:
    """Memoises expert pre-training and finished runs across paired experiments."""

    experts: dict = field(default_factory=dict)
    runs: dict = field(default_factory=dict)

    def get_experts(self, buffer: Buffer, config: TrainConfig, seed: int, key):
        if key not in self.experts:
            self.experts[key] = pretrain_experts(buffer, config, seed)[0]
        return self.experts[key]


def run_variant(buffer: Buffer, config: TrainConfig, seed: int, fraction: float = 1.0,
                cache: RunCache | None = None) -> Trainer:
    """Train on ``fraction`` of the training split; experts are shared across variants."""
    cache = cache if cache is not None else RunCache()
    key = (config.hash(), int(seed), float(fraction))
    if key in cache.runs:
        return cache.runs[key]
    train_buf = fraction_buffer(split_buffer(buffer, config.heldout_every)[0], fraction)
    experts = cache.get_experts(train_buf, config, seed, (int(seed), float(fraction)))
    trainer = Trainer(train_buf, config, seed, experts=experts)
    trainer.run()
    cache.runs[key] = trainer
    return trainer


def heldout_q(trainer: Trainer, buffer: Buffer, seed: int, n: int = EVAL_ROWS) -> float:
    held = pack(split_buffer(buffer, trainer.cfg.heldout_every)[1], trainer.cfg.window)
    return final_mean_q(trainer.m, held, sample_rows(held, n, seed))


def ablate(buffer: Buffer, config: TrainConfig, which: str, seed: int,
           cache: RunCache | None = None) -> dict:
    """Relative drop ``(Q_full - Q_ablated) / Q_full`` of held-out final mean Q."""
    cache = cache if cache is not None else RunCache()
    q_full = heldout_q(run_variant(buffer, config, seed, cache=cache), buffer, seed)
    q_abl = heldout_q(run_variant(buffer, ablation_config(config, which), seed, cache=cache), buffer, seed)
    return {"which": which, "q_full": q_full, "q_ablated": q_abl, "drop": (q_full - q_abl) / q_full}


def exploration_curve(buffer: Buffer, config: TrainConfig, fractions=(1 / 3, 2 / 3, 1.0),
                      seed: int = 12345, cache: RunCache | None = None) -> list[dict]:
    """Held-out final Q with and without exploration per data fraction.

    Values are normalised by the full-data exploring run.
    """
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    cache = cache if cache is not None else RunCache()
    on, off = config.with_(explore=True), config.with_(explore=False)
    ref = heldout_q(run_variant(buffer, on, seed, 1.0, cache), buffer, seed)
    rows = []
    for f in fractions:
        q_on = heldout_q(run_variant(buffer, on, seed, f, cache), buffer, seed)
        q_off = heldout_q(run_variant(buffer, off, seed, f, cache), buffer, seed)
        rows.append({"fraction": float(f), "q_on": q_on / ref, "q_off": q_off / ref})
    return rows
