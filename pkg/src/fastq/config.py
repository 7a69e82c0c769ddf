"""Training configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .datagen import SimConfig, SimConfigError

MAX_GAMMA = 0.7


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    # discount schedule
    gammas: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7)
    phase_max_steps: int = 2000
    plateau_window: int = 500
    plateau_threshold: float = 0.01
    # TD3 + BC
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_freq: int = 2
    bc_alpha: float = 2.5
    critic_mix_alpha: float = 0.75
    decomp_both_critics: bool = False
    reward_weights: tuple[float, ...] = (1.0, 1.0, 1.0)
    # counterfactual exploration
    explore: bool = True
    eps_start: float = 0.1
    eps_end: float = 0.5
    eps_reset_per_phase: bool = True
    # balancing representation
    use_classifier: bool = True
    lambda_grl: float = 1.0
    theta_lr_scale: float = 10.0
    classifier_lr_scale: float = 3.0
    pe_joint_lr_scale: float = 1.0
    adv_anneal: float = 0.0
    classifier_steps: int = 10
    sampler_delta: float = 0.01
    warmup_steps: int = 1000
    # policy experts
    window: int = 10
    hidden: int = 32
    pe_steps: int = 1500
    pe_lr: float = 3e-3
    pe_batch_size: int = 256
    pe_plateau_window: int = 100
    pe_plateau_threshold: float = 0.002
    pe_dim_weights: tuple[float, ...] = (1.0, 1.0, 1.0)
    pe_lstm_trainable: bool = True
    pe_head_trainable: bool = False
    # network sizes
    br_dim: int = 32
    classifier_hidden: int = 32
    critic_hidden: int = 64
    actor_hidden: int = 64
    # evaluation
    mc_dropout_rate: float = 0.1
    heldout_every: int = 5
    dataset_path: str = ""

    def validate(self) -> "TrainConfig":
        g = self.gammas
        if not g:
            raise ConfigError("gammas must not be empty")
        if any(not 0.0 <= x < 1.0 for x in g):
            raise ConfigError("every gamma must be in [0, 1)")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError("gammas must be strictly increasing")
        if g[-1] > MAX_GAMMA + 1e-12:
            raise ConfigError(f"gamma above {MAX_GAMMA} is refused")
        _check(self.phase_max_steps >= 1, "phase_max_steps must be >= 1")
        _check(self.plateau_window >= 2, "plateau_window must be >= 2")
        _check(self.plateau_threshold >= 0, "plateau_threshold must be >= 0")
        _check(0.0 <= self.tau <= 1.0, "tau must be in [0, 1]")
        _check(self.lr > 0 and self.pe_lr > 0, "learning rates must be positive")
        _check(min(self.theta_lr_scale, self.classifier_lr_scale, self.pe_joint_lr_scale) > 0,
               "lr scales must be positive")
        _check(self.batch_size >= 1 and self.pe_batch_size >= 1, "batch sizes must be >= 1")
        _check(self.policy_noise >= 0 and self.noise_clip >= 0, "policy noise must be >= 0")
        _check(self.policy_freq >= 1, "policy_freq must be >= 1")
        _check(self.bc_alpha > 0, "bc_alpha must be positive")
        _check(0.0 <= self.critic_mix_alpha <= 1.0, "critic_mix_alpha must be in [0, 1]")
        _check(len(self.reward_weights) == 3 and min(self.reward_weights) >= 0
               and sum(self.reward_weights) > 0, "reward_weights: 3 non-negative values, positive sum")
        _check(0.0 <= self.eps_start <= 1.0 and 0.0 <= self.eps_end <= 1.0, "epsilon must be in [0, 1]")
        _check(self.lambda_grl >= 0, "lambda_grl must be >= 0")
        _check(self.adv_anneal >= 0, "adv_anneal must be >= 0")
        _check(self.classifier_steps >= 1, "classifier_steps must be >= 1")
        _check(self.sampler_delta >= 0, "sampler_delta must be >= 0")
        _check(self.warmup_steps >= 0 and self.pe_steps >= 0, "step counts must be >= 0")
        _check(self.window >= 1, "window must be >= 1")
        _check(min(self.hidden, self.br_dim, self.classifier_hidden, self.critic_hidden,
                   self.actor_hidden) >= 1, "layer sizes must be >= 1")
        _check(self.pe_plateau_window >= 2, "pe_plateau_window must be >= 2")
        _check(len(self.pe_dim_weights) == 3 and min(self.pe_dim_weights) >= 0
               and sum(self.pe_dim_weights) > 0, "pe_dim_weights: 3 non-negative values, positive sum")
        _check(0.0 <= self.mc_dropout_rate < 1.0, "mc_dropout_rate must be in [0, 1)")
        _check(self.heldout_every >= 2, "heldout_every must be >= 2")
        return self

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items())

    def hash(self) -> str:
        """sha256 over the canonical text; ``dataset_path`` is excluded."""
        body = "".join(line for line in self.to_text().splitlines(True)
                       if not line.startswith("dataset_path "))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


def _check(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(kind: str, key: str, raw: str, lineno: int):
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(float(p) for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None


def parse_pairs(text: str, cls) -> dict:
    """Parse ``key = value`` lines into ``cls`` field values.

    ``#`` starts a comment; unknown and duplicate keys are errors.
    """
    types = {f.name: f.type for f in fields(cls)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse(types[key], key, raw, lineno)
    return values


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    return replace(base or TrainConfig(), **parse_pairs(text, TrainConfig)).validate()


def parse_sim_config(text: str) -> SimConfig:
    cfg = SimConfig(**parse_pairs(text, SimConfig))
    try:
        cfg.validate()
    except SimConfigError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def load_config(path) -> TrainConfig:
    return parse_config(_read(path))


def load_sim_config(path) -> SimConfig:
    return parse_sim_config(_read(path))
