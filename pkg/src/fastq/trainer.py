"""Algorithm 1: expert pre-training, adversarial balancing and the TD3+BC loop.

Every random draw comes from a named substream of the run seed, so a run is a
pure function of ``(buffer, config, seed)`` and can be resumed bit-exactly
from a checkpoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actor import ActorNet, actor_loss, draw_counterfactual, epsilon_at
from .balanced_repr import BalancingRepresentation, ClassSampler, PolicyClassifier, classifier_loss
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .critic import TwinCritic, critic_loss, decomp_loss, td_loss, td_target
from .data import Buffer, Packed, pack, scalarize_rewards, split_buffer
from .ndmath import Adam, NonFiniteError, Tensor, concat, no_grad, polyak_update
from .nn import Module
from .policy_experts import PolicyExpert, pe_loss
from .rng import get_state, set_state, substream

METRIC_COLUMNS = (
    "step", "phase", "gamma", "epsilon", "critic_loss", "td_loss", "decomp_loss",
    "classifier_loss", "classifier_acc", "actor_loss", "lambda", "mean_q",
    "explore_frac", "critic_updates", "actor_updates",
)
RNG_NAMES = ("batch", "noise", "explore", "warmup")


class DataError(ValueError):
    """Input buffer cannot be trained on."""


class NumericalAbort(RuntimeError):
    def __init__(self, message: str, dump_path: Path | None = None):
        super().__init__(message)
        self.dump_path = dump_path


def plateau_detector(history, window: int, threshold: float = 0.01) -> bool:
    """Relative change between the means of the last two ``window``-long blocks."""
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(history) < 2 * window:
        return False
    h = np.asarray(history[-2 * window:], dtype=np.float64)
    prev, last = h[:window].mean(), h[window:].mean()
    return abs(last - prev) / max(abs(prev), 1e-8) < threshold


def check_partitions(buffer: Buffer) -> None:
    missing = buffer.missing_policies()
    if missing:
        raise DataError(f"missing policy partition: {','.join(map(str, missing))}")


# ------------------------------------------------------------------ policy experts

def pretrain_experts(buffer: Buffer, config: TrainConfig, seed: int,
                     packed: Packed | None = None) -> tuple[list[PolicyExpert], list[float]]:
    """Fit one expert per policy on its own partition; returns experts and final losses."""
    check_partitions(buffer)
    packed = packed if packed is not None else pack(buffer, config.window)
    experts, finals = [], []
    for p, ix in enumerate(packed.by_policy()):
        expert = PolicyExpert(p, substream(seed, "pe-init", p), config.hidden)
        opt = Adam(expert.named_parameters(), lr=config.pe_lr)
        rng = substream(seed, "pe-batch", p)
        history: list[float] = []
        for _ in range(config.pe_steps):
            idx = ix[rng.integers(0, len(ix), size=min(config.pe_batch_size, len(ix)))]
            steps, mask = packed.windows(idx)
            opt.zero_grad()
            _, a_hat = expert(steps, mask)
            loss = pe_loss(a_hat, packed.action[idx], config.pe_dim_weights)
            loss.backward()
            opt.step()
            history.append(float(loss.data))
            if plateau_detector(history, config.pe_plateau_window, config.pe_plateau_threshold):
                break
        experts.append(expert)
        finals.append(history[-1] if history else math.nan)
    return experts, finals


def expert_mse(experts: list[PolicyExpert], packed: Packed, config: TrainConfig) -> list[float]:
    """Per-policy mean weighted MSE of each expert on its own partition of ``packed``."""
    out = []
    for p, ix in enumerate(packed.by_policy()):
        with no_grad():
            _, a_hat = experts[p](*packed.windows(ix))
        out.append(float(pe_loss(a_hat, packed.action[ix], config.pe_dim_weights).data))
    return out


# ------------------------------------------------------------------ networks

@dataclass
class Models:
    experts: list[PolicyExpert]
    theta: BalancingRepresentation
    classifier: PolicyClassifier
    critic: TwinCritic
    critic_target: TwinCritic
    actor: ActorNet
    actor_target: ActorNet

    @classmethod
    def build(cls, config: TrainConfig, seed: int, experts: list[PolicyExpert]) -> "Models":
        rng = substream(seed, "init")
        theta = BalancingRepresentation(config.hidden, config.br_dim, rng)
        classifier = PolicyClassifier(config.br_dim, len(experts), rng, config.classifier_hidden)
        critic = TwinCritic(config.br_dim, rng, config.critic_hidden)
        actor = ActorNet(config.br_dim, rng, config.actor_hidden)
        experts = [e.clone() for e in experts]
        return cls(experts, theta, classifier, critic, critic.clone(), actor, actor.clone())

    def modules(self) -> dict[str, Module]:
        mods = {f"expert{p}": e for p, e in enumerate(self.experts)}
        mods.update(theta=self.theta, classifier=self.classifier, critic=self.critic,
                    critic_target=self.critic_target, actor=self.actor, actor_target=self.actor_target)
        return mods

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, mod in self.modules().items():
            out.update({f"{name}.{k}": v for k, v in mod.state_dict().items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, mod in self.modules().items():
            pre = f"{name}."
            mod.load_state_dict({k[len(pre):]: v for k, v in arrays.items() if k.startswith(pre)})

    def encode(self, packed: Packed, idx: np.ndarray, policy: np.ndarray, use_br: bool = True,
               dropout_rate: float = 0.0, rng=None) -> Tensor:
        """Balanced states for rows ``idx`` whose policies ``policy`` are grouped contiguously."""
        betas = []
        for p in _runs(policy):
            rows = idx[policy == p]
            steps, mask = packed.windows(rows)
            betas.append(self.experts[p].encode(steps, mask, dropout_rate, rng))
        beta = betas[0] if len(betas) == 1 else concat(betas, axis=0)
        return self.theta(beta) if use_br else beta


def _runs(policy: np.ndarray) -> list[int]:
    """Distinct values of a grouped array in order of appearance."""
    if len(policy) == 0:
        return []
    starts = np.flatnonzero(np.r_[True, policy[1:] != policy[:-1]])
    vals = [int(v) for v in policy[starts]]
    if len(set(vals)) != len(vals):
        raise ValueError("policy ids must be grouped")
    return vals


def group_by_policy(idx: np.ndarray, policy_of: np.ndarray) -> np.ndarray:
    return idx[np.argsort(policy_of[idx], kind="stable")]


# ------------------------------------------------------------------ trainer

class Trainer:
    def __init__(self, buffer: Buffer, config: TrainConfig, seed: int,
                 experts: list[PolicyExpert] | None = None, packed: Packed | None = None):
        config.validate()
        check_partitions(buffer)
        self.cfg = config
        self.seed = int(seed)
        self.buffer = buffer
        self.packed = packed if packed is not None else pack(buffer, config.window)
        self.by_policy = self.packed.by_policy()
        if experts is None:
            experts, _ = pretrain_experts(buffer, config, seed, self.packed)
        self.m = Models.build(config, seed, experts)
        self.n_policies = buffer.n_policies
        self.sampler = ClassSampler(self.n_policies, config.sampler_delta)
        self.rngs = {name: substream(seed, name) for name in RNG_NAMES}

        pe_params = []
        for p, e in enumerate(self.m.experts):
            for k, t in e.named_parameters(f"expert{p}."):
                head = k.split(".", 1)[1].startswith("head.")
                if (head and config.pe_head_trainable) or (not head and config.pe_lstm_trainable):
                    pe_params.append((k, t))
        self.opt_critic = Adam(self.m.critic.named_parameters(), lr=config.lr)
        self.opt_pe = Adam(pe_params, lr=config.lr * config.pe_joint_lr_scale)
        self.opt_theta = Adam(self.m.theta.named_parameters(), lr=config.lr * config.theta_lr_scale)
        self.opt_cls = Adam(self.m.classifier.named_parameters(), lr=config.lr * config.classifier_lr_scale)
        self.opt_actor = Adam(self.m.actor.named_parameters(), lr=config.lr)

        self.global_step = 0
        self.phase = 0
        self.step_in_phase = 0
        self.critic_updates = 0
        self.actor_updates = 0
        self.warmup_done = 0
        self.loss_history: list[float] = []
        self.last_batch: np.ndarray | None = None

    # ---------------------------------------------------------------- schedule
    @property
    def finished(self) -> bool:
        return self.phase >= len(self.cfg.gammas)

    @property
    def gamma(self) -> float:
        return self.cfg.gammas[min(self.phase, len(self.cfg.gammas) - 1)]

    def epsilon(self) -> float:
        cfg = self.cfg
        if not cfg.explore:
            return 0.0
        if cfg.eps_reset_per_phase:
            return epsilon_at(self.step_in_phase, cfg.phase_max_steps, cfg.eps_start, cfg.eps_end)
        total = cfg.phase_max_steps * len(cfg.gammas)
        return epsilon_at(self.global_step, total, cfg.eps_start, cfg.eps_end)

    def _advance(self, loss: float) -> None:
        cfg = self.cfg
        self.global_step += 1
        self.step_in_phase += 1
        self.loss_history.append(loss)
        if (self.step_in_phase >= cfg.phase_max_steps
                or plateau_detector(self.loss_history, cfg.plateau_window, cfg.plateau_threshold)):
            self.phase += 1
            self.step_in_phase = 0
            self.loss_history = []

    # ---------------------------------------------------------------- steps
    def _batch(self, rng) -> tuple[np.ndarray, np.ndarray]:
        idx = self.sampler.sample(self.by_policy, self.cfg.batch_size, rng)
        idx = group_by_policy(idx, self.packed.policy)
        self.last_batch = idx
        return idx, self.packed.policy[idx]

    def _zero_all(self) -> None:
        for opt in self._optimizers().values():
            opt.zero_grad()

    def _optimizers(self) -> dict[str, Adam]:
        return {"opt_critic.": self.opt_critic, "opt_pe.": self.opt_pe, "opt_theta.": self.opt_theta,
                "opt_cls.": self.opt_cls, "opt_actor.": self.opt_actor}

    def _anneal(self) -> None:
        """Adversarial learning rates decay as ``(1 + a p)^-0.75`` with training progress ``p``."""
        cfg = self.cfg
        if cfg.adv_anneal == 0.0:
            return
        budget = cfg.warmup_steps + cfg.phase_max_steps * len(cfg.gammas)
        p = min(1.0, (self.warmup_done + self.global_step) / budget)
        f = (1.0 + cfg.adv_anneal * p) ** -0.75
        self.opt_pe.set_lr(cfg.lr * cfg.pe_joint_lr_scale * f)
        self.opt_theta.set_lr(cfg.lr * cfg.theta_lr_scale * f)
        self.opt_cls.set_lr(cfg.lr * cfg.classifier_lr_scale * f)

    def _adversarial(self, br: Tensor, pids: np.ndarray):
        if self.cfg.use_classifier:
            # extra classifier-only updates keep the adversary near its best response
            for _ in range(self.cfg.classifier_steps - 1):
                self.opt_cls.zero_grad()
                classifier_loss(self.m.classifier, Tensor(br.data), pids, 0.0)[0].backward()
                self.opt_cls.step()
            self.opt_cls.zero_grad()
            return classifier_loss(self.m.classifier, br, pids, self.cfg.lambda_grl)
        # probe only: the classifier learns on a detached copy, nothing reaches Theta
        return classifier_loss(self.m.classifier, Tensor(br.data), pids, 0.0)

    def warmup(self) -> None:
        """Adversarial-only steps on Theta, the classifier and the expert encoders."""
        if not self.cfg.use_classifier:
            self.warmup_done = self.cfg.warmup_steps
        while self.warmup_done < self.cfg.warmup_steps:
            idx, pids = self._batch(self.rngs["warmup"])
            self._anneal()
            self._zero_all()
            l_a, probs = self._adversarial(self.m.encode(self.packed, idx, pids), pids)
            l_a.backward()
            self.opt_pe.step()
            self.opt_theta.step()
            self.opt_cls.step()
            self.sampler.update(probs)
            self.warmup_done += 1

    def anchors(self, idx: np.ndarray, pids: np.ndarray, epsilon: float) -> tuple[np.ndarray, float]:
        cp = draw_counterfactual(pids, self.n_policies, epsilon, self.rngs["explore"])
        out = self.packed.action[idx].copy()
        for c in range(self.n_policies):
            rows = np.flatnonzero(cp == c)
            if len(rows):
                with no_grad():
                    beta = self.m.experts[c].encode(*self.packed.windows(idx[rows]))
                    out[rows] = self.m.experts[c].predict(beta).data
        return out, float(np.mean(cp >= 0))

    def step(self) -> dict:
        cfg, m, pk = self.cfg, self.m, self.packed
        gamma, eps = self.gamma, self.epsilon()
        idx, pids = self._batch(self.rngs["batch"])
        self._anneal()
        self._zero_all()

        br = m.encode(pk, idx, pids)
        with no_grad():
            br_next = m.encode(pk, pk.next_index[idx], pids).data
        rewards = pk.reward[idx]
        y = td_target(scalarize_rewards(rewards, cfg.reward_weights), pk.done[idx], br_next,
                      m.actor_target, m.critic_target, gamma, self.rngs["noise"],
                      cfg.policy_noise, cfg.noise_clip)
        action = Tensor(pk.action[idx])
        q1, w1 = m.critic.q1(br, action)
        q2, w2 = m.critic.q2(br, action)
        l_td = td_loss(q1, q2, y)
        l_dec = decomp_loss(q1, w1, rewards)
        if cfg.decomp_both_critics:
            l_dec = (l_dec + decomp_loss(q2, w2, rewards)) * 0.5
        l_c = critic_loss(l_td, l_dec, cfg.critic_mix_alpha)
        l_a, probs = self._adversarial(br, pids)
        (l_c + l_a).backward()
        self.opt_critic.step()
        self.opt_pe.step()
        self.opt_theta.step()
        self.opt_cls.step()
        if cfg.use_classifier:
            self.sampler.update(probs)
        self.critic_updates += 1

        row = {
            "step": self.global_step, "phase": self.phase, "gamma": gamma, "epsilon": eps,
            "critic_loss": float(l_c.data), "td_loss": float(l_td.data),
            "decomp_loss": float(l_dec.data), "classifier_loss": float(l_a.data),
            "classifier_acc": float(np.mean(np.argmax(probs, axis=1) == pids)),
            "actor_loss": None, "lambda": None, "mean_q": float(np.mean(q1.data)),
            "explore_frac": None,
        }
        if self.critic_updates % cfg.policy_freq == 0:
            anchors, frac = self.anchors(idx, pids, eps)
            self.opt_actor.zero_grad()
            l_pi, lam = actor_loss(br.data, m.actor, m.critic.q1.q, anchors, cfg.bc_alpha)
            l_pi.backward()
            self.opt_actor.step()
            m.critic.zero_grad()
            self._polyak()
            self.actor_updates += 1
            row.update(actor_loss=float(l_pi.data), **{"lambda": lam}, explore_frac=frac)
        row.update(critic_updates=self.critic_updates, actor_updates=self.actor_updates)
        self._advance(row["critic_loss"])
        return row

    def _polyak(self) -> None:
        tau = self.cfg.tau
        for online, target in ((self.m.critic, self.m.critic_target), (self.m.actor, self.m.actor_target)):
            for (_, p), (_, t) in zip(online.named_parameters(), target.named_parameters()):
                t.data = polyak_update(t.data, p.data, tau)

    # ---------------------------------------------------------------- running
    def run(self, metrics=None, max_steps: int | None = None, dump_dir=None) -> int:
        """Train until the schedule ends (or ``max_steps`` more steps); returns steps taken."""
        taken = 0
        try:
            self.warmup()
            while not self.finished and (max_steps is None or taken < max_steps):
                row = self.step()
                if metrics is not None:
                    metrics.write(row)
                taken += 1
        except NonFiniteError as exc:
            dump = self._dump(dump_dir) if dump_dir is not None else None
            where = f"; batch dumped to {dump}" if dump else ""
            raise NumericalAbort(f"non-finite value at step {self.global_step}: {exc}{where}", dump) from None
        return taken

    def _dump(self, out_dir) -> Path | None:
        if self.last_batch is None:
            return None
        path = Path(out_dir) / "nan_batch.tsv"
        pk, idx = self.packed, self.last_batch
        cols = ["index", "episode", "policy", "done"] + [f"action{i}" for i in range(3)] + \
            [f"reward{i}" for i in range(3)]
        lines = ["\t".join(cols)]
        for i in idx:
            vals = [int(i), int(pk.episode[i]), int(pk.policy[i]), repr(float(pk.done[i]))]
            vals += [repr(float(v)) for v in pk.action[i]] + [repr(float(v)) for v in pk.reward[i]]
            lines.append("\t".join(map(str, vals)))
        path.write_text("\n".join(lines) + "\n")
        return path

    # ---------------------------------------------------------------- checkpoints
    def checkpoint(self) -> Checkpoint:
        tensors = self.m.state_arrays()
        for name, opt in self._optimizers().items():
            tensors.update(opt.state_arrays(name))
        meta = {
            "seed": self.seed,
            "config": self.cfg.to_text(),
            "n_policies": self.n_policies,
            "counters": {"global_step": self.global_step, "phase": self.phase,
                         "step_in_phase": self.step_in_phase, "critic_updates": self.critic_updates,
                         "actor_updates": self.actor_updates, "warmup_done": self.warmup_done},
            "loss_history": self.loss_history,
            "p_prev": [float(v) for v in self.sampler.p_prev],
            "rng": {k: get_state(g) for k, g in self.rngs.items()},
        }
        return Checkpoint(self.cfg.hash(), tensors, meta)

    def restore(self, ckpt: Checkpoint) -> None:
        if ckpt.config_hash != self.cfg.hash():
            raise CheckpointError("config hash mismatch")
        meta = ckpt.meta
        if int(meta["seed"]) != self.seed:
            raise CheckpointError("seed mismatch")
        self.m.load_arrays(ckpt.tensors)
        for name, opt in self._optimizers().items():
            opt.load_state_arrays(ckpt.tensors, name)
        for k, v in meta["counters"].items():
            setattr(self, k, int(v))
        self.loss_history = [float(v) for v in meta["loss_history"]]
        self.sampler.p_prev = np.asarray(meta["p_prev"], dtype=np.float64)
        for k, st in meta["rng"].items():
            set_state(self.rngs[k], st)

    @classmethod
    def from_checkpoint(cls, buffer: Buffer, ckpt: Checkpoint, config: TrainConfig) -> "Trainer":
        """Rebuild a trainer around saved parameters without re-training the experts."""
        placeholder = [PolicyExpert(p, substream(0, "placeholder", p), config.hidden)
                       for p in range(buffer.n_policies)]
        tr = cls(buffer, config, int(ckpt.meta["seed"]), experts=placeholder)
        tr.restore(ckpt)
        return tr


# ------------------------------------------------------------------ metrics log

class MetricsLog:
    """Tab-separated metrics with a fixed header; floats are written with ``repr``."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        fresh = not (append and self.path.exists() and self.path.stat().st_size > 0)
        self.fh = open(self.path, "w" if fresh else "a", encoding="utf-8")
        if fresh:
            self.fh.write("\t".join(METRIC_COLUMNS) + "\n")

    def write(self, row: dict) -> None:
        self.fh.write("\t".join(_cell(row.get(c)) for c in METRIC_COLUMNS) + "\n")

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_metrics(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != METRIC_COLUMNS:
        raise ValueError(f"{path}: not a metrics log")
    rows = []
    for line in lines[1:]:
        vals = line.split("\t")
        rows.append({c: (float(v) if v else None) for c, v in zip(METRIC_COLUMNS, vals)})
    return rows


# ------------------------------------------------------------------ entry point

@dataclass
class TrainResult:
    trainer: Trainer
    checkpoint_path: Path
    metrics_path: Path


def train(buffer: Buffer, config: TrainConfig, seed: int, out_dir, experts=None,
          resume=None, max_steps: int | None = None) -> TrainResult:
    """Train on the training split of ``buffer``; writes ``metrics.tsv`` and ``model.ckpt``.

    ``resume`` is a checkpoint path; the metrics log is then appended to.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    check_partitions(buffer)
    train_buf, _ = split_buffer(buffer, config.heldout_every)
    check_partitions(train_buf)
    if resume is not None:
        trainer = Trainer.from_checkpoint(train_buf, load_checkpoint(resume, config.hash()), config)
    else:
        trainer = Trainer(train_buf, config, seed, experts=experts)
    ckpt_path, metrics_path = out / "model.ckpt", out / "metrics.tsv"
    with MetricsLog(metrics_path, append=resume is not None) as log:
        trainer.run(log, max_steps=max_steps, dump_dir=out)
    save_checkpoint(trainer.checkpoint(), ckpt_path)
    return TrainResult(trainer, ckpt_path, metrics_path)
