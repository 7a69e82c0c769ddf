import numpy as np
import pytest

from fastq.checkpoint import Checkpoint, CheckpointError, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from fastq.config import ConfigError, TrainConfig, load_config, parse_config, parse_sim_config
from fastq.data import split_buffer
from fastq.ndmath import polyak_update
from fastq.trainer import (
    METRIC_COLUMNS, DataError, NumericalAbort, Trainer, check_partitions, plateau_detector,
    pretrain_experts, read_metrics, train,
)


@pytest.fixture(scope="module")
def experts(tiny_buffer, tiny_config):
    train_buf, _ = split_buffer(tiny_buffer, tiny_config.heldout_every)
    return pretrain_experts(train_buf, tiny_config, 7)[0]


@pytest.fixture(scope="module")
def full_run(tiny_buffer, tiny_config, experts, tmp_path_factory):
    out = tmp_path_factory.mktemp("full")
    res = train(tiny_buffer, tiny_config, 7, out, experts=experts)
    return res, read_metrics(res.metrics_path)


# ------------------------------------------------------------------ config

def test_config_defaults_match_table():
    c = TrainConfig()
    assert c.gammas == (0.1, 0.3, 0.5, 0.7) and c.tau == 0.005 and c.lr == 3e-4
    assert (c.policy_noise, c.noise_clip, c.policy_freq) == (0.2, 0.5, 2)
    assert (c.bc_alpha, c.critic_mix_alpha, c.lambda_grl) == (2.5, 0.75, 1.0)
    assert (c.eps_start, c.eps_end) == (0.1, 0.5)


def test_config_round_trip_and_hash():
    c = TrainConfig(lr=1e-3, gammas=(0.2, 0.7), explore=False)
    back = parse_config(c.to_text())
    assert back == c and back.hash() == c.hash()
    assert c.with_(dataset_path="x.tsv").hash() == c.hash()
    assert c.with_(lr=2e-3).hash() != c.hash()


@pytest.mark.parametrize("text, msg", [
    ("nope = 1", "unknown key"),
    ("lr = 1\nlr = 2", "duplicate"),
    ("lr = abc", "bad value"),
    ("lr", "expected key"),
    ("gammas = 0.1, 0.3, 0.9", "refused"),
    ("gammas = 0.3, 0.1", "increasing"),
    ("gammas = 0.1, 0.1", "increasing"),
    ("tau = 2", "tau"),
    ("bc_alpha = 0", "bc_alpha"),
    ("theta_lr_scale = 0", "lr scales"),
    ("classifier_steps = 0", "classifier_steps"),
    ("adv_anneal = -1", "adv_anneal"),
    ("sampler_delta = -0.1", "sampler_delta"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_config_comments_and_files(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nlr = 0.001  # trailing\n\nexplore = false\n")
    c = load_config(p)
    assert c.lr == 0.001 and c.explore is False
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")
    with pytest.raises(ConfigError):
        parse_sim_config("episodes_per_policy = 0")


# ------------------------------------------------------------------ checkpoint

def test_checkpoint_round_trip_and_corruption(tmp_path):
    rng = np.random.default_rng(0)
    ck = Checkpoint(TrainConfig().hash(), {"b": rng.normal(size=(2, 3)), "a": rng.normal(size=4)},
                    {"step": 3, "x": [1.5, 2.0]})
    blob = to_bytes(ck)
    back = from_bytes(blob)
    assert back.meta == ck.meta and set(back.tensors) == {"a", "b"}
    assert all(np.array_equal(back.tensors[k], ck.tensors[k]) for k in ck.tensors)
    assert to_bytes(back) == blob
    path = tmp_path / "m.ckpt"
    save_checkpoint(ck, path)
    assert path.read_bytes() == blob
    with pytest.raises(CheckpointError, match="hash"):
        load_checkpoint(path, TrainConfig(lr=1.0).hash())
    flipped = bytearray(blob)
    flipped[60] ^= 0xFF
    with pytest.raises(CheckpointError):
        from_bytes(bytes(flipped))
    with pytest.raises(CheckpointError):
        from_bytes(blob[:-9])
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"garbage" * 20)
    (tmp_path / "bad.ckpt").write_bytes(blob[:30])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")


# ------------------------------------------------------------------ schedule pieces

def test_plateau_detector():
    assert not plateau_detector([1.0] * 7, 4)
    assert plateau_detector([1.0] * 8, 4)
    assert not plateau_detector([2.0] * 4 + [1.0] * 4, 4, 0.01)
    assert plateau_detector([1.0] * 4 + [0.995] * 4, 4, 0.01)


def test_polyak_elementwise():
    rng = np.random.default_rng(1)
    t, o = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    out = polyak_update(t, o, 0.005)
    for i in np.ndindex(t.shape):
        assert out[i] == 0.005 * float(o[i]) + (1.0 - 0.005) * float(t[i])
    assert np.array_equal(polyak_update(t, o, 0.0), t)
    assert np.array_equal(polyak_update(t, o, 1.0), o)


def test_missing_partition(tiny_buffer, tiny_config):
    keep = [e.episode_id for e in tiny_buffer.episodes if e.policy_id != 1]
    buf = tiny_buffer.subset(keep)
    with pytest.raises(DataError, match="missing policy partition: 1"):
        check_partitions(buf)
    with pytest.raises(DataError):
        Trainer(buf, tiny_config, 0)


def test_refuses_gamma_above_cap(tiny_buffer, tiny_config, experts):
    with pytest.raises(ConfigError, match="refused"):
        Trainer(tiny_buffer, tiny_config.with_(gammas=(0.1, 0.7, 0.8)), 7, experts=experts)


# ------------------------------------------------------------------ full runs

def test_gamma_sequence(full_run, tiny_config):
    _, rows = full_run
    seq = []
    for r in rows:
        if not seq or seq[-1] != r["gamma"]:
            seq.append(r["gamma"])
    assert tuple(seq) == tiny_config.gammas
    assert all(b["gamma"] >= a["gamma"] for a, b in zip(rows, rows[1:]))
    assert [r["phase"] for r in rows] == sorted(r["phase"] for r in rows)


def test_delayed_actor_updates(full_run):
    _, rows = full_run
    for i, r in enumerate(rows, 1):
        assert r["critic_updates"] == i
        assert r["actor_updates"] == i // 2
        assert (r["actor_loss"] is not None) == (i % 2 == 0)


def test_lambda_and_epsilon_logged(full_run, tiny_config):
    res, rows = full_run
    for r in rows:
        assert tiny_config.eps_start - 1e-12 <= r["epsilon"] <= tiny_config.eps_end + 1e-12
        if r["lambda"] is not None:
            assert r["lambda"] > 0
    starts = [r for r in rows if r["epsilon"] == pytest.approx(tiny_config.eps_start)]
    assert len(starts) >= len(tiny_config.gammas)


def test_classifier_steps_and_lr_scales(tiny_buffer, tiny_config, experts):
    cfg = tiny_config.with_(classifier_steps=3, warmup_steps=2, adv_anneal=0.0)
    tr = Trainer(split_buffer(tiny_buffer)[0], cfg, 7, experts=experts)
    assert tr.opt_theta.hyper["lr"] == cfg.lr * cfg.theta_lr_scale
    assert tr.opt_cls.hyper["lr"] == cfg.lr * cfg.classifier_lr_scale
    assert tr.opt_pe.hyper["lr"] == cfg.lr * cfg.pe_joint_lr_scale
    tr.warmup()
    theta_steps = {st.step for st in tr.opt_theta.states.values()}
    cls_steps = {st.step for st in tr.opt_cls.states.values()}
    assert theta_steps == {2} and cls_steps == {6}
    tr.step()
    assert {st.step for st in tr.opt_cls.states.values()} == {9}


def test_adversarial_lr_anneal(tiny_buffer, tiny_config, experts):
    cfg = tiny_config.with_(adv_anneal=10.0, warmup_steps=3)
    tr = Trainer(split_buffer(tiny_buffer)[0], cfg, 7, experts=experts)
    tr.warmup()
    tr.step()
    budget = cfg.warmup_steps + cfg.phase_max_steps * len(cfg.gammas)
    f = (1.0 + 10.0 * (3 / budget)) ** -0.75  # progress seen by the fourth adversarial update
    assert tr.opt_theta.hyper["lr"] == pytest.approx(cfg.lr * cfg.theta_lr_scale * f, rel=1e-12)
    assert all(st.lr == tr.opt_cls.hyper["lr"] for st in tr.opt_cls.states.values())
    assert tr.opt_critic.hyper["lr"] == cfg.lr


def test_polyak_targets_in_step(tiny_buffer, tiny_config, experts):
    tr = Trainer(split_buffer(tiny_buffer)[0], tiny_config, 7, experts=experts)
    tr.warmup()
    tr.step()
    before = [t.data.copy() for t in tr.m.critic_target.parameters()]
    tr.step()
    after = [t.data for t in tr.m.critic_target.parameters()]
    online = [p.data for p in tr.m.critic.parameters()]
    for b, a, o in zip(before, after, online):
        assert np.array_equal(a, polyak_update(b, o, 0.005))


def test_determinism_byte_identical(full_run, tiny_buffer, tiny_config, experts, tmp_path):
    res, _ = full_run
    again = train(tiny_buffer, tiny_config, 7, tmp_path, experts=experts)
    assert again.metrics_path.read_bytes() == res.metrics_path.read_bytes()
    assert again.checkpoint_path.read_bytes() == res.checkpoint_path.read_bytes()


def test_resume_matches_unbroken(full_run, tiny_buffer, tiny_config, experts, tmp_path):
    res, rows = full_run
    first = train(tiny_buffer, tiny_config, 7, tmp_path, experts=experts, max_steps=10)
    assert len(read_metrics(first.metrics_path)) == 10
    second = train(tiny_buffer, tiny_config, 7, tmp_path, resume=first.checkpoint_path)
    assert second.metrics_path.read_bytes() == res.metrics_path.read_bytes()
    assert second.checkpoint_path.read_bytes() == res.checkpoint_path.read_bytes()


def test_metrics_header(full_run):
    res, _ = full_run
    assert res.metrics_path.read_text().splitlines()[0].split("\t") == list(METRIC_COLUMNS)


def test_nan_abort_dumps_batch(tiny_buffer, tiny_config, experts, tmp_path):
    tr = Trainer(split_buffer(tiny_buffer)[0], tiny_config, 7, experts=experts)
    tr.m.critic.q1.l1.W.data[0, 0] = np.inf
    with pytest.raises(NumericalAbort) as info:
        tr.run(dump_dir=tmp_path)
    assert info.value.dump_path == tmp_path / "nan_batch.tsv"
    assert info.value.dump_path.exists()
    assert "non-finite" in str(info.value)


def test_checkpoint_seed_and_config_checks(full_run, tiny_buffer, tiny_config, experts):
    res, _ = full_run
    ck = load_checkpoint(res.checkpoint_path)
    with pytest.raises(CheckpointError, match="hash"):
        Trainer(split_buffer(tiny_buffer)[0], tiny_config.with_(lr=1e-3), 7, experts=experts).restore(ck)
    with pytest.raises(CheckpointError, match="seed"):
        Trainer(split_buffer(tiny_buffer)[0], tiny_config, 8, experts=experts).restore(ck)


def test_experts_learn(tiny_buffer, tiny_config):
    from fastq.data import pack
    from fastq.trainer import expert_mse
    cfg = tiny_config.with_(pe_steps=0)
    train_buf = split_buffer(tiny_buffer)[0]
    packed = pack(train_buf, cfg.window)
    untrained = expert_mse(pretrain_experts(train_buf, cfg, 1, packed)[0], packed, cfg)
    trained = expert_mse(pretrain_experts(train_buf, cfg.with_(pe_steps=150), 1, packed)[0], packed, cfg)
    assert all(t < u for t, u in zip(trained, untrained))
