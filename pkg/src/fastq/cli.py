"""Command-line entry point: ``fastq {gen-data,train,eval,diag,ablate}``.

Exit codes: 0 ok, 1 usage error, 2 data or config error, 3 numerical abort.
Every error prints one ``error: <reason>`` line to stderr.
"""
from __future__ import annotations

import argparse
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, TrainConfig, load_config, load_sim_config
from .data import BufferFormatError, pack, read_buffer, split_buffer, write_buffer
from .datagen import SimConfig, simulate
from .diagnostics import (
    ABLATIONS, RunCache, ablate, balance_report, cluster_sweep, disparity, embed_2d, exploration_curve,
    final_mean_q, mc_uncertainty, models_from_checkpoint, objective_weights, preference_fractions,
    q_spread, random_split_disparity, sample_rows, unit_scale, write_report,
)
from .diagnostics.evaluate import policy_actions
from .rng import substream
from .trainer import DataError, NumericalAbort, train

DEFAULT_SEED = 12345
EVAL_ROWS = 2000
INTENT_LOW, INTENT_HIGH = 0.35, 0.65
OBJECTIVES = ("dwell", "engagement", "return_time", "overflow")
REPORTS = ("disparity", "clusters", "balance", "q_spread", "uncertainty", "objectives",
           "preferences", "action_disparity")
BUFFER_ONLY = ("disparity", "clusters")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fastq", description="FAST-Q offline RL at desk scale")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="simulate a logged multi-policy buffer")
    g.add_argument("--config", help="simulator config (key = value); defaults when absent")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("--out", required=True, help="buffer file, or a directory to hold buffer.tsv")

    t = sub.add_parser("train", help="train on the buffer's training split")
    t.add_argument("--config", help="training config; defaults when absent")
    t.add_argument("--buffer", help="buffer file (overrides dataset_path)")
    t.add_argument("--seed", type=int, default=DEFAULT_SEED)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--max-steps", type=int, help="stop after this many more steps")

    e = sub.add_parser("eval", help="summarise a checkpoint on held-out data")
    _model_args(e)
    e.add_argument("--out", default=".", help="directory for eval.tsv and eval.svg")

    d = sub.add_parser("diag", help="write one diagnostics report")
    _model_args(d, checkpoint_required=False)
    d.add_argument("--report", required=True, choices=REPORTS)
    d.add_argument("--out", default=".", help="directory for <report>.tsv and <report>.svg")

    a = sub.add_parser("ablate", help="paired full vs. ablated training runs")
    a.add_argument("--config", help="training config; defaults when absent")
    a.add_argument("--buffer", help="buffer file (overrides dataset_path)")
    a.add_argument("--which", required=True, choices=[k for k in ABLATIONS if k != "none"] + ["exploration"])
    a.add_argument("--seed", type=int, default=DEFAULT_SEED)
    a.add_argument("--out", default=".", help="directory for the report pair")
    return p


def _model_args(p: argparse.ArgumentParser, checkpoint_required: bool = True) -> None:
    p.add_argument("--checkpoint", required=checkpoint_required)
    p.add_argument("--buffer", required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--split", choices=("heldout", "all"), default="heldout",
                   help="evaluate on the held-out split (default) or every transition")


# ------------------------------------------------------------------ helpers

def _load_buffer(path):
    try:
        return read_buffer(path)
    except OSError as exc:
        raise DataError(f"cannot read buffer {path}: {exc.strerror}") from None


def _train_inputs(args) -> tuple[TrainConfig, object]:
    cfg = load_config(args.config) if args.config else TrainConfig()
    path = args.buffer or cfg.dataset_path
    if not path:
        raise ConfigError("no buffer given: pass --buffer or set dataset_path")
    return cfg, _load_buffer(path)


def _eval_rows(args, cfg: TrainConfig, buffer):
    if args.split == "heldout":
        buffer = split_buffer(buffer, cfg.heldout_every)[1]
    if not len(buffer):
        raise DataError("no transitions to evaluate")
    packed = pack(buffer, cfg.window)
    return packed, sample_rows(packed, EVAL_ROWS, args.seed)


def _summary(values) -> list:
    v = np.asarray(values, dtype=np.float64)
    return [float(v.mean()), float(np.quantile(v, 0.1)), float(np.quantile(v, 0.5)), float(np.quantile(v, 0.9))]


# ------------------------------------------------------------------ subcommands

def cmd_gen_data(args) -> None:
    cfg = load_sim_config(args.config) if args.config else SimConfig()
    out = Path(args.out)
    if out.is_dir() or args.out.endswith(("/", "\\")):
        out.mkdir(parents=True, exist_ok=True)
        out = out / "buffer.tsv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_buffer(simulate(cfg, args.seed), out)
    print(out)


def cmd_train(args) -> None:
    cfg, buffer = _train_inputs(args)
    if args.max_steps is not None and args.max_steps < 0:
        raise UsageError("--max-steps must be >= 0")
    res = train(buffer, cfg, args.seed, args.out, resume=args.resume, max_steps=args.max_steps)
    tr = res.trainer
    print(f"steps={tr.global_step} phase={tr.phase} checkpoint={res.checkpoint_path} metrics={res.metrics_path}")


def cmd_eval(args) -> None:
    models, cfg = models_from_checkpoint(load_checkpoint(args.checkpoint))
    packed, rows = _eval_rows(args, cfg, _load_buffer(args.buffer))
    mean_q = final_mean_q(models, packed, rows)
    weights = objective_weights(models, packed, rows).mean(axis=0)
    prefs = preference_fractions(models, packed, rows, args.seed)
    table = [["mean_q", mean_q]]
    table += [[f"objective_{name}", float(w)] for name, w in zip(OBJECTIVES, weights)]
    table += [[f"preference_policy{p}", float(f)] for p, f in enumerate(prefs)]
    write_report(args.out, "eval", ["metric", "value"], table, "evaluation summary",
                 labels=[r[0] for r in table[1:]], series={"value": [r[1] for r in table[1:]]})
    for name, value in table:
        print(f"{name}\t{value!r}")


def _report_disparity(args, buffer, packed, rows, models):
    x = packed.x[rows]
    codes, _ = embed_2d(x, args.seed)
    pids = packed.policy[rows]
    groups = sorted(set(pids.tolist()))
    per_dim, total = disparity({p: x[pids == p] for p in groups})
    code_dim, code_total = disparity({p: codes[pids == p] for p in groups})
    base = random_split_disparity(codes, len(groups), substream(args.seed, "disparity-split"))
    header = ["quantity", "value"]
    table = [[f"feature{j}", float(v)] for j, v in enumerate(per_dim)]
    table += [["feature_sum", total], ["code0", float(code_dim[0])], ["code1", float(code_dim[1])],
              ["code_sum", code_total], ["code_random_split_sum", base]]
    return header, table, "policy-conditioned W1 per dimension", None


def _report_clusters(args, buffer, packed, rows, models):
    codes, _ = embed_2d(packed.x[rows], args.seed)
    codes = unit_scale(codes)
    pids = packed.policy[rows]
    ks = (2, 5, 10, 20, 50)
    header = ["min_samples", "all"] + [f"policy{p}" for p in range(buffer.n_policies)]
    per_policy = [cluster_sweep(codes[pids == p], 0.3, ks) if np.any(pids == p) else [0] * len(ks)
                  for p in range(buffer.n_policies)]
    pooled = cluster_sweep(codes, 0.3, ks)
    table = [[k, pooled[i]] + [c[i] for c in per_policy] for i, k in enumerate(ks)]
    series = {h: [float(r[j]) for r in table] for j, h in enumerate(header[1:], 1)}
    return header, table, "cluster count by min_samples (eps 0.3)", ([str(k) for k in ks], series)


def _report_balance(args, buffer, packed, rows, models):
    b = balance_report(models, packed, rows)
    table = [[k, float(v)] for k, v in b.items()]
    return ["quantity", "value"], table, "balanced representation", None


def _report_q_spread(args, buffer, packed, rows, models):
    header = ["route", "mean", "q10", "q50", "q90"]
    table = [["br"] + _summary(q_spread(models, packed, rows, True)),
             ["raw_beta"] + _summary(q_spread(models, packed, rows, False))]
    return header, table, "Q spread over counterfactual actions", (
        ["br", "raw_beta"], {"mean": [table[0][1], table[1][1]]})


def _report_uncertainty(args, buffer, packed, rows, models, cfg=None):
    rate = cfg.mc_dropout_rate if cfg is not None else 0.1
    std = mc_uncertainty(models, packed, rows, k=20, rate=rate, seed=args.seed)
    header = ["quantity", "mean", "q10", "q50", "q90"]
    return header, [["q_std"] + _summary(std)], "MC-dropout std of Q", None


def _report_objectives(args, buffer, packed, rows, models):
    w = objective_weights(models, packed, rows)
    intent = packed.x[rows, 1]
    segments = [("all", np.ones(len(rows), dtype=bool)), ("low_intent", intent < INTENT_LOW),
                ("high_intent", intent > INTENT_HIGH)]
    table = [[name, int(mask.sum())] + [float(v) for v in w[mask].mean(axis=0)]
             for name, mask in segments if mask.any()]
    header = ["segment", "rows"] + [f"w_{o}" for o in OBJECTIVES]
    series = {o: [r[2 + i] for r in table] for i, o in enumerate(OBJECTIVES)}
    return header, table, "mean decomposition weights", ([r[0] for r in table], series)


def _report_preferences(args, buffer, packed, rows, models):
    prefs = preference_fractions(models, packed, rows, args.seed)
    table = [[f"policy{p}", float(f)] for p, f in enumerate(prefs)]
    return ["policy", "fraction"], table, "argmax-Q preference by expert", None


def _report_action_disparity(args, buffer, packed, rows, models):
    acts = policy_actions(models, packed, rows)
    table = [[f"policy{p}-policy{q}", float(np.abs(acts[p] - acts[q]).sum(axis=1).mean())]
             for p, q in combinations(range(len(acts)), 2)]
    return ["pair", "mean_l1"], table, "expert action disparity on matched histories", None


REPORT_FNS = {
    "disparity": _report_disparity, "clusters": _report_clusters, "balance": _report_balance,
    "q_spread": _report_q_spread, "uncertainty": _report_uncertainty, "objectives": _report_objectives,
    "preferences": _report_preferences, "action_disparity": _report_action_disparity,
}


def cmd_diag(args) -> None:
    models, cfg = None, TrainConfig()
    if args.checkpoint:
        models, cfg = models_from_checkpoint(load_checkpoint(args.checkpoint))
    elif args.report not in BUFFER_ONLY:
        raise UsageError(f"report {args.report} needs --checkpoint")
    buffer = _load_buffer(args.buffer)
    packed, rows = _eval_rows(args, cfg, buffer)
    fn = REPORT_FNS[args.report]
    if args.report == "uncertainty":
        header, table, title, plot = fn(args, buffer, packed, rows, models, cfg)
    else:
        header, table, title, plot = fn(args, buffer, packed, rows, models)
    labels, series = plot if plot else (None, None)
    tsv, _ = write_report(args.out, args.report, header, table, title, labels=labels, series=series)
    print(tsv)


def cmd_ablate(args) -> None:
    cfg, buffer = _train_inputs(args)
    cache = RunCache()
    if args.which == "exploration":
        rows = exploration_curve(buffer, cfg, seed=args.seed, cache=cache)
        table = [[r["fraction"], r["q_on"], r["q_off"]] for r in rows]
        header = ["fraction", "q_on", "q_off"]
        plot = ([f"{r['fraction']:.3g}" for r in rows],
                {"q_on": [r["q_on"] for r in rows], "q_off": [r["q_off"] for r in rows]})
        title = "normalised final Q with and without exploration"
    else:
        res = ablate(buffer, cfg, args.which, args.seed, cache)
        header = ["which", "q_full", "q_ablated", "drop"]
        table = [[res["which"], res["q_full"], res["q_ablated"], res["drop"]]]
        plot = (["full", args.which], {"q": [res["q_full"], res["q_ablated"]]})
        title = f"ablation {args.which}"
    tsv, _ = write_report(args.out, f"ablate_{args.which}", header, table, title,
                          labels=plot[0], series=plot[1])
    print(tsv)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "diag": cmd_diag,
            "ablate": cmd_ablate}


def _reason(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"error: {_reason(exc)}\n")
        return 1
    except NumericalAbort as exc:
        sys.stderr.write(f"error: {_reason(exc)}\n")
        return 3
    except (ConfigError, DataError, BufferFormatError, CheckpointError) as exc:
        sys.stderr.write(f"error: {_reason(exc)}\n")
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
