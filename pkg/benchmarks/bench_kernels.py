"""Compare the compiled and numpy LSTM sequence kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--out results.tsv]
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from fastq.ndmath import kernels

SHAPES = [  # (batch, steps, inputs, hidden): PE pre-training, training batch, evaluation pass
    (256, 10, 18, 32),
    (32, 10, 18, 32),
    (2000, 10, 18, 32),
]


def case(batch, steps, inputs, hidden, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(batch, steps, inputs))
    mask = np.ones((batch, steps))
    mask[: batch // 4, : steps // 2] = 0.0  # left-padded early-episode windows
    W = rng.normal(scale=0.2, size=(4 * hidden, inputs))
    U = rng.normal(scale=0.2, size=(4 * hidden, hidden))
    b = rng.normal(scale=0.1, size=4 * hidden)
    dh = rng.normal(size=(batch, hidden))
    return x, mask, W, U, b, dh


def time_backend(name, args, repeats):
    x, mask, W, U, b, dh = args
    mod = kernels.BACKENDS[name]

    def fwd_bwd():
        h, cache = mod.lstm_forward(x, mask, W, U, b)
        mod.lstm_backward(dh, cache, False)

    fwd_bwd()
    return min(timeit.repeat(fwd_bwd, number=1, repeat=repeats))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--out", help="optional tsv output")
    args = p.parse_args(argv)
    backends = kernels.available()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available", file=sys.stderr)
    lines = ["batch\tsteps\tinputs\thidden\t" + "\t".join(f"{b}_ms" for b in backends) + "\tspeedup"]
    for shape in SHAPES:
        data = case(*shape)
        ms = {b: 1e3 * time_backend(b, data, args.repeats) for b in backends}
        speed = ms["python"] / ms["compiled"] if "compiled" in ms else float("nan")
        lines.append("\t".join(map(str, shape)) + "\t" + "\t".join(f"{ms[b]:.3f}" for b in backends)
                     + f"\t{speed:.2f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
