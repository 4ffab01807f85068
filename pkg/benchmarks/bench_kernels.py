"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Shapes mimic one training step at the default dimensions: a 16-sentence
batch of 25 tokens through a 300-unit word GRU, ~150 distinct words of up
to 12 characters through an 80-unit character GRU, and a 45-label CRF.
"""
import argparse
import timeit

import numpy as np

from seqtag import kernels
from seqtag.numerics import Rng


def gru_case(rng, B, T, H):
    xs = [np.ascontiguousarray(rng.uniform(-1, 1, (B, T, H))) for _ in range(3)]
    ws = [rng.uniform(-0.1, 0.1, (H, H)) for _ in range(3)]
    lengths = np.array([T - (b % 5) for b in range(B)], dtype=np.int64)
    dh = np.ascontiguousarray(rng.uniform(-1, 1, (B, T, H)))
    return xs, ws, lengths, dh


def bench_gru(mod, case):
    xs, ws, lengths, dh = case
    fwd = mod.gru_forward(*xs, *ws, lengths)
    dws = [np.zeros_like(w) for w in ws]
    mod.gru_backward(*fwd, lengths, *ws, dh, *dws)


def crf_case(rng, B, T, L):
    e = np.ascontiguousarray(rng.uniform(-2, 2, (B, T, L)))
    lengths = np.array([T - (b % 7) for b in range(B)], dtype=np.int64)
    return e, lengths, rng.uniform(-1, 1, (L, L)), rng.uniform(-1, 1, (L,))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = Rng(0)
    cases = {
        "word GRU fwd+bwd (16x25x300)": (bench_gru, gru_case(rng, 16, 25, 300)),
        "char GRU fwd+bwd (150x12x80)": (bench_gru, gru_case(rng, 150, 12, 80)),
        "CRF forward-backward (16x25x45)":
            (lambda m, c: m.crf_forward_backward(*c), crf_case(rng, 16, 25, 45)),
        "CRF viterbi (16x25x45)": (lambda m, c: m.crf_viterbi(*c), crf_case(rng, 16, 25, 45)),
    }
    backends = kernels.available_backends()
    print(f"{'kernel':34s}" + "".join(f"{b.BACKEND:>12s}" for b in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for name, (fn, case) in cases.items():
        times = [min(timeit.repeat(lambda: fn(b, case), number=1, repeat=args.repeat))
                 for b in backends]
        line = f"{name:34s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[1] / times[0]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
