"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--frames 3000] [--repeat 3]

Times token-passing decode on a synthetic negative stream and the
forward-backward loss on a keyword positive, and checks both backends
agree on the results.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ntckws import kernels
from ntckws.decoder import DecoderConfig, decode_utterance
from ntckws.emissions import augment_wildcards
from ntckws.graph import Lexicon, build_lexicon_fst, build_search_space, build_token_fst
from ntckws.loss import PenaltySchedule, ntc_loss
from ntckws.simulation import DEFAULT_KEYWORD, DEFAULT_LEVELS, default_vocabulary, make_negative, make_positive


def _best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=3000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    vocab = default_vocabulary()
    lex = Lexicon.phone_lexicon(vocab)
    space = build_search_space(DEFAULT_KEYWORD, lex, vocab, wildcards=True)
    stream = augment_wildcards(make_negative(vocab, args.frames, seed=7), vocab)
    pos, _ = make_positive(vocab, DEFAULT_LEVELS[1], seed=7)
    wv = vocab.with_wildcards()
    t, lx = build_token_fst(wv), build_lexicon_fst(lex, wv)
    sched = PenaltySchedule()

    rows = []
    results = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        dt_dec, dets = _best_of(lambda: decode_utterance(stream, space, DecoderConfig(), "bench"), args.repeat)
        dt_loss, res = _best_of(lambda: ntc_loss(pos, list(DEFAULT_KEYWORD), t, lx, sched, 0, gradient=True),
                                args.repeat)
        results[name] = (dets, res)
        rows.append((name, args.frames / dt_dec, dt_loss * 1e3))

    print(f"{'backend':<10} {'decode frames/s':>16} {'loss+grad+graph ms':>20}")
    for name, fps, ms in rows:
        print(f"{name:<10} {fps:>16.0f} {ms:>20.2f}")
    if len(rows) == 2:
        print(f"decode speed-up: {rows[1][1] / rows[0][1]:.1f}x, loss speed-up: {rows[0][2] / rows[1][2]:.1f}x")
        (d0, r0), (d1, r1) = results["python"], results["compiled"]
        same = d0 == d1 and abs(r0.loss - r1.loss) < 1e-9 and np.allclose(r0.gradient, r1.gradient, atol=1e-9)
        print("backends agree:", same)
    else:
        print("compiled backend not built; only the pure-Python numbers are shown")


if __name__ == "__main__":
    main()
