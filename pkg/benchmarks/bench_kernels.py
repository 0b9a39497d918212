"""Compare the compiled and numpy kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes follow one training step of the desk model: the speaker-encoder GRU
and bottleneck LSTM scans (forward and backward) and the deep filter over a
batch of four 31-frame (about half a second) chunks.
"""
import argparse
import time

import numpy as np

from sfpro import kernels


def _inputs(rng):
    t, b = 31, 4
    gru_h, lstm_h = 129, 64
    n, k = 31, 129
    gru = (rng.standard_normal((t, b, 3 * gru_h)), 0.1 * rng.standard_normal((3 * gru_h, gru_h)),
           rng.standard_normal(3 * gru_h), np.zeros((b, gru_h)))
    lstm = (rng.standard_normal((t, b, 4 * lstm_h)), 0.1 * rng.standard_normal((4 * lstm_h, lstm_h)),
            rng.standard_normal(4 * lstm_h), np.zeros((b, lstm_h)))
    df = tuple(rng.standard_normal(s) for s in [(b, n, k, 5, 3)] * 2 + [(b, n, k)] * 2)
    return gru, lstm, df


def _cases(impl, gru, lstm, df):
    gx, w, bias, h0 = gru
    hs, r, z, nn, ghn = impl.gru_forward(gx, w, bias, h0)
    lgx, lw, lb, lh0 = lstm
    lhs, lcs, gates = impl.lstm_forward(lgx, lw, lb, lh0, lh0)
    yr, yi = impl.deep_filter_forward(*df, 2, 1)
    return {
        "gru_forward": lambda: impl.gru_forward(gx, w, bias, h0),
        "gru_backward": lambda: impl.gru_backward(hs, w, h0, hs, r, z, nn, ghn),
        "lstm_forward": lambda: impl.lstm_forward(lgx, lw, lb, lh0, lh0),
        "lstm_backward": lambda: impl.lstm_backward(lhs, lw, lh0, lh0, lhs, lcs, gates),
        "deep_filter_forward": lambda: impl.deep_filter_forward(*df, 2, 1),
        "deep_filter_backward": lambda: impl.deep_filter_backward(yr, yi, *df, 2, 1),
    }


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = kernels.available()
    rng = np.random.default_rng(0)
    data = _inputs(rng)
    results = {}
    for name in backends:
        impl = kernels._load(name)
        results[name] = {case: _best(fn, args.repeat) for case, fn in _cases(impl, *data).items()}

    cols = backends + (["speedup"] if len(backends) == 2 else [])
    print(f"{'kernel':<22}" + "".join(f"{c:>12}" for c in cols))
    for case in results["python"]:
        row = [results[b][case] * 1e3 for b in backends]
        line = f"{case:<22}" + "".join(f"{v:>10.3f}ms" for v in row)
        if len(backends) == 2:
            line += f"{row[1] / row[0]:>11.1f}x"
        print(line)
    if len(backends) == 1:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
