"""Time the numba kernels against the numpy/scipy fallbacks.

    python benchmarks/bench_kernels.py [--n 2000000] [--repeat 5]

Each kernel runs once per backend to warm up (and JIT-compile), then the
best of ``--repeat`` timings is reported along with the largest difference
between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from emshield import _kernels, devices


def _cases(n: int, rate: float):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n) * 1e-3
    amp = devices.DiffAmpModel(gain=150.0, f_max=10e3, a2=5.0)
    sos_par = devices.pole_sos(amp.f_parasitic, rate)
    sos_hp = devices.highpass_sos(amp.f_max, rate, amp.feedback_exponent)
    sos_lp = devices.lowpass_sos(amp.f_max, rate)
    noise = rng.standard_normal(n // 10 + 2) * 1e-4
    square = np.sign(np.sin(np.arange(n) * 2e-4))
    mask = np.abs(x) > 2e-3
    cyc = np.array([5e3, 6e3, 300e6, 300.006e6]) / rate
    return {
        "sosfilt": lambda: _kernels.sosfilt(sos_lp, x),
        "rectifier_amp": lambda: _kernels.rectifier_amp(x, sos_par, sos_hp, sos_lp, 150.0, 5.0,
                                                        noise, 10.0, 4.9),
        "schmitt": lambda: _kernels.schmitt(square, -0.5, 0.5),
        "runs": lambda: _kernels.runs(mask, 3),
        "tones": lambda: _kernels.tones(cyc, np.ones(4), np.zeros(4), n),
    }


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _flatten(out):
    if isinstance(out, tuple):
        return np.concatenate([np.asarray(o, dtype=np.float64) for o in out])
    return np.asarray(out, dtype=np.float64)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rate", type=float, default=1e9)
    args = ap.parse_args()
    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    cases = _cases(args.n, args.rate)
    print(f"n = {args.n:,} samples, best of {args.repeat}")
    print(f"{'kernel':<15}{'numba ms':>11}{'numpy ms':>11}{'speedup':>9}{'max |diff|':>13}")
    previous = _kernels.active_backend()
    try:
        for name, fn in cases.items():
            times, outs = {}, {}
            for backend in ("numba", "numpy"):
                _kernels.set_backend(backend)
                outs[backend] = _flatten(fn())
                times[backend] = _best(fn, args.repeat)
            diff = float(np.max(np.abs(outs["numba"] - outs["numpy"]))) if outs["numba"].size else 0.0
            print(f"{name:<15}{times['numba'] * 1e3:>11.2f}{times['numpy'] * 1e3:>11.2f}"
                  f"{times['numpy'] / times['numba']:>8.1f}x{diff:>13.2e}")
    finally:
        _kernels.set_backend(previous)


if __name__ == "__main__":
    main()
