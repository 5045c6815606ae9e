"""Time the FFT convolution against direct summation on network-sized layers.

    python benchmarks/conv_bench.py [--batch 4] [--repeat 3]
"""
import argparse
import time

import numpy as np

from melodyid.convnet.layers import conv_direct, conv_forward


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--channels", type=int, default=21)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    c = args.channels
    for name, cin in (("conv1", 1), ("conv2", c)):
        x = rng.standard_normal((128, 64, args.batch, cin)).astype(np.float32)
        w = rng.standard_normal((c, cin, 32, 16)).astype(np.float32)
        b = np.zeros(c, dtype=np.float32)
        t_fft = best_of(lambda: conv_forward(x, w, b), args.repeat)
        t_dir = best_of(lambda: conv_direct(x, w, b), 1)
        err = np.abs(conv_forward(x, w, b)[0] - conv_direct(x, w, b)).max()
        print(f"{name}: fft {t_fft * 1e3:8.1f} ms  direct {t_dir * 1e3:8.1f} ms  "
              f"speedup {t_dir / t_fft:6.1f}x  max abs diff {err:.1e}")


if __name__ == "__main__":
    main()
