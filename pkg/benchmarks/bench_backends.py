"""Compare the compiled and pure-numpy kernel backends.

Times the three kernels in isolation and one full training step of the
toy network, then checks that both backends produce the same numbers.

    python benchmarks/bench_backends.py [--repeats N]
"""
import argparse
import timeit

import numpy as np
from threadpoolctl import threadpool_limits

from derainnet import numerics
from derainnet.network import init_params, sgd_step


def cases(rng):
    x = rng.random((16, 32, 32, 3))
    feats = rng.random((16, 25, 25, 16))
    cols = rng.random((16 * 22 * 22, 4 * 4 * 16))
    img = rng.random((500, 500, 3))
    params = init_params(8, 1, 4, 16, 16, scheme="fan_in")
    batch = (rng.normal(0, 0.05, (16, 32, 32, 3)), rng.normal(0, 0.05, (16, 22, 22, 3)))
    return {
        "im2col 16x32x32x3, 8x8": lambda k: k.im2col(x, 8, 8),
        "col2im 16x25x25x16, 4x4": lambda k: k.col2im(cols, 16, 25, 25, 16, 4, 4),
        "box_mean 500x500x3, r=15": lambda k: k.box_mean(img, 15),
        "train step (8-1-4, w16, b16)": lambda k: sgd_step(params, batch, 1e-5),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    backends = numerics.available_backends()
    if "compiled" not in backends:
        print("compiled kernels are not built; only the python backend is available")
    rng = np.random.default_rng(0)
    work = cases(rng)
    previous = numerics.current_backend()
    timings = {}
    outputs = {}
    with threadpool_limits(1):
        for name in backends:
            numerics.set_backend(name)
            kernels = numerics._k
            for label, fn in work.items():
                fn(kernels)
                t = min(timeit.repeat(lambda: fn(kernels), number=1, repeat=args.repeats))
                timings[(label, name)] = t
                outputs[(label, name)] = fn(kernels)
    numerics.set_backend(previous)

    print(f"{'case':<32}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for label in work:
        row = f"{label:<32}" + "".join(f"{timings[(label, b)] * 1e3:10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"  {timings[(label, 'python')] / timings[(label, 'compiled')]:9.2f}x"
        print(row)
    if len(backends) == 2:
        for label in list(work)[:3]:
            diff = np.abs(outputs[(label, "compiled")] - outputs[(label, "python")]).max()
            print(f"max |compiled - python| for {label}: {diff:.2e}")


if __name__ == "__main__":
    main()
