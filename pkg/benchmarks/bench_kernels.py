"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Each kernel runs on the shapes a 64x64 training batch produces, then a full
forward+backward step of the network is timed under both backends.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from amsn import kernels
from amsn import tensor as T
from amsn.model import MSN

# (label, batch, channels, height, width, kernel, stride, pad)
CONV_SHAPES = [
    ("stage1 3x3/2", 8, 3, 64, 64, 3, 2, 1),
    ("stage2 3x3/1", 8, 32, 16, 16, 3, 1, 1),
    ("dfm 3x3/1", 8, 64, 8, 8, 3, 1, 1),
]
UPSAMPLE_SHAPES = [
    ("S4 -> 64", 8, 1, 4, 4, 64, 64),
    ("dec 16 -> 32", 8, 32, 16, 16, 32, 32),
]


def _time(fn, repeat):
    fn()  # warm-up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(rng):
    for label, b, c, h, w, k, s, p in CONV_SHAPES:
        x = rng.standard_normal((b, c, h, w)).astype(np.float32)
        cols = kernels.im2col(x, k, k, s, p)
        yield f"im2col  {label}", lambda x=x, k=k, s=s, p=p: kernels.im2col(x, k, k, s, p)
        yield f"col2im  {label}", lambda cols=cols, sh=x.shape, k=k, s=s, p=p: kernels.col2im(cols, sh, k, k, s, p)
    for label, b, c, h, w, oh, ow in UPSAMPLE_SHAPES:
        x = rng.standard_normal((b, c, h, w)).astype(np.float32)
        g = rng.standard_normal((b, c, oh, ow)).astype(np.float32)
        yield f"upsample     {label}", lambda x=x, oh=oh, ow=ow: kernels.upsample_bilinear(x, oh, ow)
        yield f"upsample_bwd {label}", lambda g=g, h=h, w=w: kernels.upsample_bilinear_backward(g, h, w)


def model_step(rng):
    model = MSN.initialize(seed=0)
    inputs = {m: T.Tensor(rng.standard_normal((4, 3, 64, 64)).astype(np.float32)) for m in ("RGB", "T")}
    gt = T.Tensor((rng.random((4, 1, 64, 64)) > 0.7).astype(np.float32))

    def step():
        model.params.zero_grad()
        out = model.forward(inputs)
        model.losses(out, gt).l_total.backward()
    return step


def run(repeat):
    rows = []
    backends = sorted(kernels.BACKENDS)
    rng = np.random.default_rng(0)
    cases = list(kernel_cases(rng)) + [("train step RGB-T, B=4, 64x64", model_step(rng))]
    for label, fn in cases:
        times = {}
        for name in backends:
            previous = kernels.use_backend(name)
            try:
                times[name] = _time(fn, repeat if "train step" not in label else max(3, repeat // 5))
            finally:
                kernels.use_backend(previous)
        rows.append({"case": label, **{f"{k}_ms": v * 1e3 for k, v in times.items()}})
    return backends, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    backends, rows = run(args.repeat)
    head = f"{'case':34s}" + "".join(f"{b + ' ms':>14s}" for b in backends)
    if "compiled" in backends:
        head += f"{'speedup':>10s}"
    print(head)
    for r in rows:
        line = f"{r['case']:34s}" + "".join(f"{r[b + '_ms']:14.3f}" for b in backends)
        if "compiled" in backends:
            line += f"{r['python_ms'] / r['compiled_ms']:9.2f}x"
        print(line)
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback was timed", file=sys.stderr)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
