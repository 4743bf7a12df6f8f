"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--size 224] [--channels 16] [--repeat 5]

Times each kernel, one conv layer forward+backward and one training step of
lightffdnet-v2, once per available backend, and checks that both backends
return identical bytes.
"""
import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from lightffd import kernels
from lightffd import layers as L
from lightffd.models import build_arch, init_params, model_backward, model_forward
from lightffd.optim import AdamState, Hyperparams, adam_step, softmax_ce_grad


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(size, channels, batch):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((channels, size, size)).astype(np.float32)
    cols = rng.standard_normal((channels * 9, size * size)).astype(np.float32)
    xb = rng.standard_normal((batch, channels, size, size)).astype(np.float32)
    pooled, idx = kernels.maxpool2x2_forward(xb)
    d_pool = rng.standard_normal(pooled.shape).astype(np.float32)
    conv = L.ConvParams(rng.standard_normal((channels, channels, 3, 3)).astype(np.float32),
                        np.zeros(channels, np.float32))
    d_conv = rng.standard_normal(xb.shape).astype(np.float32)

    def conv_step():
        _, cache = L.conv2d_forward(xb, conv)
        return L.conv2d_backward(cache, d_conv)[0]

    spec = build_arch("v2", input_size=min(size, 64))
    imgs = rng.random((batch, 3, spec.input_size, spec.input_size), dtype=np.float32) * 255
    labels = [i % 2 for i in range(batch)]
    hyper = Hyperparams()

    def train_step():
        model = init_params(spec, 0)
        state = AdamState.zeros_like(model.params)
        probs, caches = model_forward(model, imgs, "train")
        adam_step(model.params, model_backward(model, caches, softmax_ce_grad(probs, labels)), state, hyper)
        return next(v for k, v in model.params.items() if k.endswith("fc.weight"))

    return {
        f"im2col3x3 {channels}x{size}x{size}": lambda: kernels.im2col3x3(x),
        f"col2im3x3 {channels}x{size}x{size}": lambda: kernels.col2im3x3(cols, size, size),
        f"maxpool fwd {batch}x{channels}x{size}x{size}": lambda: kernels.maxpool2x2_forward(xb)[0],
        f"maxpool bwd {batch}x{channels}x{size}x{size}": lambda: kernels.maxpool2x2_backward(d_pool, idx, xb.shape),
        f"conv fwd+bwd {batch}x{channels}x{size}x{size}": conv_step,
        f"v2 train step {batch}x3x{spec.input_size}": train_step,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=112)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    results = {}
    with threadpool_limits(limits=1):
        for name in backends:
            kernels.set_backend(name)
            for label, fn in cases(args.size, args.channels, args.batch).items():
                results[label, name] = best_of(fn, args.repeat)
    kernels.set_backend("auto")

    print(f"{'case':<34}" + "".join(f"{b + ' ms':>14}" for b in backends) + f"{'speedup':>10}  same")
    for label in dict.fromkeys(k[0] for k in results):
        row = [results[label, b] for b in backends]
        line = f"{label:<34}" + "".join(f"{t * 1e3:>14.2f}" for t, _ in row)
        if len(row) == 2:
            (tc, oc), (tp, op) = row  # sorted: compiled, python
            same = np.asarray(oc).tobytes() == np.asarray(op).tobytes()
            line += f"{tp / tc:>9.1f}x  {'yes' if same else 'NO'}"
        print(line)
    if len(backends) == 1:
        print("compiled extension not built; only the python backend was timed")


if __name__ == "__main__":
    main()
