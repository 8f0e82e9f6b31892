"""Compare the compiled kernels against the numpy fallback.

Times each kernel on a batch shaped like a real training batch, then a full
encode + backward pass with each backend swapped in.

    python benchmarks/bench_kernels.py --batch 160 --repeat 5
"""
import argparse
import timeit

import numpy as np

from pcnnrank import _pykernels, encoder, kernels
from pcnnrank.model import ModelShape, init_params

try:
    from pcnnrank import _ckernels
except ImportError:
    _ckernels = None

NAMES = ("gather_windows", "scatter_windows", "pool_forward", "pool_backward")


def make_batch(rng, n_sent, shape, min_len=10, max_len=60):
    grids, positions = [], []
    for _ in range(n_sent):
        n = int(rng.integers(min_len, max_len + 1))
        h, t = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        g = np.empty((n, 3), dtype=np.int64)
        g[:, 0] = rng.integers(1, shape.vocab_size, n)
        c = shape.pos_clip
        g[:, 1] = np.clip(np.arange(n) - h, -c, c) + c
        g[:, 2] = np.clip(np.arange(n) - t, -c, c) + c
        grids.append(g)
        positions.append((h, t))
    return grids, np.array(positions, dtype=np.int64)


def use(module):
    for name in NAMES:
        setattr(kernels, name, getattr(module, name))


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--batch", type=int, default=160, help="sentences per batch")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    shape = ModelShape(vocab_size=5000, n_relations=53)
    model = init_params(shape, args.seed)
    rng = np.random.default_rng(args.seed)
    grids, positions = make_batch(rng, args.batch, shape)

    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    if _ckernels is None:
        print("compiled kernels not built; timing the numpy fallback only")

    # kernel inputs taken from a real forward pass
    use(_pykernels)
    enc = encoder.encode(grids, positions, model.enc, train=False)
    c = enc.cache
    grad_z = rng.normal(size=c["arg"].shape)
    grad_cols = rng.normal(size=(len(c["starts"]), shape.window * shape.d_token))
    e = model.enc
    Q = np.hstack([e.V[c["ids_w"]], e.P_head[c["ids_h"]], e.P_tail[c["ids_t"]]])

    results = {}
    for label, mod in backends:
        t = {}
        t["gather_windows"] = best(lambda: mod.gather_windows(Q, c["starts"], shape.window), args.repeat)
        t["scatter_windows"] = best(lambda: mod.scatter_windows(grad_cols, c["starts"], shape.window, c["rows"]),
                                    args.repeat)
        t["pool_forward"] = best(lambda: mod.pool_forward(c["m"], c["offsets"], c["lengths"], c["p1"], c["p2"]),
                                 args.repeat)
        t["pool_backward"] = best(lambda: mod.pool_backward(grad_z, c["arg"], c["m"].shape[0]), args.repeat)

        use(mod)

        def step():
            out = encoder.encode(grids, positions, model.enc, train=False)
            encoder.encoder_backward(np.ones_like(out.s), out.cache, model.enc)

        t["encode + backward"] = best(step, args.repeat)
        results[label] = t
    use(kernels.impl)

    rows = list(results["python"])
    print(f"batch of {args.batch} sentences, best of {args.repeat}, milliseconds")
    header = f"{'':20s}" + "".join(f"{b:>10s}" for b in results) + ("   speedup" if len(results) > 1 else "")
    print(header)
    for r in rows:
        line = f"{r:20s}" + "".join(f"{1e3 * results[b][r]:10.2f}" for b in results)
        if len(results) > 1:
            line += f"{results['python'][r] / results['cython'][r]:9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
