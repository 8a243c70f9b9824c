"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_backends.py --sizes 50,200,1000 --dim 512
"""
import argparse
import timeit

import numpy as np

from nodule_reid import kernels


def median_seconds(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return float(np.median(timeit.repeat(fn, number=number, repeat=repeat))) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="50,200,1000")
    parser.add_argument("--dim", type=int, default=512)
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = {name: kernels.get_backend(name) for name in kernels.available_backends()}
    if "compiled" not in backends:
        print("compiled backend not built; only the python fallback is timed")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'n':>6}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        X = rng.normal(size=(n, args.dim))
        D = kernels.get_backend("python").pairwise_distances(X, kernels.COSINE)
        tau = float(np.quantile(D, 0.05))
        order = rng.permutation(n).astype(np.int64)
        cases = {
            "distances/cosine": lambda b: b.pairwise_distances(X, kernels.COSINE),
            "distances/euclidean": lambda b: b.pairwise_distances(X, kernels.EUCLIDEAN),
            "components": lambda b: b.threshold_components(D, tau),
            "literal": lambda b: b.threshold_literal(D, tau, order),
        }
        for label, case in cases.items():
            times = {name: median_seconds(lambda b=b: case(b), args.repeat) for name, b in backends.items()}
            line = f"{label:<22}{n:>6}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times.values())
            if "compiled" in times:
                line += f"{times['python'] / times['compiled']:>9.1f}x"
            print(line)


if __name__ == "__main__":
    main()
