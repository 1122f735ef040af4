"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --m 300 --repeat 3

Both backends run on the same synthetic canonical forms; results are
checked for equality before timings are reported.
"""
import argparse
import time

import numpy as np

from swiftnorm import kernels
from swiftnorm.cluster import gate_matrix
from swiftnorm.preprocess import build_corpus
from swiftnorm.synth import SynthConfig, generate


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m", type=int, default=300, help="number of canonical forms")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args(argv)

    res = generate(SynthConfig(seed=args.seed, n_entities=max(50, args.m // 2)))
    corpus = build_corpus(res.raw_values)
    corpus = corpus.subset(range(min(args.m, len(corpus))))
    texts = corpus.sorted_texts
    reps = [f.rep for f in corpus.forms]
    print(f"m={len(texts)} canonical forms, mean length "
          f"{np.mean([len(t) for t in texts]):.1f}, backends: {kernels.available_backends()}")

    original, results = kernels.backend, {}
    for name in kernels.available_backends():
        be = kernels.get_backend(name)
        kernels.backend = be  # gate_matrix goes through the module-level backend
        rows = {}
        rows["similarity_matrix"] = best_of(lambda: be.similarity_matrix(texts, args.threads),
                                            args.repeat)
        S = rows["similarity_matrix"][1]
        rows["euclidean_distances"] = best_of(lambda: be.euclidean_distances(S, args.threads),
                                              args.repeat)
        D = rows["euclidean_distances"][1]
        rows["gate_matrix"] = best_of(lambda: gate_matrix(reps, 0.75, args.threads), args.repeat)
        G = rows["gate_matrix"][1]
        rows["agglomerate"] = best_of(lambda: be.agglomerate(D, G), args.repeat)
        results[name] = rows
    kernels.backend = original

    names = list(results)
    header = f"{'kernel':<22}" + "".join(f"{n + ' (s)':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for kernel in results[names[0]]:
        line = f"{kernel:<22}" + "".join(f"{results[n][kernel][0]:>16.4f}" for n in names)
        if len(names) == 2:
            a, b = (results[n][kernel] for n in names)
            if kernel == "agglomerate":
                same = np.array_equal(a[1][0], b[1][0])
            else:
                same = np.allclose(a[1], b[1], rtol=0, atol=1e-12)
            slow, fast = (a[0], b[0]) if names[0] == "python" else (b[0], a[0])
            line += f"{slow / fast:>9.1f}x" + ("" if same else "  MISMATCH")
        print(line)


if __name__ == "__main__":
    main()
