"""Time the GIS expectation kernel: compiled extension vs numpy fallback.

    python3 benchmarks/bench_gis.py [--sentences N] [--repeat R] [--threads T]

Builds predictor events from a planted synthetic corpus, then times one
expectation pass per backend and a short training run.
"""

import argparse
import time

import numpy as np

from slm import kernels
from slm.lm import NAMED_SCHEMES, default_templates
from slm.maxent import _Problem, build_model, parse_templates, train_gis
from slm.oracle import synth_corpus_gen
from slm.treebank import extract_events


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sentences", type=int, default=5000)
    ap.add_argument("--scheme", default="W")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--iters", type=int, default=20)
    args = ap.parse_args(argv)

    scheme = NAMED_SCHEMES[args.scheme]
    corpus = synth_corpus_gen(0, args.sentences)
    events = [e for s in corpus for e in extract_events(s.tree, scheme) if e.kind == "P"]
    model = build_model(events, parse_templates(default_templates(scheme)), scheme=args.scheme)
    prob = _Problem(model, events)
    print("events %d  contexts %d  features %d  outcomes %d  C %d"
          % (prob.N, prob.nctx, prob.nfeat, prob.V, prob.C))

    backends = [("python", kernels.python_accumulate_shard)]
    if kernels.compiled_accumulate_shard is not None:
        backends.insert(0, ("cython", kernels.compiled_accumulate_shard))
    else:
        print("compiled extension not built; timing the fallback only")

    w = np.random.default_rng(0).normal(size=prob.nfeat)
    results = {}
    for name, fn in backends:
        per_pass = best_of(lambda: prob.expectations(w, args.threads, fn), args.repeat)
        t0 = time.perf_counter()
        train_gis(model, events, max_iters=args.iters, threads=args.threads, backend=fn)
        train = time.perf_counter() - t0
        results[name] = (per_pass, train)
        print("%-7s expectation pass %8.2f ms   %d GIS iterations %7.2f s" % (name, per_pass * 1e3, args.iters, train))
    if len(results) == 2:
        print("speedup per pass %.1fx" % (results["python"][0] / results["cython"][0]))


if __name__ == "__main__":
    main()
