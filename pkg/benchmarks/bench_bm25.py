#!/usr/bin/env python3
"""Compare the BM25 scoring backends on a synthetic corpus.

Times the two hot paths over identical inputs for each available backend
(numba kernels vs the pure-numpy fallback): top-k retrieval and the
single-term max-score probes that dominate historical query expansion.

    python3 benchmarks/bench_bm25.py --docs 20000 --queries 200
"""

import argparse
import time

import numpy as np

from convpr import _bm25
from convpr.corpus import Passage
from convpr.index import Bm25Params, Searcher, build_index


def synthetic_passages(rng, n_docs, vocab_size, doc_len):
    # skewed term ids so document frequencies span rare to ubiquitous
    for i in range(n_docs):
        length = max(1, int(rng.normal(doc_len, doc_len / 4)))
        ids = (vocab_size * rng.random(length) ** 3).astype(np.int64)
        yield Passage(f"d{i:07d}", " ".join(f"t{t}" for t in ids))


def run(args):
    rng = np.random.default_rng(args.seed)
    print(f"building index: {args.docs} docs, vocab {args.vocab}, ~{args.doc_len} tokens/doc")
    started = time.perf_counter()
    index = build_index(synthetic_passages(rng, args.docs, args.vocab, args.doc_len))
    print(f"  built in {time.perf_counter() - started:.1f}s "
          f"({index.vocab_size} terms, avg len {index.avg_doc_len:.1f})")

    queries = [
        [f"t{int(args.vocab * rng.random() ** 3)}" for _ in range(args.terms)]
        for _ in range(args.queries)
    ]
    probe_terms = [f"t{int(args.vocab * rng.random() ** 3)}" for _ in range(args.ke_terms)]

    results = {}
    for backend in _bm25.available_backends():
        _bm25.set_backend(backend)
        searcher = Searcher(index, Bm25Params())
        for q in queries[:3]:  # warm up (JIT compile on the numba path)
            searcher.search(q, k=args.k)

        started = time.perf_counter()
        hits = 0
        for q in queries:
            hits += len(searcher.search(q, k=args.k))
        search_s = time.perf_counter() - started

        searcher = Searcher(index, Bm25Params())  # fresh max-score cache
        started = time.perf_counter()
        total = 0.0
        for t in probe_terms:
            total += searcher.max_score_term(t)
        ke_s = time.perf_counter() - started

        results[backend] = (search_s, ke_s)
        print(f"\n[{backend}]")
        print(f"  search: {args.queries} queries in {search_s:.3f}s "
              f"({1e3 * search_s / args.queries:.2f} ms/query, {hits} total hits)")
        print(f"  ke probes: {args.ke_terms} terms in {ke_s:.3f}s "
              f"({1e6 * ke_s / args.ke_terms:.1f} us/term, checksum {total:.2f})")

    if len(results) == 2:
        np_search, np_ke = results["numpy"]
        nb_search, nb_ke = results["numba"]
        print(f"\nnumba speedup: search {np_search / nb_search:.2f}x, ke {np_ke / nb_ke:.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--docs", type=int, default=20000)
    parser.add_argument("--vocab", type=int, default=5000)
    parser.add_argument("--doc-len", type=int, default=60)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--terms", type=int, default=6, help="tokens per query")
    parser.add_argument("--k", type=int, default=1000)
    parser.add_argument("--ke-terms", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    run(parser.parse_args())


if __name__ == "__main__":
    main()
