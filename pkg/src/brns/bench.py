"""Novelty-cost scaling benchmark.

Times one generation of novelty computation (scoring ``mu + lambda``
candidates plus the estimator update) with a monotonic clock. Environment
rollouts are excluded, and warmup iterations are discarded.
"""
from __future__ import annotations

import time

import numpy as np

from .core import make_rng
from .novelty_archive import ArchiveNovelty
from .novelty_brns import BRNSNovelty

BENCH_COLUMNS = ("method", "dim", "archive_size", "mean_ms", "std_ms", "median_ms", "trials")
GENERATION_COLUMNS = ("method", "dim", "generation", "mean_ms", "std_ms", "median_ms", "trials")


def _time(fn, trials, warmup):
    for _ in range(warmup):
        fn()
    out = np.empty(trials)
    for t in range(trials):
        start = time.perf_counter()
        fn()
        out[t] = (time.perf_counter() - start) * 1e3
    return out


def _row(method, dim, key, samples):
    return (method, dim, key, float(samples.mean()), float(samples.std(ddof=1) if len(samples) > 1 else 0.0),
            float(np.median(samples)), len(samples))


def archive_generation_cost(dim, archive_size, population=100, trials=30, warmup=5, k=15, seed=0):
    """Per-trial milliseconds to score ``2 * population`` candidates and maintain the archive."""
    rng = make_rng(seed, f"bench-archive-{dim}-{archive_size}")
    est = ArchiveNovelty(k=k, max_size=archive_size, random_state=seed).initialize(dim)
    est.archive_.entries = rng.random((archive_size, dim))
    candidates = rng.random((2 * population, dim))
    archive = est.archive_

    def step():
        est.archive_ = archive
        scores = est.score_samples(candidates)
        est.partial_fit(candidates[population:], novelty=scores[population:])

    return _time(step, trials, warmup)


def brns_generation_cost(dim, population=100, trials=30, warmup=5, seed=0, generations=0, params=None):
    """Per-trial milliseconds of BR-NS scoring plus one training update.

    ``generations`` first advances the estimator through that many
    training rounds, so its cost at different search ages can be compared.
    """
    rng = make_rng(seed, f"bench-brns-{dim}")
    est = BRNSNovelty(random_state=seed, **(params or {})).initialize(dim)
    for _ in range(generations):
        est.partial_fit(rng.random((population, dim)))
    candidates = rng.random((2 * population, dim))
    pair = est.pair_

    def step():
        est.pair_ = pair
        est.score_samples(candidates)
        est.partial_fit(candidates[population:])

    return _time(step, trials, warmup)


def run_bench(archive_sizes=(1000, 2500, 5000, 10000), dims=(2, 8, 16, 32), population=100, trials=30,
              warmup=5, k=15, brns_generations=(5, 500), seed=0, brns_params=None):
    """Return ``(size_rows, generation_rows)`` for both estimators.

    BR-NS has no archive, so its cost is measured once per dim under each
    archive-size label to keep the table rectangular.
    """
    rows, gen_rows = [], []
    for dim in dims:
        for size in archive_sizes:
            rows.append(_row("archive", dim, size,
                             archive_generation_cost(dim, size, population, trials, warmup, k, seed)))
            rows.append(_row("brns", dim, size,
                             brns_generation_cost(dim, population, trials, warmup, seed, params=brns_params)))
        for g in brns_generations:
            gen_rows.append(_row("brns", dim, g, brns_generation_cost(dim, population, trials, warmup, seed,
                                                                      generations=g, params=brns_params)))
    return rows, gen_rows
