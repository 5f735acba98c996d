"""Generational novelty-search loop shared by both novelty estimators."""
from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone

from .core import GenerationRecord, Individual, RunLog, make_rng
from .novelty_archive import ArchiveNovelty
from .novelty_brns import BRNSNovelty

logger = logging.getLogger(__name__)

ESTIMATORS = {"brns": BRNSNovelty, "archive": ArchiveNovelty}


def polynomial_mutation(genotype, eta_m, p_m, bounds, rng):
    """Deb's bounded polynomial mutation.

    Each gene mutates with probability ``p_m``; the perturbation
    distribution is rescaled by the distance to each bound so results stay
    inside ``[lo, hi]``.
    """
    x = np.asarray(genotype, dtype=float)
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), x.shape) for b in bounds)
    mask = rng.random(x.shape) < p_m
    u = rng.random(x.shape)
    span = hi - lo
    d1 = (x - lo) / span
    d2 = (hi - x) / span
    power = 1.0 / (eta_m + 1.0)
    with np.errstate(invalid="ignore"):
        left = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta_m + 1.0)) ** power - 1.0
        right = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta_m + 1.0)) ** power
    deltaq = np.where(u <= 0.5, left, right)
    out = np.where(mask, x + deltaq * span, x)
    return np.clip(out, lo, hi)


def generate_offspring(pop, lambda_, eta_m, p_m, bounds, rng, ids):
    """``lambda_`` mutated children of uniformly chosen parents; ``ids`` yields fresh ids."""
    if not pop:
        raise ValueError("cannot breed from an empty population")
    parents = rng.integers(0, len(pop), size=lambda_)
    children = []
    for p in parents:
        parent = pop[p]
        genotype = polynomial_mutation(parent.genotype, eta_m, p_m, bounds, rng)
        children.append(Individual(id=next(ids), genotype=genotype, age=0, parent_id=parent.id))
    return children


def select_most_novel(pop, offspring, mu):
    """Keep the ``mu`` most novel of ``pop + offspring``; ties go to the lower id.

    Survivors coming from ``pop`` age by one generation; selected offspring
    keep age 0.
    """
    candidates = list(pop) + list(offspring)
    if len(candidates) < mu:
        raise ValueError(f"need at least {mu} candidates, got {len(candidates)}")
    if any(c.novelty is None for c in candidates):
        raise ValueError("every candidate needs a novelty score before selection")
    old = {c.id for c in pop}
    ranked = sorted(candidates, key=lambda c: (-c.novelty, c.id))[:mu]
    for c in ranked:
        if c.id in old:
            c.age += 1
    return ranked


def success_check(behavior, goal, radius):
    """Closed-ball test ``||behavior - goal|| <= radius``."""
    return bool(np.linalg.norm(np.asarray(behavior, dtype=float) - np.asarray(goal, dtype=float)) <= radius)


@dataclass
class EvolutionConfig:
    estimator: str = "brns"
    mu: int = 100
    lambda_: int = 100
    generations: int = 500
    eta_m: float = 15.0
    p_m: float | None = None
    gene_bounds: tuple = (-1.0, 1.0)
    rescore_parents: bool = True
    snapshot_interval: int = 1
    novelty_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {sorted(ESTIMATORS)}")
        if self.mu < 1 or self.lambda_ < 1 or self.generations < 1:
            raise ValueError("mu, lambda_ and generations must all be >= 1")
        lo, hi = self.gene_bounds
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError("gene bounds must be finite with lo < hi")
        if self.snapshot_interval < 1:
            raise ValueError("snapshot_interval must be >= 1")

    def make_search(self, seed=None):
        return NoveltySearch(
            novelty=ESTIMATORS[self.estimator](**self.novelty_params), mu=self.mu, lambda_=self.lambda_,
            n_generations=self.generations, eta_m=self.eta_m, p_m=self.p_m, gene_bounds=tuple(self.gene_bounds),
            rescore_parents=self.rescore_parents, snapshot_interval=self.snapshot_interval, random_state=seed)


class NoveltySearch(BaseEstimator):
    """Elitist (mu + lambda) novelty search.

    ``novelty`` is any estimator with ``initialize``, ``score_samples`` and
    ``partial_fit`` (see :class:`BRNSNovelty`, :class:`ArchiveNovelty`). It is
    cloned per run and seeded from ``random_state``.

    After :meth:`fit`, ``runlog_`` holds the full run, ``population_`` the
    final population, ``solutions_`` the individuals that reached the goal
    and ``novelty_`` the trained estimator.
    """

    def __init__(self, novelty=None, mu=100, lambda_=100, n_generations=500, eta_m=15.0, p_m=None,
                 gene_bounds=(-1.0, 1.0), rescore_parents=True, snapshot_interval=1, random_state=0):
        self.novelty = novelty
        self.mu = mu
        self.lambda_ = lambda_
        self.n_generations = n_generations
        self.eta_m = eta_m
        self.p_m = p_m
        self.gene_bounds = gene_bounds
        self.rescore_parents = rescore_parents
        self.snapshot_interval = snapshot_interval
        self.random_state = random_state

    def _config_echo(self, env, est):
        params = self.get_params(deep=False)
        params.pop("novelty")
        echo = {"search": params, "novelty": {"kind": self._tag(est), **est.get_params()}}
        if hasattr(env, "describe"):
            echo["env"] = env.describe()
        return json.loads(json.dumps(echo, default=_json_default))

    @staticmethod
    def _tag(est):
        for tag, cls in ESTIMATORS.items():
            if isinstance(est, cls):
                return tag
        return type(est).__name__

    def _score(self, est, behaviors):
        return np.asarray(est.score_samples(behaviors), dtype=float)

    def fit(self, env, y=None):
        seed = int(self.random_state)
        est = clone(self.novelty if self.novelty is not None else BRNSNovelty())
        est.set_params(random_state=seed)
        tag = self._tag(est)
        if "bounds" in est.get_params() and est.get_params()["bounds"] is None:
            est.set_params(bounds=np.asarray(env.behavior_bounds).tolist())
        init_rng = make_rng(seed, "init")
        mut_rng = make_rng(seed, "mutation")
        length = env.genotype_length
        p_m = self.p_m if self.p_m is not None else 1.0 / length
        lo, hi = self.gene_bounds
        ids = itertools.count()
        goal, radius = getattr(env, "goal", None), getattr(env, "goal_radius", None)

        log = RunLog(config=self._config_echo(env, est), seed=seed, estimator=tag)
        solutions = []

        def collect(individuals, gen):
            if goal is None:
                return
            for ind in individuals:
                if success_check(ind.behavior, goal, radius):
                    solutions.append(ind)
                    log.solutions.append({"id": ind.id, "generation": gen, "behavior": ind.behavior.tolist()})

        def evaluate(individuals):
            b, f = env.evaluate(np.array([ind.genotype for ind in individuals]))
            for ind, bi, fi in zip(individuals, b, f):
                ind.behavior, ind.fitness = np.asarray(bi, dtype=float), float(fi)

        pop = [Individual(id=next(ids), genotype=init_rng.uniform(lo, hi, size=length)) for _ in range(self.mu)]
        evaluate(pop)
        collect(pop, 0)
        beh = np.array([p.behavior for p in pop])
        est.initialize(beh.shape[1])
        if tag == "brns":
            log.frozen = est.frozen_state()
        snap = self._snapshot(log, est, 0)
        t0 = time.perf_counter()
        for ind, s in zip(pop, self._score(est, beh)):
            ind.novelty = float(s)
        if tag == "brns":
            est.add_to_buffer(beh)
        elapsed = time.perf_counter() - t0
        log.generations.append(self._record(0, pop, [], snap, est, elapsed, archive_update=False))

        for gen in range(1, self.n_generations + 1):
            offspring = generate_offspring(pop, self.lambda_, self.eta_m, p_m, self.gene_bounds, mut_rng, ids)
            evaluate(offspring)
            collect(offspring, gen)
            snap = self._snapshot(log, est, gen)
            off_beh = np.array([o.behavior for o in offspring])
            t0 = time.perf_counter()
            n_parents = len(pop)
            candidates = pop + offspring
            scores = self._score(est, np.array([c.behavior for c in candidates]))
            scored = candidates if self.rescore_parents else offspring
            offset = 0 if self.rescore_parents else n_parents
            for i, c in enumerate(scored):
                c.novelty = float(scores[offset + i])
            if tag == "brns":
                est.add_to_buffer(off_beh)
            pop = select_most_novel(pop, offspring, self.mu)
            if tag == "brns":
                est.partial_fit()
            else:
                est.partial_fit(off_beh, novelty=scores[n_parents:])
            elapsed = time.perf_counter() - t0
            log.generations.append(self._record(gen, pop, offspring, snap, est, elapsed))

        self.runlog_ = log
        self.population_ = pop
        self.solutions_ = solutions
        self.novelty_ = est
        return self

    def _snapshot(self, log, est, gen):
        if gen % self.snapshot_interval != 0:
            return None
        payload = est.snapshot()
        if payload is not None:
            log.snapshots[gen] = payload
        return gen

    def _record(self, gen, pop, offspring, snap, est, elapsed, archive_update=True):
        d = pop[0].behavior.shape[0]
        added = est.last_added_ if archive_update and hasattr(est, "last_added_") else np.zeros((0, d))
        removed = est.last_removed_ if archive_update and hasattr(est, "last_removed_") else []
        return GenerationRecord(
            generation=gen,
            ids=[p.id for p in pop],
            behaviors=np.array([p.behavior for p in pop]),
            novelties=np.array([p.novelty for p in pop]),
            ages=[p.age for p in pop],
            parent_ids=[p.parent_id for p in pop],
            fitness=np.array([p.fitness for p in pop]),
            offspring_ids=[o.id for o in offspring],
            offspring_parent_ids=[o.parent_id for o in offspring],
            offspring_behaviors=np.array([o.behavior for o in offspring]).reshape(-1, d),
            snapshot=snap,
            archive_added=np.asarray(added).reshape(-1, d),
            archive_removed=[int(i) for i in removed],
            novelty_time=elapsed,
        )


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def run_ns(config, env, seed):
    """Run one replicate described by an :class:`EvolutionConfig`; returns the RunLog."""
    return config.make_search(seed).fit(env).runlog_


__all__ = ["EvolutionConfig", "NoveltySearch", "polynomial_mutation", "generate_offspring",
           "select_most_novel", "success_check", "run_ns"]
