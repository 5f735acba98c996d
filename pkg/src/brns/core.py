"""Shared domain types, seeded random streams and run-log persistence."""
from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

RUNLOG_FORMAT = "brns-runlog"
RUNLOG_VERSION = 1


class RunLogError(ValueError):
    """Raised when a run log is corrupt or was written by a foreign schema."""


def make_rng(seed, purpose=None):
    """Return a ``numpy.random.Generator`` for ``seed``.

    With ``purpose`` set, the stream is derived from ``(seed, crc32(purpose))``
    so every consumer (mutation, init, warmup, ...) gets its own independent
    stream and adding a new consumer never perturbs the others.
    """
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = [seed] if purpose is None else [seed, zlib.crc32(purpose.encode())]
    return np.random.default_rng(np.random.SeedSequence(key))


def as_generator(random_state, purpose=None):
    """Coerce ``None``/int/Generator into a Generator (estimator helper)."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        return np.random.default_rng()
    return make_rng(random_state, purpose)


@dataclass
class Individual:
    id: int
    genotype: np.ndarray
    behavior: Optional[np.ndarray] = None
    novelty: Optional[float] = None
    fitness: Optional[float] = None
    age: int = 0
    parent_id: Optional[int] = None

    @property
    def evaluated(self):
        return self.behavior is not None


@dataclass
class GenerationRecord:
    """Snapshot of one generation of a run.

    ``behaviors``/``novelties``/``ages`` describe the population *after*
    selection; the ``offspring_*`` fields describe the offspring produced at
    this generation (empty at generation 0). ``archive_added`` and
    ``archive_removed`` hold the archive maintenance applied after scoring.
    ``novelty_time`` is wall-clock and is persisted in a sidecar file so the
    main log stays byte-reproducible.
    """

    generation: int
    ids: list
    behaviors: np.ndarray
    novelties: np.ndarray
    ages: list
    parent_ids: list
    fitness: np.ndarray
    offspring_ids: list = field(default_factory=list)
    offspring_parent_ids: list = field(default_factory=list)
    offspring_behaviors: Optional[np.ndarray] = None
    snapshot: Optional[int] = None
    archive_added: Optional[np.ndarray] = None
    archive_removed: list = field(default_factory=list)
    novelty_time: float = 0.0

    def __post_init__(self):
        d = self.behaviors.shape[1] if self.behaviors.ndim == 2 else 0
        if self.offspring_behaviors is None:
            self.offspring_behaviors = np.zeros((0, d))
        if self.archive_added is None:
            self.archive_added = np.zeros((0, d))


@dataclass
class RunLog:
    config: dict
    seed: int
    estimator: str
    generations: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    frozen: Optional[dict] = None
    solutions: list = field(default_factory=list)

    @property
    def n_generations(self):
        return len(self.generations)

    def population_behaviors(self):
        return [g.behaviors for g in self.generations]

    def candidate_set(self, j):
        """Behaviors and ids competing at generation ``j`` (parents + offspring)."""
        cur = self.generations[j]
        if j == 0:
            return cur.behaviors, list(cur.ids)
        prev = self.generations[j - 1]
        beh = np.vstack([prev.behaviors, cur.offspring_behaviors])
        return beh, list(prev.ids) + list(cur.offspring_ids)

    def archive_states(self):
        """Yield the archive contents used for scoring at each generation."""
        d = self.generations[0].behaviors.shape[1] if self.generations else 0
        entries = np.zeros((0, d))
        for rec in self.generations:
            yield entries
            entries = np.vstack([entries, rec.archive_added])
            if rec.archive_removed:
                entries = np.delete(entries, rec.archive_removed, axis=0)

    def validate(self):
        for i, rec in enumerate(self.generations):
            if rec.generation != i:
                raise RunLogError(f"generation indices not contiguous at {i}")
            if rec.snapshot is not None and self.estimator == "brns" and rec.snapshot not in self.snapshots:
                raise RunLogError(f"snapshot {rec.snapshot} referenced by generation {i} is missing")
        return self


def config_digest(config):
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def _gen_to_dict(rec):
    return {
        "kind": "generation",
        "generation": rec.generation,
        "ids": [int(i) for i in rec.ids],
        "behaviors": _arr(rec.behaviors),
        "novelties": _arr(rec.novelties),
        "ages": [int(a) for a in rec.ages],
        "parent_ids": [None if p is None else int(p) for p in rec.parent_ids],
        "fitness": _arr(rec.fitness),
        "offspring_ids": [int(i) for i in rec.offspring_ids],
        "offspring_parent_ids": [int(p) for p in rec.offspring_parent_ids],
        "offspring_behaviors": _arr(rec.offspring_behaviors),
        "snapshot": rec.snapshot,
        "archive_added": _arr(rec.archive_added),
        "archive_removed": [int(i) for i in rec.archive_removed],
    }


def _gen_from_dict(obj, d):
    def mat(key):
        a = np.asarray(obj[key], dtype=float)
        return a.reshape(-1, d) if a.size == 0 else a

    return GenerationRecord(
        generation=obj["generation"],
        ids=obj["ids"],
        behaviors=mat("behaviors"),
        novelties=np.asarray(obj["novelties"], dtype=float),
        ages=obj["ages"],
        parent_ids=obj["parent_ids"],
        fitness=np.asarray(obj["fitness"], dtype=float),
        offspring_ids=obj["offspring_ids"],
        offspring_parent_ids=obj["offspring_parent_ids"],
        offspring_behaviors=mat("offspring_behaviors"),
        snapshot=obj["snapshot"],
        archive_added=mat("archive_added"),
        archive_removed=obj["archive_removed"],
    )


def _dump(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def timings_path(path):
    path = Path(path)
    return path.with_name(path.name + ".timings.json")


def runlog_write(log, path):
    """Write ``log`` as JSON lines: header, frozen, generations, snapshots, solutions.

    Per-generation wall-clock timings go to ``<path>.timings.json``.
    """
    path = Path(path)
    header = {
        "kind": "header",
        "format": RUNLOG_FORMAT,
        "version": RUNLOG_VERSION,
        "seed": int(log.seed),
        "estimator": log.estimator,
        "behavior_dim": int(log.generations[0].behaviors.shape[1]) if log.generations else None,
        "config": log.config,
        "config_digest": config_digest(log.config),
    }
    lines = [_dump(header)]
    if log.frozen is not None:
        lines.append(_dump({"kind": "frozen", "payload": log.frozen}))
    lines.extend(_dump(_gen_to_dict(rec)) for rec in log.generations)
    for g in sorted(log.snapshots):
        lines.append(_dump({"kind": "snapshot", "generation": int(g), "payload": log.snapshots[g]}))
    for sol in log.solutions:
        lines.append(_dump({"kind": "solution", **sol}))
    path.write_text("\n".join(lines) + "\n")
    timings_path(path).write_text(json.dumps([float(r.novelty_time) for r in log.generations]))


def runlog_read(path):
    path = Path(path)
    try:
        raw = path.read_text().splitlines()
        records = [json.loads(line) for line in raw if line.strip()]
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RunLogError(f"{path}: not a run log ({exc})") from exc
    if not records or records[0].get("kind") != "header" or records[0].get("format") != RUNLOG_FORMAT:
        raise RunLogError(f"{path}: missing run-log header")
    header = records[0]
    if header.get("version") != RUNLOG_VERSION:
        raise RunLogError(f"{path}: schema version {header.get('version')} != {RUNLOG_VERSION}")
    if config_digest(header["config"]) != header.get("config_digest"):
        raise RunLogError(f"{path}: config digest mismatch")
    d = header.get("behavior_dim") or 0
    log = RunLog(config=header["config"], seed=header["seed"], estimator=header["estimator"])
    for rec in records[1:]:
        kind = rec.get("kind")
        if kind == "frozen":
            log.frozen = rec["payload"]
        elif kind == "generation":
            log.generations.append(_gen_from_dict(rec, d))
        elif kind == "snapshot":
            log.snapshots[rec["generation"]] = rec["payload"]
        elif kind == "solution":
            log.solutions.append({k: v for k, v in rec.items() if k != "kind"})
        else:
            raise RunLogError(f"{path}: unknown record kind {kind!r}")
    tp = timings_path(path)
    if tp.exists():
        times = json.loads(tp.read_text())
        for rec, t in zip(log.generations, times):
            rec.novelty_time = t
    return log.validate()
