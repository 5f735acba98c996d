import json

import numpy as np
import pytest

from brns.core import (GenerationRecord, Individual, RunLog, RunLogError, as_generator, config_digest,
                       make_rng, runlog_read, runlog_write, timings_path)


def tiny_log(estimator="archive", n_gen=3, d=2):
    rng = np.random.default_rng(0)
    log = RunLog(config={"novelty": {"kind": estimator, "k": 2}}, seed=7, estimator=estimator)
    next_id = 0
    prev_ids = []
    for g in range(n_gen):
        ids = list(range(next_id, next_id + 3))
        next_id += 3
        log.generations.append(GenerationRecord(
            generation=g, ids=ids, behaviors=rng.random((3, d)), novelties=rng.random(3), ages=[0, 1, 2],
            parent_ids=[None] * 3, fitness=-rng.random(3),
            offspring_ids=ids if g else [], offspring_parent_ids=prev_ids if g else [],
            offspring_behaviors=rng.random((3, d)) if g else None,
            archive_added=rng.random((1, d)) if g else None, archive_removed=[0] if g == 2 else [],
            novelty_time=0.001 * g))
        prev_ids = ids
    log.solutions.append({"id": 1, "generation": 0, "behavior": [0.1, 0.2]})
    return log


class TestRng:
    def test_reproducible(self):
        assert make_rng(3, "mutation").random() == make_rng(3, "mutation").random()

    def test_purposes_independent(self):
        assert make_rng(3, "mutation").random() != make_rng(3, "init").random()

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            make_rng(-1)

    def test_as_generator_passthrough(self):
        g = np.random.default_rng(0)
        assert as_generator(g) is g


def test_individual_evaluated_flag():
    ind = Individual(id=0, genotype=np.zeros(3))
    assert not ind.evaluated and ind.novelty is None
    ind.behavior = np.zeros(2)
    assert ind.evaluated


class TestRunLogIO:
    def test_roundtrip(self, tmp_path):
        log = tiny_log()
        runlog_write(log, tmp_path / "a.jsonl")
        again = runlog_read(tmp_path / "a.jsonl")
        assert again.seed == 7 and again.estimator == "archive" and again.config == log.config
        assert again.solutions == log.solutions
        for a, b in zip(again.generations, log.generations):
            np.testing.assert_array_equal(a.behaviors, b.behaviors)
            np.testing.assert_array_equal(a.offspring_behaviors, b.offspring_behaviors)
            np.testing.assert_array_equal(a.archive_added, b.archive_added)
            assert a.ids == b.ids and a.ages == b.ages and a.archive_removed == b.archive_removed
            assert a.novelty_time == b.novelty_time

    def test_rewrite_is_byte_identical(self, tmp_path):
        log = tiny_log()
        runlog_write(log, tmp_path / "a.jsonl")
        runlog_write(runlog_read(tmp_path / "a.jsonl"), tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_timings_in_sidecar(self, tmp_path):
        log = tiny_log()
        runlog_write(log, tmp_path / "a.jsonl")
        assert json.loads(timings_path(tmp_path / "a.jsonl").read_text()) == [0.0, 0.001, 0.002]
        assert "novelty_time" not in (tmp_path / "a.jsonl").read_text()

    def test_archive_replay(self):
        log = tiny_log()
        states = list(log.archive_states())
        assert [len(s) for s in states] == [0, 0, 1]
        np.testing.assert_array_equal(states[2], log.generations[1].archive_added)

    def test_candidate_set(self):
        log = tiny_log()
        beh, ids = log.candidate_set(1)
        assert ids == log.generations[0].ids + log.generations[1].offspring_ids
        assert beh.shape == (6, 2)

    def test_garbage_rejected(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text("not json\n")
        with pytest.raises(RunLogError):
            runlog_read(p)

    def test_missing_header(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"kind": "generation"}\n')
        with pytest.raises(RunLogError, match="header"):
            runlog_read(p)

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "a.jsonl"
        runlog_write(tiny_log(), p)
        lines = p.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = 99
        p.write_text("\n".join([json.dumps(header)] + lines[1:]))
        with pytest.raises(RunLogError, match="version"):
            runlog_read(p)

    def test_digest_mismatch(self, tmp_path):
        p = tmp_path / "a.jsonl"
        runlog_write(tiny_log(), p)
        lines = p.read_text().splitlines()
        header = json.loads(lines[0])
        header["config"]["novelty"]["k"] = 3
        p.write_text("\n".join([json.dumps(header)] + lines[1:]))
        with pytest.raises(RunLogError, match="digest"):
            runlog_read(p)

    def test_non_contiguous_generations(self):
        log = tiny_log()
        log.generations[1].generation = 5
        with pytest.raises(RunLogError, match="contiguous"):
            log.validate()

    def test_dangling_snapshot(self):
        log = tiny_log(estimator="brns")
        log.generations[1].snapshot = 1
        with pytest.raises(RunLogError, match="snapshot"):
            log.validate()


def test_config_digest_key_order():
    assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})
