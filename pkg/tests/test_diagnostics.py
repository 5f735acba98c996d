import csv
import itertools
import math

import numpy as np
import pytest

from brns import diagnostics as D
from brns.core import runlog_read, runlog_write
from brns.evolution import NoveltySearch
from brns.novelty_archive import ArchiveNovelty, archive_novelty_all
from brns.novelty_brns import BRNSNovelty


def js_distance_oracle(p, q):
    p = np.asarray(p, float) / np.sum(p)
    q = np.asarray(q, float) / np.sum(q)
    m = 0.5 * (p + q)

    def kl(a, b):
        return sum(x * math.log2(x / y) for x, y in zip(a, b) if x > 0)
    return math.sqrt(0.5 * kl(p, m) + 0.5 * kl(q, m))


@pytest.fixture(scope="module")
def runs():
    from conftest import ToyEnv
    env = ToyEnv()
    out = {}
    for tag, est in (("brns", BRNSNovelty(warmup_epochs=2)), ("archive", ArchiveNovelty(k=4, growth_rate=3))):
        out[tag] = NoveltySearch(novelty=est, mu=12, lambda_=12, n_generations=10, random_state=5).fit(env).runlog_
    return out


class TestEtaKappa:
    def test_eta_half(self):
        Q = np.array([[2.0, 1.0, 1.0], [np.nan, 1, 1], [np.nan, np.nan, 1]])
        assert D.eta(Q, 0) == 0.5

    def test_eta_constant_row(self):
        assert D.eta(np.full((3, 3), 0.7), 0) == 1.0

    def test_eta_mixed(self):
        Q = np.array([[4.0, 2.0, 6.0]] * 3)
        assert D.eta(Q, 0) == 1.0

    def test_eta_undefined(self):
        assert np.isnan(D.eta(np.zeros((2, 2)), 0))
        assert np.isnan(D.eta(np.ones((2, 2)), 1))

    def test_kappa_example(self):
        assert D.kappa([5, 3, 1, 2, 4], 0.5) == 2

    def test_kappa_monotone(self):
        assert D.kappa([5, 4, 3, 2, 1], 0.1) == 0

    def test_kappa_strict(self):
        assert D.kappa([1.0, 1.5], 0.5) == 0

    def test_kappa_earliest_min(self):
        assert D.kappa([1.0, 3.0, 1.0, 3.0], 0.5) == 2

    def test_kappa_empty(self):
        with pytest.raises(ValueError):
            D.kappa([], 0.1)

    def test_kappa_bruteforce(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            row = rng.integers(0, 5, size=rng.integers(1, 12)).astype(float)
            eps = float(rng.choice([0.0, 0.5, 1.5]))
            m = min(range(len(row)), key=lambda j: (row[j], j))
            want = sum(1 for j in range(m + 1, len(row)) if row[m] + eps < row[j])
            assert D.kappa(row, eps) == want


class TestEpsilon:
    def test_two_points(self):
        assert D.epsilon_margin([[0.0, 0.0], [0.0, 4.0]]) == pytest.approx(0.4)

    def test_collinear(self):
        assert D.epsilon_margin([[0.0], [1.0], [3.0]]) == pytest.approx(0.2)

    def test_bruteforce_median(self):
        pts = np.random.default_rng(1).random((500, 3))
        dists = [math.dist(a, b) for a, b in itertools.combinations(pts, 2)]
        assert D.epsilon_margin(pts) == pytest.approx(0.1 * float(np.median(dists)), rel=1e-12)

    def test_too_few(self):
        with pytest.raises(ValueError):
            D.epsilon_margin([[1.0, 2.0]])


class TestCoverageUniformity:
    def test_empty(self):
        assert D.coverage(np.zeros((0, 2))) == 0.0

    def test_one_point(self):
        assert D.coverage([[0.5, 0.5]]) == pytest.approx(1 / 36)

    def test_full(self):
        centres = (np.arange(6) + 0.5) / 6
        pts = np.array(list(itertools.product(centres, centres)))
        assert D.coverage(pts) == 1.0

    def test_clamped_and_logged(self, caplog):
        with caplog.at_level("WARNING"):
            assert D.coverage([[1.2, -0.1]]) == pytest.approx(1 / 36)
        assert "clamped" in caplog.text
        assert D.grid_histogram([[1.2, -0.1]]).counts[5, 0] == 1

    def test_edge_value_one(self):
        assert D.grid_histogram([[1.0, 1.0]]).counts[5, 5] == 1

    def test_js_uniform_is_zero(self):
        assert D.uniformity_js(np.ones((6, 6))) == pytest.approx(0.0, abs=1e-12)

    def test_js_point_mass(self):
        assert D.uniformity_js([1.0, 0.0]) == pytest.approx(0.5579230, abs=1e-6)
        assert D.uniformity_js([1.0, 0.0]) ** 2 == pytest.approx(0.3112781, abs=1e-6)

    def test_js_matches_formula(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            h = rng.random(36) * (rng.random(36) > 0.3)
            if h.sum() == 0:
                continue
            assert D.uniformity_js(h) == pytest.approx(js_distance_oracle(h, np.ones(36)), abs=1e-12)

    def test_js_empty(self):
        with pytest.raises(ValueError):
            D.uniformity_js(np.zeros(4))

    def test_js_bounded(self):
        assert 0 <= D.uniformity_js([5, 0, 0, 0, 0, 0]) <= 1


class TestQMatrix:
    @pytest.mark.parametrize("tag", ["brns", "archive"])
    def test_diagonal_matches_live_scores(self, runs, tag):
        log = runs[tag]
        q = D.q_matrix(log)
        for i, g in enumerate(log.generations):
            if np.all(np.isfinite(g.novelties)):
                assert q.values[i, i] == pytest.approx(np.mean(g.novelties), rel=1e-12)

    def test_lower_triangle_undefined(self, runs):
        q = D.q_matrix(runs["brns"])
        assert np.all(np.isnan(q.values[np.tril_indices(q.values.shape[0], -1)]))
        upper = q.values[np.triu_indices(q.values.shape[0])]
        assert np.all(upper >= 0)

    def test_archive_matches_bruteforce(self, runs):
        log = runs["archive"]
        q = D.q_matrix(log)
        archives = list(log.archive_states())
        k = 4
        for i, j in [(0, 3), (2, 7), (5, 10)]:
            cand, cand_ids = log.candidate_set(j)
            pop_i = log.generations[i]
            scores = []
            for b, pid in zip(pop_i.behaviors, pop_i.ids):
                ref = [r for r, rid in zip(cand, cand_ids) if rid != pid] + list(archives[j])
                d = sorted(math.dist(b, r) for r in ref)[:k]
                scores.append(sum(d) / len(d))
            assert q.values[i, j] == pytest.approx(np.mean(scores), rel=1e-12)

    def test_archive_kdtree_matches_exact(self):
        rng = np.random.default_rng(3)
        pop, arch = rng.random((40, 2)), rng.random((100, 2))
        ref = np.vstack([arch, pop])
        ids = np.array([-1] * 100 + list(range(40)))
        tree = D.cKDTree(ref)
        got = D.knn_tree_scores(tree, ids, pop, np.arange(40), 15)
        np.testing.assert_allclose(got, archive_novelty_all(pop, arch, 15), rtol=1e-12)

    def test_missing_snapshot_absent(self, runs):
        import copy
        log = copy.deepcopy(runs["brns"])
        del log.snapshots[4]
        q = D.q_matrix(log)
        assert np.all(np.isnan(q.values[:, 4]))
        assert not np.isnan(q.values[0, 5])

    def test_single_individual(self):
        from brns.core import GenerationRecord, RunLog
        from brns.nn import MlpNetwork
        star = MlpNetwork([np.array([[1.0], [0.0]])], ["linear"])
        one = MlpNetwork([np.array([[0.0], [0.0]])], ["linear"])
        log = RunLog(config={}, seed=0, estimator="brns", frozen={"xi_star": star.to_dict()})
        log.generations.append(GenerationRecord(0, [0], np.array([[0.7 ** 0.5]]), np.array([0.7]), [0], [None],
                                                np.array([0.0]), snapshot=0))
        log.snapshots[0] = {"xi_1": one.to_dict(), "generation": 0}
        assert D.q_matrix(log).values[0, 0] == pytest.approx(0.7)

    @pytest.mark.parametrize("tag", ["brns", "archive"])
    def test_recompute_from_disk(self, runs, tag, tmp_path):
        runlog_write(runs[tag], tmp_path / "log.jsonl")
        again = runlog_read(tmp_path / "log.jsonl")
        np.testing.assert_array_equal(D.q_matrix(again).values, D.q_matrix(runs[tag]).values)


class TestDynamics:
    def test_parent_distance_oracle(self, runs):
        log = runs["archive"]
        _, dists = D.population_dynamics(log)
        assert np.isnan(dists[0])
        prev, cur = log.generations[2], log.generations[3]
        parent = dict(zip(prev.ids, prev.behaviors))
        want = np.mean([math.dist(b, parent[p]) for b, p in zip(cur.offspring_behaviors, cur.offspring_parent_ids)])
        assert dists[3] == pytest.approx(want)

    def test_ages(self, runs):
        ages, _ = D.population_dynamics(runs["brns"])
        assert ages[0] == 0
        assert np.all(ages <= np.arange(len(ages)))


class TestAnalyze:
    @pytest.mark.parametrize("tag", ["brns", "archive"])
    def test_series_lengths(self, runs, tag):
        diag = D.analyze_log(runs[tag], resolution=3)
        n = runs[tag].n_generations
        for series in (diag.eta, diag.kappa, diag.coverage, diag.novelty_uniformity, diag.mean_age):
            assert len(series) == n
        assert np.all(np.diff(diag.coverage) >= 0)
        assert diag.summary()["final_coverage"] == diag.coverage[-1]

    def test_csvs(self, runs, tmp_path):
        diag = D.analyze_log(runs["archive"], resolution=3)
        paths = D.write_csvs(diag, tmp_path)
        assert sorted(p.name for p in paths) == sorted(D.CSV_FILES)
        with open(tmp_path / "eta.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["generation", "eta"] and len(rows) == runs["archive"].n_generations + 1

    def test_long_rows(self, runs):
        diag = D.analyze_log(runs["brns"], resolution=3)
        rows = list(D.long_rows(diag, "r0"))
        assert {r[1] for r in rows} >= {"eta", "coverage", "kappa"}
        assert all(r[3] == "r0" for r in rows)

    def test_novelty_field_brns_uniform_lattice(self, runs):
        field = D.novelty_field(runs["brns"], 3, resolution=2)
        assert field.shape == (6, 6) and np.all(field >= 0)
