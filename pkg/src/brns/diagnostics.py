"""Post-hoc run diagnostics: cross-generation novelty matrix, cycling
statistics (eta, kappa), coverage, uniformity and population dynamics.

Everything here is a pure function of a :class:`~brns.core.RunLog`, so
diagnostics recomputed from a reloaded log match the in-memory ones.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import jensenshannon, pdist

from .core import make_rng
from .nn import MlpNetwork, mlp_forward

logger = logging.getLogger(__name__)

EPSILON_MAX_POINTS = 2000


@dataclass
class QMatrix:
    """``values[i, j]``: mean novelty of population ``i`` under the novelty
    function of generation ``j``. NaN marks undefined cells (``j < i``,
    missing snapshots, or infinite novelty, which is listed in ``excluded``)."""

    values: np.ndarray
    excluded: list = field(default_factory=list)

    def row(self, i):
        """Defined entries ``Q(i, j)`` for ``j >= i`` as ``(js, values)``."""
        r = self.values[i, i:]
        js = np.arange(i, self.values.shape[1])
        ok = ~np.isnan(r)
        return js[ok], r[ok]


@dataclass
class GridHistogram:
    counts: np.ndarray

    @property
    def shape(self):
        return self.counts.shape

    @property
    def total(self):
        return float(self.counts.sum())


def cell_indices(points, grid_shape):
    """Grid cell of each point in ``[0, 1]^d``; out-of-range points are clamped."""
    points = np.asarray(points, dtype=float)
    shape = np.asarray(grid_shape)
    outside = np.any((points < 0) | (points > 1), axis=1)
    if np.any(outside):
        logger.warning("%d behaviors outside [0, 1]^d clamped to boundary cells", int(outside.sum()))
    idx = np.floor(np.clip(points, 0.0, 1.0) * shape).astype(int)
    return np.minimum(idx, shape - 1)


def grid_histogram(points, grid_shape=(6, 6), weights=None):
    points = np.asarray(points, dtype=float).reshape(-1, len(grid_shape))
    counts = np.zeros(grid_shape)
    if len(points):
        np.add.at(counts, tuple(cell_indices(points, grid_shape).T), 1.0 if weights is None else weights)
    return GridHistogram(counts)


def coverage(behaviors, grid_shape=(6, 6)):
    """Fraction of grid cells holding at least one behavior."""
    h = grid_histogram(behaviors, grid_shape)
    return float(np.count_nonzero(h.counts) / h.counts.size)


def visited_behaviors(log, gen):
    """Every behavior evaluated at generation ``gen`` (initial population or offspring)."""
    rec = log.generations[gen]
    return rec.behaviors if gen == 0 else rec.offspring_behaviors


def coverage_series(log, grid_shape=(6, 6)):
    """Cumulative coverage after each generation."""
    seen = np.zeros(grid_shape, dtype=bool)
    out = []
    for g in range(log.n_generations):
        pts = visited_behaviors(log, g)
        if len(pts):
            seen[tuple(cell_indices(pts, grid_shape).T)] = True
        out.append(float(seen.mean()))
    return np.array(out)


def uniformity_js(h):
    """Base-2 Jensen-Shannon distance between a histogram and the uniform distribution."""
    counts = np.asarray(h.counts if isinstance(h, GridHistogram) else h, dtype=float).ravel()
    if counts.sum() <= 0:
        raise ValueError("histogram is empty")
    uniform = np.full(counts.size, 1.0 / counts.size)
    return float(jensenshannon(counts / counts.sum(), uniform, base=2))


def epsilon_margin(points, max_points=EPSILON_MAX_POINTS, seed=0):
    """``0.1 * median`` of pairwise Euclidean distances (uniformly subsampled
    to ``max_points`` when larger)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError("need at least two points")
    if points.shape[0] > max_points:
        keep = make_rng(seed, "epsilon").choice(points.shape[0], size=max_points, replace=False)
        points = points[np.sort(keep)]
    return 0.1 * float(np.median(pdist(points)))


def eta(Q, i):
    """Mean of ``Q(i, j) / Q(i, i)`` over defined ``j > i``; NaN when undefined."""
    values = Q.values if isinstance(Q, QMatrix) else np.asarray(Q, dtype=float)
    diag = values[i, i]
    later = values[i, i + 1:]
    later = later[~np.isnan(later)]
    if not later.size or np.isnan(diag) or diag <= 0:
        return float("nan")
    return float(np.mean(later / diag))


def kappa(row, epsilon):
    """Count of entries after the row minimum exceeding it by more than ``epsilon``.

    ``row`` is ``Q(i, j)`` for ``j >= i``; ties for the minimum resolve to the
    earliest generation.
    """
    row = np.asarray(row, dtype=float)
    if row.size == 0:
        raise ValueError("row is empty")
    i_star = int(np.argmin(row))
    return int(np.sum(row[i_star] + epsilon < row[i_star + 1:]))


def eta_series(Q):
    return np.array([eta(Q, i) for i in range(Q.values.shape[0])])


def kappa_series(Q, epsilon):
    out = []
    for i in range(Q.values.shape[0]):
        _, r = Q.row(i)
        out.append(kappa(r, epsilon) if r.size else -1)
    return np.array(out)


def _frozen_target(log):
    return MlpNetwork.from_dict(log.frozen["xi_star"])


def _knn_config(log):
    return int(log.config["novelty"]["k"])


def knn_tree_scores(tree, ref_ids, X, x_ids, k):
    """k-NN novelty of ``X`` via a KD-tree, leaving out reference rows with the same id."""
    m = tree.n
    n = X.shape[0]
    if m == 0:
        return np.full(n, np.inf)
    kk = min(k + 1, m)
    dist, idx = tree.query(X, k=kk)
    dist = dist.reshape(n, kk)
    idx = idx.reshape(n, kk)
    is_self = (ref_ids[idx] == np.asarray(x_ids)[:, None]) & (np.asarray(x_ids)[:, None] >= 0)
    has_self = is_self.any(axis=1)
    # without a self match, the (k+1)-th neighbour is surplus
    surplus = np.zeros_like(is_self)
    if kk == k + 1:
        surplus[~has_self, -1] = True
    keep = ~(is_self | surplus)
    counts = keep.sum(axis=1)
    sums = np.where(keep, dist, 0.0).sum(axis=1)
    out = np.full(n, np.inf)
    ok = counts > 0
    out[ok] = sums[ok] / counts[ok]
    return out


def q_matrix(log):
    """Cross-generation novelty matrix for a BR-NS or archive run."""
    n = log.n_generations
    values = np.full((n, n), np.nan)
    excluded = []
    pops = log.population_behaviors()
    sizes = [len(p) for p in pops]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    stacked = np.vstack(pops) if pops else np.zeros((0, 0))
    if log.estimator == "brns":
        target = mlp_forward(_frozen_target(log), stacked)
        for j in range(n):
            if j not in log.snapshots:
                continue
            xi_1 = MlpNetwork.from_dict(log.snapshots[j]["xi_1"])
            upto = offsets[j + 1]
            diff = target[:upto] - mlp_forward(xi_1, stacked[:upto])
            m = np.sum(diff * diff, axis=1)
            for i in range(j + 1):
                values[i, j] = np.mean(m[offsets[i]:offsets[i + 1]])
    elif log.estimator == "archive":
        k = _knn_config(log)
        all_ids = np.concatenate([np.asarray(g.ids) for g in log.generations])
        for j, archive in enumerate(log.archive_states()):
            cand, cand_ids = log.candidate_set(j)
            ref = np.vstack([archive, cand])
            ref_ids = np.array([-1] * len(archive) + list(cand_ids))
            upto = offsets[j + 1]
            scores = knn_tree_scores(cKDTree(ref), ref_ids, stacked[:upto], all_ids[:upto], k)
            for i in range(j + 1):
                s = scores[offsets[i]:offsets[i + 1]]
                if np.all(np.isfinite(s)):
                    values[i, j] = np.mean(s)
                else:
                    excluded.append((i, j))
    else:
        raise ValueError(f"unknown estimator {log.estimator!r}")
    return QMatrix(values, excluded)


def scoring_space_points(log):
    """Points defining the kappa margin: frozen embeddings for BR-NS, raw behaviors otherwise."""
    pts = np.vstack(log.population_behaviors())
    if log.estimator == "brns":
        return mlp_forward(_frozen_target(log), pts)
    return pts


def novelty_field(log, gen, grid_shape=(6, 6), resolution=10, archive=None):
    """Mean novelty of generation ``gen``'s novelty function within each grid cell.

    The function is sampled on a regular lattice of ``resolution`` points
    per cell and axis. ``archive`` may pass the precomputed archive state.
    """
    axes = [(np.arange(n * resolution) + 0.5) / (n * resolution) for n in grid_shape]
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(grid_shape))
    if log.estimator == "brns":
        snaps = [g for g in log.snapshots if g <= gen]
        if not snaps:
            raise ValueError(f"no snapshot at or before generation {gen}")
        xi_1 = MlpNetwork.from_dict(log.snapshots[max(snaps)]["xi_1"])
        diff = mlp_forward(_frozen_target(log), lattice) - mlp_forward(xi_1, lattice)
        scores = np.sum(diff * diff, axis=1)
    else:
        if archive is None:
            archive = next(a for g, a in enumerate(log.archive_states()) if g == gen)
        cand, _ = log.candidate_set(gen)
        ref = np.vstack([archive, cand])
        scores = knn_tree_scores(cKDTree(ref), np.full(len(ref), -1), lattice,
                                 np.full(len(lattice), -1), _knn_config(log))
    sums = grid_histogram(lattice, grid_shape, weights=scores).counts
    return sums / resolution ** len(grid_shape)


def novelty_uniformity(log, gen, grid_shape=(6, 6), resolution=10, archive=None):
    """JS distance between the per-cell mean-novelty distribution and uniform."""
    return uniformity_js(novelty_field(log, gen, grid_shape, resolution, archive))


def novelty_uniformity_series(log, grid_shape=(6, 6), resolution=10):
    archives = list(log.archive_states()) if log.estimator == "archive" else [None] * log.n_generations
    out = []
    for g in range(log.n_generations):
        try:
            out.append(novelty_uniformity(log, g, grid_shape, resolution, archives[g]))
        except ValueError:
            out.append(float("nan"))
    return np.array(out)


def visited_uniformity_series(log, grid_shape=(6, 6)):
    """JS distance of the cumulative visited-behavior histogram to uniform."""
    counts = np.zeros(grid_shape)
    out = []
    for g in range(log.n_generations):
        counts += grid_histogram(visited_behaviors(log, g), grid_shape).counts
        out.append(uniformity_js(counts) if counts.sum() > 0 else float("nan"))
    return np.array(out)


def population_dynamics(log):
    """Mean population age and mean offspring-to-parent behavior distance per generation."""
    ages = np.array([np.mean(g.ages) for g in log.generations])
    dists = np.full(log.n_generations, np.nan)
    for g in range(1, log.n_generations):
        prev = log.generations[g - 1]
        rec = log.generations[g]
        if not rec.offspring_ids:
            continue
        lookup = dict(zip(prev.ids, prev.behaviors))
        parents = np.array([lookup[p] for p in rec.offspring_parent_ids])
        dists[g] = float(np.mean(np.linalg.norm(rec.offspring_behaviors - parents, axis=1)))
    return ages, dists


@dataclass
class Diagnostics:
    q: QMatrix
    epsilon: float
    eta: np.ndarray
    kappa: np.ndarray
    coverage: np.ndarray
    novelty_uniformity: np.ndarray
    visited_uniformity: np.ndarray
    mean_age: np.ndarray
    parent_distance: np.ndarray

    def summary(self, g_cut=None):
        cut = len(self.eta) if g_cut is None else min(g_cut + 1, len(self.eta))
        eta_ok = self.eta[:cut][~np.isnan(self.eta[:cut])]
        kap = self.kappa[:cut][self.kappa[:cut] >= 0]
        return {
            "final_coverage": float(self.coverage[-1]),
            "mean_eta": float(np.mean(eta_ok)) if eta_ok.size else float("nan"),
            "frac_eta_below_1": float(np.mean(eta_ok < 1)) if eta_ok.size else float("nan"),
            "mean_kappa": float(np.mean(kap)) if kap.size else float("nan"),
            "final_novelty_uniformity": float(self.novelty_uniformity[-1]),
            "final_visited_uniformity": float(self.visited_uniformity[-1]),
            "epsilon": self.epsilon,
        }


def analyze_log(log, grid_shape=(6, 6), resolution=10):
    """Compute every diagnostic for one run."""
    q = q_matrix(log)
    eps = epsilon_margin(scoring_space_points(log))
    ages, dists = population_dynamics(log)
    return Diagnostics(
        q=q, epsilon=eps, eta=eta_series(q), kappa=kappa_series(q, eps),
        coverage=coverage_series(log, grid_shape),
        novelty_uniformity=novelty_uniformity_series(log, grid_shape, resolution),
        visited_uniformity=visited_uniformity_series(log, grid_shape),
        mean_age=ages, parent_distance=dists,
    )


CSV_FILES = {
    "q_matrix.csv": ("i", "j", "q"),
    "eta.csv": ("generation", "eta"),
    "kappa.csv": ("generation", "kappa", "epsilon"),
    "coverage.csv": ("generation", "coverage"),
    "uniformity.csv": ("generation", "novelty_js", "visited_js"),
    "dynamics.csv": ("generation", "mean_age", "parent_offspring_distance"),
}


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_csvs(diag, outdir):
    """Write the six diagnostics tables into ``outdir``; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = len(diag.coverage)
    gens = range(n)
    q = diag.q.values
    tables = {
        "q_matrix.csv": [(i, j, repr(float(q[i, j]))) for i in range(n) for j in range(i, n) if not np.isnan(q[i, j])],
        "eta.csv": [(g, repr(float(diag.eta[g]))) for g in gens],
        "kappa.csv": [(g, int(diag.kappa[g]), repr(diag.epsilon)) for g in gens],
        "coverage.csv": [(g, repr(float(diag.coverage[g]))) for g in gens],
        "uniformity.csv": [(g, repr(float(diag.novelty_uniformity[g])), repr(float(diag.visited_uniformity[g])))
                           for g in gens],
        "dynamics.csv": [(g, repr(float(diag.mean_age[g])), repr(float(diag.parent_distance[g]))) for g in gens],
    }
    paths = []
    for name, rows in tables.items():
        _write(outdir / name, CSV_FILES[name], rows)
        paths.append(outdir / name)
    return paths


def long_rows(diag, replicate):
    """Plot-ready ``(generation, metric, value, replicate)`` rows."""
    series = {
        "eta": diag.eta, "kappa": diag.kappa, "coverage": diag.coverage,
        "novelty_js": diag.novelty_uniformity, "visited_js": diag.visited_uniformity,
        "mean_age": diag.mean_age, "parent_offspring_distance": diag.parent_distance,
    }
    for metric, values in series.items():
        for g, v in enumerate(values):
            yield g, metric, repr(float(v)), replicate
