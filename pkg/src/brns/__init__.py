"""Novelty search with archive-free behavior-recognition novelty (BR-NS)
and the classic k-NN archive baseline, plus cycling diagnostics and a
deceptive-maze benchmark."""
from .core import Individual, RunLog, RunLogError, make_rng, runlog_read, runlog_write
from .diagnostics import analyze_log, coverage, epsilon_margin, eta, kappa, q_matrix, uniformity_js
from .evolution import EvolutionConfig, NoveltySearch, run_ns
from .maze import MazeEnv, MazeMap, load_maze
from .nn import MlpNetwork
from .novelty_archive import ArchiveNovelty, knn_novelty
from .novelty_brns import BRNSNovelty, brns_novelty

__version__ = "0.1.0"

__all__ = [
    "ArchiveNovelty", "BRNSNovelty", "EvolutionConfig", "Individual", "MazeEnv", "MazeMap", "MlpNetwork",
    "NoveltySearch", "RunLog", "RunLogError", "analyze_log", "brns_novelty", "coverage", "epsilon_margin",
    "eta", "kappa", "knn_novelty", "load_maze", "make_rng", "q_matrix", "run_ns", "runlog_read",
    "runlog_write", "uniformity_js",
]
