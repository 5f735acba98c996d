"""Behavior-recognition novelty: prediction error of a trained encoder
against a frozen, randomly initialised one.

Novelty of a behavior ``b`` is ``||xi_star(b) - xi_1(b)||^2``. ``xi_1`` is
trained on visited behaviors, so the error shrinks where the search has been
and stays large elsewhere. No archive and no neighbour search are needed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_behaviors, check_bounds
from .core import as_generator
from .nn import AdamState, MlpNetwork, adam_step, mlp_forward, mlp_grad_mse, mlp_init

logger = logging.getLogger(__name__)

TARGET_DEPTH = 3
PREDICTOR_DEPTH = 5


@dataclass
class EncoderPair:
    xi_star: MlpNetwork
    xi_1: MlpNetwork
    adam: AdamState
    d_b: int
    embed_dim: int
    hidden_dim: int
    generation: int = 0


@dataclass
class TrainingBuffer:
    behaviors: list = field(default_factory=list)
    targets: list = field(default_factory=list)

    def add(self, behaviors, targets):
        self.behaviors.extend(np.atleast_2d(behaviors))
        self.targets.extend(np.atleast_2d(targets))

    def clear(self):
        self.behaviors.clear()
        self.targets.clear()

    def __len__(self):
        return len(self.behaviors)

    def arrays(self):
        return np.asarray(self.behaviors, dtype=float), np.asarray(self.targets, dtype=float)


def _encoder(d_b, hidden, embed, depth, rng, std_scale, slope, bias_std):
    dims = [d_b] + [hidden] * (depth - 1) + [embed]
    acts = ["leaky_relu"] * (depth - 1) + ["linear"]
    return mlp_init(dims, acts, rng, std_scale=std_scale, leaky_slope=slope, bias_std=bias_std)


def brns_new(d_b, c=2, lr=1e-2, rng=None, hidden_factor=3, std_scale=1.0, leaky_slope=0.01, bias_std=None):
    """Build a frozen 3-layer target and a trainable 5-layer predictor.

    Both map ``d_b -> c*d_b`` through hidden layers of width
    ``hidden_factor*d_b`` with leaky-ReLU activations and a linear output.
    They are bias-free unless ``bias_std`` is given.
    """
    if d_b < 1 or c < 1:
        raise ValueError("d_b and c must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    hidden, embed = hidden_factor * d_b, c * d_b
    xi_star = _encoder(d_b, hidden, embed, TARGET_DEPTH, rng, std_scale, leaky_slope, bias_std)
    xi_1 = _encoder(d_b, hidden, embed, PREDICTOR_DEPTH, rng, std_scale, leaky_slope, bias_std)
    return EncoderPair(xi_star, xi_1, AdamState.for_network(xi_1, lr=lr), d_b, embed, hidden)


def brns_novelty(pair, b):
    """``||xi_star(b) - xi_1(b)||^2`` for one behavior or a batch of rows."""
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != pair.d_b:
        raise ValueError(f"behavior dim {b.shape[-1]} != {pair.d_b}")
    diff = mlp_forward(pair.xi_star, b) - mlp_forward(pair.xi_1, b)
    return np.sum(diff * diff, axis=-1)


def brns_is_novel(pair, b, t):
    if t <= 0:
        raise ValueError("threshold must be positive")
    return brns_novelty(pair, b) > t


def _fit_steps(pair, X, targets, steps, batch_size, rng):
    net, adam = pair.xi_1, pair.adam
    n = X.shape[0]
    bs = min(n, batch_size)
    for _ in range(steps):
        idx = rng.choice(n, size=bs, replace=False) if bs < n else np.arange(n)
        _, grads = mlp_grad_mse(net, X[idx], targets[idx])
        net, adam = adam_step(net, adam, grads)
    return replace(pair, xi_1=net, adam=adam)


def brns_warmup(pair, bounds, epochs=15, batch_size=64, rng=None, n_samples=256):
    """Pre-train ``xi_1`` on uniform draws from the (bounded) behavior space.

    Each epoch draws ``n_samples`` fresh uniform behaviors and makes one
    shuffled pass over them in mini-batches.
    """
    bounds = check_bounds(bounds, pair.d_b)
    rng = rng if rng is not None else np.random.default_rng()
    for _ in range(epochs):
        X = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n_samples, pair.d_b))
        targets = mlp_forward(pair.xi_star, X)
        order = rng.permutation(n_samples)
        net, adam = pair.xi_1, pair.adam
        for start in range(0, n_samples, batch_size):
            idx = order[start:start + batch_size]
            _, grads = mlp_grad_mse(net, X[idx], targets[idx])
            net, adam = adam_step(net, adam, grads)
        pair = replace(pair, xi_1=net, adam=adam)
    return pair


def brns_train_generation(pair, buffer, steps=5, batch_size=64, rng=None):
    """Run ``steps`` mini-batch Adam steps on the buffer, then clear it."""
    rng = rng if rng is not None else np.random.default_rng()
    if len(buffer) == 0:
        logger.warning("empty training buffer at generation %d; skipping update", pair.generation)
        return replace(pair, generation=pair.generation + 1)
    X, targets = buffer.arrays()
    buffer.clear()
    pair = _fit_steps(pair, X, targets, steps, batch_size, rng)
    return replace(pair, generation=pair.generation + 1)


class BRNSNovelty(BaseEstimator):
    """Archive-free novelty estimator.

    Parameters
    ----------
    embed_factor : int
        Embedding size as a multiple of the behavior dimension.
    hidden_factor : int
        Hidden-layer width as a multiple of the behavior dimension.
    lr : float
        Adam learning rate of the predictor.
    warmup_epochs, warmup_samples : int
        Uniform pre-training of the predictor over ``bounds``.
    batch_size, train_steps : int
        Mini-batch size and Adam steps per :meth:`partial_fit` call.
    bounds : array-like of shape (d, 2), optional
        Behavior-space box; defaults to the unit cube.
    threshold : float or "auto"
        Novelty threshold for :meth:`predict`. ``"auto"`` uses the
        ``threshold_quantile`` quantile of post-warmup novelty over uniform
        samples.
    std_scale : float
        Multiplier on the He-init standard deviation of both encoders.
    bias_std : float or None
        ``None`` (default) builds bias-free encoders. A float adds per-layer
        biases drawn from ``N(0, bias_std^2)`` to both encoders.
    random_state : int, Generator or None
    """

    def __init__(self, embed_factor=2, hidden_factor=3, lr=1e-2, warmup_epochs=15, warmup_samples=256,
                 batch_size=64, train_steps=5, bounds=None, threshold="auto", threshold_quantile=0.1,
                 std_scale=1.0, leaky_slope=0.01, bias_std=None, random_state=None):
        self.embed_factor = embed_factor
        self.hidden_factor = hidden_factor
        self.lr = lr
        self.warmup_epochs = warmup_epochs
        self.warmup_samples = warmup_samples
        self.batch_size = batch_size
        self.train_steps = train_steps
        self.bounds = bounds
        self.threshold = threshold
        self.threshold_quantile = threshold_quantile
        self.std_scale = std_scale
        self.leaky_slope = leaky_slope
        self.bias_std = bias_std
        self.random_state = random_state

    def _rng(self, purpose):
        if isinstance(self.random_state, np.random.Generator):
            return self.random_state
        return as_generator(self.random_state, purpose)

    def initialize(self, n_features):
        """Create both encoders, warm up the predictor and set ``threshold_``."""
        self.n_features_in_ = int(n_features)
        bounds = self.bounds if self.bounds is not None else [(0.0, 1.0)] * self.n_features_in_
        self.bounds_ = check_bounds(bounds, self.n_features_in_)
        self._train_rng = self._rng("brns-train")
        pair = brns_new(self.n_features_in_, self.embed_factor, self.lr, self._rng("brns-init"),
                        self.hidden_factor, self.std_scale, self.leaky_slope, self.bias_std)
        probe_rng = self._rng("brns-probe")
        probe = probe_rng.uniform(self.bounds_[:, 0], self.bounds_[:, 1], size=(1000, self.n_features_in_))
        pre = float(np.mean(brns_novelty(pair, probe)))
        pair = brns_warmup(pair, self.bounds_, self.warmup_epochs, self.batch_size,
                           self._rng("brns-warmup"), self.warmup_samples)
        post_scores = brns_novelty(pair, probe)
        self.warmup_report_ = {"pre_mean": pre, "post_mean": float(np.mean(post_scores))}
        if self.threshold == "auto":
            self.threshold_ = float(np.quantile(post_scores, self.threshold_quantile))
        else:
            self.threshold_ = float(self.threshold)
        self.pair_ = pair
        self.buffer_ = TrainingBuffer()
        return self

    def fit(self, X, y=None):
        X = check_behaviors(X)
        self.initialize(X.shape[1])
        return self.partial_fit(X)

    def add_to_buffer(self, X):
        """Queue behaviors (with their frozen-encoder targets) for the next update."""
        check_is_fitted(self, "pair_")
        X = check_behaviors(X, self.n_features_in_)
        self.buffer_.add(X, mlp_forward(self.pair_.xi_star, X))
        return self

    def partial_fit(self, X=None, y=None):
        """Train the predictor on the buffer (plus ``X`` if given) and clear it."""
        if not hasattr(self, "pair_"):
            self.initialize(check_behaviors(X).shape[1])
        if X is not None and len(X):
            self.add_to_buffer(X)
        self.pair_ = brns_train_generation(self.pair_, self.buffer_, self.train_steps,
                                           self.batch_size, self._train_rng)
        return self

    def score_samples(self, X):
        check_is_fitted(self, "pair_")
        X = check_behaviors(X, self.n_features_in_)
        return brns_novelty(self.pair_, X)

    def embed(self, X):
        """Frozen-encoder embedding (the space novelty lives in)."""
        check_is_fitted(self, "pair_")
        return mlp_forward(self.pair_.xi_star, check_behaviors(X, self.n_features_in_))

    def predict(self, X):
        """1 for behaviors whose novelty exceeds ``threshold_``, else 0."""
        return (self.score_samples(X) > self.threshold_).astype(int)

    def snapshot(self):
        return {"xi_1": self.pair_.xi_1.to_dict(), "generation": self.pair_.generation}

    def frozen_state(self):
        return {"xi_star": self.pair_.xi_star.to_dict(), "threshold": self.threshold_,
                "warmup": self.warmup_report_}
