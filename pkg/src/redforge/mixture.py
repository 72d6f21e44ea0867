"""Data-mixture optimization over the domain simplex.

The loop mirrors the regression-based mixture search recipe: draw candidate
weights from a symmetric Dirichlet, score each with a cheap proxy evaluator,
fit a quadratic-feature ridge surrogate, search the simplex for low predicted
loss, and prune near-zero domains. The proxy is injectable; the bundled
default scores a candidate mixture by held-out cross-entropy of a character
n-gram mixture model, so the whole loop runs with no training infrastructure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .filtering import QualityScorer, train_quality_scorer
from .records import Document

SIMPLEX_TOLERANCE = 1e-9


def _entropy(seed: int) -> int:
    return seed & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class MixtureWeights:
    """A point on the probability simplex over domain shards."""

    domains: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.domains) != len(self.weights):
            raise ValueError("domains and weights must have equal length")
        if not self.domains:
            raise ValueError("need at least one domain")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError("weights must sum to 1")

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=float)


@dataclass(frozen=True)
class ProxyEvaluation:
    weights: MixtureWeights
    loss: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.loss):
            raise ValueError("proxy loss must be finite")


def weights_from_gammas(gammas: Sequence[float]) -> tuple[float, ...]:
    """Normalize gamma variates onto the simplex; a degenerate all-zero draw
    falls back to uniform."""
    total = float(sum(gammas))
    if total <= 0.0:
        return tuple(1.0 / len(gammas) for _ in gammas)
    return tuple(float(g) / total for g in gammas)


def _domain_names(domains: int | Sequence[str]) -> tuple[str, ...]:
    if isinstance(domains, int):
        if domains < 1:
            raise ValueError("need at least one domain")
        return tuple(f"d{i + 1}" for i in range(domains))
    return tuple(domains)


def _sample_array(n: int, k: int, alpha: float, seed: int) -> np.ndarray:
    """Dirichlet draws, one RNG stream per draw index.

    Stream i depends only on (seed, i), so draws are independent of
    evaluation order and the first n draws are a prefix of any larger run.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n < 0:
        raise ValueError("n must be >= 0")
    out = np.empty((n, k), dtype=float)
    base = _entropy(seed)
    for i in range(n):
        rng = np.random.default_rng((base, i))
        out[i] = weights_from_gammas(rng.gamma(alpha, size=k))
    return out


def sample_mixtures(
    n: int, domains: int | Sequence[str], alpha: float, seed: int
) -> list[MixtureWeights]:
    """Draw n symmetric-Dirichlet(alpha) mixtures over the given domains."""
    names = _domain_names(domains)
    arr = _sample_array(n, len(names), alpha, seed)
    return [MixtureWeights(names, tuple(row)) for row in arr]


def _features(W: np.ndarray) -> np.ndarray:
    """Quadratic feature map: [w, w*w, pairwise products]."""
    n, k = W.shape
    cols = [W, W * W]
    for i in range(k):
        for j in range(i + 1, k):
            cols.append((W[:, i] * W[:, j]).reshape(n, 1))
    return np.hstack(cols)


@dataclass(frozen=True)
class LossSurrogate:
    domains: tuple[str, ...]
    theta: np.ndarray
    ridge: float

    def predict_batch(self, W: np.ndarray) -> np.ndarray:
        return _features(np.asarray(W, dtype=float)) @ self.theta

    def predict(self, weights: MixtureWeights | Sequence[float]) -> float:
        row = weights.as_array() if isinstance(weights, MixtureWeights) else np.asarray(weights, float)
        return float(self.predict_batch(row.reshape(1, -1))[0])


def fit_loss_model(evals: Sequence[ProxyEvaluation], ridge: float = 1e-8) -> LossSurrogate:
    """Fit the quadratic-feature ridge surrogate to proxy evaluations.

    Solved as an augmented least-squares problem, so rank deficiency (the
    simplex constraint makes the linear features collinear) never fails; the
    default ridge is small enough that exactly quadratic losses are recovered
    to well under 1e-6.
    """
    if not evals:
        raise ValueError("need at least one evaluation")
    domains = evals[0].weights.domains
    if any(e.weights.domains != domains for e in evals):
        raise ValueError("all evaluations must share the same domains")
    k = len(domains)
    if len(evals) < k + 1:
        raise ValueError(f"need at least {k + 1} evaluations for {k} domains")
    W = np.array([e.weights.weights for e in evals], dtype=float)
    y = np.array([e.loss for e in evals], dtype=float)
    X = _features(W)
    n_feat = X.shape[1]
    A = np.vstack([X, math.sqrt(ridge) * np.eye(n_feat)])
    b = np.concatenate([y, np.zeros(n_feat)])
    theta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return LossSurrogate(domains, theta, ridge)


@dataclass(frozen=True)
class MixtureResult:
    weights: MixtureWeights
    predicted_loss: float


def optimize_mixture(
    model: LossSurrogate,
    n_search: int = 100000,
    top_k: int = 32,
    seed: int = 0,
    alpha: float = 1.0,
) -> MixtureResult:
    """Search the simplex for low predicted loss.

    Returns the renormalized mean of the top_k lowest-predicted candidates;
    averaging smooths search noise versus a pure argmin. The reported
    predicted_loss is the mean over those top_k candidates, which is
    non-increasing as n_search grows under a fixed seed.
    """
    if not n_search >= top_k >= 1:
        raise ValueError("need n_search >= top_k >= 1")
    k = len(model.domains)
    W = _sample_array(n_search, k, alpha, seed)
    preds = model.predict_batch(W)
    top = np.argsort(preds, kind="stable")[:top_k]
    mean = W[top].mean(axis=0)
    weights = MixtureWeights(model.domains, weights_from_gammas(mean))
    return MixtureResult(weights, float(preds[top].mean()))


def prune_domains(
    w: MixtureWeights, epsilon: float = 1e-3
) -> tuple[MixtureWeights, list[str]]:
    """Drop domains with weight below epsilon and renormalize the rest."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    keep = [i for i, weight in enumerate(w.weights) if weight >= epsilon]
    if not keep:
        raise ValueError("all domains fall below epsilon")
    dropped = [w.domains[i] for i in range(len(w.domains)) if i not in set(keep)]
    domains = tuple(w.domains[i] for i in keep)
    weights = weights_from_gammas([w.weights[i] for i in keep])
    return MixtureWeights(domains, weights), dropped


class NgramMixtureProxy:
    """Default proxy: held-out cross-entropy under a mixture of per-domain
    character n-gram models.

    Every tenth-ish document per domain (by ``held_out_fraction``) is held
    out; the rest train one scorer per domain. A candidate mixture w defines
    the interpolated model sum_d w_d * P_d, and the loss is the mean negative
    log-probability of the pooled held-out characters under it. Lower is
    better; the optimum rewards domains whose model explains the held-out
    pool.
    """

    def __init__(
        self,
        domain_docs: Mapping[str, Sequence[Document]],
        order: int = 2,
        smoothing_k: float = 1.0,
        held_out_fraction: float = 0.1,
        max_positions: int = 50000,
    ) -> None:
        if not domain_docs:
            raise ValueError("need at least one domain")
        self.domains = tuple(sorted(domain_docs))
        stride = max(2, round(1.0 / held_out_fraction))
        scorers: list[QualityScorer] = []
        held_out_texts: list[str] = []
        for name in self.domains:
            docs = list(domain_docs[name])
            if not docs:
                raise ValueError(f"domain '{name}' has no documents")
            held = [d for i, d in enumerate(docs) if i % stride == 0]
            train = [d for i, d in enumerate(docs) if i % stride != 0] or docs
            scorers.append(train_quality_scorer(train, order=order, smoothing_k=smoothing_k))
            held_out_texts.extend(d.text for d in held if d.text)
        self._scorers = scorers
        self._matrix = self._probability_matrix(held_out_texts, order, max_positions)

    def _probability_matrix(
        self, texts: list[str], order: int, max_positions: int
    ) -> np.ndarray:
        rows: list[list[float]] = []
        for text in texts:
            symbol_streams = [scorer._symbols(text) for scorer in self._scorers]
            for i in range(order - 1, order - 1 + len(text)):
                rows.append(
                    [
                        math.exp(scorer.log_prob(tuple(syms[i - order + 1 : i]), syms[i]))
                        for scorer, syms in zip(self._scorers, symbol_streams)
                    ]
                )
                if len(rows) >= max_positions:
                    return np.array(rows, dtype=float)
        if not rows:
            raise ValueError("held-out pool is empty; corpus too small for the proxy")
        return np.array(rows, dtype=float)

    def __call__(self, weights: MixtureWeights) -> float:
        if weights.domains != self.domains:
            raise ValueError("mixture domains do not match the proxy's domains")
        probs = self._matrix @ weights.as_array()
        return float(-np.mean(np.log(np.maximum(probs, 1e-300))))


@dataclass
class MixtureSearchOutcome:
    weights: MixtureWeights
    dropped: list[str]
    predicted_loss: float
    evaluations: list[ProxyEvaluation] = field(repr=False, default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "domains": list(self.weights.domains),
            "weights": list(self.weights.weights),
            "dropped": self.dropped,
            "predicted_loss": self.predicted_loss,
        }


def run_mixture_search(
    proxy: Callable[[MixtureWeights], float],
    domains: Sequence[str],
    *,
    n_samples: int = 512,
    alpha: float = 1.0,
    seed: int = 0,
    n_search: int = 100000,
    top_k: int = 32,
    prune_epsilon: float = 1e-3,
    ridge: float = 1e-8,
) -> MixtureSearchOutcome:
    """Full sample -> evaluate -> fit -> search -> prune loop."""
    candidates = sample_mixtures(n_samples, domains, alpha, seed)
    evals = [ProxyEvaluation(c, float(proxy(c))) for c in candidates]
    model = fit_loss_model(evals, ridge=ridge)
    result = optimize_mixture(model, n_search=n_search, top_k=top_k, seed=_entropy(seed) + 1, alpha=alpha)
    pruned, dropped = prune_domains(result.weights, prune_epsilon)
    return MixtureSearchOutcome(pruned, dropped, result.predicted_loss, evals)
