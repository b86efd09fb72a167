"""Fixed-size object representations over local features: k-means visual
word dictionary, bag-of-words histograms, and incremental per-category or
shared topic models trained by collapsed Gibbs sampling.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dictionary",
    "BowHistogram",
    "TopicModel",
    "TopicHistogram",
    "build_dictionary",
    "bow_encode",
    "lda_update",
    "lda_infer",
    "local_lda_update",
    "phi",
]

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.1
DEFAULT_TOPICS = 30
DEFAULT_DICTIONARY_SIZE = 90
DEFAULT_GIBBS_ITERS = 30


class RepresentationError(ValueError):
    pass


@dataclass(frozen=True)
class Dictionary:
    """Visual words: cluster centers in flattened spin-image space."""

    words: np.ndarray

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.float64)
        if words.ndim != 2 or len(words) < 2:
            raise RepresentationError("dictionary needs at least 2 word vectors")
        if not np.all(np.isfinite(words)):
            raise RepresentationError("dictionary words must be finite")
        object.__setattr__(self, "words", words)

    @property
    def size(self) -> int:
        return len(self.words)

    def to_json_dict(self) -> dict:
        return {"words": self.words.tolist()}

    @classmethod
    def from_json_dict(cls, data: dict) -> "Dictionary":
        return cls(words=np.asarray(data["words"], dtype=np.float64))


@dataclass(frozen=True)
class BowHistogram:
    """Occurrence counts of visual words; total mass = feature count."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(counts < 0):
            raise RepresentationError("word counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class TopicModel:
    """Word-topic counters for collapsed Gibbs sampling.

    ``scope`` is "shared" or a category label. ``n_updates`` counts the
    teach events folded in; together with ``rng_seed`` it derives the
    random stream of the next update, so a serialized model resumes with
    the identical sequence.
    """

    k: int
    v: int
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    scope: str = "shared"
    rng_seed: int = 0
    n_updates: int = 0
    n_wk: np.ndarray = None
    n_k: np.ndarray = None

    def __post_init__(self):
        if self.k < 1 or self.v < 1:
            raise RepresentationError("topic and vocabulary sizes must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise RepresentationError("alpha and beta must be positive")
        if self.n_wk is None:
            self.n_wk = np.zeros((self.v, self.k), dtype=np.int64)
        else:
            self.n_wk = np.asarray(self.n_wk, dtype=np.int64)
        if self.n_k is None:
            self.n_k = np.zeros(self.k, dtype=np.int64)
        else:
            self.n_k = np.asarray(self.n_k, dtype=np.int64)

    def check_consistent(self):
        if not np.array_equal(self.n_wk.sum(axis=0), self.n_k):
            raise RepresentationError("topic totals drifted from word-topic counts")

    def to_json_dict(self) -> dict:
        return {
            "scope": self.scope,
            "k": self.k,
            "v": self.v,
            "alpha": self.alpha,
            "beta": self.beta,
            "rng_seed": self.rng_seed,
            "n_updates": self.n_updates,
            "n_wk": self.n_wk.tolist(),
            "n_k": self.n_k.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TopicModel":
        return cls(
            k=data["k"],
            v=data["v"],
            alpha=data["alpha"],
            beta=data["beta"],
            scope=data["scope"],
            rng_seed=data["rng_seed"],
            n_updates=data["n_updates"],
            n_wk=np.asarray(data["n_wk"], dtype=np.int64),
            n_k=np.asarray(data["n_k"], dtype=np.int64),
        )


@dataclass(frozen=True)
class TopicHistogram:
    """Smoothed topic distribution of one object view, plus the raw
    per-topic assignment counts it was derived from."""

    theta: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if abs(theta.sum() - 1.0) > 1e-9 or np.any(theta <= 0):
            raise RepresentationError("theta must be a strictly positive distribution")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=np.int64))


# ---------------------------------------------------------------------------
# Dictionary building and encoding
# ---------------------------------------------------------------------------

def _kmeans_pp_init(pool: np.ndarray, v: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((v, pool.shape[1]))
    centers[0] = pool[rng.integers(len(pool))]
    dist_sq = np.sum((pool - centers[0]) ** 2, axis=1)
    for i in range(1, v):
        total = dist_sq.sum()
        if total <= 0:
            # all remaining mass on existing centers: pick any point
            centers[i] = pool[rng.integers(len(pool))]
            continue
        probs = dist_sq / total
        centers[i] = pool[rng.choice(len(pool), p=probs)]
        dist_sq = np.minimum(dist_sq, np.sum((pool - centers[i]) ** 2, axis=1))
    return centers


def _assign(pool: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ties go to the lowest center index (argmin)
    d = (
        np.sum(pool**2, axis=1)[:, None]
        - 2 * pool @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.argmin(d, axis=1)


def build_dictionary(
    pool, v: int = DEFAULT_DICTIONARY_SIZE, seed: int = 0, max_iter: int = 100
) -> Dictionary:
    """k-means (k-means++ init, Lloyd iterations to an assignment fixpoint)
    over a pool of feature vectors. Deterministic per seed."""
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2:
        raise RepresentationError("feature pool must be a 2D array")
    if len(pool) < v:
        raise RepresentationError(f"pool of {len(pool)} features cannot fill {v} words")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(pool, v, rng)
    assignment = _assign(pool, centers)
    for _ in range(max_iter):
        for j in range(v):
            members = pool[assignment == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its center
                far = np.argmax(np.sum((pool - centers[assignment]) ** 2, axis=1))
                centers[j] = pool[far]
        new_assignment = _assign(pool, centers)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    return Dictionary(words=centers)


def bow_encode(features, dictionary: Dictionary) -> BowHistogram:
    """Histogram of nearest-word assignments (Euclidean, ties to the
    lowest word index)."""
    if hasattr(features, "as_matrix"):
        features = features.as_matrix()
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) == 0:
        raise RepresentationError("need a non-empty 2D feature matrix")
    if features.shape[1] != dictionary.words.shape[1]:
        raise RepresentationError(
            f"feature dimension {features.shape[1]} does not match dictionary "
            f"dimension {dictionary.words.shape[1]}"
        )
    assignment = _assign(features, dictionary.words)
    counts = np.bincount(assignment, minlength=dictionary.size)
    return BowHistogram(counts=counts)


# ---------------------------------------------------------------------------
# Collapsed Gibbs sampling
# ---------------------------------------------------------------------------

def _gibbs_sweeps(n_wk, n_k, doc, z, m_k, alpha, beta, iters, rng):
    """In-place collapsed Gibbs sweeps for one document.

    n_wk / n_k must already contain the document's current assignments;
    m_k is the doc-topic count vector. The document-topic denominator is
    dropped (it does not depend on the candidate topic).
    """
    v = n_wk.shape[0]
    vbeta = v * beta
    for _ in range(iters):
        for i, w in enumerate(doc):
            k_old = z[i]
            n_wk[w, k_old] -= 1
            n_k[k_old] -= 1
            m_k[k_old] -= 1
            weights = (m_k + alpha) * (n_wk[w] + beta) / (n_k + vbeta)
            cumulative = np.cumsum(weights)
            k_new = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
            z[i] = k_new
            n_wk[w, k_new] += 1
            n_k[k_new] += 1
            m_k[k_new] += 1


def _validate_doc(doc, v: int) -> np.ndarray:
    doc = np.asarray(doc, dtype=np.int64)
    if doc.ndim != 1:
        raise RepresentationError("document must be a flat word-index sequence")
    if len(doc) and (doc.min() < 0 or doc.max() >= v):
        raise RepresentationError("word index out of vocabulary range")
    return doc


def lda_update(model: TopicModel, doc, iters: int = DEFAULT_GIBBS_ITERS) -> TopicModel:
    """Fold one document into the model by collapsed Gibbs sampling.

    Topics are initialized uniformly at random (seeded by the model's seed
    and update counter), resampled for ``iters`` sweeps against the
    accumulated counters, and the final assignments become permanent.
    Returns the same (mutated) model.
    """
    doc = _validate_doc(doc, model.v)
    if iters < 1:
        raise RepresentationError("need at least one Gibbs sweep")
    rng = np.random.default_rng((model.rng_seed, model.n_updates))
    model.n_updates += 1
    if len(doc) == 0:
        return model
    z = rng.integers(0, model.k, size=len(doc))
    m_k = np.bincount(z, minlength=model.k)
    np.add.at(model.n_wk, (doc, z), 1)
    model.n_k += m_k
    _gibbs_sweeps(model.n_wk, model.n_k, doc, z, m_k, model.alpha, model.beta, iters, rng)
    return model


def lda_infer(model: TopicModel, doc, iters: int = DEFAULT_GIBBS_ITERS) -> TopicHistogram:
    """Topic distribution of a document against a frozen model.

    The sampler runs on a temporary copy of the counters, so the model is
    left bit-identical; theta_k = (n_{doc,k} + alpha) / (n_doc + K alpha).
    """
    doc = _validate_doc(doc, model.v)
    if iters < 1:
        raise RepresentationError("need at least one Gibbs sweep")
    k, alpha = model.k, model.alpha
    if len(doc) == 0:
        theta = np.full(k, 1.0 / k)
        return TopicHistogram(theta=theta, counts=np.zeros(k, dtype=np.int64))
    rng = np.random.default_rng((model.rng_seed, model.n_updates, 1))
    n_wk = model.n_wk.copy()
    n_k = model.n_k.copy()
    z = rng.integers(0, k, size=len(doc))
    m_k = np.bincount(z, minlength=k)
    np.add.at(n_wk, (doc, z), 1)
    n_k += m_k
    _gibbs_sweeps(n_wk, n_k, doc, z, m_k, alpha, model.beta, iters, rng)
    theta = (m_k + alpha) / (len(doc) + k * alpha)
    return TopicHistogram(theta=theta, counts=m_k)


def local_lda_update(
    models: dict,
    category: str,
    doc,
    iters: int = DEFAULT_GIBBS_ITERS,
    k: int = DEFAULT_TOPICS,
    v: int = DEFAULT_DICTIONARY_SIZE,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    seed: int = 0,
) -> dict:
    """Route a document to its category's own topic model, creating the
    model on first contact. Only that category's counters change."""
    if category not in models:
        models[category] = TopicModel(
            k=k,
            v=v,
            alpha=alpha,
            beta=beta,
            scope=category,
            rng_seed=zlib.crc32(category.encode()) ^ seed,
        )
    lda_update(models[category], doc, iters)
    return models


def phi(model: TopicModel) -> np.ndarray:
    """Word probabilities per topic: (n_wk + beta) / (n_k + V beta);
    every column sums to 1."""
    return (model.n_wk + model.beta) / (model.n_k + model.v * model.beta)


def save_topic_models(models: dict, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump({c: m.to_json_dict() for c, m in models.items()}, fh, sort_keys=True)
        fh.write("\n")


def load_topic_models(path) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        raw = json.load(fh)
    return {c: TopicModel.from_json_dict(d) for c, d in raw.items()}
