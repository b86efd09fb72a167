"""Open-ended classifiers: the asymmetric set distance over local-feature
sets, intra-category spread normalization for unknown detection,
fixed-size nearest-neighbor modes, and the incremental naive-Bayes
model-based learner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "UNKNOWN",
    "InstanceCategory",
    "BayesCategory",
    "BayesMemory",
    "Prediction",
    "set_distance",
    "icd",
    "ocd_min",
    "ocd_mean",
    "nocd_approach1",
    "nocd_approach2",
    "classify_instances",
    "chi2",
    "kl",
    "js",
    "bayes_teach",
    "bayes_classify",
]

UNKNOWN = "UNKNOWN"


class LearningError(ValueError):
    pass


def _as_feature_matrix(rep) -> np.ndarray:
    if hasattr(rep, "as_matrix"):
        rep = rep.as_matrix()
    rep = np.asarray(rep, dtype=np.float64)
    if rep.ndim == 1:
        rep = rep.reshape(1, -1)  # a fixed-size vector is a one-feature set
    if rep.ndim != 2 or len(rep) == 0:
        raise LearningError("feature-set representation must be a non-empty 2D array")
    return rep


@dataclass
class InstanceCategory:
    """Instance store of one category plus its intra-category distance.

    ``icd`` is the mean distance over ordered instance pairs; the reference
    dataset protocol initializes it from three views, so with only two the
    value is kept but flagged provisional.
    """

    label: str
    instances: list = field(default_factory=list)
    icd: float | None = None
    icd_provisional: bool = False

    def add(self, representation):
        self.instances.append(representation)
        if len(self.instances) >= 2:
            self.icd = icd(self)
            self.icd_provisional = len(self.instances) < 3

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "instances": [np.asarray(inst).tolist() for inst in self.instances],
            "icd": self.icd,
            "icd_provisional": self.icd_provisional,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "InstanceCategory":
        return cls(
            label=data["label"],
            instances=[np.asarray(inst, dtype=np.float64) for inst in data["instances"]],
            icd=data["icd"],
            icd_provisional=data["icd_provisional"],
        )


@dataclass
class Prediction:
    """Classification outcome: winning label (or UNKNOWN), its score and
    the per-category scores it was chosen from."""

    label: str
    score: float
    scores: dict


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def set_distance(u, v) -> float:
    """Asymmetric distance between two feature sets: the average, over the
    features of U, of the distance to the nearest feature of V."""
    mu = _as_feature_matrix(u)
    mv = _as_feature_matrix(v)
    return float(cdist(mu, mv).min(axis=1).mean())


def icd(category: InstanceCategory) -> float:
    """Category spread: mean of D(U, V) over ordered pairs U != V."""
    instances = category.instances
    n = len(instances)
    if n < 2:
        raise LearningError("intra-category distance needs at least 2 instances")
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += set_distance(instances[i], instances[j])
    return total / (n * (n - 1))


def ocd_min(target, category: InstanceCategory) -> float:
    """Object-category distance, nearest-instance variant."""
    if not category.instances:
        raise LearningError(f"category {category.label!r} has no instances")
    return min(set_distance(target, inst) for inst in category.instances)


def ocd_mean(target, category: InstanceCategory) -> float:
    """Object-category distance, average-over-instances variant."""
    if not category.instances:
        raise LearningError(f"category {category.label!r} has no instances")
    return float(np.mean([set_distance(target, inst) for inst in category.instances]))


def nocd_approach1(target, category: InstanceCategory) -> float:
    """Nearest-instance distance normalized by the category's own spread."""
    if category.icd is None:
        raise LearningError(f"category {category.label!r} has no ICD yet")
    if category.icd == 0:
        raise LearningError(f"degenerate category {category.label!r}: identical instances")
    return ocd_min(target, category) / category.icd


def nocd_approach2(target, category: InstanceCategory, icd_bar: float) -> float:
    """Average distance normalized by the mean of the category spread and
    the cross-category spread average: 2 OCD / (ICD + ICD-bar)."""
    if category.icd is None:
        raise LearningError(f"category {category.label!r} has no ICD yet")
    if icd_bar <= 0:
        raise LearningError("cross-category ICD mean must be positive")
    return 2.0 * ocd_mean(target, category) / (category.icd + icd_bar)


def chi2(p, q) -> float:
    """Chi-squared histogram distance, skipping empty bin pairs."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    s = p + q
    mask = s > 0
    d = p[mask] - q[mask]
    return float(0.5 * np.sum(d * d / s[mask]))


def kl(p, q) -> float:
    """Kullback-Leibler divergence (natural log); 0 log(0/q) = 0 and
    p log(p/0) = +inf."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    mask = p > 0
    if np.any(q[mask] == 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def js(p, q) -> float:
    """Jensen-Shannon divergence KL(P, M) + KL(Q, M), M the midpoint;
    always finite and symmetric."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    return kl(p, m) + kl(q, m)


_FIXED_METRICS = {
    "L2": lambda a, b: float(np.linalg.norm(a - b)),
    "chi2": chi2,
}


def classify_instances(
    target,
    memory: list,
    mode: str = "nn_fixed",
    metric: str = "L2",
    ct: float | None = None,
) -> Prediction:
    """Instance-based classification over a list of InstanceCategory.

    Modes A1/A2 expect feature-set representations and use the normalized
    object-category distances; nn_fixed expects fixed-size vectors and
    takes the nearest stored instance under the chosen metric. The best
    (lowest) score wins, ties to the earliest category; with a
    classification threshold set, a best score above it returns UNKNOWN.
    """
    if not memory:
        raise LearningError("no categories in memory")
    scores = {}
    if mode == "A1":
        for cat in memory:
            scores[cat.label] = nocd_approach1(target, cat)
    elif mode == "A2":
        icds = [c.icd for c in memory if c.icd is not None]
        if not icds:
            raise LearningError("no category has an ICD yet")
        icd_bar = float(np.mean(icds))
        for cat in memory:
            scores[cat.label] = nocd_approach2(target, cat, icd_bar)
    elif mode == "nn_fixed":
        target_vec = np.asarray(target, dtype=np.float64)
        if target_vec.ndim != 1:
            raise LearningError("nn_fixed mode expects a fixed-size vector")
        dist = _FIXED_METRICS[metric]
        for cat in memory:
            if not cat.instances:
                raise LearningError(f"category {cat.label!r} has no instances")
            stored = np.asarray(cat.instances, dtype=np.float64)
            if stored.shape[1] != target_vec.shape[0]:
                raise LearningError("representation size mismatch")
            scores[cat.label] = min(dist(target_vec, inst) for inst in stored)
    else:
        raise LearningError(f"unknown classification mode {mode!r}")
    best_label = min(scores, key=lambda lab: (scores[lab], [c.label for c in memory].index(lab)))
    best = scores[best_label]
    if ct is not None and best > ct:
        return Prediction(label=UNKNOWN, score=best, scores=scores)
    return Prediction(label=best_label, score=best, scores=scores)


# ---------------------------------------------------------------------------
# Naive Bayes model-based learning
# ---------------------------------------------------------------------------

@dataclass
class BayesCategory:
    """Category model: instance count and per-bin accumulators."""

    label: str
    n_k: int
    accumulators: np.ndarray

    def conditionals(self) -> np.ndarray:
        """Laplace-smoothed bin probabilities (a_ki + 1) / sum_j (a_kj + 1)."""
        smoothed = self.accumulators + 1.0
        return smoothed / smoothed.sum()


class BayesMemory:
    """All category models plus the global instance counter."""

    def __init__(self):
        self.categories: dict[str, BayesCategory] = {}
        self.total = 0

    def __len__(self):
        return len(self.categories)

    def prior(self, label: str) -> float:
        return self.categories[label].n_k / self.total

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "categories": {
                lab: {"n_k": c.n_k, "accumulators": c.accumulators.tolist()}
                for lab, c in self.categories.items()
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "BayesMemory":
        memory = cls()
        memory.total = data["total"]
        for lab, c in data["categories"].items():
            memory.categories[lab] = BayesCategory(
                label=lab, n_k=c["n_k"], accumulators=np.asarray(c["accumulators"])
            )
        return memory


def _check_histogram(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or not np.all(np.isfinite(x)) or np.any(x < 0):
        raise LearningError("representation must be a finite non-negative vector")
    return x


def bayes_teach(memory: BayesMemory, label: str, x) -> BayesMemory:
    """Fold one instance into the category models.

    A new label starts a category (N_k = 1, accumulators = x); an existing
    one increments its counter and adds x bin-wise. Priors and conditionals
    follow from the counters, so teaching order cannot matter.
    """
    x = _check_histogram(x)
    memory.total += 1
    if label not in memory.categories:
        memory.categories[label] = BayesCategory(label=label, n_k=1, accumulators=x.copy())
    else:
        cat = memory.categories[label]
        if cat.accumulators.shape != x.shape:
            raise LearningError(
                f"representation size {x.shape} does not match category {label!r}"
            )
        cat.n_k += 1
        cat.accumulators = cat.accumulators + x
    return memory


def bayes_classify(memory: BayesMemory, y) -> Prediction:
    """Highest log-likelihood category for a histogram:
    log P(C_k) + sum_i y_i log P(x_i | C_k); ties go to the earliest
    taught label."""
    if not memory.categories:
        raise LearningError("no categories taught yet")
    y = _check_histogram(y)
    scores = {}
    for label, cat in memory.categories.items():
        if cat.accumulators.shape != y.shape:
            raise LearningError("representation size mismatch")
        scores[label] = float(
            np.log(memory.prior(label)) + y @ np.log(cat.conditionals())
        )
    labels = list(memory.categories)
    best_label = max(labels, key=lambda lab: (scores[lab], -labels.index(lab)))
    return Prediction(label=best_label, score=scores[best_label], scores=scores)
