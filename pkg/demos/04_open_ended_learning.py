#!/usr/bin/env python3
"""Open-ended teaching session by hand: teach a few categories, ask about
new views, watch the unknown-category rule reject an object the learner
was never taught."""

import numpy as np

from openobj.learning import (
    BayesMemory,
    InstanceCategory,
    bayes_classify,
    bayes_teach,
    classify_instances,
)
from openobj.pipelines import ExperimentConfig, build_learner
from openobj.synthgen import CategorySpec, generate_dataset

data = generate_dataset(
    [
        CategorySpec("box", "box", (0.12, 0.08, 0.05), points=200, noise_sigma=0.001),
        CategorySpec("cylinder", "cylinder", (0.035, 0.14), points=200, noise_sigma=0.001),
        CategorySpec("sphere", "sphere", (0.05,), points=200, noise_sigma=0.001),
    ],
    views_per_category=8,
    seed=11,
)

# Instance-based learner over the global descriptor.
learner = build_learner(ExperimentConfig(representation="good", learner="instance",
                                         good_bins=15))
for name in ("box", "cylinder"):
    for view in data[name][:3]:
        learner.teach(name, view)

for name in ("box", "cylinder", "sphere"):
    predictions = [learner.classify(v) for v in data[name][3:6]]
    print(f"true {name:9s} -> predicted {predictions}")

# With a classification threshold the never-taught sphere turns UNKNOWN.
from openobj.descriptors import compute_good

vec = compute_good(data["sphere"][6], n=15).bins
pred = classify_instances(vec, learner.memory, mode="nn_fixed", metric="L2", ct=0.12)
print(f"sphere with rejection threshold: {pred.label} (score {pred.score:.3f})")

# The model-based learner compresses each category into counters.
memory = BayesMemory()
rng = np.random.default_rng(0)
for name in ("box", "cylinder"):
    for view in data[name][:4]:
        histogram = np.floor(compute_good(view, n=5).bins * 100).astype(int)
        bayes_teach(memory, name, histogram)
probe = np.floor(compute_good(data["box"][7], n=5).bins * 100).astype(int)
print(f"naive Bayes on a fresh box view: {bayes_classify(memory, probe).label}")
