"""
Probing learned representations
===============================

Cache a layer's activations as a feature matrix, pull the exemplars that
drive single features, attribute a feature back to input atoms, and attach
human-readable concept annotations to what turns up.
"""

import os
import tempfile

import numpy as np

from mviz import models as M
from mviz import representation as R
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import SyntheticSpec, make_synthetic_dataset

schema = DatasetSchema(
    modalities=[ModalitySpec("img", 4, 1), ModalitySpec("txt", 4, 1)],
    num_classes=2,
)
rng = np.random.default_rng(5)
w = {m.name: rng.normal(0, 1, (2, 4)) for m in schema.modalities}
spec = SyntheticSpec(schema, w, noise_rate=0.0)
splits = make_synthetic_dataset(spec, 800, 100, 200, seed=6)
model = M.train_model("mlp_fusion", splits["train"], splits["val"], M.TrainConfig(epochs=12, seed=0))

# 1. activations of every test point at the penultimate layer
fm = R.feature_matrix(model, splits["test"], layer="penultimate",
                      provenance={"split": "test"})
print("feature matrix: %d points x %d features" % (fm.num_points, fm.dim))

# feature matrices round-trip through a binary file
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "test.fm")
    R.save_feature_matrix(fm, path)
    again = R.load_feature_matrix(path)
    print("round trip equal:", np.array_equal(fm.activations, again.activations))

# 2. which points light feature 0 up the most?
for e in R.top_activating(fm, feature=0, k=3):
    print("  point %3d  activation %+.3f  label %d  predicted %d" % (
        e["index"], e["activation"], e["label"], e["predicted"]))

# 3. what inputs is the feature reading?  gradient of the feature wrt atoms
top = R.top_activating(fm, feature=0, k=1)[0]
local = R.feature_local(model, splits["test"][top["index"]], "penultimate", 0)
for name, im in local.items():
    print("  feature 0 <- %s atoms %s" % (name, np.array2string(im.scores, precision=3)))

# 4. the global profile bundles exemplars and their local maps in one call
profile = R.feature_global(model, splits["test"], 0, layer="penultimate", k=3, with_local=True)
print("feature 0 profile: %d exemplars, direction %s" % (len(profile.top), profile.direction))

# 5. annotations persist next to the analysis, keyed by layer and feature
with tempfile.TemporaryDirectory() as tmp:
    store = os.path.join(tmp, "annotations.json")
    R.add_annotation(store, "penultimate", 0, "fires on bright img atom 2")
    R.add_annotation(store, "penultimate", 0, "class-1 evidence")
    print("stored:", R.load_annotations(store))
