"""
Finding and fixing a planted labeling bug
=========================================

The training data carries a systematic error: one class inside one region of
one modality was mislabeled.  The loop: probe where the model errs, read off
the implicated features, select unlabeled points by those features, reveal
their labels, fine-tune, and compare against random and uncertainty
selection baselines.
"""

import numpy as np

from mviz import debugging as D
from mviz import models as M
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import PlantedBug, SyntheticSpec, make_synthetic_dataset

schema = DatasetSchema(
    modalities=[ModalitySpec("img", 4, 2), ModalitySpec("txt", 4, 2)],
    num_classes=2,
    regions={"img": {"left": [0, 1], "right": [2, 3]},
             "txt": {"head": [0, 1], "tail": [2, 3]}},
)
rng = np.random.default_rng(0)
w = {m.name: rng.normal(0, 1, (2, 4)) for m in schema.modalities}
spec = SyntheticSpec(
    schema, w, noise_rate=0.0,
    bug=PlantedBug(target_class=1, modality="img", region="left", rate=1.0),
)
splits = make_synthetic_dataset(spec, 1500, 1200, 600, seed=5)
model = M.train_model("late_fusion", splits["train"], splits["val"], M.TrainConfig(epochs=15, seed=1))

# the bug shows as a gap between overall and affected-subgroup accuracy
mask = D.targeted_mask(splits["test"])
print("overall test accuracy   %.3f" % M.accuracy(model, splits["test"]))
print("affected-subgroup accuracy %.3f  (%d points)" % (
    D._subset_accuracy(model, splits["test"], mask), int(mask.sum())))

# 1. probe: regress the error indicator on |penultimate| activations
probe_set, pool, test = D.standard_split_roles(splits)
probe = D.error_probe(model, probe_set)
print("\nerror rate on probe set: %.3f" % probe.error_rate)
print("features implicated:", [t["feature"] for t in probe.top_features])

# 2. head-to-head selection strategies, averaged over seeds
report = D.debug_experiment(
    model, probe_set, pool, test,
    strategies=["random", "uncertainty", D.SelectionStrategy("feature_targeted", num_features=2)],
    n=150, seeds=5, epochs=20, lr=0.01,
)
print("\nbaseline targeted accuracy %.3f" % report.baseline_targeted)
for o in report.outcomes:
    print("  %-22s targeted %+0.3f  overall %+0.3f" % (
        o.strategy, o.mean_targeted_delta, o.mean_overall_delta))
