"""
Randomization sanity checks for attribution methods
===================================================

A method that explains a model should stop explaining it once the model is
broken.  Two controls: replace the trained head with a random one, and
retrain the same architecture on permuted labels.  A method passes when its
maps decorrelate from the originals; a method that ignores the model (here,
a constant stub) fails both.
"""

import numpy as np

from mviz import attribution as A
from mviz import models as M
from mviz import sanity
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import SyntheticSpec, make_synthetic_dataset

schema = DatasetSchema(
    modalities=[ModalitySpec("a", 4, 1), ModalitySpec("b", 4, 1)],
    num_classes=2,
)
rng = np.random.default_rng(2)
w = {m.name: rng.normal(0, 1.5, (2, 4)) for m in schema.modalities}
spec = SyntheticSpec(schema, w, noise_rate=0.0)
splits = make_synthetic_dataset(spec, 600, 100, 100, seed=4)
model = M.train_model("late_fusion", splits["train"], splits["val"], M.TrainConfig(epochs=12, seed=3))
print("test accuracy:", M.accuracy(model, splits["test"]))

for method in ("gradient", "lime"):
    mr = sanity.model_randomization_check(model, splits["test"], method=method)
    dr = sanity.data_randomization_check(model, splits["train"], splits["test"], method=method)
    print("%9s  head-randomized corr %.3f -> %s   label-permuted corr %.3f -> %s" % (
        method,
        mr.mean_correlation, "pass" if mr.passed else "FAIL",
        dr.mean_correlation, "pass" if dr.passed else "FAIL",
    ))
    # the permuted twin must sit at chance on held-out data for the control
    # to mean anything
    print("           twin held-out accuracy %.3f (chance 0.5)" % dr.extra["twin_holdout_accuracy"])


# a method that never looks at the model: same map for every input
def constant_method(model, dp, target_class=None, **kwargs):
    return {
        m.name: A.ImportanceMap(m.name, "constant", 0, np.ones(m.atom_count), {})
        for m in model.schema.modalities
    }

mr = sanity.model_randomization_check(model, splits["test"], method=constant_method)
print("\nconstant stub  head-randomized corr %.3f -> %s (as it should)" % (
    mr.mean_correlation, "pass" if mr.passed else "FAIL"))
