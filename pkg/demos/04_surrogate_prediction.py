"""
Sparse surrogate over penultimate features
==========================================

Distill the model's own predictions into an elastic-net linear model on the
penultimate layer.  The surrogate's nonzero coefficients name the features
that matter per class; the regularization path shows sparsity giving way as
the penalty relaxes.
"""

import numpy as np

from mviz import models as M
from mviz import representation as R
from mviz import surrogate as S
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import SyntheticSpec, make_synthetic_dataset

schema = DatasetSchema(
    modalities=[ModalitySpec("img", 4, 1), ModalitySpec("txt", 4, 1)],
    num_classes=3,
)
rng = np.random.default_rng(8)
w = {m.name: rng.normal(0, 1, (3, 4)) for m in schema.modalities}
spec = SyntheticSpec(schema, w, noise_rate=0.0)
splits = make_synthetic_dataset(spec, 1000, 150, 300, seed=9)
model = M.train_model("mlp_fusion", splits["train"], splits["val"], M.TrainConfig(epochs=15, seed=0))

# the surrogate learns the model's predictions, not the ground truth: it
# explains what the network does, including its mistakes
fm = R.feature_matrix(model, splits["train"])
fit = S.fit_elastic_net(fm.activations, fm.predicted, lambda1=0.02, lambda2=0.001)
print("converged:", fit.converged, "kkt residual: %.2e" % fit.kkt_residual)
print("nonzero coefficients:", fit.nonzero_count(), "of", fit.coefficient_matrix().size)

test_fm = R.feature_matrix(model, splits["test"])
agree = S.agreement(fit, test_fm.activations, test_fm.predicted)
print("surrogate agrees with the model on %.1f%% of held-out points" % (100 * agree))

# per-class feature story
for c in range(3):
    feats = S.top_features(fit, c, k=3)
    desc = ", ".join("f%d %+.3f" % (f["feature"], f["weight"]) for f in feats)
    print("  class %d leans on %s" % (c, desc))

# the lambda1 path: heavier penalty, fewer features
print("\nregularization path (largest penalty first):")
for f in S.fit_path(fm.activations, fm.predicted, num_lambdas=8):
    print("  lambda1 %.5f  nonzeros %2d  kkt %.1e" % (f.lambda1, f.nonzero_count(), f.kkt_residual))
