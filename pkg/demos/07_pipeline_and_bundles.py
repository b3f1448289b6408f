"""
The five-stage analysis pipeline
================================

One call runs any subset of the five stages (U unimodal importance, C
cross-modal interactions, Rl local and Rg global representation probes, P
surrogate prediction) on one datapoint and returns a plain dict.  Canonical
JSON makes reruns byte-identical, which makes caching and bundle export
trivially safe.
"""

import os
import tempfile

import numpy as np

from mviz import models as M
from mviz import pipeline as P
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import InteractionPair, SyntheticSpec, make_synthetic_dataset

schema = DatasetSchema(
    modalities=[ModalitySpec("a", 4, 1), ModalitySpec("b", 4, 1)],
    num_classes=2,
    regions={"a": {"r0": [0, 1], "r1": [2, 3]}, "b": {"r0": [0, 1], "r1": [2, 3]}},
)
rng = np.random.default_rng(3)
w = {m.name: rng.normal(0, 1, (2, 4)) for m in schema.modalities}
spec = SyntheticSpec(schema, w, pairs=[InteractionPair("a", 0, "b", 1, 2.0)], noise_rate=0.0)
splits = make_synthetic_dataset(spec, 300, 80, 80, seed=3)
model = M.train_model("mlp_fusion", splits["train"], None, M.TrainConfig(epochs=6, seed=6))

# 1. the full five stages; P picks the explained class via the surrogate
config = P.RunConfig(stages=P.parse_stages("U,C,Rl,Rg,P"), point_index=1)
result = P.run_analysis(model, splits, config)
print("ran stages", result["stage_order"])
print("target class %d from %s (model predicted %d)" % (
    result["target"]["class"], result["target"]["source"],
    result["target"]["model_prediction"]))
print("surrogate agreement with model: %.3f" % result["P"]["agreement_with_model"])

# 2. progressively larger information sets, as an ablation would use them
for setting in ("U", "U,C", "U,C,Rl", "U,C,Rl,Rg", "U,C,Rl,Rg,P"):
    stages = P.parse_stages(setting)
    cfg = P.RunConfig(
        stages=stages, point_index=1,
        # without stage P there is no surrogate to pick features, so the
        # local/global probes need them given explicitly
        features=(0, 3) if "Rl" in stages and "P" not in stages else None,
    )
    out = P.run_analysis(model, splits, cfg)
    blocks = [k for k in ("U", "C", "Rl", "Rg", "P") if k in out]
    print("  %-12s -> blocks %s" % (setting, blocks))

# 3. canonical JSON: same run, same bytes
text1 = P.canonical_json(P.run_analysis(model, splits, config))
text2 = P.canonical_json(P.run_analysis(model, splits, config))
print("\nrepeated runs byte-identical:", text1 == text2, "(%d bytes)" % len(text1))

with tempfile.TemporaryDirectory() as tmp:
    # 4. the cache keys on a digest of model bytes + data bytes + config
    cache = os.path.join(tmp, "cache")
    _, hit1 = P.run_cached(model, splits, config, cache_dir=cache)
    _, hit2 = P.run_cached(model, splits, config, cache_dir=cache)
    print("first run hit=%s, second run hit=%s" % (hit1, hit2))

    # 5. bundles: one directory per run, one file per map, plus a manifest
    out_dir = os.path.join(tmp, "bundle")
    manifest = P.export_bundle(model, splits, config, out_dir)
    print("bundle digest %s..." % manifest["digest"][:16])
    for name in manifest["files"]:
        print("  ", name)
