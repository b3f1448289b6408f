"""
The analysis service over HTTP
==============================

The same pipeline, behind JSON endpoints: a registry names datasets and
model checkpoints on disk, the app serves datapoints, overview analyses,
live interaction maps, feature profiles with annotations, and asynchronous
debugging jobs.  Responses are canonical JSON, so an offline run and a
served run of the same request produce the same bytes.

This demo drives the app in-process through the test client; `mviz serve
--registry registry.json` runs the same app on a real port.
"""

import json
import tempfile
import time

import numpy as np
from fastapi.testclient import TestClient

from mviz import data as D
from mviz import models as M
from mviz import service as SVC
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import PlantedBug, SyntheticSpec, make_synthetic_dataset

tmp = tempfile.TemporaryDirectory()
root = tmp.name

# 1. put a dataset and a checkpoint on disk, point a registry at them
schema = DatasetSchema(
    modalities=[ModalitySpec("img", 3, 2), ModalitySpec("txt", 3, 2)],
    num_classes=2,
    regions={"img": {"left": [0, 1], "right": [2]},
             "txt": {"head": [0], "tail": [1, 2]}},
)
rng = np.random.default_rng(0)
w = {m.name: rng.normal(0, 1, (2, 3)) for m in schema.modalities}
spec = SyntheticSpec(
    schema, w, noise_rate=0.0,
    bug=PlantedBug(target_class=1, modality="img", region="left", rate=1.0),
)
splits = make_synthetic_dataset(spec, 700, 400, 200, seed=4)
D.save_splits(root + "/data", schema, splits, truth=spec.truth_dict())
model = M.train_model("mlp_fusion", splits["train"], splits["val"], M.TrainConfig(epochs=12, seed=1))
M.save_model(model, root + "/model.ckpt")
with open(root + "/registry.json", "w") as f:
    json.dump({"datasets": {"demo": "data"}, "models": {"fusion": "model.ckpt"}}, f)

app = SVC.build_app(SVC.load_registry(root + "/registry.json"))
client = TestClient(app)

# 2. what does the service know about?
view = client.get("/api/registry").json()
print("datasets:", list(view["datasets"]))
print("models:", {k: v["architecture"] for k, v in view["models"].items()})

# 3. one datapoint, then a two-stage analysis of it
dp = client.get("/api/dp/demo/test/0").json()
print("\npoint 0 label", dp["label"])
overview = client.get("/api/analysis/demo/fusion/0/overview", params={"stages": "U,C"}).json()
print("analysis blocks:", [k for k in ("U", "C", "Rl", "Rg", "P") if k in overview])

# 4. a live interaction query: which txt atoms partner img atom 0?
sog = client.post(
    "/api/analysis/demo/fusion/0/sog",
    json={"query_modality": "img", "query_atoms": [0],
          "response_modality": "txt", "mode": "absolute"},
).json()
print("interaction scores over txt atoms:", [round(s, 4) for s in sog["scores"]])

# 5. feature inspection plus a persisted annotation
client.post("/api/annotations",
            json={"layer": "penultimate", "feature": 0, "concept": "demo note"})
feat = client.get("/api/analysis/demo/fusion/0/feature/penultimate/0").json()
print("feature 0 annotations:", feat["annotations"])

# 6. an asynchronous debugging job, polled to completion
job = client.post("/api/debug/run", json={
    "dataset": "demo", "model": "fusion",
    "strategies": ["random", "feature_targeted"],
    "n": 150, "seeds": 3, "epochs": 20, "lr": 0.01,
}).json()
print("\njob", job["job_id"], "accepted")
while True:
    status = client.get("/api/debug/job/" + job["job_id"]).json()
    if status["status"] in ("done", "error"):
        break
    time.sleep(0.1)
print("job finished:", status["status"])
for o in status["result"]["outcomes"]:
    print("  %-22s targeted %+0.3f" % (o["strategy"], o["mean_targeted_delta"]))

tmp.cleanup()
