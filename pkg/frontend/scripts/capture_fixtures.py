"""Capture UI test fixtures from the real analysis service.

Every fixture under tests/fixtures/ is a verbatim response body (or, for
the two stage settings the overview endpoint serves only with explicit
feature ids, the identical canonical JSON the pipeline emits). Planted
ground truth needed by assertions rides along in *_meta.json files.

Run from this directory:  python3 capture_fixtures.py
"""

import json
import os
import tempfile

import numpy as np
from fastapi.testclient import TestClient

from mviz import data as D
from mviz import models as M
from mviz import service as SVC
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import InteractionPair, SyntheticSpec, make_synthetic_dataset

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "tests", "fixtures")

ABLATION_SETTINGS = ["U", "U,C", "U,C,Rl", "U,C,Rl,Rg", "U,C,Rl,Rg,P"]
EXPLICIT_FEATURES = "0,3"
POINT = 2
CONCEPT = "bright left patch"

# bilinear interaction plan: query atom 0 of mod a meets atom 2 of mod b
# with the largest weight, atom 1 with a smaller one
PARTNER = 2
SECONDARY = 1
W_MAIN = 1.5
W_SECOND = 0.7


def write(name, payload):
    path = os.path.join(OUT, name)
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")
    print("wrote", os.path.relpath(path, HERE))


def build_workspace(root):
    schema = DatasetSchema(
        modalities=[ModalitySpec("a", 4, 1), ModalitySpec("b", 4, 1)],
        num_classes=2,
        regions={
            "a": {"lo": [0, 1], "hi": [2, 3]},
            "b": {"lo": [0, 1], "hi": [2, 3]},
        },
    )
    rng = np.random.default_rng(3)
    w = {m.name: rng.normal(0, 1, size=(2, 4)) for m in schema.modalities}
    spec = SyntheticSpec(
        schema,
        w,
        pairs=[InteractionPair("a", 0, "b", 1, 2.0, target_class=1)],
        noise_rate=0.0,
    )
    splits = make_synthetic_dataset(spec, 300, 80, 80, seed=3)
    data_dir = os.path.join(root, "data")
    D.save_splits(data_dir, schema, splits, truth=spec.truth_dict())

    fusion = M.train_model(
        "mlp_fusion",
        splits["train"],
        splits["val"],
        M.TrainConfig(epochs=30, lr=0.05, seed=6),
    )
    M.save_model(fusion, os.path.join(root, "fusion.ckpt"))

    additive = M.train_model(
        "additive",
        splits["train"],
        splits["val"],
        M.TrainConfig(epochs=10, lr=0.05, seed=6),
    )
    M.save_model(additive, os.path.join(root, "additive.ckpt"))

    # untrained bilinear with hand-set pairing so the partner is known;
    # mirrored classes keep the pairing visible for either predicted class
    bilinear = M.init_model("bilinear", schema, M.TrainConfig(seed=0))
    W = np.zeros_like(bilinear.params["W_bil"])
    W[1, 0, PARTNER] = W_MAIN
    W[1, 0, SECONDARY] = W_SECOND
    W[0] = -W[1]
    bilinear.params["W_bil"] = W
    M.save_model(bilinear, os.path.join(root, "bilinear.ckpt"))

    reg = {
        "datasets": {"demo": "data"},
        "models": {
            "fusion": "fusion.ckpt",
            "additive": "additive.ckpt",
            "bilinear": "bilinear.ckpt",
        },
        "annotations": "annotations.json",
    }
    reg_path = os.path.join(root, "registry.json")
    with open(reg_path, "w") as f:
        json.dump(reg, f)
    return SVC.load_registry(reg_path)


def main():
    os.makedirs(OUT, exist_ok=True)
    with tempfile.TemporaryDirectory() as root:
        registry = build_workspace(root)
        client = TestClient(SVC.build_app(registry))

        r = client.get("/api/registry")
        r.raise_for_status()
        write("registry.json", r.json())

        r = client.get(f"/api/dp/demo/test/{POINT}")
        r.raise_for_status()
        write("datapoint.json", r.json())

        for stages in ABLATION_SETTINGS:
            params = {"stages": stages}
            if "Rl" in stages and "P" not in stages:
                params["features"] = EXPLICIT_FEATURES
            r = client.get(
                f"/api/analysis/demo/fusion/{POINT}/overview", params=params
            )
            r.raise_for_status()
            name = "overview_" + stages.replace(",", "_") + ".json"
            write(name, r.json())

        r = client.get(
            f"/api/analysis/demo/fusion/{POINT}/feature/penultimate/0",
            params={"k": 3},
        )
        r.raise_for_status()
        write("feature_before.json", r.json())

        r = client.post(
            "/api/annotations",
            json={"layer": "penultimate", "feature": 0, "concept": CONCEPT},
        )
        r.raise_for_status()

        r = client.get(
            f"/api/analysis/demo/fusion/{POINT}/feature/penultimate/0",
            params={"k": 3},
        )
        r.raise_for_status()
        assert CONCEPT in r.json()["annotations"], "annotation did not persist"
        write("feature_after.json", r.json())

        r = client.get(
            f"/api/analysis/demo/fusion/{POINT}/feature/penultimate/0",
            params={"k": 3, "dir": "neg"},
        )
        r.raise_for_status()
        write("feature_neg.json", r.json())

        sog_body = {
            "query_modality": "a",
            "query_atoms": [0],
            "response_modality": "b",
            "mode": "absolute",
        }
        r = client.post(f"/api/analysis/demo/bilinear/{POINT}/sog", json=sog_body)
        r.raise_for_status()
        payload = r.json()
        scores = payload["scores"]
        order = sorted(range(len(scores)), key=lambda i: (-abs(scores[i]), i))
        assert order[0] == PARTNER and order[1] == SECONDARY, (
            f"service ranking {order[:2]} does not match the planted pairing"
        )
        write("sog_bilinear.json", payload)
        write(
            "sog_bilinear_meta.json",
            {
                "planted_partner": PARTNER,
                "secondary": SECONDARY,
                "query_atom": 0,
                "weights": {"partner": W_MAIN, "secondary": W_SECOND},
            },
        )

        r = client.post(f"/api/analysis/demo/additive/{POINT}/sog", json=sog_body)
        r.raise_for_status()
        assert r.json()["structural_zero"], "additive SOG should be structurally zero"
        write("sog_additive.json", r.json())

        r = client.post("/api/analysis/demo/fusion/0/sog", json={"query_modality": "a"})
        assert r.status_code == 400
        write("error_400.json", {"status": 400, "body": r.json()})

        write(
            "capture_manifest.json",
            {
                "point": POINT,
                "ablation_settings": ABLATION_SETTINGS,
                "explicit_features": EXPLICIT_FEATURES,
                "concept": CONCEPT,
            },
        )


if __name__ == "__main__":
    main()
