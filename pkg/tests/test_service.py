import json
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from mviz import crossmodal as CM
from mviz import data as D
from mviz import models as M
from mviz import pipeline as P
from mviz import service as SVC
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import PlantedBug, SyntheticSpec, make_synthetic_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc")
    schema = DatasetSchema(
        modalities=[ModalitySpec("img", 3, 2), ModalitySpec("txt", 3, 2)],
        num_classes=2,
        regions={
            "img": {"left": [0, 1], "right": [2]},
            "txt": {"head": [0], "tail": [1, 2]},
        },
    )
    rng = np.random.default_rng(0)
    w = {m.name: rng.normal(0, 1, size=(2, 3)) for m in schema.modalities}
    spec = SyntheticSpec(
        schema,
        w,
        noise_rate=0.0,
        bug=PlantedBug(target_class=1, modality="img", region="left", rate=1.0),
    )
    splits = make_synthetic_dataset(spec, 700, 240, 200, seed=4)
    data_dir = root / "data"
    D.save_splits(str(data_dir), schema, splits, truth=spec.truth_dict())
    model = M.train_model(
        "late_fusion", splits["train"], splits["val"], M.TrainConfig(epochs=12, seed=1)
    )
    ckpt = root / "model.ckpt"
    M.save_model(model, str(ckpt))
    reg_path = root / "registry.json"
    reg_path.write_text(
        json.dumps(
            {
                "datasets": {"demo": "data"},
                "models": {"lf": "model.ckpt"},
                "annotations": "annotations.json",
                "max_workers": 2,
                "job_budget": 2,
            }
        )
    )
    registry = SVC.load_registry(str(reg_path))
    return registry, model, splits, root


@pytest.fixture(scope="module")
def client(workspace):
    registry, _, _, _ = workspace
    return TestClient(SVC.build_app(registry))


def test_registry_view(client):
    r = client.get("/api/registry")
    assert r.status_code == 200
    body = r.json()
    assert body["datasets"]["demo"]["splits"] == {"train": 700, "val": 240, "test": 200}
    assert body["models"]["lf"]["architecture"] == "late_fusion"
    assert len(body["models"]["lf"]["digest"]) == 64


def test_datapoint_round_trip(client, workspace):
    _, _, splits, _ = workspace
    r = client.get("/api/dp/demo/test/7")
    assert r.status_code == 200
    body = r.json()
    dp = splits["test"][7]
    assert body["label"] == dp.label
    np.testing.assert_allclose(
        np.array(body["modalities"]["img"]), dp.modalities["img"], atol=1e-9
    )
    assert "rule_label" in body["meta"]


def test_datapoint_404s(client):
    assert client.get("/api/dp/nope/test/0").status_code == 404
    assert client.get("/api/dp/demo/nope/0").status_code == 404
    assert client.get("/api/dp/demo/test/99999").status_code == 404


def test_overview_matches_offline_pipeline_bytes(client, workspace):
    registry, model, splits, _ = workspace
    r = client.get("/api/analysis/demo/lf/5/overview", params={"stages": "U,P"})
    assert r.status_code == 200
    cfg = P.RunConfig(stages=("U", "P"), point_index=5)
    offline, _ = P.run_cached(model, splits, cfg)
    assert r.content == P.canonical_json(offline).encode()


def test_overview_stage_gating(client):
    r = client.get("/api/analysis/demo/lf/0/overview", params={"stages": "U"})
    body = r.json()
    assert "U" in body and "C" not in body and "P" not in body
    assert body["target"]["source"] == "model"


def test_overview_explicit_features(client):
    # representation stages without P need feature ids spelled out
    r = client.get(
        "/api/analysis/demo/lf/0/overview", params={"stages": "U,Rl"}
    )
    assert r.status_code == 400
    r = client.get(
        "/api/analysis/demo/lf/0/overview",
        params={"stages": "U,Rl", "features": "0,3"},
    )
    assert r.status_code == 200
    body = r.json()
    assert [e["feature"] for e in body["Rl"]["features"]] == [0, 3]
    r = client.get(
        "/api/analysis/demo/lf/0/overview",
        params={"stages": "U,Rl", "features": "0,x"},
    )
    assert r.status_code == 400


def test_sog_bytes_match_offline(client, workspace):
    _, model, splits, _ = workspace
    payload = {
        "query_modality": "img",
        "query_atoms": [0, 1, 2],
        "response_modality": "txt",
        "mode": "signed",
    }
    r = client.post("/api/analysis/demo/lf/3/sog", json=payload)
    assert r.status_code == 200
    offline = CM.cm_second_order(
        model, splits["test"][3], "img", (0, 1, 2), "txt", mode="signed"
    )
    assert r.content == P.canonical_json(offline.to_dict()).encode()


def test_sog_validation(client):
    r = client.post(
        "/api/analysis/demo/lf/0/sog", json={"query_modality": "img"}
    )
    assert r.status_code == 400
    r = client.post(
        "/api/analysis/demo/lf/0/sog",
        json={
            "query_modality": "img",
            "query_atoms": [0],
            "response_modality": "img",
        },
    )
    assert r.status_code == 400


def test_feature_endpoint_and_annotations(client):
    r = client.get("/api/analysis/demo/lf/2/feature/penultimate/1", params={"k": 3})
    assert r.status_code == 200
    body = r.json()
    assert len(body["profile"]["top"]) == 3
    assert set(body["local"]) == {"img", "txt"}
    # one map set per exemplar rides along with the profile
    assert len(body["profile"]["local_maps"]) == 3
    assert set(body["profile"]["local_maps"][0]) == {"img", "txt"}
    assert body["annotations"] == []

    r = client.post(
        "/api/annotations",
        json={"layer": "penultimate", "feature": 1, "concept": "left patch energy"},
    )
    assert r.status_code == 200
    assert r.json()["concepts"] == ["left patch energy"]

    r = client.get("/api/analysis/demo/lf/2/feature/penultimate/1")
    assert r.json()["annotations"] == ["left patch energy"]


def test_feature_endpoint_errors(client):
    assert (
        client.get("/api/analysis/demo/lf/0/feature/penultimate/9999").status_code
        == 404
    )
    r = client.get(
        "/api/analysis/demo/lf/0/feature/penultimate/0", params={"dir": "up"}
    )
    assert r.status_code == 400


def test_annotation_validation(client):
    assert client.post("/api/annotations", json={"layer": "x"}).status_code == 400
    assert (
        client.post(
            "/api/annotations",
            json={"layer": "penultimate", "feature": 0, "concept": "  "},
        ).status_code
        == 400
    )


def test_debug_job_end_to_end(client):
    spec = {"dataset": "demo", "model": "lf", "n": 15, "seeds": 1, "strategies": ["random"]}
    r = client.post("/api/debug/run", json=spec)
    assert r.status_code == 202
    job_id = r.json()["job_id"]
    for _ in range(300):
        body = client.get(f"/api/debug/job/{job_id}").json()
        if body["status"] in ("done", "error"):
            break
        time.sleep(0.02)
    assert body["status"] == "done", body.get("error")
    assert body["result"]["outcomes"][0]["strategy"] == "random"
    assert client.get("/api/debug/job/deadbeef").status_code == 404


def test_debug_job_validation(client):
    assert client.post("/api/debug/run", json={"model": "lf"}).status_code == 400
    assert (
        client.post("/api/debug/run", json={"dataset": "x", "model": "lf"}).status_code
        == 404
    )


def test_duplicate_job_409_and_budget_503(workspace):
    registry, _, _, _ = workspace
    gate = threading.Event()

    def blocked_runner(state, spec):
        gate.wait(timeout=10)
        return {"ok": True}

    app = SVC.build_app(registry, job_runner=blocked_runner)
    with TestClient(app) as tc:
        spec_a = {"dataset": "demo", "model": "lf", "n": 1}
        spec_b = {"dataset": "demo", "model": "lf", "n": 2}
        first = tc.post("/api/debug/run", json=spec_a)
        assert first.status_code == 202
        assert tc.post("/api/debug/run", json=spec_a).status_code == 409
        second = tc.post("/api/debug/run", json=spec_b)
        assert second.status_code == 202
        # budget of 2 is now spent
        assert (
            tc.post(
                "/api/debug/run", json={"dataset": "demo", "model": "lf", "n": 3}
            ).status_code
            == 503
        )
        gate.set()
        for jid in (first.json()["job_id"], second.json()["job_id"]):
            for _ in range(300):
                if tc.get(f"/api/debug/job/{jid}").json()["status"] == "done":
                    break
                time.sleep(0.02)
        # finished jobs free the budget and stop counting as duplicates
        assert tc.post("/api/debug/run", json=spec_a).status_code == 202


def test_registry_parse_errors(tmp_path):
    from mviz.errors import IoFailure

    bad = tmp_path / "r.json"
    bad.write_text("{not json")
    with pytest.raises(IoFailure):
        SVC.load_registry(str(bad))
    bad.write_text(json.dumps({"datasets": {}}))
    with pytest.raises(IoFailure):
        SVC.load_registry(str(bad))
