"""HTTP analysis service.

Serves datasets, models, and analysis runs from a registry file.  All
responses are canonical JSON (sorted keys, nine significant digits), so a
payload computed here is byte for byte the payload the offline pipeline
writes.  Debug experiments run as background jobs on a bounded pool with a
polling endpoint; duplicate submissions are rejected while the original is
still in flight.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import crossmodal as CM
from . import data as D
from . import debugging as DBG
from . import models as M
from . import pipeline as P
from . import representation as R
from .errors import IoFailure, MvizError


@dataclass
class Registry:
    datasets: dict  # name -> data directory
    models: dict  # name -> checkpoint path
    annotations: str = "annotations.json"
    cache_dir: str | None = None
    max_workers: int = 2
    job_budget: int = 4


def load_registry(path: str) -> Registry:
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IoFailure(f"cannot read registry {path}: {e}") from e
    if "datasets" not in raw or "models" not in raw:
        raise IoFailure(f"registry {path} needs 'datasets' and 'models'")
    base = os.path.dirname(os.path.abspath(path))

    def _abs(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    return Registry(
        datasets={k: _abs(v) for k, v in raw["datasets"].items()},
        models={k: _abs(v) for k, v in raw["models"].items()},
        annotations=_abs(raw.get("annotations", "annotations.json")),
        cache_dir=_abs(raw["cache_dir"]) if raw.get("cache_dir") else None,
        max_workers=int(raw.get("max_workers", 2)),
        job_budget=int(raw.get("job_budget", 4)),
    )


class _ApiError(Exception):
    def __init__(self, status: int, detail: str):
        self.status = status
        self.detail = detail


def _canonical(payload, status: int = 200) -> Response:
    return Response(
        content=P.canonical_json(payload),
        status_code=status,
        media_type="application/json",
    )


class AppState:
    """Lazily loaded datasets and models plus the debug job table."""

    def __init__(self, registry: Registry, job_runner=None):
        self.registry = registry
        self._splits: dict = {}
        self._models: dict = {}
        self._load_lock = threading.Lock()
        self.executor = ThreadPoolExecutor(max_workers=registry.max_workers)
        self.jobs: dict = {}
        self.jobs_lock = threading.Lock()
        self.job_runner = job_runner or _run_debug_job

    def splits(self, name: str) -> dict:
        if name not in self.registry.datasets:
            raise _ApiError(404, f"unknown dataset {name!r}")
        with self._load_lock:
            if name not in self._splits:
                d = self.registry.datasets[name]
                try:
                    self._splits[name] = {
                        s: D.load_split(d, s) for s in D.available_splits(d)
                    }
                except MvizError as e:
                    raise _ApiError(500, str(e)) from e
            return self._splits[name]

    def model(self, name: str) -> M.TrainedModel:
        if name not in self.registry.models:
            raise _ApiError(404, f"unknown model {name!r}")
        with self._load_lock:
            if name not in self._models:
                try:
                    self._models[name] = M.load_model(self.registry.models[name])
                except MvizError as e:
                    raise _ApiError(500, str(e)) from e
            return self._models[name]

    def point(self, dataset: str, split: str, index: int):
        splits = self.splits(dataset)
        if split not in splits:
            raise _ApiError(404, f"dataset has no split {split!r}")
        ds = splits[split]
        if not 0 <= index < len(ds):
            raise _ApiError(404, f"point {index} outside split of {len(ds)}")
        return ds[index]


def _run_debug_job(state: AppState, spec: dict) -> dict:
    model = state.model(spec["model"])
    splits = state.splits(spec["dataset"])
    probe_set, pool, test = DBG.standard_split_roles(splits)
    strategies = []
    for s in spec.get("strategies", ["random", "uncertainty", "feature_targeted"]):
        if isinstance(s, str):
            strategies.append(
                DBG.SelectionStrategy(s, num_features=int(spec.get("num_features", 2)))
                if s == "feature_targeted"
                else DBG.SelectionStrategy(s)
            )
        else:
            strategies.append(DBG.SelectionStrategy(**s))
    report = DBG.debug_experiment(
        model,
        probe_set,
        pool,
        test,
        strategies=strategies,
        n=int(spec.get("n", 50)),
        seeds=int(spec.get("seeds", 3)),
        epochs=int(spec.get("epochs", 1)),
        lr=spec.get("lr"),
    )
    return report.to_dict()


def _job_signature(spec: dict) -> str:
    return P.json_digest(spec)


def build_app(registry: Registry, job_runner=None) -> FastAPI:
    app = FastAPI(title="mviz analysis service", docs_url=None, redoc_url=None)
    state = AppState(registry, job_runner=job_runner)
    app.state.mviz = state

    @app.exception_handler(_ApiError)
    async def _api_error(_: Request, exc: _ApiError):
        return JSONResponse({"detail": exc.detail}, status_code=exc.status)

    @app.exception_handler(MvizError)
    async def _mviz_error(_: Request, exc: MvizError):
        return JSONResponse({"detail": str(exc)}, status_code=400)

    @app.get("/api/registry")
    def registry_view():
        datasets = {}
        for name, d in registry.datasets.items():
            try:
                datasets[name] = {
                    "splits": {s: len(state.splits(name)[s]) for s in state.splits(name)},
                    "schema": D.load_schema(d).to_dict(),
                }
            except (MvizError, _ApiError) as e:
                datasets[name] = {"error": str(e)}
        models = {}
        for name in registry.models:
            try:
                m = state.model(name)
                models[name] = {
                    "architecture": m.architecture,
                    "digest": M.model_digest(m),
                    "layers": m.layer_names,
                    "info": m.info,
                }
            except _ApiError as e:
                models[name] = {"error": e.detail}
        return _canonical({"datasets": datasets, "models": models})

    @app.get("/api/dp/{dataset}/{split}/{index}")
    def datapoint(dataset: str, split: str, index: int):
        dp = state.point(dataset, split, index)
        return _canonical(
            {
                "modalities": {k: v.tolist() for k, v in dp.modalities.items()},
                "label": int(dp.label),
                "meta": dp.meta,
            }
        )

    @app.get("/api/analysis/{dataset}/{model}/{index}/overview")
    def overview(
        dataset: str,
        model: str,
        index: int,
        stages: str = "U,C,Rl,Rg,P",
        split: str = "test",
        method: str = "gradient",
        num_features: int = 2,
        features: str | None = None,
        top_k: int = 5,
        seed: int = 0,
    ):
        m = state.model(model)
        splits = state.splits(dataset)
        try:
            chosen = (
                tuple(int(x) for x in features.split(",")) if features else None
            )
        except ValueError:
            raise _ApiError(400, "features must be a comma list of integers")
        cfg = P.RunConfig(
            stages=P.parse_stages(stages),
            split=split,
            point_index=index,
            method=method,
            num_features=num_features,
            features=chosen,
            top_k=top_k,
            seed=seed,
        )
        result, _ = P.run_cached(m, splits, cfg, cache_dir=registry.cache_dir)
        return _canonical(result)

    @app.get("/api/analysis/{dataset}/{model}/{index}/feature/{layer}/{feature}")
    def feature_view(
        dataset: str,
        model: str,
        index: int,
        layer: str,
        feature: int,
        k: int = 5,
        dir: str = "pos",
        split: str = "test",
    ):
        m = state.model(model)
        splits = state.splits(dataset)
        if split not in splits:
            raise _ApiError(404, f"dataset has no split {split!r}")
        ds = splits[split]
        if not 0 <= index < len(ds):
            raise _ApiError(404, f"point {index} outside split of {len(ds)}")
        if not 0 <= feature < m.penultimate_dim and layer == "penultimate":
            raise _ApiError(404, f"no feature {feature} in layer {layer!r}")
        if dir not in R.DIRECTIONS:
            raise _ApiError(400, f"direction must be one of {R.DIRECTIONS}")
        dp = ds[index]
        # exemplar entries carry their own maps so clients need no second pass
        profile = R.feature_global(
            m, ds, feature, layer=layer, k=k, direction=dir, with_local=True
        )
        local = R.feature_local(m, dp, layer, feature)
        concepts = R.load_annotations(registry.annotations).get(
            f"{layer}:{feature}", []
        )
        return _canonical(
            {
                "profile": profile.to_dict(),
                "local": {name: local[name].to_dict() for name in local},
                "annotations": concepts,
            }
        )

    @app.post("/api/analysis/{dataset}/{model}/{index}/sog")
    async def sog(dataset: str, model: str, index: int, request: Request):
        body = await request.json()
        m = state.model(model)
        split = body.get("split", "test")
        dp = state.point(dataset, split, index)
        try:
            imap = CM.cm_second_order(
                m,
                dp,
                body["query_modality"],
                tuple(int(a) for a in body["query_atoms"]),
                body["response_modality"],
                target_class=body.get("target_class"),
                mode=body.get("mode", "signed"),
            )
        except KeyError as e:
            raise _ApiError(400, f"missing field {e}") from e
        return _canonical(imap.to_dict())

    @app.post("/api/debug/run")
    async def debug_run(request: Request):
        spec = await request.json()
        for key in ("dataset", "model"):
            if key not in spec:
                raise _ApiError(400, f"missing field {key!r}")
        if spec["dataset"] not in registry.datasets:
            raise _ApiError(404, f"unknown dataset {spec['dataset']!r}")
        if spec["model"] not in registry.models:
            raise _ApiError(404, f"unknown model {spec['model']!r}")
        signature = _job_signature(spec)
        with state.jobs_lock:
            active = [
                j for j in state.jobs.values() if j["status"] in ("queued", "running")
            ]
            for j in active:
                if j["signature"] == signature:
                    raise _ApiError(409, "an identical job is already in flight")
            if len(active) >= registry.job_budget:
                raise _ApiError(503, "job budget exhausted, retry later")
            job_id = uuid.uuid4().hex
            state.jobs[job_id] = {
                "status": "queued",
                "signature": signature,
                "result": None,
                "error": None,
            }

        def _work():
            with state.jobs_lock:
                state.jobs[job_id]["status"] = "running"
            try:
                result = state.job_runner(state, spec)
                with state.jobs_lock:
                    state.jobs[job_id].update(status="done", result=result)
            except Exception as e:  # job table carries the failure
                with state.jobs_lock:
                    state.jobs[job_id].update(status="error", error=str(e))

        state.executor.submit(_work)
        return _canonical({"job_id": job_id}, status=202)

    @app.get("/api/debug/job/{job_id}")
    def debug_job(job_id: str):
        with state.jobs_lock:
            job = state.jobs.get(job_id)
            if job is None:
                raise _ApiError(404, f"no job {job_id!r}")
            payload = {
                "job_id": job_id,
                "status": job["status"],
                "result": job["result"],
                "error": job["error"],
            }
        return _canonical(payload)

    @app.post("/api/annotations")
    async def annotate(request: Request):
        body = await request.json()
        for key in ("layer", "feature", "concept"):
            if key not in body:
                raise _ApiError(400, f"missing field {key!r}")
        concept = str(body["concept"]).strip()
        if not concept:
            raise _ApiError(400, "empty concept")
        concepts = R.add_annotation(
            registry.annotations, str(body["layer"]), int(body["feature"]), concept
        )
        return _canonical(
            {
                "layer": str(body["layer"]),
                "feature": int(body["feature"]),
                "concepts": concepts,
            }
        )

    return app
