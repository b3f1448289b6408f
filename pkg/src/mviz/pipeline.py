"""One-call analysis runs with canonical output and content-digest caching.

A run walks the stages in a fixed order: fit the prediction surrogate first
(when requested) so later stages can explain the class the surrogate picks,
then unimodal importance, then cross-modal interactions, then per-feature
representation profiles.  Output is canonical JSON: keys sorted, floats
printed with nine significant digits, so the same inputs give the same
bytes and a content digest can stand in for the whole run.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass

import numpy as np

from . import attribution as A
from . import crossmodal as CM
from . import models as M
from . import representation as R
from . import surrogate as S
from .data import Dataset
from .errors import InvalidSpec, IoFailure, MissingSurrogate

STAGES = ("U", "C", "Rl", "Rg", "P")
EXECUTION_ORDER = ("P", "U", "C", "Rl", "Rg")


def parse_stages(text: str) -> tuple:
    """Stage list from compact or comma form: 'U,C,Rl' or 'UCRlRgP'."""
    found = re.findall(r"Rl|Rg|U|C|P", text)
    leftover = re.sub(r"Rl|Rg|U|C|P|[,\s]", "", text)
    if leftover:
        raise InvalidSpec(f"unknown stage text {leftover!r} in {text!r}")
    return tuple(found)


@dataclass(frozen=True)
class RunConfig:
    stages: tuple = STAGES
    split: str = "test"
    point_index: int = 0
    method: str = "gradient"
    num_features: int = 2
    features: tuple | None = None  # explicit feature ids for the R stages
    top_k: int = 5
    direction: str = "pos"
    layer: str = "penultimate"
    lambda1: float = 0.01
    lambda2: float = 0.001
    sample_size: int = 64
    num_samples: int | None = None  # sampled-method budget, None = method default
    seed: int = 0

    def __post_init__(self):
        seen = []
        for s in self.stages:
            if s not in STAGES:
                raise InvalidSpec(f"unknown stage {s!r}")
            if s not in seen:
                seen.append(s)
        # store in canonical order so configs compare and digest stably;
        # an empty selection is legal and yields a metadata-only bundle
        object.__setattr__(
            self, "stages", tuple(s for s in STAGES if s in seen)
        )
        if self.features is not None:
            object.__setattr__(
                self, "features", tuple(int(f) for f in self.features)
            )

    def to_dict(self) -> dict:
        return {
            "stages": list(self.stages),
            "split": self.split,
            "point_index": self.point_index,
            "method": self.method,
            "num_features": self.num_features,
            "features": None if self.features is None else list(self.features),
            "top_k": self.top_k,
            "direction": self.direction,
            "layer": self.layer,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "sample_size": self.sample_size,
            "num_samples": self.num_samples,
            "seed": self.seed,
        }


# ---- canonical JSON --------------------------------------------------------


def _canon(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not np.isfinite(f):
            raise IoFailure(f"non-finite value {f} has no canonical form")
        out.append("%.9g" % f)
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=True))
    elif isinstance(obj, np.ndarray):
        _canon(obj.tolist(), out)
    elif isinstance(obj, dict):
        out.append("{")
        for i, k in enumerate(sorted(obj)):
            if not isinstance(k, str):
                raise IoFailure(f"non-string key {k!r} has no canonical form")
            if i:
                out.append(",")
            out.append(json.dumps(k, ensure_ascii=True))
            out.append(":")
            _canon(obj[k], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _canon(v, out)
        out.append("]")
    else:
        raise IoFailure(f"{type(obj).__name__} has no canonical form")


def canonical_json(obj) -> str:
    """Deterministic rendering: sorted keys, %.9g floats, no whitespace."""
    out: list = []
    _canon(obj, out)
    return "".join(out)


def json_digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("ascii")).hexdigest()


def dataset_digest(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(canonical_json(ds.schema.to_dict()).encode("ascii"))
    for name in ds.schema.modality_names:
        h.update(np.ascontiguousarray(ds.stacked(name), dtype=np.float64).tobytes())
    h.update(ds.labels().astype(np.int64).tobytes())
    return h.hexdigest()


def run_digest(model: M.TrainedModel, splits: dict, config: RunConfig) -> str:
    h = hashlib.sha256()
    h.update(M.model_digest(model).encode("ascii"))
    for name in sorted(splits):
        h.update(name.encode("ascii"))
        h.update(dataset_digest(splits[name]).encode("ascii"))
    h.update(canonical_json(config.to_dict()).encode("ascii"))
    return h.hexdigest()


# ---- stage execution -------------------------------------------------------


def _sampled_kwargs(config: RunConfig) -> dict:
    kw: dict = {}
    if config.method in ("lime",):
        kw["seed"] = config.seed
        if config.num_samples is not None:
            kw["num_samples"] = config.num_samples
    elif config.method == "shapley":
        kw["seed"] = config.seed
    return kw


def _stage_p(model, splits, ds, dp, config):
    fit_split = "train" if "train" in splits else config.split
    fm = R.feature_matrix(model, splits[fit_split], layer=config.layer)
    # the surrogate explains the model, so it learns the model's own labels
    fit = S.fit_elastic_net(
        fm.activations,
        fm.predicted,
        lambda1=config.lambda1,
        lambda2=config.lambda2,
        num_classes=model.num_classes,
        provenance={"split": fit_split, "layer": config.layer},
    )
    point_acts = M.layer_activation_batch(
        model, ds.subset([config.point_index]), config.layer
    )
    y_hat = int(fit.predict(point_acts)[0])
    fm_eval = R.feature_matrix(model, ds, layer=config.layer)
    agree = float(np.mean(fit.predict(fm_eval.activations) == fm_eval.predicted))
    block = fit.to_dict()
    block["fit_split"] = fit_split
    block["agreement_with_model"] = agree
    block["nonzero_count"] = fit.nonzero_count()
    return fit, y_hat, block


def _stage_u(model, dp, target, config):
    maps = A.importance(
        config.method, model, dp, target_class=target, **_sampled_kwargs(config)
    )
    return {
        "method": config.method,
        "maps": {name: maps[name].to_dict() for name in maps},
    }


def _stage_c(model, splits, ds, dp, target, config):
    names = model.schema.modality_names
    pairs = []
    for q in names:
        for r in names:
            if q == r:
                continue
            atoms = tuple(range(model.schema.modality(q).atom_count))
            imap = CM.cm_second_order(model, dp, q, atoms, r, target_class=target)
            entry = imap.to_dict()
            if model.schema.regions.get(r):
                entry["region_ranking"] = CM.region_ranking(model.schema, imap)
            pairs.append(entry)
    block: dict = {"pairs": pairs}
    if len(names) == 2:
        block["emap"] = CM.emap(
            model, ds, sample_size=config.sample_size, seed=config.seed
        ).to_dict()
        background = splits.get("train", ds)
        block["local_decomposition"] = CM.dime_local(
            model,
            dp,
            background,
            target_class=target,
            sample_size=config.sample_size,
            seed=config.seed,
        ).to_dict()
    return block


def _chosen_features(config, fit, target):
    if config.features is not None:
        return [{"feature": int(f), "weight": None} for f in config.features]
    if fit is None:
        raise MissingSurrogate(
            "representation stages rank features with the surrogate; request "
            "the P stage too or pass explicit feature ids"
        )
    return S.top_features(fit, target, k=config.num_features)


def _stage_rl(model, dp, config, chosen):
    features = []
    for item in chosen:
        j = item["feature"]
        local = R.feature_local(model, dp, config.layer, j)
        features.append(
            {
                "feature": j,
                "surrogate_weight": item["weight"],
                "maps": {m: local[m].to_dict() for m in local},
            }
        )
    return {"layer": config.layer, "features": features}


def _stage_rg(model, ds, config, chosen):
    fm = R.feature_matrix(model, ds, layer=config.layer)
    features = []
    for item in chosen:
        j = item["feature"]
        profile = R.feature_global(
            model,
            ds,
            j,
            layer=config.layer,
            k=config.top_k,
            direction=config.direction,
            fm=fm,
            with_local=True,
        )
        features.append(
            {
                "feature": j,
                "surrogate_weight": item["weight"],
                "profile": profile.to_dict(),
            }
        )
    return {"layer": config.layer, "features": features}


def run_analysis(model: M.TrainedModel, splits: dict, config: RunConfig) -> dict:
    """Execute the requested stages on one point.  Pure function of inputs."""
    if config.split not in splits:
        raise InvalidSpec(f"no split named {config.split!r}")
    ds = splits[config.split]
    if not 0 <= config.point_index < len(ds):
        raise InvalidSpec(
            f"point {config.point_index} outside split of {len(ds)} points"
        )
    dp = ds[config.point_index]
    model_pred = A.predicted_class(model, dp)

    fit = None
    result: dict = {
        "stages": list(config.stages),
        "stage_order": [s for s in EXECUTION_ORDER if s in config.stages],
        "point": {
            "split": config.split,
            "index": config.point_index,
            "label": int(dp.label),
        },
        "config": config.to_dict(),
    }

    if "P" in config.stages:
        fit, y_hat, block = _stage_p(model, splits, ds, dp, config)
        result["P"] = block
        target, source = y_hat, "surrogate"
    else:
        target, source = model_pred, "model"
    result["target"] = {
        "class": int(target),
        "source": source,
        "model_prediction": int(model_pred),
        "logits": [float(v) for v in M.predict_point_logits(model, dp)],
    }

    if "U" in config.stages:
        result["U"] = _stage_u(model, dp, target, config)
    if "C" in config.stages:
        result["C"] = _stage_c(model, splits, ds, dp, target, config)
    if "Rl" in config.stages or "Rg" in config.stages:
        chosen = _chosen_features(config, fit, target)
        if "Rl" in config.stages:
            result["Rl"] = _stage_rl(model, dp, config, chosen)
        if "Rg" in config.stages:
            result["Rg"] = _stage_rg(model, ds, config, chosen)
    return result


# ---- caching ---------------------------------------------------------------


def resolve_cache_dir(cache_dir: str | None = None) -> str | None:
    return cache_dir if cache_dir is not None else os.environ.get("MVIZ_CACHE_DIR")


def run_cached(
    model: M.TrainedModel,
    splits: dict,
    config: RunConfig,
    cache_dir: str | None = None,
) -> tuple[dict, bool]:
    """run_analysis behind a content-addressed cache.  Returns (result, hit)."""
    cache_dir = resolve_cache_dir(cache_dir)
    path = None
    if cache_dir:
        digest = run_digest(model, splits, config)
        path = os.path.join(cache_dir, f"{digest}.json")
        if os.path.exists(path):
            try:
                with open(path) as f:
                    return json.load(f), True
            except (OSError, json.JSONDecodeError) as e:
                raise IoFailure(f"corrupt cache entry {path}: {e}") from e
    # the canonical bytes are the artifact, so fresh results pass through
    # them too and a cache hit is indistinguishable from a recompute
    payload = canonical_json(run_analysis(model, splits, config))
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w") as f:
            f.write(payload)
        os.replace(tmp, path)
    return json.loads(payload), False


def _map_files(result: dict) -> dict:
    """One file per map in the bundle, keyed by relative path."""
    files: dict = {}
    if "U" in result:
        for name, m in result["U"]["maps"].items():
            files[f"maps/U_{name}.json"] = m
    if "C" in result:
        for p in result["C"]["pairs"]:
            key = f"maps/C_{p['query_modality']}__{p['response_modality']}.json"
            files[key] = p
        if "emap" in result["C"]:
            files["maps/C_emap.json"] = result["C"]["emap"]
        if "local_decomposition" in result["C"]:
            files["maps/C_decomposition.json"] = result["C"]["local_decomposition"]
    if "Rl" in result:
        for entry in result["Rl"]["features"]:
            for name, m in entry["maps"].items():
                files[f"maps/Rl_f{entry['feature']}_{name}.json"] = m
    if "Rg" in result:
        for entry in result["Rg"]["features"]:
            files[f"maps/Rg_f{entry['feature']}.json"] = entry["profile"]
    return files


def export_bundle(
    model: M.TrainedModel,
    splits: dict,
    config: RunConfig,
    out_dir: str,
) -> dict:
    """Write a run to a directory: bundle.json, one file per map, a manifest."""
    result = run_analysis(model, splits, config)
    files = {
        "bundle.json": result,
        "schema.json": model.schema.to_dict(),
        "config.json": config.to_dict(),
    }
    files.update(_map_files(result))
    os.makedirs(os.path.join(out_dir, "maps"), exist_ok=True)
    for name, payload in files.items():
        with open(os.path.join(out_dir, name), "w") as f:
            f.write(canonical_json(payload))
    manifest = {
        "digest": run_digest(model, splits, config),
        "model_digest": M.model_digest(model),
        "architecture": model.architecture,
        "stages": list(config.stages),
        "files": sorted(files),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        f.write(canonical_json(manifest))
    return manifest
