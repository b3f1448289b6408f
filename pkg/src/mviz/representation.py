"""What individual features compute: activation matrices, top examples, and
per-point feature attributions.

A feature is one coordinate of a named layer (usually the penultimate).  The
global view of a feature is the datapoints that activate it most; the local
view is a gradient map showing which atoms of one datapoint drive it.  Both
feed the prediction analysis: the surrogate says which features matter for a
class, this module says what those features respond to.

Feature matrices cache a whole split's activations in a flat binary file so
repeated analyses and the serving layer never recompute them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import models as M
from .attribution import ImportanceMap
from .data import Dataset, DatasetSchema, MultimodalDatapoint
from .errors import InvalidSpec, IoFailure, UnknownLayer

FM_MAGIC = b"MVIZFMAT1\n"

DIRECTIONS = ("pos", "neg", "abs")


@dataclass
class FeatureMatrix:
    layer: str
    activations: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,) int64
    predicted: np.ndarray  # (N,) int64
    provenance: dict = field(default_factory=dict)

    @property
    def num_points(self) -> int:
        return self.activations.shape[0]

    @property
    def dim(self) -> int:
        return self.activations.shape[1]


def feature_matrix(
    model: M.TrainedModel,
    dataset: Dataset,
    layer: str = "penultimate",
    provenance: dict | None = None,
) -> FeatureMatrix:
    acts = M.layer_activation_batch(model, dataset, layer)
    preds = M.predict_labels(model, dataset)
    return FeatureMatrix(
        layer=layer,
        activations=np.asarray(acts, dtype=np.float64),
        labels=dataset.labels(),
        predicted=preds.astype(np.int64),
        provenance=provenance or {},
    )


def save_feature_matrix(fm: FeatureMatrix, path: str) -> None:
    header = {
        "layer": fm.layer,
        "num_points": int(fm.num_points),
        "dim": int(fm.dim),
        "provenance": fm.provenance,
    }
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "wb") as f:
            f.write(FM_MAGIC)
            f.write(json.dumps(header, sort_keys=True).encode())
            f.write(b"\n")
            f.write(np.ascontiguousarray(fm.activations, dtype=np.float64).tobytes())
            f.write(np.ascontiguousarray(fm.labels, dtype=np.int64).tobytes())
            f.write(np.ascontiguousarray(fm.predicted, dtype=np.int64).tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write feature matrix {path}: {e}") from e


def load_feature_matrix(path: str) -> FeatureMatrix:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise IoFailure(f"cannot read feature matrix {path}: {e}") from e
    if not blob.startswith(FM_MAGIC):
        raise IoFailure(f"{path} is not a feature matrix file")
    try:
        nl = blob.index(b"\n", len(FM_MAGIC))
        header = json.loads(blob[len(FM_MAGIC) : nl].decode())
        N, d = int(header["num_points"]), int(header["dim"])
        off = nl + 1
        acts = np.frombuffer(blob[off : off + N * d * 8], dtype=np.float64).reshape(N, d).copy()
        off += N * d * 8
        labels = np.frombuffer(blob[off : off + N * 8], dtype=np.int64).copy()
        off += N * 8
        predicted = np.frombuffer(blob[off : off + N * 8], dtype=np.int64).copy()
        off += N * 8
        if off != len(blob):
            raise IoFailure(f"{path}: trailing bytes")
        return FeatureMatrix(header["layer"], acts, labels, predicted, header.get("provenance", {}))
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise IoFailure(f"{path}: corrupt feature matrix: {e}") from e


def top_activating(fm: FeatureMatrix, feature: int, k: int = 5, direction: str = "pos") -> list[dict]:
    """Datapoint indices with the strongest activation of one feature.

    Deterministic: ties break toward the lower index.
    """
    if not (0 <= feature < fm.dim):
        raise InvalidSpec(f"feature {feature} out of range for dim {fm.dim}")
    if direction not in DIRECTIONS:
        raise InvalidSpec(f"direction must be one of {DIRECTIONS}")
    if k < 1:
        raise InvalidSpec("k must be positive")
    col = fm.activations[:, feature]
    if direction == "neg":
        key = col
    elif direction == "abs":
        key = -np.abs(col)
    else:
        key = -col
    order = np.lexsort((np.arange(fm.num_points), key))
    picked = order[: min(k, fm.num_points)]
    return [
        {
            "index": int(i),
            "activation": float(col[i]),
            "label": int(fm.labels[i]),
            "predicted": int(fm.predicted[i]),
        }
        for i in picked
    ]


def feature_local(
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    layer: str,
    feature: int,
    mode: str = "signed",
) -> dict[str, ImportanceMap]:
    """Gradient attribution of one feature's activation onto the point's atoms."""
    if mode not in ("signed", "absolute"):
        raise InvalidSpec(f"unknown aggregation mode {mode!r}")
    if layer not in model.layer_names:
        raise UnknownLayer(f"model has no layer {layer!r}; choose from {model.layer_names}")
    gm = M.build_graph(model)
    node = gm.layers[layer]
    width = gm.graph.shape(node)[0]
    if not (0 <= feature < width):
        raise InvalidSpec(f"feature {feature} out of range for layer {layer!r} ({width})")
    bind = gm.bindings(model, dp)
    out: dict[str, ImportanceMap] = {}
    for m in model.schema.modalities:
        grad = ad.gradient(gm.graph, bind, m.name, output=node, seed_output_index=feature)
        grid = grad.reshape(m.atom_count, model.eff_dim(m.name))
        scores = np.abs(grid).sum(axis=1) if mode == "absolute" else grid.sum(axis=1)
        out[m.name] = ImportanceMap(
            m.name, "feature_gradient", feature, scores, {"layer": layer, "mode": mode}
        )
    return out


@dataclass
class FeatureProfile:
    layer: str
    feature: int
    direction: str
    top: list[dict]
    local_maps: list[dict] | None = None  # per top point: modality -> map dict

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "feature": self.feature,
            "direction": self.direction,
            "top": self.top,
            "local_maps": self.local_maps,
        }


def feature_global(
    model: M.TrainedModel,
    dataset: Dataset,
    feature: int,
    layer: str = "penultimate",
    k: int = 5,
    direction: str = "pos",
    fm: FeatureMatrix | None = None,
    with_local: bool = False,
) -> FeatureProfile:
    """Top-k activating points of a feature, optionally with their local maps."""
    if fm is None:
        fm = feature_matrix(model, dataset, layer)
    elif fm.layer != layer:
        raise InvalidSpec(f"feature matrix holds layer {fm.layer!r}, not {layer!r}")
    top = top_activating(fm, feature, k=k, direction=direction)
    local = None
    if with_local:
        local = []
        for entry in top:
            maps = feature_local(model, dataset[entry["index"]], layer, feature)
            local.append({m: maps[m].to_dict() for m in maps})
    return FeatureProfile(layer, feature, direction, top, local)


def region_energy(schema: DatasetSchema, dp: MultimodalDatapoint, modality: str, region: str) -> float:
    """Mean absolute atom summary over one region of one point."""
    regions = schema.regions.get(modality)
    if not regions or region not in regions:
        raise InvalidSpec(f"no region {region!r} for modality {modality!r}")
    idx = regions[region]
    summaries = dp.modalities[modality].mean(axis=1)
    return float(np.mean(np.abs(summaries[idx])))


# ---- annotations -----------------------------------------------------------


def load_annotations(path: str) -> dict:
    """Sidecar file mapping 'layer:feature' to user concept strings."""
    if not os.path.exists(path):
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IoFailure(f"cannot read annotations {path}: {e}") from e


def add_annotation(path: str, layer: str, feature: int, concept: str) -> list[str]:
    """Append one concept string; returns the feature's full list."""
    if not concept or not concept.strip():
        raise InvalidSpec("empty concept string")
    notes = load_annotations(path)
    key = f"{layer}:{int(feature)}"
    notes.setdefault(key, []).append(concept.strip())
    tmp = path + ".tmp"
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(tmp, "w") as f:
            json.dump(notes, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"cannot write annotations {path}: {e}") from e
    return notes[key]
