"""Schemas, datapoints, datasets, and their on-disk form.

A datapoint is a dict of per-modality atom arrays plus a label.  Atoms are the
attribution units: words, patches, sensor channels.  Continuous modalities
store float atom vectors of a fixed dimension; token modalities store one
integer id per atom (models embed them before any analysis sees them).

On disk a dataset directory holds schema.json, one JSONL file per split, and
optionally truth.json with the planted generation rule.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, IoFailure, SchemaMismatch

MODALITY_KINDS = ("continuous", "token")


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    atom_count: int
    atom_dim: int = 1
    kind: str = "continuous"
    vocab_size: int = 0  # token kind only

    def __post_init__(self):
        if self.kind not in MODALITY_KINDS:
            raise SchemaMismatch(f"unknown modality kind {self.kind!r}")
        if self.atom_count < 1 or self.atom_dim < 1:
            raise SchemaMismatch(f"modality {self.name!r}: non-positive size")
        if self.kind == "token" and self.vocab_size < 2:
            raise SchemaMismatch(f"token modality {self.name!r} needs a vocab")


@dataclass
class DatasetSchema:
    modalities: list[ModalitySpec]
    num_classes: int
    # modality name -> region name -> atom indices; regions partition the atoms
    regions: dict[str, dict[str, list[int]]] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_classes < 2:
            raise SchemaMismatch("need at least two classes")
        names = [m.name for m in self.modalities]
        if len(names) != len(set(names)):
            raise SchemaMismatch("duplicate modality names")
        if not names:
            raise SchemaMismatch("need at least one modality")
        for mod, regs in self.regions.items():
            spec = self.modality(mod)
            covered: list[int] = []
            for rname, atoms in regs.items():
                if not atoms:
                    raise SchemaMismatch(f"region {rname!r} of {mod!r} is empty")
                covered.extend(atoms)
            if sorted(covered) != list(range(spec.atom_count)):
                raise SchemaMismatch(
                    f"regions of {mod!r} must partition atoms 0..{spec.atom_count - 1}"
                )

    def modality(self, name: str) -> ModalitySpec:
        for m in self.modalities:
            if m.name == name:
                return m
        raise SchemaMismatch(f"no modality named {name!r}")

    @property
    def modality_names(self) -> list[str]:
        return [m.name for m in self.modalities]

    def point_shape(self, name: str) -> tuple[int, int]:
        m = self.modality(name)
        return (m.atom_count, 1 if m.kind == "token" else m.atom_dim)

    def to_dict(self) -> dict:
        return {
            "modalities": [
                {
                    "name": m.name,
                    "atom_count": m.atom_count,
                    "atom_dim": m.atom_dim,
                    "kind": m.kind,
                    "vocab_size": m.vocab_size,
                }
                for m in self.modalities
            ],
            "num_classes": self.num_classes,
            "regions": self.regions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        try:
            mods = [
                ModalitySpec(
                    name=m["name"],
                    atom_count=int(m["atom_count"]),
                    atom_dim=int(m.get("atom_dim", 1)),
                    kind=m.get("kind", "continuous"),
                    vocab_size=int(m.get("vocab_size", 0)),
                )
                for m in d["modalities"]
            ]
            regions = {
                mod: {r: [int(i) for i in atoms] for r, atoms in regs.items()}
                for mod, regs in d.get("regions", {}).items()
            }
            return cls(mods, int(d["num_classes"]), regions)
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaMismatch(f"bad schema dict: {e}") from e


@dataclass
class MultimodalDatapoint:
    modalities: dict[str, np.ndarray]  # name -> (atom_count, dim) float64
    label: int
    meta: dict = field(default_factory=dict)


def validate_point(schema: DatasetSchema, dp: MultimodalDatapoint) -> None:
    if set(dp.modalities) != set(schema.modality_names):
        raise SchemaMismatch(
            f"point modalities {sorted(dp.modalities)} != schema {sorted(schema.modality_names)}"
        )
    for name, arr in dp.modalities.items():
        want = schema.point_shape(name)
        if arr.shape != want:
            raise SchemaMismatch(f"modality {name!r}: shape {arr.shape}, expected {want}")
        spec = schema.modality(name)
        if spec.kind == "token":
            ids = arr.reshape(-1)
            if np.any(ids != np.round(ids)) or np.any(ids < 0) or np.any(ids >= spec.vocab_size):
                raise SchemaMismatch(f"modality {name!r}: token ids out of range")
    if not (0 <= dp.label < schema.num_classes):
        raise SchemaMismatch(f"label {dp.label} out of range")


class Dataset:
    """An in-memory split: schema, points, and optional generation truth."""

    def __init__(self, schema: DatasetSchema, points: list[MultimodalDatapoint], meta: dict | None = None):
        self.schema = schema
        self.points = points
        self.meta = meta or {}
        self._stacked: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> MultimodalDatapoint:
        return self.points[i]

    def validate(self) -> None:
        if not self.points:
            raise EmptyDataset("dataset has no points")
        for dp in self.points:
            validate_point(self.schema, dp)

    def stacked(self, name: str) -> np.ndarray:
        """All points of one modality as (N, atom_count, dim)."""
        if name not in self._stacked:
            if not self.points:
                raise EmptyDataset("dataset has no points")
            self._stacked[name] = np.stack([dp.modalities[name] for dp in self.points])
        return self._stacked[name]

    def labels(self) -> np.ndarray:
        return np.array([dp.label for dp in self.points], dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.schema, [self.points[int(i)] for i in indices], self.meta)


def point_to_dict(dp: MultimodalDatapoint) -> dict:
    return {
        "modalities": {k: v.tolist() for k, v in dp.modalities.items()},
        "label": int(dp.label),
        "meta": dp.meta,
    }


def point_from_dict(schema: DatasetSchema, d: dict) -> MultimodalDatapoint:
    try:
        mods = {
            k: np.asarray(v, dtype=np.float64) for k, v in d["modalities"].items()
        }
        dp = MultimodalDatapoint(mods, int(d["label"]), d.get("meta", {}))
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaMismatch(f"bad datapoint record: {e}") from e
    validate_point(schema, dp)
    return dp


def save_splits(out_dir: str, schema: DatasetSchema, splits: dict[str, Dataset], truth: dict | None = None) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "schema.json"), "w") as f:
            json.dump(schema.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        if truth is not None:
            with open(os.path.join(out_dir, "truth.json"), "w") as f:
                json.dump(truth, f, indent=2, sort_keys=True)
                f.write("\n")
        for split, ds in splits.items():
            with open(os.path.join(out_dir, f"{split}.jsonl"), "w") as f:
                for dp in ds.points:
                    f.write(json.dumps(point_to_dict(dp), sort_keys=True))
                    f.write("\n")
    except OSError as e:
        raise IoFailure(f"cannot write dataset to {out_dir}: {e}") from e


def load_schema(data_dir: str) -> DatasetSchema:
    path = os.path.join(data_dir, "schema.json")
    try:
        with open(path) as f:
            return DatasetSchema.from_dict(json.load(f))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise IoFailure(f"{path} is not valid JSON: {e}") from e


def load_truth(data_dir: str) -> dict:
    path = os.path.join(data_dir, "truth.json")
    if not os.path.exists(path):
        return {}
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IoFailure(f"cannot read {path}: {e}") from e


def load_split(data_dir: str, split: str) -> Dataset:
    schema = load_schema(data_dir)
    path = os.path.join(data_dir, f"{split}.jsonl")
    points = []
    try:
        with open(path) as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    points.append(point_from_dict(schema, json.loads(line)))
                except json.JSONDecodeError as e:
                    raise IoFailure(f"{path}:{line_no}: bad JSON: {e}") from e
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return Dataset(schema, points, load_truth(data_dir))


def available_splits(data_dir: str) -> list[str]:
    try:
        names = sorted(os.listdir(data_dir))
    except OSError as e:
        raise IoFailure(f"cannot list {data_dir}: {e}") from e
    return [n[:-6] for n in names if n.endswith(".jsonl")]
