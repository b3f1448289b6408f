"""Synthetic multimodal classification tasks with known ground truth.

Atoms are drawn i.i.d. uniform on [-1, 1].  Class scores are a linear rule
over per-atom summaries (the mean over an atom's components) plus optional
planted cross-modal pairs, each adding strength * summary_a * summary_b to one
target class.  Labels are the argmax, with a small flip-noise rate.  A planted
bug corrupts the labels of one class-within-region subpopulation in the train
split only, so a debugging workflow has something real to find.

Per-point meta keeps the pre-noise rule label and the noise / bug flags; the
global rule itself (weights, pairs, bug) is the dataset truth record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, DatasetSchema, MultimodalDatapoint
from .errors import InvalidSpec

DEFAULT_NOISE_RATE = 0.02


@dataclass(frozen=True)
class InteractionPair:
    modality_a: str
    atom_a: int
    modality_b: str
    atom_b: int
    strength: float
    target_class: int = 1

    def to_dict(self) -> dict:
        return {
            "modality_a": self.modality_a,
            "atom_a": self.atom_a,
            "modality_b": self.modality_b,
            "atom_b": self.atom_b,
            "strength": self.strength,
            "target_class": self.target_class,
        }


@dataclass(frozen=True)
class PlantedBug:
    target_class: int
    modality: str
    region: str
    rate: float = 1.0

    def to_dict(self) -> dict:
        return {
            "target_class": self.target_class,
            "modality": self.modality,
            "region": self.region,
            "rate": self.rate,
        }


@dataclass
class SyntheticSpec:
    schema: DatasetSchema
    unimodal_weights: dict[str, np.ndarray]  # modality -> (num_classes, atom_count)
    pairs: list[InteractionPair] = field(default_factory=list)
    noise_rate: float = DEFAULT_NOISE_RATE
    bug: PlantedBug | None = None

    def __post_init__(self):
        C = self.schema.num_classes
        for m in self.schema.modalities:
            if m.kind != "continuous":
                raise InvalidSpec("synthetic tasks are continuous-modality only")
        if set(self.unimodal_weights) != set(self.schema.modality_names):
            raise InvalidSpec("unimodal weights must cover every modality")
        for name, w in self.unimodal_weights.items():
            w = np.asarray(w, dtype=np.float64)
            self.unimodal_weights[name] = w
            want = (C, self.schema.modality(name).atom_count)
            if w.shape != want:
                raise InvalidSpec(f"weights for {name!r}: shape {w.shape}, expected {want}")
            if not np.all(np.isfinite(w)):
                raise InvalidSpec(f"weights for {name!r} contain non-finite values")
        for p in self.pairs:
            if p.modality_a == p.modality_b:
                raise InvalidSpec("interaction pairs must join two different modalities")
            for mod, atom in ((p.modality_a, p.atom_a), (p.modality_b, p.atom_b)):
                spec = self.schema.modality(mod)
                if not (0 <= atom < spec.atom_count):
                    raise InvalidSpec(f"pair atom {atom} out of range for {mod!r}")
            if not (0 <= p.target_class < C):
                raise InvalidSpec(f"pair target class {p.target_class} out of range")
            if not np.isfinite(p.strength):
                raise InvalidSpec("pair strength must be finite")
        if not (0.0 <= self.noise_rate < 1.0):
            raise InvalidSpec(f"noise rate {self.noise_rate} out of [0, 1)")
        if self.bug is not None:
            b = self.bug
            if not (0 <= b.target_class < C):
                raise InvalidSpec(f"bug target class {b.target_class} out of range")
            if b.modality not in self.schema.regions or b.region not in self.schema.regions[b.modality]:
                raise InvalidSpec(f"bug region {b.modality}/{b.region} not in schema")
            if not (0.0 <= b.rate <= 1.0):
                raise InvalidSpec(f"bug rate {b.rate} out of [0, 1]")

    def truth_dict(self) -> dict:
        return {
            "unimodal_weights": {k: v.tolist() for k, v in self.unimodal_weights.items()},
            "pairs": [p.to_dict() for p in self.pairs],
            "noise_rate": self.noise_rate,
            "bug": self.bug.to_dict() if self.bug else None,
        }


def spec_from_dict(d: dict) -> tuple[SyntheticSpec, dict]:
    """Parse the gen-data description: spec plus split sizes."""
    try:
        schema = DatasetSchema.from_dict(d["schema"])
        weights = {k: np.asarray(v, dtype=np.float64) for k, v in d["unimodal_weights"].items()}
        pairs = [
            InteractionPair(
                modality_a=p["modality_a"],
                atom_a=int(p["atom_a"]),
                modality_b=p["modality_b"],
                atom_b=int(p["atom_b"]),
                strength=float(p["strength"]),
                target_class=int(p.get("target_class", 1)),
            )
            for p in d.get("pairs", [])
        ]
        bug = None
        if d.get("bug"):
            b = d["bug"]
            bug = PlantedBug(
                target_class=int(b["target_class"]),
                modality=b["modality"],
                region=b["region"],
                rate=float(b.get("rate", 1.0)),
            )
        spec = SyntheticSpec(
            schema=schema,
            unimodal_weights=weights,
            pairs=pairs,
            noise_rate=float(d.get("noise_rate", DEFAULT_NOISE_RATE)),
            bug=bug,
        )
        sizes = {k: int(v) for k, v in d.get("sizes", {}).items()}
        return spec, sizes
    except (KeyError, TypeError, ValueError) as e:
        raise InvalidSpec(f"bad task description: {e}") from e


def rule_scores(spec: SyntheticSpec, atoms: dict[str, np.ndarray]) -> np.ndarray:
    """Class scores (N, C) of the planted rule on stacked atoms (N, atoms, dim)."""
    C = spec.schema.num_classes
    some = next(iter(atoms.values()))
    N = some.shape[0]
    summaries = {m: atoms[m].mean(axis=2) for m in atoms}  # (N, atom_count)
    scores = np.zeros((N, C))
    for m, w in spec.unimodal_weights.items():
        scores += summaries[m] @ w.T
    for p in spec.pairs:
        prod = summaries[p.modality_a][:, p.atom_a] * summaries[p.modality_b][:, p.atom_b]
        scores[:, p.target_class] += p.strength * prod
    return scores


def region_active(schema: DatasetSchema, atoms: dict[str, np.ndarray], modality: str, region: str) -> np.ndarray:
    """Boolean (N,): mean atom summary over the region is positive."""
    idx = schema.regions[modality][region]
    summaries = atoms[modality].mean(axis=2)  # (N, atom_count)
    return summaries[:, idx].mean(axis=1) > 0.0


def make_synthetic_dataset(
    spec: SyntheticSpec,
    n_train: int,
    n_val: int,
    n_test: int,
    seed: int,
) -> dict[str, Dataset]:
    """Generate train/val/test splits.  Same arguments, same bytes."""
    if min(n_train, n_val, n_test) < 1:
        raise InvalidSpec("every split needs at least one point")
    rng = np.random.default_rng(seed)
    C = spec.schema.num_classes
    truth = spec.truth_dict()
    truth["seed"] = seed
    out: dict[str, Dataset] = {}
    for split, n in (("train", n_train), ("val", n_val), ("test", n_test)):
        atoms = {
            m.name: rng.uniform(-1.0, 1.0, size=(n, m.atom_count, m.atom_dim))
            for m in spec.schema.modalities
        }
        scores = rule_scores(spec, atoms)
        rule_labels = np.argmax(scores, axis=1)
        labels = rule_labels.copy()
        flip = rng.random(n) < spec.noise_rate
        if np.any(flip):
            # flip to a uniformly random other class
            shift = rng.integers(1, C, size=n)
            labels[flip] = (labels[flip] + shift[flip]) % C
        affected = np.zeros(n, dtype=bool)
        corrupted = np.zeros(n, dtype=bool)
        if spec.bug is not None:
            b = spec.bug
            active = region_active(spec.schema, atoms, b.modality, b.region)
            affected = active & (rule_labels == b.target_class)
            if split == "train":
                corrupted = affected & (rng.random(n) < b.rate)
                labels[corrupted] = (b.target_class + 1) % C
        points = []
        for i in range(n):
            meta = {
                "rule_label": int(rule_labels[i]),
                "noise_flipped": bool(flip[i]),
                "bug_affected": bool(affected[i]),
                "bug_corrupted": bool(corrupted[i]),
            }
            mods = {m: atoms[m][i] for m in atoms}
            points.append(MultimodalDatapoint(mods, int(labels[i]), meta))
        out[split] = Dataset(spec.schema, points, truth)
    return out
