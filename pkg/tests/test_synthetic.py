import numpy as np
import pytest

from mviz.data import DatasetSchema, ModalitySpec
from mviz.errors import InvalidSpec
from mviz.synthetic import (
    InteractionPair,
    PlantedBug,
    SyntheticSpec,
    make_synthetic_dataset,
    region_active,
    rule_scores,
    spec_from_dict,
)


def _schema(num_classes=3):
    return DatasetSchema(
        modalities=[ModalitySpec("a", 4, 2), ModalitySpec("b", 4, 2)],
        num_classes=num_classes,
        regions={
            "a": {"r0": [0, 1], "r1": [2, 3]},
            "b": {"r0": [0, 1], "r1": [2, 3]},
        },
    )


def _weights(schema, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return {
        m.name: scale * rng.normal(0, 1, size=(schema.num_classes, m.atom_count))
        for m in schema.modalities
    }


def test_same_seed_same_bytes():
    schema = _schema()
    spec = SyntheticSpec(schema, _weights(schema), noise_rate=0.05)
    a = make_synthetic_dataset(spec, 20, 10, 10, seed=42)
    b = make_synthetic_dataset(spec, 20, 10, 10, seed=42)
    for split in ("train", "val", "test"):
        assert a[split].labels().tolist() == b[split].labels().tolist()
        for m in ("a", "b"):
            assert a[split].stacked(m).tobytes() == b[split].stacked(m).tobytes()
    c = make_synthetic_dataset(spec, 20, 10, 10, seed=43)
    assert a["train"].stacked("a").tobytes() != c["train"].stacked("a").tobytes()


def test_noise_free_labels_recoverable_from_stored_atoms():
    schema = _schema()
    spec = SyntheticSpec(schema, _weights(schema), noise_rate=0.0)
    splits = make_synthetic_dataset(spec, 50, 20, 20, seed=7)
    for ds in splits.values():
        atoms = {m: ds.stacked(m) for m in ("a", "b")}
        relabel = np.argmax(rule_scores(spec, atoms), axis=1)
        assert relabel.tolist() == ds.labels().tolist()
        assert relabel.tolist() == [dp.meta["rule_label"] for dp in ds.points]


def test_noise_flags_match_labels():
    schema = _schema()
    spec = SyntheticSpec(schema, _weights(schema), noise_rate=0.3)
    ds = make_synthetic_dataset(spec, 400, 10, 10, seed=1)["train"]
    flipped = [dp.meta["noise_flipped"] for dp in ds.points]
    mismatch = [dp.label != dp.meta["rule_label"] for dp in ds.points]
    assert flipped == mismatch
    rate = np.mean(flipped)
    assert 0.2 < rate < 0.4


def test_interaction_pairs_shift_scores():
    schema = _schema(num_classes=2)
    w = {m.name: np.zeros((2, 4)) for m in schema.modalities}
    pair = InteractionPair("a", 0, "b", 2, strength=2.0, target_class=1)
    spec = SyntheticSpec(schema, w, pairs=[pair], noise_rate=0.0)
    atoms = {
        "a": np.full((1, 4, 2), 0.5),
        "b": np.full((1, 4, 2), 0.5),
    }
    scores = rule_scores(spec, atoms)
    assert scores[0, 0] == 0.0
    assert scores[0, 1] == pytest.approx(2.0 * 0.5 * 0.5)


def test_bug_corrupts_train_only_and_flags_everywhere():
    schema = _schema()
    bug = PlantedBug(target_class=2, modality="b", region="r1", rate=1.0)
    spec = SyntheticSpec(schema, _weights(schema), noise_rate=0.0, bug=bug)
    splits = make_synthetic_dataset(spec, 600, 300, 300, seed=5)
    tr = splits["train"]
    affected = np.array([dp.meta["bug_affected"] for dp in tr.points])
    corrupted = np.array([dp.meta["bug_corrupted"] for dp in tr.points])
    assert np.array_equal(affected, corrupted)  # rate 1.0
    assert affected.sum() > 10
    atoms = {m: tr.stacked(m) for m in ("a", "b")}
    active = region_active(schema, atoms, "b", "r1")
    rule = np.array([dp.meta["rule_label"] for dp in tr.points])
    assert np.array_equal(affected, active & (rule == 2))
    labels = tr.labels()
    assert np.all(labels[corrupted] == 0)  # (2 + 1) % 3
    assert np.all(labels[~corrupted] == rule[~corrupted])
    for split in ("val", "test"):
        ds = splits[split]
        aff = np.array([dp.meta["bug_affected"] for dp in ds.points])
        cor = np.array([dp.meta["bug_corrupted"] for dp in ds.points])
        assert aff.sum() > 10
        assert cor.sum() == 0
        assert np.array_equal(ds.labels(), np.array([dp.meta["rule_label"] for dp in ds.points]))


def test_partial_bug_rate():
    schema = _schema()
    bug = PlantedBug(target_class=1, modality="a", region="r0", rate=0.5)
    spec = SyntheticSpec(schema, _weights(schema), noise_rate=0.0, bug=bug)
    tr = make_synthetic_dataset(spec, 1200, 10, 10, seed=9)["train"]
    affected = np.array([dp.meta["bug_affected"] for dp in tr.points])
    corrupted = np.array([dp.meta["bug_corrupted"] for dp in tr.points])
    assert np.all(corrupted <= affected)
    frac = corrupted.sum() / affected.sum()
    assert 0.35 < frac < 0.65


def test_spec_validation():
    schema = _schema()
    w = _weights(schema)
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, {"a": w["a"]})  # missing modality
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, {"a": np.zeros((3, 5)), "b": w["b"]})
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, w, pairs=[InteractionPair("a", 0, "a", 1, 1.0)])
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, w, pairs=[InteractionPair("a", 9, "b", 1, 1.0)])
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, w, pairs=[InteractionPair("a", 0, "b", 1, 1.0, target_class=5)])
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, w, noise_rate=1.0)
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, w, bug=PlantedBug(0, "b", "nope"))
    with pytest.raises(InvalidSpec):
        SyntheticSpec(schema, w, bug=PlantedBug(0, "b", "r1", rate=2.0))


def test_spec_from_dict_round_trip():
    schema = _schema()
    d = {
        "schema": schema.to_dict(),
        "unimodal_weights": {k: v.tolist() for k, v in _weights(schema).items()},
        "pairs": [
            {"modality_a": "a", "atom_a": 0, "modality_b": "b", "atom_b": 2, "strength": 1.5}
        ],
        "noise_rate": 0.01,
        "bug": {"target_class": 2, "modality": "b", "region": "r1", "rate": 0.8},
        "sizes": {"train": 100, "val": 20, "test": 20},
    }
    spec, sizes = spec_from_dict(d)
    assert sizes == {"train": 100, "val": 20, "test": 20}
    assert spec.pairs[0].target_class == 1  # default
    assert spec.bug.rate == 0.8
    splits = make_synthetic_dataset(spec, sizes["train"], sizes["val"], sizes["test"], seed=0)
    assert len(splits["train"]) == 100
    with pytest.raises(InvalidSpec):
        spec_from_dict({"schema": schema.to_dict()})
