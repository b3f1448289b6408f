import numpy as np
import pytest

from mviz.data import (
    Dataset,
    DatasetSchema,
    ModalitySpec,
    MultimodalDatapoint,
    available_splits,
    load_split,
    save_splits,
    validate_point,
)
from mviz.errors import EmptyDataset, SchemaMismatch


def _schema():
    return DatasetSchema(
        modalities=[ModalitySpec("img", 4, 3), ModalitySpec("txt", 2, 1)],
        num_classes=3,
        regions={"img": {"left": [0, 1], "right": [2, 3]}},
    )


def _point(schema, rng, label=0):
    mods = {
        m.name: rng.uniform(-1, 1, size=schema.point_shape(m.name))
        for m in schema.modalities
    }
    return MultimodalDatapoint(mods, label, {"tag": "x"})


def test_schema_rejects_bad_regions():
    with pytest.raises(SchemaMismatch):
        DatasetSchema(
            modalities=[ModalitySpec("img", 4, 3)],
            num_classes=2,
            regions={"img": {"left": [0, 1]}},  # not a partition
        )
    with pytest.raises(SchemaMismatch):
        DatasetSchema(
            modalities=[ModalitySpec("img", 4, 3)],
            num_classes=2,
            regions={"img": {"left": [0, 1, 2], "right": [2, 3]}},  # overlap
        )


def test_schema_rejects_degenerate_shapes():
    with pytest.raises(SchemaMismatch):
        DatasetSchema(modalities=[], num_classes=2)
    with pytest.raises(SchemaMismatch):
        DatasetSchema(modalities=[ModalitySpec("a", 2)], num_classes=1)
    with pytest.raises(SchemaMismatch):
        DatasetSchema(
            modalities=[ModalitySpec("a", 2), ModalitySpec("a", 3)], num_classes=2
        )
    with pytest.raises(SchemaMismatch):
        ModalitySpec("a", 2, kind="tokenized")
    with pytest.raises(SchemaMismatch):
        ModalitySpec("a", 2, kind="token")  # no vocab


def test_point_validation():
    schema = _schema()
    rng = np.random.default_rng(0)
    dp = _point(schema, rng)
    validate_point(schema, dp)
    bad = MultimodalDatapoint({"img": dp.modalities["img"]}, 0, {})
    with pytest.raises(SchemaMismatch):
        validate_point(schema, bad)
    wrong_shape = MultimodalDatapoint(
        {"img": np.zeros((4, 2)), "txt": np.zeros((2, 1))}, 0, {}
    )
    with pytest.raises(SchemaMismatch):
        validate_point(schema, wrong_shape)
    bad_label = _point(schema, rng, label=7)
    with pytest.raises(SchemaMismatch):
        validate_point(schema, bad_label)


def test_token_ids_are_range_checked():
    schema = DatasetSchema(
        modalities=[ModalitySpec("w", 3, kind="token", vocab_size=5)], num_classes=2
    )
    ok = MultimodalDatapoint({"w": np.array([[0.0], [4.0], [2.0]])}, 1, {})
    validate_point(schema, ok)
    bad = MultimodalDatapoint({"w": np.array([[0.0], [5.0], [2.0]])}, 1, {})
    with pytest.raises(SchemaMismatch):
        validate_point(schema, bad)
    frac = MultimodalDatapoint({"w": np.array([[0.5], [1.0], [2.0]])}, 1, {})
    with pytest.raises(SchemaMismatch):
        validate_point(schema, frac)


def test_jsonl_round_trip_is_exact(tmp_path):
    schema = _schema()
    rng = np.random.default_rng(1)
    points = [_point(schema, rng, label=i % 3) for i in range(10)]
    ds = Dataset(schema, points, {"note": 1})
    save_splits(str(tmp_path), schema, {"train": ds}, truth={"note": 1})
    back = load_split(str(tmp_path), "train")
    assert len(back) == 10
    assert back.meta == {"note": 1}
    for a, b in zip(ds.points, back.points):
        assert a.label == b.label
        assert a.meta == b.meta
        for k in a.modalities:
            # json round-trips float64 exactly via repr
            assert np.array_equal(a.modalities[k], b.modalities[k])
    assert available_splits(str(tmp_path)) == ["train"]


def test_stacked_and_subset():
    schema = _schema()
    rng = np.random.default_rng(2)
    ds = Dataset(schema, [_point(schema, rng, label=i % 3) for i in range(6)])
    assert ds.stacked("img").shape == (6, 4, 3)
    assert ds.labels().tolist() == [0, 1, 2, 0, 1, 2]
    sub = ds.subset([1, 3])
    assert len(sub) == 2
    assert sub.labels().tolist() == [1, 0]
    empty = Dataset(schema, [])
    with pytest.raises(EmptyDataset):
        empty.validate()
    with pytest.raises(EmptyDataset):
        empty.stacked("img")
