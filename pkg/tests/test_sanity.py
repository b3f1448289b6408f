import numpy as np
import pytest

from mviz import models as M
from mviz import sanity
from mviz.data import DatasetSchema, ModalitySpec
from mviz.synthetic import SyntheticSpec, make_synthetic_dataset


def _splits(seed=3):
    schema = DatasetSchema(
        modalities=[ModalitySpec("img", 4, 2), ModalitySpec("txt", 4, 2)],
        num_classes=2,
    )
    rng = np.random.default_rng(0)
    w = {m.name: rng.normal(0, 1, size=(2, 4)) for m in schema.modalities}
    spec = SyntheticSpec(schema, w, noise_rate=0.0)
    return make_synthetic_dataset(spec, 600, 100, 100, seed=seed)


@pytest.fixture(scope="module")
def setup():
    splits = _splits()
    model = M.train_model(
        "late_fusion", splits["train"], splits["val"], M.TrainConfig(epochs=15, seed=1)
    )
    return model, splits


def _constant_method(model, dp, target_class=None, **kw):
    return {
        name: type(
            "X", (), {"scores": np.ones(model.schema.modality(name).atom_count)}
        )()
        for name in model.schema.modality_names
    }


def test_randomize_head_touches_only_the_head(setup):
    model, _ = setup
    control = sanity.randomize_head(model, seed=5)
    assert not np.array_equal(control.params["W_out"], model.params["W_out"])
    for name, val in model.params.items():
        if name in ("W_out", "b_out"):
            continue
        assert control.params[name].tobytes() == val.tobytes()


def test_model_randomization_gradient_passes(setup):
    model, splits = setup
    report = sanity.model_randomization_check(
        model, splits["test"], method="gradient", num_points=12
    )
    assert report.check == "model_randomization"
    assert report.passed
    assert report.mean_correlation < 0.5
    assert len(report.correlations) == 12


def test_model_randomization_lime_passes(setup):
    model, splits = setup
    report = sanity.model_randomization_check(
        model, splits["test"], method="lime", num_points=6, num_samples=80, seed=0
    )
    assert report.passed


def test_data_randomization_gradient_passes(setup):
    model, splits = setup
    report = sanity.data_randomization_check(
        model, splits["train"], splits["test"], method="gradient", num_points=12
    )
    assert report.check == "data_randomization"
    assert report.passed
    assert report.extra["twin_near_chance"]


def test_constant_method_fails_both_checks(setup):
    model, splits = setup
    mr = sanity.model_randomization_check(
        model, splits["test"], method=_constant_method, num_points=6
    )
    dr = sanity.data_randomization_check(
        model, splits["train"], splits["test"], method=_constant_method, num_points=6
    )
    assert not mr.passed and mr.mean_correlation == 1.0
    assert not dr.passed and dr.mean_correlation == 1.0


def test_identical_models_fail():
    # degenerate control: comparing a model against itself must not pass
    splits = _splits()
    model = M.train_model("additive", splits["train"], None, M.TrainConfig(epochs=10))
    from mviz import attribution as A

    sample = splits["test"].subset(range(5))
    cors = sanity._compare_on_points(
        model, model, sample, A.METHODS["gradient"], {}
    )
    assert all(c > 0.999 for c in cors)


def test_report_round_trips_to_dict(setup):
    model, splits = setup
    report = sanity.model_randomization_check(
        model, splits["test"], method="gradient", num_points=4
    )
    d = report.to_dict()
    assert d["check"] == "model_randomization"
    assert d["passed"] is True
    assert len(d["correlations"]) == 4


def test_threshold_is_adjustable(setup):
    model, splits = setup
    report = sanity.model_randomization_check(
        model, splits["test"], method="gradient", num_points=4, threshold=-1.0
    )
    assert not report.passed
