import numpy as np
import pytest

from mviz import autodiff as ad
from mviz import crossmodal as CM
from mviz import models as M
from mviz.data import Dataset, DatasetSchema, ModalitySpec, MultimodalDatapoint
from mviz.errors import EmptyAtomSet, InvalidSpec, SampleTooSmall
from mviz.synthetic import InteractionPair, SyntheticSpec, make_synthetic_dataset


def _pair_schema(a_atoms=4, b_atoms=4, dim=1, classes=2, regions=True):
    reg = {}
    if regions:
        half_a = a_atoms // 2
        half_b = b_atoms // 2
        reg = {
            "a": {"r0": list(range(half_a)), "r1": list(range(half_a, a_atoms))},
            "b": {"r0": list(range(half_b)), "r1": list(range(half_b, b_atoms))},
        }
    return DatasetSchema(
        modalities=[ModalitySpec("a", a_atoms, dim), ModalitySpec("b", b_atoms, dim)],
        num_classes=classes,
        regions=reg,
    )


def _bilinear_model(schema, seed=0):
    model = M.init_model("bilinear", schema, M.TrainConfig(seed=seed))
    return model


def _point(schema, seed=0):
    rng = np.random.default_rng(seed)
    mods = {
        m.name: rng.uniform(-1, 1, size=(m.atom_count, m.atom_dim))
        for m in schema.modalities
    }
    return MultimodalDatapoint(mods, 0, {})


def test_second_order_map_on_bilinear_equals_weight_rows():
    # f_c = x1' W_c x2, so d/dx2 of sum_{i in Q} (df/dx1)_i is sum of W rows
    schema = _pair_schema()
    model = _bilinear_model(schema, seed=2)
    dp = _point(schema, seed=1)
    W = model.params["W_bil"]
    for target in (0, 1):
        for atoms in ([0], [1, 3], [0, 1, 2, 3]):
            m = CM.cm_second_order(model, dp, "a", atoms, "b", target_class=target)
            want = W[target][atoms, :].sum(axis=0)
            np.testing.assert_allclose(m.scores, want, atol=1e-9)
            assert not m.structural_zero


def test_second_order_map_query_direction_flips():
    schema = _pair_schema()
    model = _bilinear_model(schema, seed=3)
    dp = _point(schema, seed=2)
    W = model.params["W_bil"][0]
    m = CM.cm_second_order(model, dp, "b", [2], "a", target_class=0)
    np.testing.assert_allclose(m.scores, W[:, 2], atol=1e-9)


def test_absolute_mode_freezes_first_gradient_signs():
    schema = _pair_schema()
    model = _bilinear_model(schema, seed=4)
    dp = _point(schema, seed=3)
    W = model.params["W_bil"][0]
    x2 = dp.modalities["b"].reshape(-1)
    atoms = [0, 2]
    signs = np.sign(W[atoms, :] @ x2)  # sign of each query component of grad_1
    want = np.abs(signs @ W[atoms, :])
    m = CM.cm_second_order(model, dp, "a", atoms, "b", target_class=0, mode="absolute")
    np.testing.assert_allclose(m.scores, want, atol=1e-9)


def test_additive_and_late_fusion_maps_are_structurally_zero():
    schema = _pair_schema()
    for arch in ("additive", "late_fusion"):
        model = M.init_model(arch, schema, M.TrainConfig(seed=5))
        dp = _point(schema, seed=4)
        m = CM.cm_second_order(model, dp, "a", [0, 1], "b", target_class=1)
        assert m.structural_zero
        assert m.scores.tobytes() == b"\x00" * m.scores.nbytes


def test_second_order_matches_finite_differences_on_mlp():
    schema = _pair_schema(a_atoms=3, b_atoms=3)
    spec = SyntheticSpec(
        schema,
        {m.name: np.random.default_rng(0).normal(0, 1, (2, m.atom_count)) for m in schema.modalities},
        pairs=[InteractionPair("a", 0, "b", 1, 2.0)],
        noise_rate=0.0,
    )
    splits = make_synthetic_dataset(spec, 600, 100, 100, seed=1)
    model = M.train_model("mlp_fusion", splits["train"], None, M.TrainConfig(epochs=8, seed=1))
    dp = splits["val"][0]
    atoms = [0, 2]
    target = 1
    got = CM.cm_second_order(model, dp, "a", atoms, "b", target_class=target)
    gm = M.build_graph(model)
    slices = [(i, i + 1) for i in range(3)]  # dim 1

    def agg_first(x2_flat):
        bind = gm.bindings(model, dp)
        bind["b"] = x2_flat
        g1 = ad.gradient(gm.graph, bind, "a", output=gm.logits, seed_output_index=target)
        return sum(g1[a] for a in atoms)

    x2 = dp.modalities["b"].reshape(-1).copy()
    step = 1e-6
    fd = np.zeros(3)
    for j in range(3):
        hi, lo = x2.copy(), x2.copy()
        hi[j] += step
        lo[j] -= step
        fd[j] = (agg_first(hi) - agg_first(lo)) / (2 * step)
    np.testing.assert_allclose(got.scores, fd, atol=1e-5)
    assert not got.structural_zero


def test_query_validation_errors():
    schema = _pair_schema()
    model = _bilinear_model(schema)
    dp = _point(schema)
    with pytest.raises(EmptyAtomSet):
        CM.cm_second_order(model, dp, "a", [], "b")
    with pytest.raises(InvalidSpec):
        CM.cm_second_order(model, dp, "a", [9], "b")
    with pytest.raises(InvalidSpec):
        CM.cm_second_order(model, dp, "a", [0], "a")
    with pytest.raises(InvalidSpec):
        CM.cm_second_order(model, dp, "a", [0], "b", mode="rms")


def test_region_ranking_orders_by_total_absolute_score():
    schema = _pair_schema()
    m = CM.InteractionMap(
        query_modality="a",
        query_atoms=(0,),
        response_modality="b",
        target_class=0,
        mode="signed",
        scores=np.array([0.1, -0.2, 3.0, -1.0]),
        structural_zero=False,
    )
    assert CM.region_ranking(schema, m) == ["r1", "r0"]
    no_regions = _pair_schema(regions=False)
    with pytest.raises(InvalidSpec):
        CM.region_ranking(no_regions, m)


def test_emap_energy_vanishes_for_additive_model():
    schema = _pair_schema()
    model = M.init_model("additive", schema, M.TrainConfig(seed=6))
    spec = SyntheticSpec(
        schema,
        {m.name: np.random.default_rng(1).normal(0, 1, (2, m.atom_count)) for m in schema.modalities},
        noise_rate=0.0,
    )
    ds = make_synthetic_dataset(spec, 100, 10, 10, seed=2)["train"]
    res = CM.emap(model, ds)
    assert res.interaction_energy <= 1e-9
    assert np.max(np.abs(res.g12_diag)) <= 1e-6


def test_emap_four_point_bilinear_oracle():
    # hand case: f_0 = x1 * x2, f_1 = -x1 * x2 on the four sign combinations
    schema = DatasetSchema(
        modalities=[ModalitySpec("a", 1, 1), ModalitySpec("b", 1, 1)], num_classes=2
    )
    model = M.init_model("bilinear", schema, M.TrainConfig(seed=0))
    model.params["W_bil"] = np.array([[[1.0]], [[-1.0]]])
    pts = []
    for x1 in (1.0, -1.0):
        for x2 in (1.0, -1.0):
            pts.append(
                MultimodalDatapoint(
                    {"a": np.array([[x1]]), "b": np.array([[x2]])}, int(x1 * x2 < 0), {}
                )
            )
    ds = Dataset(schema, pts)
    res = CM.emap(model, ds)
    prods = np.array([1.0, -1.0, -1.0, 1.0])
    np.testing.assert_allclose(res.g12_diag[:, 0], prods, atol=1e-9)
    np.testing.assert_allclose(res.g12_diag[:, 1], -prods, atol=1e-9)
    assert res.interaction_energy == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(res.additive_diag, 0.0, atol=1e-9)


def test_emap_subsample_is_seeded_and_stratified():
    schema = _pair_schema()
    spec = SyntheticSpec(
        schema,
        {m.name: np.random.default_rng(2).normal(0, 1, (2, m.atom_count)) for m in schema.modalities},
        noise_rate=0.0,
    )
    ds = make_synthetic_dataset(spec, 300, 10, 10, seed=3)["train"]
    model = M.init_model("bilinear", schema, M.TrainConfig(seed=1))
    r1 = CM.emap(model, ds, sample_size=40, seed=7)
    r2 = CM.emap(model, ds, sample_size=40, seed=7)
    r3 = CM.emap(model, ds, sample_size=40, seed=8)
    assert np.array_equal(r1.sample_indices, r2.sample_indices)
    assert not np.array_equal(r1.sample_indices, r3.sample_indices)
    assert len(r1.sample_indices) == 40
    labels = ds.labels()[r1.sample_indices]
    overall = ds.labels().mean()
    assert abs(labels.mean() - overall) < 0.2


def test_emap_needs_two_modalities_and_two_points():
    schema3 = DatasetSchema(
        modalities=[ModalitySpec("a", 2, 1), ModalitySpec("b", 2, 1), ModalitySpec("c", 2, 1)],
        num_classes=2,
    )
    model3 = M.init_model("mlp_fusion", schema3, M.TrainConfig(seed=0))
    rng = np.random.default_rng(0)
    pts = [
        MultimodalDatapoint(
            {m.name: rng.uniform(-1, 1, (2, 1)) for m in schema3.modalities}, 0, {}
        )
        for _ in range(4)
    ]
    with pytest.raises(InvalidSpec):
        CM.emap(model3, Dataset(schema3, pts))
    schema = _pair_schema()
    model = _bilinear_model(schema)
    one = Dataset(schema, [_point(schema)])
    with pytest.raises(SampleTooSmall):
        CM.emap(model, one)


def test_dime_split_is_exact_and_additive_residual_vanishes():
    schema = _pair_schema()
    model = M.init_model("additive", schema, M.TrainConfig(seed=8))
    spec = SyntheticSpec(
        schema,
        {m.name: np.random.default_rng(3).normal(0, 1, (2, m.atom_count)) for m in schema.modalities},
        noise_rate=0.0,
    )
    bg = make_synthetic_dataset(spec, 60, 10, 10, seed=4)["train"]
    dp = _point(schema, seed=5)
    dec = CM.dime_local(model, dp, bg, target_class=0, num_samples=None)
    logit = M.predict_point_logits(model, dp)[0]
    assert dec.value == pytest.approx(float(logit), abs=1e-9)
    assert dec.value == pytest.approx(dec.additive_value + dec.residual_value, abs=1e-9)
    assert abs(dec.residual_value) <= 1e-9
    for m in ("a", "b"):
        assert np.max(np.abs(dec.residual_maps[m].scores)) <= 1e-6


def test_dime_residual_finds_interacting_atoms():
    schema = _pair_schema(a_atoms=3, b_atoms=3)
    model = M.init_model("bilinear", schema, M.TrainConfig(seed=9))
    W = np.zeros((2, 3, 3))
    W[0, 1, 2] = 3.0  # only a-atom 1 and b-atom 2 interact
    model.params["W_bil"] = W
    rng = np.random.default_rng(6)
    pts = [
        MultimodalDatapoint(
            {m.name: rng.uniform(-1, 1, (3, 1)) for m in schema.modalities}, 0, {}
        )
        for _ in range(40)
    ]
    bg = Dataset(schema, pts)
    dp = MultimodalDatapoint(
        {"a": np.array([[0.9], [0.8], [-0.7]]), "b": np.array([[0.6], [-0.9], [0.8]])}, 0, {}
    )
    dec = CM.dime_local(model, dp, bg, target_class=0, num_samples=None, seed=1)
    assert int(np.argmax(np.abs(dec.residual_maps["a"].scores))) == 1
    assert int(np.argmax(np.abs(dec.residual_maps["b"].scores))) == 2
    assert abs(dec.residual_value) > 0.1


# ---- alignment against planted pairs ---------------------------------------


def _alignment_setup(num_b=5):
    schema = DatasetSchema(
        modalities=[ModalitySpec("a", 4, 1), ModalitySpec("b", num_b, 1)],
        num_classes=2,
        regions={
            "a": {"qa": [0, 1], "qb": [2, 3]},
            "b": {f"r{i}": [i] for i in range(num_b)},
        },
    )
    w = {"a": np.zeros((2, 4)), "b": np.zeros((2, num_b))}
    pairs = [
        InteractionPair("a", 0, "b", 3, 2.0, target_class=1),
        InteractionPair("a", 2, "b", 1, 2.0, target_class=0),
    ]
    spec = SyntheticSpec(schema, w, pairs=pairs, noise_rate=0.0)
    splits = make_synthetic_dataset(spec, 50, 20, 120, seed=6)
    return schema, pairs, splits


def test_alignment_perfect_on_planted_bilinear():
    schema, pairs, splits = _alignment_setup()
    model = M.init_model("bilinear", schema, M.TrainConfig(seed=0))
    W = np.zeros_like(model.params["W_bil"])
    for p in pairs:
        W[p.target_class, p.atom_a, p.atom_b] = p.strength
    model.params["W_bil"] = W
    score = CM.alignment_accuracy(model, splits["test"], num_queries=60)
    assert score.top1 == 1.0
    assert score.top2 == 1.0
    assert score.num_regions == 5


def test_alignment_chance_on_zero_interaction_model():
    schema, _, splits = _alignment_setup()
    model = M.init_model("additive", schema, M.TrainConfig(seed=0))
    score = CM.alignment_accuracy(model, splits["test"], num_queries=400, seed=3)
    assert all(q["structural_zero"] for q in score.per_query)
    # seeded shuffle on all-zero maps: uniform over 5 regions
    assert abs(score.top1 - 0.2) < 0.1
    assert abs(score.top2 - 0.4) < 0.1
    assert score.top1 <= score.top2


def test_alignment_needs_ground_truth():
    schema, _, splits = _alignment_setup()
    model = M.init_model("additive", schema, M.TrainConfig(seed=0))
    bare = Dataset(schema, splits["test"].points, meta={})
    from mviz.errors import MissingGroundTruth

    with pytest.raises(MissingGroundTruth):
        CM.alignment_accuracy(model, bare, num_queries=10)

    no_regions = DatasetSchema(
        modalities=[ModalitySpec("a", 4, 1), ModalitySpec("b", 5, 1)],
        num_classes=2,
    )
    stripped = Dataset(no_regions, splits["test"].points, meta=splits["test"].meta)
    with pytest.raises(MissingGroundTruth):
        CM.alignment_accuracy(model, stripped, num_queries=10)
