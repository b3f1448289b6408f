"""Cross-modal interaction analysis.

Three lenses on whether (and where) a model combines its modalities:

Second-order gradient maps answer a pointed question: given some query atoms
in one modality, which atoms of the other modality change their influence?
Take the gradient of the class logit with respect to the query modality,
aggregate it over the query atoms, and differentiate that scalar with respect
to the response modality.  When the model is additive across modalities the
second pass never reaches the response input and the map is a structural
zero: bitwise zeros, flagged as such.

EMAP projects the model onto its best additive approximation by recombining
modality inputs across a sample; the mean squared diagonal of what is left is
the interaction energy.  A point's value splits into additive part plus
residual, and each part can be attributed separately with the linear
surrogate to see which atoms act additively and which act jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import models as M
from .attribution import ImportanceMap, atom_flat_slices, baseline_rows, predicted_class
from .data import Dataset, MultimodalDatapoint
from .errors import EmptyAtomSet, InvalidSpec, MissingGroundTruth, SampleTooSmall

EMAP_SAMPLE = 64


@dataclass
class InteractionMap:
    query_modality: str
    query_atoms: tuple[int, ...]
    response_modality: str
    target_class: int
    mode: str  # signed | absolute
    scores: np.ndarray  # (response_atom_count,)
    structural_zero: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "query_modality": self.query_modality,
            "query_atoms": list(self.query_atoms),
            "response_modality": self.response_modality,
            "target_class": self.target_class,
            "mode": self.mode,
            "scores": self.scores.tolist(),
            "structural_zero": self.structural_zero,
            "details": self.details,
        }


def cm_second_order(
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    query_modality: str,
    query_atoms,
    response_modality: str,
    target_class: int | None = None,
    mode: str = "signed",
) -> InteractionMap:
    """Second-order interaction map of response atoms for the given query atoms.

    mode "signed" sums gradient components as they are; "absolute" sums their
    magnitudes, realized by freezing the signs at this point as constants so
    the aggregate stays differentiable.
    """
    if mode not in ("signed", "absolute"):
        raise InvalidSpec(f"unknown aggregation mode {mode!r}")
    if query_modality == response_modality:
        raise InvalidSpec("query and response must be different modalities")
    q_spec = model.schema.modality(query_modality)
    r_spec = model.schema.modality(response_modality)
    atoms = tuple(int(a) for a in query_atoms)
    if not atoms:
        raise EmptyAtomSet("no query atoms given")
    for a in atoms:
        if not (0 <= a < q_spec.atom_count):
            raise InvalidSpec(f"query atom {a} out of range for {query_modality!r}")
    target = predicted_class(model, dp) if target_class is None else int(target_class)
    gm = M.build_graph(model)
    bind = gm.bindings(model, dp)
    first = ad.build_gradient(gm.graph, query_modality, output=gm.logits, seed_output_index=target)
    ext = first.graph
    slices = atom_flat_slices(model, query_modality)
    flat_idx = [i for a in atoms for i in range(*slices[a])]
    sel = ext.select(first.node, flat_idx)
    if mode == "absolute":
        comps = ext.evaluate(bind, sel)
        agg = ext.sum(ext.mul(ext.const(np.sign(comps)), sel))
    else:
        agg = ext.sum(sel)
    second = ad.build_gradient(ext, response_modality, output=agg)
    vals = second.graph.evaluate(bind, second.node)
    grid = vals.reshape(r_spec.atom_count, model.eff_dim(response_modality))
    scores = np.abs(grid).sum(axis=1) if mode == "absolute" else grid.sum(axis=1)
    return InteractionMap(
        query_modality=query_modality,
        query_atoms=atoms,
        response_modality=response_modality,
        target_class=target,
        mode=mode,
        scores=scores,
        structural_zero=second.structural_zero,
        details={"query_flat_indices": flat_idx},
    )


def region_ranking(schema, map_: InteractionMap) -> list[str]:
    """Response regions ranked by total absolute interaction score."""
    regions = schema.regions.get(map_.response_modality)
    if not regions:
        raise InvalidSpec(f"no regions defined for {map_.response_modality!r}")
    totals = {
        name: float(np.sum(np.abs(map_.scores[list(atoms)]))) for name, atoms in regions.items()
    }
    return sorted(totals, key=lambda r: (-totals[r], r))


# ---- emap ------------------------------------------------------------------


@dataclass
class EmapResult:
    interaction_energy: float
    per_class_energy: np.ndarray  # (C,)
    g12_diag: np.ndarray  # (n, C): residual at the sampled points
    additive_diag: np.ndarray  # (n, C): projected additive value at the points
    f_diag: np.ndarray  # (n, C)
    sample_indices: np.ndarray

    def to_dict(self) -> dict:
        return {
            "interaction_energy": self.interaction_energy,
            "per_class_energy": self.per_class_energy.tolist(),
            "sample_size": int(len(self.sample_indices)),
        }


def _stratified_sample(labels: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Seeded per-class proportional subsample of size exactly n."""
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    picked: list[np.ndarray] = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        share = max(1, int(round(n * len(idx) / len(labels))))
        share = min(share, len(idx))
        picked.append(rng.choice(idx, size=share, replace=False))
    out = np.concatenate(picked)
    if len(out) > n:
        out = rng.choice(out, size=n, replace=False)
    elif len(out) < n:
        rest = np.setdiff1d(np.arange(len(labels)), out)
        extra = rng.choice(rest, size=n - len(out), replace=False)
        out = np.concatenate([out, extra])
    return np.sort(out)


def emap(
    model: M.TrainedModel,
    dataset: Dataset,
    sample_size: int = EMAP_SAMPLE,
    seed: int = 0,
) -> EmapResult:
    """Empirical additive projection over a recombination grid of a sample.

    V[i, j] = f(x1_i, x2_j); the additive projection of point i is
    row_mean + col_mean - grand_mean, and g12 is what the projection cannot
    express.  Interaction energy is the mean squared g12 over sample and
    classes.  Two modalities only.
    """
    mods = model.schema.modality_names
    if len(mods) != 2:
        raise InvalidSpec("the additive projection is defined for two modalities")
    N = len(dataset)
    if N < 2:
        raise SampleTooSmall("need at least two points to recombine")
    labels = dataset.labels()
    if N > sample_size:
        idx = _stratified_sample(labels, sample_size, seed)
    else:
        idx = np.arange(N)
    n = len(idx)
    raw1 = dataset.stacked(mods[0])[idx]
    raw2 = dataset.stacked(mods[1])[idx]
    # full n x n recombination grid, evaluated in one batched forward
    grid1 = np.repeat(raw1, n, axis=0)
    grid2 = np.tile(raw2, (n, 1, 1))
    logits = M.predict_logits(model, {mods[0]: grid1, mods[1]: grid2})
    C = model.num_classes
    V = logits.reshape(n, n, C)
    row = V.mean(axis=1)  # E over x2, per x1_i
    col = V.mean(axis=0)  # E over x1, per x2_j
    grand = V.mean(axis=(0, 1))
    f_diag = V[np.arange(n), np.arange(n)]
    additive = row + col - grand
    g12 = f_diag - additive
    per_class = np.mean(g12**2, axis=0)
    return EmapResult(
        interaction_energy=float(per_class.mean()),
        per_class_energy=per_class,
        g12_diag=g12,
        additive_diag=additive,
        f_diag=f_diag,
        sample_indices=idx,
    )


# ---- local additive / residual attribution ---------------------------------


@dataclass
class LocalDecomposition:
    target_class: int
    value: float
    additive_value: float
    residual_value: float
    additive_maps: dict[str, ImportanceMap]
    residual_maps: dict[str, ImportanceMap]

    def to_dict(self) -> dict:
        return {
            "target_class": self.target_class,
            "value": self.value,
            "additive_value": self.additive_value,
            "residual_value": self.residual_value,
            "additive_maps": {k: v.to_dict() for k, v in self.additive_maps.items()},
            "residual_maps": {k: v.to_dict() for k, v in self.residual_maps.items()},
        }


def _masked_variants(model: M.TrainedModel, dp: MultimodalDatapoint, masks: np.ndarray, base):
    """Presented (S, atoms, eff) arrays per modality under keep-masks."""
    pres = M.present_point(model, dp)
    out = {}
    col = 0
    for m in model.schema.modalities:
        eff = model.eff_dim(m.name)
        rows = pres[m.name].reshape(m.atom_count, eff)
        keep = masks[:, col : col + m.atom_count].astype(bool)
        col += m.atom_count
        out[m.name] = np.where(keep[:, :, None], rows[None], base[m.name][None])
    return out


def dime_local(
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    background: Dataset,
    target_class: int | None = None,
    num_samples: int | None = 400,
    sample_size: int = EMAP_SAMPLE,
    seed: int = 0,
) -> LocalDecomposition:
    """Split a point's class score into additive part and interaction residual,
    then attribute each part to atoms with the linear surrogate.

    The additive part marginalizes one modality at a time over a background
    sample: a(x) = E1 f + E2 f - E12 f.  The residual r = f - a is exactly the
    part no additive model could produce; its attribution concentrates on the
    atoms that interact.
    """
    mods = model.schema.modality_names
    if len(mods) != 2:
        raise InvalidSpec("the additive/residual split is defined for two modalities")
    if len(background) < 2:
        raise SampleTooSmall("need at least two background points")
    target = predicted_class(model, dp) if target_class is None else int(target_class)
    labels = background.labels()
    if len(background) > sample_size:
        idx = _stratified_sample(labels, sample_size, seed)
    else:
        idx = np.arange(len(background))
    n = len(idx)
    bg_pres = M.present_batch(model, {m: background.stacked(m)[idx] for m in mods})
    bg1, bg2 = bg_pres[mods[0]], bg_pres[mods[1]]
    grand = float(
        M.forward_batch(
            model,
            {
                mods[0]: np.repeat(bg1, n, axis=0),
                mods[1]: np.tile(bg2, (n, 1)),
            },
        )["logits"][:, target].mean()
    )

    universe_n = sum(m.atom_count for m in model.schema.modalities)
    base = baseline_rows(model, "zero")

    def additive_fn(masks: np.ndarray) -> np.ndarray:
        var = _masked_variants(model, dp, masks, base)
        S = masks.shape[0]
        x1 = var[mods[0]].reshape(S, -1)
        x2 = var[mods[1]].reshape(S, -1)
        # E2: point x1 against every background x2, and symmetrically
        e2 = M.forward_batch(
            model,
            {mods[0]: np.repeat(x1, n, axis=0), mods[1]: np.tile(bg2, (S, 1))},
        )["logits"][:, target].reshape(S, n).mean(axis=1)
        e1 = M.forward_batch(
            model,
            {mods[0]: np.tile(bg1, (S, 1)), mods[1]: np.repeat(x2, n, axis=0)},
        )["logits"][:, target].reshape(S, n).mean(axis=1)
        return e1 + e2 - grand

    def full_fn(masks: np.ndarray) -> np.ndarray:
        var = _masked_variants(model, dp, masks, base)
        X = {m: var[m].reshape(masks.shape[0], -1) for m in mods}
        return M.forward_batch(model, X)["logits"][:, target]

    masks = _lime_masks(universe_n, num_samples, seed)
    add_vals = additive_fn(masks)
    full_vals = full_fn(masks)
    res_vals = full_vals - add_vals
    additive_maps = _fit_mask_surrogate(model, masks, add_vals, target, "dime_additive")
    residual_maps = _fit_mask_surrogate(model, masks, res_vals, target, "dime_residual")
    full_point = full_fn(np.ones((1, universe_n)))[0]
    add_point = additive_fn(np.ones((1, universe_n)))[0]
    return LocalDecomposition(
        target_class=target,
        value=float(full_point),
        additive_value=float(add_point),
        residual_value=float(full_point - add_point),
        additive_maps=additive_maps,
        residual_maps=residual_maps,
    )


def _lime_masks(n: int, num_samples: int | None, seed: int) -> np.ndarray:
    if num_samples is None:
        if n > 16:
            raise InvalidSpec(f"mask enumeration over {n} atoms is too large")
        bits = np.arange(2**n, dtype=np.int64)
        return ((bits[:, None] >> np.arange(n)) & 1).astype(np.float64)
    if num_samples < n + 2:
        raise SampleTooSmall(f"{num_samples} masks cannot identify {n} atoms")
    rng = np.random.default_rng(seed)
    masks = rng.integers(0, 2, size=(num_samples - 1, n)).astype(np.float64)
    return np.vstack([masks, np.ones((1, n))])


def _fit_mask_surrogate(
    model: M.TrainedModel,
    masks: np.ndarray,
    values: np.ndarray,
    target: int,
    method: str,
    ridge: float = 1e-3,
    kernel_width_factor: float = 0.25,
) -> dict[str, ImportanceMap]:
    n = masks.shape[1]
    d = n - masks.sum(axis=1)
    width = kernel_width_factor * n
    w = np.exp(-(d**2) / (width * width))
    A = np.hstack([masks, np.ones((masks.shape[0], 1))])
    Aw = A * w[:, None]
    gram = A.T @ Aw + np.diag([ridge] * n + [0.0])
    beta = np.linalg.solve(gram, Aw.T @ values)
    out = {}
    col = 0
    for m in model.schema.modalities:
        scores = beta[col : col + m.atom_count].copy()
        col += m.atom_count
        out[m.name] = ImportanceMap(m.name, method, target, scores, {"intercept": float(beta[-1])})
    return out


# ---- alignment against planted pairs ---------------------------------------


@dataclass
class AlignmentScore:
    top1: float
    top2: float
    num_queries: int
    num_regions: int
    per_query: list[dict]

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "top2": self.top2,
            "num_queries": self.num_queries,
            "num_regions": self.num_regions,
        }


def alignment_accuracy(
    model: M.TrainedModel,
    dataset: Dataset,
    target_class: int | None = None,
    k_max: int = 2,
    num_queries: int = 200,
    seed: int = 0,
) -> AlignmentScore:
    """How often the interaction map points at the planted partner's region.

    Each query asks one planted (query atom, partner atom) pair about one
    sampled point: run the second-order map in absolute mode, average the
    magnitude per region of the response modality, rank regions.  A hit at
    k means the partner's region ranks within the top k.  Ties are broken
    by a seeded shuffle so an uninformative (all-zero) map scores at
    chance instead of inheriting the region naming order.
    """
    pairs = (dataset.meta or {}).get("pairs") or []
    if not pairs:
        raise MissingGroundTruth("dataset meta carries no planted pairs")
    rng = np.random.default_rng(seed)
    point_idx = rng.integers(0, len(dataset), size=num_queries)
    hits = np.zeros(k_max, dtype=np.int64)
    per_query = []
    num_regions = None
    for q in range(num_queries):
        pair = pairs[q % len(pairs)]
        resp = pair["modality_b"]
        regions = dataset.schema.regions.get(resp)
        if not regions:
            raise MissingGroundTruth(f"no regions defined for modality {resp!r}")
        partner_region = None
        for name, atoms in regions.items():
            if pair["atom_b"] in atoms:
                partner_region = name
        if partner_region is None:
            raise MissingGroundTruth(
                f"partner atom {pair['atom_b']} is in no region of {resp!r}"
            )
        dp = dataset[int(point_idx[q])]
        target = pair.get("target_class", 1) if target_class is None else target_class
        imap = cm_second_order(
            model,
            dp,
            pair["modality_a"],
            (int(pair["atom_a"]),),
            resp,
            target_class=int(target),
            mode="absolute",
        )
        names = sorted(regions)
        averages = np.array(
            [np.mean(np.abs(imap.scores[list(regions[n])])) for n in names]
        )
        tiebreak = rng.permutation(len(names))
        order = np.lexsort((tiebreak, -averages))
        rank = [names[i] for i in order].index(partner_region)
        for k in range(k_max):
            if rank <= k:
                hits[k] += 1
        per_query.append(
            {
                "point": int(point_idx[q]),
                "pair": dict(pair),
                "rank": int(rank),
                "structural_zero": imap.structural_zero,
            }
        )
        if num_regions is None:
            num_regions = len(names)
    return AlignmentScore(
        top1=float(hits[0] / num_queries),
        top2=float(hits[min(1, k_max - 1)] / num_queries),
        num_queries=num_queries,
        num_regions=int(num_regions),
        per_query=per_query,
    )
