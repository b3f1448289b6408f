"""Unimodal importance: which atoms of each modality drive one class score.

Three methods over a shared masking scheme.  An atom's "removal" replaces its
presented vector (embedded, for token modalities) with a baseline row: zeros,
the dataset mean, or caller-supplied rows.  Gradient importance differentiates
the class logit through the analysis graph; LIME fits a weighted linear
surrogate over random atom masks; Shapley values are exact (full enumeration)
for small atom counts and permutation-sampled otherwise.

Scores are per atom, signed: positive means the atom pushes the class score
up relative to its baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import models as M
from .data import Dataset, MultimodalDatapoint
from .errors import DegenerateDesign, EmptyAtomSet, InvalidSpec, SampleTooSmall

ENUMERATION_LIMIT = 16  # 2^n masked forwards; beyond this enumeration is refused
SHAPLEY_EXACT_LIMIT = 12


@dataclass
class ImportanceMap:
    modality: str
    method: str
    target_class: int
    scores: np.ndarray  # (atom_count,)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "modality": self.modality,
            "method": self.method,
            "target_class": self.target_class,
            "scores": self.scores.tolist(),
            "details": self.details,
        }


def predicted_class(model: M.TrainedModel, dp: MultimodalDatapoint) -> int:
    return int(np.argmax(M.predict_point_logits(model, dp)))


def atom_universe(model: M.TrainedModel) -> list[tuple[str, int]]:
    """All atoms across modalities in schema order; the joint masking space."""
    out = []
    for m in model.schema.modalities:
        out.extend((m.name, i) for i in range(m.atom_count))
    return out


def atom_flat_slices(model: M.TrainedModel, modality: str) -> list[tuple[int, int]]:
    """Flat index range of each atom inside the modality's flattened slot."""
    eff = model.eff_dim(modality)
    count = model.schema.modality(modality).atom_count
    return [(i * eff, (i + 1) * eff) for i in range(count)]


def baseline_rows(
    model: M.TrainedModel,
    baseline: str | dict[str, np.ndarray] = "zero",
    background: Dataset | None = None,
) -> dict[str, np.ndarray]:
    """Per-modality (atom_count, eff_dim) replacement rows for masked atoms."""
    if isinstance(baseline, dict):
        return baseline
    if baseline == "zero":
        return {
            m.name: np.zeros((m.atom_count, model.eff_dim(m.name)))
            for m in model.schema.modalities
        }
    if baseline == "mean":
        if background is None:
            raise InvalidSpec("baseline 'mean' needs a background dataset")
        rows = {}
        raw = {m: background.stacked(m) for m in background.schema.modality_names}
        pres = M.present_batch(model, raw)
        for m in model.schema.modalities:
            eff = model.eff_dim(m.name)
            rows[m.name] = pres[m.name].reshape(len(background), m.atom_count, eff).mean(axis=0)
        return rows
    raise InvalidSpec(f"unknown baseline {baseline!r}")


def masked_logits(
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    masks: np.ndarray,
    base: dict[str, np.ndarray],
) -> np.ndarray:
    """Logits (S, C) for every keep-mask (S, total_atoms) over the atom universe."""
    S = masks.shape[0]
    pres = M.present_point(model, dp)
    X = {}
    col = 0
    for m in model.schema.modalities:
        eff = model.eff_dim(m.name)
        point_rows = pres[m.name].reshape(m.atom_count, eff)
        keep = masks[:, col : col + m.atom_count].astype(bool)  # (S, atoms)
        col += m.atom_count
        rows = np.where(keep[:, :, None], point_rows[None, :, :], base[m.name][None, :, :])
        X[m.name] = rows.reshape(S, -1)
    return M.forward_batch(model, X)["logits"]


# ---- gradient --------------------------------------------------------------


def grad_importance(
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    target_class: int | None = None,
    mode: str = "signed",
) -> dict[str, ImportanceMap]:
    """Per-atom gradient of the target logit, summed over atom components."""
    if mode not in ("signed", "absolute"):
        raise InvalidSpec(f"unknown aggregation mode {mode!r}")
    target = predicted_class(model, dp) if target_class is None else int(target_class)
    gm = M.build_graph(model)
    bind = gm.bindings(model, dp)
    out: dict[str, ImportanceMap] = {}
    for m in model.schema.modalities:
        grad = ad.gradient(
            gm.graph, bind, m.name, output=gm.logits, seed_output_index=target
        ).reshape(m.atom_count, model.eff_dim(m.name))
        scores = np.abs(grad).sum(axis=1) if mode == "absolute" else grad.sum(axis=1)
        out[m.name] = ImportanceMap(m.name, "gradient", target, scores, {"mode": mode})
    return out


# ---- lime ------------------------------------------------------------------


def _kernel_weights(masks: np.ndarray, width: float) -> np.ndarray:
    d = masks.shape[1] - masks.sum(axis=1)  # hamming distance from the full mask
    return np.exp(-(d.astype(np.float64) ** 2) / (width * width))


def lime_importance(
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    target_class: int | None = None,
    num_samples: int | None = 1000,
    baseline: str | dict[str, np.ndarray] = "zero",
    background: Dataset | None = None,
    seed: int = 0,
    kernel_width_factor: float = 0.25,
    ridge: float | None = None,
) -> dict[str, ImportanceMap]:
    """Weighted linear surrogate over atom masks.

    num_samples=None enumerates every mask and drops the ridge term (plain
    weighted least squares), which recovers additive per-atom contributions
    exactly.  Sampled mode defaults to ridge 1e-3 for stability.
    """
    target = predicted_class(model, dp) if target_class is None else int(target_class)
    universe = atom_universe(model)
    n = len(universe)
    base = baseline_rows(model, baseline, background)
    if num_samples is None:
        if n > ENUMERATION_LIMIT:
            raise InvalidSpec(f"mask enumeration over {n} atoms is too large")
        bits = np.arange(2**n, dtype=np.int64)
        masks = ((bits[:, None] >> np.arange(n)) & 1).astype(np.float64)
        lam = 0.0 if ridge is None else ridge
    else:
        if num_samples < n + 2:
            raise SampleTooSmall(f"{num_samples} masks cannot identify {n} atoms")
        rng = np.random.default_rng(seed)
        masks = rng.integers(0, 2, size=(num_samples - 1, n)).astype(np.float64)
        masks = np.vstack([masks, np.ones((1, n))])
        lam = 1e-3 if ridge is None else ridge
    if np.unique(masks, axis=0).shape[0] < 2:
        raise DegenerateDesign("all sampled masks are identical")
    values = masked_logits(model, dp, masks, base)[:, target]
    width = kernel_width_factor * n
    w = _kernel_weights(masks, width)
    A = np.hstack([masks, np.ones((masks.shape[0], 1))])
    Aw = A * w[:, None]
    gram = A.T @ Aw
    reg = np.zeros(n + 1)
    reg[:n] = lam
    gram += np.diag(reg)
    rhs = Aw.T @ values
    try:
        beta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as e:
        raise DegenerateDesign(f"singular mask design: {e}") from e
    col_var = masks.var(axis=0)
    constant_cols = [universe[i] for i in range(n) if col_var[i] == 0.0]
    out: dict[str, ImportanceMap] = {}
    col = 0
    for m in model.schema.modalities:
        scores = beta[col : col + m.atom_count].copy()
        col += m.atom_count
        details = {
            "intercept": float(beta[-1]),
            "num_samples": masks.shape[0],
            "ridge": lam,
            "baseline": baseline if isinstance(baseline, str) else "custom",
            "constant_columns": [list(c) for c in constant_cols if c[0] == m.name],
        }
        out[m.name] = ImportanceMap(m.name, "lime", target, scores, details)
    return out


# ---- shapley ---------------------------------------------------------------


def shapley_importance(
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    target_class: int | None = None,
    baseline: str | dict[str, np.ndarray] = "zero",
    background: Dataset | None = None,
    num_permutations: int = 200,
    seed: int = 0,
) -> dict[str, ImportanceMap]:
    """Shapley values of atoms for the target logit under the masking game.

    Exact enumeration up to 12 atoms (efficiency then holds to float
    precision), seeded permutation sampling beyond that.
    """
    target = predicted_class(model, dp) if target_class is None else int(target_class)
    universe = atom_universe(model)
    n = len(universe)
    base = baseline_rows(model, baseline, background)
    if n <= SHAPLEY_EXACT_LIMIT:
        bits = np.arange(2**n, dtype=np.int64)
        masks = ((bits[:, None] >> np.arange(n)) & 1).astype(np.float64)
        values = masked_logits(model, dp, masks, base)[:, target]
        sizes = masks.sum(axis=1).astype(np.int64)
        fact = np.array([math.factorial(k) for k in range(n + 1)], dtype=np.float64)
        weight_by_size = fact[np.arange(n)] * fact[n - 1 - np.arange(n)] / fact[n]
        phi = np.zeros(n)
        for i in range(n):
            without = (bits >> i) & 1 == 0
            idx = bits[without]
            gain = values[idx | (1 << i)] - values[idx]
            phi[i] = np.sum(weight_by_size[sizes[idx]] * gain)
        path = "exact"
    else:
        if num_permutations < 1:
            raise SampleTooSmall("need at least one permutation")
        rng = np.random.default_rng(seed)
        phi = np.zeros(n)
        for _ in range(num_permutations):
            order = rng.permutation(n)
            prefix = np.zeros((n + 1, n))
            for step, atom in enumerate(order):
                prefix[step + 1] = prefix[step]
                prefix[step + 1, atom] = 1.0
            values = masked_logits(model, dp, prefix, base)[:, target]
            gains = values[1:] - values[:-1]
            phi[order] += gains
        phi /= num_permutations
        path = "montecarlo"
    out: dict[str, ImportanceMap] = {}
    col = 0
    for m in model.schema.modalities:
        scores = phi[col : col + m.atom_count].copy()
        col += m.atom_count
        details = {
            "path": path,
            "baseline": baseline if isinstance(baseline, str) else "custom",
        }
        if path == "montecarlo":
            details["num_permutations"] = num_permutations
        out[m.name] = ImportanceMap(m.name, "shapley", target, scores, details)
    return out


METHODS = {
    "gradient": grad_importance,
    "lime": lime_importance,
    "shapley": shapley_importance,
}


def importance(
    method: str,
    model: M.TrainedModel,
    dp: MultimodalDatapoint,
    target_class: int | None = None,
    **kwargs,
) -> dict[str, ImportanceMap]:
    if method not in METHODS:
        raise InvalidSpec(f"unknown importance method {method!r}")
    return METHODS[method](model, dp, target_class=target_class, **kwargs)


def flat_scores(maps: dict[str, ImportanceMap], order: list[str]) -> np.ndarray:
    """Concatenate per-modality scores in the given modality order."""
    if not order:
        raise EmptyAtomSet("no modalities to concatenate")
    return np.concatenate([maps[m].scores for m in order])
