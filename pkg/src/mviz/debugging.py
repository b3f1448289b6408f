"""Model debugging with representation-guided data collection.

The loop: fit a probe that predicts where the model errs from the magnitude
of its penultimate features, pick the features the probe blames, pull
unlabeled pool points that light those features up, label them, and patch
the model by fine-tuning only its head.  Random and uncertainty selection
are the controls.

The pool is deliberately label-free: selection strategies see inputs and
model activations only.  Labels enter through UnlabeledPool.reveal, which
is the stand-in for sending points to an annotator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models as M
from . import representation as R
from .data import Dataset, MultimodalDatapoint
from .errors import (
    InvalidSpec,
    MissingGroundTruth,
    PoolTooSmall,
    SingleClassLabels,
)

STRATEGIES = ("random", "uncertainty", "feature_targeted")
LR_GRID = (1e-3, 1e-2)


class UnlabeledPool:
    """Label-free view of a dataset.

    Selection code gets points and activations but no labels; reveal()
    hands back a labeled subset and models the annotation step.
    """

    def __init__(self, dataset: Dataset):
        self._dataset = dataset
        self.schema = dataset.schema

    def __len__(self) -> int:
        return len(self._dataset)

    def stacked(self, name: str) -> np.ndarray:
        return self._dataset.stacked(name)

    def point_inputs(self, index: int) -> dict:
        return dict(self._dataset.points[index].modalities)

    def reveal(self, indices) -> Dataset:
        return self._dataset.subset(indices)


@dataclass
class ErrorProbe:
    layer: str
    weights: np.ndarray  # (features,)
    intercept: float
    top_features: list[dict]  # [{"feature": j, "weight": w}], positive weights only
    error_rate: float

    def ranked_features(self, k: int, reverse: bool = False) -> list[int]:
        """Feature ids by probe weight, largest first; reverse for least-blamed."""
        order = np.lexsort((np.arange(self.weights.size), -self.weights))
        ids = [int(j) for j in order]
        if reverse:
            ids = ids[::-1]
        return ids[:k]

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "top_features": self.top_features,
            "error_rate": float(self.error_rate),
        }


def error_probe(
    model: M.TrainedModel,
    labeled: Dataset,
    layer: str = "penultimate",
    ridge: float = 1e-3,
    top_k: int = 5,
) -> ErrorProbe:
    """Ridge regression of the model's error indicator on |activations|."""
    fm = R.feature_matrix(model, labeled, layer=layer)
    A = np.abs(fm.activations)
    e = (fm.predicted != fm.labels).astype(float)
    if np.all(e == e[0]):
        raise SingleClassLabels(
            "error indicator is constant on this set; probe has nothing to fit"
        )
    mu = A.mean(axis=0)
    Ac = A - mu
    ec = e - e.mean()
    n = A.shape[0]
    gram = Ac.T @ Ac / n + 2.0 * ridge * np.eye(A.shape[1])
    w = np.linalg.solve(gram, Ac.T @ ec / n)
    b = float(e.mean() - w @ mu)
    order = np.lexsort((np.arange(w.size), -w))
    top = [
        {"feature": int(j), "weight": float(w[j])}
        for j in order[:top_k]
        if w[j] > 0
    ]
    return ErrorProbe(layer, w, b, top, float(e.mean()))


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str  # random | uncertainty | feature_targeted
    num_features: int = 2
    features: tuple | None = None  # explicit feature ids override the probe

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise InvalidSpec(f"unknown strategy {self.kind!r}")
        if self.kind == "feature_targeted" and self.features is None and self.num_features < 1:
            raise InvalidSpec("feature_targeted needs at least one feature")

    @property
    def label(self) -> str:
        if self.kind != "feature_targeted":
            return self.kind
        if self.features is not None:
            return "feature_targeted[" + ",".join(str(f) for f in self.features) + "]"
        return f"feature_targeted({self.num_features})"


def _pool_activations(model: M.TrainedModel, pool: UnlabeledPool, layer: str) -> np.ndarray:
    X = M.present_batch(model, {m: pool.stacked(m) for m in pool.schema.modality_names})
    return M.forward_batch(model, X)[layer]


def _pool_logits(model: M.TrainedModel, pool: UnlabeledPool) -> np.ndarray:
    X = M.present_batch(model, {m: pool.stacked(m) for m in pool.schema.modality_names})
    return M.forward_batch(model, X)["logits"]


def select_active(
    model: M.TrainedModel,
    pool: UnlabeledPool,
    strategy: SelectionStrategy | str,
    n: int,
    seed: int = 0,
    features: list[int] | None = None,
    layer: str = "penultimate",
) -> list[int]:
    """Pick n pool indices for labeling.  Never touches pool labels."""
    if isinstance(strategy, str):
        strategy = SelectionStrategy(strategy)
    if n < 1:
        raise InvalidSpec("selection size must be positive")
    if n > len(pool):
        raise PoolTooSmall(f"asked for {n} points from a pool of {len(pool)}")

    if strategy.kind == "random":
        rng = np.random.default_rng(seed)
        return [int(i) for i in rng.choice(len(pool), size=n, replace=False)]

    if strategy.kind == "uncertainty":
        p = M.softmax(_pool_logits(model, pool))
        ent = -np.sum(p * np.log(np.clip(p, 1e-12, None)), axis=1)
        order = np.lexsort((np.arange(len(pool)), -ent))
        return [int(i) for i in order[:n]]

    feats = list(strategy.features) if strategy.features is not None else features
    if feats is None:
        raise InvalidSpec("feature_targeted selection needs feature ids")
    acts = _pool_activations(model, pool, layer)
    per = int(np.ceil(n / len(feats)))
    # per-feature rankings by activation magnitude, stable on ties
    rankings = []
    for j in feats:
        mag = np.abs(acts[:, j])
        rankings.append(np.lexsort((np.arange(len(pool)), -mag)))
    chosen: list[int] = []
    seen = set()
    for r in rankings:
        for i in r[:per]:
            if int(i) not in seen:
                seen.add(int(i))
                chosen.append(int(i))
    # dedupe can leave a shortfall; round-robin down the rankings fills it
    depth = per
    while len(chosen) < n:
        advanced = False
        for r in rankings:
            if depth < len(r):
                i = int(r[depth])
                advanced = True
                if i not in seen:
                    seen.add(i)
                    chosen.append(i)
                    if len(chosen) == n:
                        break
        if not advanced:
            break
        depth += 1
    return chosen[:n]


def _subset_accuracy(model: M.TrainedModel, ds: Dataset, mask: np.ndarray) -> float:
    pred = M.predict_labels(model, ds)
    truth = ds.labels()
    return float(np.mean(pred[mask] == truth[mask]))


@dataclass
class StrategyOutcome:
    strategy: str
    mean_targeted_delta: float
    std_targeted_delta: float
    mean_overall_delta: float
    std_overall_delta: float
    chosen_lrs: list[float]
    per_seed: list[dict]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "mean_targeted_delta": self.mean_targeted_delta,
            "std_targeted_delta": self.std_targeted_delta,
            "mean_overall_delta": self.mean_overall_delta,
            "std_overall_delta": self.std_overall_delta,
            "chosen_lrs": self.chosen_lrs,
            "per_seed": self.per_seed,
        }


@dataclass
class DebugReport:
    probe: ErrorProbe
    baseline_overall: float
    baseline_targeted: float
    num_selected: int
    seeds: int
    outcomes: list[StrategyOutcome]
    targeted_key: str = "bug_affected"
    extra: dict = field(default_factory=dict)

    def outcome(self, label: str) -> StrategyOutcome:
        for o in self.outcomes:
            if o.strategy == label:
                return o
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "probe": self.probe.to_dict(),
            "baseline_overall": self.baseline_overall,
            "baseline_targeted": self.baseline_targeted,
            "num_selected": self.num_selected,
            "seeds": self.seeds,
            "targeted_key": self.targeted_key,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "extra": self.extra,
        }


def targeted_mask(ds: Dataset, key: str = "bug_affected") -> np.ndarray:
    mask = np.array([bool(dp.meta.get(key, False)) for dp in ds.points])
    if not mask.any():
        raise MissingGroundTruth(
            f"no point in the evaluation set carries meta[{key!r}]"
        )
    return mask


def standard_split_roles(splits: dict) -> tuple[Dataset, UnlabeledPool, Dataset]:
    """House convention: first half of val probes errors, second half is the
    unlabeled pool, test stays for evaluation."""
    val = splits["val"]
    half = len(val) // 2
    if half < 1:
        raise PoolTooSmall("val split too small to carve a pool from")
    probe_set = val.subset(range(half))
    pool = UnlabeledPool(val.subset(range(half, len(val))))
    return probe_set, pool, splits["test"]


def debug_experiment(
    model: M.TrainedModel,
    probe_set: Dataset,
    pool: UnlabeledPool | Dataset,
    test: Dataset,
    strategies=("random", "uncertainty", "feature_targeted"),
    n: int = 200,
    seeds: int = 10,
    epochs: int = 1,
    lr: float | None = None,
    layer: str = "penultimate",
    targeted_key: str = "bug_affected",
) -> DebugReport:
    """Selection strategies head to head, averaged over fine-tuning seeds.

    lr=None tries each value in LR_GRID and keeps the run with the best
    post-tune probe-set accuracy, recorded per seed.
    """
    if isinstance(pool, Dataset):
        pool = UnlabeledPool(pool)
    probe = error_probe(model, probe_set, layer=layer)
    mask = targeted_mask(test, targeted_key)
    base_overall = M.accuracy(model, test)
    base_targeted = _subset_accuracy(model, test, mask)

    outcomes = []
    for strat in strategies:
        if isinstance(strat, str):
            strat = SelectionStrategy(strat)
        probe_feats = None
        if strat.kind == "feature_targeted" and strat.features is None:
            probe_feats = probe.ranked_features(strat.num_features)
        per_seed = []
        chosen_lrs = []
        for s in range(seeds):
            idx = select_active(
                model, pool, strat, n, seed=s, features=probe_feats, layer=layer
            )
            labeled = pool.reveal(idx)
            lrs = [lr] if lr is not None else list(LR_GRID)
            best = None
            for cand in lrs:
                tuned = M.fine_tune_last_layer(
                    model, labeled, epochs=epochs, lr=cand, seed=s
                )
                score = M.accuracy(tuned, probe_set)
                if best is None or score > best[0]:
                    best = (score, cand, tuned)
            _, used_lr, tuned = best
            chosen_lrs.append(float(used_lr))
            per_seed.append(
                {
                    "seed": s,
                    "lr": float(used_lr),
                    "targeted_delta": _subset_accuracy(tuned, test, mask) - base_targeted,
                    "overall_delta": M.accuracy(tuned, test) - base_overall,
                }
            )
        td = np.array([d["targeted_delta"] for d in per_seed])
        od = np.array([d["overall_delta"] for d in per_seed])
        outcomes.append(
            StrategyOutcome(
                strategy=strat.label,
                mean_targeted_delta=float(td.mean()),
                std_targeted_delta=float(td.std()),
                mean_overall_delta=float(od.mean()),
                std_overall_delta=float(od.std()),
                chosen_lrs=chosen_lrs,
                per_seed=per_seed,
            )
        )
    return DebugReport(
        probe=probe,
        baseline_overall=base_overall,
        baseline_targeted=base_targeted,
        num_selected=n,
        seeds=seeds,
        outcomes=outcomes,
        targeted_key=targeted_key,
        extra={"epochs": epochs, "layer": layer},
    )
