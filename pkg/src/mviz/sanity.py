"""Randomization controls for attribution methods.

An attribution method that tells the same story about a broken model as about
the real one is not explaining the model.  Two controls: re-randomize the
final affine (the maps must change), and retrain on permuted labels (the maps
must change).  Divergence is measured as the mean Spearman rank correlation
between per-point maps of the original and the control; a method passes when
the correlation drops below the threshold.  Constant maps correlate at 1.0 by
definition here: a method that cannot tell the difference fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import spearmanr

from . import attribution as A
from . import models as M
from .data import Dataset
from .errors import InvalidSpec, SampleTooSmall

THRESHOLD = 0.5


@dataclass
class SanityReport:
    check: str  # model_randomization | data_randomization
    method: str
    num_points: int
    correlations: list[float]
    mean_correlation: float
    threshold: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "method": self.method,
            "num_points": self.num_points,
            "correlations": self.correlations,
            "mean_correlation": self.mean_correlation,
            "threshold": self.threshold,
            "passed": self.passed,
            "extra": self.extra,
        }


MethodFn = Callable[..., dict]


def _resolve_method(method) -> tuple[str, MethodFn]:
    if callable(method):
        return getattr(method, "__name__", "custom"), method
    if method in A.METHODS:
        return method, A.METHODS[method]
    raise InvalidSpec(f"unknown attribution method {method!r}")


def _map_vector(model: M.TrainedModel, maps: dict) -> np.ndarray:
    return A.flat_scores(maps, model.schema.modality_names)


def _rank_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman correlation; degenerate (constant) maps count as fully correlated."""
    if np.all(a == a[0]) or np.all(b == b[0]):
        return 1.0
    rho = spearmanr(a, b).statistic
    if not np.isfinite(rho):
        return 1.0
    return float(rho)


def _compare_on_points(
    model_a: M.TrainedModel,
    model_b: M.TrainedModel,
    points: Dataset,
    fn: MethodFn,
    method_kwargs: dict,
) -> list[float]:
    cors = []
    for dp in points.points:
        target = A.predicted_class(model_a, dp)
        va = _map_vector(model_a, fn(model_a, dp, target_class=target, **method_kwargs))
        vb = _map_vector(model_b, fn(model_b, dp, target_class=target, **method_kwargs))
        cors.append(_rank_correlation(va, vb))
    return cors


def randomize_head(model: M.TrainedModel, seed: int = 0) -> M.TrainedModel:
    """Copy of the model with the final affine re-drawn from the init scale."""
    rng = np.random.default_rng(seed)
    P = model.penultimate_dim
    C = model.num_classes
    params = dict(model.params)
    params["W_out"] = rng.normal(0.0, 1.0, size=(C, P)) / np.sqrt(P)
    params["b_out"] = np.zeros(C)
    info = dict(model.info)
    info["randomized_head"] = {"seed": seed}
    return M.TrainedModel(model.architecture, model.schema, params, model.config, info)


def model_randomization_check(
    model: M.TrainedModel,
    points: Dataset,
    method="gradient",
    seed: int = 0,
    num_points: int = 20,
    threshold: float = THRESHOLD,
    **method_kwargs,
) -> SanityReport:
    """Do the maps change when the trained head is replaced by a random one?"""
    if len(points) < 1:
        raise SampleTooSmall("no points to check on")
    sample = points.subset(range(min(num_points, len(points))))
    name, fn = _resolve_method(method)
    control = randomize_head(model, seed=seed)
    cors = _compare_on_points(model, control, sample, fn, method_kwargs)
    mean = float(np.mean(cors))
    return SanityReport(
        check="model_randomization",
        method=name,
        num_points=len(sample),
        correlations=[float(c) for c in cors],
        mean_correlation=mean,
        threshold=threshold,
        passed=bool(mean < threshold),
        extra={"head_seed": seed},
    )


def permuted_label_twin(
    model: M.TrainedModel,
    train: Dataset,
    seed: int = 0,
) -> M.TrainedModel:
    """Same architecture and config retrained on label-permuted data."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(train))
    shuffled = Dataset(
        train.schema,
        [
            type(dp)(dp.modalities, int(train.points[j].label), dp.meta)
            for dp, j in zip(train.points, perm)
        ],
        train.meta,
    )
    return M.train_model(model.architecture, shuffled, None, model.config)


def data_randomization_check(
    model: M.TrainedModel,
    train: Dataset,
    points: Dataset,
    method="gradient",
    seed: int = 0,
    num_points: int = 20,
    threshold: float = THRESHOLD,
    **method_kwargs,
) -> SanityReport:
    """Do the maps change when the model never saw real labels?"""
    if len(points) < 1:
        raise SampleTooSmall("no points to check on")
    sample = points.subset(range(min(num_points, len(points))))
    name, fn = _resolve_method(method)
    twin = permuted_label_twin(model, train, seed=seed)
    # precondition on held-out points: a twin can memorize shuffled train
    # labels but cannot generalize, so chance is checked here
    twin_acc = M.accuracy(twin, points)
    chance_gap = abs(twin_acc - 1.0 / model.num_classes)
    cors = _compare_on_points(model, twin, sample, fn, method_kwargs)
    mean = float(np.mean(cors))
    return SanityReport(
        check="data_randomization",
        method=name,
        num_points=len(sample),
        correlations=[float(c) for c in cors],
        mean_correlation=mean,
        threshold=threshold,
        passed=bool(mean < threshold),
        extra={
            "permutation_seed": seed,
            "twin_holdout_accuracy": float(twin_acc),
            "twin_near_chance": bool(chance_gap <= 0.1),
        },
    )
