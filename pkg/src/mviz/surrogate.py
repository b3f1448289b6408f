"""Sparse linear surrogate of the model head: elastic net, one class at a time.

Fits scores = X b + b0 per class against one-vs-rest 0/1 targets with the
objective (1/2N)||X b + b0 - y||^2 + lambda1 ||b||_1 + lambda2 ||b||_2^2,
by cyclic coordinate descent on standardized columns: each update is the
soft-threshold step b_j <- S(rho_j, lambda1) / (1 + 2 lambda2).  The intercept
is unpenalized, which with centered columns makes it exactly the target mean.
Stored coefficients are mapped back to the raw feature scale.

Honesty knobs: a KKT residual is computed for every fit (optimality is
checked, not assumed), non-convergence and constant columns are reported as
flags, and a warm-started descending-lambda path gives the usual sparsity
sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesign, SingleClassLabels

MAX_PASSES = 2000
TOL = 1e-10


def _soft(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@dataclass
class ClassFit:
    target_class: int
    coefficients: np.ndarray  # (d,) on the raw feature scale
    intercept: float
    kkt_residual: float
    converged: bool
    passes: int

    def to_dict(self) -> dict:
        return {
            "target_class": self.target_class,
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "passes": self.passes,
        }


@dataclass
class SurrogateFit:
    lambda1: float
    lambda2: float
    class_fits: list[ClassFit]
    constant_columns: list[int]
    provenance: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(cf.converged for cf in self.class_fits)

    @property
    def kkt_residual(self) -> float:
        return max(cf.kkt_residual for cf in self.class_fits)

    def coefficient_matrix(self) -> np.ndarray:
        return np.stack([cf.coefficients for cf in self.class_fits])

    def intercepts(self) -> np.ndarray:
        return np.array([cf.intercept for cf in self.class_fits])

    def scores(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coefficient_matrix().T + self.intercepts()

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def nonzero_count(self) -> int:
        return int(np.sum(self.coefficient_matrix() != 0.0))

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "constant_columns": self.constant_columns,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
            "class_fits": [cf.to_dict() for cf in self.class_fits],
        }


def _cd_one_class(
    Z: np.ndarray,
    yc: np.ndarray,
    lambda1: float,
    lambda2: float,
    live: np.ndarray,
    beta0: np.ndarray | None,
    max_passes: int,
    tol: float,
) -> tuple[np.ndarray, float, bool, int]:
    """Coordinate descent on standardized columns.  Returns (beta, kkt, conv, passes)."""
    N, d = Z.shape
    ymean = yc.mean()
    y = yc - ymean
    beta = np.zeros(d) if beta0 is None else beta0.copy()
    r = y - Z @ beta
    denom = 1.0 + 2.0 * lambda2
    converged = False
    passes = 0
    for passes in range(1, max_passes + 1):
        delta = 0.0
        for j in range(d):
            if not live[j]:
                continue
            old = beta[j]
            rho = (Z[:, j] @ r) / N + old  # unit-variance column
            new = _soft(rho, lambda1) / denom
            if new != old:
                r += Z[:, j] * (old - new)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta <= tol:
            converged = True
            break
    grad = -(Z.T @ r) / N + 2.0 * lambda2 * beta
    kkt = 0.0
    for j in range(d):
        if not live[j]:
            continue
        if beta[j] != 0.0:
            kkt = max(kkt, abs(grad[j] + lambda1 * np.sign(beta[j])))
        else:
            kkt = max(kkt, max(0.0, abs(grad[j]) - lambda1))
    return beta, float(kkt), converged, passes


def fit_elastic_net(
    features: np.ndarray,
    labels: np.ndarray,
    lambda1: float = 0.01,
    lambda2: float = 0.001,
    num_classes: int | None = None,
    max_passes: int = MAX_PASSES,
    tol: float = TOL,
    warm: "SurrogateFit | None" = None,
    provenance: dict | None = None,
) -> SurrogateFit:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DegenerateDesign(f"features {X.shape} do not match {y.shape[0]} labels")
    if lambda1 < 0 or lambda2 < 0:
        raise DegenerateDesign("negative regularization")
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassLabels(f"labels contain only class {classes.tolist()}")
    C = int(num_classes) if num_classes is not None else int(classes.max()) + 1
    N, d = X.shape
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    live = sigma > 0.0
    if not np.any(live):
        raise DegenerateDesign("every feature column is constant")
    safe_sigma = np.where(live, sigma, 1.0)
    Z = (X - mu) / safe_sigma
    Z[:, ~live] = 0.0
    fits = []
    for c in range(C):
        yc = (y == c).astype(np.float64)
        warm_beta = None
        if warm is not None and len(warm.class_fits) == C and warm.class_fits[c].coefficients.shape == (d,):
            # warm coefficients are stored raw; return them to the standardized scale
            warm_beta = warm.class_fits[c].coefficients * safe_sigma
        beta_std, kkt, conv, passes = _cd_one_class(
            Z, yc, lambda1, lambda2, live, warm_beta, max_passes, tol
        )
        beta_raw = np.where(live, beta_std / safe_sigma, 0.0)
        intercept = float(yc.mean() - beta_raw @ mu)
        fits.append(ClassFit(c, beta_raw, intercept, kkt, conv, passes))
    return SurrogateFit(
        lambda1=float(lambda1),
        lambda2=float(lambda2),
        class_fits=fits,
        constant_columns=[int(j) for j in np.flatnonzero(~live)],
        provenance=provenance or {},
    )


def lambda_max(features: np.ndarray, labels: np.ndarray, num_classes: int | None = None) -> float:
    """Smallest lambda1 at which every class fit is all-zero."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    C = int(num_classes) if num_classes is not None else int(y.max()) + 1
    N = X.shape[0]
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    live = sigma > 0.0
    Z = (X - mu) / np.where(live, sigma, 1.0)
    Z[:, ~live] = 0.0
    out = 0.0
    for c in range(C):
        yc = (y == c).astype(np.float64)
        out = max(out, float(np.max(np.abs(Z.T @ (yc - yc.mean()))) / N))
    # one ulp of slack: the descent loop computes the same correlations in a
    # different summation order
    return out * (1.0 + 1e-12)


def fit_path(
    features: np.ndarray,
    labels: np.ndarray,
    lambda1_grid: np.ndarray | None = None,
    lambda2: float = 0.001,
    num_lambdas: int = 12,
    decades: float = 3.0,
    num_classes: int | None = None,
) -> list[SurrogateFit]:
    """Warm-started fits over a descending lambda1 grid (largest first)."""
    if lambda1_grid is None:
        lmax = lambda_max(features, labels, num_classes)
        if lmax <= 0:
            raise DegenerateDesign("targets carry no signal for the path")
        lambda1_grid = lmax * np.logspace(0, -decades, num_lambdas)
    grid = np.sort(np.asarray(lambda1_grid, dtype=np.float64))[::-1]
    fits: list[SurrogateFit] = []
    warm = None
    for lam in grid:
        fit = fit_elastic_net(
            features, labels, lambda1=float(lam), lambda2=lambda2,
            num_classes=num_classes, warm=warm,
        )
        fits.append(fit)
        warm = fit
    return fits


def top_features(fit: SurrogateFit, target_class: int, k: int = 5) -> list[dict]:
    """Features ranked by absolute surrogate weight for one class."""
    cf = fit.class_fits[target_class]
    order = np.lexsort((np.arange(len(cf.coefficients)), -np.abs(cf.coefficients)))
    out = []
    for j in order[:k]:
        out.append({"feature": int(j), "weight": float(cf.coefficients[j])})
    return out


def agreement(fit: SurrogateFit, features: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(fit.predict(np.asarray(features)) == np.asarray(labels)))
