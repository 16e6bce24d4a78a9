"""Comparison criteria: FPE, corrected AIC, k-fold CV and the ADJ adjustment.

All baselines return +inf sentinels instead of raising, so model selection
over a path stays total even when a criterion is undefined at some d.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .core import (
    DEFAULT_RIDGE,
    BasisSpec,
    LabeledSet,
    ModelPath,
    SingularDesignError,
    UnlabeledSet,
    build_design,
    ridge_lse,
)

RHO_FLOOR = 1e-12


class BaselineKind(enum.Enum):
    FPE = "FPE"
    CAIC = "cAIC"
    CV5 = "CV5"
    ADJ = "ADJ"


def fpe(train_loss: float, n: int, d: int) -> float:
    """Final prediction error: L * (n + d) / (n - d)."""
    if d >= n:
        return math.inf
    return train_loss * (n + d) / (n - d)


def caic(train_loss: float, n: int, d: int) -> float:
    """Small-sample corrected AIC: n ln(L) + n (n + d) / (n - d - 2)."""
    if n - d - 2 <= 0 or train_loss <= 0:
        return math.inf
    return n * math.log(train_loss) + n * (n + d) / (n - d - 2)


def kfold_cv(
    data: LabeledSet,
    basis: BasisSpec,
    d: int,
    k: int = 5,
    ridge_lambda: float = DEFAULT_RIDGE,
    seed: int = 0,
) -> float:
    """Average held-out MSE over a seeded random k-fold partition.

    Fold sizes differ by at most one row. Using the same seed for every d
    keeps the partition shared across the model path. A fold that fails to
    fit yields the +inf sentinel.
    """
    n = data.n
    if n < k:
        raise ValueError(f"need n >= k folds, got n={n}, k={k}")
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(n), k)
    design = build_design(basis, data.X, d).values
    fold_errors = []
    for held in folds:
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        try:
            fit = ridge_lse(design[mask], data.y[mask], ridge_lambda)
        except SingularDesignError:
            return math.inf
        resid = data.y[held] - design[held] @ fit.alpha
        fold_errors.append(float(resid @ resid / held.size))
    return float(np.mean(fold_errors))


def adj(path: ModelPath, labeled_X, unlabeled: UnlabeledSet, d: int) -> float:
    """Metric-based adjustment of the training loss.

    Multiplies L_D(d) by the worst ratio of unlabeled to labeled RMS
    prediction distance between f_d and each smaller model f_j. Ratios whose
    labeled distance falls below RHO_FLOOR are skipped; with no usable ratio
    (in particular at d = 1) the factor is 1.
    """
    loss = path.train_loss(d)
    if d == 1:
        return loss
    labeled_X = np.atleast_2d(np.asarray(labeled_X, dtype=float))
    design_l = build_design(path.basis, labeled_X, d).values
    design_u = build_design(path.basis, unlabeled.X, d).values
    pred_l_d = design_l @ path.model(d).alpha
    pred_u_d = design_u @ path.model(d).alpha
    ratios = []
    for j in range(1, d):
        alpha_j = path.model(j).alpha
        diff_l = design_l[:, :j] @ alpha_j - pred_l_d
        diff_u = design_u[:, :j] @ alpha_j - pred_u_d
        rho_l = math.sqrt(float(np.mean(diff_l**2)))
        if rho_l < RHO_FLOOR:
            continue
        rho_u = math.sqrt(float(np.mean(diff_u**2)))
        ratios.append(rho_u / rho_l)
    factor = max(ratios) if ratios else 1.0
    return loss * factor
