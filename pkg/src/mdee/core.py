"""Shared regression machinery.

Fourier feature evaluation, additive design matrices, ridge-stabilized least
squares, empirical losses and correlation matrices. Every model selection
criterion in this package is built on top of these primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

SQRT2 = float(np.sqrt(2.0))

# Ridge coefficient used throughout unless a caller overrides it.
DEFAULT_RIDGE = 1e-9

# Condition number of the (ridge-augmented) normal matrix above which a solve
# is treated as numerically singular.
COND_LIMIT = 1e12


class SingularDesignError(ValueError):
    """Normal matrix is numerically singular even after ridge augmentation."""


@dataclass(frozen=True)
class BasisSpec:
    """Feature basis description: family name plus covariate dimension M."""

    kind: str = "fourier"
    covariate_dim: int = 1

    def __post_init__(self):
        if self.kind != "fourier":
            raise ValueError(f"unknown basis kind: {self.kind!r}")
        if self.covariate_dim < 1:
            raise ValueError("covariate_dim must be a positive integer")


@dataclass
class LabeledSet:
    """Covariate matrix (n x M) paired with a response vector of length n."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y must have matching row counts")
        if self.X.shape[0] < 1:
            raise ValueError("a labeled set needs at least one row")

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class UnlabeledSet:
    """Covariate-only pool (n' x M)."""

    X: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class DesignMatrix:
    """Feature matrix of a truncated additive model.

    Entry (i, k) is sum_m phi_k(X[i, m]); the first column is therefore
    constantly equal to the covariate dimension M.
    """

    values: np.ndarray
    d: int
    basis: BasisSpec

    @property
    def rows(self) -> int:
        return self.values.shape[0]


@dataclass
class FittedModel:
    d: int
    alpha: np.ndarray
    train_loss: float
    ridge_lambda: float


@dataclass
class ModelPath:
    """Fitted models for every size d = 1..d_max on one labeled set."""

    models: list[FittedModel]
    d_max: int
    basis: BasisSpec

    def __post_init__(self):
        if len(self.models) != self.d_max:
            raise ValueError("model path must hold one model per size")
        for i, m in enumerate(self.models, start=1):
            if m.d != i:
                raise ValueError("models must be indexed contiguously from 1")

    def model(self, d: int) -> FittedModel:
        return self.models[d - 1]

    def train_loss(self, d: int) -> float:
        return self.models[d - 1].train_loss


@dataclass
class BlockPartition:
    """Unlabeled pool cut into disjoint blocks of exactly `block_size` rows."""

    blocks: list[np.ndarray]
    block_size: int

    def __post_init__(self):
        self.blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.blocks]
        if any(b.shape[0] != self.block_size for b in self.blocks):
            raise ValueError("every block must have exactly block_size rows")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def stacked(self) -> np.ndarray:
        """All blocks as one (B, n, M) array."""
        return np.stack(self.blocks)


def _design_values(phi) -> np.ndarray:
    if isinstance(phi, DesignMatrix):
        return phi.values
    return np.atleast_2d(np.asarray(phi, dtype=float))


def _fourier_column(k: int, t: np.ndarray) -> np.ndarray:
    """k-th Fourier function evaluated elementwise: 1, sqrt(2)cos(pt), sqrt(2)sin(pt)."""
    if k == 1:
        return np.ones_like(t)
    p = k // 2
    if k % 2 == 0:
        return SQRT2 * np.cos(p * t)
    return SQRT2 * np.sin(p * t)


def basis_eval(basis: BasisSpec, k: int, t: float) -> float:
    """Evaluate the k-th basis function at a scalar point."""
    if k < 1:
        raise ValueError("basis index k must be >= 1")
    return float(_fourier_column(k, np.asarray(t, dtype=float)))


def build_design(basis: BasisSpec, X, d: int) -> DesignMatrix:
    """Design matrix of the size-d additive model over covariate rows X.

    Column k holds sum_m phi_k(X[i, m]); coefficients are shared across
    covariate coordinates, so M > 1 sums the feature over coordinates.
    """
    if d < 1:
        raise ValueError("model size d must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("design requires at least one covariate row")
    cols = [_fourier_column(k, X).sum(axis=1) for k in range(1, d + 1)]
    return DesignMatrix(values=np.column_stack(cols), d=d, basis=basis)


def predict(basis: BasisSpec, X, alpha: np.ndarray) -> np.ndarray:
    """Model predictions sum_k alpha_k sum_m phi_k(x_m) for each row of X."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    design = build_design(basis, X, len(alpha))
    return design.values @ alpha


def ridge_lse(phi, y, ridge_lambda: float = DEFAULT_RIDGE) -> FittedModel:
    """Least squares fit through the ridge-augmented normal equations.

    Solves (Phi^T Phi + n*lambda*I) alpha = Phi^T y with a symmetric
    (Cholesky) factorization. Scaling the penalty by n keeps lambda
    comparable with the per-row correlation matrix regardless of n.
    """
    v = _design_values(phi)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, d = v.shape
    if n != y.shape[0]:
        raise ValueError("design rows and response length differ")
    A = v.T @ v + n * ridge_lambda * np.eye(d)
    A = 0.5 * (A + A.T)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularDesignError(
            f"normal matrix condition {cond:.3g} exceeds {COND_LIMIT:.0e}"
        )
    try:
        factor = cho_factor(A, lower=True)
        alpha = cho_solve(factor, v.T @ y)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - cond guard first
        raise SingularDesignError(f"normal matrix factorization failed: {exc}") from exc
    loss = empirical_loss(v, y, alpha)
    return FittedModel(d=d, alpha=alpha, train_loss=loss, ridge_lambda=ridge_lambda)


def empirical_loss(phi, y, alpha) -> float:
    """Mean squared residual (1/n) ||y - Phi alpha||^2."""
    v = _design_values(phi)
    y = np.asarray(y, dtype=float).reshape(-1)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    resid = y - v @ alpha
    return float(resid @ resid / y.shape[0])


def correlation_matrix(phi) -> np.ndarray:
    """Empirical correlation matrix (1/rows) Phi^T Phi, symmetrized."""
    v = _design_values(phi)
    C = v.T @ v / v.shape[0]
    return 0.5 * (C + C.T)


def fit_model_path(
    data: LabeledSet,
    basis: BasisSpec,
    d_max: int,
    ridge_lambda: float = DEFAULT_RIDGE,
) -> ModelPath:
    """Fit the LSE for every model size d = 1..d_max on the full labeled set."""
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    full = build_design(basis, data.X, d_max)
    models = []
    for d in range(1, d_max + 1):
        sub = DesignMatrix(values=full.values[:, :d], d=d, basis=basis)
        try:
            models.append(ridge_lse(sub, data.y, ridge_lambda))
        except SingularDesignError as exc:
            raise SingularDesignError(f"model size d={d}: {exc}") from exc
    return ModelPath(models=models, d_max=d_max, basis=basis)


def block_partition(pool: UnlabeledSet, n: int) -> BlockPartition:
    """Cut the pool into B = floor(n'/n) disjoint blocks of n rows, in pool order.

    Remainder rows are discarded so every block is a same-sized i.i.d. copy
    of the training covariate set.
    """
    if n < 1:
        raise ValueError("block size must be >= 1")
    n_pool = pool.X.shape[0]
    n_blocks = n_pool // n
    if n_blocks == 0:
        raise ValueError("unlabeled pool smaller than one block")
    blocks = [pool.X[b * n : (b + 1) * n] for b in range(n_blocks)]
    return BlockPartition(blocks=blocks, block_size=n)
