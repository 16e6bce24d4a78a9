"""The DEE family of multiplicative risk estimators.

Each criterion estimates the trace of C*V, with C the population feature
correlation matrix and V the expectation of the inverse empirical correlation
matrix, then corrects the training loss by

    T(n, d) = (1 + tr/n) / (1 - d/n).

DEE plugs in the inverse of the labeled-sample correlation matrix against the
unlabeled one. The mDEE variants instead cut the unlabeled pool into blocks
of the training size and combine block-level correlation matrices (for C) and
block-level inverses (for V); they differ only in which blocks feed each side.
rmDEE replaces the mean of per-block traces with their median, which survives
near-singular blocks. The block split for mDEE1 is chosen by the closed-form
variance-minimizing rule implemented in `select_b1`.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    COND_LIMIT,
    DEFAULT_RIDGE,
    BasisSpec,
    BlockPartition,
    ModelPath,
    SingularDesignError,
    UnlabeledSet,
    build_design,
    correlation_matrix,
)


class CriterionKind(enum.Enum):
    DEE = "DEE"
    MDEE1 = "mDEE1"
    MDEE2 = "mDEE2"
    MDEE3 = "mDEE3"
    RMDEE = "rmDEE"


@dataclass
class CorrectionEstimate:
    """One criterion evaluation at model size d.

    `factor` is (1 + tr_H/n)/(1 - d/n) and `risk` is factor times the model's
    training loss. `flagged_blocks` lists block indices whose jittered
    correlation matrix had condition number above the singularity limit.
    """

    d: int
    tr_H: float
    factor: float
    risk: float
    b1_used: int | None = None
    flagged_blocks: tuple[int, ...] = ()


@dataclass
class MomentSummary:
    """Empirical moments of vectorized block matrices used by the split rule.

    mu_bar / nu_bar average the vectorized block correlation matrices and
    their inverses; a1 and a2 are the two variance-objective coefficients.
    """

    mu_bar: np.ndarray
    nu_bar: np.ndarray
    a1: float
    a2: float
    n_blocks: int


def correction_factor(tr_h: float, n: int, d: int) -> float:
    """Multiplicative bias correction (1 + tr_h/n) / (1 - d/n)."""
    if d >= n:
        raise ValueError(f"correction factor undefined for d={d} >= n={n}")
    return (1.0 + tr_h / n) / (1.0 - d / n)


def _jitter_cond(mats: np.ndarray) -> np.ndarray:
    """2-norm condition numbers of a (B, d, d) stack of symmetric matrices."""
    s = np.linalg.svd(mats, compute_uv=False)
    smin = s[..., -1]
    with np.errstate(divide="ignore"):
        return np.where(smin > 0, s[..., 0] / smin, np.inf)


def invert_blocks(
    corrs: np.ndarray, ridge: float = DEFAULT_RIDGE
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Invert each matrix in a (B, d, d) stack after adding ridge*I.

    Returns the inverses and the indices of blocks whose jittered matrix has
    condition number above COND_LIMIT (kept, but flagged for diagnostics).
    """
    corrs = np.asarray(corrs, dtype=float)
    if corrs.ndim == 2:
        corrs = corrs[None]
    d = corrs.shape[-1]
    jittered = corrs + ridge * np.eye(d)
    cond = _jitter_cond(jittered)
    flagged = tuple(int(i) for i in np.nonzero(~(cond <= COND_LIMIT))[0])
    try:
        invs = np.linalg.inv(jittered)
    except np.linalg.LinAlgError:
        # Retry one by one so the failing block can be named.
        invs = np.empty_like(jittered)
        for b in range(jittered.shape[0]):
            try:
                invs[b] = np.linalg.inv(jittered[b])
            except np.linalg.LinAlgError as exc:
                raise SingularDesignError(
                    f"block {b}: correlation matrix singular even with ridge jitter"
                ) from exc
    return invs, flagged


def block_corr_stack(blocks: BlockPartition, basis: BasisSpec, d: int) -> np.ndarray:
    """Per-block empirical correlation matrices as a (B, d, d) stack."""
    stacked = blocks.stacked()
    B, n, _ = stacked.shape
    design = build_design(basis, stacked.reshape(B * n, -1), d).values
    design = design.reshape(B, n, d)
    corrs = np.einsum("bij,bik->bjk", design, design) / n
    return 0.5 * (corrs + np.swapaxes(corrs, 1, 2))


def dee_trace(c_hat: np.ndarray, c_tilde: np.ndarray, ridge: float = DEFAULT_RIDGE) -> float:
    """Tr(C_hat^{-1} C_tilde) through a jittered solve.

    Raises SingularDesignError when the jittered labeled correlation matrix
    is numerically singular (condition above COND_LIMIT).
    """
    c_hat = np.asarray(c_hat, dtype=float)
    c_tilde = np.asarray(c_tilde, dtype=float)
    jittered = c_hat + ridge * np.eye(c_hat.shape[0])
    cond = float(_jitter_cond(jittered[None])[0])
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularDesignError(
            f"labeled correlation matrix condition {cond:.3g} exceeds {COND_LIMIT:.0e}"
        )
    try:
        solved = np.linalg.solve(jittered, c_tilde)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("labeled correlation matrix singular") from exc
    return float(np.trace(solved))


def dee(
    path: ModelPath,
    labeled_X,
    unlabeled: UnlabeledSet,
    d: int,
    ridge: float = DEFAULT_RIDGE,
) -> CorrectionEstimate:
    """DEE risk estimate: tr_H = Tr(C_hat^{-1} C_tilde) over all unlabeled rows."""
    labeled_X = np.atleast_2d(np.asarray(labeled_X, dtype=float))
    if unlabeled.n < 1:
        raise ValueError("DEE requires at least one unlabeled row")
    n = labeled_X.shape[0]
    c_hat = correlation_matrix(build_design(path.basis, labeled_X, d))
    c_tilde = correlation_matrix(build_design(path.basis, unlabeled.X, d))
    tr = dee_trace(c_hat, c_tilde, ridge)
    factor = correction_factor(tr, n, d)
    return CorrectionEstimate(
        d=d, tr_H=tr, factor=factor, risk=factor * path.train_loss(d)
    )


def estimate_C_plus(rows, basis: BasisSpec, d: int) -> np.ndarray:
    """Empirical correlation matrix of basis features over the given rows."""
    return correlation_matrix(build_design(basis, rows, d))


def estimate_V(block_corrs, indices=None, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Average of jittered block-correlation inverses over the named blocks.

    `block_corrs` is a sequence (or stack) of per-block d x d correlation
    matrices; `indices=None` averages every block.
    """
    corrs = np.asarray(block_corrs, dtype=float)
    if corrs.ndim == 2:
        corrs = corrs[None]
    if indices is not None:
        indices = list(indices)
        if not indices:
            raise ValueError("estimate_V needs a nonempty block index set")
        corrs = corrs[indices]
    invs, _ = invert_blocks(corrs, ridge)
    return invs.mean(axis=0)


def mdee_trace(
    block_corrs: np.ndarray,
    variant: CriterionKind,
    b1: int | None,
    ridge: float = DEFAULT_RIDGE,
) -> tuple[float, tuple[int, ...]]:
    """Tr(C_plus V_hat) from a stack of block correlation matrices.

    mDEE1 feeds C_plus from the first b1 blocks and V_hat from the rest,
    mDEE2 feeds C_plus from the first b1 blocks and V_hat from every block,
    mDEE3 feeds both sides from every block.
    """
    corrs = np.asarray(block_corrs, dtype=float)
    B = corrs.shape[0]
    if variant is CriterionKind.MDEE1:
        if b1 is None or not 1 <= b1 <= B - 1:
            raise ValueError(f"mDEE1 needs 1 <= b1 <= B-1, got b1={b1}, B={B}")
        c_side, v_side = corrs[:b1], corrs[b1:]
        v_offset = b1
    elif variant is CriterionKind.MDEE2:
        if b1 is None or not 1 <= b1 <= B:
            raise ValueError(f"mDEE2 needs 1 <= b1 <= B, got b1={b1}, B={B}")
        c_side, v_side = corrs[:b1], corrs
        v_offset = 0
    elif variant is CriterionKind.MDEE3:
        c_side, v_side = corrs, corrs
        v_offset = 0
    else:
        raise ValueError(f"not an mDEE variant: {variant}")
    c_plus = c_side.mean(axis=0)
    invs, flagged = invert_blocks(v_side, ridge)
    v_hat = invs.mean(axis=0)
    tr = float(np.trace(c_plus @ v_hat))
    return tr, tuple(v_offset + i for i in flagged)


def mdee(
    path: ModelPath,
    blocks: BlockPartition,
    variant: CriterionKind,
    b1: int | None,
    d: int,
    ridge: float = DEFAULT_RIDGE,
) -> CorrectionEstimate:
    """Block-partitioned risk estimate for one of the mDEE variants."""
    corrs = block_corr_stack(blocks, path.basis, d)
    tr, flagged = mdee_trace(corrs, variant, b1, ridge)
    n = blocks.block_size
    factor = correction_factor(tr, n, d)
    used = b1 if variant in (CriterionKind.MDEE1, CriterionKind.MDEE2) else None
    return CorrectionEstimate(
        d=d,
        tr_H=tr,
        factor=factor,
        risk=factor * path.train_loss(d),
        b1_used=used,
        flagged_blocks=flagged,
    )


def rmdee_trace(
    block_corrs: np.ndarray,
    labeled_corr: np.ndarray | None,
    ridge: float = DEFAULT_RIDGE,
) -> tuple[float, tuple[int, ...]]:
    """Median of per-block traces Tr(C_plus C_b^{-1}).

    C_plus averages every unlabeled block. When `labeled_corr` is given it
    joins the trace list as block 0 (flag indices then start at 1 for the
    unlabeled blocks). An even count takes the mean of the two central order
    statistics.
    """
    corrs = np.asarray(block_corrs, dtype=float)
    c_plus = corrs.mean(axis=0)
    invs, flagged = invert_blocks(corrs, ridge)
    traces = np.einsum("ij,bji->b", c_plus, invs)
    offset = 0
    if labeled_corr is not None:
        inv0, flagged0 = invert_blocks(np.asarray(labeled_corr, float)[None], ridge)
        tr0 = float(np.trace(c_plus @ inv0[0]))
        traces = np.concatenate(([tr0], traces))
        offset = 1
        flagged = tuple(flagged0) + tuple(i + offset for i in flagged)
    else:
        flagged = tuple(flagged)
    return float(np.median(traces)), flagged


def rmdee(
    path: ModelPath,
    blocks: BlockPartition,
    labeled_X,
    d: int,
    ridge: float = DEFAULT_RIDGE,
    include_labeled: bool = True,
) -> CorrectionEstimate:
    """Robust mDEE: median of per-block traces instead of their mean.

    The labeled covariates enter as block 0 by default; set
    `include_labeled=False` to take the median over unlabeled blocks only.
    """
    corrs = block_corr_stack(blocks, path.basis, d)
    labeled_corr = None
    if include_labeled:
        labeled_corr = estimate_C_plus(labeled_X, path.basis, d)
    tr, flagged = rmdee_trace(corrs, labeled_corr, ridge)
    n = blocks.block_size
    factor = correction_factor(tr, n, d)
    return CorrectionEstimate(
        d=d,
        tr_H=tr,
        factor=factor,
        risk=factor * path.train_loss(d),
        flagged_blocks=flagged,
    )


def continuous_split(a1: float, a2: float, n_blocks: int) -> float:
    """Continuous minimizer of a1/B1 + a2/(B - B1) on (0, B)."""
    if a1 == a2:
        return n_blocks / 2.0
    return (a1 - np.sqrt(a1 * a2)) / (a1 - a2) * n_blocks


def _split_objective(a1: float, a2: float, n_blocks: int, b1: int) -> float:
    return a1 / b1 + a2 / (n_blocks - b1)


def optimal_split(a1: float, a2: float, n_blocks: int) -> int:
    """Integer minimizer of a1/B1 + a2/(B - B1) over 1..B-1.

    Evaluates the ceiling and the floor of the continuous optimum and keeps
    the lower objective (ties break toward the smaller split).
    """
    if n_blocks < 2:
        raise ValueError("cannot split fewer than two blocks")
    b_star = continuous_split(a1, a2, n_blocks)
    candidates = sorted(
        {
            int(min(max(np.floor(b_star), 1), n_blocks - 1)),
            int(min(max(np.ceil(b_star), 1), n_blocks - 1)),
        }
    )
    return min(candidates, key=lambda b: (_split_objective(a1, a2, n_blocks, b), b))


def select_b1(
    blocks: BlockPartition,
    basis: BasisSpec,
    d: int,
    ridge: float = DEFAULT_RIDGE,
) -> tuple[int, MomentSummary]:
    """Variance-minimizing block split for mDEE1.

    Estimates the moment quantities of the vectorized block correlation
    matrices (mu) and their inverses (nu) across all B blocks, assembles

        a1 = Tr(Var(mu) Var(nu))/B + Tr(Var(mu) nu nu^T)
        a2 = Tr(Var(mu) Var(nu))/B + Tr(Var(nu) mu mu^T)

    with the plug-ins mu ~ mu_bar, nu ~ nu_bar, and returns the integer B1
    minimizing a1/B1 + a2/(B - B1). The trace quantities are computed from
    centered vectors without materializing any d^2 x d^2 matrix:

        Tr(Var(mu) Var(nu)) = sum_{b,b'} (u_b^T v_b')^2 / (B-1)^2
        Tr(Var(mu) nu nu^T) = sum_b (u_b^T nu_bar)^2 / (B-1)
        Tr(Var(nu) mu mu^T) = sum_b (v_b^T mu_bar)^2 / (B-1)
    """
    B = blocks.n_blocks
    if B < 2:
        raise ValueError("cannot split fewer than two blocks")
    corrs = block_corr_stack(blocks, basis, d)
    invs, _ = invert_blocks(corrs, ridge)
    mu = corrs.reshape(B, d * d)
    nu = invs.reshape(B, d * d)
    mu_bar = mu.mean(axis=0)
    nu_bar = nu.mean(axis=0)
    u = mu - mu_bar
    v = nu - nu_bar
    tr_varmu_varnu = float(np.sum((u @ v.T) ** 2)) / (B - 1) ** 2
    tr_varmu_nunu = float(np.sum((u @ nu_bar) ** 2)) / (B - 1)
    tr_varnu_mumu = float(np.sum((v @ mu_bar) ** 2)) / (B - 1)
    a1 = tr_varmu_varnu / B + tr_varmu_nunu
    a2 = tr_varmu_varnu / B + tr_varnu_mumu
    b1 = optimal_split(a1, a2, B)
    return b1, MomentSummary(mu_bar=mu_bar, nu_bar=nu_bar, a1=a1, a2=a2, n_blocks=B)


def select_model(estimates) -> int:
    """Model size minimizing the estimated risk.

    Accepts CorrectionEstimate objects or bare risk values (then position i
    maps to d = i + 1). Ties break toward the smallest d; infinite risks never
    win unless every entry is infinite, in which case d = 1 is returned and a
    warning is issued.
    """
    if len(estimates) == 0:
        raise ValueError("select_model needs at least one estimate")
    pairs = []
    for i, e in enumerate(estimates):
        if isinstance(e, CorrectionEstimate):
            d, risk = e.d, e.risk
        else:
            d, risk = i + 1, float(e)
        if np.isnan(risk):
            risk = np.inf
        pairs.append((risk, d))
    if all(np.isinf(r) for r, _ in pairs):
        warnings.warn("all candidate risks are infinite; falling back to d=1")
        return min(d for _, d in pairs)
    return min(pairs)[1]
