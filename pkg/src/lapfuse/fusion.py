"""Fusing logit Gaussians into class-probability estimates.

Four routes are provided:

* Information-form fusion of the aggregated state: precisions add, so the
  fused Gaussian is N((H'R^-1 H)^-1 H'R^-1 zeta, (H'R^-1 H)^-1) with H a
  stack of identity matrices. Solved with Cholesky factorizations only.
* Monte Carlo softmax marginalization of a logit Gaussian: sample logits,
  softmax each draw, average.
* Multimodal mixture sampling: draw the full stacked state once per
  sample, recover every (input, classifier) block, and average the blocks
  with fixed weights before the softmax. Because all modes share each
  draw, their cross-correlation is preserved.
* Non-parametric baselines on point PMFs: normalized products and
  weighted log-linear pooling, both computed in log space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .aggregate import AggregatedState
from .errors import NumericalError, StructuralError
from .estimates import PmfEstimate
from .linalg import check_symmetric, chol_lower
from .network import softmax
from .seeding import make_rng

_SAMPLE_CHUNK = 16384


@dataclass(frozen=True)
class FusedGaussian:
    """Gaussian over fused (shifted) logits."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise StructuralError(f"shape mismatch: mean {mean.shape}, cov {cov.shape}")
        check_symmetric(cov, tol=1e-10)
        chol_lower(cov + 1e-12 * np.eye(mean.size), ladder=(0.0,))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def num_classes(self) -> int:
        return self.mean.size


def fuse_information(state: AggregatedState) -> FusedGaussian:
    """Precision-weighted fusion of all blocks of an aggregated state."""
    n_c, n_l, m = state.dims
    stack = np.tile(np.eye(m), (n_c * n_l, 1))  # H
    r_factor = chol_lower(state.cov)
    solved = cho_solve((r_factor, True), stack)  # R^-1 H
    precision = stack.T @ solved
    precision = 0.5 * (precision + precision.T)
    info_mean = solved.T @ state.mean  # H' R^-1 zeta
    p_factor = chol_lower(precision)
    cov = cho_solve((p_factor, True), np.eye(m))
    mean = cho_solve((p_factor, True), info_mean)
    return FusedGaussian(mean, 0.5 * (cov + cov.T))


def _mc_softmax_average(mean, cov, count, seed, combine, out_dim, keep_cloud, method):
    """Shared sampling loop: draw logits, map, softmax, average.

    An exactly-zero covariance short-circuits to the degenerate Gaussian
    (every sample equals the mean), keeping the advertised exactness of
    the no-uncertainty case.
    """
    if count < 1:
        raise StructuralError("count must be >= 1")
    mean = np.asarray(mean, dtype=float)
    degenerate = not np.any(cov)
    lower = None if degenerate else chol_lower(cov)
    rng = make_rng(seed)

    total = np.zeros(out_dim)
    cloud = np.empty((count, out_dim)) if keep_cloud else None
    done = 0
    while done < count:
        n = min(_SAMPLE_CHUNK, count - done)
        if degenerate:
            draws = np.tile(mean, (n, 1))
        else:
            draws = mean[None, :] + rng.standard_normal((n, mean.size)) @ lower.T
        probs = softmax(combine(draws))
        total += probs.sum(axis=0)
        if keep_cloud:
            cloud[done : done + n] = probs
        done += n
    pmf = cloud.mean(axis=0) if keep_cloud else total / count
    return PmfEstimate(pmf, method, seed, count, cloud)


def mc_pmf(gaussian, count: int, seed: int, keep_cloud: bool = False) -> PmfEstimate:
    """Class PMF by Monte Carlo softmax marginalization of a logit Gaussian.

    Accepts any object with ``mean`` and ``cov`` attributes (a fused
    Gaussian or a single-classifier logit Gaussian).
    """
    mean = np.asarray(gaussian.mean, dtype=float)
    return _mc_softmax_average(
        mean, gaussian.cov, count, seed, lambda z: z, mean.size, keep_cloud, "mc"
    )


def ella_pmf(
    state: AggregatedState,
    weights: np.ndarray,
    count: int,
    seed: int,
    keep_cloud: bool = False,
) -> PmfEstimate:
    """Multimodal class PMF from correlated samples of the stacked state.

    ``weights`` has one entry per (classifier, input) mode in the state's
    stacking order (classifier-major), is non-negative, and sums to one.
    Each stacked-state draw is split into its per-mode logit blocks, the
    blocks are averaged with the weights, and the result is pushed through
    the usual softmax-average.
    """
    n_c, n_l, m = state.dims
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_c * n_l,):
        raise StructuralError(f"need {n_c * n_l} weights, got {weights.shape}")
    if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-9:
        raise StructuralError("weights must be non-negative and sum to 1")

    def combine(draws):
        blocks = draws.reshape(draws.shape[0], n_c * n_l, m)
        return np.einsum("kjm,j->km", blocks, weights)

    return _mc_softmax_average(
        state.mean, state.cov, count, seed, combine, m, keep_cloud, "ella"
    )


def uniform_weights(num_classifiers: int, seq_length: int) -> np.ndarray:
    """Equal weight on every (classifier, input) mode."""
    n = num_classifiers * seq_length
    return np.full(n, 1.0 / n)


def inverse_trace_weights(state: AggregatedState) -> np.ndarray:
    """Weights proportional to 1 / trace of each mode's logit covariance."""
    n_c, n_l, m = state.dims
    traces = np.empty(n_c * n_l)
    for c in range(n_c):
        for l in range(n_l):
            off = state.block_offset(l, c)
            traces[c * n_l + l] = np.trace(state.cov[off : off + m, off : off + m])
    inv = 1.0 / np.maximum(traces, 1e-300)
    return inv / inv.sum()


# ---------------------------------------------------------------------------
# Non-parametric baselines
# ---------------------------------------------------------------------------


def _check_pmfs(pmfs) -> np.ndarray:
    arr = np.asarray(pmfs, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise StructuralError("expected a list of PMF vectors")
    if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-9):
        raise StructuralError("inputs must be valid PMFs")
    return arr


def product_fusion(pmfs) -> np.ndarray:
    """Elementwise product of PMFs, renormalized; computed in log space."""
    arr = _check_pmfs(pmfs)
    with np.errstate(divide="ignore"):
        log_total = np.sum(np.log(arr), axis=0)
    top = np.max(log_total)
    if not np.isfinite(top):
        raise NumericalError("product fusion annihilated every class")
    unnorm = np.exp(log_total - top)
    return unnorm / unnorm.sum()


def log_linear_pool(pmfs, weights) -> np.ndarray:
    """Weighted geometric pooling of PMFs, renormalized.

    Every PMF with positive weight must be strictly positive where used.
    """
    arr = _check_pmfs(pmfs)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (arr.shape[0],):
        raise StructuralError(f"need {arr.shape[0]} weights, got {weights.shape}")
    if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-9:
        raise StructuralError("weights must be non-negative and sum to 1")
    if np.any((arr == 0.0) & (weights[:, None] > 0)):
        raise StructuralError("zero probability with positive weight")
    used = np.flatnonzero(weights)  # weights sum to 1, so at least one entry
    log_total = weights[used] @ np.log(arr[used])
    top = np.max(log_total)
    unnorm = np.exp(log_total - top)
    return unnorm / unnorm.sum()
