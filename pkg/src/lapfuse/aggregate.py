"""Joint Gaussian over the logits of several classifiers on an input sequence.

The stacked mean is classifier-major: all L inputs of classifier 1, then
classifier 2, and so on, each contributing an M-vector of shifted logits.
Within one classifier, the cross-input covariance blocks are
J(x_i)^T P J(x_j), which captures that all predictions share the same
parameter draw. Across classifiers the correlation is not identifiable
from the training procedure, so it is a policy: exactly zero (default) or
a shared scalar rho applied through the per-coordinate standard
deviations, followed by a PSD repair of the full matrix.
"""

from dataclasses import dataclass

import numpy as np

from .data import InputSequence
from .delta import LogitGaussian, logit_gaussian
from .errors import StructuralError
from .laplace import LaplacePosterior
from .linalg import check_symmetric, project_psd


@dataclass(frozen=True)
class AggregatedState:
    """Stacked logit mean (length C*L*M) with block covariance."""

    mean: np.ndarray
    cov: np.ndarray
    num_classifiers: int
    seq_length: int
    num_classes: int
    cross_policy: str = "zero"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        total = self.num_classifiers * self.seq_length * self.num_classes
        if mean.shape != (total,) or cov.shape != (total, total):
            raise StructuralError(
                f"state shapes {mean.shape}/{cov.shape} inconsistent with "
                f"C={self.num_classifiers}, L={self.seq_length}, M={self.num_classes}"
            )
        check_symmetric(cov, tol=1e-10)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.num_classifiers, self.seq_length, self.num_classes)

    def block_offset(self, input_idx: int, classifier_idx: int) -> int:
        """Start of the M-subvector for (input l, classifier c), 0-based."""
        c, l, m = self.dims
        if not (0 <= input_idx < l and 0 <= classifier_idx < c):
            raise StructuralError(
                f"indices (l={input_idx}, c={classifier_idx}) out of range for C={c}, L={l}"
            )
        return (classifier_idx * l + input_idx) * m

    def marginal(self, input_idx: int, classifier_idx: int) -> LogitGaussian:
        """The single (input, classifier) Gaussian embedded in the state."""
        off = self.block_offset(input_idx, classifier_idx)
        m = self.num_classes
        return LogitGaussian(
            self.mean[off : off + m],
            self.cov[off : off + m, off : off + m],
            (input_idx, classifier_idx),
        )


def within_classifier_block(post: LaplacePosterior, x_i, x_j) -> np.ndarray:
    """Cross-covariance J(x_i)^T P J(x_j) between two inputs of one model."""
    jac_i = post.model.last_layer_jacobian(np.asarray(x_i, dtype=float))
    jac_j = post.model.last_layer_jacobian(np.asarray(x_j, dtype=float))
    return jac_i.T @ (post.cov_theta @ jac_j)


def aggregate(
    posteriors: list[LaplacePosterior],
    sequence: InputSequence,
    cross_rho: float | None = None,
) -> AggregatedState:
    """Stack per-(input, classifier) logit Gaussians into one joint state.

    ``cross_rho=None`` keeps the cross-classifier blocks exactly zero;
    a float in [0, 1) applies the shared-scalar policy described in the
    module docstring.
    """
    if not posteriors:
        raise StructuralError("need at least one posterior")
    m = posteriors[0].model.num_classes
    for p in posteriors:
        if p.model.num_classes != m:
            raise StructuralError("all classifiers must share the class count")
    if cross_rho is not None and not (0.0 <= cross_rho < 1.0):
        raise StructuralError("cross correlation must satisfy 0 <= rho < 1")

    n_c, n_l = len(posteriors), len(sequence)
    lm = n_l * m
    mean = np.empty(n_c * lm)
    cov = np.zeros((n_c * lm, n_c * lm))

    for c, post in enumerate(posteriors):
        jacs = [post.model.last_layer_jacobian(x) for x in sequence.inputs]
        projected = [post.cov_theta @ j for j in jacs]
        for l in range(n_l):
            mean[c * lm + l * m : c * lm + (l + 1) * m] = post.model.shifted_logits(
                sequence.inputs[l]
            )
        block = np.empty((lm, lm))
        for i in range(n_l):
            for j in range(i, n_l):
                sub = jacs[i].T @ projected[j]
                block[i * m : (i + 1) * m, j * m : (j + 1) * m] = sub
                if j > i:
                    block[j * m : (j + 1) * m, i * m : (i + 1) * m] = sub.T
        cov[c * lm : (c + 1) * lm, c * lm : (c + 1) * lm] = 0.5 * (block + block.T)

    cov, policy = _apply_cross_policy(cov, n_c, lm, cross_rho)
    return AggregatedState(mean, cov, n_c, n_l, m, policy)


def _apply_cross_policy(cov: np.ndarray, n_c: int, block: int, cross_rho: float | None):
    """Fill cross-classifier blocks per the shared-scalar policy, then repair."""
    if cross_rho is None:
        return cov, "zero"
    sdev = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    for a in range(n_c):
        for b in range(n_c):
            if a == b:
                continue
            rows = slice(a * block, (a + 1) * block)
            cols = slice(b * block, (b + 1) * block)
            cov[rows, cols] = cross_rho * np.diag(sdev[rows] * sdev[cols])
    return project_psd(cov), f"shared_scalar({cross_rho})"


def state_from_blocks(
    means, covs, seq_length: int = 1, cross_rho: float | None = None
) -> AggregatedState:
    """Assemble an AggregatedState from per-classifier mean/cov blocks.

    ``means[c]`` is the stacked (L*M,) shifted-logit mean of classifier c
    and ``covs[c]`` its (L*M, L*M) covariance; cross-classifier blocks
    follow the same policy as :func:`aggregate`.
    """
    means = [np.asarray(mn, dtype=float).reshape(-1) for mn in means]
    n_c = len(means)
    if n_c == 0:
        raise StructuralError("need at least one classifier block")
    lm = means[0].size
    if lm % seq_length != 0:
        raise StructuralError(f"block size {lm} not divisible by L={seq_length}")
    m = lm // seq_length
    mean = np.concatenate(means)
    cov = np.zeros((n_c * lm, n_c * lm))
    for c, blk in enumerate(covs):
        blk = np.asarray(blk, dtype=float)
        if blk.shape != (lm, lm):
            raise StructuralError(f"covariance block {c} has shape {blk.shape}")
        cov[c * lm : (c + 1) * lm, c * lm : (c + 1) * lm] = blk
    cov, policy = _apply_cross_policy(cov, n_c, lm, cross_rho)
    return AggregatedState(mean, cov, n_c, seq_length, m, policy)


def recover(state: AggregatedState, input_idx: int, classifier_idx: int, samples: np.ndarray) -> np.ndarray:
    """Select the (input, classifier) logit block from stacked-state samples.

    ``samples`` has shape (K, C*L*M); the result is (K, M).
    """
    samples = np.asarray(samples, dtype=float)
    off = state.block_offset(input_idx, classifier_idx)
    return samples[:, off : off + state.num_classes]
