"""First-order propagation of parameter uncertainty to the logits.

For a frozen classifier with last-layer posterior N(theta_hat, P), the
pre-softmax outputs at an input x are approximately Gaussian with mean
equal to the shifted logits and covariance J^T P J, where J is the
last-layer Jacobian at x. The shift (subtracting the maximum logit) is a
constant translation at the evaluation point, so the covariance carries
over unchanged.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, StructuralError
from .laplace import LaplacePosterior
from .linalg import check_symmetric


@dataclass(frozen=True)
class LogitGaussian:
    """Gaussian over shifted logits for one (input, classifier) pair."""

    mean: np.ndarray
    cov: np.ndarray
    source: tuple[int, int] | None = None  # (input id l, classifier id c)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise StructuralError(f"shape mismatch: mean {mean.shape}, cov {cov.shape}")
        if mean.size and float(np.max(mean)) != 0.0:
            raise StructuralError("mean must be shifted (max element exactly 0)")
        check_symmetric(cov, tol=1e-10)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def num_classes(self) -> int:
        return self.mean.size


def logit_gaussian(
    post: LaplacePosterior, x, source: tuple[int, int] | None = None
) -> LogitGaussian:
    """Delta-method Gaussian over shifted logits at one input."""
    model = post.model
    x = np.asarray(x, dtype=float)
    jac = model.last_layer_jacobian(x)
    if not np.isfinite(jac).all():
        raise NumericalError("non-finite Jacobian")
    cov = jac.T @ (post.cov_theta @ jac)
    mean = model.shifted_logits(x)
    return LogitGaussian(mean, 0.5 * (cov + cov.T), source)


def logit_gaussians_batch(post: LaplacePosterior, inputs, chunk: int = 2048):
    """Means and covariances of :func:`logit_gaussian` for many inputs.

    Exploits the block sparsity of the last-layer Jacobian: with the
    posterior covariance regrouped per output unit, each logit covariance
    is a bilinear form in the bias-extended penultimate activation.
    Returns ``(means, covs)`` with shapes (N, M) and (N, M, M).
    """
    model = post.model
    h, m = model.penultimate_dim, model.num_classes
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    acts = model.penultimate(inputs)
    ext = np.concatenate([acts, np.ones((acts.shape[0], 1))], axis=1)

    # index order (class, coord) with the bias appended to each class block
    perm = np.concatenate(
        [np.concatenate([np.arange(c * h, (c + 1) * h), [h * m + c]]) for c in range(m)]
    )
    grouped = post.cov_theta[np.ix_(perm, perm)].reshape(m, h + 1, m, h + 1)

    logits = acts @ model.weights[-1] + model.biases[-1]
    means = logits - logits.max(axis=1, keepdims=True)
    covs = np.empty((inputs.shape[0], m, m))
    for start in range(0, inputs.shape[0], chunk):
        piece = ext[start : start + chunk]
        outer = piece[:, :, None] * piece[:, None, :]
        block = np.tensordot(outer, grouped, axes=([1, 2], [1, 3]))
        covs[start : start + chunk] = 0.5 * (block + np.swapaxes(block, 1, 2))
    return means, covs
