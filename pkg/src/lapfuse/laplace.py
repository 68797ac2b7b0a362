"""Last-layer Laplace approximation of the parameter posterior.

The posterior over the flattened last-layer parameters is
N(theta_hat, P) with

    P = t_theta * (I_fisher + (1/sigma0_sq) * I)^(-1)

where I_fisher is the Fisher information of the softmax likelihood
restricted to the last layer and t_theta >= 1 is an optional covariance
inflation compensating for the layers held fixed. The Fisher is used in
place of the negative log-likelihood Hessian because it is positive
semidefinite by construction.

Serialized posterior byte layout (little-endian):

    8 bytes  magic b"LLAPOST1"
    u32      d (last-layer parameter count)
    f64 * d  theta_hat
    f64 * d(d+1)/2  lower Cholesky factor of P, packed by rows (L[i,0..i])
    f64      sigma0_sq
    f64      t_theta
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .estimates import PmfEstimate
from .linalg import chol_lower, check_symmetric, spd_inverse
from .network import MlpClassifier, softmax
from .seeding import make_rng

POSTERIOR_MAGIC = b"LLAPOST1"

_SAMPLE_CHUNK = 16384


@dataclass(frozen=True)
class LaplacePosterior:
    """Gaussian over the last-layer parameters of a frozen classifier."""

    model: MlpClassifier
    theta_hat: np.ndarray
    cov_theta: np.ndarray
    prior_variance: float
    t_theta: float = 1.0
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        theta = np.asarray(self.theta_hat, dtype=float)
        cov = np.asarray(self.cov_theta, dtype=float)
        d = self.model.last_layer_param_count
        if theta.shape != (d,):
            raise StructuralError(f"theta_hat shape {theta.shape}, expected ({d},)")
        if cov.shape != (d, d):
            raise StructuralError(f"cov_theta shape {cov.shape}, expected ({d},{d})")
        check_symmetric(cov, tol=1e-10)
        chol_lower(cov + 1e-12 * np.eye(d), ladder=(0.0,))  # PSD gate
        # information can only shrink the (scaled) prior
        bound = self.t_theta * self.prior_variance
        min_gap = float(np.min(np.linalg.eigvalsh(bound * np.eye(d) - cov)))
        if min_gap < -1e-10 * max(1.0, bound):
            raise StructuralError(
                f"posterior covariance exceeds the scaled prior by {-min_gap:.3e}"
            )
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "cov_theta", cov)

    @property
    def dim(self) -> int:
        return self.theta_hat.size

    def cov_factor(self) -> np.ndarray:
        """Lower Cholesky factor of cov_theta (cached)."""
        if self._chol is None:
            object.__setattr__(self, "_chol", chol_lower(self.cov_theta))
        return self._chol

    def scaled(self, t_theta: float) -> "LaplacePosterior":
        """Same posterior with its covariance rescaled to a new t_theta."""
        if t_theta < 1.0:
            raise StructuralError("t_theta must be >= 1")
        base = self.cov_theta / self.t_theta
        return LaplacePosterior(
            self.model, self.theta_hat, base * t_theta, self.prior_variance, t_theta
        )


def fisher_information(model: MlpClassifier, data) -> np.ndarray:
    """Fisher information of the softmax likelihood w.r.t. last-layer params.

    Sum over items and classes of eta * J_m J_m^T with
    eta = f_m (1 - f_m). The last-layer Jacobian columns have disjoint
    support per output unit, so the matrix is assembled per class from
    the penultimate activations extended with a bias one.
    """
    if len(data) == 0:
        raise StructuralError("need at least one data point")
    acts = model.penultimate(data.inputs)
    probs = softmax(acts @ model.weights[-1] + model.biases[-1])
    eta = probs * (1.0 - probs)  # N x M
    ext = np.concatenate([acts, np.ones((acts.shape[0], 1))], axis=1)  # N x (h+1)

    h, m = model.penultimate_dim, model.num_classes
    d = (h + 1) * m
    fisher = np.zeros((d, d))
    for cls in range(m):
        weighted = ext * eta[:, cls : cls + 1]
        block = ext.T @ weighted  # (h+1) x (h+1)
        idx = np.concatenate([np.arange(cls * h, (cls + 1) * h), [h * m + cls]])
        fisher[np.ix_(idx, idx)] = block
    return 0.5 * (fisher + fisher.T)


def posterior(
    model: MlpClassifier, data, prior_variance: float, t_theta: float = 1.0
) -> LaplacePosterior:
    """Build the last-layer Laplace posterior for a trained model.

    ``data`` may be empty-Fisher equivalent (None) to get the pure prior.
    """
    if prior_variance <= 0:
        raise StructuralError("prior_variance must be > 0")
    if t_theta < 1.0:
        raise StructuralError("t_theta must be >= 1")
    d = model.last_layer_param_count
    if data is None or len(data) == 0:
        fisher = np.zeros((d, d))
    else:
        fisher = fisher_information(model, data)
    precision = fisher + np.eye(d) / prior_variance
    cov = t_theta * spd_inverse(precision)
    return LaplacePosterior(model, model.last_layer_params(), cov, prior_variance, t_theta)


def sample_parameters(post: LaplacePosterior, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` last-layer parameter vectors from the posterior."""
    if count < 1:
        raise StructuralError("count must be >= 1")
    rng = make_rng(seed)
    eps = rng.standard_normal((count, post.dim))
    return post.theta_hat[None, :] + eps @ post.cov_factor().T


def parameter_space_pmf(
    post: LaplacePosterior, x, count: int, seed: int, keep_cloud: bool = False
) -> PmfEstimate:
    """Brute-force class PMF by sampling parameters and averaging softmax.

    For each sampled parameter vector the last-layer affine map is applied
    to the (frozen) penultimate activations and pushed through softmax.
    This is the sampling oracle the delta-method path is checked against.
    """
    if count < 1:
        raise StructuralError("count must be >= 1")
    model = post.model
    a = model.penultimate(np.asarray(x, dtype=float))
    if a.ndim != 1:
        raise StructuralError("one input at a time")
    h, m = model.penultimate_dim, model.num_classes
    lower = post.cov_factor()
    rng = make_rng(seed)

    total = np.zeros(m)
    cloud = np.empty((count, m)) if keep_cloud else None
    done = 0
    while done < count:
        n = min(_SAMPLE_CHUNK, count - done)
        theta = post.theta_hat[None, :] + rng.standard_normal((n, post.dim)) @ lower.T
        logits = np.einsum("kmh,h->km", theta[:, : h * m].reshape(n, m, h), a)
        logits += theta[:, h * m :]
        probs = softmax(logits)
        total += probs.sum(axis=0)
        if keep_cloud:
            cloud[done : done + n] = probs
        done += n
    pmf = cloud.mean(axis=0) if keep_cloud else total / count
    return PmfEstimate(pmf, "param_space", seed, count, cloud)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_posterior(post: LaplacePosterior, path) -> None:
    """Write the documented binary posterior file (model stored separately)."""
    d = post.dim
    lower = post.cov_factor()
    packed = np.concatenate([lower[i, : i + 1] for i in range(d)])
    with open(str(path), "wb") as fh:
        fh.write(POSTERIOR_MAGIC)
        fh.write(struct.pack("<I", d))
        fh.write(np.ascontiguousarray(post.theta_hat, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(packed, dtype="<f8").tobytes())
        fh.write(struct.pack("<dd", post.prior_variance, post.t_theta))


def load_posterior(path, model: MlpClassifier) -> LaplacePosterior:
    """Read a posterior file and attach it to its (already loaded) model."""
    with open(str(path), "rb") as fh:
        magic = fh.read(8)
        if magic != POSTERIOR_MAGIC:
            raise StructuralError(f"{path}: not a posterior file (magic {magic!r})")
        (d,) = struct.unpack("<I", fh.read(4))
        theta = np.frombuffer(fh.read(8 * d), dtype="<f8").copy()
        packed = np.frombuffer(fh.read(8 * d * (d + 1) // 2), dtype="<f8")
        sigma0_sq, t_theta = struct.unpack("<dd", fh.read(16))
    lower = np.zeros((d, d))
    pos = 0
    for i in range(d):
        lower[i, : i + 1] = packed[pos : pos + i + 1]
        pos += i + 1
    cov = lower @ lower.T
    return LaplacePosterior(model, theta, 0.5 * (cov + cov.T), sigma0_sq, t_theta)
