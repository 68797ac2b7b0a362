"""Shared dense linear-algebra helpers.

All positive-definite solves in the package go through a Cholesky
factorization with a fixed jitter escalation ladder; explicit matrix
inversion (``np.linalg.inv``) is deliberately absent.
"""

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import NumericalError

# Escalating diagonal jitter tried before a factorization is declared failed.
JITTER_LADDER = (0.0, 1e-12, 1e-9, 1e-6)


def chol_lower(mat: np.ndarray, ladder=JITTER_LADDER) -> np.ndarray:
    """Lower Cholesky factor of a symmetric PSD matrix, with jitter repair.

    Tries ``mat + j*I`` for each jitter ``j`` in the ladder and returns the
    first factor that succeeds. Raises NumericalError (with a condition
    estimate) if the whole ladder fails.
    """
    mat = np.asarray(mat, dtype=float)
    eye = np.eye(mat.shape[0])
    for jitter in ladder:
        try:
            return cholesky(mat + jitter * eye, lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        "Cholesky factorization failed after jitter ladder "
        f"{ladder}; condition estimate {cond_estimate(mat):.3e}"
    )


def cond_estimate(mat: np.ndarray) -> float:
    """Cheap 2-norm condition estimate from the symmetric eigenvalue range."""
    vals = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    smallest = np.min(np.abs(vals))
    if smallest == 0.0:
        return np.inf
    return float(np.max(np.abs(vals)) / smallest)


def solve_spd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``mat @ x = rhs`` for symmetric positive definite ``mat``."""
    return cho_solve((chol_lower(mat), True), rhs)


def spd_inverse(mat: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor (column solves)."""
    lower = chol_lower(mat)
    inv = cho_solve((lower, True), np.eye(mat.shape[0]))
    return 0.5 * (inv + inv.T)


def sample_mvn(
    mean: np.ndarray,
    cov: np.ndarray,
    count: int,
    rng: np.random.Generator,
    lower: np.ndarray | None = None,
) -> np.ndarray:
    """Draw ``count`` samples from N(mean, cov), shape (count, dim).

    The draw is ``mean + eps @ L.T`` with ``eps`` filled row-major from the
    generator, so identical seeds give identical samples regardless of how
    callers batch their requests.
    """
    mean = np.asarray(mean, dtype=float)
    if lower is None:
        lower = chol_lower(cov)
    eps = rng.standard_normal((count, mean.size))
    return mean[None, :] + eps @ lower.T


def project_psd(mat: np.ndarray) -> np.ndarray:
    """Nearest-PSD repair by clipping negative eigenvalues at zero."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    clipped = np.clip(vals, 0.0, None)
    return (vecs * clipped) @ vecs.T


def check_symmetric(mat: np.ndarray, tol: float = 1e-10) -> None:
    """Raise NumericalError when ``mat`` deviates from symmetry beyond tol."""
    dev = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if dev > tol:
        raise NumericalError(f"matrix not symmetric: max deviation {dev:.3e}")


def loewner_dominates(big: np.ndarray, small: np.ndarray, slack: float = 1e-10) -> bool:
    """True when big - small + slack*I admits a Cholesky factorization."""
    diff = big - small + slack * np.eye(big.shape[0])
    try:
        cholesky(0.5 * (diff + diff.T), lower=True)
        return True
    except np.linalg.LinAlgError:
        return False


def solve_lower(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Forward-substitution solve with a lower-triangular factor."""
    return solve_triangular(lower, rhs, lower=True)
