"""Shared result container for Monte Carlo class-probability estimates."""

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True)
class PmfEstimate:
    """A class-probability vector plus the sample cloud that produced it.

    ``pmf`` is the average of per-sample softmax vectors; when the cloud is
    retained, ``pmf`` is exactly its column mean.
    """

    pmf: np.ndarray
    method: str
    seed: int
    num_samples: int
    sample_cloud: np.ndarray | None = None

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 1:
            raise StructuralError(f"pmf must be a vector, got shape {pmf.shape}")
        if np.any(pmf < 0) or abs(float(pmf.sum()) - 1.0) > 1e-10:
            raise StructuralError("pmf entries must be >= 0 and sum to 1")
        object.__setattr__(self, "pmf", pmf)
        if self.sample_cloud is not None:
            cloud = np.asarray(self.sample_cloud, dtype=float)
            if cloud.shape != (self.num_samples, pmf.size):
                raise StructuralError(
                    f"sample cloud shape {cloud.shape} != ({self.num_samples}, {pmf.size})"
                )
            object.__setattr__(self, "sample_cloud", cloud)

    @property
    def num_classes(self) -> int:
        return self.pmf.size
