"""Uncertainty-aware softmax classification and prediction fusion.

The pipeline: train small MLP classifiers to the MAP estimate, build a
last-layer Laplace posterior for each, propagate it to a Gaussian over
(shifted) logits with the delta method, stack those Gaussians over
classifiers and input sequences, and turn the result into class
probabilities either by information-form fusion or by correlated
multimodal sampling. A metric suite validates calibration and
out-of-distribution detection.
"""

from .aggregate import AggregatedState, aggregate, recover, state_from_blocks, within_classifier_block
from .calibrate import fit_covariance_scale
from .data import (
    InputSequence,
    LabeledSet,
    Provenance,
    build_sequence,
    corrupt_element,
    load_idx,
    make_blobs,
    make_glyphs,
    save_idx,
)
from .delta import LogitGaussian, logit_gaussian, logit_gaussians_batch
from .errors import (
    CapacityError,
    ConfigError,
    DataError,
    IdxFormatError,
    LapfuseError,
    NumericalError,
    StructuralError,
    TrainingError,
)
from .estimates import PmfEstimate
from .fusion import (
    FusedGaussian,
    ella_pmf,
    fuse_information,
    inverse_trace_weights,
    log_linear_pool,
    mc_pmf,
    product_fusion,
    uniform_weights,
)
from .laplace import (
    LaplacePosterior,
    fisher_information,
    load_posterior,
    parameter_space_pmf,
    posterior,
    sample_parameters,
    save_posterior,
)
from .metrics import (
    DetectionReport,
    EvalReport,
    apply_temperature,
    calibration,
    detection,
    entropy,
    entropy_rows,
    evaluate_predictions,
    fit_temperature,
    scores,
)
from .network import (
    MlpClassifier,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    softmax,
    train_map,
)
from .seeding import derive_seed, make_rng

__version__ = "0.1.0"
