"""Small fully connected softmax classifiers trained to the MAP estimate.

Everything runs in float64 on numpy. The hidden activation is fixed to the
rectifier. Training minimizes the mean cross-entropy plus the Gaussian
prior penalty 0.5*||theta||^2 / (sigma0_sq * N), which is the per-example
scaling of the log posterior, using Adam with seeded shuffling.

Last-layer parameters are flattened in a fixed order that every downstream
covariance indexes: weight columns by output unit first, then all biases,
so ``theta = [W[:,0], ..., W[:,M-1], b[0], ..., b[M-1]]`` with
``d = (h + 1) * M`` for penultimate width h.

Checkpoint byte layout (little-endian):

    8 bytes  magic b"MLPCKPT1"
    u32      number of layer dims
    u32 * L  layer dims (input ... output)
    u8       activation name length, then ASCII name
    u64      training seed
    f64 * P  parameters, per layer: W row-major (in x out), then b
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError, TrainingError
from .seeding import make_rng

CHECKPOINT_MAGIC = b"MLPCKPT1"


def softmax(z: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis."""
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / np.sum(ez, axis=-1, keepdims=True)


class MlpClassifier:
    """Fully connected rectifier network with a softmax output head."""

    def __init__(self, layer_dims, weights=None, biases=None, activation: str = "relu"):
        if len(layer_dims) < 2:
            raise StructuralError("need at least input and output layers")
        if activation != "relu":
            raise StructuralError(f"unsupported activation {activation!r}")
        self.layer_dims = list(int(d) for d in layer_dims)
        self.activation = activation
        if weights is None:
            weights = [np.zeros((a, b)) for a, b in zip(self.layer_dims, self.layer_dims[1:])]
            biases = [np.zeros(b) for b in self.layer_dims[1:]]
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        for (a, b), w, bias in zip(
            zip(self.layer_dims, self.layer_dims[1:]), self.weights, self.biases
        ):
            if w.shape != (a, b) or bias.shape != (b,):
                raise StructuralError(
                    f"parameter shape {w.shape}/{bias.shape} inconsistent with dims ({a},{b})"
                )

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def penultimate_dim(self) -> int:
        return self.layer_dims[-2]

    @property
    def last_layer_param_count(self) -> int:
        return (self.penultimate_dim + 1) * self.num_classes

    def _check_input(self, x: np.ndarray):
        if x.shape[-1] != self.input_dim:
            raise StructuralError(
                f"input dimension {x.shape[-1]} does not match model ({self.input_dim})"
            )

    def penultimate(self, x: np.ndarray) -> np.ndarray:
        """Activations feeding the last layer (1-D or batched)."""
        x = np.asarray(x, dtype=float)
        self._check_input(x)
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ w + b, 0.0)
        return h

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Pre-softmax outputs g(x)."""
        h = self.penultimate(x)
        return h @ self.weights[-1] + self.biases[-1]

    def shifted_logits(self, x: np.ndarray) -> np.ndarray:
        """Logits translated so the maximum entry is exactly zero.

        softmax is invariant to the translation, and exponentials of the
        shifted values cannot overflow.
        """
        g = self.logits(x)
        return g - np.max(g, axis=-1, keepdims=True)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Softmax class probabilities."""
        return softmax(self.logits(x))

    def last_layer_jacobian(self, x: np.ndarray) -> np.ndarray:
        """d x M Jacobian of the logits w.r.t. flattened last-layer params.

        Column m holds d g_m / d theta: the penultimate activation vector in
        the m-th weight block, a one in the m-th bias slot, zeros elsewhere.
        """
        a = self.penultimate(np.asarray(x, dtype=float))
        if a.ndim != 1:
            raise StructuralError("jacobian is defined per single input")
        h, m = self.penultimate_dim, self.num_classes
        jac = np.zeros(((h + 1) * m, m))
        for k in range(m):
            jac[k * h : (k + 1) * h, k] = a
            jac[h * m + k, k] = 1.0
        return jac

    def last_layer_params(self) -> np.ndarray:
        """Flattened last-layer parameters in the documented order."""
        w, b = self.weights[-1], self.biases[-1]
        return np.concatenate([w.T.reshape(-1), b])

    def with_last_layer(self, theta: np.ndarray) -> "MlpClassifier":
        """Copy of the model with its last layer replaced by ``theta``."""
        h, m = self.penultimate_dim, self.num_classes
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.last_layer_param_count,):
            raise StructuralError(
                f"expected {self.last_layer_param_count} last-layer params, got {theta.shape}"
            )
        w = theta[: h * m].reshape(m, h).T.copy()
        b = theta[h * m :].copy()
        weights = [wi.copy() for wi in self.weights[:-1]] + [w]
        biases = [bi.copy() for bi in self.biases[:-1]] + [b]
        return MlpClassifier(self.layer_dims, weights, biases, self.activation)


@dataclass(frozen=True)
class TrainConfig:
    """Adam-based MAP training settings."""

    epochs: int = 3
    batch_size: int = 128
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    prior_variance: float = 1.0  # sigma0^2 of the zero-mean Gaussian prior
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise StructuralError("epochs must be >= 1")
        if self.prior_variance <= 0:
            raise StructuralError("prior_variance must be > 0")


@dataclass(frozen=True)
class TrainResult:
    model: MlpClassifier
    final_loss: float
    final_accuracy: float


def _init_params(layer_dims, rng):
    weights, biases = [], []
    for a, b in zip(layer_dims, layer_dims[1:]):
        weights.append(rng.standard_normal((a, b)) * np.sqrt(2.0 / a))
        biases.append(np.zeros(b))
    return weights, biases


def _forward_full(weights, biases, x):
    acts = [x]
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    logits = h @ weights[-1] + biases[-1]
    return acts, logits


def train_map(data, arch, cfg: TrainConfig) -> TrainResult:
    """Train an MLP to the MAP estimate of the cross-entropy posterior.

    Deterministic under ``cfg.seed`` (initialization and batch shuffling
    share the seeded stream). Raises TrainingError with the epoch/batch
    index if the loss becomes non-finite.
    """
    if len(data) == 0:
        raise StructuralError("training set is empty")
    if arch[-1] != data.num_classes:
        raise StructuralError(
            f"architecture output {arch[-1]} != dataset classes {data.num_classes}"
        )
    if arch[0] != data.dim:
        raise StructuralError(f"architecture input {arch[0]} != feature dim {data.dim}")

    rng = make_rng(cfg.seed)
    weights, biases = _init_params(arch, rng)
    params = weights + biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    n_total = len(data)
    decay = 1.0 / (cfg.prior_variance * n_total)
    step = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n_total)
        for batch_idx, start in enumerate(range(0, n_total, cfg.batch_size)):
            sel = order[start : start + cfg.batch_size]
            xb, yb = data.inputs[sel], data.labels[sel]
            acts, logits = _forward_full(weights, biases, xb)
            probs = softmax(logits)
            batch_ce = -np.mean(np.log(probs[np.arange(len(sel)), yb] + 1e-300))
            if not np.isfinite(batch_ce):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}",
                    epoch=epoch,
                    batch=batch_idx,
                )

            # backprop of mean cross-entropy
            delta = probs.copy()
            delta[np.arange(len(sel)), yb] -= 1.0
            delta /= len(sel)
            grads_w = [None] * len(weights)
            grads_b = [None] * len(biases)
            for layer in reversed(range(len(weights))):
                grads_w[layer] = acts[layer].T @ delta
                grads_b[layer] = delta.sum(axis=0)
                if layer > 0:
                    delta = (delta @ weights[layer].T) * (acts[layer] > 0)

            grads = [gw + decay * w for gw, w in zip(grads_w, weights)]
            grads += [gb + decay * b for gb, b in zip(grads_b, biases)]

            step += 1
            corr1 = 1.0 - cfg.beta1**step
            corr2 = 1.0 - cfg.beta2**step
            for p, g, v1, v2 in zip(params, grads, m1, m2):
                v1 *= cfg.beta1
                v1 += (1.0 - cfg.beta1) * g
                v2 *= cfg.beta2
                v2 += (1.0 - cfg.beta2) * g * g
                p -= cfg.step_size * (v1 / corr1) / (np.sqrt(v2 / corr2) + cfg.eps)

    model = MlpClassifier(list(arch), weights, biases)
    probs = model.predict(data.inputs)
    ce = -np.mean(np.log(probs[np.arange(n_total), data.labels] + 1e-300))
    penalty = 0.5 * decay * sum(float(np.sum(p * p)) for p in params)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == data.labels))
    return TrainResult(model=model, final_loss=float(ce + penalty), final_accuracy=accuracy)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: MlpClassifier, path, seed: int = 0) -> None:
    """Write the documented binary checkpoint for a model."""
    with open(str(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(model.layer_dims)))
        fh.write(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
        name = model.activation.encode("ascii")
        fh.write(struct.pack("<B", len(name)))
        fh.write(name)
        fh.write(struct.pack("<Q", seed & ((1 << 64) - 1)))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[MlpClassifier, int]:
    """Read a checkpoint back; returns (model, training_seed)."""
    with open(str(path), "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise StructuralError(f"{path}: not a model checkpoint (magic {magic!r})")
        (n_dims,) = struct.unpack("<I", fh.read(4))
        dims = list(struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims)))
        (name_len,) = struct.unpack("<B", fh.read(1))
        activation = fh.read(name_len).decode("ascii")
        (seed,) = struct.unpack("<Q", fh.read(8))
        weights, biases = [], []
        for a, b in zip(dims, dims[1:]):
            w = np.frombuffer(fh.read(8 * a * b), dtype="<f8").reshape(a, b)
            bias = np.frombuffer(fh.read(8 * b), dtype="<f8")
            weights.append(w.copy())
            biases.append(bias.copy())
    return MlpClassifier(dims, weights, biases, activation), seed
