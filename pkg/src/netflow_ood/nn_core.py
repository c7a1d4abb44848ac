"""Dense-network math for the fixed NetFlow classifier.

The network is a four-layer encoder (input -> 128 -> 64 -> 32 -> 2, LeakyReLU
after every layer, dropout after the first three) followed by a single linear
classifier over the 2-d embedding. Everything here is plain float64 numpy:
forward passes, parameter gradients, input gradients and Adam updates. No
autodiff framework, so gradients can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError

INPUT_DIM = 20
ENCODER_WIDTHS = (128, 64, 32, 2)
EMBED_DIM = ENCODER_WIDTHS[-1]
DEFAULT_LEAKY_SLOPE = 0.15
DEFAULT_DROPOUT_P = 0.3

# dropout sits after the activations of encoder layers 0, 1 and 2 only
_DROPOUT_LAYERS = (0, 1, 2)


@dataclass
class LayerParams:
    """One dense layer: weights (out x in) and bias (out)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ConfigurationError("layer expects 2-d weights and 1-d bias")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ConfigurationError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weights.shape[0]} output units"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ConfigurationError("layer parameters must be finite")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LayerParams":
        return LayerParams(self.weights.copy(), self.bias.copy())


@dataclass
class FnnModel:
    """Parameters of the encoder + classifier plus training-regime metadata."""

    encoder: list  # 4 LayerParams
    classifier: LayerParams
    regime: str = "multiclass"  # "binary" | "multiclass"
    cl_trained: bool = False
    seed: int = 0
    leaky_slope: float = DEFAULT_LEAKY_SLOPE
    dropout_p: float = DEFAULT_DROPOUT_P
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.encoder) != len(ENCODER_WIDTHS):
            raise ConfigurationError(f"encoder needs {len(ENCODER_WIDTHS)} layers")
        widths = [self.encoder[0].in_dim] + [l.out_dim for l in self.encoder]
        for i, layer in enumerate(self.encoder):
            if layer.in_dim != widths[i]:
                raise ConfigurationError(
                    f"encoder layer {i} expects input {widths[i]}, got {layer.in_dim}"
                )
        expected = (self.encoder[0].in_dim,) + ENCODER_WIDTHS
        if tuple(widths) != expected:
            raise ConfigurationError(f"encoder widths {widths} != {list(expected)}")
        if self.classifier.in_dim != EMBED_DIM:
            raise ConfigurationError("classifier must consume the 2-d embedding")
        if self.n_classes < 2:
            raise ConfigurationError("need at least 2 output classes")
        if self.regime not in ("binary", "multiclass"):
            raise ConfigurationError(f"unknown regime {self.regime!r}")

    @property
    def input_dim(self) -> int:
        return self.encoder[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.classifier.out_dim

    def layers(self) -> list:
        return list(self.encoder) + [self.classifier]

    def copy(self) -> "FnnModel":
        return FnnModel(
            encoder=[l.copy() for l in self.encoder],
            classifier=self.classifier.copy(),
            regime=self.regime,
            cl_trained=self.cl_trained,
            seed=self.seed,
            leaky_slope=self.leaky_slope,
            dropout_p=self.dropout_p,
            class_names=list(self.class_names),
        )


@dataclass
class ForwardTrace:
    """Everything the backward pass needs from one forward evaluation."""

    x: np.ndarray                 # (n, d) input batch
    pre_activations: list         # per encoder layer, (n, width)
    activations: list             # post LeakyReLU and dropout, (n, width)
    dropout_masks: list           # scaled masks (0 or 1/(1-p)); all-ones when deterministic
    embedding: np.ndarray         # (n, 2)
    logits: np.ndarray            # (n, |C|)


def init_model(
    n_classes: int,
    regime: str = "multiclass",
    seed: int = 0,
    input_dim: int = INPUT_DIM,
    leaky_slope: float = DEFAULT_LEAKY_SLOPE,
    dropout_p: float = DEFAULT_DROPOUT_P,
    class_names: Optional[list] = None,
) -> FnnModel:
    """Kaiming-uniform init scaled for the leaky slope, zero biases, seeded."""
    rng = np.random.default_rng(seed)
    widths = [input_dim] + list(ENCODER_WIDTHS) + [n_classes]
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / ((1.0 + leaky_slope**2) * fan_in))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(LayerParams(w, np.zeros(fan_out)))
    return FnnModel(
        encoder=layers[:-1],
        classifier=layers[-1],
        regime=regime,
        seed=seed,
        leaky_slope=leaky_slope,
        dropout_p=dropout_p,
        class_names=list(class_names) if class_names is not None else [],
    )


def _as_batch(x: np.ndarray, input_dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise ConfigurationError(
            f"input must have {input_dim} features, got shape {x.shape}"
        )
    return x


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z >= 0.0, z, slope * z)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z >= 0.0, 1.0, slope)


def forward(
    model: FnnModel,
    x: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    dropout_p: Optional[float] = None,
) -> ForwardTrace:
    """Run the network over a batch (or a single vector).

    Deterministic when ``rng`` is None; otherwise dropout is applied after the
    first three encoder layers with inverted scaling, so the expectation
    matches the deterministic activations. ``dropout_p`` overrides the model's
    probability (Monte-Carlo scoring uses a larger one).
    """
    x = _as_batch(x, model.input_dim)
    p = model.dropout_p if dropout_p is None else dropout_p
    pre, acts, masks = [], [], []
    a = x
    for i, layer in enumerate(model.encoder):
        z = a @ layer.weights.T + layer.bias
        h = _leaky(z, model.leaky_slope)
        if rng is not None and i in _DROPOUT_LAYERS and p > 0.0:
            keep = 1.0 - p
            mask = (rng.random(h.shape) < keep) / keep
        else:
            mask = np.ones_like(h)
        h = h * mask
        pre.append(z)
        acts.append(h)
        masks.append(mask)
        a = h
    embedding = a
    logits = embedding @ model.classifier.weights.T + model.classifier.bias
    return ForwardTrace(x, pre, acts, masks, embedding, logits)


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax, computed with max subtraction."""
    if temperature <= 0.0:
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Gradients:
    """Per-layer parameter gradients, shaped like the model."""

    encoder: list      # list of (dW, db)
    classifier: tuple  # (dW, db)

    def pairs(self):
        return list(self.encoder) + [self.classifier]


def _backprop_from_embedding(
    model: FnnModel, trace: ForwardTrace, d_embed: np.ndarray
) -> tuple:
    """Push a gradient at the embedding back through the encoder.

    Returns ([(dW, db) per encoder layer], d_input).
    """
    grads = [None] * len(model.encoder)
    da = d_embed
    for i in range(len(model.encoder) - 1, -1, -1):
        layer = model.encoder[i]
        dz = da * trace.dropout_masks[i] * _leaky_grad(trace.pre_activations[i], model.leaky_slope)
        below = trace.x if i == 0 else trace.activations[i - 1]
        grads[i] = (dz.T @ below, dz.sum(axis=0))
        da = dz @ layer.weights
    return grads, da


def param_gradients(
    model: FnnModel,
    x: np.ndarray,
    labels: np.ndarray,
    centers: Optional[np.ndarray] = None,
    cl_mask: Optional[np.ndarray] = None,
    cl_weight: float = 0.0,
    trace: Optional[ForwardTrace] = None,
) -> tuple:
    """Mean-over-batch gradients of cross-entropy (+ optional center pull).

    The objective is mean_i [ CE_i + cl_weight * 0.5*mask_i*||e_i - c_{y_i}||^2 ].
    ``trace`` lets the trainer reuse a stochastic forward pass; by default a
    deterministic forward is used.

    Returns (Gradients, loss dict with 'ce' and 'cl' components).
    """
    x = _as_batch(x, model.input_dim)
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0:
        raise ConfigurationError("batch must be non-empty")
    if labels.min() < 0 or labels.max() >= model.n_classes:
        raise ConfigurationError("labels out of range for the classifier")
    if trace is None:
        trace = forward(model, x)
    n = x.shape[0]

    probs = softmax(trace.logits)
    # clip only inside the log; the gradient uses the exact (p - onehot) form
    ce = -np.mean(np.log(np.maximum(probs[np.arange(n), labels], 1e-300)))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    cw = model.classifier
    dWc = dlogits.T @ trace.embedding
    dbc = dlogits.sum(axis=0)
    d_embed = dlogits @ cw.weights

    cl = 0.0
    if cl_weight != 0.0 and centers is not None:
        mask = np.ones(n, dtype=bool) if cl_mask is None else np.asarray(cl_mask, dtype=bool)
        diff = (trace.embedding - centers[labels]) * mask[:, None]
        cl = 0.5 * float(np.sum(diff * diff))
        d_embed = d_embed + (cl_weight / n) * diff

    enc_grads, _ = _backprop_from_embedding(model, trace, d_embed)
    return Gradients(enc_grads, (dWc, dbc)), {"ce": float(ce), "cl": float(cl)}


def input_gradient_confidence(
    model: FnnModel, x: np.ndarray, temperature: float
) -> np.ndarray:
    """Gradient of the max temperature-scaled softmax w.r.t. the raw input.

    Deterministic forward only. Returns an array shaped like the input batch.
    """
    x = _as_batch(x, model.input_dim)
    trace = forward(model, x)
    probs = softmax(trace.logits, temperature)
    top = probs.argmax(axis=1)
    n = x.shape[0]
    # d p_top / d z_k = p_top * (delta - p_k) / T
    p_top = probs[np.arange(n), top]
    dlogits = -probs * p_top[:, None]
    dlogits[np.arange(n), top] += p_top
    dlogits /= temperature
    d_embed = dlogits @ model.classifier.weights
    _, dx = _backprop_from_embedding(model, trace, d_embed)
    return dx


def input_gradient_class_distance(
    model: FnnModel,
    x: np.ndarray,
    means: np.ndarray,
    precision: np.ndarray,
) -> np.ndarray:
    """Gradient of min_j (e-mu_j)^T P (e-mu_j) w.r.t. the raw input."""
    x = _as_batch(x, model.input_dim)
    trace = forward(model, x)
    diffs = trace.embedding[:, None, :] - means[None, :, :]      # (n, C, 2)
    d2 = np.einsum("nci,ij,ncj->nc", diffs, precision, diffs)
    nearest = d2.argmin(axis=1)
    d_embed = 2.0 * diffs[np.arange(x.shape[0]), nearest] @ precision.T
    _, dx = _backprop_from_embedding(model, trace, d_embed)
    return dx


@dataclass
class AdamState:
    """First/second-moment accumulators for one set of parameter tensors."""

    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_tensors(cls, tensors, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(
            m=[np.zeros_like(t) for t in tensors],
            v=[np.zeros_like(t) for t in tensors],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(state: AdamState, tensors: list, grads: list, lr: float) -> None:
    """Bias-corrected Adam update, applied to the tensors in place."""
    if lr <= 0.0:
        raise ConfigurationError(f"learning rate must be > 0, got {lr}")
    if len(tensors) != len(state.m) or len(tensors) != len(grads):
        raise ConfigurationError("adam state does not match the parameter list")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(tensors, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def model_tensors(model: FnnModel) -> list:
    """The mutable parameter tensors of a model, in a fixed order."""
    out = []
    for layer in model.layers():
        out.append(layer.weights)
        out.append(layer.bias)
    return out


def gradient_tensors(grads: Gradients) -> list:
    out = []
    for dw, db in grads.pairs():
        out.append(dw)
        out.append(db)
    return out
