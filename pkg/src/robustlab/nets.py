"""Fully-connected networks: encoder, latent classifier, critic, and the
plain baseline classifier, plus the standard-Gaussian latent prior.

At inference only the encoder and the latent classifier participate; the
critic scores latent codes during training and is never consulted by
``predict``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ShapeError, UsageError

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input, hidden..., output) and the hidden activation.

    The output layer is always linear.
    """

    widths: tuple[int, ...]
    hidden_activation: str = "relu"
    leaky_slope: float = 0.2

    def __post_init__(self):
        if len(self.widths) < 3:
            raise UsageError(f"an MLP needs at least one hidden layer, got widths {self.widths}")
        if any(int(w) < 1 for w in self.widths):
            raise UsageError(f"all widths must be >= 1, got {self.widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise UsageError(f"unknown hidden activation {self.hidden_activation!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]


class Mlp:
    """Weights and biases for one MlpSpec, with tape-aware forward."""

    def __init__(self, spec: MlpSpec, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.spec = spec
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "Mlp":
        # Glorot-uniform weights, zero biases
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    def params(self) -> list[np.ndarray]:
        """Flat parameter list in canonical order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, flat: list[np.ndarray]) -> None:
        if len(flat) != 2 * len(self.weights):
            raise ShapeError("parameter group size mismatch")
        for i in range(len(self.weights)):
            w, b = flat[2 * i], flat[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError("parameter shape mismatch")
            self.weights[i] = w
            self.biases[i] = b

    def bind(self, tape: T.Tape) -> list[T.Tensor]:
        """Parameter leaves on ``tape``, in canonical order, for training."""
        return [T.leaf(p, tape, requires_grad=True) for p in self.params()]

    def forward(self, x: T.Tensor, bound: list[T.Tensor] | None = None) -> T.Tensor:
        """Forward pass; with ``bound`` the parameters are differentiable leaves,
        otherwise they enter as constants (attack/inference path)."""
        if x.data.ndim != 2 or x.data.shape[1] != self.spec.in_width:
            raise ShapeError(f"expected input of width {self.spec.in_width}, got shape {x.data.shape}")
        n_layers = len(self.weights)
        h = x
        for i in range(n_layers):
            if bound is None:
                w, b = T.constant(self.weights[i]), T.constant(self.biases[i])
            else:
                w, b = bound[2 * i], bound[2 * i + 1]
            h = T.add_bias(T.matmul(h, w), b)
            if i < n_layers - 1:
                if self.spec.hidden_activation == "relu":
                    h = T.relu(h)
                else:
                    h = T.leaky_relu(h, self.spec.leaky_slope)
        return h

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Graph-free forward on plain arrays."""
        return self.forward(T.constant(x)).data


@dataclass
class PriorSpec:
    """Standard Gaussian over the latent space, with its own RNG stream."""

    dim: int
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        if int(self.dim) < 1:
            raise UsageError(f"prior dimension must be >= 1, got {self.dim}")


def sample_prior(prior: PriorSpec, n: int) -> np.ndarray:
    """n i.i.d. standard-normal latent codes, shape (n, k)."""
    if n < 1:
        raise UsageError(f"sample count must be >= 1, got {n}")
    return prior.rng.standard_normal((n, prior.dim))


class Pipeline:
    """Encoder + latent classifier + critic with compatible widths.

    An ill-formed combination cannot be constructed: width compatibility is
    checked here once and all forward paths can then rely on it.
    """

    kind = "pipeline"

    def __init__(self, encoder: Mlp, classifier: Mlp, discriminator: Mlp, prior: PriorSpec | None = None):
        k = encoder.spec.out_width
        if classifier.spec.in_width != k:
            raise ShapeError(
                f"classifier input width {classifier.spec.in_width} != latent dim {k}")
        if discriminator.spec.in_width != k:
            raise ShapeError(
                f"discriminator input width {discriminator.spec.in_width} != latent dim {k}")
        if discriminator.spec.out_width != 1:
            raise ShapeError(
                f"discriminator must output one score, got width {discriminator.spec.out_width}")
        self.encoder = encoder
        self.classifier = classifier
        self.discriminator = discriminator
        self.latent_dim = k
        self.n_classes = classifier.spec.out_width
        self.input_dim = encoder.spec.in_width
        self.prior = prior if prior is not None else PriorSpec(k)

    # -- inference path (arrays in, arrays out) ---------------------------
    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.encoder.apply(x)

    def classify(self, z: np.ndarray) -> np.ndarray:
        return self.classifier.apply(z)

    def discriminate(self, z: np.ndarray) -> np.ndarray:
        return self.discriminator.apply(z)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.classify(self.encode(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """argmax over classifier logits; ties go to the lowest class index.
        The critic plays no part here."""
        return np.argmax(self.logits(x), axis=1)

    # -- differentiable path ----------------------------------------------
    def logits_graph(self, x: T.Tensor, enc_bound=None, cla_bound=None) -> T.Tensor:
        return self.classifier.forward(self.encoder.forward(x, enc_bound), cla_bound)

    def param_groups(self) -> dict[str, Mlp]:
        return {"encoder": self.encoder, "classifier": self.classifier, "discriminator": self.discriminator}


class PlainClassifier:
    """Undefended baseline: a single MLP straight from pixels to logits."""

    kind = "plain"

    def __init__(self, net: Mlp):
        self.net = net
        self.n_classes = net.spec.out_width
        self.input_dim = net.spec.in_width

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.net.apply(x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def logits_graph(self, x: T.Tensor, bound=None) -> T.Tensor:
        return self.net.forward(x, bound)

    def param_groups(self) -> dict[str, Mlp]:
        return {"net": self.net}


# Desk-scale default architectures. The encoder narrows 784 -> latent_dim,
# the critic uses leaky activations as is customary for clipped critics.
def default_pipeline_specs(input_dim: int = 784, latent_dim: int = 4, n_classes: int = 10,
                           enc_hidden: tuple[int, ...] = (256, 64),
                           cla_hidden: tuple[int, ...] = (64,),
                           disc_hidden: tuple[int, ...] = (64, 64)) -> tuple[MlpSpec, MlpSpec, MlpSpec]:
    enc = MlpSpec((input_dim, *enc_hidden, latent_dim), "relu")
    cla = MlpSpec((latent_dim, *cla_hidden, n_classes), "relu")
    disc = MlpSpec((latent_dim, *disc_hidden, 1), "leaky_relu")
    return enc, cla, disc


def build_pipeline(rng: np.random.Generator, input_dim: int = 784, latent_dim: int = 4, n_classes: int = 10,
                   enc_hidden: tuple[int, ...] = (256, 64), cla_hidden: tuple[int, ...] = (64,),
                   disc_hidden: tuple[int, ...] = (64, 64)) -> Pipeline:
    enc, cla, disc = default_pipeline_specs(input_dim, latent_dim, n_classes, enc_hidden, cla_hidden, disc_hidden)
    return Pipeline(Mlp.init(enc, rng), Mlp.init(cla, rng), Mlp.init(disc, rng))


def build_plain(rng: np.random.Generator, input_dim: int = 784, n_classes: int = 10,
                hidden: tuple[int, ...] = (256, 64)) -> PlainClassifier:
    return PlainClassifier(Mlp.init(MlpSpec((input_dim, *hidden, n_classes), "relu"), rng))
