"""White-box attacks against the category classifier.

The classifier's winner-take-all read is piecewise constant, so attacks
target a differentiable stand-in: choice values pushed through a tempered
softmax and summed per class. The loss is the negative log of the true
class's probability mass, and its input gradient has a closed form built
from the componentwise-min masks, no finite differences involved.

Gradients flow to the raw feature space: the coded vector is [x, 1 - x],
so a feature's gradient is the coded gradient of its direct half minus the
coded gradient of its complement half. At a tie I_i == w_i the min is
treated as passing the input side through (subgradient 1).

A transfer baseline trains a small MLP on the same stream and runs the
same iterated attack against its cross-entropy loss.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset, FuzzyArtmapModel, UntrainedModelError, fuzzy_and_sums
from .seeds import derive_seed, sample_rng

__all__ = [
    "AttackConfig",
    "MlpSurrogate",
    "SurrogateConfig",
    "class_probabilities_from_choice",
    "fgsm",
    "fgsm_batch",
    "pgd_transfer",
    "pgd_transfer_batch",
    "pgd_wb_softmax",
    "pgd_wb_softmax_batch",
    "surrogate_train",
    "wb_softmax_grad",
    "wb_softmax_loss",
]

_ZERO_COVERAGE_FLOOR = 1e-12

# bound on the (batch, categories, 2d) mask intermediate, in elements
_GRAD_CHUNK_ELEMS = 1 << 21


@dataclass(frozen=True)
class AttackConfig:
    """Budget and schedule for one attack run.

    epsilon: max-norm budget in [0, 1]; 0 is the identity attack
    steps: iteration count for the iterated attack
    step_size: per-step magnitude; None means epsilon / 4
    temperature: softmax temperature for the white-box loss
    seed: base seed; per-sample noise is keyed by (seed, sample index)
    """

    epsilon: float
    steps: int = 20
    step_size: float | None = None
    temperature: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_size is not None:
            if self.step_size < 0 or self.step_size > self.epsilon:
                raise ValueError(
                    f"step_size must be in [0, epsilon], got {self.step_size}"
                )
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @property
    def resolved_step_size(self) -> float:
        return self.epsilon / 4.0 if self.step_size is None else self.step_size


def class_probabilities_from_choice(choice_values: np.ndarray,
                                    class_map: np.ndarray,
                                    num_classes: int,
                                    temperature: float) -> np.ndarray:
    """Tempered softmax over choice values, summed per mapped class.

    Max-shifted before exponentiation so tiny temperatures stay finite.
    Rows of the result sum to 1.
    """
    t = np.atleast_2d(np.asarray(choice_values, dtype=np.float64))
    z = (t - t.max(axis=1, keepdims=True)) / temperature
    q = np.exp(z)
    q /= q.sum(axis=1, keepdims=True)
    onehot = (np.asarray(class_map)[:, None] ==
              np.arange(num_classes)[None, :]).astype(np.float64)
    probs = q @ onehot
    if np.asarray(choice_values).ndim == 1:
        return probs[0]
    return probs


def _forward_batch(model: FuzzyArtmapModel, features: np.ndarray,
                   labels: np.ndarray, temperature: float,
                   want_grad: bool = True):
    """Loss, class probabilities, input gradient, and zero-coverage flags.

    features is (B, d) in raw space; the gradient is (B, d). When no
    category maps to a row's label the smoothed loss -log(p + 1e-12) is
    reported, the row is flagged, and its gradient is exactly zero.
    """
    if model.num_categories == 0:
        raise UntrainedModelError("cannot attack a model with no categories")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    b, d = features.shape
    weights = model.weights
    wsums = model.weight_sums
    class_map = model.class_map
    coded = np.concatenate([features, 1.0 - features], axis=1)

    s = fuzzy_and_sums(weights, coded)
    t = s / (model.alpha + wsums)[None, :]
    z = (t - t.max(axis=1, keepdims=True)) / temperature
    q = np.exp(z)
    q /= q.sum(axis=1, keepdims=True)

    is_label = class_map[None, :] == labels[:, None]
    p_label = np.where(is_label, q, 0.0).sum(axis=1)
    flagged = p_label == 0.0
    loss = -np.log(np.where(flagged, _ZERO_COVERAGE_FLOOR, p_label))
    if not want_grad:
        return loss, p_label, None, flagged

    # dL/dT_k = (q_k / tau) * (p_y - [class k == y]) / p_y, and 0 when the
    # label has no categories (both numerator terms vanish)
    denom = np.where(flagged, 1.0, p_label)
    dl_dt = (q / temperature) * (p_label[:, None] - is_label) / denom[:, None]
    a = dl_dt / (model.alpha + wsums)[None, :]

    grad_coded = np.zeros((b, 2 * d), dtype=np.float64)
    n = weights.shape[0]
    chunk = max(1, _GRAD_CHUNK_ELEMS // max(1, b * 2 * d))
    for start in range(0, n, chunk):
        block = weights[start:start + chunk]
        mask = coded[:, None, :] <= block[None, :, :]
        grad_coded += np.einsum("bk,bki->bi", a[:, start:start + chunk],
                                mask.astype(np.float64))
    grad = grad_coded[:, :d] - grad_coded[:, d:]
    return loss, p_label, grad, flagged


def wb_softmax_loss(model: FuzzyArtmapModel, x, y: int,
                    temperature: float = 0.01) -> float:
    """Smoothed negative log-probability of the true class."""
    x = np.asarray(x, dtype=np.float64)
    loss, _, _, flagged = _forward_batch(model, x[None, :],
                                         np.array([y]), temperature,
                                         want_grad=False)
    if flagged[0]:
        warnings.warn(f"no category maps to label {y}; loss floored",
                      RuntimeWarning, stacklevel=2)
    return float(loss[0])


def wb_softmax_grad(model: FuzzyArtmapModel, x, y: int,
                    temperature: float = 0.01) -> np.ndarray:
    """Analytic input gradient of the white-box loss, shape (d,)."""
    x = np.asarray(x, dtype=np.float64)
    _, _, grad, _ = _forward_batch(model, x[None, :], np.array([y]),
                                   temperature)
    return grad[0]


def fgsm_batch(model: FuzzyArtmapModel, features: np.ndarray,
               labels: np.ndarray, epsilon: float,
               temperature: float = 0.01) -> np.ndarray:
    """One full-budget signed-gradient step from the clean inputs."""
    features = np.asarray(features, dtype=np.float64)
    if epsilon == 0.0:
        return features.copy()
    _, _, grad, _ = _forward_batch(model, features,
                                   np.asarray(labels, dtype=np.int64),
                                   temperature)
    return np.clip(features + epsilon * np.sign(grad), 0.0, 1.0)


def fgsm(model: FuzzyArtmapModel, x, y: int, epsilon: float,
         temperature: float = 0.01) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return fgsm_batch(model, x[None, :], np.array([y]), epsilon,
                      temperature)[0]


def _random_starts(features: np.ndarray, epsilon: float, seed: int,
                   sample_indices) -> np.ndarray:
    out = np.empty_like(features)
    d = features.shape[1]
    for row, idx in enumerate(sample_indices):
        rng = sample_rng(seed, int(idx))
        out[row] = rng.uniform(-epsilon, epsilon, d)
    return out


def _pgd_loop(grad_fn, features: np.ndarray, config: AttackConfig,
              sample_indices, random_start: bool) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    eps = config.epsilon
    if eps == 0.0:
        return features.copy()
    eta = config.resolved_step_size
    lo = np.maximum(features - eps, 0.0)
    hi = np.minimum(features + eps, 1.0)
    if random_start:
        adv = features + _random_starts(features, eps, config.seed,
                                        sample_indices)
        adv = np.clip(adv, lo, hi)
    else:
        adv = features.copy()
    for _ in range(config.steps):
        grad = grad_fn(adv)
        adv = adv + eta * np.sign(grad)
        adv = np.clip(adv, lo, hi)
    return adv


def pgd_wb_softmax_batch(model: FuzzyArtmapModel, features: np.ndarray,
                         labels: np.ndarray, config: AttackConfig,
                         sample_indices=None,
                         random_start: bool = True) -> np.ndarray:
    """Iterated signed-gradient attack on the white-box loss.

    Starts from a per-sample uniform draw inside the budget (keyed by
    (config.seed, sample index)), then takes config.steps signed steps,
    projecting onto the budget ball and the unit cube after each one.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if sample_indices is None:
        sample_indices = np.arange(len(labels))

    def grad_fn(adv):
        _, _, grad, _ = _forward_batch(model, adv, labels,
                                       config.temperature)
        return grad

    return _pgd_loop(grad_fn, features, config, sample_indices, random_start)


def pgd_wb_softmax(model: FuzzyArtmapModel, x, y: int, config: AttackConfig,
                   sample_index: int = 0,
                   random_start: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return pgd_wb_softmax_batch(model, x[None, :], np.array([y]), config,
                                [sample_index], random_start)[0]


@dataclass(frozen=True)
class SurrogateConfig:
    """Training recipe for the transfer-attack stand-in."""

    hidden: int = 64
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class MlpSurrogate:
    """One-hidden-layer ReLU network trained with softmax cross-entropy.

    Deliberately small: it only needs to produce transferable gradients,
    not state-of-the-art accuracy.
    """

    def __init__(self, w1, b1, w2, b2, config: SurrogateConfig):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.config = config
        self.train_accuracy: float | None = None

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]

    def logits(self, features: np.ndarray) -> np.ndarray:
        h = np.maximum(features @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)

    def loss_and_input_grad(self, features: np.ndarray,
                            labels: np.ndarray):
        """Per-sample cross-entropy and its gradient in input space."""
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        pre = features @ self.w1 + self.b1
        h = np.maximum(pre, 0.0)
        logits = h @ self.w2 + self.b2
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        rows = np.arange(len(labels))
        loss = -np.log(np.maximum(p[rows, labels], 1e-300))
        delta = p.copy()
        delta[rows, labels] -= 1.0
        grad_h = (delta @ self.w2.T) * (pre > 0.0)
        return loss, grad_h @ self.w1.T


def surrogate_train(dataset: Dataset, config: SurrogateConfig) -> MlpSurrogate:
    """Fit the stand-in network on the given stream with plain SGD.

    Fully deterministic under config.seed; a zero learning rate leaves
    the seeded initialization untouched.
    """
    x = dataset.features
    y = dataset.labels
    n, d = x.shape
    c = dataset.num_classes
    if n == 0 or c == 0:
        raise ValueError("surrogate training needs a non-empty dataset")
    rng = np.random.default_rng(derive_seed(config.seed, "surrogate-init"))
    w1 = rng.normal(0.0, np.sqrt(2.0 / d), size=(d, config.hidden))
    b1 = np.zeros(config.hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / config.hidden), size=(config.hidden, c))
    b2 = np.zeros(c)
    net = MlpSurrogate(w1, b1, w2, b2, config)

    lr = config.learning_rate
    onehot = np.eye(c)[y]
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb, tb = x[idx], onehot[idx]
            pre = xb @ net.w1 + net.b1
            h = np.maximum(pre, 0.0)
            logits = h @ net.w2 + net.b2
            z = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            delta = (p - tb) / len(idx)
            grad_w2 = h.T @ delta
            grad_b2 = delta.sum(axis=0)
            grad_h = (delta @ net.w2.T) * (pre > 0.0)
            grad_w1 = xb.T @ grad_h
            grad_b1 = grad_h.sum(axis=0)
            net.w2 -= lr * grad_w2
            net.b2 -= lr * grad_b2
            net.w1 -= lr * grad_w1
            net.b1 -= lr * grad_b1
    net.train_accuracy = float(np.mean(net.predict(x) == y))
    return net


def pgd_transfer_batch(surrogate: MlpSurrogate, features: np.ndarray,
                       labels: np.ndarray, config: AttackConfig,
                       sample_indices=None,
                       random_start: bool = True) -> np.ndarray:
    """Iterated attack on the surrogate's cross-entropy loss.

    Generation never consults the category model; callers evaluate the
    returned points against whatever target they like.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if sample_indices is None:
        sample_indices = np.arange(len(labels))

    def grad_fn(adv):
        _, grad = surrogate.loss_and_input_grad(adv, labels)
        return grad

    return _pgd_loop(grad_fn, features, config, sample_indices, random_start)


def pgd_transfer(surrogate: MlpSurrogate, x, y: int, config: AttackConfig,
                 sample_index: int = 0,
                 random_start: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return pgd_transfer_batch(surrogate, x[None, :], np.array([y]), config,
                              [sample_index], random_start)[0]


def attack_with_config(model: FuzzyArtmapModel, features, labels,
                       config: AttackConfig, sample_indices=None,
                       random_start: bool = True) -> np.ndarray:
    """White-box iterated attack, or the identity when epsilon is 0."""
    features = np.asarray(features, dtype=np.float64)
    if config.epsilon == 0.0:
        return features.copy()
    return pgd_wb_softmax_batch(model, features, labels, config,
                                sample_indices, random_start)


def per_epsilon_config(base: AttackConfig, epsilon: float) -> AttackConfig:
    """Clone a config at a new budget, rescaling a default step size."""
    if base.step_size is not None and base.step_size > epsilon:
        raise ValueError(
            f"explicit step_size {base.step_size} exceeds epsilon {epsilon}"
        )
    return replace(base, epsilon=epsilon)
