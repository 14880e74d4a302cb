"""Streaming fuzzy ARTMAP classifier core.

Implements complement coding, category choice and match, the vigilance
search with match tracking, and fast-learning weight updates. A model keeps
an ordered list of categories, each a weight vector in complement-coded
space bound to one class label for life. Training is strictly sequential
and order dependent. Prediction never mutates state, so reads may run
concurrently against a model while no writer is active.

All category arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArtmapParams",
    "Category",
    "Dataset",
    "FuzzyArtmapModel",
    "Prediction",
    "Sample",
    "TrainEvent",
    "UntrainedModelError",
    "choice",
    "clean_accuracy",
    "complement_code",
    "fuzzy_and_sums",
    "match",
]

_INITIAL_CAPACITY = 64

# chunk bound for broadcast intermediates, in elements (~128 MB of float64)
_CHUNK_ELEMS = 1 << 24


class UntrainedModelError(ValueError):
    """Prediction was requested from a model with no categories."""


def _first_out_of_range(x: np.ndarray) -> tuple | None:
    bad = ~np.isfinite(x) | (x < 0.0) | (x > 1.0)
    if not bad.any():
        return None
    flat = int(np.flatnonzero(bad.ravel())[0])
    return np.unravel_index(flat, x.shape)


def _check_unit_features(x: np.ndarray, what: str = "feature") -> None:
    pos = _first_out_of_range(x)
    if pos is not None:
        idx = pos[0] if len(pos) == 1 else pos
        raise ValueError(
            f"{what} component {idx} = {x[pos]!r} is outside [0, 1]"
        )


def complement_code(x) -> np.ndarray:
    """Map features in [0, 1]^d to [x, 1 - x] in [0, 1]^(2d).

    Accepts a single vector or a batch (last axis is the feature axis).
    The coded vector always sums to d along the last axis, which pins the
    match denominator. Components outside [0, 1] raise ValueError naming
    the offending index.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_unit_features(x)
    return np.concatenate([x, 1.0 - x], axis=-1)


def fuzzy_and_sums(weights: np.ndarray, coded: np.ndarray,
                   chunk_elems: int = _CHUNK_ELEMS) -> np.ndarray:
    """Componentwise-min mass |I ^ w| for each (input, category) pair.

    weights is (n, 2d), coded is (2d,) or (B, 2d); returns (B, n).
    Chunked over categories so the broadcast intermediate stays bounded.
    """
    coded2 = np.atleast_2d(np.asarray(coded, dtype=np.float64))
    n, m = weights.shape
    b = coded2.shape[0]
    out = np.empty((b, n), dtype=np.float64)
    step = max(1, chunk_elems // max(1, b * m))
    for s in range(0, n, step):
        block = weights[s:s + step]
        out[:, s:s + step] = np.minimum(coded2[:, None, :], block[None, :, :]).sum(axis=2)
    return out


def _weight_of(category_or_weight) -> np.ndarray:
    w = getattr(category_or_weight, "weight", category_or_weight)
    return np.asarray(w, dtype=np.float64)


def choice(coded: np.ndarray, category_or_weight, alpha: float) -> float:
    """Choice value T = |I ^ w| / (alpha + |w|)."""
    w = _weight_of(category_or_weight)
    return float(np.minimum(coded, w).sum() / (alpha + w.sum()))


def match(coded: np.ndarray, category_or_weight) -> float:
    """Match value M = |I ^ w| / |I|."""
    w = _weight_of(category_or_weight)
    return float(np.minimum(coded, w).sum() / coded.sum())


@dataclass(frozen=True)
class Sample:
    """One labeled observation with features in [0, 1]^d."""

    features: np.ndarray
    label: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 1:
            raise ValueError("sample features must be one-dimensional")
        _check_unit_features(f)
        if int(self.label) < 0:
            raise ValueError(f"label must be a non-negative integer, got {self.label}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "label", int(self.label))


class Dataset:
    """Labeled feature matrix with every row in the unit cube.

    Iteration order is the storage order; streaming code presents rows
    exactly in this order.
    """

    def __init__(self, features, labels, num_classes: int | None = None):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D array (rows, dims)")
        if labels.ndim != 1 or len(labels) != len(features):
            raise ValueError("labels must be 1-D and aligned with features")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            as_int = labels.astype(np.int64)
            if not np.array_equal(as_int, labels):
                raise ValueError("labels must be integers")
            labels = as_int
        labels = labels.astype(np.int64)
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        _check_unit_features(features)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
        elif labels.size and labels.max() >= num_classes:
            raise ValueError(
                f"label {int(labels.max())} exceeds num_classes={num_classes}"
            )
        self.features = features
        self.labels = labels
        self.num_classes = int(num_classes)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i].copy(), int(self.labels[i]))

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices],
                       num_classes=self.num_classes)

    def iter_samples(self):
        for i in range(len(self)):
            yield self.sample(i)


@dataclass(frozen=True)
class Category:
    """Read-only snapshot of one committed category."""

    id: int
    weight: np.ndarray
    mapped_class: int
    created_step: int

    @property
    def box_lower(self) -> np.ndarray:
        d = self.weight.shape[0] // 2
        return self.weight[:d].copy()

    @property
    def box_upper(self) -> np.ndarray:
        d = self.weight.shape[0] // 2
        return 1.0 - self.weight[d:]


@dataclass(frozen=True)
class Prediction:
    """Result of one winner-take-all read."""

    predicted_class: int
    winner_id: int
    choice_values: np.ndarray
    winner_match: float


@dataclass(frozen=True)
class TrainEvent:
    """Outcome of one training presentation that committed an update."""

    decision: str  # "absorbed" or "created"
    category_id: int
    pre_match: float
    post_match: float
    step: int


@dataclass(frozen=True)
class ArtmapParams:
    """Hyperparameters of the category layer.

    alpha: choice regularizer, > 0 (small alpha favors large committed boxes)
    beta: learning rate in (0, 1]; 1.0 is fast learning
    rho_baseline: baseline vigilance in [0, 1]
    match_tracking_delta: additive vigilance bump on a label conflict
    """

    alpha: float = 1e-3
    beta: float = 1.0
    rho_baseline: float = 0.0
    match_tracking_delta: float = 1e-6

    def validate(self) -> "ArtmapParams":
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 <= self.rho_baseline <= 1:
            raise ValueError(f"rho_baseline must be in [0, 1], got {self.rho_baseline}")
        if not self.match_tracking_delta > 0:
            raise ValueError("match_tracking_delta must be > 0")
        return self


class FuzzyArtmapModel:
    """Sequential fuzzy ARTMAP classifier over complement-coded inputs.

    Categories are stored as rows of a dense float64 matrix in creation
    order; each category is bound to a single class and the binding never
    changes. `learn` is the only order-dependent entry point; `predict`
    and the score helpers are pure reads.
    """

    def __init__(self, input_dim: int, num_classes: int,
                 alpha: float = 1e-3, beta: float = 1.0,
                 rho_baseline: float = 0.0,
                 match_tracking_delta: float = 1e-6):
        if input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        self.params = ArtmapParams(alpha, beta, rho_baseline,
                                   match_tracking_delta).validate()
        self.input_dim = int(input_dim)
        self.num_classes = int(num_classes)
        m = 2 * self.input_dim
        self._weights = np.empty((_INITIAL_CAPACITY, m), dtype=np.float64)
        self._wsums = np.empty(_INITIAL_CAPACITY, dtype=np.float64)
        self._classes = np.empty(_INITIAL_CAPACITY, dtype=np.int64)
        self._created = np.empty(_INITIAL_CAPACITY, dtype=np.int64)
        self._n = 0
        self._step = 0

    @classmethod
    def from_params(cls, input_dim: int, num_classes: int,
                    params: ArtmapParams) -> "FuzzyArtmapModel":
        return cls(input_dim, num_classes, params.alpha, params.beta,
                   params.rho_baseline, params.match_tracking_delta)

    @classmethod
    def from_arrays(cls, weights, classes, created_steps=None, step: int = 0,
                    num_classes: int | None = None,
                    params: ArtmapParams | None = None) -> "FuzzyArtmapModel":
        """Build a model directly from a category matrix (tests, loading)."""
        weights = np.asarray(weights, dtype=np.float64)
        classes = np.asarray(classes, dtype=np.int64)
        if weights.ndim != 2 or weights.shape[1] % 2 != 0:
            raise ValueError("weights must be (n, 2d)")
        if classes.shape != (weights.shape[0],):
            raise ValueError("classes must align with weights")
        if created_steps is None:
            created_steps = np.arange(weights.shape[0], dtype=np.int64)
        created_steps = np.asarray(created_steps, dtype=np.int64)
        if num_classes is None:
            num_classes = int(classes.max()) + 1 if classes.size else 1
        params = (params or ArtmapParams()).validate()
        model = cls.from_params(weights.shape[1] // 2, num_classes, params)
        n = weights.shape[0]
        model._ensure_capacity(n)
        model._weights[:n] = weights
        model._wsums[:n] = weights.sum(axis=1)
        model._classes[:n] = classes
        model._created[:n] = created_steps
        model._n = n
        model._step = int(step)
        return model

    # core hyperparameters, exposed flat for convenience
    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def rho_baseline(self) -> float:
        return self.params.rho_baseline

    @property
    def num_categories(self) -> int:
        return self._n

    @property
    def step(self) -> int:
        """Number of training presentations committed so far."""
        return self._step

    @property
    def weights(self) -> np.ndarray:
        """View of the live category matrix (n, 2d). Do not mutate."""
        return self._weights[:self._n]

    @property
    def weight_sums(self) -> np.ndarray:
        return self._wsums[:self._n]

    @property
    def class_map(self) -> np.ndarray:
        return self._classes[:self._n]

    @property
    def created_steps(self) -> np.ndarray:
        return self._created[:self._n]

    def category(self, j: int) -> Category:
        if not 0 <= j < self._n:
            raise IndexError(f"category id {j} out of range [0, {self._n})")
        return Category(j, self._weights[j].copy(), int(self._classes[j]),
                        int(self._created[j]))

    def categories(self) -> list[Category]:
        return [self.category(j) for j in range(self._n)]

    def copy(self) -> "FuzzyArtmapModel":
        clone = FuzzyArtmapModel.from_params(self.input_dim, self.num_classes,
                                             self.params)
        clone._ensure_capacity(self._n)
        clone._weights[:self._n] = self._weights[:self._n]
        clone._wsums[:self._n] = self._wsums[:self._n]
        clone._classes[:self._n] = self._classes[:self._n]
        clone._created[:self._n] = self._created[:self._n]
        clone._n = self._n
        clone._step = self._step
        return clone

    def _ensure_capacity(self, n: int) -> None:
        cap = self._weights.shape[0]
        if n <= cap:
            return
        while cap < n:
            cap *= 2
        m = self._weights.shape[1]
        for name, width in (("_weights", m), ("_wsums", 0),
                            ("_classes", 0), ("_created", 0)):
            old = getattr(self, name)
            shape = (cap, width) if width else (cap,)
            grown = np.empty(shape, dtype=old.dtype)
            grown[:self._n] = old[:self._n]
            setattr(self, name, grown)

    def _code(self, x) -> np.ndarray:
        coded = complement_code(x)
        if coded.shape != (2 * self.input_dim,):
            raise ValueError(
                f"expected {self.input_dim} features, got shape {np.asarray(x).shape}"
            )
        return coded

    def choice_and_match(self, coded: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Choice values T and match values M against all categories."""
        s = fuzzy_and_sums(self.weights, coded)[0]
        t = s / (self.alpha + self.weight_sums)
        m = s / coded.sum()
        return t, m

    def updated_weight(self, j: int, coded: np.ndarray) -> np.ndarray:
        """Weight category j would take after absorbing coded (pure)."""
        w = self._weights[j]
        if self.beta == 1.0:
            return np.minimum(coded, w)  # exact fast-learning path
        return self.beta * np.minimum(coded, w) + (1.0 - self.beta) * w

    def absorb(self, j: int, coded: np.ndarray) -> TrainEvent:
        """Commit the learning update of category j on a coded input."""
        if not 0 <= j < self._n:
            raise IndexError(f"category id {j} out of range [0, {self._n})")
        pre = match(coded, self._weights[j])
        w_new = self.updated_weight(j, coded)
        self._weights[j] = w_new
        self._wsums[j] = w_new.sum()
        post = match(coded, w_new)
        ev = TrainEvent("absorbed", j, pre, post, self._step)
        self._step += 1
        return ev

    def commit_new(self, coded: np.ndarray, label: int) -> TrainEvent:
        """Append a fresh category with weight = coded input."""
        if not 0 <= label < self.num_classes:
            raise ValueError(f"label {label} outside [0, {self.num_classes})")
        self._ensure_capacity(self._n + 1)
        j = self._n
        self._weights[j] = coded
        self._wsums[j] = coded.sum()
        self._classes[j] = label
        self._created[j] = self._step
        self._n += 1
        ev = TrainEvent("created", j, 1.0, 1.0, self._step)
        self._step += 1
        return ev

    def search(self, coded: np.ndarray, label: int) -> tuple[str, int, float]:
        """Dry-run resonance search: ("absorbed", j, M_j) or ("created", -1, 1.0).

        Walks categories in descending choice order (ties to the lowest id),
        skipping those below the running vigilance. A winner of the wrong
        class raises vigilance to its match plus the tracking delta (capped
        at 1.0) and the search continues, so only a later category whose
        match clears the raised bar may still absorb.
        """
        if self._n == 0:
            return "created", -1, 1.0
        t, m = self.choice_and_match(coded)
        rho = self.rho_baseline
        order = np.argsort(-t, kind="stable")
        delta = self.params.match_tracking_delta
        for j in order:
            j = int(j)
            if m[j] < rho:
                continue
            if int(self._classes[j]) != int(label):
                rho = min(m[j] + delta, 1.0)
                continue
            return "absorbed", j, float(m[j])
        return "created", -1, 1.0

    def learn(self, x, label: int) -> TrainEvent:
        """Present one labeled sample and commit the resulting update."""
        if not 0 <= int(label) < self.num_classes:
            raise ValueError(f"label {label} outside [0, {self.num_classes})")
        coded = self._code(x)
        decision, j, _ = self.search(coded, int(label))
        if decision == "absorbed":
            return self.absorb(j, coded)
        return self.commit_new(coded, int(label))

    def learn_sample(self, sample: Sample) -> TrainEvent:
        return self.learn(sample.features, sample.label)

    def predict(self, x) -> Prediction:
        """Winner-take-all read: no vigilance, no state change."""
        if self._n == 0:
            raise UntrainedModelError("model has no categories yet")
        coded = self._code(x)
        t, m = self.choice_and_match(coded)
        j = int(np.argmax(t))  # first maximum, so ties go to the lowest id
        return Prediction(int(self._classes[j]), j, t, float(m[j]))

    def predict_batch(self, features: np.ndarray):
        """Vectorized winner-take-all over rows of features.

        Returns (predicted labels, winner ids, winner matches).
        """
        if self._n == 0:
            raise UntrainedModelError("model has no categories yet")
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.input_dim:
            raise ValueError(f"features must be (n, {self.input_dim})")
        coded = complement_code(features)
        s = fuzzy_and_sums(self.weights, coded)
        t = s / (self.alpha + self.weight_sums)[None, :]
        winners = np.argmax(t, axis=1)
        rows = np.arange(len(features))
        matches = s[rows, winners] / coded.sum(axis=1)
        return self._classes[winners], winners, matches


def clean_accuracy(model: FuzzyArtmapModel, dataset: Dataset) -> float:
    """Fraction of dataset rows the model labels correctly."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    preds, _, _ = model.predict_batch(dataset.features)
    return float(np.mean(preds == dataset.labels))
