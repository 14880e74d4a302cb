"""Online geometry and reliability diagnostics.

Every category weight w induces an axis-aligned box in the coded space:
lower corner w, upper corner all-ones. Overlap between two categories is
the summed per-dimension intersection of those boxes, normalized by the
smaller box's total extent. This module tracks how boxes crowd each other
across classes (overlap risk, minimum separation, a compactness
surrogate), scores the winner-match statistic as a misclassification
detector, and provides two structural checks: the match-preservation
identity of fast learning and a search for winner-match inversion
witnesses.

Everything here is a pure read of the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .core import FuzzyArtmapModel, complement_code, match

__all__ = [
    "DiagnosticBox",
    "GeometryMonitor",
    "GeometrySnapshot",
    "Lemma1Result",
    "MatchScoreStats",
    "MatchWitness",
    "box_intersection",
    "geometry_snapshot",
    "lemma1_check",
    "match_score_stats",
    "max_cross_class_overlap",
    "overlap",
    "overlap_one_vs_many",
    "prop1_witness_search",
    "rank_auc",
]

_SIZE_FLOOR = 1e-9  # keeps point-box overlaps finite

_PAIR_ROW_CHUNK = 256


@dataclass(frozen=True)
class DiagnosticBox:
    """Axis-aligned box with an owning class, for geometry queries."""

    lower: np.ndarray
    upper: np.ndarray
    owner_class: int | None = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box corners must be aligned 1-D arrays")
        if np.any(hi < lo):
            raise ValueError("box upper corner must dominate lower corner")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_weight(cls, weight: np.ndarray,
                    owner_class: int | None = None) -> "DiagnosticBox":
        """Coded-space box of a category: corners w and all-ones."""
        weight = np.asarray(weight, dtype=np.float64)
        return cls(weight.copy(), np.ones_like(weight), owner_class)

    @property
    def size(self) -> float:
        return float((self.upper - self.lower).sum())


def box_intersection(a: DiagnosticBox, b: DiagnosticBox) -> float:
    """Summed per-dimension interval overlap of two boxes."""
    lo = np.maximum(a.lower, b.lower)
    hi = np.minimum(a.upper, b.upper)
    return float(np.maximum(hi - lo, 0.0).sum())


def overlap(a: DiagnosticBox, b: DiagnosticBox,
            size_floor: float = _SIZE_FLOOR) -> float:
    """Intersection normalized by the smaller box's size.

    The floor in the denominator keeps point boxes finite; two identical
    boxes score essentially 1 and disjoint boxes score 0.
    """
    return box_intersection(a, b) / (min(a.size, b.size) + size_floor)


def overlap_one_vs_many(w: np.ndarray, weights: np.ndarray,
                        wsums: np.ndarray | None = None,
                        size_floor: float = _SIZE_FLOOR) -> np.ndarray:
    """Overlap of one category weight against each row of weights.

    Closed form of the coded-space box overlap: intersection is
    2d - (|w| + |w_k| + ||w - w_k||_1) / 2 and size is 2d - |w|.
    """
    w = np.asarray(w, dtype=np.float64)
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if wsums is None:
        wsums = weights.sum(axis=1)
    m = weights.shape[1]
    dist = np.abs(weights - w[None, :]).sum(axis=1)
    inter = m - (w.sum() + wsums + dist) / 2.0
    np.maximum(inter, 0.0, out=inter)
    sizes = m - wsums
    return inter / (np.minimum(m - w.sum(), sizes) + size_floor)


def max_cross_class_overlap(weights: np.ndarray, wsums: np.ndarray,
                            classes: np.ndarray,
                            size_floor: float = _SIZE_FLOOR,
                            row_chunk: int = _PAIR_ROW_CHUNK) -> float:
    """Largest overlap between boxes owned by different classes.

    The coded-space intersection has a closed form: sum(1 - max(w_r, w_c))
    over the 2d components equals 2d - (|w_r| + |w_c| + ||w_r - w_c||_1)/2,
    and a box's size is 2d - |w|. Row-chunked city-block distances keep
    the pairwise block small.
    """
    n, m = weights.shape
    if n < 2 or np.unique(classes).size < 2:
        return 0.0
    sizes = m - wsums  # coded-space box size, per category
    best = 0.0
    for start in range(0, n, row_chunk):
        stop = min(start + row_chunk, n)
        dist = cdist(weights[start:stop], weights, "cityblock")
        inter = m - (wsums[start:stop, None] + wsums[None, :] + dist) / 2.0
        np.maximum(inter, 0.0, out=inter)
        ov = inter / (np.minimum(sizes[start:stop, None], sizes[None, :])
                      + size_floor)
        cross = classes[start:stop, None] != classes[None, :]
        if cross.any():
            best = max(best, float(ov[cross].max()))
    return best


@dataclass(frozen=True)
class GeometrySnapshot:
    """Point-in-time geometry summary of a model's category boxes."""

    step: int
    num_categories: int
    min_separation: float
    overlap_risk: float
    compactness_surrogate: float
    per_class_counts: dict

    def as_row(self) -> list:
        return [self.step, self.num_categories, self.min_separation,
                self.overlap_risk, self.compactness_surrogate]


def geometry_snapshot(model: FuzzyArtmapModel,
                      size_floor: float = _SIZE_FLOOR,
                      step: int | None = None) -> GeometrySnapshot:
    """Summarize cross-class box crowding for the current model.

    Overlap risk is the max cross-class overlap; minimum separation is
    its complement 1 - risk. With fewer than two classes committed, risk
    is 0 and separation 1 by convention. The compactness surrogate is the
    mean box extent normalized by dimension (0 for point boxes, growing
    monotonically as boxes expand).
    """
    n = model.num_categories
    d = model.input_dim
    if step is None:
        step = model.step
    if n == 0:
        return GeometrySnapshot(step, 0, 1.0, 0.0, 0.0, {})
    wsums = model.weight_sums
    risk = max_cross_class_overlap(model.weights, wsums, model.class_map,
                                   size_floor)
    compact = float(np.mean((d - wsums) / d).clip(0.0))
    counts = {int(c): int(k) for c, k in
              zip(*np.unique(model.class_map, return_counts=True))}
    return GeometrySnapshot(int(step), n, 1.0 - risk, risk, compact, counts)


class GeometryMonitor:
    """Collects geometry snapshots every `stride` observed presentations."""

    def __init__(self, stride: int = 1000, size_floor: float = _SIZE_FLOOR):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = stride
        self.size_floor = size_floor
        self.snapshots: list[GeometrySnapshot] = []
        self._seen = 0

    def observe(self, model: FuzzyArtmapModel, record=None) -> None:
        self._seen += 1
        if self._seen % self.stride == 0:
            self.snapshots.append(
                geometry_snapshot(model, self.size_floor, step=model.step))

    def finalize(self, model: FuzzyArtmapModel) -> None:
        """Append a closing snapshot if the last stride was partial."""
        if self._seen == 0 or self._seen % self.stride != 0:
            self.snapshots.append(
                geometry_snapshot(model, self.size_floor, step=model.step))

    def rows(self) -> list[list]:
        return [snap.as_row() for snap in self.snapshots]


def rank_auc(positive_scores, negative_scores) -> float:
    """Probability a positive score exceeds a negative one, ties at half.

    Identical score sets therefore give exactly 0.5.
    """
    pos = np.asarray(positive_scores, dtype=np.float64)
    neg = np.sort(np.asarray(negative_scores, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both score sets must be non-empty")
    below = np.searchsorted(neg, pos, side="left")
    below_or_equal = np.searchsorted(neg, pos, side="right")
    wins = below + 0.5 * (below_or_equal - below)
    return float(wins.sum() / (pos.size * neg.size))


@dataclass(frozen=True)
class MatchScoreStats:
    """Winner-match distribution summary on clean vs perturbed inputs.

    auc is the probability a clean input's winner match exceeds a
    perturbed one's (clean treated as the positive class); below 0.5 the
    statistic ranks perturbed inputs as better-matched than clean ones.
    """

    clean_mean: float
    clean_std: float
    adv_mean: float
    adv_std: float
    auc: float
    n_clean: int
    n_adv: int


def match_score_stats(model: FuzzyArtmapModel, clean_features,
                      adv_features) -> MatchScoreStats:
    clean_features = np.asarray(clean_features, dtype=np.float64)
    adv_features = np.asarray(adv_features, dtype=np.float64)
    if len(clean_features) == 0 or len(adv_features) == 0:
        raise ValueError("both input sets must be non-empty")
    _, _, m_clean = model.predict_batch(clean_features)
    _, _, m_adv = model.predict_batch(adv_features)
    return MatchScoreStats(
        clean_mean=float(m_clean.mean()),
        clean_std=float(m_clean.std()),
        adv_mean=float(m_adv.mean()),
        adv_std=float(m_adv.std()),
        auc=rank_auc(m_clean, m_adv),
        n_clean=len(m_clean),
        n_adv=len(m_adv),
    )


@dataclass(frozen=True)
class Lemma1Result:
    """Match value around one simulated fast-learning absorption."""

    category_id: int
    match_before: float
    match_after: float

    @property
    def preserved(self) -> bool:
        return self.match_before == self.match_after  # bit-exact, no tolerance


def lemma1_check(model: FuzzyArtmapModel, x, label: int) -> Lemma1Result | None:
    """Verify the absorbing input's match survives its own update.

    Simulates the presentation without mutating the model. Returns None
    when the search would create a category instead of absorbing.
    """
    coded = complement_code(np.asarray(x, dtype=np.float64))
    decision, j, _ = model.search(coded, int(label))
    if decision != "absorbed":
        return None
    before = match(coded, model.weights[j])
    after = match(coded, model.updated_weight(j, coded))
    return Lemma1Result(j, before, after)


@dataclass(frozen=True)
class MatchWitness:
    """A pair showing winner match ranking a wrong answer above a right one."""

    misclassified_index: int
    correct_index: int
    misclassified_match: float
    correct_match: float
    misclassified_predicted: int
    correct_predicted: int


def prop1_witness_search(model: FuzzyArtmapModel, features,
                         labels) -> MatchWitness | None:
    """Find a misclassified input whose winner match beats a correct one's.

    Scans predictions over the given labeled set and returns the starkest
    such pair (highest-match error vs lowest-match correct), or None when
    no inversion exists. Read-only.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    preds, _, matches = model.predict_batch(features)
    wrong = np.flatnonzero(preds != labels)
    right = np.flatnonzero(preds == labels)
    if wrong.size == 0 or right.size == 0:
        return None
    i_wrong = int(wrong[np.argmax(matches[wrong])])
    i_right = int(right[np.argmin(matches[right])])
    if matches[i_wrong] <= matches[i_right]:
        return None
    return MatchWitness(
        misclassified_index=i_wrong,
        correct_index=i_right,
        misclassified_match=float(matches[i_wrong]),
        correct_match=float(matches[i_right]),
        misclassified_predicted=int(preds[i_wrong]),
        correct_predicted=int(preds[i_right]),
    )
