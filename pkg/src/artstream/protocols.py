"""Replay-free adversarial training protocols for the streaming classifier.

Seven variants over two axes plus two targeted interventions:

- when perturbations are generated: offline (against a frozen copy of the
  clean-trained model) or online (against the current model state);
- which perturbed samples trigger updates: standard (all of them) or
  selective (only those the current model misclassifies);
- two_stage_selective runs two online-selective passes with per-sample
  budgets drawn from a moderate range first and a stronger range second,
  without re-presenting clean samples in the second pass;
- sep_aware is online standard, but each perturbed sample's update is
  gated: absorb into the best correct-class category only if the simulated
  post-update box keeps its overlap with every wrong-class box at or below
  a threshold, otherwise create a fresh category.

Every sample is used at most once per pass and perturbed inputs are
discarded right after their update, so no replay buffer ever exists.
All randomness flows from the caller's seed through named derivations;
per-sample attack noise is keyed by (pass seed, stream index).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from enum import Enum

import numpy as np

from .attack import AttackConfig, pgd_wb_softmax
from .core import (ArtmapParams, Dataset, FuzzyArtmapModel, TrainEvent,
                   complement_code)
from .diagnostics import overlap_one_vs_many
from .seeds import derive_seed, sample_rng

__all__ = [
    "ProtocolKind",
    "ProtocolSpec",
    "TrainEventLog",
    "TrainLogRecord",
    "sep_aware_update",
    "train_protocol",
    "train_two_stage",
]


class ProtocolKind(str, Enum):
    VANILLA = "vanilla"
    ADV_OFFLINE = "adv_offline"
    ADV_ONLINE = "adv_online"
    SELECTIVE_OFFLINE = "selective_offline"
    SELECTIVE_ONLINE = "selective_online"
    TWO_STAGE_SELECTIVE = "two_stage_selective"
    SEP_AWARE = "sep_aware"

    @property
    def adversarial(self) -> bool:
        return self is not ProtocolKind.VANILLA

    @property
    def offline(self) -> bool:
        return self in (ProtocolKind.ADV_OFFLINE, ProtocolKind.SELECTIVE_OFFLINE)

    @property
    def selective(self) -> bool:
        return self in (ProtocolKind.SELECTIVE_OFFLINE,
                        ProtocolKind.SELECTIVE_ONLINE,
                        ProtocolKind.TWO_STAGE_SELECTIVE)


def _check_range(name: str, rng) -> tuple[float, float]:
    lo, hi = float(rng[0]), float(rng[1])
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"{name} must satisfy 0 <= lo <= hi <= 1, got {rng}")
    return lo, hi


@dataclass(frozen=True)
class ProtocolSpec:
    """Which protocol to run and with what attack budget.

    attack supplies the training-time budget and schedule; two-stage runs
    override its epsilon per sample with draws from the stage ranges (the
    step size then falls back to the epsilon/4 rule). theta only matters
    for sep_aware.
    """

    kind: ProtocolKind
    attack: AttackConfig | None = None
    theta: float = 0.01
    stage1_range: tuple = (0.05, 0.15)
    stage2_range: tuple = (0.15, 0.35)

    def __post_init__(self):
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        if self.kind.adversarial and self.attack is None:
            raise ValueError(f"protocol {self.kind.value} needs an attack config")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [0, 1], got {self.theta}")
        object.__setattr__(self, "stage1_range",
                           _check_range("stage1_range", self.stage1_range))
        object.__setattr__(self, "stage2_range",
                           _check_range("stage2_range", self.stage2_range))


@dataclass(frozen=True)
class TrainLogRecord:
    """One presentation in a training run.

    kind is "clean" or "adv"; decision is "absorbed", "created", or
    "skipped" (selective gate declined the update). misclassified reports
    the pre-update prediction on the perturbed input; delta is the
    simulated-overlap score and only set on sep_aware perturbed records.
    """

    step: int
    pass_idx: int
    index: int
    kind: str
    epsilon: float | None
    decision: str
    category_id: int
    pre_match: float | None
    post_match: float | None
    misclassified: bool | None
    delta: float | None


class TrainEventLog:
    """Append-only record list with JSONL round-trip and audit checks."""

    def __init__(self, records: list[TrainLogRecord] | None = None):
        self.records: list[TrainLogRecord] = list(records or [])

    def append(self, record: TrainLogRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def adv_records(self) -> list[TrainLogRecord]:
        return [r for r in self.records if r.kind == "adv"]

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "TrainEventLog":
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(TrainLogRecord(**json.loads(line)))
        return cls(records)

    def verify_no_replay(self) -> bool:
        """Each (pass, stream index, kind) occurs at most once."""
        seen = set()
        for r in self.records:
            key = (r.pass_idx, r.index, r.kind)
            if key in seen:
                return False
            seen.add(key)
        return True

    def verify_selective_updates(self) -> bool:
        """Perturbed samples update exactly when they were misclassified.

        Meaningful for selective protocols; standard protocols update on
        correctly handled perturbations too.
        """
        for r in self.adv_records():
            updated = r.decision != "skipped"
            if r.misclassified is None or updated != r.misclassified:
                return False
        return True

    def match_preservation_violations(self) -> list[TrainLogRecord]:
        """Absorptions whose input match changed across the update.

        Under fast learning the absorbed input's match is preserved
        bit-exactly, so any violation signals a broken update rule.
        """
        return [r for r in self.records
                if r.decision == "absorbed" and r.pre_match != r.post_match]


def sep_aware_update(model: FuzzyArtmapModel, x_adv, y: int, theta: float,
                     size_floor: float = 1e-9):
    """Overlap-gated update for one perturbed sample; mutates the model.

    Simulates absorbing the sample into the highest-choice correct-class
    category; if the resulting box would overlap any wrong-class box by
    more than theta, a fresh category is created instead. Returns the
    commit event and the simulated overlap (None when the class had no
    category yet and creation was forced).
    """
    coded = complement_code(np.asarray(x_adv, dtype=np.float64))
    classes = model.class_map
    correct = np.flatnonzero(classes == y)
    if correct.size == 0:
        return model.commit_new(coded, y), None
    t, _ = model.choice_and_match(coded)
    j_star = int(correct[np.argmax(t[correct])])  # ties: lowest id
    w_new = model.updated_weight(j_star, coded)
    wrong = np.flatnonzero(classes != y)
    if wrong.size == 0:
        delta = 0.0
    else:
        ov = overlap_one_vs_many(w_new, model.weights[wrong],
                                 model.weight_sums[wrong], size_floor)
        delta = float(ov.max())
    if delta > theta:
        return model.commit_new(coded, y), delta
    return model.absorb(j_star, coded), delta


def _clean_record(ev: TrainEvent, pass_idx: int, index: int) -> TrainLogRecord:
    return TrainLogRecord(ev.step, pass_idx, index, "clean", None,
                          ev.decision, ev.category_id, ev.pre_match,
                          ev.post_match, None, None)


def _adv_record(ev: TrainEvent, pass_idx: int, index: int, epsilon: float,
                misclassified: bool, delta: float | None) -> TrainLogRecord:
    return TrainLogRecord(ev.step, pass_idx, index, "adv", epsilon,
                          ev.decision, ev.category_id, ev.pre_match,
                          ev.post_match, misclassified, delta)


def _skip_record(model: FuzzyArtmapModel, pass_idx: int, index: int,
                 epsilon: float) -> TrainLogRecord:
    return TrainLogRecord(model.step, pass_idx, index, "adv", epsilon,
                          "skipped", -1, None, None, False, None)


class _Run:
    """Shared plumbing for one training run: model, log, event hook."""

    def __init__(self, stream: Dataset, params: ArtmapParams,
                 num_classes: int | None, on_event):
        if len(stream) == 0:
            raise ValueError("training stream is empty")
        classes = num_classes if num_classes is not None else stream.num_classes
        self.stream = stream
        self.model = FuzzyArtmapModel.from_params(stream.input_dim, classes,
                                                  params)
        self.log = TrainEventLog()
        self._hook = on_event

    def emit(self, record: TrainLogRecord) -> None:
        self.log.append(record)
        if self._hook is not None:
            self._hook(self.model, record)

    def clean_pass(self, pass_idx: int) -> None:
        for i in range(len(self.stream)):
            ev = self.model.learn(self.stream.features[i],
                                  int(self.stream.labels[i]))
            self.emit(_clean_record(ev, pass_idx, i))

    def present_adv(self, x_adv: np.ndarray, y: int, pass_idx: int, i: int,
                    epsilon: float, selective: bool,
                    sep_aware: bool, theta: float) -> None:
        mis = self.model.predict(x_adv).predicted_class != y
        if selective and not mis:
            self.emit(_skip_record(self.model, pass_idx, i, epsilon))
            return
        if sep_aware:
            ev, delta = sep_aware_update(self.model, x_adv, y, theta)
        else:
            ev, delta = self.model.learn(x_adv, y), None
        self.emit(_adv_record(ev, pass_idx, i, epsilon, mis, delta))


def _offline_adv_pass(run: _Run, spec: ProtocolSpec, seed: int,
                      pass_idx: int) -> None:
    # perturbations target the frozen post-clean model; the selective gate
    # still consults the evolving model
    reference = run.model.copy()
    cfg = replace(spec.attack, seed=derive_seed(seed, "attack", pass_idx))
    selective = spec.kind is ProtocolKind.SELECTIVE_OFFLINE
    for i in range(len(run.stream)):
        x = run.stream.features[i]
        y = int(run.stream.labels[i])
        x_adv = pgd_wb_softmax(reference, x, y, cfg, sample_index=i)
        run.present_adv(x_adv, y, pass_idx, i, cfg.epsilon, selective,
                        False, spec.theta)


def _online_pass(run: _Run, spec: ProtocolSpec, seed: int,
                 pass_idx: int) -> None:
    cfg = replace(spec.attack, seed=derive_seed(seed, "attack", pass_idx))
    selective = spec.kind is ProtocolKind.SELECTIVE_ONLINE
    sep_aware = spec.kind is ProtocolKind.SEP_AWARE
    for i in range(len(run.stream)):
        x = run.stream.features[i]
        y = int(run.stream.labels[i])
        ev = run.model.learn(x, y)
        run.emit(_clean_record(ev, pass_idx, i))
        x_adv = pgd_wb_softmax(run.model, x, y, cfg, sample_index=i)
        run.present_adv(x_adv, y, pass_idx, i, cfg.epsilon, selective,
                        sep_aware, spec.theta)


def _staged_selective_pass(run: _Run, spec: ProtocolSpec, seed: int,
                           pass_idx: int, eps_range: tuple[float, float],
                           include_clean: bool) -> None:
    base = spec.attack
    pass_seed = derive_seed(seed, "attack", pass_idx)
    eps_seed = derive_seed(seed, "epsilon", pass_idx)
    lo, hi = eps_range
    for i in range(len(run.stream)):
        x = run.stream.features[i]
        y = int(run.stream.labels[i])
        if include_clean:
            ev = run.model.learn(x, y)
            run.emit(_clean_record(ev, pass_idx, i))
        eps = float(sample_rng(eps_seed, i).uniform(lo, hi))
        cfg = AttackConfig(epsilon=eps, steps=base.steps, step_size=None,
                           temperature=base.temperature, seed=pass_seed)
        x_adv = pgd_wb_softmax(run.model, x, y, cfg, sample_index=i)
        run.present_adv(x_adv, y, pass_idx, i, eps, True, False, spec.theta)


def train_two_stage(stream: Dataset, spec: ProtocolSpec,
                    params: ArtmapParams | None = None, seed: int = 0,
                    num_classes: int | None = None, on_event=None):
    """Progressive two-stage selective training.

    Pass 0 interleaves clean updates with selective perturbed updates at
    per-sample budgets from stage1_range; pass 1 revisits the stream for
    perturbed-only selective updates at budgets from stage2_range, never
    re-presenting clean samples. Returns (model, event log).
    """
    spec = ProtocolSpec(ProtocolKind.TWO_STAGE_SELECTIVE, spec.attack,
                        spec.theta, spec.stage1_range, spec.stage2_range)
    run = _Run(stream, params or ArtmapParams(), num_classes, on_event)
    _staged_selective_pass(run, spec, seed, 0, spec.stage1_range, True)
    _staged_selective_pass(run, spec, seed, 1, spec.stage2_range, False)
    return run.model, run.log


def train_protocol(stream: Dataset, spec: ProtocolSpec,
                   params: ArtmapParams | None = None, seed: int = 0,
                   num_classes: int | None = None, on_event=None):
    """Run one full training protocol over the stream.

    Returns (model, event log). on_event, when given, is called as
    on_event(model, record) after every logged presentation; it must not
    mutate the model.
    """
    if spec.kind is ProtocolKind.TWO_STAGE_SELECTIVE:
        return train_two_stage(stream, spec, params, seed, num_classes,
                               on_event)
    run = _Run(stream, params or ArtmapParams(), num_classes, on_event)
    if spec.kind is ProtocolKind.VANILLA:
        run.clean_pass(0)
    elif spec.kind.offline:
        run.clean_pass(0)
        _offline_adv_pass(run, spec, seed, 1)
    else:
        _online_pass(run, spec, seed, 0)
    return run.model, run.log
