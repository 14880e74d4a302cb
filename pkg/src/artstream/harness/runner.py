"""End-to-end seeded experiments: data, training, attacks, report.

One master seed drives everything through named sub-seeds (stream
shuffle, training attacks, subset draw, surrogate init, evaluation
attacks, noise baseline). Reports are written with sorted keys and exact
float repr, so two runs of the same config and seed produce byte-identical
report files apart from the timing block.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ..attack import (AttackConfig, SurrogateConfig, pgd_wb_softmax_batch,
                      surrogate_train)
from ..core import ArtmapParams, Dataset, clean_accuracy
from ..diagnostics import (GeometryMonitor, geometry_snapshot,
                           match_score_stats)
from ..protocols import ProtocolKind, ProtocolSpec, train_protocol
from ..seeds import derive_seed
from .configfile import parse_flat
from .data import SYNTH_KINDS, load_csv, load_idx, synth_generate
from .evaluation import (ATTACK_KINDS, EvalSubset, aurac, eval_subset,
                         robust_curve, sanity_checks_from_curves)
from .model_io import save_model

__all__ = [
    "ExperimentConfig",
    "RobustnessReport",
    "evaluate_model",
    "load_datasets",
    "run_experiment",
]

REPORT_VERSION = 1

_DATASET_KINDS = SYNTH_KINDS + ("idx", "csv")


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; every field is a config-file key."""

    dataset: str = "blobs"
    synth_d: int = 8
    synth_classes: int = 3
    synth_train_n: int = 400
    synth_test_n: int = 400
    synth_margin: float = 0.25
    synth_seed: int | None = None
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    csv_normalization: str = "unit"
    protocol: str = "vanilla"
    rho: float = 0.9
    alpha: float = 1e-3
    beta: float = 1.0
    match_tracking_delta: float = 1e-6
    train_epsilon: float = 0.2
    steps: int = 20
    tau: float = 0.01
    step_size: float | None = None
    theta: float = 0.01
    stage1: tuple = (0.05, 0.15)
    stage2: tuple = (0.15, 0.35)
    epsilon_grid: tuple = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35)
    subset_n: int = 1000
    seed: int = 0
    out: str | None = None
    surrogate_hidden: int = 64
    surrogate_epochs: int = 10
    surrogate_lr: float = 0.5
    surrogate_batch: int = 32
    num_classes: int | None = None
    snapshot_stride: int = 1000
    match_epsilon: float = 0.3
    data_dir: str | None = None

    def __post_init__(self):
        if self.dataset not in _DATASET_KINDS:
            raise ValueError(
                f"dataset must be one of {_DATASET_KINDS}, got {self.dataset!r}"
            )
        ProtocolKind(self.protocol)
        self.stage1 = tuple(float(v) for v in self.stage1)
        self.stage2 = tuple(float(v) for v in self.stage2)
        self.epsilon_grid = tuple(float(v) for v in self.epsilon_grid)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = set(cls.field_names())
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**mapping)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_mapping(parse_flat(fh.read(), str(path)))

    def to_mapping(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("stage1", "stage2", "epsilon_grid"):
            out[key] = list(out[key])
        return out

    def resolve_path(self, path: str) -> str:
        if os.path.isabs(path):
            return path
        base = self.data_dir or os.environ.get("ARTMAP_DATA_DIR")
        return os.path.join(base, path) if base else path

    def artmap_params(self) -> ArtmapParams:
        return ArtmapParams(self.alpha, self.beta, self.rho,
                            self.match_tracking_delta)

    def protocol_spec(self, train_seed: int) -> ProtocolSpec:
        attack = None
        kind = ProtocolKind(self.protocol)
        if kind.adversarial:
            attack = AttackConfig(epsilon=self.train_epsilon,
                                  steps=self.steps,
                                  step_size=self.step_size,
                                  temperature=self.tau,
                                  seed=train_seed)
        return ProtocolSpec(kind, attack, self.theta, self.stage1,
                            self.stage2)


def load_datasets(config: ExperimentConfig) -> tuple[Dataset, Dataset, dict]:
    """Materialize (train, test, info) for the configured source."""
    if config.dataset in SYNTH_KINDS:
        synth_seed = (config.synth_seed if config.synth_seed is not None
                      else derive_seed(config.seed, "synth"))
        train = synth_generate(config.dataset, config.synth_d,
                               config.synth_classes, config.synth_train_n,
                               derive_seed(synth_seed, "train"),
                               config.synth_margin)
        test = synth_generate(config.dataset, config.synth_d,
                              config.synth_classes, config.synth_test_n,
                              derive_seed(synth_seed, "test"),
                              config.synth_margin)
        info = {"kind": config.dataset, "synth_seed": synth_seed,
                "margin": config.synth_margin}
    elif config.dataset == "idx":
        needed = (config.train_images, config.train_labels,
                  config.test_images, config.test_labels)
        if any(p is None for p in needed):
            raise ValueError("idx dataset needs train/test image and label paths")
        train = load_idx(config.resolve_path(config.train_images),
                         config.resolve_path(config.train_labels))
        test = load_idx(config.resolve_path(config.test_images),
                        config.resolve_path(config.test_labels))
        info = {"kind": "idx"}
    else:
        if config.train_csv is None or config.test_csv is None:
            raise ValueError("csv dataset needs train_csv and test_csv paths")
        train = load_csv(config.resolve_path(config.train_csv),
                         config.csv_normalization)
        test = load_csv(config.resolve_path(config.test_csv),
                        config.csv_normalization)
        info = {"kind": "csv", "normalization": config.csv_normalization}
    classes = config.num_classes or max(train.num_classes, test.num_classes)
    train = Dataset(train.features, train.labels, num_classes=classes)
    test = Dataset(test.features, test.labels, num_classes=classes)
    info.update(train_size=len(train), test_size=len(test),
                input_dim=train.input_dim, num_classes=classes)
    return train, test, info


@dataclass
class RobustnessReport:
    """Headline metrics plus the full JSON-ready payload in .data."""

    clean_accuracy: float
    category_count: int
    attack_generated_at_step: int
    aurac_conditional: float
    aurac_unconditional: float
    sanity_all_passed: bool
    match_auc: float
    data: dict
    out_dir: str | None = None
    files: dict = field(default_factory=dict)


def _snapshot_dict(snap) -> dict:
    return {
        "step": snap.step,
        "num_categories": snap.num_categories,
        "min_separation": snap.min_separation,
        "overlap_risk": snap.overlap_risk,
        "compactness_surrogate": snap.compactness_surrogate,
        "per_class_counts": {str(k): v
                             for k, v in sorted(snap.per_class_counts.items())},
    }


def evaluate_model(model, train: Dataset, test: Dataset,
                   config: ExperimentConfig, seeds: dict,
                   geometry_rows: list | None = None,
                   timings: dict | None = None,
                   model_meta: dict | None = None) -> RobustnessReport:
    """Attack a trained model and assemble the full robustness report.

    train is only used to fit the transfer surrogate; all attacked
    accuracies are measured on the clean-correct subset of test.
    """
    timings = dict(timings or {})
    t0 = time.perf_counter()
    surrogate = surrogate_train(train, SurrogateConfig(
        hidden=config.surrogate_hidden,
        learning_rate=config.surrogate_lr,
        epochs=config.surrogate_epochs,
        batch_size=config.surrogate_batch,
        seed=seeds["surrogate"]))
    timings["surrogate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    clean = clean_accuracy(model, test)
    subset: EvalSubset = eval_subset(model, test, config.subset_n,
                                     seeds["subset"])
    timings["subset"] = time.perf_counter() - t0

    grid = config.epsilon_grid
    base = AttackConfig(epsilon=max(grid), steps=config.steps,
                        step_size=config.step_size, temperature=config.tau,
                        seed=seeds["eval_attack"])
    noise_base = AttackConfig(epsilon=max(grid), steps=1,
                              temperature=config.tau, seed=seeds["noise"])

    t0 = time.perf_counter()
    curves = {}
    for kind in ATTACK_KINDS:
        cfg = noise_base if kind == "uniform_noise" else base
        curves[kind] = robust_curve(model, test, subset.indices, grid, kind,
                                    cfg, surrogate)
    timings["attack_curves"] = time.perf_counter() - t0

    curve_payload = {}
    for kind, cond in curves.items():
        uncond = clean * cond
        curve_payload[kind] = {
            "epsilon": list(grid),
            "conditional": cond.tolist(),
            "unconditional": uncond.tolist(),
            "attack_success": (1.0 - cond).tolist(),
            "aurac": aurac(grid, cond),
            "unconditional_aurac": aurac(grid, uncond),
        }

    t0 = time.perf_counter()
    sanity = sanity_checks_from_curves(grid, curves)
    match_cfg = AttackConfig(epsilon=config.match_epsilon, steps=config.steps,
                             temperature=config.tau,
                             seed=seeds["match_adv"])
    adv_for_match = pgd_wb_softmax_batch(
        model, test.features[subset.indices], test.labels[subset.indices],
        match_cfg, subset.indices)
    stats = match_score_stats(model, test.features[subset.indices],
                              adv_for_match)
    final_geometry = geometry_snapshot(model)
    timings["diagnostics"] = time.perf_counter() - t0

    wb = curve_payload["wb_softmax_pgd"]
    identity_err = max(
        max(abs(u - clean * c) for u, c in
            zip(payload["unconditional"], payload["conditional"]))
        for payload in curve_payload.values()
    )

    data = {
        "report_version": REPORT_VERSION,
        "config": config.to_mapping(),
        "seeds": seeds,
        "model": dict(model_meta or {},
                      categories=model.num_categories,
                      step=model.step,
                      alpha=model.params.alpha,
                      beta=model.params.beta,
                      rho_baseline=model.params.rho_baseline),
        "attack_generated_at_step": model.step,
        "clean_accuracy": clean,
        "subset": {
            "requested": subset.requested,
            "size": len(subset),
            "shortfall": subset.shortfall,
            "indices": subset.indices.tolist(),
        },
        "curves": curve_payload,
        "conditional_identity_max_error": identity_err,
        "sanity": {
            "fgsm_beats_noise": sanity.fgsm_beats_noise,
            "pgd_dominates_fgsm": sanity.pgd_dominates_fgsm,
            "whitebox_dominates_transfer": sanity.whitebox_dominates_transfer,
            "curve_non_increasing": sanity.curve_non_increasing,
            "all_passed": sanity.all_passed,
            "evidence": sanity.evidence,
        },
        "match_stats": {
            "epsilon": config.match_epsilon,
            "clean_mean": stats.clean_mean,
            "clean_std": stats.clean_std,
            "adv_mean": stats.adv_mean,
            "adv_std": stats.adv_std,
            "auc": stats.auc,
            "n_clean": stats.n_clean,
            "n_adv": stats.n_adv,
        },
        "geometry": {
            "final": _snapshot_dict(final_geometry),
            "series": geometry_rows or [],
        },
        "surrogate": {
            "kind": "mlp",
            "deviation": "stand-in for a convolutional surrogate",
            "hidden": config.surrogate_hidden,
            "epochs": config.surrogate_epochs,
            "learning_rate": config.surrogate_lr,
            "batch_size": config.surrogate_batch,
            "train_accuracy": surrogate.train_accuracy,
        },
        "timings": timings,
    }
    return RobustnessReport(
        clean_accuracy=clean,
        category_count=model.num_categories,
        attack_generated_at_step=model.step,
        aurac_conditional=wb["aurac"],
        aurac_unconditional=wb["unconditional_aurac"],
        sanity_all_passed=sanity.all_passed,
        match_auc=stats.auc,
        data=data,
    )


def _write_text(path: str, text: str, written: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    written.append(path)


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(header: str, rows) -> str:
    lines = [header]
    lines += [",".join(_csv_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_report_files(report: RobustnessReport, out_dir: str,
                       events_log=None, model=None) -> dict:
    """Write report.json, curve CSVs, geometry CSV, events, and the model.

    Returns a dict of logical name -> file path. Used by run_experiment;
    callers evaluating a pre-trained model can pass events_log/model as
    None to skip those files.
    """
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    files: dict = {}
    try:
        for kind, payload in report.data["curves"].items():
            rows = list(zip(payload["epsilon"], payload["conditional"],
                            payload["unconditional"]))
            path = os.path.join(out_dir, f"curve_{kind}.csv")
            _write_text(path,
                        _csv_text("epsilon,conditional_acc,unconditional_acc",
                                  rows), written)
            files[f"curve_{kind}"] = path
        geometry_path = os.path.join(out_dir, "geometry.csv")
        _write_text(
            geometry_path,
            _csv_text("step,num_categories,min_separation,overlap_risk,"
                      "compactness_surrogate",
                      report.data["geometry"]["series"]), written)
        files["geometry"] = geometry_path
        if events_log is not None:
            events_path = os.path.join(out_dir, "events.jsonl")
            events_log.to_jsonl(events_path)
            written.append(events_path)
            files["events"] = events_path
        if model is not None:
            model_path = os.path.join(out_dir, "model.npz")
            save_model(model, model_path,
                       metadata={"config": report.data["config"],
                                 "seeds": report.data["seeds"]})
            written.append(model_path)
            files["model"] = model_path
        report_path = os.path.join(out_dir, "report.json")
        _write_text(report_path,
                    json.dumps(report.data, sort_keys=True, indent=2) + "\n",
                    written)
        files["report"] = report_path
    except Exception:
        for path in written:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise
    report.files = files
    report.out_dir = out_dir
    return files


def run_experiment(config: ExperimentConfig) -> RobustnessReport:
    """Train under the configured protocol, attack the result, report.

    On failure, any partially written outputs are removed and the raised
    error names the stage that failed.
    """
    seeds = {
        "master": config.seed,
        "stream_shuffle": derive_seed(config.seed, "stream-shuffle"),
        "train": derive_seed(config.seed, "train"),
        "subset": derive_seed(config.seed, "subset"),
        "surrogate": derive_seed(config.seed, "surrogate"),
        "eval_attack": derive_seed(config.seed, "eval-attack"),
        "noise": derive_seed(config.seed, "noise"),
        "match_adv": derive_seed(config.seed, "match-adv"),
    }
    stage = "load-data"
    try:
        t0 = time.perf_counter()
        train, test, data_info = load_datasets(config)
        timings = {"load_data": time.perf_counter() - t0}

        stage = "train"
        t0 = time.perf_counter()
        rng = np.random.default_rng(seeds["stream_shuffle"])
        stream = train.subset(rng.permutation(len(train)))
        monitor = GeometryMonitor(stride=config.snapshot_stride)
        spec = config.protocol_spec(seeds["train"])
        model, log = train_protocol(stream, spec, config.artmap_params(),
                                    seed=seeds["train"],
                                    num_classes=train.num_classes,
                                    on_event=monitor.observe)
        monitor.finalize(model)
        timings["train"] = time.perf_counter() - t0

        stage = "evaluate"
        report = evaluate_model(
            model, stream, test, config, seeds,
            geometry_rows=monitor.rows(), timings=timings,
            model_meta={"protocol": spec.kind.value, "dataset": data_info})

        stage = "write-report"
        if config.out:
            write_report_files(report, config.out, events_log=log,
                               model=model)
        return report
    except Exception as exc:
        raise RuntimeError(f"experiment failed during {stage!r}: {exc}") from exc
