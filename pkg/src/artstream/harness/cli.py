"""Command-line interface: train, attack, eval, diagnose, report.

Every experiment-config key doubles as a flag (underscores become
dashes), and flags override config-file values. List-valued keys take
comma-separated numbers, e.g. --epsilon-grid 0.05,0.1,0.2.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from ..attack import AttackConfig, SurrogateConfig, surrogate_train
from ..core import clean_accuracy
from ..diagnostics import (GeometryMonitor, geometry_snapshot,
                           match_score_stats, prop1_witness_search)
from ..protocols import TrainEventLog, train_protocol
from ..seeds import derive_seed
from .evaluation import ATTACK_KINDS, eval_subset, robust_curve
from .model_io import load_model, save_model
from .runner import (ExperimentConfig, evaluate_model, load_datasets,
                     write_report_files)

__all__ = ["main"]

_LIST_KEYS = {"stage1", "stage2", "epsilon_grid"}
_INT_KEYS = {"synth_d", "synth_classes", "synth_train_n", "synth_test_n",
             "synth_seed", "steps", "subset_n", "seed", "surrogate_hidden",
             "surrogate_epochs", "surrogate_batch", "num_classes",
             "snapshot_stride"}
_FLOAT_KEYS = {"synth_margin", "rho", "alpha", "beta",
               "match_tracking_delta", "train_epsilon", "tau", "step_size",
               "theta", "match_epsilon", "surrogate_lr"}


def _coerce(key: str, raw: str):
    if key in _LIST_KEYS:
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", help="flat key-value config file")
    for name in ExperimentConfig.field_names():
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name,
                            metavar="V", default=None)


def _build_config(args) -> ExperimentConfig:
    mapping: dict = {}
    if args.config:
        from .configfile import parse_flat
        with open(args.config, "r", encoding="utf-8") as fh:
            mapping = parse_flat(fh.read(), args.config)
    for name in ExperimentConfig.field_names():
        raw = getattr(args, name, None)
        if raw is not None:
            mapping[name] = _coerce(name, raw) if isinstance(raw, str) else raw
    return ExperimentConfig.from_mapping(mapping)


def _eval_seeds(config: ExperimentConfig) -> dict:
    return {
        "master": config.seed,
        "stream_shuffle": derive_seed(config.seed, "stream-shuffle"),
        "train": derive_seed(config.seed, "train"),
        "subset": derive_seed(config.seed, "subset"),
        "surrogate": derive_seed(config.seed, "surrogate"),
        "eval_attack": derive_seed(config.seed, "eval-attack"),
        "noise": derive_seed(config.seed, "noise"),
        "match_adv": derive_seed(config.seed, "match-adv"),
    }


def _cmd_train(args) -> int:
    config = _build_config(args)
    if not config.out:
        print("train: --out is required", file=sys.stderr)
        return 2
    seeds = _eval_seeds(config)
    train, test, info = load_datasets(config)
    rng = np.random.default_rng(seeds["stream_shuffle"])
    stream = train.subset(rng.permutation(len(train)))
    monitor = GeometryMonitor(stride=config.snapshot_stride)
    spec = config.protocol_spec(seeds["train"])
    t0 = time.perf_counter()
    model, log = train_protocol(stream, spec, config.artmap_params(),
                                seed=seeds["train"],
                                num_classes=train.num_classes,
                                on_event=monitor.observe)
    train_secs = time.perf_counter() - t0
    monitor.finalize(model)

    os.makedirs(config.out, exist_ok=True)
    model_path = os.path.join(config.out, "model.npz")
    save_model(model, model_path, metadata={
        "config": config.to_mapping(),
        "seeds": seeds,
        "protocol": spec.kind.value,
        "dataset": info,
        "train_seconds": train_secs,
    })
    log.to_jsonl(os.path.join(config.out, "events.jsonl"))
    rows = monitor.rows()
    with open(os.path.join(config.out, "geometry.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("step,num_categories,min_separation,overlap_risk,"
                 "compactness_surrogate\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    acc = clean_accuracy(model, test)
    print(f"protocol: {spec.kind.value}")
    print(f"categories: {model.num_categories}")
    print(f"presentations: {model.step}")
    print(f"clean test accuracy: {acc:.4f}")
    print(f"train seconds: {train_secs:.2f}")
    print(f"model: {model_path}")
    return 0


def _cmd_eval(args) -> int:
    config = _build_config(args)
    model, meta = load_model(args.model)
    train, test, _ = load_datasets(config)
    report = evaluate_model(model, train, test, config,
                            _eval_seeds(config),
                            model_meta={"loaded_from": args.model,
                                        "training": meta})
    if config.out:
        write_report_files(report, config.out)
        print(f"report: {report.files['report']}")
    wb = report.data["curves"]["wb_softmax_pgd"]
    print(f"clean accuracy: {report.clean_accuracy:.4f}")
    print(f"categories: {report.category_count}")
    for eps, acc in zip(wb["epsilon"], wb["conditional"]):
        print(f"eps={eps:.2f} conditional_acc={acc:.4f}")
    print(f"aurac: {report.aurac_conditional:.4f}")
    print(f"unconditional aurac: {report.aurac_unconditional:.4f}")
    print(f"match auc: {report.match_auc:.4f}")
    print(f"sanity all passed: {report.sanity_all_passed}")
    return 0


def _cmd_attack(args) -> int:
    config = _build_config(args)
    model, _ = load_model(args.model)
    train, test, _ = load_datasets(config)
    seeds = _eval_seeds(config)
    subset = eval_subset(model, test, config.subset_n, seeds["subset"])
    surrogate = None
    if args.attack == "transfer_pgd":
        surrogate = surrogate_train(train, SurrogateConfig(
            hidden=config.surrogate_hidden,
            learning_rate=config.surrogate_lr,
            epochs=config.surrogate_epochs,
            batch_size=config.surrogate_batch,
            seed=seeds["surrogate"]))
    base = AttackConfig(epsilon=max(config.epsilon_grid), steps=config.steps,
                        step_size=config.step_size, temperature=config.tau,
                        seed=seeds["eval_attack"]
                        if args.attack != "uniform_noise"
                        else seeds["noise"])
    accs = robust_curve(model, test, subset.indices, config.epsilon_grid,
                        args.attack, base, surrogate)
    print(f"attack: {args.attack} (subset {len(subset)}, "
          f"shortfall {subset.shortfall})")
    print("epsilon,conditional_acc,attack_success")
    lines = []
    for eps, acc in zip(config.epsilon_grid, accs):
        eps, acc = float(eps), float(acc)
        line = f"{eps!r},{acc!r},{1.0 - acc!r}"
        lines.append(line)
        print(line)
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        path = os.path.join(config.out, f"attack_{args.attack}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epsilon,conditional_acc,attack_success\n")
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {path}")
    return 0


def _cmd_diagnose(args) -> int:
    config = _build_config(args)
    failures = 0
    if not args.model and not args.event_log:
        print("diagnose: need --model and/or --event-log", file=sys.stderr)
        return 2
    if args.model:
        model, _ = load_model(args.model)
        snap = geometry_snapshot(model)
        print(f"categories: {snap.num_categories}")
        print(f"overlap risk: {snap.overlap_risk:.6f}")
        print(f"min separation: {snap.min_separation:.6f}")
        print(f"compactness surrogate: {snap.compactness_surrogate:.6f}")
        if args.with_dataset:
            _, test, _ = load_datasets(config)
            seeds = _eval_seeds(config)
            subset = eval_subset(model, test, config.subset_n,
                                 seeds["subset"])
            from ..attack import pgd_wb_softmax_batch
            cfg = AttackConfig(epsilon=config.match_epsilon,
                               steps=config.steps, temperature=config.tau,
                               seed=seeds["match_adv"])
            adv = pgd_wb_softmax_batch(model, test.features[subset.indices],
                                       test.labels[subset.indices], cfg,
                                       subset.indices)
            stats = match_score_stats(model, test.features[subset.indices],
                                      adv)
            print(f"match clean mean: {stats.clean_mean:.6f}")
            print(f"match adv mean: {stats.adv_mean:.6f}")
            print(f"match detector auc: {stats.auc:.6f}")
            witness = prop1_witness_search(model, test.features, test.labels)
            if witness is None:
                print("match inversion witness: none found")
            else:
                print("match inversion witness: "
                      f"wrong idx {witness.misclassified_index} "
                      f"(match {witness.misclassified_match:.6f}) vs "
                      f"correct idx {witness.correct_index} "
                      f"(match {witness.correct_match:.6f})")
    if args.event_log:
        log = TrainEventLog.from_jsonl(args.event_log)
        no_replay = log.verify_no_replay()
        selective = log.verify_selective_updates()
        violations = log.match_preservation_violations()
        print(f"event records: {len(log)}")
        print(f"no-replay check: {'PASS' if no_replay else 'FAIL'}")
        # holds only for protocols that gate updates on misclassification
        print("selective gating pattern: "
              f"{'consistent' if selective else 'not followed'}")
        print(f"match-preservation violations: {len(violations)}")
        if not no_replay or violations:
            failures += 1
    return 1 if failures else 0


def _cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        wb = data["curves"]["wb_softmax_pgd"]
        grid = wb["epsilon"]
        idx = min(range(len(grid)), key=lambda i: abs(grid[i] - args.epsilon))
        rows.append({
            "method": data["model"].get("protocol",
                                        data["config"].get("protocol", "?")),
            "clean": data["clean_accuracy"],
            f"adv@{grid[idx]}": wb["conditional"][idx],
            "aurac": wb["aurac"],
            "uncond_aurac": wb["unconditional_aurac"],
            "categories": data["model"]["categories"],
            "match_auc": data["match_stats"]["auc"],
            "source": path,
        })
    if not rows:
        print("report: no inputs", file=sys.stderr)
        return 2
    headers = [h for h in rows[0] if h != "source"]
    widths = {h: max(len(h), *(len(f"{r[h]:.4f}" if isinstance(r[h], float)
                                   else str(r[h])) for r in rows))
              for h in headers}
    print("  ".join(h.ljust(widths[h]) for h in headers))
    for r in rows:
        print("  ".join(
            (f"{r[h]:.4f}" if isinstance(r[h], float) else str(r[h]))
            .ljust(widths[h]) for h in headers))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(",".join(headers) + "\n")
            for r in rows:
                fh.write(",".join(repr(r[h]) if isinstance(r[h], float)
                                  else str(r[h]) for h in headers) + "\n")
        print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="artstream",
        description="Streaming category classifier with an adversarial "
                    "robustness toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model under a protocol")
    _add_config_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="full robustness report for a model")
    p_eval.add_argument("--model", required=True)
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_attack = sub.add_parser("attack", help="one attack curve for a model")
    p_attack.add_argument("--model", required=True)
    p_attack.add_argument("--attack", default="wb_softmax_pgd",
                          choices=ATTACK_KINDS)
    _add_config_flags(p_attack)
    p_attack.set_defaults(func=_cmd_attack)

    p_diag = sub.add_parser("diagnose",
                            help="geometry, match stats, event-log audits")
    p_diag.add_argument("--model")
    p_diag.add_argument("--event-log", dest="event_log")
    p_diag.add_argument("--with-dataset", dest="with_dataset",
                        action="store_true",
                        help="also compute match stats on the configured "
                             "dataset")
    _add_config_flags(p_diag)
    p_diag.set_defaults(func=_cmd_diagnose)

    p_report = sub.add_parser("report",
                              help="tabulate one or more report.json files")
    p_report.add_argument("inputs", nargs="+")
    p_report.add_argument("--epsilon", type=float, default=0.3)
    p_report.add_argument("--out")
    p_report.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
