"""Command-line entry point: ``fairshap {audit,weights,explain,metrics}``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import re
import sys

import numpy as np

from . import __version__
from .audit import (
    EPS_DI,
    EPS_EOP,
    ExplainerSettings,
    build_report,
    compare,
    dependence_table,
    importance_summary,
    prepare_data,
    report_json,
    run_audit,
    summary_table,
    write_dependence_csv,
    write_summary_csv,
)
from .data import DatasetConfig, StandardizationParams, apply_standardizer, prepare
from .errors import AuditError, ConfigError, DataError, MetricError
from .fairness import DEFAULT_K, disparate_impact, equal_opportunity, fairness_report
from .models import ClassifierSpec, load_model, save_model
from .reweigh import compute_weights, weighted_favorable_rates
from .shapley import ExplainerConfig, explain_batch, select_background, write_explanations_csv

logger = logging.getLogger("fairshap")

DEFAULT_SEED = 42
EXIT_IO = 9

EXIT_CODES = """exit codes:
  0  success
  1  unexpected internal error
  2  invalid command-line usage
  3  configuration error (missing/invalid config file or flag value)
  4  data error (missing CSV, ragged rows, unmappable values, split too small)
  5  reweighing error (an (A, Y) cell is empty)
  6  model error (training failure, malformed or mismatched model file)
  7  explanation error (e.g. exact method above the feature threshold)
  8  metric error (a fairness measure is undefined, e.g. an empty group)
  9  output error (cannot write to the output directory)
"""


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", name)


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_json(doc))


def _load_config(args) -> DatasetConfig:
    cfg = DatasetConfig.from_json(args.config)
    return DatasetConfig.from_dict({**cfg.to_dict(), "seed": args.seed})


def _settings(args, seed, base: dict | None = None) -> ExplainerSettings:
    base = dict(base or {})
    for key, flag in (
        ("background_size", "background"),
        ("permutations", "permutations"),
        ("exact_threshold", "exact_threshold"),
        ("method", "method"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    base["seed"] = seed
    try:
        return ExplainerSettings(**base)
    except TypeError as exc:
        raise ConfigError(f"bad explainer settings: {exc}") from None


def _prepare_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise _OutputError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise _OutputError(f"output directory {path} is not writable")


class _OutputError(AuditError):
    exit_code = EXIT_IO


def _write_predictions(path, run):
    test = run.test
    names = list(test.feature_names)
    header = ["row", "label", "sensitive", "probability", "prediction"] + [
        ("sensitive_feature:" if j == test.sensitive_index else "feature:") + n
        for j, n in enumerate(names)
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(test.n_rows):
            writer.writerow(
                [i, int(test.target[i]), int(test.sensitive[i]), repr(float(run.probabilities[i])), int(run.predictions[i])]
                + [repr(float(v)) for v in test.features[i]]
            )


def _write_run(out, name, run, dependence, color):
    d = os.path.join(out, name)
    os.makedirs(d, exist_ok=True)
    prepared = run.prepared
    pipeline = {
        **run.metadata,
        "reweighed": run.reweighed,
        "feature_names": list(prepared.test.feature_names),
        "sensitive_index": prepared.test.sensitive_index,
        "standardizer": prepared.standardizer.to_dict(),
    }
    save_model(run.model, os.path.join(d, "model.json"), pipeline)
    _write_predictions(os.path.join(d, "predictions.csv"), run)
    names = prepared.test.feature_names
    write_explanations_csv(os.path.join(d, "explanations.csv"), run.explanations, names)
    raw = prepared.test_raw.features
    write_summary_csv(os.path.join(d, "summary.csv"), summary_table(run.explanations, raw, names))
    for feat in dependence or [run.sensitive_name]:
        table = dependence_table(run.explanations, raw, names, feat, color)
        write_dependence_csv(os.path.join(d, f"dependence_{_safe_name(feat)}.csv"), table, feat, color)


def cmd_audit(args) -> int:
    config = _load_config(args)
    spec = ClassifierSpec(args.model, seed=args.seed)
    settings = _settings(args, args.seed)
    prepared = prepare_data(config)
    names = prepared.test.feature_names
    for feat in [*(args.dependence or []), *([args.color] if args.color else [])]:
        if feat not in names:
            raise ConfigError(f"unknown feature {feat!r} for dependence data")
    kwargs = dict(explainer_settings=settings, k=args.k, include_self=not args.exclude_self, prepared=prepared)
    baseline = reweighed = comparison = None
    if args.reweigh in ("off", "both"):
        baseline = run_audit(config, spec, with_reweigh=False, **kwargs)
    if args.reweigh in ("on", "both"):
        reweighed = run_audit(config, spec, with_reweigh=True, **kwargs)
    if baseline is not None and reweighed is not None:
        comparison = compare(baseline, reweighed, args.eps_di, args.eps_eop)
    doc = build_report(baseline, reweighed, comparison)
    # nothing is written until every stage has succeeded
    _prepare_out(args.out)
    _write_json(os.path.join(args.out, "audit_report.json"), doc)
    for name, run in (("baseline", baseline), ("reweighed", reweighed)):
        if run is not None:
            _write_run(args.out, name, run, args.dependence, args.color)
    if comparison is not None:
        print(f"scenario: {comparison.scenario.label}", file=sys.stderr)
    print(f"wrote {os.path.join(args.out, 'audit_report.json')}", file=sys.stderr)
    return 0


def cmd_weights(args) -> int:
    config = _load_config(args)
    if args.on == "all":
        dataset = prepare(config)
    else:
        dataset = prepare_data(config).train_raw
    weights = compute_weights(dataset)
    w = weights.per_row
    rates = weighted_favorable_rates(dataset.with_weights(w))
    doc = {
        **weights.to_dict(),
        "rows": int(dataset.n_rows),
        "computed_on": args.on,
        "sum": float(w.sum()),
        "mean": float(w.mean()),
        "min": float(w.min()),
        "max": float(w.max()),
        "weighted_favorable_rate": {"unprivileged": rates[0], "privileged": rates[1]},
    }
    sys.stdout.write(report_json(doc))
    return 0


def cmd_explain(args) -> int:
    model, pipeline = load_model(args.model_file)
    if not pipeline:
        raise ConfigError("model file carries no pipeline context; save it with `fairshap audit`")
    seed = args.seed if args.seed_given else pipeline.get("explainer", {}).get("seed", DEFAULT_SEED)
    data_seed = pipeline["dataset"]["seed"] if not args.seed_given else args.seed
    cfg = DatasetConfig.from_json(args.config)
    cfg = DatasetConfig.from_dict({**cfg.to_dict(), "seed": data_seed})
    prepared = prepare_data(cfg)
    names = list(prepared.test.feature_names)
    if names != pipeline.get("feature_names"):
        raise DataError("dataset features do not match the features the model was trained on")
    stored = StandardizationParams.from_dict(pipeline["standardizer"])
    if not (np.array_equal(stored.means, prepared.standardizer.means) and np.array_equal(stored.std_devs, prepared.standardizer.std_devs)):
        raise DataError("dataset split does not reproduce the model's standardization; check --seed")
    settings = _settings(args, seed, pipeline.get("explainer"))
    test = apply_standardizer(stored, prepared.test_raw)
    background = select_background(apply_standardizer(stored, prepared.train_raw).features, settings.background_size, settings.seed)
    config = ExplainerConfig(background, settings.exact_threshold, settings.permutations, settings.seed)
    explanations = explain_batch(model, test.features, config, settings.method)
    importance = importance_summary(explanations, test.sensitive, names)
    _prepare_out(args.out)
    write_explanations_csv(os.path.join(args.out, "explanations.csv"), explanations, names)
    write_summary_csv(os.path.join(args.out, "summary.csv"), summary_table(explanations, prepared.test_raw.features, names))
    _write_json(os.path.join(args.out, "importance.json"), importance.to_dict(test.sensitive_name))
    print(f"explained {len(explanations)} rows into {args.out}", file=sys.stderr)
    return 0


def _read_predictions(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataError(f"predictions file not found: {path}") from None
    if not rows:
        raise DataError(f"{path} is empty")
    header = rows[0]
    for col in ("label", "sensitive", "prediction"):
        if col not in header:
            raise DataError(f"{path} lacks a {col!r} column")
    body = rows[1:]
    col = {name: j for j, name in enumerate(header)}
    try:
        labels = np.array([int(r[col["label"]]) for r in body])
        sensitive = np.array([int(r[col["sensitive"]]) for r in body])
        preds = np.array([int(r[col["prediction"]]) for r in body])
        feat_cols = [j for j, n in enumerate(header) if n.startswith(("feature:", "sensitive_feature:"))]
        features = np.array([[float(r[j]) for j in feat_cols] for r in body]).reshape(len(body), len(feat_cols))
    except (ValueError, IndexError) as exc:
        raise DataError(f"malformed predictions file {path}: {exc}") from None
    sens_idx = [k for k, j in enumerate(feat_cols) if header[j].startswith("sensitive_feature:")]
    return labels, sensitive, preds, features, (sens_idx[0] if sens_idx else None)


def cmd_metrics(args) -> int:
    labels, sensitive, preds, features, sens_idx = _read_predictions(args.predictions)
    if features.shape[1] == 0:
        di = disparate_impact(preds, sensitive)
        doc = {
            "disparate_impact": di if math.isfinite(di) else None,
            "equal_opportunity": equal_opportunity(preds, labels, sensitive),
            "consistency": None,
        }
    else:
        if sens_idx is None:
            raise MetricError("predictions file does not mark the sensitive feature column")
        report = fairness_report(preds, labels, sensitive, features, sens_idx, args.k, not args.exclude_self)
        doc = report.to_dict()
    sys.stdout.write(report_json(doc))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairshap",
        description="Audit classifier fairness with and without reweighing, using Shapley feature attributions.",
        epilog=EXIT_CODES,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="dataset config JSON")
        p.add_argument("--seed", type=int, default=None, help=f"seed for every random choice (default {DEFAULT_SEED})")

    def explainer_flags(p):
        p.add_argument("--background", type=int, default=None, help="background rows drawn from the training split (default 100)")
        p.add_argument("--permutations", type=int, default=None, help="sampled permutations per row (default 200)")
        p.add_argument("--exact-threshold", type=int, default=None, help="largest feature count explained exactly (default 15)")
        p.add_argument("--method", choices=["auto", "exact", "sampled"], default=None)

    p = sub.add_parser("audit", help="run the baseline and/or reweighed path and write the report",
                       epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--model", choices=["lr", "rf", "gbm"], default="lr")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--reweigh", choices=["on", "off", "both"], default="both")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="neighbours for consistency (default 5)")
    p.add_argument("--exclude-self", action="store_true", help="leave the query row out of its own neighbourhood")
    explainer_flags(p)
    p.add_argument("--dependence", action="append", metavar="FEATURE", help="write dependence data for FEATURE (repeatable; default: the sensitive feature)")
    p.add_argument("--color", metavar="FEATURE", help="colouring feature for dependence data")
    p.add_argument("--eps-di", type=float, default=EPS_DI)
    p.add_argument("--eps-eop", type=float, default=EPS_EOP)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("weights", help="print reweighing cell weights as JSON",
                       epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--on", choices=["train", "all"], default="train", help="rows the weights are computed on")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("explain", help="Shapley values for a saved model over the test split",
                       epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--model-file", required=True, help="model.json written by `audit`")
    p.add_argument("--out", required=True)
    explainer_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("metrics", help="fairness measures for a saved predictions CSV",
                       epilog=EXIT_CODES, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p, config=False)
    p.add_argument("--predictions", required=True, help="predictions.csv written by `audit`")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--exclude-self", action="store_true")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = DEFAULT_SEED
    try:
        return args.func(args)
    except AuditError as exc:
        print(f"fairshap {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fairshap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
