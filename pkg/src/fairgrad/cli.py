"""Command-line interface: ``fairgrad synth | train | eval | cv``.

Exit codes: 0 success, 2 usage/config/data error, 3 I/O failure,
4 numeric failure (training diverged).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from fairgrad import __version__
from fairgrad.data import (
    CsvSchema,
    Dataset,
    Standardizer,
    SyntheticSpec,
    default_schema,
    gen_synthetic,
    load_csv,
    load_schema,
    standardize,
    write_csv,
)
from fairgrad.errors import ConfigError, ContractError, DataLoadError, TrainingError
from fairgrad.metrics import evaluate
from fairgrad.model import ModelParams, predict_proba
from fairgrad.trainer import METHODS, CVResult, TrainConfig, TrainLog, cross_validate

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
REPORT_SCHEMA = "report-v1"
MODEL_SCHEMA = "model-v1"
# fields excluded from determinism comparisons
VOLATILE_FIELDS = ("timestamp", "duration_seconds")

log = logging.getLogger("fairgrad")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _key_values(items, parse, flag):
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise UsageError(f"{flag} expects NAME=VALUE, got {item!r}")
        try:
            out[name] = parse(value)
        except ValueError:
            raise UsageError(f"{flag}: cannot parse value in {item!r}") from None
    return out


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FAIRGRAD_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FAIRGRAD_SEED must be an integer, got {env!r}") from None


def _add_training_flags(p):
    d = TrainConfig()
    p.add_argument("--eta", type=float, default=d.eta, help="learning rate")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=None, help="mini-batch size (default: full batch)")
    p.add_argument("--tau", type=float, default=d.tau, help="decision threshold")
    p.add_argument("--fairness-attr", action="append", default=None,
                   help="sensitive attribute to enforce (repeatable; default: all in schema)")
    p.add_argument("--weights", default=None,
                   help="comma-separated scalarization weights: primary, then one per fairness attribute")
    p.add_argument("--init", choices=("zeros", "gaussian"), default=d.init)
    p.add_argument("--init-sigma", type=float, default=d.init_sigma)
    p.add_argument("--seed", type=int, default=None, help="master seed (fallback: $FAIRGRAD_SEED, then 0)")


def _train_config(args) -> TrainConfig:
    weights = None
    if args.weights:
        try:
            weights = [float(w) for w in args.weights.split(",")]
        except ValueError:
            raise UsageError(f"--weights must be comma-separated numbers, got {args.weights!r}") from None
    cfg = TrainConfig(
        eta=args.eta,
        epochs=args.epochs,
        batch_size=args.batch_size,
        tau=args.tau,
        master_seed=_seed(args),
        fairness_attributes=args.fairness_attr,
        scalarization_weights=weights,
        init=args.init,
        init_sigma=args.init_sigma,
    )
    cfg.validate()
    return cfg


def _load(args) -> tuple[Dataset, CsvSchema]:
    schema = load_schema(args.schema)
    return load_csv(args.data, schema), schema


def json_schema(name: str) -> dict:
    """Load a shipped JSON schema, e.g. ``json_schema("report-v1")``."""
    return json.loads(resources.files("fairgrad").joinpath("schemas", f"{name}.json").read_text(encoding="utf-8"))


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# --- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n=args.n,
        d=args.d,
        group_prob=_key_values(args.group_prob, float, "--group-prob") or SyntheticSpec().group_prob,
        prevalence=args.prevalence,
        signal=args.signal,
        base_weights_seed=args.weights_seed,
        noise_mode=args.noise_mode,
    )
    noise = _key_values(args.noise, lambda v: tuple(float(x) for x in v.split(",")), "--noise")
    shift = _key_values(args.shift, float, "--shift")
    spec.label_noise = {a: noise.get(a, (0.0, 0.0)) for a in spec.group_prob}
    spec.shift = {a: shift.get(a, 0.0) for a in spec.group_prob}
    for name in list(noise) + list(shift):
        if name not in spec.group_prob:
            raise ConfigError(f"unknown attribute {name!r}; declare it with --group-prob")
    ds = gen_synthetic(spec, _seed(args))
    write_csv(ds, args.out)
    if args.schema_out:
        Path(args.schema_out).write_text(_schema_toml(default_schema(list(ds.sensitive))), encoding="utf-8")
    print(f"wrote {ds.n} rows x {ds.d} features to {args.out} (positive rate {ds.labels.mean():.4f})",
          file=sys.stderr)
    return EXIT_OK


def _schema_toml(schema: CsvSchema) -> str:
    lines = [f'label = "{schema.label}"', 'features = "rest"']
    for name, s in schema.sensitive.items():
        lines.append(f'sensitive.{name}.column = "{s.column}"')
        if s.group_a_value is not None:
            lines.append(f'sensitive.{name}.group_a_value = "{s.group_a_value}"')
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    ds, schema = _load(args)
    cfg = _train_config(args)
    if args.method == "scalarized" and cfg.scalarization_weights is None:
        raise ConfigError("method 'scalarized' needs --weights")
    train, st = standardize(ds)
    rec = TrainLog()
    params = METHODS[args.method](train, cfg, rec)
    model = {
        "schema_version": MODEL_SCHEMA,
        "tool_version": __version__,
        "method": args.method,
        "feature_names": ds.feature_names,
        "weights": params.weights.tolist(),
        "bias": params.bias,
        "standardizer": st.to_dict(),
        "tau": cfg.tau,
        "config": cfg.to_dict(),
        "skipped_fairness_steps": rec.skipped,
    }
    _write_json(model, args.model_out)
    return EXIT_OK


def load_model(path) -> tuple[ModelParams, Standardizer, dict]:
    try:
        model = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataLoadError(f"{path}: invalid model file: {exc}") from exc
    if model.get("schema_version") != MODEL_SCHEMA:
        raise DataLoadError(f"{path}: expected schema_version {MODEL_SCHEMA!r}")
    params = ModelParams(np.asarray(model["weights"], dtype=float), model["bias"])
    return params, Standardizer.from_dict(model["standardizer"]), model


def cmd_eval(args) -> int:
    params, st, model = load_model(args.model_in)
    ds, _ = _load(args)
    if ds.feature_names != model["feature_names"]:
        raise ConfigError(
            f"feature mismatch: model has {model['feature_names']}, data has {ds.feature_names}"
        )
    tau = model["tau"] if args.tau is None else args.tau
    probs = predict_proba(params, st.apply(ds.features))
    report = evaluate(probs, ds.labels, ds.sensitive, tau)
    if report.auc is None:
        warnings.warn("AUC undefined: evaluation data contains a single class")
    _write_json({"schema_version": "metrics-v1", "n": ds.n, "tau": tau, "metrics": report.to_dict()}, args.out)
    return EXIT_OK


def build_report(cv: CVResult, cfg: TrainConfig, schema: CsvSchema, data_path, ds: Dataset,
                 duration: float) -> dict:
    return {
        "schema_version": REPORT_SCHEMA,
        "tool_version": __version__,
        "master_seed": cfg.master_seed,
        "config": cfg.to_dict(),
        "data": {"path": str(data_path), "schema": schema.to_mapping(), "n": ds.n, "d": ds.d},
        **cv.to_dict(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "duration_seconds": duration,
    }


def _fmt(v) -> str:
    return "    n/a" if v is None else f"{v:7.4f}"


def summary_table(cv: CVResult) -> str:
    cols = ["AUC", "Sens.", "Spec."] + [f"EOD:{a}" for a in cv.attributes] + ["P-F"]
    keys = ["auc", "sensitivity", "specificity"] + [f"eod:{a}" for a in cv.attributes] + ["pf_score"]
    width = max(12, *(len(m) for m in cv.methods))
    head = f"{'method':<{width}}" + "".join(f" {c:>11}" for c in cols)
    lines = [head, "-" * len(head)]
    for m in cv.methods:
        mean = cv.summary[m].mean
        lines.append(f"{m:<{width}}" + "".join(f" {_fmt(mean[k]):>11}" for k in keys))
    return "\n".join(lines)


def cmd_cv(args) -> int:
    methods = args.method or ["vanilla", "fairgrad"]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown method(s) {unknown}; valid methods: {', '.join(sorted(METHODS))}")
    ds, schema = _load(args)
    cfg = _train_config(args)
    if "scalarized" in methods and cfg.scalarization_weights is None:
        raise ConfigError("method 'scalarized' needs --weights")
    start = time.perf_counter()
    cv = cross_validate(ds, cfg, k=args.k, methods=methods, n_jobs=args.jobs)
    report = build_report(cv, cfg, schema, args.data, ds, time.perf_counter() - start)
    _write_json(report, args.out)
    print(summary_table(cv))
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairgrad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairgrad {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = SyntheticSpec()
    p = sub.add_parser("synth", help="generate a biased synthetic dataset")
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--d", type=int, default=d.d)
    p.add_argument("--group-prob", action="append", metavar="ATTR=P",
                   help="share of group b for an attribute (repeatable; default race=0.17, sex=0.4)")
    p.add_argument("--noise", action="append", metavar="ATTR=A,B", help="label flip rates for groups a and b")
    p.add_argument("--shift", action="append", metavar="ATTR=S", help="feature shift for group b")
    p.add_argument("--noise-mode", choices=("under", "symmetric"), default=d.noise_mode,
                   help="flip positives only (under-recording) or either class")
    p.add_argument("--prevalence", type=float, default=d.prevalence)
    p.add_argument("--signal", type=float, default=d.signal)
    p.add_argument("--weights-seed", type=int, default=None, help="seed for the ground-truth weights")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out", default=None, help="also write a matching schema TOML")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit one model on a full dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--method", choices=sorted(METHODS), default="fairgrad")
    p.add_argument("--model-out", required=True)
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--model-in", required=True)
    p.add_argument("--tau", type=float, default=None, help="override the model's threshold")
    p.add_argument("--out", default=None, help="metrics JSON path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--method", action="append", default=None,
                   help=f"method to run (repeatable): {', '.join(sorted(METHODS))}")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1, help="folds trained concurrently")
    p.add_argument("--out", required=True, help="report JSON path")
    _add_training_flags(p)
    p.set_defaults(func=cmd_cv)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"fairgrad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DataLoadError, ContractError) as exc:
        print(f"fairgrad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"fairgrad: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"fairgrad: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
