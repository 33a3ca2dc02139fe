"""Command-line workflow: synth, fit, sweep, detect, eval.

Every command takes explicit paths and seeds; nothing is read from the
environment. Errors go to stderr prefixed with ``error:`` and exit with
status 1 (argparse usage errors exit with 2).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autoenc import AeArchitecture, AeModel, TrainConfig, train
from .dataio import Dataset, Normalizer, concat, fit_normalizer, load_csv, save_csv
from .detect import (
    FirstPhaseDetector,
    detect,
    fit_second_phase,
    parse_second_phase,
    reconstruction_scores,
)
from .dimsweep import SweepConfig, sweep
from .errors import ConfigError, EvaluationError, FormatError, TwoPhaseError
from .metrics import confusion, roc_auc
from .numeric import derive_seed
from .pca import PcaModel, fit_pca
from .synth import (
    ANOMALY_KINDS,
    NonlinPoolParams,
    WaterTankParams,
    gen_nonlin_pool,
    gen_watertank,
    gen_watertank_anomalies,
)

FORMAT_VERSION = 1
SCORE_FIELDS = {"recon": ("recon_error", "anomaly1"),
                "second": ("second_score", "anomaly2"),
                "combined": ("combined_score", "anomaly")}


# --- model files -------------------------------------------------------------


def model_to_dict(kind: str, model, norm: Normalizer, columns, metadata: dict) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "columns": list(columns),
        "normalizer": {
            "mean": [repr(float(v)) for v in norm.mean],
            "scale": [repr(float(v)) for v in norm.scale],
        },
        "model": model.to_dict(),
        "metadata": metadata,
    }


def save_model(path, kind: str, model, norm: Normalizer, columns, metadata: dict) -> None:
    doc = model_to_dict(kind, model, norm, columns, metadata)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path):
    """Return ``(kind, model, normalizer, columns, metadata)`` from a model JSON file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported model format_version {doc.get('format_version')!r}"
        )
    kind = doc.get("kind")
    if kind == "pca":
        model = PcaModel.from_dict(doc["model"])
    elif kind == "ae":
        model = AeModel.from_dict(doc["model"])
    else:
        raise FormatError(f"{path}: unknown model kind {kind!r}")
    n = doc["normalizer"]
    norm = Normalizer(np.array([float(v) for v in n["mean"]]), np.array([float(v) for v in n["scale"]]))
    return kind, model, norm, tuple(doc["columns"]), doc.get("metadata", {})


# --- helpers -----------------------------------------------------------------


def _read(path, label_column: str | None) -> Dataset:
    """Load a CSV, stripping ``label_column`` if the file has it."""
    if label_column is not None:
        with open(path, newline="", encoding="utf-8") as fh:
            header = [h.strip() for h in next(csv.reader(fh), [])]
        if label_column not in header:
            label_column = None
    return load_csv(path, label_column)


def _check_columns(ds: Dataset, columns, what: str) -> None:
    if ds.m != len(columns):
        raise ConfigError(f"{what} has {ds.m} signal columns, model expects {len(columns)}")


def _load_train_config(path) -> tuple[dict, dict]:
    """Split an AE config JSON into (architecture options, TrainConfig kwargs)."""
    if path is None:
        return {}, {}
    cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    arch_keys = {"hidden", "activation"}
    train_keys = {"learning_rate", "batch_size", "max_epochs", "patience", "validation_fraction"}
    unknown = set(cfg) - arch_keys - train_keys
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return ({k: cfg[k] for k in arch_keys & set(cfg)}, {k: cfg[k] for k in train_keys & set(cfg)})


def _arch(m: int, p: int, opts: dict) -> AeArchitecture:
    if "hidden" not in opts:
        return AeArchitecture.default(m, p)
    return AeArchitecture.symmetric(m, p, tuple(opts["hidden"]), opts.get("activation", "tanh"))


# --- commands ----------------------------------------------------------------


def cmd_synth(args) -> None:
    if args.system == "watertank":
        params = WaterTankParams(args.a, args.h_min, args.h_max, args.noise, args.n, args.seed)
        _save_unlabelled(gen_watertank(params), args.out)
        anomalies = None
        if args.anomalies:
            kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
            anomalies = gen_watertank_anomalies(params, kinds, args.anomalies)
            out = args.anomaly_out or _sibling(args.out, "anomalies")
            save_csv(anomalies, out, args.label_column)
        if args.test_n:
            test = gen_watertank(
                WaterTankParams(args.a, args.h_min, args.h_max, args.noise, args.test_n,
                                derive_seed(args.seed, 1))
            )
            if anomalies is not None:
                test = concat(test, anomalies)
            save_csv(test, args.test_out or _sibling(args.out, "test"), args.label_column)
    else:
        ops = tuple(o.strip() for o in args.ops.split(",") if o.strip())
        params = NonlinPoolParams(args.latent_dim, args.obs_dim, ops, args.noise, args.n, args.seed)
        ds, manifest = gen_nonlin_pool(params)
        _save_unlabelled(ds, args.out)
        if args.manifest:
            manifest.dump(args.manifest)


def _save_unlabelled(ds: Dataset, path) -> None:
    save_csv(Dataset(ds.x, None, ds.column_names), path)


def _sibling(path, tag: str) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}_{tag}{p.suffix or '.csv'}")


def cmd_fit(args) -> None:
    ds = _read(args.data, args.label_column)
    norm = fit_normalizer(ds)
    x = norm.apply(ds.x)
    if args.method == "pca":
        model = fit_pca(x, args.p)
    else:
        arch_opts, train_kw = _load_train_config(args.config)
        model = train(x, _arch(ds.m, args.p, arch_opts), TrainConfig(seed=args.seed, **train_kw))
    train_mse = float(np.mean(reconstruction_scores(model, x)))
    metadata = {
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": args.seed,
        "data_fingerprint": ds.fingerprint(),
        "train_mse": repr(train_mse),
        "version": __version__,
    }
    save_model(args.out, args.method, model, norm, ds.column_names, metadata)
    print(f"fit {args.method} p={args.p} n={ds.n} m={ds.m} train_mse={train_mse!r}")


def cmd_sweep(args) -> None:
    ds = _read(args.data, args.label_column)
    pmax = args.pmax if args.pmax is not None else ds.m
    arch_opts, train_kw = _load_train_config(args.config)
    cfg = SweepConfig(
        train=TrainConfig(**train_kw),
        arch_rule=lambda m, p: _arch(m, p, arch_opts),
        seed=args.seed,
        n_jobs=args.jobs,
    )
    res = sweep(ds, args.method, range(args.pmin, pmax + 1), args.folds, cfg)
    res.write_json(args.out)
    res.write_csv(args.csv or Path(args.out).with_suffix(".csv"))
    flag = " (elbow fallback)" if res.used_fallback else ""
    print(f"sweep {args.method}: estimated_dim={res.estimated_dim}{flag}")


def cmd_detect(args) -> None:
    kind, model, norm, columns, _ = load_model(args.model)
    train_ds = _read(args.train, args.label_column)
    test_ds = _read(args.test, args.label_column)
    _check_columns(train_ds, columns, "training data")
    _check_columns(test_ds, columns, "test data")
    x_train = norm.apply(train_ds.x)
    first = FirstPhaseDetector.fit(model, x_train, args.quantile)
    second = None
    if args.second_phase:
        sp_kind, sp_params = parse_second_phase(args.second_phase)
        second = fit_second_phase(sp_kind, sp_params, model.encode(x_train), args.quantile,
                                  seed=args.seed)
    result = detect(first, second, norm.apply(test_ds.x))
    result.write_jsonl(args.out)
    print(
        f"detect {kind}: mse_threshold={first.mse_threshold!r} "
        f"flagged={int(result.anomaly.sum())}/{len(result)}"
    )


def _read_results(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError:
                    raise FormatError(f"{path}: line {i} is not valid JSON") from None
    return rows


def cmd_eval(args) -> None:
    rows = _read_results(args.results)
    score_key, flag_key = SCORE_FIELDS[args.score]
    if rows and score_key not in rows[0]:
        raise ConfigError(f"results have no {score_key!r}; was a second phase configured?")
    with open(args.labels, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    if args.label_column not in header:
        raise EvaluationError(f"{args.labels}: no label column {args.label_column!r}")
    labels = load_csv(args.labels, args.label_column).labels
    if len(labels) != len(rows):
        raise EvaluationError(f"{len(rows)} results but {len(labels)} labels")
    scores = np.array([float(r[score_key]) for r in rows])
    flags = np.array([bool(r[flag_key]) for r in rows])
    auc = roc_auc(scores, labels).auc
    report = confusion(flags, labels, auc)
    report.write_json(args.out)
    print(f"eval {args.score}: auc={report.auc:.6f} f1={report.f1:.6f}")


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twophase",
        description="Two-phase anomaly detection with PCA or autoencoder dimensionality reduction.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate synthetic datasets")
    ssub = sp.add_subparsers(dest="system", required=True)
    wt = ssub.add_parser("watertank", help="water tank q_o = a*sqrt(H) with noise")
    wt.add_argument("--n", type=int, default=10000)
    wt.add_argument("--seed", type=int, default=0)
    wt.add_argument("--out", required=True)
    wt.add_argument("--a", type=float, default=1.0)
    wt.add_argument("--h-min", type=float, default=1.0)
    wt.add_argument("--h-max", type=float, default=10.0)
    wt.add_argument("--noise", type=float, default=0.02)
    wt.add_argument("--anomalies", type=int, default=0, help="anomalies per kind")
    wt.add_argument("--kinds", default=",".join(ANOMALY_KINDS))
    wt.add_argument("--anomaly-out", help="default: <out>_anomalies.csv")
    wt.add_argument("--test-n", type=int, default=0, help="normal rows in a labelled test file")
    wt.add_argument("--test-out", help="default: <out>_test.csv")
    wt.add_argument("--label-column", default="label")
    nl = ssub.add_parser("nonlin", help="nonlinearity-pool data with known latent dimension")
    nl.add_argument("--n", type=int, default=2000)
    nl.add_argument("--seed", type=int, default=0)
    nl.add_argument("--out", required=True)
    nl.add_argument("--latent-dim", type=int, default=2)
    nl.add_argument("--obs-dim", type=int, default=6)
    nl.add_argument("--ops", default="cube,product",
                    help="comma list from product,cube,time_pair,linear_mix")
    nl.add_argument("--noise", type=float, default=0.01)
    nl.add_argument("--manifest", help="write the column formulas as JSON")
    sp.set_defaults(func=cmd_synth)

    fp = sub.add_parser("fit", help="fit normalizer and a PCA or autoencoder model")
    fp.add_argument("method", choices=["pca", "ae"])
    fp.add_argument("--data", required=True)
    fp.add_argument("--p", type=int, required=True)
    fp.add_argument("--config", help="AE JSON: hidden, activation, learning_rate, batch_size, "
                                     "max_epochs, patience, validation_fraction")
    fp.add_argument("--seed", type=int, default=0)
    fp.add_argument("--out", required=True)
    fp.add_argument("--label-column", default="label", help="dropped from the data if present")
    fp.set_defaults(func=cmd_fit)

    sw = sub.add_parser("sweep", help="cross-validated reconstruction error per latent size")
    sw.add_argument("--data", required=True)
    sw.add_argument("--method", choices=["pca", "ae"], required=True)
    sw.add_argument("--pmin", type=int, default=1)
    sw.add_argument("--pmax", type=int)
    sw.add_argument("--folds", type=int, default=5)
    sw.add_argument("--config")
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", required=True)
    sw.add_argument("--csv", help="default: <out>.csv")
    sw.add_argument("--label-column", default="label")
    sw.set_defaults(func=cmd_sweep)

    dp = sub.add_parser(
        "detect",
        help="calibrate thresholds on training data and flag test observations",
        description="Second phase grammar: kind[:key=value[,key=value]] with kind one of "
                    "knn (k, default 1), kmeans (k, default 9), hypercube.",
    )
    dp.add_argument("--model", required=True)
    dp.add_argument("--train", required=True)
    dp.add_argument("--test", required=True)
    dp.add_argument("--quantile", type=float, default=0.999)
    dp.add_argument("--second-phase", metavar="SPEC", help="e.g. knn:k=1, kmeans:k=9, hypercube")
    dp.add_argument("--seed", type=int, default=0, help="k-means initialization seed")
    dp.add_argument("--out", required=True)
    dp.add_argument("--label-column", default="label")
    dp.set_defaults(func=cmd_detect)

    ev = sub.add_parser("eval", help="AU-ROC and F1 of detection results")
    ev.add_argument("--results", required=True)
    ev.add_argument("--labels", required=True)
    ev.add_argument("--label-column", default="label")
    ev.add_argument("--score", choices=list(SCORE_FIELDS), default="recon")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (TwoPhaseError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
