"""Command-line entry point: ``morphoclass <command> ...``.

Pipeline settings come from an optional JSON file (``--config``) whose keys
are PipelineConfig fields; explicit flags override it. The default seed can
be set with the MORPHOCLASS_SEED environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import artifact
from .alignment import fgpa
from .errors import MorphoError
from .geometry import AlignmentState, ShapeSample, drop_landmarks
from .invariant import (
    DEFAULT_BOOTSTRAP,
    DEFAULT_CONFIDENCE,
    classical_mds,
    edma_distance_matrix,
    edma_global_test,
    edma_local_test,
    ratios,
)
from .pipeline import (
    PipelineConfig,
    build_reference,
    classify_new,
    loo_features,
    loo_in_sample,
    loo_out_of_sample,
    pca_shape,
    stratified_evaluation,
)
from .simgen import ScenarioSpec, load_mean_shapes, run_study
from .tpsio import atomic_write, read_tps, records_to_sample

SEED_ENV = "MORPHOCLASS_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: {SEED_ENV}={raw!r} is not an integer") from None


class _Formatter:
    def __init__(self, decimals: int | None):
        self.decimals = decimals

    def __call__(self, value) -> str:
        if isinstance(value, (bool, np.bool_)):
            return str(bool(value)).lower()
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            v = float(value)
            if math.isnan(v):
                return "NA"
            if self.decimals is None:
                return f"{v:.6g}"
            return f"{v:.{self.decimals}f}"
        return str(value)


def _write_csv(path, header, rows, fmt: _Formatter):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        atomic_write(path, buf.getvalue())


def _parse_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _read_labels(path):
    """``id,label[,covariate...]`` CSV -> (labels by id, covariates by id)."""
    if path is None:
        return {}, {}
    labels, covs = {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames:
            raise MorphoError(f"{path}: label file needs an 'id' column")
        for row in reader:
            ident = row.pop("id")
            lab = row.pop("label", None)
            if lab not in (None, ""):
                labels[ident] = lab
            covs[ident] = {k: _parse_value(v) for k, v in row.items() if v not in (None, "")}
    return labels, covs


def _load_sample(tps_path, labels_path=None) -> ShapeSample:
    labels, covs = _read_labels(labels_path)
    sample = records_to_sample(read_tps(tps_path), labels, covs)
    if labels_path is not None:
        missing = [c.id for c in sample if c.label is None]
        if missing:
            raise MorphoError(f"no label for specimens {missing[:5]}")
    return sample


def _parse_indices(text: str) -> tuple[int, ...]:
    text = text.strip()
    if text.lower() in ("", "none"):
        return ()
    return tuple(int(t) for t in text.split(","))


def _config_from(args) -> PipelineConfig:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise MorphoError("config file must contain a JSON object")
    overrides = {
        "size_correction": args.size_correction,
        "reference_target": args.target,
        "classifier": args.classifier,
        "k": args.k,
        "k_candidates": args.k_candidates and _parse_indices(args.k_candidates),
        "removed_landmarks": None if args.drop is None else _parse_indices(args.drop),
        "positive_class": args.positive,
    }
    data.update({key: v for key, v in overrides.items() if v is not None})
    data["seed"] = args.seed if args.seed is not None else data.get("seed", _default_seed())
    return PipelineConfig.from_dict(data)


def _add_pipeline_flags(p):
    p.add_argument("--config", help="JSON file of pipeline settings (flags override it)")
    p.add_argument("--size-correction", dest="size_correction", default=None,
                   action=argparse.BooleanOptionalAction, help="allometric size correction")
    p.add_argument("--target", choices=["mean", "median", "functional-median"], default=None)
    p.add_argument("--classifier", choices=["lda", "lr", "knn"], default=None)
    p.add_argument("--k", type=int, default=None, help="fixed k for kNN")
    p.add_argument("--k-candidates", default=None, help="comma list for in-sample k selection")
    p.add_argument("--drop", default=None,
                   help="1-based landmarks to remove, e.g. 2,3 (default 2,3; 'none' keeps all)")
    p.add_argument("--positive", default=None, help="positive class label")


def _metric_row(m):
    return [m.accuracy, m.sensitivity, m.specificity, m.tp, m.fn, m.tn, m.fp]


METRIC_HEADER = ["Acc", "Sens", "Spec", "TP", "FN", "TN", "FP"]


def cmd_align(args, fmt):
    sample = _load_sample(args.tps, args.labels)
    sample = drop_landmarks(sample, _parse_indices(args.drop or "none"))
    aligned = fgpa(sample).aligned
    k = aligned.template_size
    header = ["id", "label"] + [f"{a}{i}" for i in range(1, k + 1) for a in ("x", "y")]
    rows = ([c.id, c.label or ""] + list(c.flatten()) for c in aligned)
    _write_csv(args.output, header, rows, _Formatter(None) if args.decimals is None else fmt)
    return 0


def cmd_train(args, fmt):
    config = _config_from(args)
    ref = build_reference(_load_sample(args.tps, args.labels), config)
    if ref.classifier.kind.value == "knn":
        print(f"warning: {artifact.KNN_PRIVACY_WARNING}", file=sys.stderr)
    artifact.save_artifact(ref, args.output)
    return 0


def cmd_classify(args, fmt):
    ref = artifact.load_artifact(args.model)
    sample = records_to_sample(read_tps(args.tps))
    rows = []
    for c in sample:
        out = classify_new(ref, c)
        rows.append([c.id, out.label, out.score, out.diagnostics["residual_ss"]])
    _write_csv(args.output, ["id", "label", "score", "residual_ss"], rows, _Formatter(None))
    return 0


def cmd_loo(args, fmt):
    config = _config_from(args)
    sample = _load_sample(args.tps, args.labels)
    if args.strata:
        results = stratified_evaluation(sample, config, args.strata.split(","))
        rows = [[str(key), r.metrics.n] + _metric_row(r.metrics) for key, r in results.items()]
        _write_csv(args.output, ["stratum", "n"] + METRIC_HEADER, rows, fmt)
        return 0
    result = loo_in_sample(sample, config) if args.in_sample else loo_out_of_sample(sample, config)
    _write_csv(args.output, ["n"] + METRIC_HEADER, [[result.metrics.n] + _metric_row(result.metrics)],
               fmt)
    if args.records:
        _write_csv(args.records, ["id", "truth", "predicted", "score", "residual_ss"],
                   ([r.id, r.truth, r.predicted, r.score,
                     math.nan if r.residual_ss is None else r.residual_ss]
                    for r in result.records), _Formatter(None))
    return 0


def cmd_simulate(args, fmt):
    mu1, mu2 = load_mean_shapes(args.fixture)
    kw = {} if args.c is None else {"c": args.c}
    specs = [ScenarioSpec(s, n=args.n, mu1=mu1, mu2=mu2, **kw) for s in args.scenario]
    seed = args.seed if args.seed is not None else _default_seed()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = run_study(specs, runs=args.runs, seed=seed, workers=args.workers)
    header = ["scenario", "method"] + [f"{t}_{m}" for t in ("mean", "median")
                                       for m in ("Acc", "Sens", "Spec")]
    rows = ([row.get(h, math.nan) for h in header] for row in result.rows())
    _write_csv(args.output, header, rows, fmt)
    return 0


def _two_groups(sample: ShapeSample, positive):
    labels = sorted({c.label for c in sample})
    if len(labels) != 2:
        raise MorphoError(f"EDMA needs exactly two labelled groups, found {labels}")
    first = positive if positive in labels else labels[0]
    second = labels[1] if first == labels[0] else labels[0]
    idx_a = [i for i, c in enumerate(sample) if c.label == first]
    idx_b = [i for i, c in enumerate(sample) if c.label == second]
    return first, second, sample.subset(idx_a), sample.subset(idx_b)


def cmd_edma(args, fmt):
    sample = _load_sample(args.tps, args.labels)
    seed = args.seed if args.seed is not None else _default_seed()
    name_a, name_b, ga, gb = _two_groups(sample, args.positive)
    glob = edma_global_test(ga, gb, args.bootstrap, seed)
    local = edma_local_test(ga, gb, args.bootstrap, args.confidence, seed)
    prefix = args.output_prefix
    _write_csv(f"{prefix}_global.csv", ["numerator", "denominator", "T", "p_value", "B"],
               [[name_a, name_b, glob.T, glob.p_value, glob.bootstrap_B]], fmt)
    _write_csv(f"{prefix}_local.csv", ["landmark_i", "landmark_j", "ratio", "lower", "upper",
                                       "significant"], local.rows(), fmt)
    dims = min(args.dims, len(sample))
    coords = classical_mds(edma_distance_matrix(sample), dims)
    _write_csv(f"{prefix}_mds.csv", ["id", "label"] + [f"dim{j + 1}" for j in range(dims)],
               ([c.id, c.label] + list(row) for c, row in zip(sample, coords)), _Formatter(None))
    return 0


def cmd_ratios(args, fmt):
    sample = _load_sample(args.tps, args.labels)
    vecs = np.array([ratios(c).as_array() for c in sample])
    prefix = args.output_prefix
    _write_csv(f"{prefix}_ratios.csv", ["id", "label", "r1", "r2", "r3", "r4"],
               ([c.id, c.label] + list(v) for c, v in zip(sample, vecs)), _Formatter(None))
    rows = []
    for kind in ("lda", "lr", "knn"):
        config = PipelineConfig(classifier=kind, positive_class=args.positive, k=args.k)
        res = loo_features(vecs, sample.labels, config, ids=sample.ids)
        rows.append([kind.upper() if kind != "knn" else "kNN"] + _metric_row(res.metrics))
    _write_csv(f"{prefix}_metrics.csv", ["method"] + METRIC_HEADER, rows, fmt)
    return 0


def _read_aligned_csv(path) -> ShapeSample:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[:2] != ["id", "label"]:
        raise MorphoError(f"{path}: expected columns id,label,x1,y1,...")
    coords = np.array([[float(v) for v in r[2:]] for r in rows])
    return ShapeSample.from_array(coords.reshape(len(rows), -1, 2), ids=[r[0] for r in rows],
                                  labels=[r[1] or None for r in rows], state=AlignmentState.ALIGNED)


def cmd_pca(args, fmt):
    sample = _read_aligned_csv(args.aligned)
    res = pca_shape(sample, args.components)
    prefix = args.output_prefix
    _write_csv(f"{prefix}_scores.csv", ["id", "label"] + [f"PC{j + 1}" for j in range(args.components)],
               ([c.id, c.label or ""] + list(s) for c, s in zip(sample, res.scores)), _Formatter(None))
    _write_csv(f"{prefix}_variance.csv", ["component", "eigenvalue", "fraction"],
               ([f"PC{j + 1}", e, f] for j, (e, f) in
                enumerate(zip(res.eigenvalues, res.variance_fractions))), fmt)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="morphoclass", description=__doc__.splitlines()[0])
    ap.add_argument("--decimals", type=int, default=None,
                    help="fixed decimals for metrics (default: 6 significant digits)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="GPA-align a TPS file, write aligned CSV")
    p.add_argument("tps")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--labels")
    p.add_argument("--drop", default=None, help="1-based landmarks to remove (default none)")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("train", help="build a frozen reference and save it")
    p.add_argument("tps")
    p.add_argument("--labels", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify the specimens of a TPS file")
    p.add_argument("model")
    p.add_argument("tps")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("loo", help="leave-one-out metrics (out-of-sample by default)")
    p.add_argument("tps")
    p.add_argument("--labels", required=True)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--records", help="also write per-specimen predictions here")
    p.add_argument("--strata", help="comma list of covariate columns to stratify by")
    p.add_argument("--in-sample", action="store_true", help="one global alignment instead")
    p.add_argument("--seed", type=int, default=None)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_loo)

    p = sub.add_parser("simulate", help="Monte-Carlo scenario study")
    p.add_argument("--scenario", type=int, action="append", choices=[1, 2, 3, 4, 5])
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--n", type=int, default=50, help="individuals per group")
    p.add_argument("--c", type=float, default=None, help="noise constant override")
    p.add_argument("--fixture", default=None, help="mean-shape CSV (default: bundled)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("edma", help="EDMA global/local tests and MDS coordinates")
    p.add_argument("tps")
    p.add_argument("--labels", required=True)
    p.add_argument("--output-prefix", required=True)
    p.add_argument("--bootstrap", type=int, default=DEFAULT_BOOTSTRAP)
    p.add_argument("--confidence", type=float, default=DEFAULT_CONFIDENCE)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--positive", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_edma)

    p = sub.add_parser("ratios", help="arm ratio variables and their LOO metrics")
    p.add_argument("tps")
    p.add_argument("--labels", required=True)
    p.add_argument("--output-prefix", required=True)
    p.add_argument("--positive", default=None)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_ratios)

    p = sub.add_parser("pca", help="PCA of an aligned CSV")
    p.add_argument("aligned")
    p.add_argument("--components", type=int, default=2)
    p.add_argument("--output-prefix", required=True)
    p.set_defaults(func=cmd_pca)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and not args.scenario:
        args.scenario = [1, 2, 3, 4, 5]
    fmt = _Formatter(args.decimals)
    try:
        return args.func(args, fmt)
    except (MorphoError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
