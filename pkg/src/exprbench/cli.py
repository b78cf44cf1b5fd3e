"""Command-line entry point.

Subcommands: validate, eval, triplets, train-toy, report, blend.
Exit codes: 0 success, 1 domain/validation failure, 2 I/O failure,
3 metric precondition failure. Outputs are UTF-8 with LF newlines and are
written atomically; --deterministic drops the timestamp header so repeated
runs are byte-identical.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
from pathlib import Path

import numpy as np

from . import interp, metrics, pipeline, tensorio, trainer
from .errors import (
    ConfigError,
    EmptyInput,
    EmptyRegistry,
    ExprBenchError,
    LengthMismatch,
    NonFiniteLoss,
    NonUniformAlphaGrid,
    NoSamplesForClass,
    NoValidSeries,
    TargetOutsideSubset,
    TooFewPoints,
)
from .affect import BASIC_SIX
from .runconfig import (
    ENV_CONFIG_PATH,
    load_run_config,
    parse_registry_spec,
    to_ini,
    with_overrides,
)
from .world import generate_world

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_METRIC = 3

_METRIC_ERRORS = (
    NoSamplesForClass,
    EmptyRegistry,
    NoValidSeries,
    TooFewPoints,
    NonUniformAlphaGrid,
    TargetOutsideSubset,
    EmptyInput,
    LengthMismatch,
)


def _timestamp_header(deterministic: bool) -> str:
    if deterministic:
        return ""
    return f"# generated: {datetime.datetime.now().isoformat(timespec='seconds')}\n"


def _write(path: Path, text: str, deterministic: bool) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tensorio.write_atomic(path, _timestamp_header(deterministic) + text)


def _records_csv(records, label: str) -> str:
    lines = ["method,sample_id,target,alpha,predicted,s_e,id_sim"]
    for r in records:
        id_sim = (
            repr(metrics.identity_similarity(r.id_sims).raw) if r.id_sims else ""
        )
        lines.append(
            f"{label},{r.sample_id},{r.target.label},{r.alpha!r},"
            f"{r.predicted.label},{r.s_e!r},{id_sim}"
        )
    return "\n".join(lines) + "\n"


def cmd_validate(args) -> int:
    records, errors = pipeline.parse_annotations(args.annotations)
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    print(f"{len(records)} valid records, {len(errors)} errors")
    return EXIT_OK if not errors else EXIT_VALIDATION


def cmd_eval(args) -> int:
    registry = parse_registry_spec(args.registry)
    records, errors = pipeline.load_predictions(args.predictions)
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    if errors:
        return EXIT_VALIDATION
    if args.subset == 6:
        basic = frozenset(BASIC_SIX)
        records = [r for r in records if r.target in basic]
    report = metrics.report(records, registry)

    out = Path(args.out)
    label = args.label or Path(args.predictions).stem
    _write(out / "report.txt", report.to_text(), args.deterministic)
    _write(out / "report.csv", report.to_csv_text(), args.deterministic)
    _write(out / "records.csv", _records_csv(records, label), args.deterministic)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_triplets(args) -> int:
    registry = parse_registry_spec(args.registry)
    records, errors = pipeline.parse_annotations(args.annotations)
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    if errors:
        return EXIT_VALIDATION
    manifest = pipeline.build_triplets(records, registry, args.source_alpha_max)
    out = Path(args.out)
    _write(out, pipeline.triplets_to_csv(manifest), args.deterministic)
    print(f"{len(manifest.rows)} triplets written to {out} "
          f"({manifest.skipped_identities} identities skipped)")
    return EXIT_OK


def _curve_csv(curve) -> str:
    lines = ["step,L_total,L_FM,L_SC,L_ID,mSCR,CLS"]
    for row in curve:
        cells = [str(row["step"])]
        for key in ("L_total", "L_FM", "L_SC", "L_ID", "mSCR", "CLS"):
            v = row[key]
            cells.append("" if v is None else repr(float(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_train_toy(args) -> int:
    cfg_path = args.config or os.environ.get(ENV_CONFIG_PATH)
    cfg = load_run_config(cfg_path)
    cfg = with_overrides(
        cfg,
        seed=args.seed,
        mode=args.mode,
        lambda_sc=args.lambda_sc,
        lambda_id=args.lambda_id,
        triplet_mode=args.triplet,
        alpha_max=args.alpha_max,
        grid=args.grid,
        registry=parse_registry_spec(args.registry) if args.registry else None,
        out_dir=args.out,
    )
    world = generate_world(cfg.world, cfg.registry)
    try:
        result = trainer.train(world, cfg.triplet, cfg.weights, cfg.training, cfg.eval)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays, meta = trainer.net_to_tensors(result.net)
    tensorio.save_tensors(out / "model.json", arrays, meta)
    from .world import world_to_tensors

    warrays, wmeta = world_to_tensors(world)
    tensorio.save_tensors(out / "world.json", warrays, wmeta)
    _write(out / "curves.csv", _curve_csv(result.curve), args.deterministic)
    _write(out / "report.txt", result.report.to_text(), args.deterministic)
    _write(out / "report.csv", result.report.to_csv_text(), args.deterministic)
    _write(out / "records.csv",
           _records_csv(result.records, f"train-{cfg.training.mode}"),
           args.deterministic)
    _write(out / "effective.ini", to_ini(cfg), args.deterministic)
    sys.stdout.write(result.report.to_text())
    return EXIT_OK


def _read_records_csv(path: Path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            cells = line.split(",")
            rows.append(dict(zip(header, cells)))
    return rows


def cmd_report(args) -> int:
    paths: list[Path] = []
    for d in args.eval_dirs:
        d = Path(d)
        if d.is_file():
            paths.append(d)
        elif d.is_dir():
            paths.extend(sorted(d.rglob("records.csv")))
    if not paths:
        print("error: no records.csv found under the given paths", file=sys.stderr)
        return EXIT_IO

    # mean expression score and identity similarity per (method, alpha)
    buckets: dict[tuple[str, float], list[tuple[float, float | None]]] = {}
    for p in paths:
        for row in _read_records_csv(p):
            key = (row["method"], float(row["alpha"]))
            id_sim = float(row["id_sim"]) if row.get("id_sim") else None
            buckets.setdefault(key, []).append((float(row["s_e"]), id_sim))
    lines = ["method,alpha,expression_score,id_similarity"]
    for (method, alpha) in sorted(buckets):
        vals = buckets[(method, alpha)]
        mean_se = sum(v[0] for v in vals) / len(vals)
        sims = [v[1] for v in vals if v[1] is not None]
        mean_id = repr(sum(sims) / len(sims)) if sims else ""
        lines.append(f"{method},{alpha!r},{mean_se!r},{mean_id}")
    out = Path(args.out)
    _write(out, "\n".join(lines) + "\n", args.deterministic)
    print(f"curve data for {len({m for m, _ in buckets})} method(s) written to {out}")
    return EXIT_OK


def cmd_blend(args) -> int:
    arrays, _ = tensorio.load_tensors(args.embeddings)
    if args.neutral not in arrays:
        print(f"error: no embedding named {args.neutral!r}", file=sys.stderr)
        return EXIT_VALIDATION
    e_neu = arrays[args.neutral]
    terms = []
    for chunk in args.terms.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, _, alpha_str = chunk.partition(":")
        if name not in arrays:
            print(f"error: no embedding named {name!r}", file=sys.stderr)
            return EXIT_VALIDATION
        alpha = float(alpha_str) if alpha_str else 0.5
        terms.append((interp.residual_direction(e_neu, arrays[name]), alpha))
    blended = interp.blend(e_neu, terms, alpha_max=args.alpha_max)
    tensorio.save_tensors(args.out, {"blended": np.asarray(blended)}, {"kind": "embedding"})
    print(f"blended embedding ({len(terms)} terms) written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exprbench",
        description="Expression-editing benchmark metrics and desk-scale symmetric training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--jobs", type=int, default=1,
                       help="upper bound on worker parallelism (>=1)")
        p.add_argument("--deterministic", action="store_true",
                       help="omit timestamp headers for byte-identical reruns")

    p = sub.add_parser("validate", help="validate an annotation JSONL file")
    p.add_argument("annotations")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="score a prediction JSONL file against the benchmark")
    p.add_argument("predictions")
    p.add_argument("--registry", default="fear:surprised,angry:disgust",
                   help="comma-separated label:label confusing pairs")
    p.add_argument("--subset", type=int, choices=(6, 12), default=12,
                   help="restrict the corpus to the 6 basic expressions")
    p.add_argument("--label", default=None, help="method label for curve emission")
    p.add_argument("--out", default="eval_out", help="output directory")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("triplets", help="build a confusing-pair triplet manifest")
    p.add_argument("annotations")
    p.add_argument("--registry", default="fear:surprised,angry:disgust")
    p.add_argument("--source-alpha-max", type=float, default=0.1,
                   help="max alpha_gt for a record to count as a neutral source")
    p.add_argument("--out", default="triplets.csv")
    common(p)
    p.set_defaults(func=cmd_triplets)

    p = sub.add_parser("train-toy", help="train the synthetic symmetric objective")
    p.add_argument("--config", default=None,
                   help=f"INI run config (default: ${ENV_CONFIG_PATH})")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=trainer.MODES, default=None)
    p.add_argument("--lambda-sc", type=float, default=None, dest="lambda_sc")
    p.add_argument("--lambda-id", type=float, default=None, dest="lambda_id")
    p.add_argument("--triplet", choices=("hinge", "log_ratio", "infonce"), default=None)
    p.add_argument("--alpha-max", type=float, default=None, dest="alpha_max")
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--registry", default=None)
    p.add_argument("--out", default=None, help="output directory")
    common(p)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("report", help="aggregate eval outputs into alpha-vs-score curves")
    p.add_argument("eval_dirs", nargs="+")
    p.add_argument("--out", default="curves.csv")
    common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("blend", help="blend expression directions in embedding space")
    p.add_argument("embeddings", help="tensor file with named embeddings")
    p.add_argument("--neutral", required=True, help="name of the neutral embedding")
    p.add_argument("--terms", required=True,
                   help="comma-separated name[:alpha] terms (alpha defaults to 0.5)")
    p.add_argument("--alpha-max", type=float, default=interp.DEFAULT_ALPHA_MAX,
                   dest="alpha_max")
    p.add_argument("--out", default="blended.json")
    common(p)
    p.set_defaults(func=cmd_blend)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except _METRIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_METRIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ExprBenchError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
