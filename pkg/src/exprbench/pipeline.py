"""Ingestion, validation, quality filtering, and triplet construction.

Annotation and prediction files are JSON Lines (UTF-8, one object per line).
Parsers collect per-line errors with line numbers; order of all outputs is
defined by explicit sort keys, never by arrival order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .affect import (
    AffectVector,
    ConfusingPairRegistry,
    ExpressionId,
    SampleRecord,
    dominant_expression,
    validate_affect_vector,
)
from .errors import ExprBenchError, Malformed, UnknownLevel, ValidationFailed
from .metrics import EvalRecord

MEAD_INTENSITY = {"low": 0.5, "medium": 0.75, "high": 1.0}


def mead_intensity(level: str) -> float:
    """Map a discrete MEAD intensity level onto the continuous alpha scale."""
    key = str(level).strip().lower()
    if key not in MEAD_INTENSITY:
        raise UnknownLevel(level)
    return MEAD_INTENSITY[key]


class ParseResult(NamedTuple):
    records: list
    errors: list[ExprBenchError]


def _iter_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if line:
                yield line_no, line


def parse_annotations(path, fail_fast: bool = False) -> ParseResult:
    """Load and validate an annotation file into SampleRecords.

    Returns (records, errors); with fail_fast the first bad line raises.
    """
    records: list[SampleRecord] = []
    errors: list[ExprBenchError] = []
    seen_ids: set[str] = set()
    for line_no, line in _iter_jsonl(path):
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise Malformed(line_no, str(exc)) from exc
            if not isinstance(obj, dict):
                raise Malformed(line_no, "line is not a JSON object")
            try:
                rec = SampleRecord.from_json_dict(obj)
            except (ExprBenchError, KeyError, TypeError, ValueError) as exc:
                raise ValidationFailed(line_no, exc) from exc
            if rec.sample_id in seen_ids:
                raise ValidationFailed(line_no, f"duplicate sample_id {rec.sample_id!r}")
            seen_ids.add(rec.sample_id)
            records.append(rec)
        except ExprBenchError as err:
            if fail_fast:
                raise
            errors.append(err)
    return ParseResult(records, errors)


def _scores_from_obj(obj: dict) -> AffectVector:
    """Accept the scorer's label->score object and map aliases onto the taxonomy."""
    values = [None] * 12
    for label, score in obj.items():
        expr = ExpressionId.from_label(label)
        idx = expr - 1
        if values[idx] is not None:
            raise ValueError(f"duplicate score for {expr.label!r}")
        values[idx] = float(score)
    missing = [ExpressionId(i + 1).label for i, v in enumerate(values) if v is None]
    if missing:
        raise ValueError(f"missing scores for: {', '.join(missing)}")
    return validate_affect_vector(values)


def load_predictions(path, fail_fast: bool = False) -> ParseResult:
    """Load a prediction file into EvalRecords.

    Each line needs sample_id, target, alpha, and either a 12-entry `scores`
    array (or label->score object, alias spellings accepted) or an explicit
    `predicted` label plus `s_e`. When scores are present the prediction is
    their dominant expression and s_e is the score at the target index.
    """
    records: list[EvalRecord] = []
    errors: list[ExprBenchError] = []
    for line_no, line in _iter_jsonl(path):
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise Malformed(line_no, str(exc)) from exc
            if not isinstance(obj, dict):
                raise Malformed(line_no, "line is not a JSON object")
            try:
                records.append(_prediction_from_obj(obj))
            except (ExprBenchError, KeyError, TypeError, ValueError) as exc:
                raise ValidationFailed(line_no, exc) from exc
        except ExprBenchError as err:
            if fail_fast:
                raise
            errors.append(err)
    return ParseResult(records, errors)


def _prediction_from_obj(obj: dict) -> EvalRecord:
    target = ExpressionId.from_label(str(obj["target"]))
    alpha = float(obj["alpha"])
    raw_scores = obj.get("scores")
    if raw_scores is not None:
        if isinstance(raw_scores, dict):
            affect = _scores_from_obj(raw_scores)
        else:
            affect = validate_affect_vector(raw_scores)
        predicted = dominant_expression(affect)
        s_e = affect.score(target)
        if "predicted" in obj:
            predicted = ExpressionId.from_label(str(obj["predicted"]))
        if "s_e" in obj:
            s_e = float(obj["s_e"])
    else:
        if "predicted" not in obj or "s_e" not in obj:
            raise ValueError("need either scores or predicted + s_e")
        predicted = ExpressionId.from_label(str(obj["predicted"]))
        s_e = float(obj["s_e"])
    id_sims = tuple(float(s) for s in obj.get("id_sims", ()))
    return EvalRecord(
        sample_id=str(obj["sample_id"]),
        target=target,
        alpha=alpha,
        predicted=predicted,
        s_e=s_e,
        id_sims=id_sims,
    )


REJECT_LOW_CONFIDENCE = "low_confidence"
REJECT_TARGET_MISMATCH = "target_mismatch"
REJECT_AMBIGUOUS = "ambiguous"


class FilterResult(NamedTuple):
    kept: list[SampleRecord]
    rejected: list[tuple[SampleRecord, str]]


def quality_filter(
    records: Sequence[SampleRecord],
    min_dominant: float = 0.6,
    max_secondary_gap: float = 0.1,
) -> FilterResult:
    """Drop ambiguous or low-confidence annotations.

    A record survives when its dominant score reaches min_dominant, the
    dominant expression is the declared target, and the runner-up score is
    not within max_secondary_gap of the dominant. Each rejected record
    carries exactly one reason code.
    """
    kept: list[SampleRecord] = []
    rejected: list[tuple[SampleRecord, str]] = []
    for rec in records:
        dom = dominant_expression(rec.affect)
        dom_score = rec.affect.score(dom)
        if dom_score < min_dominant:
            rejected.append((rec, REJECT_LOW_CONFIDENCE))
            continue
        if dom != rec.target:
            rejected.append((rec, REJECT_TARGET_MISMATCH))
            continue
        runner_up = max(s for i, s in enumerate(rec.affect.scores) if i != dom - 1)
        if dom_score - runner_up <= max_secondary_gap:
            rejected.append((rec, REJECT_AMBIGUOUS))
            continue
        kept.append(rec)
    return FilterResult(kept, rejected)


@dataclass(frozen=True)
class TripletRow:
    src_id: str
    pos_id: str
    neg_id: str
    expr_pos: ExpressionId
    expr_neg: ExpressionId
    alpha_pos: float
    alpha_neg: float


class TripletManifest(NamedTuple):
    rows: list[TripletRow]
    skipped_identities: int


TRIPLET_COLUMNS = ("src_id", "pos_id", "neg_id", "expr_pos", "expr_neg", "alpha_pos", "alpha_neg")


def build_triplets(
    records: Sequence[SampleRecord],
    registry: ConfusingPairRegistry,
    source_alpha_max: float = 0.1,
) -> TripletManifest:
    """Construct same-identity triplets over the registered confusing pairs.

    For every identity holding a low-intensity source and both members of a
    registered pair, one row is emitted per (pair, source) combination; the
    pair member with the lower code is the positive. The representative for
    an expression is its strongest (highest alpha_gt) record, ties broken by
    sample_id. Output order is (identity_id, pair index, source sample_id);
    identities without any coverage are tallied, not errors.
    """
    by_identity: dict[str, list[SampleRecord]] = {}
    for rec in records:
        by_identity.setdefault(rec.identity_id, []).append(rec)

    rows: list[TripletRow] = []
    skipped = 0
    for identity_id in sorted(by_identity):
        recs = by_identity[identity_id]
        sources = sorted(
            (r for r in recs if r.alpha_gt <= source_alpha_max), key=lambda r: r.sample_id
        )
        by_target: dict[ExpressionId, list[SampleRecord]] = {}
        for r in recs:
            by_target.setdefault(r.target, []).append(r)
        best = {
            expr: min(group, key=lambda r: (-r.alpha_gt, r.sample_id))
            for expr, group in by_target.items()
        }
        emitted = False
        for pair_idx, (i, j) in enumerate(registry.pairs):
            if i not in best or j not in best:
                continue
            pos, neg = best[i], best[j]
            for src in sources:
                rows.append(
                    TripletRow(
                        src_id=src.sample_id,
                        pos_id=pos.sample_id,
                        neg_id=neg.sample_id,
                        expr_pos=i,
                        expr_neg=j,
                        alpha_pos=pos.alpha_gt,
                        alpha_neg=neg.alpha_gt,
                    )
                )
                emitted = True
        if not emitted:
            skipped += 1
    return TripletManifest(rows, skipped)


def triplets_to_csv(manifest: TripletManifest) -> str:
    lines = [",".join(TRIPLET_COLUMNS)]
    for row in manifest.rows:
        lines.append(
            ",".join(
                [
                    row.src_id,
                    row.pos_id,
                    row.neg_id,
                    row.expr_pos.label,
                    row.expr_neg.label,
                    repr(row.alpha_pos),
                    repr(row.alpha_neg),
                ]
            )
        )
    return "\n".join(lines) + "\n"
