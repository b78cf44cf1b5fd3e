"""Benchmark metrics for expression editing.

Implements directed/bidirectional confusion rates, mean structural confusion
(mSCR), editing accuracy at 6/12 categories, identity-similarity aggregation,
the harmonic editing score (HES), and the control linearity score (CLS), plus
a report bundle that serializes to a flat CSV row and a readable text table.

All operations are pure functions over immutable records; corpus-level
aggregates can be recomputed by brute force and must agree to 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .affect import BASIC_SIX, ConfusingPairRegistry, ExpressionId, TARGET_TWELVE
from .errors import (
    EmptyInput,
    EmptyRegistry,
    LengthMismatch,
    NoSamplesForClass,
    NonUniformAlphaGrid,
    NoValidSeries,
    OutOfRange,
    TargetOutsideSubset,
    TooFewPoints,
)

METRIC_KEYS = ("mSCR", "Acc-6", "Acc-12", "ID-Sim", "HES", "CLS-6", "CLS-12")


@dataclass(frozen=True)
class EvalRecord:
    """One edited image's evaluation row.

    `alpha` is the commanded intensity, `predicted` the dominant expression the
    scorer assigned, `s_e` the target-expression score, and `id_sims` the
    per-recognizer cosine similarities (may be empty when the evaluation
    carries no identity signal).
    """

    sample_id: str
    target: ExpressionId
    alpha: float
    predicted: ExpressionId
    s_e: float
    id_sims: tuple[float, ...] = ()

    def __post_init__(self):
        if self.target == ExpressionId.NEUTRAL or self.predicted == ExpressionId.NEUTRAL:
            raise ValueError("eval records use the 12 target expressions only")
        if not (0.0 <= self.s_e <= 1.0):
            raise OutOfRange("s_e", self.s_e)
        if self.alpha < 0.0:
            raise OutOfRange("alpha", self.alpha)
        for s in self.id_sims:
            if not (-1.0 <= s <= 1.0):
                raise OutOfRange("identity similarity", s)


@dataclass(frozen=True)
class ConfusionMatrix:
    """12x12 counts; row = edited-toward class, column = predicted class."""

    counts: tuple[tuple[int, ...], ...]

    def count(self, i: ExpressionId, j: ExpressionId) -> int:
        return self.counts[i - 1][j - 1]

    def row_total(self, i: ExpressionId) -> int:
        return sum(self.counts[i - 1])


def build_confusion(records: Sequence[EvalRecord]) -> ConfusionMatrix:
    """Tally counts[i][j] = number of records with target=i predicted j."""
    if not records:
        raise EmptyInput("no records")
    counts = [[0] * 12 for _ in range(12)]
    for r in records:
        counts[r.target - 1][r.predicted - 1] += 1
    return ConfusionMatrix(tuple(tuple(row) for row in counts))


def directed_confusion(cm: ConfusionMatrix, i: ExpressionId, j: ExpressionId) -> float:
    """Fraction of class-i edits predicted as class j."""
    n_i = cm.row_total(i)
    if n_i == 0:
        raise NoSamplesForClass(i)
    return cm.count(i, j) / n_i


def bcr(cm: ConfusionMatrix, i: ExpressionId, j: ExpressionId) -> float:
    """Bidirectional confusion rate: mean of the two directed rates."""
    return (directed_confusion(cm, i, j) + directed_confusion(cm, j, i)) / 2.0


def mscr(cm: ConfusionMatrix, registry: ConfusingPairRegistry) -> float:
    """Mean BCR over the registered confusing pairs.

    Requires every registered pair to have samples in both directions;
    a partially covered registry fails loudly instead of silently averaging
    fewer pairs.
    """
    if not registry.pairs:
        raise EmptyRegistry("no registered pairs")
    values = [bcr(cm, i, j) for i, j in registry.pairs]
    return math.fsum(values) / len(values)


def accuracy(records: Sequence[EvalRecord], subset: Iterable[ExpressionId]) -> float:
    """Fraction of records whose prediction matches the target instruction."""
    if not records:
        raise EmptyInput("no records")
    allowed = frozenset(subset)
    correct = 0
    for r in records:
        if r.target not in allowed:
            raise TargetOutsideSubset(f"{r.target!r} not in requested subset")
        if r.predicted == r.target:
            correct += 1
    return correct / len(records)


class IdentitySimilarity(NamedTuple):
    raw: float
    hes_facing: float


def identity_similarity(id_sims: Sequence[float]) -> IdentitySimilarity:
    """Mean per-recognizer cosine similarity.

    Returns both the raw mean (diagnostics; may be negative) and the value
    clamped to [0,1] for HES consumption.
    """
    if not id_sims:
        raise EmptyInput("no similarities")
    for s in id_sims:
        if not (-1.0 <= s <= 1.0):
            raise OutOfRange("identity similarity", s)
    raw = math.fsum(id_sims) / len(id_sims)
    return IdentitySimilarity(raw, min(max(raw, 0.0), 1.0))


def hes(s_e: float, s_id: float) -> float:
    """Harmonic editing score 2*s_e*s_id/(s_e+s_id); 0 when both inputs are 0."""
    if not (0.0 <= s_e <= 1.0):
        raise OutOfRange("s_e", s_e)
    if not (0.0 <= s_id <= 1.0):
        raise OutOfRange("s_id", s_id)
    if s_e == 0.0 and s_id == 0.0:
        return 0.0
    return 2.0 * s_e * s_id / (s_e + s_id)


class PearsonResult(NamedTuple):
    value: float
    degenerate: bool


def pearson(xs: Sequence[float], ys: Sequence[float]) -> PearsonResult:
    """Sample Pearson correlation.

    A zero-variance series yields (0.0, degenerate=True) instead of NaN so
    flat responses cannot poison aggregates.
    """
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise TooFewPoints(f"need >= 2 points, got {n}")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        return PearsonResult(0.0, True)
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    r = sxy / math.sqrt(sxx * syy)
    return PearsonResult(min(max(r, -1.0), 1.0), False)


AlphaSeries = Sequence[tuple[float, float]]


class ClsResult(NamedTuple):
    value: float
    n_used: int
    n_skipped: int


def cls_score(series: Sequence[AlphaSeries], spacing_tol: float = 1e-9) -> ClsResult:
    """Mean per-series Pearson r between alpha and measured intensity.

    Each series must hold >= 2 points on a uniformly spaced alpha grid.
    Degenerate (zero-variance) series are skipped and tallied; if every
    series is degenerate there is no linearity score to report.
    """
    if not series:
        raise EmptyInput("no series")
    values = []
    skipped = 0
    for pts in series:
        pts = sorted(pts, key=lambda p: p[0])
        alphas = [a for a, _ in pts]
        scores = [s for _, s in pts]
        _check_uniform(alphas, spacing_tol)
        r = pearson(alphas, scores)
        if r.degenerate:
            skipped += 1
        else:
            values.append(r.value)
    if not values:
        raise NoValidSeries(skipped)
    return ClsResult(math.fsum(values) / len(values), len(values), skipped)


def _check_uniform(alphas: Sequence[float], tol: float) -> None:
    if len(alphas) < 2:
        raise TooFewPoints("series needs >= 2 points")
    steps = [b - a for a, b in zip(alphas, alphas[1:])]
    ref = steps[0]
    if ref <= 0.0:
        raise NonUniformAlphaGrid(f"non-increasing alphas: {alphas}")
    for s in steps:
        if abs(s - ref) > tol * max(1.0, abs(ref)):
            raise NonUniformAlphaGrid(f"uneven alpha spacing: {alphas}")


def group_alpha_series(
    records: Sequence[EvalRecord],
) -> dict[tuple[str, ExpressionId], list[tuple[float, float]]]:
    """Group records into (sample, expression) intensity series.

    A series is every record sharing (sample_id, target); only groups with at
    least two distinct alphas count as a sweep.
    """
    groups: dict[tuple[str, ExpressionId], list[tuple[float, float]]] = {}
    for r in records:
        groups.setdefault((r.sample_id, r.target), []).append((r.alpha, r.s_e))
    return {
        k: sorted(v)
        for k, v in sorted(groups.items(), key=lambda kv: (kv[0][0], int(kv[0][1])))
        if len({a for a, _ in v}) >= 2
    }


# Identity-similarity regimes observed for realistic editing.
ID_NATURAL = (0.6, 0.7)
ID_COPY_PASTE = 0.8
ID_DISTORTION = 0.5


def id_regime(mean_sim: float) -> str:
    if mean_sim < ID_DISTORTION:
        return "identity distortion"
    if mean_sim > ID_COPY_PASTE:
        return "copy-paste suspect"
    if ID_NATURAL[0] <= mean_sim <= ID_NATURAL[1]:
        return "natural"
    return "borderline"


@dataclass(frozen=True)
class MetricReport:
    """One bundle of benchmark metrics plus identity diagnostics."""

    mscr: float
    acc12: float
    acc6: float | None = None
    id_sim: float | None = None
    hes_mean: float | None = None
    hes_of_means: float | None = None
    cls6: float | None = None
    cls12: float | None = None
    id_flag: str | None = None
    n_records: int = 0
    cls_series: int = 0
    cls_skipped: int = 0
    notes: tuple[str, ...] = field(default=())

    def to_row(self) -> dict[str, float | str | None]:
        """Flat key-value view; canonical metric keys match the table headers."""
        return {
            "mSCR": self.mscr,
            "Acc-6": self.acc6,
            "Acc-12": self.acc12,
            "ID-Sim": self.id_sim,
            "HES": self.hes_mean,
            "CLS-6": self.cls6,
            "CLS-12": self.cls12,
            "id_regime": self.id_flag,
            "n_records": self.n_records,
            "cls_series": self.cls_series,
            "cls_skipped": self.cls_skipped,
        }

    def to_csv_text(self) -> str:
        row = self.to_row()
        header = ",".join(row.keys())
        cells = []
        for v in row.values():
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(repr(v))
            else:
                cells.append(str(v))
        return header + "\n" + ",".join(cells) + "\n"

    def to_text(self) -> str:
        lines = []
        for key, v in self.to_row().items():
            if v is None:
                shown = "n/a"
            elif isinstance(v, float):
                shown = f"{v:.4f}"
            else:
                shown = str(v)
            lines.append(f"{key:<12} {shown}")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines) + "\n"


def report(records: Sequence[EvalRecord], registry: ConfusingPairRegistry) -> MetricReport:
    """Aggregate a record corpus into the benchmark's headline metrics.

    HES is computed per record and then averaged (the harmonic trade-off is a
    per-evaluation quantity); HES of the corpus means is exposed alongside.
    The ID-Sim column is the raw (unclamped) mean. CLS appears only when the
    corpus contains alpha sweeps.
    """
    if not records:
        raise EmptyInput("no records")
    cm = build_confusion(records)
    m = mscr(cm, registry)
    acc12 = accuracy(records, TARGET_TWELVE)
    basic = frozenset(BASIC_SIX)
    basic_records = [r for r in records if r.target in basic]
    acc6 = accuracy(basic_records, BASIC_SIX) if basic_records else None

    id_means_raw = []
    hes_values = []
    se_values = []
    for r in records:
        se_values.append(r.s_e)
        if r.id_sims:
            sim = identity_similarity(r.id_sims)
            id_means_raw.append(sim.raw)
            hes_values.append(hes(r.s_e, sim.hes_facing))
    id_sim = math.fsum(id_means_raw) / len(id_means_raw) if id_means_raw else None
    hes_mean = math.fsum(hes_values) / len(hes_values) if hes_values else None
    hes_om = None
    if id_sim is not None:
        mean_se = math.fsum(se_values) / len(se_values)
        hes_om = hes(mean_se, min(max(id_sim, 0.0), 1.0))

    groups = group_alpha_series(records)
    cls6_val = cls12_val = None
    n_series = n_skipped = 0
    notes: list[str] = []
    if groups:
        all_series = list(groups.values())
        try:
            res12 = cls_score(all_series)
            cls12_val = res12.value
            n_series = res12.n_used
            n_skipped = res12.n_skipped
        except NoValidSeries as exc:
            n_skipped = exc.skipped
            notes.append("all alpha series degenerate")
        basic_series = [v for (sid, tgt), v in groups.items() if tgt in basic]
        if basic_series and cls12_val is not None:
            try:
                cls6_val = cls_score(basic_series).value
            except NoValidSeries:
                notes.append("all basic-class alpha series degenerate")

    return MetricReport(
        mscr=m,
        acc12=acc12,
        acc6=acc6,
        id_sim=id_sim,
        hes_mean=hes_mean,
        hes_of_means=hes_om,
        cls6=cls6_val,
        cls12=cls12_val,
        id_flag=id_regime(id_sim) if id_sim is not None else None,
        n_records=len(records),
        cls_series=n_series,
        cls_skipped=n_skipped,
        notes=tuple(notes),
    )
