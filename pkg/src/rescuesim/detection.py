"""Detection-log evaluation: confusion counts, the four report metrics,
and FPS aggregation over the D1-D4 dataset taxonomy.

The metric formulas are evaluated with exact rational arithmetic and
only converted to decimal at the edge. Note the quantity reported here
as "MAP" is (TP+TN)/total, which is conventionally called accuracy; it
is kept under this name deliberately so report columns line up with the
upstream evaluation sheet this module reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


class EmptyLogError(Exception):
    """No records to evaluate."""


class UndefinedMetricError(Exception):
    """The metric's denominator is zero; refusing to report a silent 0."""


class DetectionLogFormatError(Exception):
    """Malformed odmlog text."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class DetectionRecord:
    frame_id: int
    ground_truth: str | None        # None = nothing present
    prediction: str | None          # None = nothing reported
    latency_ms: float

    def __post_init__(self):
        if self.latency_ms <= 0:
            raise ValueError(f"latency must be > 0 ms, got {self.latency_ms}")
        for label in (self.ground_truth, self.prediction):
            if label is not None and ("," in label or label.strip() != label
                                      or label == "" or label == "-"):
                raise ValueError(f"bad label {label!r}")


@dataclass(frozen=True)
class DatasetDescriptor:
    id: str
    nature: str
    testing_feature: str

    def __post_init__(self):
        if self.id not in ("D1", "D2", "D3", "D4", "D"):
            raise ValueError(f"dataset id must be D1..D4 or the union D, got {self.id!r}")


DATASETS = {
    "D1": DatasetDescriptor("D1", "Fast-moving blurred objects",
                            "Fast movement detection"),
    "D2": DatasetDescriptor("D2", "Fast and Slow rotation of an object",
                            "Expend the frame rate for the model"),
    "D3": DatasetDescriptor("D3", "Same object with small and large size",
                            "Correct the error rate for mismatch detection"),
    "D4": DatasetDescriptor("D4", "Lower pixel image",
                            "Improve the partial translation rate"),
}

METRIC_NAMES = ("Recall", "Precision", "MAP", "F1")


def accumulate(records) -> ConfusionCounts:
    """Tally one log into confusion counts.

    A frame with matching labels is a tp; a mismatched label counts once
    as fp and once as fn (no partial credit); one-sided frames are fp or
    fn; empty frames are tn.
    """
    records = list(records)
    if not records:
        raise EmptyLogError("no detection records to accumulate")
    seen = set()
    tp = fp = fn = tn = 0
    for r in records:
        if r.frame_id in seen:
            raise ValueError(f"duplicate frame_id {r.frame_id} in log")
        seen.add(r.frame_id)
        if r.ground_truth is None and r.prediction is None:
            tn += 1
        elif r.ground_truth is None:
            fp += 1
        elif r.prediction is None:
            fn += 1
        elif r.ground_truth == r.prediction:
            tp += 1
        else:
            fp += 1
            fn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(num: int, den: int, what: str) -> float:
    if den == 0:
        raise UndefinedMetricError(f"{what} undefined: denominator is zero")
    return float(Fraction(num, den))


def recall(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn, "recall")


def precision(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp, "precision")


def map_metric(c: ConfusionCounts) -> float:
    return _ratio(c.tp + c.tn, c.total, "MAP")


def f1(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0 or c.tp + c.fp == 0:
        raise UndefinedMetricError("F1 undefined: precision or recall undefined")
    p = Fraction(c.tp, c.tp + c.fp)
    r = Fraction(c.tp, c.tp + c.fn)
    if p + r == 0:
        raise UndefinedMetricError("F1 undefined: precision + recall is zero")
    return float(2 * (p * r) / (p + r))


def avg_fps(records) -> float:
    records = list(records)
    if not records:
        raise EmptyLogError("no detection records for fps")
    return 1000.0 * len(records) / sum(r.latency_ms for r in records)


@dataclass(frozen=True)
class MetricRow:
    dataset_id: str
    metric: str
    score: float | None             # None = undefined for these counts
    avg_fps: float
    accuracy_pct: float | None


@dataclass(frozen=True)
class MetricReport:
    rows: tuple[MetricRow, ...]

    def row(self, dataset_id: str, metric: str) -> MetricRow:
        for r in self.rows:
            if r.dataset_id == dataset_id and r.metric == metric:
                return r
        raise KeyError((dataset_id, metric))


def _metric_rows(dataset_id: str, counts: ConfusionCounts, fps: float):
    try:
        acc = map_metric(counts) * 100.0
    except UndefinedMetricError:
        acc = None
    rows = []
    for name, fn_ in (("Recall", recall), ("Precision", precision),
                      ("MAP", map_metric), ("F1", f1)):
        try:
            score = fn_(counts)
        except UndefinedMetricError:
            score = None
        rows.append(MetricRow(dataset_id, name, score, fps, acc))
    return rows


def evaluate(logs: dict) -> MetricReport:
    """Per-dataset metric rows plus an overall union row (id "D").

    Keys are dataset ids or DatasetDescriptors; values are record lists.
    Counts are additive, so the union row accumulates each log
    separately and sums. Undefined cells stay in the report as None.
    """
    if not logs:
        raise EmptyLogError("no datasets to evaluate")
    normalized = {}
    for key, records in logs.items():
        ds_id = key.id if isinstance(key, DatasetDescriptor) else str(key)
        if ds_id in normalized:
            raise ValueError(f"dataset {ds_id} appears twice")
        normalized[ds_id] = list(records)

    rows = []
    union_counts = ConfusionCounts()
    all_records = []
    for ds_id in sorted(normalized):
        records = normalized[ds_id]
        counts = accumulate(records)
        union_counts = union_counts + counts
        all_records.extend(records)
        rows.extend(_metric_rows(ds_id, counts, avg_fps(records)))
    if len(normalized) > 1:
        rows.extend(_metric_rows("D", union_counts, avg_fps(all_records)))
    return MetricReport(rows=tuple(rows))


def render_report(report: MetricReport) -> str:
    """Delimiter-separated table: dataset, metric, score, avg fps, accuracy."""
    lines = ["dataset\tmetric\tscore\tavg_fps\taccuracy_pct"]
    for r in report.rows:
        score = "undefined" if r.score is None else f"{r.score:.4f}"
        acc = "undefined" if r.accuracy_pct is None else f"{r.accuracy_pct:.2f}"
        lines.append(f"{r.dataset_id}\t{r.metric}\t{score}\t{r.avg_fps:.2f}\t{acc}")
    return "\n".join(lines) + "\n"


def format_odmlog(dataset_id: str, records) -> str:
    """Serialize one detection log: header line, then one CSV row per frame."""
    lines = [f"odmlog v1 {dataset_id}"]
    for r in records:
        gt = "-" if r.ground_truth is None else r.ground_truth
        pred = "-" if r.prediction is None else r.prediction
        lines.append(f"{r.frame_id},{gt},{pred},{repr(float(r.latency_ms))}")
    return "\n".join(lines) + "\n"


def parse_odmlog(text: str):
    """Inverse of format_odmlog: returns (dataset_id, records)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DetectionLogFormatError("empty log text")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "odmlog" or header[1] != "v1":
        raise DetectionLogFormatError(f"bad header {lines[0]!r}")
    dataset_id = header[2]
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise DetectionLogFormatError(f"bad record line {ln!r}")
        try:
            frame_id = int(parts[0])
            latency = float(parts[3])
        except ValueError as exc:
            raise DetectionLogFormatError(f"bad record line {ln!r}") from exc
        gt = None if parts[1] == "-" else parts[1]
        pred = None if parts[2] == "-" else parts[2]
        try:
            records.append(DetectionRecord(frame_id, gt, pred, latency))
        except ValueError as exc:
            raise DetectionLogFormatError(f"bad record line {ln!r}") from exc
    return dataset_id, records
