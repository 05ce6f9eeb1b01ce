"""Detection evaluation: confusion tallies, metric formulas, fps, logs."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rescuesim.detection import (
    DATASETS,
    ConfusionCounts,
    DatasetDescriptor,
    DetectionLogFormatError,
    DetectionRecord,
    EmptyLogError,
    UndefinedMetricError,
    accumulate,
    avg_fps,
    evaluate,
    f1,
    format_odmlog,
    map_metric,
    parse_odmlog,
    precision,
    recall,
    render_report,
)


def rec(i, gt, pred, latency=50.0):
    return DetectionRecord(frame_id=i, ground_truth=gt, prediction=pred,
                           latency_ms=latency)


FOUR_CASES = [rec(0, "person", "person"), rec(1, "person", None),
              rec(2, None, "person"), rec(3, None, None)]


# --- accumulate ---

def test_accumulate_single_cases():
    assert accumulate([rec(0, "person", "person")]) == ConfusionCounts(1, 0, 0, 0)
    assert accumulate([rec(0, "person", None)]) == ConfusionCounts(0, 0, 1, 0)
    assert accumulate([rec(0, None, "person")]) == ConfusionCounts(0, 1, 0, 0)
    assert accumulate([rec(0, None, None)]) == ConfusionCounts(0, 0, 0, 1)


def test_accumulate_four_case_log():
    assert accumulate(FOUR_CASES) == ConfusionCounts(1, 1, 1, 1)


def test_accumulate_mismatch_counts_twice():
    assert accumulate([rec(0, "person", "box")]) == ConfusionCounts(0, 1, 1, 0)


def test_accumulate_empty_and_duplicates():
    with pytest.raises(EmptyLogError):
        accumulate([])
    with pytest.raises(ValueError):
        accumulate([rec(0, None, None), rec(0, None, None)])


def test_accumulate_permutation_invariant_and_additive():
    log_a = [rec(i, "person", "person" if i % 2 else None) for i in range(10)]
    log_b = [rec(100 + i, None, "box" if i % 3 else None) for i in range(9)]
    shuffled = log_a + log_b
    random.Random(0).shuffle(shuffled)
    assert accumulate(shuffled) == accumulate(log_a) + accumulate(log_b)


def test_counts_validation():
    with pytest.raises(ValueError):
        ConfusionCounts(tp=-1)
    with pytest.raises(ValueError):
        ConfusionCounts(tp=1.5)
    assert ConfusionCounts(1, 2, 3, 4).total == 10


# --- metric formulas ---

def test_metric_fixture_values():
    c = ConfusionCounts(tp=3, fp=1, fn=2, tn=4)
    assert recall(c) == pytest.approx(0.6, abs=1e-12)
    assert precision(c) == pytest.approx(0.75, abs=1e-12)
    assert map_metric(c) == pytest.approx(0.7, abs=1e-12)
    assert f1(c) == pytest.approx(0.6667, abs=1e-4)
    assert f1(c) == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_metric_perfect_classifier():
    c = ConfusionCounts(tp=7)
    assert recall(c) == 1.0 and precision(c) == 1.0
    assert map_metric(c) == 1.0 and f1(c) == 1.0


def test_metric_zero_denominators():
    c = ConfusionCounts(fn=5)
    assert recall(c) == 0.0
    with pytest.raises(UndefinedMetricError):
        precision(c)
    with pytest.raises(UndefinedMetricError):
        f1(c)
    with pytest.raises(UndefinedMetricError):
        map_metric(ConfusionCounts())
    with pytest.raises(UndefinedMetricError):
        f1(ConfusionCounts(fp=3, fn=2))  # precision = recall = 0


counts_strategy = st.tuples(st.integers(0, 500), st.integers(0, 500),
                            st.integers(0, 500), st.integers(0, 500))


@given(counts_strategy)
def test_map_plus_error_rate_is_one(t):
    c = ConfusionCounts(*t)
    if c.total == 0:
        return
    error_rate = (c.fp + c.fn) / c.total
    assert abs(map_metric(c) + error_rate - 1.0) < 1e-12


@given(counts_strategy)
def test_metrics_stay_in_unit_interval(t):
    c = ConfusionCounts(*t)
    for metric in (recall, precision, map_metric, f1):
        try:
            v = metric(c)
        except UndefinedMetricError:
            continue
        assert 0.0 <= v <= 1.0


@given(counts_strategy)
def test_f1_harmonic_mean_bound(t):
    c = ConfusionCounts(*t)
    if c.tp == 0:
        return
    p, r = precision(c), recall(c)
    assert min(p, r) - 1e-12 <= f1(c) <= max(p, r) + 1e-12


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_recall_monotone_in_tp_and_fn(tp, fn, extra):
    if tp + fn == 0:
        return
    base = recall(ConfusionCounts(tp=tp, fn=fn))
    assert recall(ConfusionCounts(tp=tp + extra, fn=fn)) >= base - 1e-12
    assert recall(ConfusionCounts(tp=tp, fn=fn + extra)) <= base + 1e-12


# --- fps ---

def test_avg_fps_values():
    assert avg_fps([rec(i, None, None, 50.0) for i in range(5)]) == 20.0
    assert avg_fps([rec(0, None, None, 40.0),
                    rec(1, None, None, 60.0)]) == pytest.approx(20.0, abs=1e-12)
    fps = avg_fps([rec(i, None, None, 58.8) for i in range(10)])
    assert abs(fps - 17.0) < 0.05
    with pytest.raises(EmptyLogError):
        avg_fps([])


# --- evaluate ---

def test_evaluate_identical_logs_union_matches_rows():
    logs = {ds: list(FOUR_CASES) for ds in ("D1", "D2", "D3", "D4")}
    report = evaluate(logs)
    for metric in ("Recall", "Precision", "MAP", "F1"):
        values = {report.row(ds, metric).score for ds in ("D1", "D2", "D3", "D4", "D")}
        assert len(values) == 1


def test_evaluate_single_perfect_dataset():
    report = evaluate({"D1": [rec(i, "person", "person") for i in range(4)]})
    assert all(r.score == 1.0 for r in report.rows)
    assert all(r.dataset_id == "D1" for r in report.rows)
    assert report.row("D1", "MAP").accuracy_pct == 100.0


def test_evaluate_overall_accuracy_from_union_counts():
    d1 = [rec(i, "person", "person") for i in range(3530)] + \
         [rec(4000 + i, None, "person") for i in range(470)]
    d2 = [rec(i, None, None) for i in range(3530)] + \
         [rec(4000 + i, "person", None) for i in range(470)]
    report = evaluate({"D1": d1, "D2": d2})
    overall = report.row("D", "MAP")
    assert overall.score == pytest.approx(0.8825, abs=5e-5)
    assert overall.accuracy_pct == pytest.approx(88.25, abs=0.005)


def test_evaluate_keeps_undefined_cells():
    report = evaluate({"D1": [rec(i, None, None) for i in range(5)],
                       "D2": list(FOUR_CASES)})
    row = report.row("D1", "Recall")
    assert row.score is None
    assert report.row("D1", "MAP").score == 1.0
    assert report.row("D", "Recall").score is not None


def test_evaluate_rejects_empty():
    with pytest.raises(EmptyLogError):
        evaluate({})
    with pytest.raises(EmptyLogError):
        evaluate({"D1": []})


def test_render_report_table():
    report = evaluate({"D1": [rec(i, None, None) for i in range(5)]})
    text = render_report(report)
    lines = text.strip().splitlines()
    assert lines[0] == "dataset\tmetric\tscore\tavg_fps\taccuracy_pct"
    assert len(lines) == 5
    assert any("undefined" in ln for ln in lines[1:])
    assert all(len(ln.split("\t")) == 5 for ln in lines)


# --- dataset descriptors ---

def test_shipped_dataset_descriptors():
    assert set(DATASETS) == {"D1", "D2", "D3", "D4"}
    assert DATASETS["D1"].nature == "Fast-moving blurred objects"
    assert DATASETS["D1"].testing_feature == "Fast movement detection"
    assert DATASETS["D2"].nature == "Fast and Slow rotation of an object"
    assert DATASETS["D3"].testing_feature == "Correct the error rate for mismatch detection"
    assert DATASETS["D4"].nature == "Lower pixel image"
    with pytest.raises(ValueError):
        DatasetDescriptor("D5", "x", "y")


# --- log file format ---

def test_odmlog_roundtrip():
    records = FOUR_CASES + [rec(10, "box", "box", 33.25)]
    text = format_odmlog("D2", records)
    ds, parsed = parse_odmlog(text)
    assert ds == "D2"
    assert parsed == records


def test_odmlog_rejects_malformed():
    with pytest.raises(DetectionLogFormatError):
        parse_odmlog("")
    with pytest.raises(DetectionLogFormatError):
        parse_odmlog("odmlog v2 D1\n")
    with pytest.raises(DetectionLogFormatError):
        parse_odmlog("odmlog v1 D1\n1,person,person\n")  # missing latency
    with pytest.raises(DetectionLogFormatError):
        parse_odmlog("odmlog v1 D1\n1,person,person,-5.0\n")
    with pytest.raises(DetectionLogFormatError):
        parse_odmlog("odmlog v1 D1\nx,person,person,50.0\n")


def test_record_label_validation():
    with pytest.raises(ValueError):
        rec(0, "a,b", None)
    with pytest.raises(ValueError):
        rec(0, "-", None)
    with pytest.raises(ValueError):
        rec(0, " person", None)
    with pytest.raises(ValueError):
        DetectionRecord(0, None, None, latency_ms=0.0)
