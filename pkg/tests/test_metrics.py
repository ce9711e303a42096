import math

import numpy as np
import pytest

from fedlf.data import longtail_counts
from fedlf.errors import InputError
from fedlf.metrics import (CSV_COLUMNS, RoundReport, classify_groups, emit_reports,
                           group_accuracies, read_reports)


def test_cifar_groups():
    g = classify_groups(longtail_counts(5000, 10, 100), 1500, 200)
    assert (g.head, g.middle, g.tail) == ((0, 1, 2), (3, 4, 5, 6), (7, 8, 9))


def test_group_boundaries():
    g = classify_groups([50, 50, 50], 100, 10)
    assert g.middle == (0, 1, 2) and not g.head and not g.tail
    g = classify_groups([100, 10, 101, 9], 100, 10)
    assert g.head == (2,) and g.tail == (3,) and g.middle == (0, 1)
    with pytest.raises(InputError):
        classify_groups([1, 2], 5, 10)


def test_groups_partition_classes(rng):
    for _ in range(20):
        counts = rng.integers(0, 500, size=12)
        g = classify_groups(counts, 300, 50)
        assert sorted(g.head + g.middle + g.tail) == list(range(12))


def test_perfect_predictions():
    g = classify_groups([30, 20, 10], 25, 15)
    y = np.array([0, 1, 2, 2, 1])
    acc = group_accuracies(y, y, g)
    assert (acc.acc_head, acc.acc_middle, acc.acc_tail, acc.acc_all) == (1.0, 1.0, 1.0, 1.0)


def test_constant_head_prediction_fixture():
    # 10 classes, one eval sample each; head = {0,1,2}, tail = {7,8,9}
    g = classify_groups(longtail_counts(5000, 10, 100), 1500, 200)
    y = np.arange(10)
    acc = group_accuracies(np.zeros(10, dtype=int), y, g)
    assert acc.acc_head == pytest.approx(1 / 3)
    assert acc.acc_middle == 0.0 and acc.acc_tail == 0.0
    assert acc.acc_all == pytest.approx(0.1)


def test_empty_group_is_nan_and_all_is_sample_weighted():
    g = classify_groups([100, 100, 50], 60, 10)          # no tail classes
    pred = np.array([0, 0, 1, 2, 2, 0])
    y = np.array([0, 0, 1, 1, 2, 2])
    acc = group_accuracies(pred, y, g)
    assert math.isnan(acc.acc_tail)
    assert acc.acc_all == pytest.approx(sum(acc.correct) / sum(acc.total), abs=1e-12)
    assert acc.acc_all == pytest.approx(4 / 6)
    with pytest.raises(InputError):
        group_accuracies([0, 1], [0], g)


def _reports():
    return [RoundReport(1, 0.5, 0.25, math.nan, 0.4, 1.2, 0.3, 7.0, 1.27, [3, 1, 4]),
            RoundReport(2, 1 / 3, 0.1234567, 0.0, 2 / 3, 0.9, 0.0, 0.0, 0.9, [])]


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_report_round_trip(tmp_path, fmt):
    path = tmp_path / f"r.{fmt}"
    emit_reports(_reports(), path, fmt)
    back = read_reports(path, fmt)
    for a, b in zip(_reports(), back):
        da, db = a.as_dict(), b.as_dict()
        assert da["round"] == db["round"] and da["clients"] == db["clients"]
        for k in CSV_COLUMNS[1:9]:
            if math.isnan(da[k]):
                assert math.isnan(db[k])
            else:
                assert db[k] == round(da[k], 6)


def test_csv_layout(tmp_path):
    path = tmp_path / "r.csv"
    emit_reports([], path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    emit_reports(_reports(), path)
    lines = path.read_text().splitlines()
    assert lines[1] == "1,0.500000,0.250000,nan,0.400000,1.200000,0.300000,7.000000,1.270000,3;1;4"


def test_emit_rejects_unknown_format(tmp_path):
    with pytest.raises(InputError):
        emit_reports([], tmp_path / "x", "xml")
