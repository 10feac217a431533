import itertools

import pytest
from hypothesis import given, strategies as st

from evadkit.boxes import Box, read_boxes, write_boxes
from evadkit.evaluation import auc, frame_iou, read_labels, read_scores, tiou, write_labels, write_scores


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.4, 0.4, 0.4], [1, 0, 1]) == 0.5
    assert auc([0.2, 0.8, 0.6, 0.4], [0, 1, 0, 1]) == pytest.approx(0.75, rel=1e-6)


def test_auc_needs_both_classes():
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


def _pairwise_auc(s, y):
    pos = [a for a, l in zip(s, y) if l]
    neg = [a for a, l in zip(s, y) if not l]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return total / (len(pos) * len(neg))


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40)
       .filter(lambda r: 0 < sum(l for _, l in r) < len(r)))
def test_auc_matches_pair_count(rows):
    s = [v / 6 for v, _ in rows]
    y = [int(l) for _, l in rows]
    assert auc(s, y) == pytest.approx(_pairwise_auc(s, y), abs=1e-12)


def test_iou_examples():
    a = Box(0, 0, 2, 2)
    assert frame_iou(a, a) == 1.0
    assert frame_iou(a, Box(5, 5, 6, 6)) == 0.0
    assert frame_iou(Box(0, 0, 2, 1), Box(1, 0, 3, 1)) == pytest.approx(1 / 3, rel=1e-6)


@given(st.lists(st.integers(0, 10), min_size=8, max_size=8))
def test_iou_symmetric_and_bounded(v):
    a = Box(min(v[0], v[1]), min(v[2], v[3]), max(v[0], v[1]) + 1, max(v[2], v[3]) + 1)
    b = Box(min(v[4], v[5]), min(v[6], v[7]), max(v[4], v[5]) + 1, max(v[6], v[7]) + 1)
    assert frame_iou(a, b) == frame_iou(b, a)
    assert 0.0 <= frame_iou(a, b) <= 1.0


def test_tiou_examples():
    gt = {0: [Box(0, 0, 2, 1)], 1: [Box(0, 0, 2, 1)]}
    assert tiou(gt, gt, [0, 1]) == 1.0
    assert tiou({}, gt, [0, 1]) == 0.0
    pred = {0: [Box(0, 0, 2, 1)], 1: [Box(1, 0, 3, 1)]}
    assert tiou(pred, gt, [0, 1]) == pytest.approx(2 / 3, rel=1e-6)


def test_tiou_takes_best_prediction_per_frame():
    gt = {3: [Box(0, 0, 4, 4)]}
    pred = {3: [Box(10, 10, 12, 12), Box(0, 0, 4, 4)]}
    assert tiou(pred, gt, [3]) == 1.0


def test_score_label_box_files(tmp_path):
    write_scores([0.1, 0.25], tmp_path / "s.csv")
    assert read_scores(tmp_path / "s.csv").tolist() == [0.1, 0.25]
    write_labels([0, 1, 1], tmp_path / "l.txt")
    assert read_labels(tmp_path / "l.txt").tolist() == [0, 1, 1]
    boxes = {2: [Box(1, 2, 3, 4)], 0: [Box(0, 0, 1, 1), Box(2, 2, 5, 5)]}
    write_boxes(boxes, tmp_path / "b.csv")
    assert read_boxes(tmp_path / "b.csv") == boxes
    (tmp_path / "bad.csv").write_text("frame_index,score\n0,0.1\n2,0.3\n")
    with pytest.raises(ValueError):
        read_scores(tmp_path / "bad.csv")
