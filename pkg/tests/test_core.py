import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtmct.core import (BoundingBox, FrameObservation, GlobalTrack, InputError, Rect, Tracklet,
                        check_partition, feature_distance, frames_to_seconds, iou, overlap_ratio)

coord = st.floats(-500, 500, allow_nan=False)
extent = st.floats(0.5, 200, allow_nan=False)
boxes = st.builds(BoundingBox, coord, coord, extent, extent)


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(1 / 3)


def test_iou_touching_edges_is_zero():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 10, 10)) == 0.0


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


def test_overlap_ratio_examples():
    b = BoundingBox(0, 0, 10, 10)
    assert overlap_ratio(b, Rect(-1, -1, 20, 20)) == 1.0
    assert overlap_ratio(b, Rect(50, 50, 60, 60)) == 0.0
    assert overlap_ratio(b, Rect(5, 0, 100, 10)) == 0.5


@given(boxes, coord, coord, extent, extent)
def test_overlap_ratio_one_iff_contained(b, x, y, w, h):
    z = Rect(x, y, x + w, y + h)
    r = overlap_ratio(b, z)
    inside = z.x_min <= b.x and b.x2 <= z.x_max and z.y_min <= b.y and b.y2 <= z.y_max
    assert (r == 1.0) == inside
    ix = min(b.x2, z.x_max) - max(b.x, z.x_min)
    iy = min(b.y2, z.y_max) - max(b.y, z.y_min)
    assert (r == 0.0) == (ix <= 0 or iy <= 0)


def test_feature_distance_examples():
    assert feature_distance([1, 2], [1, 2]) == 0.0
    assert feature_distance([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))
    assert feature_distance([3, 0], [0, 4]) == 5.0
    with pytest.raises(InputError):
        feature_distance([1, 2], [1, 2, 3])


vecs = st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4)


@given(vecs, vecs, vecs)
def test_feature_distance_metric(a, b, c):
    assert feature_distance(a, b) == feature_distance(b, a)
    assert feature_distance(a, c) <= feature_distance(a, b) + feature_distance(b, c) + 1e-9


def test_box_validation():
    with pytest.raises(InputError):
        BoundingBox(0, 0, 0, 5)
    with pytest.raises(InputError):
        BoundingBox(float("nan"), 0, 1, 1)
    with pytest.raises(InputError):
        Rect(2, 0, 1, 1)


def test_tracklet_invariants():
    b = BoundingBox(0, 0, 1, 1)
    with pytest.raises(InputError):
        Tracklet(0, 1, ())
    with pytest.raises(InputError):
        Tracklet(0, 1, (FrameObservation(3, b), FrameObservation(3, b)))
    with pytest.raises(InputError):
        FrameObservation(-1, b)
    with pytest.raises(InputError):
        FrameObservation(0, b, [1.0, float("inf")])
    t = Tracklet(0, 7, (FrameObservation(2, b), FrameObservation(5, b, [1.0, 2.0])))
    assert t.key == (0, 7) and t.first_frame == 2 and t.last_frame == 5 and len(t) == 2
    assert not t.has_embeddings()
    assert t.observations[1].embedding.flags.writeable is False


def test_tracklet_time_overlap():
    b = BoundingBox(0, 0, 1, 1)
    a = Tracklet(0, 1, (FrameObservation(0, b), FrameObservation(10, b)))
    c = Tracklet(0, 2, (FrameObservation(10, b),))
    d = Tracklet(0, 3, (FrameObservation(11, b),))
    assert a.overlaps_in_time(c) and not a.overlaps_in_time(d)


def test_partition_check():
    check_partition([GlobalTrack(1, {(0, 1)}), GlobalTrack(2, {(1, 1)})])
    with pytest.raises(InputError):
        check_partition([GlobalTrack(1, {(0, 1)}), GlobalTrack(2, {(0, 1), (1, 1)})])
    with pytest.raises(InputError):
        GlobalTrack(3, set())


def test_frames_to_seconds():
    assert frames_to_seconds(25) == 2.5
    assert frames_to_seconds(30, frame_rate=30) == 1.0


def test_rect_bounding():
    r = Rect.bounding([(1, 5), (3, 2), (2, 9)])
    assert r == Rect(1, 2, 3, 9)
    assert r.contains((1, 2)) and not r.contains((0.9, 5))
    with pytest.raises(InputError):
        Rect.bounding(np.zeros((0, 2)))
