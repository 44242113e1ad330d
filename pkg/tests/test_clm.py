import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtmct.core import ModelError, Rect, overlap_ratio
from mtmct.clm import (CameraLink, CLMParams, ZonePair, ZoneTraversal, build_links, build_model,
                       candidate_filter, classify_trajectory, make_link, observed_pairs,
                       trajectory_traversals, window_with_pad, zone_pair_distance)
from mtmct.zones import Zone, ZoneKind

from conftest import line, make_track

Z1 = Zone(1, 0, Rect(0, 0, 100, 100), 5, 0, ZoneKind.ENTRY)
Z2 = Zone(2, 0, Rect(200, 0, 300, 100), 0, 5, ZoneKind.EXIT)
Z3 = Zone(3, 0, Rect(100, 80, 200, 200), 0, 5, ZoneKind.EXIT)


def V(*items):
    return [ZoneTraversal(z, a, f) for z, a, f in items]


def test_traversals_examples():
    t = make_track(0, 1, [(500, 500)] * 3)
    assert trajectory_traversals(t, [Z1, Z2]) == []
    t = make_track(0, 1, [(50, 50)] * 4)
    assert trajectory_traversals(t, [Z1, Z2]) == V((1, 1.0, 0))
    # fully inside Z1, then straddling Z2 with 30% of the box inside
    t = make_track(0, 1, [(50, 50), (150, 50), (194, 50)], w=20, h=10)
    v = trajectory_traversals(t, [Z2, Z1])
    assert [x.zone for x in v] == [1, 2]
    assert v[0].alpha == 1.0 and v[1].alpha == pytest.approx(0.2)


def test_traversals_brute_force():
    g = np.random.default_rng(0)
    zones = [Z1, Z2, Z3]
    for _ in range(20):
        pts = g.uniform(-20, 320, size=(8, 2))
        t = make_track(0, 1, pts, w=30, h=30)
        got = {v.zone: (v.alpha, v.first_frame) for v in trajectory_traversals(t, zones)}
        for z in zones:
            ratios = [overlap_ratio(o.box, z.rect) for o in t.observations]
            if max(ratios) > 0:
                first = next(o.frame for o, r in zip(t.observations, ratios) if r > 0)
                assert got[z.id] == (max(ratios), first)
            else:
                assert z.id not in got


def test_traversals_min_alpha_filters_grazing():
    t = make_track(0, 1, [(50, 50), (150, 76)], w=40, h=10)  # 1 px of height inside Z3
    assert any(v.zone == 3 for v in trajectory_traversals(t, [Z1, Z3]))
    assert not any(v.zone == 3 for v in trajectory_traversals(t, [Z1, Z3], min_alpha=0.15))


def test_zone_pair_distance_examples():
    p = ZonePair(0, 1, 2)
    assert zone_pair_distance(p, V((1, 1.0, 0), (2, 1.0, 9))) == 0.0
    assert zone_pair_distance(p, V((1, 1.0, 0), (3, 0.3, 4), (2, 1.0, 9))) == pytest.approx(0.3)
    assert zone_pair_distance(p, V((2, 1.0, 0), (1, 1.0, 9))) == math.inf
    # zones of P that were not traversed count fully
    assert zone_pair_distance(p, V((1, 0.75, 0))) == pytest.approx(1.25)
    assert zone_pair_distance(p, []) == 2.0


def test_zone_pair_must_differ():
    with pytest.raises(ModelError):
        ZonePair(0, 4, 4)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.001, 1.0))
def test_spurious_traversal_adds_alpha(a1, a2, extra):
    p = ZonePair(0, 1, 2)
    base = V((1, a1, 0), (2, a2, 5))
    with_extra = base + V((7, extra, 3))
    assert zone_pair_distance(p, with_extra) - zone_pair_distance(p, base) == pytest.approx(extra, abs=1e-12)


def test_zero_distance_iff_exact_cover():
    p = ZonePair(0, 1, 2)
    assert zone_pair_distance(p, V((1, 1.0, 0), (2, 1.0, 3))) == 0.0
    assert zone_pair_distance(p, V((1, 1.0, 0), (2, 0.999, 3))) > 0
    assert zone_pair_distance(p, V((1, 1.0, 0))) > 0


def test_classify_prefers_pair_actually_exited():
    # a vehicle enters through zone 1, brushes zone 3 and leaves through zone 2;
    # pair A = (1, 2) and pair B = (1, 3)
    zones = [Z1, Z2, Z3]
    t = make_track(0, 1, line((50, 50), (250, 50), 11), w=40, h=70)
    v = trajectory_traversals(t, zones)
    a, b = ZonePair(0, 1, 2), ZonePair(0, 1, 3)
    d_a, d_b = zone_pair_distance(a, v), zone_pair_distance(b, v)
    alpha3 = next(x.alpha for x in v if x.zone == 3)
    assert d_a == pytest.approx(alpha3)
    assert d_b == pytest.approx(2 - alpha3)
    assert d_a < d_b
    assert classify_trajectory(t, [b, a], zones) == a


def test_classify_edge_cases():
    zones = [Z1, Z2]
    t = make_track(0, 1, line((50, 50), (250, 50), 11))
    assert classify_trajectory(t, [ZonePair(0, 1, 2)], zones) == ZonePair(0, 1, 2)
    backwards = make_track(0, 1, line((250, 50), (50, 50), 11))
    assert classify_trajectory(backwards, [ZonePair(0, 1, 2)], zones) is None
    assert classify_trajectory(t, [], zones) is None


def _two_camera_zones():
    return [
        Zone(0, 0, Rect(0, 0, 100, 100), 9, 0, ZoneKind.ENTRY),
        Zone(1, 0, Rect(900, 0, 1000, 100), 0, 9, ZoneKind.EXIT),
        Zone(0, 1, Rect(0, 0, 100, 100), 9, 0, ZoneKind.ENTRY),
        Zone(1, 1, Rect(900, 0, 1000, 100), 0, 9, ZoneKind.EXIT),
    ]


def _crossing(cam, lid, start, n=21):
    return make_track(cam, lid, line((50, 50), (950, 50), n), start=start)


def test_build_links_overlapping_views_example():
    zones = _two_camera_zones()
    # source exit zone first touched at frame 500, destination entry zone at 450
    # the vehicle is slow in the source view, so it appears there first
    s = _crossing(0, 1, start=500 - 75, n=81)
    d = _crossing(1, 1, start=450)
    labels = {s.key: ZonePair(0, 0, 1), d.key: ZonePair(1, 0, 1)}
    links = build_links({1: [s, d]}, labels, zones, pad=10)
    assert len(links) == 1
    link = links[0]
    assert (link.source_camera, link.dest_camera) == (0, 1)
    assert (link.transition_zone_src, link.transition_zone_dst) == (1, 0)
    first_src = next(o.frame for o in s.observations if overlap_ratio(o.box, zones[1].rect) > 0)
    assert first_src == 500
    assert link.window == (40, 60) and link.sample_count == 1


def test_build_links_skips_intermediate_camera():
    zones = _two_camera_zones() + [Zone(0, 2, Rect(0, 0, 100, 100), 9, 0, ZoneKind.ENTRY),
                                   Zone(1, 2, Rect(900, 0, 1000, 100), 0, 9, ZoneKind.EXIT)]
    a, mid, b = _crossing(0, 1, 0), _crossing(2, 1, 100), _crossing(1, 1, 200)
    labels = {t.key: ZonePair(t.camera, 0, 1) for t in (a, mid, b)}
    links = build_links({1: [a, mid, b]}, labels, zones)
    assert {(l.source_camera, l.dest_camera) for l in links} == {(0, 2), (2, 1)}


def test_window_examples():
    assert window_with_pad([30, 70], pad=10) == (20, 80)
    # default pad: max(10, 20% of span)
    assert window_with_pad([0, 200]) == (-40, 240)
    assert window_with_pad([5, 5]) == (-5, 15)


def test_links_are_direction_specific():
    zones = _two_camera_zones()
    tracks, labels = {}, {}
    for k in range(4):
        s, d = _crossing(0, k, 100 * k), _crossing(1, k, 100 * k + 30 + k)
        tracks[k] = [s, d]
        labels[s.key] = ZonePair(0, 0, 1)
        labels[d.key] = ZonePair(1, 0, 1)
    for k in range(4, 7):
        s, d = _crossing(1, k, 100 * k), _crossing(0, k, 100 * k + 60)
        tracks[k] = [s, d]
        labels[s.key] = ZonePair(1, 0, 1)
        labels[d.key] = ZonePair(0, 0, 1)
    links = build_links(tracks, labels, zones, pad=0)
    by_dir = {(l.source_camera, l.dest_camera): l for l in links}
    assert by_dir[(0, 1)].sample_count == 4 and by_dir[(1, 0)].sample_count == 3
    # t_s: exit zone first touched 19 frames in; t_d: entry zone at the first frame
    assert by_dir[(0, 1)].window == (19 - 33, 19 - 30)
    assert by_dir[(1, 0)].window == (19 - 60, 19 - 60)


def test_make_link_requires_common_zone():
    with pytest.raises(ModelError):
        make_link([ZonePair(0, 0, 1), ZonePair(0, 2, 3)], [ZonePair(1, 0, 1)], [5.0])
    link = make_link([ZonePair(0, 0, 1), ZonePair(0, 2, 1)], [ZonePair(1, 0, 1)], [5.0])
    assert link.transition_zone_src == 1 and link.transition_zone_dst == 0
    with pytest.raises(ModelError):
        CameraLink(0, 1, {ZonePair(0, 0, 1)}, {ZonePair(1, 0, 1)}, 5, 0, (0, 1), 1)
    with pytest.raises(ModelError):
        CameraLink(0, 1, {ZonePair(0, 0, 1)}, {ZonePair(1, 0, 1)}, 1, 0, (2, 1), 1)


def test_make_link_tie_break_by_traversal_count():
    src = [ZonePair(0, 0, 1)]
    dst = [ZonePair(1, 4, 5)]
    # both zones of the single destination pair are common; entry preferred
    assert make_link(src, dst, [1.0]).transition_zone_dst == 4
    # two source pairs sharing both zones in swapped roles: count decides
    src = [ZonePair(0, 0, 1), ZonePair(0, 1, 0)]
    link = make_link(src, dst, [1.0], traversal_counts={(0, 0): 10, (0, 1): 2})
    assert link.transition_zone_src == 0


def test_candidate_filter_boundaries():
    zones = _two_camera_zones()
    zi = {(z.camera, z.id): z for z in zones}
    sp, dp = ZonePair(0, 0, 1), ZonePair(1, 0, 1)
    link = CameraLink(0, 1, {sp}, {dp}, 1, 0, (-20, -10), 3)
    s = _crossing(0, 1, 0)  # t_s = 19
    assert candidate_filter(link, s, _crossing(1, 1, 39), sp, dp, zi)      # dt = -20
    assert candidate_filter(link, s, _crossing(1, 1, 29), sp, dp, zi)      # dt = -10
    assert not candidate_filter(link, s, _crossing(1, 1, 28), sp, dp, zi)  # dt = -9
    assert not candidate_filter(link, s, _crossing(1, 1, 40), sp, dp, zi)  # dt = -21
    assert not candidate_filter(link, s, _crossing(1, 1, 39), ZonePair(0, 1, 0), dp, zi)
    assert not candidate_filter(link, s, _crossing(1, 1, 39), sp, None, zi)
    far = make_track(1, 2, [(500, 500)] * 5, start=40)
    assert not candidate_filter(link, s, far, sp, dp, zi)


def test_build_model_end_to_end():
    zones = _two_camera_zones()
    tracks = {k: [_crossing(0, k, 60 * k), _crossing(1, k, 60 * k + 40 + (k % 3))] for k in range(6)}
    model = build_model(tracks, zones)
    assert model.pairs == (ZonePair(0, 0, 1), ZonePair(1, 0, 1))
    assert len(model.links) == 1 and model.links[0].sample_count == 6
    assert model.pairs_for(1) == [ZonePair(1, 0, 1)]
    assert model.links_between(0, 1) == list(model.links) and model.links_between(1, 0) == []
    assert observed_pairs([make_track(0, 9, [(50, 50)] * 3)], zones) == []


def test_params_validated():
    from mtmct.core import ConfigError
    with pytest.raises(ConfigError):
        CLMParams(min_alpha=1.0)
    with pytest.raises(ConfigError):
        CLMParams(min_pad=-1)
