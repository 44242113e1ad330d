import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtmct.core import ConfigError, InputError, Rect
from mtmct.zones import (MeanShiftParams, NodeKind, Zone, ZoneKind, ZoneNode, ZoneThresholds, build_zones,
                         classify_zone, densities, discover_zones, extract_zone_nodes, mean_shift,
                         zone_containing)

from conftest import line, make_track


def _flat_mode(seed, pts, bw, tol, max_iters=1000):
    # direct flat-kernel iteration, written independently of the library
    x = np.array(seed, dtype=float)
    for _ in range(max_iters):
        d = np.sqrt(((pts - x) ** 2).sum(axis=1))
        new = pts[d <= bw].mean(axis=0)
        if np.linalg.norm(new - x) < tol:
            return new
        x = new
    return x


def test_extract_nodes_counts_and_positions():
    assert extract_zone_nodes([]) == []
    tracks = [make_track(0, k, line((10 * k, 5), (100 + k, 50), 6)) for k in range(5)]
    nodes = extract_zone_nodes(tracks)
    assert len(nodes) == 10
    entries = [n for n in nodes if n.kind is NodeKind.ENTRY]
    assert [n.position for n in entries] == [t.observations[0].box.center for t in tracks]
    exits = [n for n in nodes if n.kind is NodeKind.EXIT]
    assert [n.position for n in exits] == [t.observations[-1].box.center for t in tracks]
    assert {n.source for n in nodes} == {t.key for t in tracks}


def test_mean_shift_trivial_cases():
    r = mean_shift([(3.0, 4.0)] * 7)
    assert set(r.labels) == {0}
    assert np.allclose(r.modes[0], (3, 4))
    r = mean_shift([(1.5, -2.0)])
    assert list(r.labels) == [0] and np.allclose(r.modes[0], (1.5, -2.0))


def test_mean_shift_two_far_groups(rng):
    p = MeanShiftParams(bandwidth=10.0)
    a = rng.normal((0, 0), 2.0, size=(30, 2))
    b = rng.normal((1000, 1000), 2.0, size=(20, 2))
    r = mean_shift(np.vstack([a, b]), p)
    assert len(r.modes) == 2
    assert len(set(r.labels[:30])) == 1 and len(set(r.labels[30:])) == 1
    for grp, lab in ((a, r.labels[0]), (b, r.labels[-1])):
        oracle = _flat_mode(grp.mean(axis=0), grp, p.bandwidth, p.convergence_tol)
        assert np.linalg.norm(r.modes[lab] - oracle) < p.convergence_tol
        assert np.linalg.norm(r.modes[lab] - grp.mean(axis=0)) < p.convergence_tol


def test_mean_shift_modes_are_fixed_points(rng):
    p = MeanShiftParams(bandwidth=30.0)
    pts = np.vstack([rng.normal(c, 6.0, size=(25, 2)) for c in ((0, 0), (200, 0), (0, 200))])
    r = mean_shift(pts, p)
    for m in r.modes:
        inside = np.sqrt(((pts - m) ** 2).sum(axis=1)) <= p.bandwidth
        assert np.linalg.norm(pts[inside].mean(axis=0) - m) < p.convergence_tol
    for i, m in enumerate(r.modes):
        for j in range(i):
            assert np.linalg.norm(m - r.modes[j]) >= p.merge_radius


def test_mean_shift_rejects_bad_input():
    with pytest.raises(InputError):
        mean_shift(np.zeros((0, 2)))
    with pytest.raises(InputError):
        mean_shift([(0.0, float("nan"))])
    with pytest.raises(ConfigError):
        MeanShiftParams(bandwidth=0)


def _mode_members(result, pts):
    out = set()
    for lab, m in enumerate(result.modes):
        members = tuple(sorted(map(tuple, pts[result.labels == lab].tolist())))
        out.add((tuple(np.round(m, 9)), members))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_mean_shift_permutation_invariant(seed):
    g = np.random.default_rng(seed)
    pts = np.round(np.vstack([g.normal(c, 15.0, size=(g.integers(1, 12), 2))
                              for c in g.uniform(0, 400, size=(3, 2))]), 1)
    perm = g.permutation(len(pts))
    r1 = mean_shift(pts)
    r2 = mean_shift(pts[perm])
    assert _mode_members(r1, pts) == _mode_members(r2, pts[perm])


def _node(x, y, kind=NodeKind.ENTRY, src=(0, 1)):
    return ZoneNode((x, y), kind, src)


def test_build_zones_counts_and_rects():
    nodes = [_node(0, 0), _node(2, 1), _node(1, 3), _node(4, 2, NodeKind.EXIT), _node(50, 50, NodeKind.EXIT)]
    zones = build_zones(nodes, [0, 0, 0, 0, 1])
    assert len(zones) == 2
    z0, z1 = zones
    assert (z0.n_entry, z0.n_exit) == (3, 1)
    assert z0.rect == Rect(0, 0, 4, 3)
    assert z1.rect == Rect(50, 50, 50, 50) and (z1.n_entry, z1.n_exit) == (0, 1)
    with pytest.raises(InputError):
        build_zones(nodes, [0, 1])


def test_build_zones_partition():
    g = np.random.default_rng(5)
    nodes = [_node(*g.uniform(0, 100, 2), kind=NodeKind.ENTRY if k % 2 else NodeKind.EXIT, src=(0, k))
             for k in range(30)]
    labels = g.integers(0, 4, size=30)
    zones = build_zones(nodes, labels)
    assert sum(z.n_entry + z.n_exit for z in zones) == 30
    for z, lab in zip(zones, sorted(set(labels))):
        for n, l in zip(nodes, labels):
            if l == lab:
                assert z.rect.contains(n.position)


def test_densities_examples():
    assert densities((10, 10)) == (0.5, 0.5, 1.0)
    assert densities((5, 0)) == (1.0, 0.0, 0.0)
    d_e, d_x, d_ta = densities((7, 3))
    assert d_e == pytest.approx(0.7) and d_x == pytest.approx(0.3) and d_ta == pytest.approx(0.6)
    with pytest.raises(InputError):
        densities((0, 0))


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_density_identities(ne, nx):
    if ne + nx == 0:
        return
    d_e, d_x, d_ta = densities((ne, nx))
    assert abs(d_ta - 2 * min(d_e, d_x)) <= 1e-12
    assert abs(d_e + d_x - 1.0) <= 1e-12


def _zone(ne, nx):
    return Zone(0, 0, Rect(0, 0, 1, 1), ne, nx)


def test_classify_examples():
    assert classify_zone(_zone(10, 10), rho_ta=0.5) is ZoneKind.TRAFFIC_AWARE
    assert classify_zone(_zone(9, 1), 0.5, 0.75, 0.75) is ZoneKind.ENTRY
    assert classify_zone(_zone(1, 9), 0.5, 0.75, 0.75) is ZoneKind.EXIT
    assert classify_zone(_zone(6, 4), 0.9, 0.75, 0.75) is ZoneKind.UNCLASSIFIED


def test_classify_precedence_with_low_entry_threshold():
    # balanced zone satisfies every test; traffic-aware wins
    assert classify_zone(_zone(5, 5), 0.5, 0.3, 0.3) is ZoneKind.TRAFFIC_AWARE


def test_thresholds_validated():
    with pytest.raises(ConfigError):
        ZoneThresholds(rho_ta=0.0)
    with pytest.raises(ConfigError):
        ZoneThresholds(rho_e=1.5)


def test_discover_zones_per_camera():
    tracks = []
    for k in range(6):
        tracks.append(make_track(0, k, line((40 + k, 100), (600 + k, 100), 20), start=10 * k))
        tracks.append(make_track(1, k, line((600, 300 + k), (40, 300 + k), 20), start=10 * k))
    zones = discover_zones(tracks)
    assert {z.camera for z in zones} == {0, 1}
    kinds = {(z.camera, z.kind) for z in zones}
    assert kinds == {(0, ZoneKind.ENTRY), (0, ZoneKind.EXIT), (1, ZoneKind.ENTRY), (1, ZoneKind.EXIT)}
    entry0 = next(z for z in zones if z.camera == 0 and z.kind is ZoneKind.ENTRY)
    assert entry0.rect.x_max < 100 and entry0.n_entry == 6


def test_discover_zones_finds_traffic_aware_zone():
    tracks = []
    for k in range(5):
        # each vehicle breaks at x ~ 300 and resumes there
        tracks.append(make_track(0, 2 * k, line((40, 100), (300 + k, 100), 15), start=40 * k))
        tracks.append(make_track(0, 2 * k + 1, line((302 + k, 100), (600, 100), 15), start=40 * k + 20))
    zones = discover_zones(tracks)
    ta = [z for z in zones if z.kind is ZoneKind.TRAFFIC_AWARE]
    assert len(ta) == 1 and ta[0].n_entry == 5 and ta[0].n_exit == 5


def test_zone_containing_lowest_id_first():
    a = Zone(3, 0, Rect(0, 0, 10, 10), 1, 0)
    b = Zone(1, 0, Rect(5, 5, 20, 20), 1, 0)
    assert zone_containing([a, b], (7, 7)) is b
    assert zone_containing([a, b], (1, 1)) is a
    assert zone_containing([a, b], (50, 50)) is None
