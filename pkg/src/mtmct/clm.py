"""Trajectory-based camera link model.

Trajectories are described by the (entry zone, exit zone) pair they follow
through a camera. Links join a source camera's zone pairs to a destination
camera's zone pairs for vehicles that went straight from one to the other, and
carry a window of signed transition times t_s - t_d (frames) seen in training.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .core import ConfigError, ModelError, Tracklet, overlap_ratio
from .zones import Zone, ZoneKind, zone_containing

log = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True, order=True)
class ZonePair:
    camera: int
    entry_zone: int
    exit_zone: int

    def __post_init__(self):
        if self.entry_zone == self.exit_zone:
            raise ModelError(f"zone pair in camera {self.camera} uses zone {self.entry_zone} twice")

    @property
    def zones(self) -> tuple[int, int]:
        return (self.entry_zone, self.exit_zone)


@dataclass(frozen=True)
class ZoneTraversal:
    zone: int
    alpha: float
    first_frame: int


@dataclass(frozen=True)
class CameraLink:
    source_camera: int
    dest_camera: int
    source_pairs: frozenset
    dest_pairs: frozenset
    transition_zone_src: int
    transition_zone_dst: int
    window: tuple[float, float]
    sample_count: int

    def __post_init__(self):
        object.__setattr__(self, "source_pairs", frozenset(self.source_pairs))
        object.__setattr__(self, "dest_pairs", frozenset(self.dest_pairs))
        lo, hi = self.window
        if lo > hi:
            raise ModelError(f"inverted transition window {self.window}")
        if self.sample_count < 1:
            raise ModelError("a camera link needs at least one sample")
        if any(self.transition_zone_src not in p.zones for p in self.source_pairs):
            raise ModelError("source transition zone missing from a source zone pair")
        if any(self.transition_zone_dst not in p.zones for p in self.dest_pairs):
            raise ModelError("destination transition zone missing from a destination zone pair")

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.source_camera, self.dest_camera,
                self.transition_zone_src, self.transition_zone_dst)


@dataclass(frozen=True)
class CameraLinkModel:
    pairs: tuple = ()
    links: tuple = ()

    def pairs_for(self, camera: int) -> list[ZonePair]:
        return [p for p in self.pairs if p.camera == camera]

    def links_between(self, src_cam: int, dst_cam: int) -> list[CameraLink]:
        return [l for l in self.links if l.source_camera == src_cam and l.dest_camera == dst_cam]


@dataclass(frozen=True)
class CLMParams:
    min_alpha: float = 0.05
    pad_fraction: float = 0.2
    min_pad: float = 10.0
    allow_traffic_aware_pairs: bool = False

    def __post_init__(self):
        if not 0.0 <= self.min_alpha < 1.0:
            raise ConfigError("min_alpha must lie in [0, 1)")
        if self.pad_fraction < 0 or self.min_pad < 0:
            raise ConfigError("window padding must be non-negative")


def trajectory_traversals(t: Tracklet, zones: Iterable[Zone], min_alpha: float = 0.0) -> list[ZoneTraversal]:
    """Zones the track passes through, with peak overlap ratio, in first-contact order."""
    out = []
    for z in zones:
        peak = 0.0
        first = None
        for o in t.observations:
            r = overlap_ratio(o.box, z.rect)
            if r > 0:
                if first is None:
                    first = o.frame
                peak = max(peak, r)
        if first is not None and peak > min_alpha:
            out.append(ZoneTraversal(z.id, peak, first))
    out.sort(key=lambda v: (v.first_frame, v.zone))
    return out


def zone_pair_distance(pair: ZonePair, traversals: Sequence[ZoneTraversal]) -> float:
    """Sum over zones in P or V of |1(z in P) - alpha_z|; infinite on order conflict."""
    seen = {v.zone: v for v in traversals}
    entry, exit_ = seen.get(pair.entry_zone), seen.get(pair.exit_zone)
    if entry is not None and exit_ is not None and exit_.first_frame < entry.first_frame:
        return INF
    # alpha <= 1, so |1 - alpha| = 1 - alpha; summing the raw pieces with fsum
    # gives the correctly rounded exact total regardless of zone order
    pieces = []
    for z in set(pair.zones) | set(seen):
        alpha = seen[z].alpha if z in seen else 0.0
        if z in pair.zones:
            pieces += [1.0, -alpha]
        else:
            pieces.append(alpha)
    return math.fsum(pieces)


def classify_trajectory(t: Tracklet, pairs: Sequence[ZonePair], zones: Sequence[Zone],
                        min_alpha: float = 0.0) -> Optional[ZonePair]:
    """Closest zone pair, first in the given order on ties; None if all infinite."""
    cam_zones = [z for z in zones if z.camera == t.camera]
    v = trajectory_traversals(t, cam_zones, min_alpha)
    best, best_d = None, INF
    for p in pairs:
        if p.camera != t.camera:
            continue
        d = zone_pair_distance(p, v)
        if d < best_d:
            best, best_d = p, d
    return best


def first_overlap_frame(t: Tracklet, zone: Zone) -> Optional[int]:
    for o in t.observations:
        if overlap_ratio(o.box, zone.rect) > 0:
            return o.frame
    return None


def endpoint_pair(t: Tracklet, zones: Sequence[Zone],
                  allow_traffic_aware: bool = False) -> Optional[ZonePair]:
    """Zone pair observed directly from the zones holding the track's end points."""
    cam_zones = [z for z in zones if z.camera == t.camera]
    start = zone_containing(cam_zones, t.observations[0].box.center)
    end = zone_containing(cam_zones, t.observations[-1].box.center)
    if start is None or end is None or start.id == end.id:
        return None
    ok_start = {ZoneKind.ENTRY} | ({ZoneKind.TRAFFIC_AWARE} if allow_traffic_aware else set())
    ok_end = {ZoneKind.EXIT} | ({ZoneKind.TRAFFIC_AWARE} if allow_traffic_aware else set())
    if start.kind not in ok_start or end.kind not in ok_end:
        return None
    return ZonePair(t.camera, start.id, end.id)


def observed_pairs(tracklets: Iterable[Tracklet], zones: Sequence[Zone],
                   allow_traffic_aware: bool = False) -> list[ZonePair]:
    """Entry x exit combinations actually followed by at least one track."""
    seen = set()
    for t in tracklets:
        p = endpoint_pair(t, zones, allow_traffic_aware)
        if p is not None:
            seen.add(p)
    return sorted(seen)


def window_with_pad(samples: Sequence[float], params: CLMParams = CLMParams(),
                    pad: Optional[float] = None) -> tuple[float, float]:
    lo, hi = min(samples), max(samples)
    if pad is None:
        pad = max(params.min_pad, params.pad_fraction * (hi - lo))
    return (lo - pad, hi + pad)


def make_link(source_pairs: Iterable[ZonePair], dest_pairs: Iterable[ZonePair],
              samples: Sequence[float], params: CLMParams = CLMParams(),
              pad: Optional[float] = None,
              traversal_counts: Optional[Mapping[tuple[int, int], int]] = None) -> CameraLink:
    """Assemble a link, identifying the transition zone shared on each side.

    The source side prefers the shared exit zone, the destination side the
    shared entry zone; remaining ties go to the zone traversed most often.
    Raises ModelError when a side has no zone common to all its pairs.
    """
    src = sorted(set(source_pairs))
    dst = sorted(set(dest_pairs))
    if not src or not dst or not samples:
        raise ModelError("a link needs source pairs, destination pairs and samples")
    for side in (src, dst):
        if len({p.camera for p in side}) != 1:
            raise ModelError("zone pairs on one side of a link span several cameras")
    counts = traversal_counts or {}

    def pick(pairs, preferred):
        common = set(pairs[0].zones)
        for p in pairs[1:]:
            common &= set(p.zones)
        if not common:
            raise ModelError(
                f"camera {pairs[0].camera}: zone pairs {[p.zones for p in pairs]} share no transition zone")
        cam = pairs[0].camera
        return min(common, key=lambda z: (
            not all(getattr(p, preferred) == z for p in pairs),
            -counts.get((cam, z), 0),
            z,
        ))

    z_s = pick(src, "exit_zone")
    z_d = pick(dst, "entry_zone")
    return CameraLink(
        source_camera=src[0].camera,
        dest_camera=dst[0].camera,
        source_pairs=frozenset(src),
        dest_pairs=frozenset(dst),
        transition_zone_src=z_s,
        transition_zone_dst=z_d,
        window=window_with_pad(samples, params, pad),
        sample_count=len(samples),
    )


def build_links(training_tracks: Mapping[int, Sequence[Tracklet]],
                labels: Mapping[tuple[int, int], Optional[ZonePair]],
                zones: Sequence[Zone],
                params: CLMParams = CLMParams(),
                pad: Optional[float] = None) -> list[CameraLink]:
    """Fold ground-truth identities into camera links with transition windows.

    `training_tracks` maps a global id to that vehicle's single-camera
    trajectories; `labels` gives each trajectory's zone pair. Consecutive
    camera visits (by first frame) form samples; each sample is keyed by
    (source camera, destination camera, source exit zone, destination entry
    zone), so opposite traffic directions produce separate links.
    """
    zone_index = {(z.camera, z.id): z for z in zones}
    buckets: dict[tuple, dict] = {}
    for gid in sorted(training_tracks):
        visits = sorted(training_tracks[gid], key=lambda t: (t.first_frame, t.camera))
        for s, d in zip(visits, visits[1:]):
            if s.camera == d.camera:
                continue
            ps, pd = labels.get(s.key), labels.get(d.key)
            if ps is None or pd is None:
                log.debug("vehicle %s: unlabeled visit between cameras %s and %s", gid, s.camera, d.camera)
                continue
            z_s = zone_index[(s.camera, ps.exit_zone)]
            z_d = zone_index[(d.camera, pd.entry_zone)]
            t_s = first_overlap_frame(s, z_s)
            t_d = first_overlap_frame(d, z_d)
            if t_s is None or t_d is None:
                log.debug("vehicle %s: no transition-zone contact between cameras %s and %s",
                          gid, s.camera, d.camera)
                continue
            key = (s.camera, d.camera, ps.exit_zone, pd.entry_zone)
            b = buckets.setdefault(key, {"src": set(), "dst": set(), "dt": []})
            b["src"].add(ps)
            b["dst"].add(pd)
            b["dt"].append(t_s - t_d)

    counts: dict[tuple[int, int], int] = defaultdict(int)
    for p in labels.values():
        if p is not None:
            counts[(p.camera, p.entry_zone)] += 1
            counts[(p.camera, p.exit_zone)] += 1
    links = [make_link(b["src"], b["dst"], b["dt"], params, pad, counts)
             for _, b in sorted(buckets.items())]
    return links


def build_model(training_tracks: Mapping[int, Sequence[Tracklet]], zones: Sequence[Zone],
                params: CLMParams = CLMParams()) -> CameraLinkModel:
    """Observe zone pairs, classify every training trajectory, and build links."""
    all_tracks = [t for ts in training_tracks.values() for t in ts]
    pairs = observed_pairs(all_tracks, zones, params.allow_traffic_aware_pairs)
    labels = {t.key: classify_trajectory(t, pairs, zones, params.min_alpha) for t in all_tracks}
    links = build_links(training_tracks, labels, zones, params)
    return CameraLinkModel(pairs=tuple(pairs), links=tuple(links))


def transition_times(link: CameraLink, src: Tracklet, dst: Tracklet,
                     zone_index: Mapping[tuple[int, int], Zone]) -> Optional[tuple[int, int]]:
    z_s = zone_index.get((link.source_camera, link.transition_zone_src))
    z_d = zone_index.get((link.dest_camera, link.transition_zone_dst))
    if z_s is None or z_d is None:
        return None
    t_s = first_overlap_frame(src, z_s)
    t_d = first_overlap_frame(dst, z_d)
    if t_s is None or t_d is None:
        return None
    return t_s, t_d


def candidate_filter(link: CameraLink, src: Tracklet, dst: Tracklet,
                     src_pair: Optional[ZonePair], dst_pair: Optional[ZonePair],
                     zone_index: Mapping[tuple[int, int], Zone]) -> bool:
    """True iff both labels belong to the link and t_s - t_d lies in its window."""
    if src.camera != link.source_camera or dst.camera != link.dest_camera:
        return False
    if src_pair not in link.source_pairs or dst_pair not in link.dest_pairs:
        return False
    times = transition_times(link, src, dst, zone_index)
    if times is None:
        return False
    dt = times[0] - times[1]
    return link.window[0] <= dt <= link.window[1]
