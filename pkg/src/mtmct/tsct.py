"""Traffic-aware re-linking of tracklets broken inside traffic-aware zones.

Each traffic-aware zone keeps a queue of tracklets that ended inside it. When a
tracklet starts inside the same zone, the queued tracklet with the closest
appearance (and a plausible frame gap) is taken out and the two are joined.
Events are handled strictly in frame order, ends before starts on ties.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ConfigError, InputError, Tracklet, feature_distance
from .reid import DEFAULT_CLIP_LENGTH, tracklet_feature
from .zones import Zone, ZoneKind

log = logging.getLogger(__name__)

ORDER_TIE_TOLERANCE = 0.05


@dataclass(frozen=True)
class RelinkParams:
    sim_threshold: float = 0.35
    max_gap: int = 600
    use_order_prior: bool = True
    clip_length: int = DEFAULT_CLIP_LENGTH

    def __post_init__(self):
        if not self.sim_threshold > 0:
            raise ConfigError("sim_threshold must be positive")
        if not self.max_gap > 0:
            raise ConfigError("max_gap must be positive")
        if not self.clip_length >= 1:
            raise ConfigError("clip_length must be at least 1")


@dataclass(frozen=True)
class QueueEntry:
    local_id: int
    last_frame: int
    feature: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class StartEvent:
    local_id: int
    first_frame: int
    feature: np.ndarray = field(compare=False)


@dataclass(frozen=True)
class Match:
    entry: QueueEntry
    distance: float
    gap: int


@dataclass(frozen=True)
class RelinkRecord:
    camera: int
    zone_id: int
    earlier: int
    later: int
    gap: int
    distance: float


class ZoneQueue:
    """FIFO store of tracklets that ended inside one zone, oldest first."""

    def __init__(self, zone_id: int, entries: Sequence[QueueEntry] = ()):
        self.zone_id = zone_id
        self.entries: list[QueueEntry] = []
        for e in entries:
            self.push(e)

    def __len__(self):
        return len(self.entries)

    def push(self, entry: QueueEntry) -> None:
        if any(e.local_id == entry.local_id for e in self.entries):
            raise InputError(f"tracklet {entry.local_id} already queued in zone {self.zone_id}")
        # keep ascending last_frame; equal frames keep arrival order
        pos = len(self.entries)
        while pos > 0 and self.entries[pos - 1].last_frame > entry.last_frame:
            pos -= 1
        self.entries.insert(pos, entry)

    def evict(self, frame: int, max_gap: int) -> None:
        self.entries = [e for e in self.entries if frame - e.last_frame <= max_gap]

    def match(self, event: StartEvent, params: RelinkParams) -> Optional[Match]:
        """Pop and return the best queued candidate for a start event, if any."""
        self.evict(event.first_frame, params.max_gap)
        scored = []
        for pos, e in enumerate(self.entries):
            gap = event.first_frame - e.last_frame
            if e.local_id == event.local_id or not 0 < gap <= params.max_gap:
                continue
            d = feature_distance(e.feature, event.feature)
            if d < params.sim_threshold:
                scored.append((d, pos, e, gap))
        if not scored:
            return None
        best = min(scored, key=lambda s: (s[0], s[1]))
        if params.use_order_prior:
            limit = best[0] * (1.0 + ORDER_TIE_TOLERANCE)
            best = min((s for s in scored if s[0] <= limit), key=lambda s: s[1])
        d, pos, e, gap = best
        del self.entries[pos]
        return Match(entry=e, distance=d, gap=gap)


def queue_update(queue: ZoneQueue, event, params: RelinkParams) -> tuple[ZoneQueue, Optional[Match]]:
    """Apply one end (QueueEntry) or start (StartEvent) event to a queue copy."""
    q = ZoneQueue(queue.zone_id)
    q.entries = list(queue.entries)
    if isinstance(event, QueueEntry):
        q.evict(event.last_frame, params.max_gap)
        q.push(event)
        return q, None
    if isinstance(event, StartEvent):
        return q, q.match(event, params)
    raise InputError(f"unknown queue event {event!r}")


def _zone_of(point, zones):
    for z in zones:
        if z.rect.contains(point):
            return z
    return None


def merge_tracklets(parts: Sequence[Tracklet]) -> Tracklet:
    parts = sorted(parts, key=lambda t: t.first_frame)
    obs = sorted((o for t in parts for o in t.observations), key=lambda o: o.frame)
    return Tracklet(camera=parts[0].camera, local_id=parts[0].local_id, observations=tuple(obs))


def relink(tracklets: Sequence[Tracklet], zones: Sequence[Zone],
           params: RelinkParams = RelinkParams()) -> tuple[list[Tracklet], list[RelinkRecord]]:
    """Join tracklets that break and resume inside the same traffic-aware zone.

    Returns the coarsened tracklet list (sorted by local_id, each merged track
    keeping its earliest member's id) and one record per join.
    """
    if not tracklets:
        return [], []
    cams = {t.camera for t in tracklets} | {z.camera for z in zones}
    if len(cams) > 1:
        raise InputError(f"relink works on one camera at a time, got cameras {sorted(cams)}")
    camera = tracklets[0].camera
    zones = sorted((z for z in zones if z.kind is ZoneKind.TRAFFIC_AWARE), key=lambda z: z.id)
    by_id = {t.local_id: t for t in tracklets}
    if len(by_id) != len(tracklets):
        raise InputError("duplicate local ids in relink input")

    events = []  # (frame, 0=end/1=start, local_id, zone)
    for t in tracklets:
        z_end = _zone_of(t.observations[-1].box.center, zones)
        z_start = _zone_of(t.observations[0].box.center, zones)
        if z_end is not None:
            events.append((t.last_frame, 0, t.local_id, z_end.id))
        if z_start is not None:
            events.append((t.first_frame, 1, t.local_id, z_start.id))
    events.sort()

    queues = {z.id: ZoneQueue(z.id) for z in zones}
    successor: dict[int, int] = {}
    records = []
    for frame, kind, lid, zid in events:
        t = by_id[lid]
        n = params.clip_length
        if kind == 0:
            f = tracklet_feature(t, n, observations=t.observations[-n:])
            if f is None:
                continue
            queues[zid].evict(frame, params.max_gap)
            queues[zid].push(QueueEntry(lid, frame, f))
        else:
            f = tracklet_feature(t, n, observations=t.observations[:n])
            if f is None:
                continue
            m = queues[zid].match(StartEvent(lid, frame, f), params)
            if m is None:
                continue
            earlier = by_id[m.entry.local_id]
            if earlier.overlaps_in_time(t):
                continue
            successor[m.entry.local_id] = lid
            records.append(RelinkRecord(camera, zid, m.entry.local_id, lid, m.gap, m.distance))
            log.debug("relink cam %s zone %s: %s -> %s gap=%d dist=%.4f",
                      camera, zid, m.entry.local_id, lid, m.gap, m.distance)

    has_pred = set(successor.values())
    out = []
    for lid in sorted(by_id):
        if lid in has_pred:
            continue
        chain = [by_id[lid]]
        while chain[-1].local_id in successor:
            chain.append(by_id[successor[chain[-1].local_id]])
        out.append(merge_tracklets(chain) if len(chain) > 1 else chain[0])
    out.sort(key=lambda t: t.local_id)
    return out, records


def relink_all(tracklets: Sequence[Tracklet], zones: Sequence[Zone],
               params: RelinkParams = RelinkParams()) -> tuple[list[Tracklet], list[RelinkRecord]]:
    """Run relink independently for every camera."""
    out, records = [], []
    for cam in sorted({t.camera for t in tracklets}):
        ts = [t for t in tracklets if t.camera == cam]
        zs = [z for z in zones if z.camera == cam]
        merged, recs = relink(ts, zs, params)
        out.extend(merged)
        records.extend(recs)
    return out, records


def format_report(records: Sequence[RelinkRecord]) -> str:
    lines = ["# mtmct relink-report v1", "camera_id,zone_id,earlier_id,later_id,gap_frames,distance"]
    for r in records:
        lines.append(f"{r.camera},{r.zone_id},{r.earlier},{r.later},{r.gap},{r.distance:.6f}")
    return "\n".join(lines) + "\n"
