"""Zone discovery: mean-shift over trajectory endpoints, rectangular zones, densities.

Zones are computed per camera. Every tracklet contributes two nodes, an entry
node at the centre of its first box and an exit node at the centre of its last
box. Nodes are clustered with a flat-kernel mean shift and each cluster becomes
a rectangle bounding its members, classified from its entry/exit balance.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ConfigError, InputError, Rect, Tracklet


class NodeKind(str, enum.Enum):
    ENTRY = "entry"
    EXIT = "exit"


class ZoneKind(str, enum.Enum):
    ENTRY = "entry"
    EXIT = "exit"
    TRAFFIC_AWARE = "traffic_aware"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class ZoneNode:
    position: tuple[float, float]
    kind: NodeKind
    source: tuple[int, int]


@dataclass(frozen=True)
class Zone:
    id: int
    camera: int
    rect: Rect
    n_entry: int
    n_exit: int
    kind: ZoneKind = ZoneKind.UNCLASSIFIED

    def __post_init__(self):
        if self.n_entry < 0 or self.n_exit < 0 or self.n_entry + self.n_exit < 1:
            raise InputError(f"zone {self.id} needs at least one member node")


@dataclass(frozen=True)
class MeanShiftParams:
    bandwidth: float = 80.0
    convergence_tol: float = 0.5
    max_iters: int = 200
    merge_radius: Optional[float] = None  # None -> bandwidth / 2

    def __post_init__(self):
        if self.merge_radius is None:
            object.__setattr__(self, "merge_radius", self.bandwidth / 2.0)
        for name in ("bandwidth", "convergence_tol", "max_iters", "merge_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"mean-shift {name} must be positive")


@dataclass(frozen=True)
class ZoneThresholds:
    rho_ta: float = 0.5
    rho_e: float = 0.7
    rho_x: float = 0.7

    def __post_init__(self):
        for name in ("rho_ta", "rho_e", "rho_x"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")


@dataclass
class MeanShiftResult:
    labels: np.ndarray
    modes: np.ndarray
    iterations: list = field(default_factory=list)


def extract_zone_nodes(tracklets: Iterable[Tracklet]) -> list[ZoneNode]:
    nodes = []
    for t in tracklets:
        nodes.append(ZoneNode(t.observations[0].box.center, NodeKind.ENTRY, t.key))
        nodes.append(ZoneNode(t.observations[-1].box.center, NodeKind.EXIT, t.key))
    return nodes


def _shift_to_mode(seed, pts, params):
    x = seed
    bw2 = params.bandwidth ** 2
    for it in range(1, params.max_iters + 1):
        inside = np.sum((pts - x) ** 2, axis=1) <= bw2
        new = pts[inside].mean(axis=0)
        step = float(np.hypot(*(new - x)))
        x = new
        if step < params.convergence_tol:
            return x, it
    return x, params.max_iters


def mean_shift(points, params: MeanShiftParams = MeanShiftParams()) -> MeanShiftResult:
    """Flat-kernel mean shift seeded from every point.

    Points are processed in lexicographic order internally, so the resulting
    (mode, members) pairs do not depend on input order. Labels are numbered
    by first appearance in that canonical order.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise InputError("mean shift needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise InputError("mean shift input contains non-finite coordinates")

    order = np.lexsort((pts[:, 1], pts[:, 0]))
    sorted_pts = pts[order]

    converged = np.empty_like(sorted_pts)
    iters = []
    cache = {}
    for i, p in enumerate(sorted_pts):
        key = (p[0], p[1])
        if key not in cache:
            cache[key] = _shift_to_mode(p, sorted_pts, params)
        converged[i], it = cache[key]
        iters.append(it)

    # Keep modes with the largest support first; nearby modes fold into them.
    r2 = params.bandwidth ** 2
    support = np.array([np.sum(np.sum((sorted_pts - m) ** 2, axis=1) <= r2) for m in converged])
    candidates = sorted(range(len(converged)),
                        key=lambda i: (-support[i], converged[i][0], converged[i][1]))
    kept: list[np.ndarray] = []
    for i in candidates:
        m = converged[i]
        if all(np.hypot(*(m - k)) >= params.merge_radius for k in kept):
            kept.append(m)
    kept_arr = np.array(kept)

    nearest = np.argmin(
        ((converged[:, None, :] - kept_arr[None, :, :]) ** 2).sum(axis=2), axis=1
    )
    # relabel by first appearance in canonical order
    relabel = {}
    sorted_labels = np.empty(len(pts), dtype=int)
    for i, k in enumerate(nearest):
        if k not in relabel:
            relabel[k] = len(relabel)
        sorted_labels[i] = relabel[k]
    modes = np.empty((len(relabel), 2))
    for k, lab in relabel.items():
        modes[lab] = kept_arr[k]

    labels = np.empty(len(pts), dtype=int)
    labels[order] = sorted_labels
    its = [0] * len(pts)
    for pos, idx in enumerate(order):
        its[idx] = iters[pos]
    return MeanShiftResult(labels=labels, modes=modes, iterations=its)


def build_zones(nodes: Sequence[ZoneNode], assignment, camera: Optional[int] = None,
                first_id: int = 0) -> list[Zone]:
    """One unclassified zone per cluster label, ids assigned in label order."""
    assignment = list(assignment)
    if len(assignment) != len(nodes):
        raise InputError("assignment must cover every node")
    groups: dict[int, list[ZoneNode]] = defaultdict(list)
    for node, lab in zip(nodes, assignment):
        groups[int(lab)].append(node)
    zones = []
    for zid, lab in enumerate(sorted(groups), start=first_id):
        members = groups[lab]
        cams = {n.source[0] for n in members}
        if camera is None and len(cams) > 1:
            raise InputError("zone members span several cameras")
        cam = camera if camera is not None else next(iter(cams))
        zones.append(Zone(
            id=zid,
            camera=cam,
            rect=Rect.bounding([n.position for n in members]),
            n_entry=sum(n.kind is NodeKind.ENTRY for n in members),
            n_exit=sum(n.kind is NodeKind.EXIT for n in members),
        ))
    return zones


def densities(zone_or_counts) -> tuple[float, float, float]:
    """Return (D_e, D_x, D_ta) for a zone or an (n_entry, n_exit) pair."""
    if isinstance(zone_or_counts, Zone):
        n_e, n_x = zone_or_counts.n_entry, zone_or_counts.n_exit
    else:
        n_e, n_x = zone_or_counts
    total = n_e + n_x
    if total <= 0:
        raise InputError("zone densities need a positive node count")
    d_e = n_e / total
    d_x = n_x / total
    d_ta = 1.0 - abs(n_e - n_x) / total
    return d_e, d_x, d_ta


def classify_zone(zone, rho_ta: float = 0.5, rho_e: float = 0.7, rho_x: float = 0.7) -> ZoneKind:
    # precedence: traffic-aware, then entry, then exit
    d_e, d_x, d_ta = densities(zone)
    if d_ta >= rho_ta:
        return ZoneKind.TRAFFIC_AWARE
    if d_e >= rho_e:
        return ZoneKind.ENTRY
    if d_x >= rho_x:
        return ZoneKind.EXIT
    return ZoneKind.UNCLASSIFIED


def discover_zones(tracklets: Sequence[Tracklet],
                   params: MeanShiftParams = MeanShiftParams(),
                   thresholds: ZoneThresholds = ZoneThresholds()) -> list[Zone]:
    """Run the whole zone pipeline independently for every camera present."""
    by_cam: dict[int, list[Tracklet]] = defaultdict(list)
    for t in tracklets:
        by_cam[t.camera].append(t)
    zones = []
    for cam in sorted(by_cam):
        nodes = extract_zone_nodes(sorted(by_cam[cam], key=lambda t: t.local_id))
        result = mean_shift([n.position for n in nodes], params)
        for z in build_zones(nodes, result.labels, camera=cam):
            kind = classify_zone(z, thresholds.rho_ta, thresholds.rho_e, thresholds.rho_x)
            zones.append(Zone(z.id, z.camera, z.rect, z.n_entry, z.n_exit, kind))
    return zones


def zones_by_camera(zones: Iterable[Zone]) -> dict[int, list[Zone]]:
    out: dict[int, list[Zone]] = defaultdict(list)
    for z in zones:
        out[z.camera].append(z)
    return dict(out)


def zone_containing(zones: Sequence[Zone], point) -> Optional[Zone]:
    """First zone (by id) whose rect contains the point."""
    for z in sorted(zones, key=lambda z: z.id):
        if z.rect.contains(point):
            return z
    return None
