"""Cross-camera identity association.

Pairwise trajectory distances are restricted to candidates admitted by the
camera link model, then merged greedily in ascending order with a union-find,
subject to a same-camera temporal exclusion and a per-link order constraint.
An exhaustive correlation-clustering solver is kept as a test oracle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .clm import CameraLinkModel, ZonePair, candidate_filter, transition_times
from .core import CapacityError, ConfigError, GlobalTrack, InputError, Tracklet, feature_distance
from .zones import Zone

log = logging.getLogger(__name__)

INF = math.inf
BIP_MAX_NODES = 12


@dataclass(frozen=True)
class PairLink:
    """Which link admitted a candidate pair, and its transition frames."""

    link: int
    src: int
    dst: int
    t_s: int
    t_d: int


@dataclass
class DistanceMatrix:
    values: np.ndarray
    links: dict = field(default_factory=dict)  # (i, j), i < j -> PairLink

    def __post_init__(self):
        m = np.asarray(self.values, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError("distance matrix must be square")
        if not np.array_equal(m, m.T):
            raise InputError("distance matrix must be symmetric")
        if np.any(m < 0):
            raise InputError("distances must be non-negative")
        m = m.copy()
        np.fill_diagonal(m, INF)
        self.values = m

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def finite_pairs(self) -> int:
        iu = np.triu_indices(self.n, 1)
        return int(np.isfinite(self.values[iu]).sum())


@dataclass(frozen=True)
class AssociationConstraints:
    delta: float = 0.5
    iterations: int = 2
    enforce_order: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")


class LinkOrderState:
    """Accepted (t_s, t_d) pairs per camera link."""

    def __init__(self):
        self.accepted: dict[int, list[tuple[int, int]]] = {}

    def check(self, link: int, t_s: int, t_d: int) -> bool:
        return order_check(self, link, t_s, t_d)

    def add(self, link: int, t_s: int, t_d: int) -> None:
        pairs = self.accepted.setdefault(link, [])
        pairs.append((t_s, t_d))
        pairs.sort()


def order_check(state: LinkOrderState, link: int, t_s: int, t_d: int) -> bool:
    """True iff t_d stays non-decreasing in t_s after inserting (t_s, t_d)."""
    for a_s, a_d in state.accepted.get(link, ()):
        if (a_s - t_s) * (a_d - t_d) < 0:
            return False
    return True


def build_distance_matrix(tracklets: Sequence[Tracklet],
                          features: Sequence[Optional[np.ndarray]],
                          model: Optional[CameraLinkModel] = None,
                          labels: Optional[Sequence[Optional[ZonePair]]] = None,
                          zones: Sequence[Zone] = ()) -> DistanceMatrix:
    """Feature distances for admissible cross-camera pairs, +inf elsewhere.

    Without a model every cross-camera pair with features on both sides is
    admissible (appearance-only association).
    """
    n = len(tracklets)
    if len(features) != n or (labels is not None and len(labels) != n):
        raise InputError("features and labels must align with tracklets")
    m = np.full((n, n), INF)
    links: dict[tuple[int, int], PairLink] = {}
    zone_index = {(z.camera, z.id): z for z in zones}
    for i in range(n):
        for j in range(i + 1, n):
            a, b = tracklets[i], tracklets[j]
            if a.camera == b.camera or features[i] is None or features[j] is None:
                continue
            if model is None:
                m[i, j] = m[j, i] = feature_distance(features[i], features[j])
                continue
            found = None
            for src, dst in ((i, j), (j, i)):
                s, d = tracklets[src], tracklets[dst]
                for li, link in enumerate(model.links):
                    if link.source_camera != s.camera or link.dest_camera != d.camera:
                        continue
                    if candidate_filter(link, s, d, labels[src], labels[dst], zone_index):
                        t_s, t_d = transition_times(link, s, d, zone_index)
                        found = PairLink(li, src, dst, t_s, t_d)
                        break
                if found is not None:
                    break
            if found is not None:
                m[i, j] = m[j, i] = feature_distance(features[i], features[j])
                links[(i, j)] = found
    return DistanceMatrix(m, links)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, u):
        while self.parent[u] != u:
            self.parent[u] = self.parent[self.parent[u]]
            u = self.parent[u]
        return u

    def union(self, u, v):
        ru, rv = self.find(u), self.find(v)
        if ru != rv:
            # smaller index becomes the root, keeps ids deterministic
            if rv < ru:
                ru, rv = rv, ru
            self.parent[rv] = ru


def _clusters_compatible(members_a, members_b, tracklets) -> bool:
    for i in members_a:
        for j in members_b:
            ti, tj = tracklets[i], tracklets[j]
            if ti.camera == tj.camera and ti.overlaps_in_time(tj):
                return False
    return True


def hierarchical_cluster(dm: DistanceMatrix, constraints: AssociationConstraints = AssociationConstraints(),
                         tracklets: Optional[Sequence[Tracklet]] = None) -> list[list[int]]:
    """Greedy single-linkage merging in ascending distance order.

    Returns clusters as sorted index lists, ordered by their smallest index.
    Pairs that violate a constraint are set to +inf and never revisited.
    """
    m = dm.values.copy()
    n = dm.n
    iu, ju = np.triu_indices(n, 1)
    vals = m[iu, ju]
    finite = np.isfinite(vals)
    order = sorted(zip(vals[finite].tolist(), iu[finite].tolist(), ju[finite].tolist()))

    uf = _UnionFind(n)
    members = {i: [i] for i in range(n)}
    state = LinkOrderState()
    for _ in range(constraints.iterations):
        merged_any = False
        for _, i, j in order:
            d = m[i, j]
            if not d < constraints.delta:
                continue
            ri, rj = uf.find(i), uf.find(j)
            if ri == rj:
                continue
            ok = tracklets is None or _clusters_compatible(members[ri], members[rj], tracklets)
            pl = dm.links.get((i, j))
            if ok and constraints.enforce_order and pl is not None:
                ok = order_check(state, pl.link, pl.t_s, pl.t_d)
            if not ok:
                m[i, j] = m[j, i] = INF
                continue
            if constraints.enforce_order and pl is not None:
                state.add(pl.link, pl.t_s, pl.t_d)
            uf.union(ri, rj)
            root = uf.find(ri)
            other = rj if root == ri else ri
            members[root] = members[root] + members.pop(other)
            merged_any = True
        if not merged_any:
            break
    groups = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def to_global_tracks(clusters: Sequence[Sequence[int]], tracklets: Sequence[Tracklet]) -> list[GlobalTrack]:
    """Number clusters 1.. in order of their smallest (camera, local_id) member."""
    keyed = sorted((sorted(tracklets[i].key for i in c) for c in clusters), key=lambda ks: ks[0])
    return [GlobalTrack(gid, frozenset(ks)) for gid, ks in enumerate(keyed, start=1)]


def _set_partitions(n):
    """Restricted-growth strings of length n, i.e. every set partition once."""
    if n == 0:
        yield []
        return
    labels = [0] * n

    def rec(i, top):
        if i == n:
            yield labels
            return
        for c in range(top + 2):
            labels[i] = c
            yield from rec(i + 1, max(top, c))

    yield from rec(1, 0)


def bip_solve_exact(weights, n: Optional[int] = None) -> tuple[list[list[int]], float]:
    """Maximise sum w_ij x_ij over transitive assignments by enumerating partitions.

    `weights` is an n x n array (upper triangle used) or a mapping
    {(i, j): w}. Missing pairs weigh 0 and -inf forbids co-membership. Ties
    prefer the partition with more clusters, then the first enumerated.
    """
    if isinstance(weights, Mapping):
        if n is None:
            n = 1 + max((max(k) for k in weights), default=-1)
        w = np.zeros((n, n))
        for (i, j), v in weights.items():
            w[i, j] = w[j, i] = v
    else:
        w = np.asarray(weights, dtype=np.float64)
        n = w.shape[0]
    if n > BIP_MAX_NODES:
        raise CapacityError(f"exhaustive BIP supports at most {BIP_MAX_NODES} nodes, got {n}")

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    best_labels, best_obj, best_k = None, -INF, -1
    for labels in _set_partitions(n):
        obj = 0.0
        for i, j in pairs:
            if labels[i] == labels[j]:
                obj += w[i, j]
        if obj == -INF:
            continue
        k = max(labels) + 1 if n else 0
        if obj > best_obj or (obj == best_obj and k > best_k):
            best_labels, best_obj, best_k = list(labels), obj, k
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(best_labels or []):
        groups.setdefault(lab, []).append(i)
    return sorted(groups.values(), key=lambda g: g[0]), float(best_obj if n else 0.0)
