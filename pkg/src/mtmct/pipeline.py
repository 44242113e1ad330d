"""End-to-end stages: zone discovery, re-linking, link-model training, association."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .assoc import DistanceMatrix, build_distance_matrix, hierarchical_cluster, to_global_tracks
from .clm import CameraLinkModel, build_model, classify_trajectory
from .config import PipelineConfig
from .core import GlobalTrack, Tracklet
from .formats import detections_to_tracks
from .metrics import Detection
from .reid import tracklet_feature
from .tsct import RelinkRecord, relink_all
from .zones import Zone, ZoneKind, discover_zones

log = logging.getLogger(__name__)


@dataclass
class TrackingResult:
    global_tracks: list
    tracklets: list
    relinks: list = field(default_factory=list)
    traffic_zones: list = field(default_factory=list)
    distances: Optional[DistanceMatrix] = None

    @property
    def finite_pairs(self) -> int:
        return self.distances.finite_pairs() if self.distances is not None else 0


def find_zones(tracklets: Sequence[Tracklet], cfg: PipelineConfig = PipelineConfig()) -> list[Zone]:
    return discover_zones(tracklets, cfg.meanshift, cfg.zones)


def traffic_relink(tracklets: Sequence[Tracklet], cfg: PipelineConfig = PipelineConfig()
                   ) -> tuple[list[Tracklet], list[RelinkRecord], list[Zone]]:
    """Discover traffic-aware zones on the input itself and re-link inside them."""
    ta = [z for z in find_zones(tracklets, cfg) if z.kind is ZoneKind.TRAFFIC_AWARE]
    merged, records = relink_all(tracklets, ta, cfg.tsct)
    log.info("tsct: %d traffic-aware zones, %d re-links, %d -> %d tracklets",
             len(ta), len(records), len(tracklets), len(merged))
    return merged, records, ta


def train_link_model(gt: Sequence[Detection], zones: Sequence[Zone],
                     cfg: PipelineConfig = PipelineConfig()) -> CameraLinkModel:
    """Build the camera link model from identity-labelled training detections."""
    per_cam = detections_to_tracks(gt)
    by_vehicle: dict[int, list[Tracklet]] = {}
    for cam in sorted(per_cam):
        for t in per_cam[cam]:
            by_vehicle.setdefault(t.local_id, []).append(t)
    model = build_model(by_vehicle, zones, cfg.clm)
    log.info("clm: %d zone pairs, %d links", len(model.pairs), len(model.links))
    return model


def fit_zones_and_model(gt: Sequence[Detection], cfg: PipelineConfig = PipelineConfig()
                        ) -> tuple[list[Zone], CameraLinkModel]:
    """Entry/exit zones and link model from identity-labelled training detections."""
    zones = find_zones([t for ts in detections_to_tracks(gt).values() for t in ts], cfg)
    return zones, train_link_model(gt, zones, cfg)


def run_tracking(tracklets: Sequence[Tracklet], cfg: PipelineConfig = PipelineConfig(),
                 zones: Sequence[Zone] = (), model: Optional[CameraLinkModel] = None) -> TrackingResult:
    """Full multi-camera association over every camera's tracklets.

    `zones` and `model` are the entry/exit zones and link model learned on
    training data; without a model (or with pipeline.use_clm off) every
    cross-camera pair is a candidate.
    """
    tracklets = sorted(tracklets, key=lambda t: t.key)
    records, ta = [], []
    if cfg.pipeline.tsct:
        tracklets, records, ta = traffic_relink(tracklets, cfg)
        tracklets = sorted(tracklets, key=lambda t: t.key)

    rp = cfg.reid
    features = [tracklet_feature(t, rp.clip_length, rp.normalize) for t in tracklets]
    use_model = model if cfg.pipeline.use_clm else None
    labels = None
    if use_model is not None:
        labels = [classify_trajectory(t, use_model.pairs_for(t.camera), zones, cfg.clm.min_alpha)
                  for t in tracklets]
    dm = build_distance_matrix(tracklets, features, use_model, labels, zones)
    clusters = hierarchical_cluster(dm, cfg.assoc, tracklets)
    tracks = to_global_tracks(clusters, tracklets)
    log.info("assoc: %d tracklets, %d candidate pairs, %d global tracks",
             len(tracklets), dm.finite_pairs(), len(tracks))
    return TrackingResult(tracks, tracklets, records, ta, dm)


def single_camera_tracks(tracklets: Sequence[Tracklet]) -> list[GlobalTrack]:
    """Every tracklet as its own identity (single-camera output)."""
    return [GlobalTrack(k, frozenset([t.key])) for k, t in
            enumerate(sorted(tracklets, key=lambda t: t.key), start=1)]
