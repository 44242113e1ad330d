"""Deterministic synthetic multi-camera traffic scenarios with ground truth.

Cameras sit along a two-way corridor. Eastbound vehicles travel through
cameras in increasing index order, in the upper lane, left to right;
westbound ones the reverse in the lower lane. Each camera may hold a traffic
light for one direction where vehicles queue (first in, first out); a
fragmentation event drops the tracker output for part of the stop, splitting
that single-camera track in two inside the stop area.

All randomness derives from one SeedSequence, split per vehicle, so a seed
fixes the output exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import BoundingBox, ConfigError, FrameObservation, GlobalTrack, Tracklet
from .metrics import Detection

EAST, WEST = "east", "west"
_SPLITS = {"train": 0, "test": 1}


@dataclass(frozen=True)
class Route:
    cameras: tuple
    transit: tuple = ()  # (min, max) frames per hop
    weight: float = 1.0

    @property
    def direction(self) -> str:
        if len(self.cameras) > 1 and self.cameras[1] < self.cameras[0]:
            return WEST
        return EAST


def _default_routes():
    return (Route((0, 1, 2), ((40, 80), (40, 80))), Route((2, 1, 0), ((40, 80), (40, 80))))


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_cameras: int = 3
    routes: tuple = field(default_factory=_default_routes)
    n_vehicles: int = 20
    n_train_vehicles: int = 40
    embedding_dim: int = 64
    identity_noise_sigma: float = 0.01
    fragmentation: float = 0.0
    traffic_lights: tuple = ((1, EAST),)
    dwell: tuple = (20, 60)
    frame_rate: float = 10.0
    frame_size: tuple = (1280, 720)
    speed: float = 16.0
    headway: int = 10
    spawn_jitter: int = 30
    box_width: tuple = (70.0, 110.0)
    box_height: tuple = (50.0, 70.0)

    def validate(self) -> None:
        if self.n_cameras < 1:
            raise ConfigError("need at least one camera")
        if not self.routes:
            raise ConfigError("need at least one route")
        for r in self.routes:
            cams = tuple(r.cameras)
            if not cams or any(not 0 <= c < self.n_cameras for c in cams):
                raise ConfigError(f"route {cams} references a camera outside 0..{self.n_cameras - 1}")
            steps = {b - a for a, b in zip(cams, cams[1:])}
            if steps and steps not in ({1}, {-1}):
                raise ConfigError(f"route {cams} must visit adjacent cameras in one direction")
            if len(r.transit) != len(cams) - 1:
                raise ConfigError(f"route {cams} needs one transit range per hop")
            for lo, hi in r.transit:
                if not 1 <= lo <= hi:
                    raise ConfigError(f"route {cams} has invalid transit range ({lo}, {hi})")
            if not r.weight > 0:
                raise ConfigError("route weights must be positive")
        if not 0.0 <= self.fragmentation <= 1.0:
            raise ConfigError("fragmentation must be a probability")
        if self.identity_noise_sigma < 0:
            raise ConfigError("identity_noise_sigma must be non-negative")
        if self.n_vehicles < 0 or self.n_train_vehicles < 0:
            raise ConfigError("vehicle counts must be non-negative")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be positive")
        if self.frame_rate <= 0 or self.speed <= 0 or self.headway < 1 or self.spawn_jitter < 0:
            raise ConfigError("frame_rate, speed and headway must be positive")
        lo, hi = self.dwell
        if not 4 <= lo <= hi:
            raise ConfigError("dwell range must satisfy 4 <= min <= max")
        for cam, direction in self.traffic_lights:
            if not 0 <= cam < self.n_cameras or direction not in (EAST, WEST):
                raise ConfigError(f"invalid traffic light ({cam}, {direction})")
        w, h = self.frame_size
        if self.box_width[1] * 4 > w or self.box_height[1] * 5 > h:
            raise ConfigError("frame too small for the configured vehicle boxes")
        if self.headway * self.speed < self.box_width[1]:
            raise ConfigError("headway too short: consecutive vehicles would overlap")


@dataclass
class Scenario:
    config: ScenarioConfig
    split: str
    tracklets: list
    gt_tracks: list
    gt_detections: list
    vehicle_of: dict
    events: list
    links: list

    def tracklets_by_camera(self) -> dict:
        out = {}
        for t in self.tracklets:
            out.setdefault(t.camera, []).append(t)
        return out


@dataclass
class _Vehicle:
    vid: int
    route: Route
    rng: np.random.Generator
    width: float = 0.0
    height: float = 0.0
    base: Optional[np.ndarray] = None
    spawn_gap: int = 0
    transit: list = field(default_factory=list)
    per_cam: dict = field(default_factory=dict)
    visits: dict = field(default_factory=dict)  # camera -> timeline dict


def _draw_vehicle(v: _Vehicle, cfg: ScenarioConfig) -> None:
    rng = v.rng
    v.spawn_gap = cfg.headway + int(rng.integers(0, cfg.spawn_jitter + 1))
    v.width = float(rng.uniform(*cfg.box_width))
    v.height = float(rng.uniform(*cfg.box_height))
    base = rng.standard_normal(cfg.embedding_dim)
    v.base = base / np.linalg.norm(base)
    v.transit = [int(rng.integers(lo, hi + 1)) for lo, hi in v.route.transit]
    for cam in v.route.cameras:
        v.per_cam[cam] = {
            "lane_offset": float(np.clip(rng.normal(0.0, 6.0), -15.0, 15.0)),
            "in_jitter": float(rng.uniform(0.0, 30.0)),
            "out_jitter": float(rng.uniform(0.0, 30.0)),
            "stop_jitter": float(rng.uniform(-20.0, 20.0)),
            "dwell": int(rng.integers(cfg.dwell[0], cfg.dwell[1] + 1)),
            "frag_u": float(rng.uniform()),
            "cut_a": float(rng.uniform()),
            "cut_b": float(rng.uniform()),
        }


def _simulate(vehicles, cfg: ScenarioConfig) -> None:
    """Fill each vehicle's per-camera timeline (entry, stop, departure, exit)."""
    w = cfg.frame_size[0]
    margin = 5.0
    lights = set(cfg.traffic_lights)

    # spawn times per entry lane, in vehicle order
    lane_clock = {}
    spawn = {}
    for v in vehicles:
        lane = (v.route.cameras[0], v.route.direction)
        t = lane_clock.get(lane, 0) + v.spawn_gap
        lane_clock[lane] = t
        spawn[v.vid] = t

    for direction, cams in ((EAST, range(cfg.n_cameras)), (WEST, range(cfg.n_cameras - 1, -1, -1))):
        prev_cam = None
        for cam in cams:
            present = [v for v in vehicles if v.route.direction == direction and cam in v.route.cameras]
            proposed = {}
            from_prev = []
            for v in present:
                k = v.route.cameras.index(cam)
                if k == 0:
                    proposed[v.vid] = spawn[v.vid]
                else:
                    proposed[v.vid] = v.visits[prev_cam]["exit"] + 1 + v.transit[k - 1]
                    from_prev.append(v)
            # arrivals from the previous camera keep their exit order
            from_prev.sort(key=lambda v: (v.visits[prev_cam]["exit"], v.vid))
            last = None
            for v in from_prev:
                if last is not None:
                    proposed[v.vid] = max(proposed[v.vid], last + cfg.headway)
                last = proposed[v.vid]

            present.sort(key=lambda v: (proposed[v.vid], v.vid))
            last_dep = None
            for v in present:
                p = v.per_cam[cam]
                entry = proposed[v.vid]
                s_in = margin + v.width / 2 + p["in_jitter"]
                s_out = w - margin - v.width / 2 - p["out_jitter"]
                stop = None
                if (cam, direction) in lights:
                    s_stop = w / 2 + p["stop_jitter"]
                    arrival = entry + math.ceil((s_stop - s_in) / cfg.speed)
                    dep = arrival + p["dwell"]
                    if last_dep is not None:
                        dep = max(dep, last_dep + cfg.headway)
                    last_dep = dep
                    stop = (s_stop, arrival, dep)
                    exit_ = dep + math.floor((s_out - s_stop) / cfg.speed)
                else:
                    exit_ = entry + math.floor((s_out - s_in) / cfg.speed)
                v.visits[cam] = {"entry": entry, "exit": exit_, "s_in": s_in, "s_out": s_out, "stop": stop}
            prev_cam = cam


def _position(visit, f, speed):
    s_in, stop = visit["s_in"], visit["stop"]
    t = f - visit["entry"]
    if stop is None:
        return s_in + speed * t
    s_stop, arrival, dep = stop
    if f <= dep:
        return min(s_in + speed * t, s_stop)
    return s_stop + speed * (f - dep)


def generate_scenario(cfg: ScenarioConfig, split: str = "test") -> Scenario:
    """Generate one split ("train" or "test") of the scenario family fixed by cfg.seed."""
    cfg.validate()
    if split not in _SPLITS:
        raise ConfigError(f"unknown split {split!r}")
    n = cfg.n_vehicles if split == "test" else cfg.n_train_vehicles
    root = np.random.SeedSequence([cfg.seed, _SPLITS[split]])
    children = root.spawn(n + 1)
    layout_rng = np.random.default_rng(children[0])
    weights = np.array([r.weight for r in cfg.routes], dtype=float)
    route_idx = layout_rng.choice(len(cfg.routes), size=n, p=weights / weights.sum()) if n else []

    vehicles = [_Vehicle(vid, cfg.routes[int(ri)], np.random.default_rng(children[vid + 1]))
                for vid, ri in enumerate(route_idx)]
    for v in vehicles:
        _draw_vehicle(v, cfg)
    _simulate(vehicles, cfg)

    w, h = cfg.frame_size
    lane_y = {EAST: 0.35 * h, WEST: 0.65 * h}
    fragments = []  # (camera, first_frame, vid, part, observations)
    gt = []
    events = []
    for v in vehicles:
        rng = v.rng
        direction = v.route.direction
        for cam in v.route.cameras:
            visit = v.visits[cam]
            p = v.per_cam[cam]
            frames = list(range(visit["entry"], visit["exit"] + 1))
            jit = rng.normal(0.0, 0.5, size=(len(frames), 2))
            noise = rng.normal(0.0, cfg.identity_noise_sigma, size=(len(frames), cfg.embedding_dim))
            obs = []
            for k, f in enumerate(frames):
                s = _position(visit, f, cfg.speed)
                cx = s if direction == EAST else w - s
                cy = lane_y[direction] + p["lane_offset"]
                box = BoundingBox(round(cx - v.width / 2 + jit[k, 0], 2), round(cy - v.height / 2 + jit[k, 1], 2),
                                  round(v.width, 2), round(v.height, 2))
                emb = (v.base + noise[k]).astype(np.float32).astype(np.float64)
                obs.append(FrameObservation(f, box, emb))
                gt.append(Detection(v.vid + 1, cam, f, box))

            parts = [obs]
            stop = visit["stop"]
            if stop is not None and cfg.fragmentation > 0 and p["frag_u"] < cfg.fragmentation:
                _, arrival, dep = stop
                dwell = dep - arrival
                room = max(1, dwell // 4)
                cut_start = arrival + 1 + int(p["cut_a"] * room)
                cut_end = dep - 1 - int(p["cut_b"] * room)
                if cut_start <= cut_end:
                    parts = [[o for o in obs if o.frame < cut_start], [o for o in obs if o.frame > cut_end]]
                    events.append({"vehicle": v.vid + 1, "camera": cam, "missing": [cut_start, cut_end]})
            for part_no, part in enumerate(parts):
                fragments.append((cam, part[0].frame, v.vid, part_no, part))

    fragments.sort(key=lambda x: (x[0], x[1], x[2], x[3]))
    next_id = {}
    tracklets = []
    vehicle_of = {}
    for cam, _, vid, _, part in fragments:
        lid = next_id.get(cam, 1)
        next_id[cam] = lid + 1
        tracklets.append(Tracklet(cam, lid, tuple(part)))
        vehicle_of[(cam, lid)] = vid + 1

    members = {}
    for key, gid in vehicle_of.items():
        members.setdefault(gid, set()).add(key)
    gt_tracks = [GlobalTrack(gid, frozenset(m)) for gid, m in sorted(members.items())]
    links = sorted({(a, b) for r in cfg.routes for a, b in zip(r.cameras, r.cameras[1:])})
    return Scenario(cfg, split, tracklets, gt_tracks, gt, vehicle_of, events, links)


def generate_dataset(cfg: ScenarioConfig) -> tuple[Scenario, Scenario]:
    return generate_scenario(cfg, "train"), generate_scenario(cfg, "test")


def with_overrides(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    return replace(cfg, **kw)
