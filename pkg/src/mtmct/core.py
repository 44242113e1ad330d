"""Domain types and geometry / feature primitives shared by every stage."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class MTMCTError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MTMCTError, ValueError):
    """Malformed or out-of-contract input data."""


class ConfigError(MTMCTError, ValueError):
    """Invalid configuration value or impossible scenario layout."""


class ModelError(MTMCTError):
    """The camera link model could not be built from the given data."""


class CapacityError(MTMCTError):
    """An exhaustive solver was asked to handle too large an instance."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, top-left corner plus extent, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"non-finite bounding box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InputError(f"bounding box must have positive extent, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by its bounds; may be degenerate (a point or segment)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise InputError(f"inverted rect {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, point: Sequence[float]) -> bool:
        px, py = point
        return self.x_min <= px <= self.x_max and self.y_min <= py <= self.y_max

    @classmethod
    def bounding(cls, points) -> "Rect":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise InputError("cannot bound an empty point set")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def as_embedding(values) -> np.ndarray:
    """Coerce to a read-only 1-D float64 vector, rejecting non-finite entries."""
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InputError("embedding contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FrameObservation:
    frame: int
    box: BoundingBox
    embedding: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.frame < 0:
            raise InputError(f"negative frame index {self.frame}")
        if self.embedding is not None:
            object.__setattr__(self, "embedding", as_embedding(self.embedding))


@dataclass(frozen=True)
class Tracklet:
    """One camera-local track: observations strictly ordered by frame."""

    camera: int
    local_id: int
    observations: tuple[FrameObservation, ...]
    feature: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        obs = tuple(self.observations)
        if not obs:
            raise InputError(f"tracklet ({self.camera}, {self.local_id}) has no observations")
        frames = [o.frame for o in obs]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise InputError(
                f"tracklet ({self.camera}, {self.local_id}) frames are not strictly increasing"
            )
        object.__setattr__(self, "observations", obs)
        if self.feature is not None:
            object.__setattr__(self, "feature", as_embedding(self.feature))

    @property
    def key(self) -> tuple[int, int]:
        return (self.camera, self.local_id)

    @property
    def first_frame(self) -> int:
        return self.observations[0].frame

    @property
    def last_frame(self) -> int:
        return self.observations[-1].frame

    @property
    def frames(self) -> list[int]:
        return [o.frame for o in self.observations]

    def __len__(self) -> int:
        return len(self.observations)

    def overlaps_in_time(self, other: "Tracklet") -> bool:
        return self.first_frame <= other.last_frame and other.first_frame <= self.last_frame

    def has_embeddings(self) -> bool:
        return all(o.embedding is not None for o in self.observations)


@dataclass(frozen=True)
class GlobalTrack:
    global_id: int
    members: frozenset

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise InputError(f"global track {self.global_id} has no members")


def check_partition(tracks: Sequence[GlobalTrack]) -> None:
    """Raise InputError if a (camera, local_id) appears in two global tracks."""
    seen = {}
    for t in tracks:
        for m in t.members:
            if m in seen:
                raise InputError(f"{m} belongs to global tracks {seen[m]} and {t.global_id}")
            seen[m] = t.global_id


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # x2 - x may differ from w in the last bit; keep the ratio in [0, 1]
    return min(1.0, inter / (a.area + b.area - inter))


def overlap_ratio(box: BoundingBox, zone: Rect) -> float:
    """Fraction of the box area covered by the zone."""
    if (zone.x_min <= box.x and box.x2 <= zone.x_max
            and zone.y_min <= box.y and box.y2 <= zone.y_max):
        return 1.0
    iw = min(box.x2, zone.x_max) - max(box.x, zone.x_min)
    ih = min(box.y2, zone.y_max) - max(box.y, zone.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    # partial containment must stay strictly below 1 despite rounding
    return min(_BELOW_ONE, iw * ih / ((box.x2 - box.x) * (box.y2 - box.y)))


_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def feature_distance(a, b) -> float:
    """Euclidean distance between two embeddings of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"embedding dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def frames_to_seconds(frames: float, frame_rate: float = 10.0) -> float:
    return frames / frame_rate
