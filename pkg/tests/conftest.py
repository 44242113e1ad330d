import numpy as np
import pytest

from mtmct.core import BoundingBox, FrameObservation, Tracklet

ACCEPTANCE_LINES = []


def box_at(cx, cy, w=20.0, h=10.0):
    return BoundingBox(cx - w / 2, cy - h / 2, w, h)


def make_track(camera, local_id, centers, start=0, emb=None, w=20.0, h=10.0, frames=None):
    """Tracklet through the given centers on consecutive frames.

    `emb` may be a single vector (used for every frame) or one per frame.
    """
    if frames is None:
        frames = range(start, start + len(centers))
    obs = []
    for k, (f, (cx, cy)) in enumerate(zip(frames, centers)):
        e = None
        if emb is not None:
            e = emb[k] if np.ndim(emb) == 2 else emb
        obs.append(FrameObservation(f, box_at(cx, cy, w, h), e))
    return Tracklet(camera, local_id, tuple(obs))


def line(p0, p1, n):
    return [(p0[0] + (p1[0] - p0[0]) * k / (n - 1), p0[1] + (p1[1] - p0[1]) * k / (n - 1))
            for k in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(text)
