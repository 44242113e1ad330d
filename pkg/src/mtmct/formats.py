"""On-disk formats.

Text files are comma-delimited, start with a ``# mtmct <kind> v<N>`` version
line followed by a column header. Embeddings are a little-endian binary file:

    magic b"MTEB", uint16 version, uint16 reserved, uint32 record count
    per record: int32 camera, int32 local_id, uint32 frame count n, uint32 dim d,
                n x int32 frame indices, n*d x float32 values (row-major)
"""
from __future__ import annotations

import io
import logging
import os
import struct
import sys
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .clm import CameraLink, CameraLinkModel, ZonePair
from .core import BoundingBox, FrameObservation, GlobalTrack, InputError, Rect, Tracklet
from .metrics import Detection
from .zones import Zone, ZoneKind

log = logging.getLogger(__name__)

TRACKS_HEADER = "camera_id,frame,local_id,x,y,w,h,confidence"
RESULTS_HEADER = "camera_id,global_id,frame,x,y,w,h"
ZONES_HEADER = "camera_id,zone_id,x_min,y_min,x_max,y_max,n_entry,n_exit,kind"
CLM_HEADER = "record,fields..."
FORMAT_VERSION = 1

EMB_MAGIC = b"MTEB"
EMB_VERSION = 1
_EMB_FILE_HEADER = struct.Struct("<4sHHI")
_EMB_RECORD_HEADER = struct.Struct("<iiII")


def _version_line(kind: str) -> str:
    return f"# mtmct {kind} v{FORMAT_VERSION}"


def _num(x: float) -> str:
    # repr round-trips floats exactly; integral values print without ".0"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _read_lines(path, kind: str, header: str):
    """Yield (line_number, fields) for data rows; validates version and header."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not any(l.strip() for l in lines):
        return
    n = 0
    while n < len(lines) and not lines[n].strip():
        n += 1
    first = lines[n].strip()
    if first.startswith("#"):
        if first != _version_line(kind):
            raise InputError(f"{path}:{n + 1}: expected '{_version_line(kind)}', found '{first}'")
        n += 1
    if n < len(lines) and lines[n].strip().replace(" ", "") == header:
        n += 1
    ncol = len(header.split(","))
    for lineno in range(n, len(lines)):
        raw = lines[lineno].strip()
        if not raw or raw.startswith("#"):
            continue
        fields = [f.strip() for f in raw.split(",")]
        if kind != "clm" and len(fields) != ncol:
            raise InputError(f"{path}:{lineno + 1}: expected {ncol} fields, found {len(fields)}")
        yield lineno + 1, fields


def _parse(conv, value, path, lineno, name):
    try:
        return conv(value)
    except (ValueError, InputError) as e:
        raise InputError(f"{path}:{lineno}: bad {name} {value!r}: {e}") from None


# --- tracks -----------------------------------------------------------------

def write_tracks(path, tracklets: Iterable[Tracklet]) -> None:
    rows = []
    for t in tracklets:
        for o in t.observations:
            b = o.box
            rows.append((t.camera, o.frame, t.local_id, b.x, b.y, b.w, b.h))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    out = [_version_line("tracks"), TRACKS_HEADER]
    out += [",".join([str(r[0]), str(r[1]), str(r[2])] + [_num(v) for v in r[3:]] + ["1"]) for r in rows]
    _atomic_write(path, "\n".join(out) + "\n")


def parse_tracks(path, embeddings_path=None) -> dict[int, list[Tracklet]]:
    """Read tracks grouped per camera, optionally joining per-frame embeddings."""
    groups: dict[tuple[int, int], list[FrameObservation]] = defaultdict(list)
    for lineno, f in _read_lines(path, "tracks", TRACKS_HEADER):
        cam = _parse(int, f[0], path, lineno, "camera_id")
        frame = _parse(int, f[1], path, lineno, "frame")
        lid = _parse(int, f[2], path, lineno, "local_id")
        x, y, w, h = (_parse(float, v, path, lineno, "box value") for v in f[3:7])
        _parse(float, f[7], path, lineno, "confidence")
        box = _parse(lambda _: BoundingBox(x, y, w, h), None, path, lineno, "box")
        obs = _parse(lambda _: FrameObservation(frame, box), None, path, lineno, "frame")
        groups[(cam, lid)].append(obs)
    emb = read_embeddings(embeddings_path) if embeddings_path else {}
    out: dict[int, list[Tracklet]] = defaultdict(list)
    for (cam, lid) in sorted(groups):
        obs = sorted(groups[(cam, lid)], key=lambda o: o.frame)
        frames = [o.frame for o in obs]
        if len(set(frames)) != len(frames):
            raise InputError(f"{path}: track ({cam}, {lid}) has two rows for one frame")
        if embeddings_path:
            rec = emb.get((cam, lid))
            if rec is None or not all(fr in rec for fr in frames):
                log.warning("track (%d, %d) is missing embeddings; left feature-less", cam, lid)
            else:
                obs = [FrameObservation(o.frame, o.box, rec[o.frame]) for o in obs]
        out[cam].append(Tracklet(cam, lid, tuple(obs)))
    return dict(out)


def flatten(per_camera: Mapping[int, Sequence[Tracklet]]) -> list[Tracklet]:
    return [t for cam in sorted(per_camera) for t in per_camera[cam]]


# --- embeddings -------------------------------------------------------------

def write_embeddings(path, tracklets: Iterable[Tracklet]) -> None:
    buf = io.BytesIO()
    recs = [t for t in tracklets if t.has_embeddings()]
    recs.sort(key=lambda t: t.key)
    buf.write(_EMB_FILE_HEADER.pack(EMB_MAGIC, EMB_VERSION, 0, len(recs)))
    for t in recs:
        vals = np.stack([o.embedding for o in t.observations]).astype("<f4")
        buf.write(_EMB_RECORD_HEADER.pack(t.camera, t.local_id, vals.shape[0], vals.shape[1]))
        buf.write(np.asarray(t.frames, dtype="<i4").tobytes())
        buf.write(vals.tobytes())
    _atomic_write(path, buf.getvalue(), binary=True)


def read_embeddings(path) -> dict[tuple[int, int], dict[int, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < _EMB_FILE_HEADER.size:
        raise InputError(f"{path}: truncated embedding file")
    magic, version, _, count = _EMB_FILE_HEADER.unpack_from(data, 0)
    if magic != EMB_MAGIC:
        raise InputError(f"{path}: not an embedding file (magic {magic!r})")
    if version != EMB_VERSION:
        raise InputError(f"{path}: unsupported embedding version {version}")
    pos = _EMB_FILE_HEADER.size
    out = {}
    dim_seen = None
    for r in range(count):
        if pos + _EMB_RECORD_HEADER.size > len(data):
            raise InputError(f"{path}: truncated at record {r}")
        cam, lid, n, dim = _EMB_RECORD_HEADER.unpack_from(data, pos)
        pos += _EMB_RECORD_HEADER.size
        if dim_seen is not None and dim != dim_seen:
            raise InputError(f"{path}: record {r} has dimension {dim}, expected {dim_seen}")
        dim_seen = dim
        need = 4 * n + 4 * n * dim
        if pos + need > len(data):
            raise InputError(f"{path}: truncated at record {r}")
        frames = np.frombuffer(data, dtype="<i4", count=n, offset=pos)
        pos += 4 * n
        vals = np.frombuffer(data, dtype="<f4", count=n * dim, offset=pos).reshape(n, dim)
        pos += 4 * n * dim
        if not np.all(np.isfinite(vals)):
            raise InputError(f"{path}: record {r} contains non-finite values")
        out[(cam, lid)] = {int(f): vals[k].astype(np.float64) for k, f in enumerate(frames)}
    if pos != len(data):
        raise InputError(f"{path}: {len(data) - pos} trailing bytes")
    return out


# --- results / ground truth -------------------------------------------------

def write_results(path, tracks: Sequence[GlobalTrack], tracklets: Iterable[Tracklet]) -> None:
    by_key = {t.key: t for t in tracklets}
    rows = []
    for g in tracks:
        for key in g.members:
            for o in by_key[key].observations:
                b = o.box
                rows.append((key[0], g.global_id, o.frame, b.x, b.y, b.w, b.h))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    out = [_version_line("results"), RESULTS_HEADER]
    out += [",".join([str(r[0]), str(r[1]), str(r[2])] + [_num(v) for v in r[3:]]) for r in rows]
    _atomic_write(path, "\n".join(out) + "\n")


def write_detections(path, dets: Iterable[Detection]) -> None:
    rows = sorted(dets, key=lambda d: (d.camera, d.identity, d.frame))
    out = [_version_line("results"), RESULTS_HEADER]
    out += [",".join([str(d.camera), str(d.identity), str(d.frame),
                      _num(d.box.x), _num(d.box.y), _num(d.box.w), _num(d.box.h)]) for d in rows]
    _atomic_write(path, "\n".join(out) + "\n")


def parse_results(path) -> list[Detection]:
    dets = []
    for lineno, f in _read_lines(path, "results", RESULTS_HEADER):
        cam = _parse(int, f[0], path, lineno, "camera_id")
        gid = _parse(int, f[1], path, lineno, "global_id")
        frame = _parse(int, f[2], path, lineno, "frame")
        x, y, w, h = (_parse(float, v, path, lineno, "box value") for v in f[3:7])
        box = _parse(lambda _: BoundingBox(x, y, w, h), None, path, lineno, "box")
        dets.append(Detection(gid, cam, frame, box))
    return dets


def detections_to_tracks(dets: Iterable[Detection]) -> dict[int, list[Tracklet]]:
    """Group identity-labelled detections into per-camera trajectories.

    Each (camera, identity) becomes one tracklet whose local_id is the identity.
    """
    groups = defaultdict(list)
    for d in dets:
        groups[(d.camera, d.identity)].append(FrameObservation(d.frame, d.box))
    out: dict[int, list[Tracklet]] = defaultdict(list)
    for cam, gid in sorted(groups):
        obs = tuple(sorted(groups[(cam, gid)], key=lambda o: o.frame))
        out[cam].append(Tracklet(cam, gid, obs))
    return dict(out)


def tracks_to_detections(tracks: Sequence[GlobalTrack], tracklets: Iterable[Tracklet]) -> list[Detection]:
    by_key = {t.key: t for t in tracklets}
    return [Detection(g.global_id, key[0], o.frame, o.box)
            for g in tracks for key in sorted(g.members) for o in by_key[key].observations]


# --- zones ------------------------------------------------------------------

def write_zones(path, zones: Iterable[Zone]) -> None:
    out = [_version_line("zones"), ZONES_HEADER]
    for z in sorted(zones, key=lambda z: (z.camera, z.id)):
        r = z.rect
        out.append(",".join([str(z.camera), str(z.id), _num(r.x_min), _num(r.y_min), _num(r.x_max),
                             _num(r.y_max), str(z.n_entry), str(z.n_exit), z.kind.value]))
    _atomic_write(path, "\n".join(out) + "\n")


def parse_zones(path) -> list[Zone]:
    zones = []
    for lineno, f in _read_lines(path, "zones", ZONES_HEADER):
        cam = _parse(int, f[0], path, lineno, "camera_id")
        zid = _parse(int, f[1], path, lineno, "zone_id")
        bounds = [_parse(float, v, path, lineno, "rect bound") for v in f[2:6]]
        ne = _parse(int, f[6], path, lineno, "n_entry")
        nx = _parse(int, f[7], path, lineno, "n_exit")
        kind = _parse(ZoneKind, f[8], path, lineno, "kind")
        rect = _parse(lambda _: Rect(*bounds), None, path, lineno, "rect")
        zones.append(_parse(lambda _: Zone(zid, cam, rect, ne, nx, kind), None, path, lineno, "zone"))
    return zones


# --- camera link model ------------------------------------------------------
# pair,<camera>,<entry_zone>,<exit_zone>
# link,<src_cam>,<dst_cam>,<z_s>,<z_d>,<dt_min>,<dt_max>,<samples>,<src pairs>,<dst pairs>
#   pair lists are ';'-separated "entry:exit" tokens

def _pairs_field(pairs) -> str:
    return ";".join(f"{p.entry_zone}:{p.exit_zone}" for p in sorted(pairs))


def _parse_pairs_field(text, camera) -> list[ZonePair]:
    out = []
    for tok in text.split(";"):
        e, x = tok.split(":")
        out.append(ZonePair(camera, int(e), int(x)))
    return out


def write_clm(path, model: CameraLinkModel) -> None:
    out = [_version_line("clm"), CLM_HEADER]
    for p in sorted(model.pairs):
        out.append(f"pair,{p.camera},{p.entry_zone},{p.exit_zone}")
    for l in model.links:
        out.append(",".join([
            "link", str(l.source_camera), str(l.dest_camera), str(l.transition_zone_src),
            str(l.transition_zone_dst), _num(l.window[0]), _num(l.window[1]), str(l.sample_count),
            _pairs_field(l.source_pairs), _pairs_field(l.dest_pairs),
        ]))
    _atomic_write(path, "\n".join(out) + "\n")


def parse_clm(path) -> CameraLinkModel:
    pairs, links = [], []
    for lineno, f in _read_lines(path, "clm", CLM_HEADER):
        try:
            if f[0] == "pair" and len(f) == 4:
                pairs.append(ZonePair(int(f[1]), int(f[2]), int(f[3])))
            elif f[0] == "link" and len(f) == 10:
                src, dst = int(f[1]), int(f[2])
                links.append(CameraLink(
                    source_camera=src, dest_camera=dst,
                    source_pairs=frozenset(_parse_pairs_field(f[8], src)),
                    dest_pairs=frozenset(_parse_pairs_field(f[9], dst)),
                    transition_zone_src=int(f[3]), transition_zone_dst=int(f[4]),
                    window=(float(f[5]), float(f[6])), sample_count=int(f[7]),
                ))
            else:
                raise ValueError(f"unknown record {f[0]!r} with {len(f)} fields")
        except Exception as e:  # noqa: BLE001 - re-raised with position
            raise InputError(f"{path}:{lineno}: {e}") from None
    return CameraLinkModel(pairs=tuple(pairs), links=tuple(links))


# --- writing ----------------------------------------------------------------

def _atomic_write(path, content, binary: bool = False) -> None:
    path = Path(path)
    if str(path) == "-":
        if binary:
            sys.stdout.buffer.write(content)
        else:
            sys.stdout.write(content)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if binary:
        tmp.write_bytes(content)
    else:
        tmp.write_text(content)
    os.replace(tmp, path)
