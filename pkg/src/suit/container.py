"""Versioned flat binary container and JSON manifest.

Layout (all little-endian):
  magic   8 bytes  b"SUITSIM1"
  version u32      currently 1
  count   u32      number of sections
  then per section: tag 4 bytes, payload length u64, payload

Section payloads:
  FRMS  u32 H, u32 W, u32 C, f64 cell_size, u32 frame_count; per frame:
        u32 index, f64 tx, f64 ty, f64 rot, heatmap H*W f64 row-major,
        features H*W*C f64 row-major.
  OMGS  u32 H, u32 W, u32 C, f64 cell_size, u32 source_frame,
        f64 tx, f64 ty, f64 rot, u32 n_samples, u32 n_cells,
        offsets n_cells * (i32 dx, i32 dy); per sample:
        i32 x, i32 y, f64 score, i32 extent_w, i32 extent_h,
        features n_cells*C f64.
  GEON  u32 in_dim, u32 hidden, u32 out_dim, u32 win_h, u32 win_w,
        then w1, b1, w2, b2, w3, b3 as f64 arrays.

Truth objects travel in a JSON manifest next to the binary file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import FeatureMap, GridSpec, Heatmap, Pose2, WindowShape
from .sim import ObjectState, SimFrame

MAGIC = b"SUITSIM1"
VERSION = 1


class ContainerError(ValueError):
    """Malformed or incompatible container data."""


def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _read_f64(buf: memoryview, off: int, count: int):
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=off).copy()
    return arr, off + 8 * count


def write_container(path: Path | str, sections: list[tuple[bytes, bytes]]) -> int:
    """Write sections [(tag, payload), ...]; returns total bytes written."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<II", VERSION, len(sections))
    for tag, payload in sections:
        if len(tag) != 4:
            raise ContainerError(f"section tag must be 4 bytes, got {tag!r}")
        blob += tag
        blob += struct.pack("<Q", len(payload))
        blob += payload
    Path(path).write_bytes(bytes(blob))
    return len(blob)


def read_container(path: Path | str) -> dict[bytes, bytes]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ContainerError(f"bad magic in {path}")
    version, count = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    off = 16
    sections: dict[bytes, bytes] = {}
    for _ in range(count):
        tag = raw[off:off + 4]
        (length,) = struct.unpack_from("<Q", raw, off + 4)
        off += 12
        sections[bytes(tag)] = raw[off:off + length]
        off += length
    return sections


# ---------------------------------------------------------------- frames

def frames_payload(frames: list[SimFrame]) -> bytes:
    spec = frames[0].heatmap.spec
    out = bytearray()
    out += struct.pack("<IIIdI", spec.height, spec.width, spec.channels,
                       spec.cell_size, len(frames))
    for f in frames:
        if f.heatmap.spec != spec:
            raise ContainerError("all frames must share one GridSpec")
        tx, ty = f.ego_pose.translation
        out += struct.pack("<Iddd", f.index, tx, ty, f.ego_pose.rotation)
        out += _f64_bytes(f.heatmap.data)
        out += _f64_bytes(f.features.data)
    return bytes(out)


def parse_frames(payload: bytes, truth_by_frame=None) -> list[SimFrame]:
    buf = memoryview(payload)
    h, w, c, cell, count = struct.unpack_from("<IIIdI", buf, 0)
    spec = GridSpec(h, w, cell, c)
    off = struct.calcsize("<IIIdI")
    frames = []
    for _ in range(count):
        index, tx, ty, rot = struct.unpack_from("<Iddd", buf, off)
        off += struct.calcsize("<Iddd")
        heat, off = _read_f64(buf, off, h * w)
        feat, off = _read_f64(buf, off, h * w * c)
        truth = tuple(truth_by_frame.get(index, ())) if truth_by_frame else ()
        frames.append(SimFrame(
            index=index,
            heatmap=Heatmap(spec, heat.reshape(h, w)),
            features=FeatureMap(spec, feat.reshape(h, w, c)),
            ego_pose=Pose2((tx, ty), rot),
            truth=truth))
    return frames


def manifest_dict(frames: list[SimFrame]) -> dict:
    return {
        "format": "suit-manifest",
        "version": VERSION,
        "frames": [
            {
                "index": f.index,
                "objects": [
                    {
                        "id": o.id,
                        "position": list(o.position),
                        "velocity": list(o.velocity),
                        "extent": list(o.extent),
                        "signature": [float(v) for v in o.signature],
                        "observed": o.observed,
                    }
                    for o in f.truth
                ],
            }
            for f in frames
        ],
    }


def parse_manifest(doc: dict) -> dict[int, list[ObjectState]]:
    if doc.get("format") != "suit-manifest":
        raise ContainerError("not a suit manifest")
    out = {}
    for fr in doc["frames"]:
        out[fr["index"]] = [
            ObjectState(
                id=o["id"],
                position=tuple(o["position"]),
                velocity=tuple(o["velocity"]),
                extent=tuple(o["extent"]),
                signature=np.array(o["signature"], dtype=np.float64),
                observed=o["observed"],
            )
            for o in fr["objects"]
        ]
    return out


def save_frames(path: Path | str, frames: list[SimFrame]) -> int:
    """Write binary frames plus the <path>.manifest.json truth sidecar."""
    size = write_container(path, [(b"FRMS", frames_payload(frames))])
    manifest_path = Path(str(path) + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest_dict(frames), indent=2, sort_keys=True) + "\n")
    return size


def load_frames(path: Path | str) -> list[SimFrame]:
    sections = read_container(path)
    if b"FRMS" not in sections:
        raise ContainerError("container has no FRMS section")
    truth_by_frame = None
    manifest_path = Path(str(path) + ".manifest.json")
    if manifest_path.exists():
        truth_by_frame = parse_manifest(json.loads(manifest_path.read_text()))
    return parse_frames(sections[b"FRMS"], truth_by_frame)


# ------------------------------------------------------- significant sets

def significant_set_payload(sset) -> bytes:
    spec = sset.spec
    out = bytearray()
    tx, ty = sset.source_pose.translation
    out += struct.pack("<IIIdIddd", spec.height, spec.width, spec.channels,
                       spec.cell_size, sset.source_frame, tx, ty,
                       sset.source_pose.rotation)
    n_cells = len(sset.samples[0].patch.offsets) if sset.samples else 0
    out += struct.pack("<II", len(sset.samples), n_cells)
    if sset.samples:
        for dx, dy in sset.samples[0].patch.offsets:
            out += struct.pack("<ii", dx, dy)
    for s in sset.samples:
        if len(s.patch.offsets) != n_cells:
            raise ContainerError("mixed patch shapes in one set")
        out += struct.pack("<iidii", s.location.x, s.location.y, s.score,
                           s.extent_hint[0], s.extent_hint[1])
        out += _f64_bytes(s.patch.values)
    return bytes(out)


def serialized_set_size(sset) -> int:
    """Exact container byte size of a SignificantSet (header included)."""
    payload = significant_set_payload(sset)
    return len(MAGIC) + struct.calcsize("<II") + 12 + len(payload)


def parse_significant_set(payload: bytes):
    from .grid import GridCoord
    from .sample import Patch, Sample, SignificantSet

    buf = memoryview(payload)
    head = "<IIIdIddd"
    h, w, c, cell, source_frame, tx, ty, rot = struct.unpack_from(head, buf, 0)
    off = struct.calcsize(head)
    spec = GridSpec(h, w, cell, c)
    n_samples, n_cells = struct.unpack_from("<II", buf, off)
    off += 8
    offsets = []
    for _ in range(n_cells):
        dx, dy = struct.unpack_from("<ii", buf, off)
        offsets.append((dx, dy))
        off += 8
    samples = []
    for _ in range(n_samples):
        x, y, score, ew, eh = struct.unpack_from("<iidii", buf, off)
        off += struct.calcsize("<iidii")
        vals, off = _read_f64(buf, off, n_cells * c)
        samples.append(Sample(
            location=GridCoord(x, y), score=score,
            patch=Patch(offsets=tuple(offsets),
                        values=vals.reshape(n_cells, c)),
            extent_hint=(ew, eh)))
    return SignificantSet(samples=tuple(samples), source_frame=source_frame,
                          source_pose=Pose2((tx, ty), rot), spec=spec)


def save_significant_set(path: Path | str, sset) -> int:
    return write_container(path, [(b"OMGS", significant_set_payload(sset))])


def load_significant_set(path: Path | str):
    sections = read_container(path)
    if b"OMGS" not in sections:
        raise ContainerError("container has no OMGS section")
    return parse_significant_set(sections[b"OMGS"])


# --------------------------------------------------------------- geonet

def geonet_payload(params) -> bytes:
    out = bytearray()
    out += struct.pack("<IIIII", params.in_dim, params.hidden,
                       params.window.cells, params.window.height,
                       params.window.width)
    for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
        out += _f64_bytes(getattr(params, name))
    return bytes(out)


def parse_geonet(payload: bytes):
    from .geonet import GeoNetParams

    buf = memoryview(payload)
    in_dim, hidden, out_dim, win_h, win_w = struct.unpack_from("<IIIII", buf, 0)
    off = struct.calcsize("<IIIII")
    w1, off = _read_f64(buf, off, in_dim * hidden)
    b1, off = _read_f64(buf, off, hidden)
    w2, off = _read_f64(buf, off, hidden * hidden)
    b2, off = _read_f64(buf, off, hidden)
    w3, off = _read_f64(buf, off, hidden * out_dim)
    b3, off = _read_f64(buf, off, out_dim)
    return GeoNetParams(
        w1=w1.reshape(in_dim, hidden), b1=b1,
        w2=w2.reshape(hidden, hidden), b2=b2,
        w3=w3.reshape(hidden, out_dim), b3=b3,
        window=WindowShape(win_h, win_w))


def save_geonet(path: Path | str, params) -> int:
    return write_container(path, [(b"GEON", geonet_payload(params))])


def load_geonet(path: Path | str):
    sections = read_container(path)
    if b"GEON" not in sections:
        raise ContainerError("container has no GEON section")
    return parse_geonet(sections[b"GEON"])
