"""Interaction records, their binary layout and dataset generation.

Record layout (little endian)::

    magic "VTREC\\0" | u16 version | u16 len + tool utf-8 | u32 trial index
    f32[12] EE pose | f32[12] object pose | f32[3] xi | f32[4] plane
    f32[3] press direction | f32[3] contact centroid | f32[3] reaction | f32[2] pitch, yaw
    u32 N + f32[N,3] visual cloud | u32 N + u32 N_left + f32[N,3] tactile cloud
    f32[600,2] left shear | f32[600,2] right shear
    u32 N + f32[N,8] queries (q xyz, s, n xyz, c)
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geom.mesh import TOOL_KINDS
from ..geom.sampling import QuerySet
from . import frames
from .render import N_CAMERAS, N_POINTS, finger_meshes, render_partial_cloud
from .scene import (DELTA_PEN, InconsistentSceneError, UnreachableSceneError, get_tool,
                    label_contacts, resolve_press, sample_interaction)
from .tactile import GRID, EmptyTactileError, synthesize_shear, tactile_cloud

MAGIC = b"VTREC\x00"
FORMAT_VERSION = 1
SPLITS = {"train": 0, "test": 1}
N_CONTACT = 1000
MAX_ATTEMPTS = 20


class DataError(IOError):
    pass


@dataclass
class InteractionRecord:
    tool: str
    trial_index: int
    ee_pose: np.ndarray
    object_pose: np.ndarray
    xi: np.ndarray
    plane: np.ndarray
    press_direction: np.ndarray
    contact_centroid: np.ndarray
    reaction: np.ndarray
    pitch: float
    yaw: float
    visual: np.ndarray
    tactile: np.ndarray
    n_tactile_left: int
    shear_left: np.ndarray
    shear_right: np.ndarray
    queries: QuerySet

    def shear(self, sensor):
        return self.shear_left if sensor == "left" else self.shear_right


def _f32(a):
    return np.asarray(a, dtype="<f4").tobytes()


def encode_record(r: InteractionRecord) -> bytes:
    buf = io.BytesIO()
    name = r.tool.encode("utf-8")
    buf.write(MAGIC + struct.pack("<HH", FORMAT_VERSION, len(name)) + name)
    buf.write(struct.pack("<I", r.trial_index))
    buf.write(_f32(frames.pose_to_row12(r.ee_pose)) + _f32(frames.pose_to_row12(r.object_pose)))
    buf.write(_f32(r.xi) + _f32(r.plane) + _f32(r.press_direction) + _f32(r.contact_centroid)
              + _f32(r.reaction) + _f32([r.pitch, r.yaw]))
    buf.write(struct.pack("<I", len(r.visual)) + _f32(r.visual))
    buf.write(struct.pack("<II", len(r.tactile), r.n_tactile_left) + _f32(r.tactile))
    buf.write(_f32(r.shear_left) + _f32(r.shear_right))
    q = r.queries
    rows = np.concatenate([q.q, q.s[:, None], q.n, q.c[:, None].astype(np.float64)], axis=1)
    buf.write(struct.pack("<I", len(rows)) + _f32(rows))
    return buf.getvalue()


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated record")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, n):
        return np.frombuffer(self.take(4 * n), dtype="<f4").astype(np.float64)


def decode_record(data: bytes, path="<bytes>") -> InteractionRecord:
    rd = _Reader(data, path)
    if rd.take(len(MAGIC)) != MAGIC:
        raise DataError(f"{path}: bad magic")
    version, nlen = rd.unpack("<HH")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported record version {version}")
    tool = rd.take(nlen).decode("utf-8")
    (trial,) = rd.unpack("<I")
    ee = frames.row12_to_pose(rd.floats(12))
    obj = frames.row12_to_pose(rd.floats(12))
    xi, plane, press, cen, react = rd.floats(3), rd.floats(4), rd.floats(3), rd.floats(3), rd.floats(3)
    pitch, yaw = rd.floats(2)
    (nv,) = rd.unpack("<I")
    visual = rd.floats(3 * nv).reshape(nv, 3)
    nt, nl = rd.unpack("<II")
    tactile = rd.floats(3 * nt).reshape(nt, 3)
    n = len(GRID)
    sl = rd.floats(2 * n).reshape(n, 2)
    sr = rd.floats(2 * n).reshape(n, 2)
    (nq,) = rd.unpack("<I")
    rows = rd.floats(8 * nq).reshape(nq, 8)
    qs = QuerySet(q=rows[:, :3], s=rows[:, 3], n=rows[:, 4:7], c=rows[:, 7].astype(np.int8),
                  band=np.zeros(nq, dtype=np.int8))
    return InteractionRecord(tool, trial, ee, obj, xi, plane, press, cen, react, float(pitch),
                             float(yaw), visual, tactile, nl, sl, sr, qs)


def write_record(path, record):
    Path(path).write_bytes(encode_record(record))


def read_record(path) -> InteractionRecord:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"{path}: {e}") from e
    return decode_record(data, path)


def simulate_record(tool, rng, trial_index=0, xi=None, n_contact=N_CONTACT, n_cameras=N_CAMERAS,
                    n_points=N_POINTS, delta_pen=DELTA_PEN, occlude=True):
    asset = get_tool(tool)
    scene = sample_interaction(tool, rng, xi=xi)
    press = resolve_press(asset.mesh, scene, delta_pen)
    queries = label_contacts(asset.mesh, press.object_pose, delta_pen, n_contact, rng, asset.norm)
    shear_l = synthesize_shear(press, "left", asset.grip_width)
    shear_r = synthesize_shear(press, "right", asset.grip_width)
    tac, n_left = tactile_cloud(asset.mesh, scene.xi, press.ee_pose, asset.grip_width, split=True)
    occ = finger_meshes(asset.grip_width, press.ee_pose) if occlude else ()
    vis = render_partial_cloud(asset.mesh, press.object_pose, press.ee_pose, n_cameras, n_points,
                               rng, occluders=occ)
    return InteractionRecord(tool, trial_index, press.ee_pose, press.object_pose, scene.xi.copy(),
                             np.array([0.0, 0.0, 1.0, 0.0]), scene.press_direction,
                             press.contact_centroid, press.reaction, scene.pitch, scene.yaw,
                             vis, tac, n_left, shear_l, shear_r, queries)


def record_rng(seed, split, tool, index, attempt=0):
    """Independent stream per record so generation order does not matter."""
    return np.random.default_rng([int(seed), SPLITS[split], TOOL_KINDS.index(tool), int(index), attempt])


def generate_record(tool, index, split, seed, trial_index, **kw):
    for attempt in range(MAX_ATTEMPTS):
        try:
            return simulate_record(tool, record_rng(seed, split, tool, index, attempt), trial_index, **kw)
        except (UnreachableSceneError, InconsistentSceneError, EmptyTactileError):
            continue
    raise RuntimeError(f"could not sample a valid scene for {tool} #{index}")


def record_name(tool, index):
    return f"{tool}_{index:04d}.rec"


def write_manifest(path, manifest: dict):
    lines = [f"{k}={v}" for k, v in manifest.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataError(f"{path}: {e}") from e
    out = {}
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def generate_dataset(tools, per_tool, split, seed, out_path, **kw):
    """Write ``per_tool`` records per tool plus ``manifest.txt``; returns the manifest."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {sorted(SPLITS)}")
    tools = list(tools)
    out = Path(out_path)
    try:
        (out / "records").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"{out}: {e}") from e
    trial = 0
    for tool in tools:
        for i in range(per_tool):
            rec = generate_record(tool, i, split, seed, trial, **kw)
            path = out / "records" / record_name(tool, i)
            try:
                write_record(path, rec)
            except OSError as e:
                raise DataError(f"{path}: {e}") from e
            trial += 1
    manifest = {
        "format_version": FORMAT_VERSION,
        "split": split,
        "seed": seed,
        "tools": ",".join(tools),
        "per_tool": per_tool,
    }
    for tool in tools:
        manifest[f"count.{tool}"] = per_tool
    write_manifest(out / "manifest.txt", manifest)
    return manifest


def load_dataset(path):
    """Returns ``(manifest, records)`` with records in trial-index order."""
    path = Path(path)
    man = read_manifest(path / "manifest.txt")
    tools = [t for t in man.get("tools", "").split(",") if t]
    records = []
    for tool in tools:
        n = int(man[f"count.{tool}"])
        for i in range(n):
            records.append(read_record(path / "records" / record_name(tool, i)))
    if any(r.trial_index != k for k, r in enumerate(records)):
        raise DataError(f"{path}: trial indices are not contiguous")
    return man, records


def iter_record_paths(path):
    return sorted(str(p) for p in (Path(path) / "records").glob("*.rec"))


__all__ = [
    "DataError", "InteractionRecord", "encode_record", "decode_record", "write_record", "read_record",
    "simulate_record", "generate_record", "generate_dataset", "load_dataset", "read_manifest",
    "write_manifest", "record_rng", "iter_record_paths",
]
