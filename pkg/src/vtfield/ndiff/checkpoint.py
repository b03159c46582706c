"""Checkpoint container: a zip archive with a JSON manifest and one ``.npy``
blob per named parameter (little-endian float32, shape in the header).

Archive members carry a fixed timestamp and are written in sorted order so
identical contents give identical bytes.
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_FIXED_DATE = (2020, 1, 1, 0, 0, 0)


class CheckpointError(IOError):
    pass


def _member(name):
    info = zipfile.ZipInfo(name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def write_checkpoint(path, manifest: dict, blobs: dict):
    """Write ``blobs`` (name -> array) plus ``manifest`` to ``path``.

    The manifest gains ``format_version`` and a ``blobs`` index of shapes.
    """
    path = Path(path)
    manifest = dict(manifest)
    manifest["format_version"] = FORMAT_VERSION
    index = {}
    payload = {}
    for name in sorted(blobs):
        arr = np.ascontiguousarray(np.asarray(blobs[name]), dtype="<f4")
        buf = io.BytesIO()
        np.save(buf, arr, allow_pickle=False)
        payload[name] = buf.getvalue()
        index[name] = list(arr.shape)
    manifest["blobs"] = index
    text = json.dumps(manifest, sort_keys=True, indent=1).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".partial")
    try:
        with zipfile.ZipFile(tmp, "w") as zf:
            zf.writestr(_member("manifest.json"), text)
            for name in sorted(payload):
                zf.writestr(_member(f"blobs/{name}.npy"), payload[name])
        tmp.replace(path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def read_checkpoint(path):
    """Return ``(manifest, blobs)``; blobs are float32 arrays."""
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
            if manifest.get("format_version") != FORMAT_VERSION:
                raise CheckpointError(
                    f"{path}: unsupported format version {manifest.get('format_version')}"
                )
            blobs = {}
            for name, shape in manifest["blobs"].items():
                arr = np.load(io.BytesIO(zf.read(f"blobs/{name}.npy")), allow_pickle=False)
                if list(arr.shape) != shape:
                    raise CheckpointError(f"{path}: blob {name} shape {arr.shape} != {shape}")
                blobs[name] = arr.astype(np.float32)
    except (OSError, KeyError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return manifest, blobs
