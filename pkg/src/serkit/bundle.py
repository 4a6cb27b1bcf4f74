"""Model bundle serialization (``SERM``).

Layout, little-endian throughout::

    magic  b"SERM"
    u16    format version
    u32    header length
    header UTF-8 JSON: variant, feature kind, architecture, label and
           language vocabularies, training config and its SHA-256, and a
           table of {name, shape, offset} for every array
    arrays float32, C order, offsets relative to the end of the header
    u32    CRC-32 of everything before it

Normalizer statistics are stored as the arrays ``norm.mean``/``norm.std``.
Trained models are rounded to float32 precision when finalized, so a
save/load round trip reproduces predictions bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .classifiers.model import Model, Normalizer
from .errors import Corrupt, HashMismatch, VersionMismatch

MAGIC = b"SERM"
VERSION = 1


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def save_model(model: Model, version=VERSION) -> bytes:
    arrays = dict(sorted(model.params.items()))
    arrays["norm.mean"] = model.normalizer.mean
    arrays["norm.std"] = model.normalizer.std
    table, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = {
        "variant": model.variant,
        "feature_kind": model.feature_kind,
        "arch": model.arch,
        "labels": list(model.labels),
        "languages": list(model.languages),
        "config": model.config,
        "config_hash": config_hash(model.config),
        "arrays": table,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<HI", version, len(hb)) + hb + b"".join(blobs)
    return body + struct.pack("<I", zlib.crc32(body))


def load_model(data: bytes) -> Model:
    if len(data) < 14 or data[:4] != MAGIC:
        raise Corrupt("not a SERM model bundle")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise VersionMismatch(f"model bundle version {version}, reader expects {VERSION}")
    if len(data) < 10 + hlen + 4:
        raise Corrupt("model bundle truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise Corrupt("model bundle checksum mismatch (truncated or damaged)")
    try:
        header = json.loads(body[10:10 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise Corrupt(f"unreadable bundle header: {exc}") from None
    if config_hash(header["config"]) != header["config_hash"]:
        raise HashMismatch("training config does not match its recorded hash")
    payload = body[10 + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"]))
        end = entry["offset"] + 4 * count
        if end > len(payload):
            raise Corrupt(f"array {entry['name']} runs past end of bundle")
        a = np.frombuffer(payload, dtype="<f4", count=count, offset=entry["offset"])
        arrays[entry["name"]] = a.reshape(entry["shape"]).astype(np.float64)
    norm = Normalizer(arrays.pop("norm.mean"), arrays.pop("norm.std"))
    return Model(header["variant"], header["feature_kind"], tuple(header["labels"]), arrays,
                 norm, arch=header["arch"], languages=tuple(header["languages"]),
                 config=header["config"])


def write_model(model: Model, path):
    data = save_model(model)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_model(path) -> Model:
    return load_model(Path(path).read_bytes())
