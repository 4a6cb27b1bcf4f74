"""Binary feature cache (``SERF``).

Layout, little-endian throughout::

    magic  b"SERF"
    u16    format version
    u32    entry count
    entries, each:
        u16 id length, utf-8 id bytes
        u8  feature kind (0 = is09, 1 = mfcc_seq)
        u8  ndim, then ndim x u32 shape
        u64 byte offset of the payload from the start of the file
    payloads: float32 arrays, C order
    u32    CRC-32 of everything before it
"""
from __future__ import annotations

import hashlib
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import Corrupt, MissingUtterance, VersionMismatch
from .features import FEATURE_KINDS, extract
from .signal import read_wav

MAGIC = b"SERF"
VERSION = 1
_KIND_CODE = {"is09": 0, "mfcc_seq": 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def encode_cache(entries, version=VERSION) -> bytes:
    """``entries`` maps (utterance id, kind) -> array."""
    keys = sorted(entries)
    arrays = [np.ascontiguousarray(entries[k], dtype="<f4") for k in keys]
    head = [MAGIC, struct.pack("<HI", version, len(keys))]
    index_size = sum(2 + len(k[0].encode()) + 2 + 4 * a.ndim + 8 for k, a in zip(keys, arrays))
    offset = 4 + 6 + index_size
    for (uid, kind), arr in zip(keys, arrays):
        b = uid.encode()
        head.append(struct.pack("<H", len(b)) + b)
        head.append(struct.pack("<BB", _KIND_CODE[kind], arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        head.append(struct.pack("<Q", offset))
        offset += arr.nbytes
    body = b"".join(head) + b"".join(a.tobytes() for a in arrays)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_cache(data: bytes):
    if len(data) < 14 or data[:4] != MAGIC:
        raise Corrupt("not a SERF feature cache")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise VersionMismatch(f"feature cache version {version}, reader expects {VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise Corrupt("feature cache checksum mismatch")
    entries, pos = {}, 10
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            uid = body[pos + 2:pos + 2 + n].decode()
            pos += 2 + n
            code, ndim = struct.unpack_from("<BB", body, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            (offset,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            size = int(np.prod(shape)) * 4
            if offset + size > len(body):
                raise Corrupt(f"payload of {uid!r} runs past end of file")
            arr = np.frombuffer(body, dtype="<f4", count=size // 4, offset=offset)
            entries[(uid, _CODE_KIND[code])] = arr.reshape(shape).astype(np.float32)
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise Corrupt(f"malformed feature cache index: {exc}") from None
    return entries


class FeatureCache:
    def __init__(self, entries=None):
        self.entries = dict(entries or {})

    def get(self, uid, kind):
        try:
            return self.entries[(uid, kind)]
        except KeyError:
            raise MissingUtterance(f"{uid!r} ({kind}) not in feature cache") from None

    def matrix(self, records, kind):
        return np.stack([self.get(r.id, kind) for r in records])

    def __contains__(self, key):
        return key in self.entries

    def __len__(self):
        return len(self.entries)

    def save(self, path):
        data = encode_cache(self.entries)
        Path(path).write_bytes(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def load(cls, path):
        return cls(decode_cache(Path(path).read_bytes()))


def _extract_one(args):
    uid, audio_path, kinds = args
    w = read_wav(audio_path)
    return [((uid, k), extract(w, k)) for k in kinds]


def extract_records(records, kinds=FEATURE_KINDS, workers=1, cache=None):
    """Extract the requested kinds for every record not already in ``cache``."""
    cache = cache if cache is not None else FeatureCache()
    todo = []
    for r in records:
        need = tuple(k for k in kinds if (r.id, k) not in cache)
        if need:
            todo.append((r.id, r.audio_path, need))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_one, todo, chunksize=8))
    else:
        results = [_extract_one(t) for t in todo]
    for items in results:
        cache.entries.update(items)
    return cache


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
