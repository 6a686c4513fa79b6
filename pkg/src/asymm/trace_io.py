"""Trace serialization: JSON-lines for diffing, a tagged binary form for bulk.

Both codecs carry the same dict representation of each event. JSONL keeps
floats via ``repr`` (shortest round trip), the binary form stores raw IEEE
bits; either way a loaded trace is value-identical to the saved one, and
identical runs serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

from .simulator import EventRecord, EventTrace

_MAGIC = b"ASTR\x01"

_T_NONE, _T_FALSE, _T_TRUE, _T_INT, _T_FLOAT, _T_STR, _T_LIST, _T_DICT = range(8)


def _pack_obj(obj, out: bytearray) -> None:
    if obj is None:
        out.append(_T_NONE)
    elif obj is True:
        out.append(_T_TRUE)
    elif obj is False:
        out.append(_T_FALSE)
    elif isinstance(obj, int):
        out.append(_T_INT)
        out += struct.pack("<q", obj)
    elif isinstance(obj, float):
        out.append(_T_FLOAT)
        out += struct.pack("<d", obj)
    elif isinstance(obj, str):
        raw = obj.encode("utf-8")
        out.append(_T_STR)
        out += struct.pack("<I", len(raw))
        out += raw
    elif isinstance(obj, (list, tuple)):
        out.append(_T_LIST)
        out += struct.pack("<I", len(obj))
        for item in obj:
            _pack_obj(item, out)
    elif isinstance(obj, dict):
        out.append(_T_DICT)
        out += struct.pack("<I", len(obj))
        for key, value in obj.items():
            if not isinstance(key, str):
                raise TypeError(f"binary codec requires string keys, got {key!r}")
            _pack_obj(key, out)
            _pack_obj(value, out)
    else:
        raise TypeError(f"cannot encode {type(obj)!r}")


def _unpack_obj(buf: memoryview, pos: int):
    tag = buf[pos]
    pos += 1
    if tag == _T_NONE:
        return None, pos
    if tag == _T_TRUE:
        return True, pos
    if tag == _T_FALSE:
        return False, pos
    if tag == _T_INT:
        return struct.unpack_from("<q", buf, pos)[0], pos + 8
    if tag == _T_FLOAT:
        return struct.unpack_from("<d", buf, pos)[0], pos + 8
    if tag == _T_STR:
        n = struct.unpack_from("<I", buf, pos)[0]
        pos += 4
        return bytes(buf[pos:pos + n]).decode("utf-8"), pos + n
    if tag == _T_LIST:
        n = struct.unpack_from("<I", buf, pos)[0]
        pos += 4
        items = []
        for _ in range(n):
            item, pos = _unpack_obj(buf, pos)
            items.append(item)
        return items, pos
    if tag == _T_DICT:
        n = struct.unpack_from("<I", buf, pos)[0]
        pos += 4
        d = {}
        for _ in range(n):
            key, pos = _unpack_obj(buf, pos)
            value, pos = _unpack_obj(buf, pos)
            d[key] = value
        return d, pos
    raise ValueError(f"corrupt stream: unknown tag {tag}")


def write_jsonl(trace: EventTrace, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"kind": "meta", **trace.meta}, sort_keys=True) + "\n")
        for event in trace.events:
            fh.write(json.dumps({"kind": "event", **event.to_dict()}, sort_keys=True) + "\n")


def read_jsonl(path) -> EventTrace:
    meta = None
    events = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            kind = d.pop("kind")
            if kind == "meta":
                meta = d
            elif kind == "event":
                events.append(EventRecord.from_dict(d))
            else:
                raise ValueError(f"unknown record kind {kind!r}")
    if meta is None:
        raise ValueError(f"{path} has no metadata line")
    return EventTrace(meta=meta, events=events)


def write_binary(trace: EventTrace, path) -> None:
    out = bytearray(_MAGIC)
    _pack_obj(trace.meta, out)
    out += struct.pack("<I", len(trace.events))
    for event in trace.events:
        _pack_obj(event.to_dict(), out)
    Path(path).write_bytes(bytes(out))


def read_binary(path) -> EventTrace:
    buf = memoryview(Path(path).read_bytes())
    if bytes(buf[:len(_MAGIC)]) != _MAGIC:
        raise ValueError(f"{path} is not a binary trace file")
    pos = len(_MAGIC)
    meta, pos = _unpack_obj(buf, pos)
    n, = struct.unpack_from("<I", buf, pos)
    pos += 4
    events = []
    for _ in range(n):
        d, pos = _unpack_obj(buf, pos)
        events.append(EventRecord.from_dict(d))
    return EventTrace(meta=meta, events=events)
