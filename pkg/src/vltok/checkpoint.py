"""Binary checkpoint container.

Layout::

    b"MMTK1\\n"
    uint64 little-endian  header length in bytes
    header                UTF-8 JSON, keys sorted
    zero padding          up to the next multiple of 8 (absolute offset)
    payload               little-endian float64 tensors, row-major

Tensor offsets in the header are relative to the payload start and are
multiples of 8.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig
from .numerics import ParamStore
from .pipeline import expected_shapes
from .textenc import TextVocab

MAGIC = b"MMTK1\n"
FORMAT_VERSION = 1
_DTYPE = "<f8"


class CheckpointError(ValueError):
    pass


def _encode(params: ParamStore, text_vocab: TextVocab, run: RunConfig) -> bytes:
    directory = []
    offset = 0
    for name, t in params.items():
        nbytes = t.data.size * 8
        directory.append({"name": name, "shape": list(t.shape), "dtype": _DTYPE, "offset": offset})
        offset += nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": run.to_flat(),
        "text_vocab": text_vocab.to_list(),
        "tensors": directory,
        "payload_bytes": offset,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    prefix = MAGIC + struct.pack("<Q", len(head)) + head
    pad = (-len(prefix)) % 8
    payload = b"".join(np.ascontiguousarray(t.data, dtype=_DTYPE).tobytes() for _, t in params.items())
    return prefix + b"\0" * pad + payload


def save_checkpoint(params: ParamStore, text_vocab: TextVocab, run: RunConfig, path: str | Path) -> None:
    Path(path).write_bytes(_encode(params, text_vocab, run))


def load_checkpoint(path: str | Path, overrides: dict | None = None) -> tuple:
    """Return ``(params, text_vocab, run_config)``; ``overrides`` are applied to the stored config.

    Every tensor is checked against the shapes the (overridden) config
    implies, so a checkpoint can't be loaded into a mismatched model.
    """
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError("bad magic: not a checkpoint file")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise CheckpointError("truncated checkpoint header")
    (head_len,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if len(raw) < pos + head_len:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(raw[pos : pos + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    pos += head_len
    pos += (-pos) % 8
    payload = raw[pos:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(
            f"corrupt checkpoint: payload has {len(payload)} bytes, header says {header['payload_bytes']}"
        )

    run = RunConfig.from_flat(header["config"])
    if overrides:
        run = run.with_overrides(**overrides)
    text_vocab = TextVocab.from_list(header["text_vocab"])
    want = expected_shapes(run.tracker, text_vocab.size)

    params = ParamStore()
    seen = set()
    for entry in header["tensors"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if entry["dtype"] != _DTYPE:
            raise CheckpointError(f"{name}: unsupported dtype {entry['dtype']}")
        if offset % 8:
            raise CheckpointError(f"{name}: misaligned offset {offset}")
        if name not in want:
            raise CheckpointError(f"shape disagreement: {name} is not a parameter of the configured model")
        if want[name] != shape:
            raise CheckpointError(f"shape disagreement for {name}: stored {shape}, config implies {want[name]}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + nbytes > len(payload):
            raise CheckpointError(f"corrupt checkpoint: {name} runs past the payload")
        data = np.frombuffer(payload, dtype=_DTYPE, count=nbytes // 8, offset=offset).reshape(shape)
        params.add(name, data.astype(np.float64))
        seen.add(name)
    missing = set(want) - seen
    if missing:
        raise CheckpointError(f"shape disagreement: missing tensors {sorted(missing)[:5]}")
    return params, text_vocab, run
