"""Checkpoint files: a UTF-8 JSON header, the bytes ``\\n\\0``, then little-endian float32 arrays.

Arrays follow the order listed in the header's ``arrays`` entry.
"""
import json

import numpy as np

from .encoder import EncoderParams
from .model import Model

FORMAT = "pcnnrank-checkpoint"
VERSION = 1
SEPARATOR = b"\n\0"


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointHashError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


def save_checkpoint(path, model, vocab_hash, schema_hash, config=None, shape=None):
    arrays = model.arrays()
    header = {
        "format": FORMAT,
        "version": VERSION,
        "nr": model.nr,
        "vocab_hash": vocab_hash,
        "schema_hash": schema_hash,
        "shape": shape or {},
        "config": config or {},
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in Model.PARAM_NAMES],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(SEPARATOR)
        for n in Model.PARAM_NAMES:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes())


def load_checkpoint(path, vocab_hash=None, schema_hash=None):
    """Returns (model, header). Parameters come back as float64 holding float32 values."""
    with open(path, "rb") as fh:
        data = fh.read()
    cut = data.find(SEPARATOR)
    if cut < 0:
        raise CheckpointTruncatedError(f"{path}: header separator not found")
    try:
        header = json.loads(data[:cut].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise CheckpointVersionError(f"{path}: version {header.get('version')!r}, this build reads {VERSION}")
    for key, expected in (("vocab_hash", vocab_hash), ("schema_hash", schema_hash)):
        if expected is not None and header.get(key) != expected:
            raise CheckpointHashError(f"{path}: {key} does not match the dataset")

    payload = memoryview(data)[cut + len(SEPARATOR):]
    offset = 0
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        nbytes = 4 * count
        if offset + nbytes > len(payload):
            raise CheckpointTruncatedError(f"{path}: payload ends inside array {spec['name']}")
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype="<f4").reshape(spec["shape"])
        arrays[spec["name"]] = arr.astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - offset} trailing bytes after the last array")
    missing = set(Model.PARAM_NAMES) - set(arrays)
    if missing:
        raise CheckpointError(f"{path}: missing arrays {sorted(missing)}")
    enc = EncoderParams(arrays["V"], arrays["P_head"], arrays["P_tail"], arrays["K"], arrays["b"])
    return Model(enc, arrays["W"], header["nr"]), header


def round_to_stored(model):
    """The model as it would come back from a checkpoint (float32 precision)."""
    out = model.copy()
    for arr in out.arrays().values():
        arr[...] = arr.astype(np.float32)
    return out
