"""Single-file checkpoint container.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
{format_version, hyper, vocab, rng_state, tensors:[{name, shape, offset,
nbytes}]}, then the raw little-endian float64 tensor payload.  Loading
reproduces bit-identical forward outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import FormatVersionError, ModelMissing
from ..storage import atomic_write
from .model import HyperParams, RepairModel
from .vocab import Vocabulary

MAGIC = b"CRPRCKP1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    hyper: HyperParams
    vocab: Vocabulary
    params: dict          # name -> np.ndarray (float64)
    rng_state: dict

    def build_model(self, seed: int = 0) -> RepairModel:
        return RepairModel(self.hyper, self.vocab, seed=seed, params=self.params)


def save_checkpoint(path, model: RepairModel, rng_state: dict | None = None) -> None:
    params = model.export_params()
    names = sorted(params)
    tensors = []
    offset = 0
    for name in names:
        nbytes = params[name].nbytes
        tensors.append({
            "name": name,
            "shape": list(params[name].shape),
            "offset": offset,
            "nbytes": nbytes,
        })
        offset += nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "hyper": model.hyper.to_json(),
        "vocab": model.vocab.to_json(),
        "rng_state": rng_state if rng_state is not None else _generator_state(model),
        "tensors": tensors,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with atomic_write(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for name in names:
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            fh.write(arr.tobytes())


def _generator_state(model: RepairModel) -> dict:
    state = model.dropout_rng.bit_generator.state
    return {"dropout": _jsonable(state)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def load_checkpoint(path) -> Checkpoint:
    try:
        fh = open(path, "rb")
    except FileNotFoundError as exc:
        raise ModelMissing(str(exc))
    with fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise FormatVersionError(magic, MAGIC)
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise FormatVersionError(header.get("format_version"), FORMAT_VERSION)
        payload = fh.read()
    params = {}
    for spec in header["tensors"]:
        start = spec["offset"]
        raw = payload[start:start + spec["nbytes"]]
        params[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(spec["shape"]).copy()
    return Checkpoint(
        hyper=HyperParams.from_json(header["hyper"]),
        vocab=Vocabulary.from_json(header["vocab"]),
        params=params,
        rng_state=header.get("rng_state", {}),
    )
