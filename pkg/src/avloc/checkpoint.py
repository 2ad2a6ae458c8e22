"""Model checkpoint file format.

Layout (little-endian):

    bytes 0..3   magic "AVSM"
    u16          version (currently 1)
    u32 x 4      d_a, d_v, h, C
    then every parameter tensor as raw float64 row-major bytes, in the
    canonical ModelParams.tensors() order (audio encoder, visual encoder,
    fusion, decoder, output weight, output bias; within each LSTM the
    gates f, i, o, c as W, U, b triples; within each fusion MLP w1, b1,
    w2, b2, hidden-state MLP before cell-state MLP).

Tensors are stored as float64 regardless of the training precision, so a
save/load/save cycle is byte-identical.
"""

from pathlib import Path

import numpy as np

from . import binio
from .model import ModelParams, zeros_model_params

MAGIC = b"AVSM"
VERSION = 1


def save_model(params: ModelParams, path) -> None:
    chunks = [MAGIC, binio.pack_u16(VERSION, "version")]
    for field, value in (("d_a", params.audio_dim), ("d_v", params.visual_dim),
                         ("h", params.hidden_size), ("C", params.num_events)):
        chunks.append(binio.pack_u32(value, field))
    for _, arr in params.tensors():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path) -> ModelParams:
    """Read a checkpoint; returns float64 parameters exactly as stored."""
    reader = binio.ByteReader(Path(path).read_bytes())
    magic = reader.take(4)
    if magic != MAGIC:
        raise binio.BadMagicError(MAGIC, magic)
    version = reader.u16()
    if version != VERSION:
        raise binio.UnsupportedVersionError(VERSION, version)
    d_a = reader.u32()
    d_v = reader.u32()
    h = reader.u32()
    c = reader.u32()
    if min(d_a, d_v, h, c) < 1:
        raise binio.FormatError(
            "invalid header dimensions d_a=%d d_v=%d h=%d C=%d" % (d_a, d_v, h, c))
    params = zeros_model_params(d_a, d_v, h, c, dtype=np.float64)
    for _, arr in params.tensors():
        arr[...] = reader.array("<f8", arr.size).reshape(arr.shape)
    reader.expect_eof()
    return params
