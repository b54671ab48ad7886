# Copyright (c) 2026, phasor_forge contributors
# For license information, please see license.txt

"""
FWT1 weight files.

"FWT1", u32 layer count, then per layer u32 out_c, in_c, kh, kw followed by
the weights and the biases as little-endian float32. The residual flag is
not part of the file; load_model takes it as an argument.
"""

import logging
import struct

import numpy as np

from phasor_forge.exceptions import BadMagic, LengthMismatch, ShapeChainBroken, TruncatedFile
from phasor_forge.flim.denoise.network import ConvLayer, DenoiserModel, check_layers
from phasor_forge.utils import write_bytes_atomic

logger = logging.getLogger(__name__)

MAGIC = b"FWT1"
F32 = np.dtype("<f4")


def dump_model(model):
	parts = [MAGIC, struct.pack("<I", model.depth)]
	for layer in model.layers:
		parts.append(struct.pack("<4I", *layer.weights.shape))
		parts.append(layer.weights.astype(F32).tobytes())
		parts.append(layer.bias.astype(F32).tobytes())
	return b"".join(parts)


def save_model(model, path):
	write_bytes_atomic(path, dump_model(model))
	logger.info(f"Saved {model.depth}-layer denoiser to {path}")


def _take(buf, offset, size, what):
	if offset + size > len(buf):
		raise TruncatedFile(f"File ends inside {what} (needs {offset + size} bytes, has {len(buf)})")
	return buf[offset : offset + size], offset + size


def parse_model(buf, residual=True):
	head, offset = _take(buf, 0, 4, "the magic")
	if head != MAGIC:
		raise BadMagic(f"Expected magic {MAGIC!r}, found {bytes(head)!r}")
	raw, offset = _take(buf, offset, 4, "the layer count")
	(count,) = struct.unpack("<I", raw)

	layers = []
	for n in range(count):
		raw, offset = _take(buf, offset, 16, f"layer {n} header")
		shape = struct.unpack("<4I", raw)
		n_weights = shape[0] * shape[1] * shape[2] * shape[3]
		raw_w, offset = _take(buf, offset, n_weights * 4, f"layer {n} weights")
		raw_b, offset = _take(buf, offset, shape[0] * 4, f"layer {n} biases")
		weights = np.frombuffer(raw_w, dtype=F32).reshape(shape)
		layers.append(ConvLayer(weights, np.frombuffer(raw_b, dtype=F32)))

	if offset != len(buf):
		raise LengthMismatch(f"{len(buf) - offset} unexpected bytes after the last layer")
	check_layers(layers, ShapeChainBroken)
	return DenoiserModel(layers, residual)


def load_model(path, residual=True):
	with open(path, "rb") as f:
		return parse_model(f.read(), residual)
